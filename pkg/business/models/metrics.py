"""
Evaluation result types: binary confusion counts, per-class metric reports,
5x5 perception-score confusion matrices and the logistic baseline model.
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from app_config import SCORE_RANGE

REPORT_DIGITS = 6


class ConfusionMatrix(BaseModel):
    """Counts with the positive class (Stay by default) in tp/fn."""
    tp: int = Field(ge=0)
    tn: int = Field(ge=0)
    fp: int = Field(ge=0)
    fn: int = Field(ge=0)

    @property
    def n_pos(self) -> int:
        return self.tp + self.fn

    @property
    def n_neg(self) -> int:
        return self.tn + self.fp

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> Dict[str, int]:
        return {
            "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn,
            "n_pos": self.n_pos, "n_neg": self.n_neg,
        }


class ClassMetrics(BaseModel):
    precision: float
    recall: float
    f1: float
    support: int


class MetricsReport(BaseModel):
    """Per-class precision/recall/F1 plus accuracy, macro and weighted F1."""
    per_class: Dict[str, ClassMetrics]
    accuracy: float
    macro_f1: float
    weighted_f1: float
    confusion: ConfusionMatrix
    positive_class: str = "Stay"
    mse: Optional[Dict[str, float]] = None

    def to_dict(self) -> Dict:
        """Rounded, JSON-ready form used for report files."""
        r = lambda v: round(v, REPORT_DIGITS)
        data = {
            "accuracy": r(self.accuracy),
            "confusion": self.confusion.to_dict(),
            "macro_f1": r(self.macro_f1),
            "per_class": {
                name: {
                    "f1": r(m.f1),
                    "precision": r(m.precision),
                    "recall": r(m.recall),
                    "support": m.support,
                }
                for name, m in self.per_class.items()
            },
            "positive_class": self.positive_class,
            "weighted_f1": r(self.weighted_f1),
        }
        if self.mse is not None:
            data["mse"] = {k: r(v) for k, v in self.mse.items()}
        return data


class ScoreConfusion(BaseModel):
    """5x5 counts: rows are actual scores 1-5, columns predicted scores 1-5."""
    matrix: List[List[int]]

    @model_validator(mode="after")
    def _check_shape(self) -> "ScoreConfusion":
        size = SCORE_RANGE[1] - SCORE_RANGE[0] + 1
        if len(self.matrix) != size or any(len(row) != size for row in self.matrix):
            raise ValueError(f"score confusion must be {size}x{size}")
        if any(c < 0 for row in self.matrix for c in row):
            raise ValueError("counts must be nonnegative")
        return self

    def normalized(self) -> List[List[float]]:
        """Row-normalized view; rows without data stay zero."""
        out = []
        for row in self.matrix:
            total = sum(row)
            out.append([c / total if total else 0.0 for c in row])
        return out


class LogisticModel(BaseModel):
    """L2-regularized logistic regression over standardized features."""
    feature_names: List[str]
    weights: List[float]
    intercept: float
    means: List[float]
    scales: List[float]
    learning_rate: float
    iterations: int
    l2: float
    constant: Optional[float] = None
