"""
Metric suite for evacuation predictions: confusion counts, per-class
precision/recall/F1, macro and weighted F1, score MSE, 5x5 score
confusion matrices and the published-table F1 audit.
"""

import io
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app_config import F1_AUDIT_TOLERANCE, PUBLISHED_CLASS_ROWS, SCORE_RANGE
from business.exceptions.errors import EmptyInputError, LengthMismatchError, OutOfRangeScoreError
from business.models.metrics import ClassMetrics, ConfusionMatrix, MetricsReport, ScoreConfusion
from business.models.survey import EvacuationChoice

logger = logging.getLogger(__name__)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both are 0."""
    return _ratio(2 * precision * recall, precision + recall)


def _other(choice: EvacuationChoice) -> EvacuationChoice:
    return EvacuationChoice.EVACUATE if choice is EvacuationChoice.STAY else EvacuationChoice.STAY


def confusion_matrix(predictions: Sequence[Optional[EvacuationChoice]],
                     labels: Sequence[EvacuationChoice],
                     positive: EvacuationChoice = EvacuationChoice.STAY) -> ConfusionMatrix:
    """Counts against the positive class. A failed (None) prediction counts as wrong."""
    if len(predictions) != len(labels):
        raise LengthMismatchError(f"{len(predictions)} predictions vs {len(labels)} labels")
    if not labels:
        raise EmptyInputError("No predictions to evaluate")

    tp = tn = fp = fn = 0
    failed = 0
    for pred, label in zip(predictions, labels):
        if pred is None:
            failed += 1
            pred = _other(label)
        if label is positive:
            tp += pred is positive
            fn += pred is not positive
        else:
            tn += pred is not positive
            fp += pred is positive
    if failed:
        logger.warning("%d failed predictions counted as incorrect", failed)
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


def metrics_from_confusion(cm: ConfusionMatrix,
                           positive: EvacuationChoice = EvacuationChoice.STAY) -> MetricsReport:
    """Applies the precision/recall/F1 formulas to both classes."""
    negative = _other(positive)
    pos_p, pos_r = _ratio(cm.tp, cm.tp + cm.fp), _ratio(cm.tp, cm.tp + cm.fn)
    neg_p, neg_r = _ratio(cm.tn, cm.tn + cm.fn), _ratio(cm.tn, cm.tn + cm.fp)
    pos_f1, neg_f1 = f1_score(pos_p, pos_r), f1_score(neg_p, neg_r)

    return MetricsReport(
        per_class={
            positive.value: ClassMetrics(precision=pos_p, recall=pos_r, f1=pos_f1, support=cm.n_pos),
            negative.value: ClassMetrics(precision=neg_p, recall=neg_r, f1=neg_f1, support=cm.n_neg),
        },
        accuracy=_ratio(cm.tp + cm.tn, cm.total),
        macro_f1=(pos_f1 + neg_f1) / 2.0,
        weighted_f1=_ratio(pos_f1 * cm.n_pos + neg_f1 * cm.n_neg, cm.total),
        confusion=cm,
        positive_class=positive.value,
    )


def compute_metrics(predictions: Sequence[Optional[EvacuationChoice]],
                    labels: Sequence[EvacuationChoice],
                    positive: EvacuationChoice = EvacuationChoice.STAY) -> MetricsReport:
    return metrics_from_confusion(confusion_matrix(predictions, labels, positive), positive)


def compute_mse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Mean squared difference."""
    if len(predicted) != len(actual):
        raise LengthMismatchError(f"{len(predicted)} predicted vs {len(actual)} actual scores")
    if not actual:
        raise EmptyInputError("No scores to compare")
    diff = np.asarray(actual, dtype=float) - np.asarray(predicted, dtype=float)
    return float(np.mean(diff ** 2))


def score_confusion(predicted: Sequence[int], actual: Sequence[int]) -> ScoreConfusion:
    """5x5 counts of (actual, predicted) perception scores."""
    if len(predicted) != len(actual):
        raise LengthMismatchError(f"{len(predicted)} predicted vs {len(actual)} actual scores")
    lo, hi = SCORE_RANGE
    size = hi - lo + 1
    matrix = [[0] * size for _ in range(size)]
    for p, a in zip(predicted, actual):
        for v in (p, a):
            if int(v) != v or not lo <= v <= hi:
                raise OutOfRangeScoreError(f"Score {v} outside {lo}-{hi}", score=v)
        matrix[int(a) - lo][int(p) - lo] += 1
    return ScoreConfusion(matrix=matrix)


def score_confusion_csv(confusion: ScoreConfusion, normalized: bool = False) -> str:
    """Heatmap matrix as CSV, rows actual and columns predicted."""
    lo, hi = SCORE_RANGE
    rows = confusion.normalized() if normalized else confusion.matrix
    out = io.StringIO()
    out.write("actual\\predicted," + ",".join(str(s) for s in range(lo, hi + 1)) + "\n")
    for score, row in zip(range(lo, hi + 1), rows):
        cells = [f"{c:.6f}" if normalized else str(c) for c in row]
        out.write(f"{score}," + ",".join(cells) + "\n")
    return out.getvalue()


def write_heatmap_svg(confusion: ScoreConfusion, path: Path, title: str) -> Path:
    """Renders the row-normalized matrix as an SVG heatmap."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    lo, hi = SCORE_RANGE
    ticks = list(range(lo, hi + 1))
    data = np.array(confusion.normalized())

    # Fixed metadata keeps the SVG stable across runs
    plt.rcParams["svg.hashsalt"] = "flare"
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(data, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(ticks)), labels=ticks)
    ax.set_yticks(range(len(ticks)), labels=ticks)
    ax.set_xlabel("Predicted score")
    ax.set_ylabel("Actual score")
    ax.set_title(title)
    for i in range(len(ticks)):
        for j in range(len(ticks)):
            ax.text(j, i, f"{data[i, j]:.2f}", ha="center", va="center", fontsize=7)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def audit_published_f1(rows: Sequence[Tuple] = tuple(PUBLISHED_CLASS_ROWS),
                       tolerance: float = F1_AUDIT_TOLERANCE) -> List[Dict]:
    """Recomputes F1 from published precision/recall; inconsistent rows are flagged, not raised."""
    findings = []
    for method, cls, precision, recall, published in rows:
        recomputed = f1_score(precision, recall)
        consistent = abs(recomputed - published) <= tolerance
        if not consistent:
            logger.warning(
                "Published F1 for %s / %s is %.3f but P/R give %.3f", method, cls, published, recomputed
            )
        findings.append({
            "method": method,
            "class": cls,
            "precision": precision,
            "recall": recall,
            "published_f1": published,
            "recomputed_f1": round(recomputed, 6),
            "consistent": consistent,
        })
    return findings


_TABLE_COLUMNS = ("Method", "Class", "Precision", "Recall", "F1", "Accuracy", "Macro F1", "Weighted F1")


def report_rows(label: str, report: MetricsReport) -> List[List[str]]:
    """Table rows for one method, positive class first."""
    rows = []
    for i, (cls, m) in enumerate(report.per_class.items()):
        summary = (
            [f"{report.accuracy:.3f}", f"{report.macro_f1:.3f}", f"{report.weighted_f1:.3f}"]
            if i == 0 else ["", "", ""]
        )
        rows.append([label if i == 0 else "", cls,
                     f"{m.precision:.3f}", f"{m.recall:.3f}", f"{m.f1:.3f}", *summary])
    return rows


def render_metrics_table(entries: Sequence[Tuple[str, MetricsReport]]) -> str:
    """Aligned plain-text table with one block per method."""
    rows = [list(_TABLE_COLUMNS)]
    for label, report in entries:
        rows.extend(report_rows(label, report))
    widths = [max(len(r[i]) for r in rows) for i in range(len(_TABLE_COLUMNS))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
