"""
Perception indicators and the per-indicator regression weights used for
variable selection. A VariableSubset is the cumulative-weight prefix that
feeds one indicator's perception prompt.
"""

from enum import Enum
from typing import Dict, List

from pydantic import BaseModel, Field, model_validator


class IndicatorKind(str, Enum):
    """The four survey-reported perception indicators."""
    THREAT_INJURY = "threat_injury"
    THREAT_DEATH = "threat_death"
    RISK_HOME = "risk_home"
    RISK_NEIGHBORHOOD = "risk_neighborhood"

    @property
    def is_threat(self) -> bool:
        return self in (IndicatorKind.THREAT_INJURY, IndicatorKind.THREAT_DEATH)


THREAT_KINDS = (IndicatorKind.THREAT_INJURY, IndicatorKind.THREAT_DEATH)
RISK_KINDS = (IndicatorKind.RISK_HOME, IndicatorKind.RISK_NEIGHBORHOOD)


class PerceptionIndicator(BaseModel):
    """An indicator kind bound to the schema variable that holds its 1-5 answer."""
    kind: IndicatorKind
    source_variable: str


class WeightVector(BaseModel):
    """Fitted weights of one indicator, one per predictor, in schema order."""
    indicator: PerceptionIndicator
    variables: List[str]
    weights: List[float]
    intercept: float = 0.0
    residual_norm: float = Field(default=0.0, ge=0.0)
    method: str = "ridge"

    @model_validator(mode="after")
    def _check_alignment(self) -> "WeightVector":
        if len(self.variables) != len(self.weights):
            raise ValueError("variables and weights must have the same length")
        if self.indicator.source_variable in self.variables:
            raise ValueError("the indicator's source variable cannot be a predictor")
        return self

    def as_map(self) -> Dict[str, float]:
        return dict(zip(self.variables, self.weights))


class VariableSubset(BaseModel):
    """Variables selected for one indicator, by descending |w|."""
    indicator: PerceptionIndicator
    selected: List[str]
    theta: float = Field(gt=0.0, le=1.0)
    coverage: float = Field(ge=0.0, le=1.0 + 1e-9)

    def to_export(self) -> Dict:
        """The per-indicator subset export shape."""
        return {
            "indicator": self.indicator.kind.value,
            "theta": self.theta,
            "coverage": self.coverage,
            "selected": list(self.selected),
        }
