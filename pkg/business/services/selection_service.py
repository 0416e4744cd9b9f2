"""
Per-indicator variable selection: ridge (or logistic) weights over the
standardized survey variables, cumulative-weight subsets and the elbow
threshold.
"""

import logging
from typing import Dict, List, Optional, Union

import numpy as np

from app_config import DEFAULT_REG_STRENGTH, DEFAULT_THETA, HIGH_PERCEPTION_SCORE, THETA_CLAMP
from business.exceptions.errors import (
    AllZeroWeightsError,
    BadThetaError,
    EmptyDatasetError,
    MissingSubsetError,
    SingularFitError,
    TooFewRecordsError,
    TooFewVariablesError,
)
from business.models.survey import Dataset, EncodingStats, SurveySchema
from business.models.weights import IndicatorKind, PerceptionIndicator, VariableSubset, WeightVector
from business.services.baseline_service import fit_logistic
from business.services.dataset_service import compute_encoding_stats, encode_dataset

logger = logging.getLogger(__name__)


def indicators_for(schema: SurveySchema, required: bool = True) -> List[PerceptionIndicator]:
    """The schema's indicators in fixed kind order."""
    out = []
    for kind in IndicatorKind:
        source = schema.indicators.get(kind.value)
        if source is None:
            if required:
                raise MissingSubsetError(kind.value)
            continue
        out.append(PerceptionIndicator(kind=kind, source_variable=source))
    return out


def _design(train: Dataset, indicator: PerceptionIndicator, stats: Optional[EncodingStats]):
    if len(train) == 0:
        raise EmptyDatasetError("Cannot fit weights on an empty partition")
    stats = stats or compute_encoding_stats(train)
    names = train.schema.feature_names
    matrix = encode_dataset(train, stats)
    target_col = names.index(indicator.source_variable)
    predictors = [n for n in names if n != indicator.source_variable]
    X = np.delete(matrix, target_col, axis=1)
    y = matrix[:, target_col]
    return predictors, X, y


def _standardize(X: np.ndarray):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    active = std > 0
    Z = (X[:, active] - mean[active]) / std[active]
    return Z, active


def fit_indicator_weights(train: Dataset, indicator: PerceptionIndicator,
                          reg_strength: float = DEFAULT_REG_STRENGTH,
                          stats: Optional[EncodingStats] = None,
                          method: str = "ridge") -> WeightVector:
    """
    Closed-form ridge fit of the indicator on every other standardized variable.
    Constant predictors carry no information and get weight 0.
    """
    if method == "logistic":
        return _fit_logistic_weights(train, indicator, stats)
    if reg_strength < 0:
        raise ValueError("reg_strength must be nonnegative")

    predictors, X, y = _design(train, indicator, stats)
    Z, active = _standardize(X)
    n, p = Z.shape

    if reg_strength == 0 and p:
        if n < p:
            raise TooFewRecordsError(f"{n} records for {p} variables without regularisation")
        if np.linalg.matrix_rank(Z) < p:
            raise SingularFitError("Design matrix is rank-deficient")

    intercept = float(y.mean())
    yc = y - intercept
    w_active = np.linalg.solve(Z.T @ Z + reg_strength * np.eye(p), Z.T @ yc) if p else np.zeros(0)
    residual = float(np.linalg.norm(yc - Z @ w_active))

    weights = np.zeros(len(predictors))
    weights[active] = w_active
    return WeightVector(
        indicator=indicator,
        variables=predictors,
        weights=[float(w) for w in weights],
        intercept=intercept,
        residual_norm=residual,
        method="ridge",
    )


def _fit_logistic_weights(train: Dataset, indicator: PerceptionIndicator,
                          stats: Optional[EncodingStats]) -> WeightVector:
    """
    Logistic alternative on the binarized indicator (high perception vs not).
    A partition where the binarized indicator has one class falls back to ridge.
    """
    predictors, X, y = _design(train, indicator, stats)
    labels = (y >= HIGH_PERCEPTION_SCORE).astype(int)
    if labels.min() == labels.max():
        logger.warning(
            "Indicator %s is %s high perception in every record; using ridge weights",
            indicator.kind.value, "always" if labels[0] else "never",
        )
        return fit_indicator_weights(train, indicator, stats=stats)
    model = fit_logistic(X, labels, feature_names=predictors)
    # Weights live on the standardized scale, comparable across variables
    return WeightVector(
        indicator=indicator,
        variables=predictors,
        weights=list(model.weights),
        intercept=model.intercept,
        residual_norm=0.0,
        method="logistic",
    )


def select_variables(weights: WeightVector, theta: float) -> VariableSubset:
    """Minimal prefix of the |w|-sorted variables covering theta of the total weight."""
    if not 0 < theta <= 1:
        raise BadThetaError(f"theta must lie in (0, 1], got {theta}", theta=theta)
    magnitude = np.abs(np.asarray(weights.weights, dtype=float))
    total = float(magnitude.sum())
    if total == 0:
        raise AllZeroWeightsError(
            f"All weights are zero for {weights.indicator.kind.value} "
            f"(source variable {weights.indicator.source_variable})",
            indicator=weights.indicator.kind.value,
        )

    # Stable sort keeps schema order among equal magnitudes
    order = sorted(range(len(magnitude)), key=lambda i: -magnitude[i])
    target = theta * total - 1e-12 * total
    cumulative, selected = 0.0, []
    for i in order:
        cumulative += magnitude[i]
        selected.append(weights.variables[i])
        if cumulative >= target:
            break

    return VariableSubset(
        indicator=weights.indicator,
        selected=selected,
        theta=theta,
        coverage=min(cumulative / total, 1.0),
    )


def detect_elbow(weights: WeightVector) -> float:
    """
    Knee of the sorted |w| curve (largest distance to the first-to-last chord).
    theta is the coverage of the variables before the knee, clamped; flat
    curves fall back to the default.
    """
    magnitude = np.sort(np.abs(np.asarray(weights.weights, dtype=float)))[::-1]
    p = len(magnitude)
    if p < 3:
        raise TooFewVariablesError(f"Elbow detection needs at least 3 variables, got {p}")
    total = magnitude.sum()
    if total == 0 or magnitude[0] == magnitude[-1]:
        return DEFAULT_THETA

    x = np.arange(p, dtype=float)
    dx, dy = float(p - 1), magnitude[-1] - magnitude[0]
    distance = np.abs(dy * x - dx * (magnitude - magnitude[0])) / np.hypot(dx, dy)
    elbow = int(np.argmax(distance[1:-1])) + 1
    if distance[elbow] <= 1e-12 * magnitude[0]:
        return DEFAULT_THETA

    theta = float(magnitude[:elbow].sum() / total)
    return float(min(max(theta, THETA_CLAMP[0]), THETA_CLAMP[1]))


def resolve_theta(theta_mode: Union[str, float], weights: WeightVector) -> float:
    """Maps a theta mode (elbow, all, or a number) to a concrete threshold."""
    if theta_mode == "elbow":
        return detect_elbow(weights)
    if theta_mode == "all":
        return 1.0
    return float(theta_mode)


def weight_distribution(weights: WeightVector) -> List[Dict]:
    """Sorted |w| with cumulative coverage, for inspection tables."""
    magnitude = np.abs(np.asarray(weights.weights, dtype=float))
    total = float(magnitude.sum()) or 1.0
    order = sorted(range(len(magnitude)), key=lambda i: -magnitude[i])
    rows, cumulative = [], 0.0
    for rank, i in enumerate(order, start=1):
        cumulative += magnitude[i]
        rows.append({
            "rank": rank,
            "variable": weights.variables[i],
            "weight": round(float(weights.weights[i]), 6),
            "abs_weight": round(float(magnitude[i]), 6),
            "cumulative": round(cumulative / total, 6),
        })
    return rows


def select_all(train: Dataset, theta_mode: Union[str, float] = "elbow",
               reg_strength: float = DEFAULT_REG_STRENGTH, method: str = "ridge",
               stats: Optional[EncodingStats] = None):
    """Fits and selects for every indicator; returns (weights, subsets) keyed by kind."""
    stats = stats or compute_encoding_stats(train)
    weights, subsets = {}, {}
    for indicator in indicators_for(train.schema):
        w = fit_indicator_weights(train, indicator, reg_strength, stats, method)
        theta = resolve_theta(theta_mode, w)
        subsets[indicator.kind] = select_variables(w, theta)
        weights[indicator.kind] = w
        logger.info(
            "%s: %d of %d variables selected (theta %.3f)",
            indicator.kind.value, len(subsets[indicator.kind].selected), len(w.variables), theta,
        )
    return weights, subsets
