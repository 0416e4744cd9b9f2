"""
Baseline predictors: L2-regularized logistic regression trained by batch
gradient descent, decision-tree and random-forest classifiers, and direct
LLM inference over the raw survey answers.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from app_config import (
    DEFAULT_N_TREES,
    LOGISTIC_ITERATIONS,
    LOGISTIC_L2,
    LOGISTIC_LEARNING_RATE,
    TREE_MAX_DEPTH,
)
from business.exceptions.errors import EmptyTrainingSetError, LengthMismatchError
from business.models.cot import Decision
from business.models.metrics import LogisticModel
from business.models.pattern import DecisionTreeModel, RandomForestModel
from business.models.survey import EvacuationChoice, SurveyRecord, SurveySchema
from business.services.cot_service import load_template, render, request_decision
from business.services.dataset_service import format_answers

logger = logging.getLogger(__name__)


# ---------- Label helpers ----------

def decision_to_label(choice: EvacuationChoice) -> int:
    """Stay is the positive class (1)."""
    return 1 if choice is EvacuationChoice.STAY else 0


def label_to_decision(label: int) -> EvacuationChoice:
    return EvacuationChoice.STAY if label == 1 else EvacuationChoice.EVACUATE


# ---------- Logistic regression ----------

def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


def logistic_loss(params: np.ndarray, Z: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Mean log-loss plus (l2/2)·||w||²; params = [w..., b]."""
    w, b = params[:-1], params[-1]
    z = Z @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(w, w))


def logistic_gradient(params: np.ndarray, Z: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    """Analytic gradient of logistic_loss."""
    w, b = params[:-1], params[-1]
    residual = _sigmoid(Z @ w + b) - y
    grad_w = Z.T @ residual / len(y) + l2 * w
    grad_b = np.mean(residual)
    return np.append(grad_w, grad_b)


def fit_logistic(features, labels: Sequence[int], feature_names: Optional[List[str]] = None,
                 learning_rate: float = LOGISTIC_LEARNING_RATE,
                 iterations: int = LOGISTIC_ITERATIONS, l2: float = LOGISTIC_L2) -> LogisticModel:
    """Batch gradient descent from zero on standardized features."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if len(y) == 0:
        raise EmptyTrainingSetError("Cannot fit a logistic model without samples")
    if X.shape[0] != len(y):
        raise LengthMismatchError(f"{X.shape[0]} feature rows vs {len(y)} labels")

    names = feature_names or [f"x{i}" for i in range(X.shape[1])]
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales[scales == 0] = 1.0
    config = dict(learning_rate=learning_rate, iterations=iterations, l2=l2)

    if len(np.unique(y)) < 2:
        logger.warning("Logistic fit saw a single class; using a constant predictor")
        return LogisticModel(
            feature_names=names, weights=[0.0] * X.shape[1], intercept=0.0,
            means=means.tolist(), scales=scales.tolist(), constant=float(y[0]), **config,
        )

    Z = (X - means) / scales
    params = np.zeros(X.shape[1] + 1)
    for _ in range(iterations):
        params -= learning_rate * logistic_gradient(params, Z, y, l2)

    return LogisticModel(
        feature_names=names,
        weights=[float(v) for v in params[:-1]],
        intercept=float(params[-1]),
        means=means.tolist(),
        scales=scales.tolist(),
        **config,
    )


def predict_proba(model: LogisticModel, features) -> np.ndarray:
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if model.constant is not None:
        return np.full(X.shape[0], model.constant)
    Z = (X - np.asarray(model.means)) / np.asarray(model.scales)
    return _sigmoid(Z @ np.asarray(model.weights) + model.intercept)


def predict_logistic(model: LogisticModel, features: Sequence[float]) -> EvacuationChoice:
    """Stay when the probability of the positive class is at least 0.5."""
    return label_to_decision(int(predict_proba(model, features)[0] >= 0.5))


# ---------- Tree baselines ----------

def fit_tree_baseline(features, labels: Sequence[int], max_depth: int = TREE_MAX_DEPTH) -> DecisionTreeModel:
    return DecisionTreeModel(max_depth=max_depth).fit(np.asarray(features, dtype=float), labels)


def fit_forest_baseline(features, labels: Sequence[int], n_trees: int = DEFAULT_N_TREES,
                        max_depth: int = TREE_MAX_DEPTH, seed: int = 0) -> RandomForestModel:
    return RandomForestModel(n_trees, max_depth, seed).fit(np.asarray(features, dtype=float), labels)


# ---------- Direct LLM inference ----------

def survey_variables(schema: SurveySchema) -> List[str]:
    """Every question except the decision itself, free text included."""
    return [v.name for v in schema.variables if v.name != schema.decision_column]


def direct_llm_baseline(record: SurveyRecord, schema: SurveySchema, llm,
                        request_id: str = "") -> Decision:
    """One prompt with all survey answers, no perceptions and no examples."""
    template = load_template("baseline_direct")
    system, user = render(template, {"Survey": format_answers(record, schema, survey_variables(schema))})
    request = llm.new_request(system, user, request_id or f"baseline:{record.record_id}")
    return request_decision(llm, request)
