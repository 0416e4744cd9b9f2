"""
Reasoning-pattern machinery: enumeration of the four (threat, risk)
combinations, trial-based success rates, most-probable labels and the
pattern classifier.
"""

import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app_config import CLASSIFIER_GROUPS, DEFAULT_N_TREES, DEFAULT_TRIALS, TREE_MAX_DEPTH
from business.exceptions.errors import (
    AmbiguousDecisionError,
    EmptyTrainingSetError,
    LengthMismatchError,
    MissingSubsetError,
    ScoreParseFailureError,
    ZeroTrialsError,
)
from business.models.pattern import (
    DecisionTreeModel,
    PatternClassifier,
    PatternTrialReport,
    RandomForestModel,
    ReasoningPattern,
)
from business.models.survey import Dataset, FeatureVector, SurveyRecord, SurveySchema
from business.models.weights import RISK_KINDS, THREAT_KINDS, IndicatorKind, VariableSubset
from business.services.cot_service import assemble_cot, load_template, request_decision
from business.services.perception_service import perceive

logger = logging.getLogger(__name__)


def enumerate_patterns(subsets: Dict[IndicatorKind, VariableSubset]) -> List[ReasoningPattern]:
    """Every threat kind paired with every risk kind, ids in fixed order."""
    for kind in IndicatorKind:
        if kind not in subsets:
            raise MissingSubsetError(kind.value)
    patterns = []
    for t_index, threat in enumerate(THREAT_KINDS):
        for r_index, risk in enumerate(RISK_KINDS):
            patterns.append(ReasoningPattern(
                id=2 * t_index + r_index,
                threat=subsets[threat].indicator,
                risk=subsets[risk].indicator,
                threat_subset=subsets[threat],
                risk_subset=subsets[risk],
            ))
    return patterns


def count_correct(record: SurveyRecord, schema: SurveySchema, pattern: ReasoningPattern, llm,
                  trials: int, extras: Sequence[str] = ()) -> int:
    """Builds the pattern's temporary CoT once, then asks for a decision `trials` times."""
    if trials < 1:
        raise ZeroTrialsError(f"trials must be at least 1, got {trials}")
    prefix = f"label:p{pattern.id}"
    threat, risk = perceive(record, schema, pattern, llm, kb=None, embedder=None, request_prefix=prefix)
    notes = [record.context_notes] if record.context_notes else []
    cot = assemble_cot(load_template("decision_cot"), risk, [*notes, *extras], [], record.record_id)

    correct = 0
    for k in range(trials):
        request = llm.new_request(cot.rendered_system, cot.rendered_user, f"{prefix}:{record.record_id}:t{k}")
        try:
            decision = request_decision(llm, request)
        except AmbiguousDecisionError:
            continue
        correct += decision.value is record.decision
    return correct


def estimate_pattern_success(record: SurveyRecord, schema: SurveySchema, pattern: ReasoningPattern,
                             llm, trials: int = DEFAULT_TRIALS, extras: Sequence[str] = ()) -> float:
    """Fraction of trials whose decision matches the record's ground truth."""
    return count_correct(record, schema, pattern, llm, trials, extras) / trials


def label_most_probable(rates: Sequence[float]) -> Tuple[int, bool]:
    """Argmax with lowest-id tie-break; flags all-zero rates as low confidence."""
    if len(rates) != 4:
        raise ValueError(f"Expected 4 rates, got {len(rates)}")
    best = max(range(4), key=lambda i: (rates[i], -i))
    return best, rates[best] <= 0


def label_patterns(train: Dataset, patterns: Sequence[ReasoningPattern], llm,
                   trials: int = DEFAULT_TRIALS) -> List[PatternTrialReport]:
    """Trial reports for every training record."""
    if trials < 1:
        raise ZeroTrialsError(f"trials must be at least 1, got {trials}")
    reports = []
    for record in train:
        correct = []
        for pattern in patterns:
            try:
                correct.append(count_correct(record, train.schema, pattern, llm, trials))
            except ScoreParseFailureError as e:
                logger.warning("Pattern %d failed for %s: %s", pattern.id, record.record_id, e.message)
                correct.append(0)
        rates = [c / trials for c in correct]
        label, low = label_most_probable(rates)
        reports.append(PatternTrialReport(
            record_id=record.record_id, rates=rates, correct=correct,
            trials=trials, label=label, low_confidence=low,
        ))
    return reports


# ---------- Classifier ----------

def classifier_features(schema: SurveySchema, subsets: Dict[IndicatorKind, VariableSubset]) -> List[str]:
    """Selected variables of all indicators plus demographic and order-awareness questions."""
    wanted = {name for s in subsets.values() for name in s.selected}
    wanted |= {v.name for v in schema.feature_variables if v.group in CLASSIFIER_GROUPS}
    return [name for name in schema.feature_names if name in wanted]


def project(vector: FeatureVector, names: Sequence[str]) -> FeatureVector:
    """Restricts a feature vector to the given names, in that order."""
    index = {n: i for i, n in enumerate(vector.names)}
    return FeatureVector(
        names=list(names),
        values=[vector.values[index[n]] for n in names],
        imputed=[vector.imputed[index[n]] for n in names],
    )


def train_pattern_classifier(features: Sequence[FeatureVector], labels: Sequence[int],
                             kind: str = "decision_tree", max_depth: int = TREE_MAX_DEPTH,
                             n_trees: int = DEFAULT_N_TREES, seed: int = 0) -> PatternClassifier:
    """Fits a depth-bounded tree (or a seeded forest) on pattern labels."""
    if len(features) != len(labels):
        raise LengthMismatchError(f"{len(features)} feature vectors vs {len(labels)} labels")
    if not features:
        raise EmptyTrainingSetError("No labelled records to train on")

    X = np.array([f.values for f in features], dtype=float)
    if kind == "random_forest":
        model = RandomForestModel(n_trees=n_trees, max_depth=max_depth, seed=seed)
    else:
        model = DecisionTreeModel(max_depth=max_depth)
    model.fit(X, labels)
    logger.info("Pattern classifier (%s) trained on %d records, depth %d", kind, len(labels), model.depth())
    return PatternClassifier(model, features[0].names)


def classify_pattern(classifier: PatternClassifier, features: FeatureVector) -> int:
    return classifier.predict(features.values)
