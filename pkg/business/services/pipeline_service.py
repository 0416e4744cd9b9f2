"""
Stage orchestration for the command line, plus the in-memory runners used
by cross-event evaluation and the ablation harness.

Each stage reads its inputs from the run ledger, writes artifacts stamped
with the config hash and the training-data provenance, and records them.
"""

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from app_config import ABLATION_LABELS, FULL_LABEL
from business.exceptions.errors import (
    AmbiguousDecisionError,
    ConfigInvalidError,
    CorruptArtifactError,
    LlmFailureError,
    SchemaMismatchError,
)
from business.models.memory import MemoryStore, PredictionOutcome, StoreMode
from business.models.metrics import MetricsReport, ScoreConfusion
from business.models.pattern import PatternClassifier, PatternTrialReport, ReasoningPattern
from business.models.perception import KnowledgeBase
from business.models.run_config import AblationFlags, RunConfig
from business.models.survey import Dataset, EncodingStats, EvacuationChoice, SurveySchema
from business.models.weights import IndicatorKind, VariableSubset, WeightVector
from business.services import baseline_service, evaluation_service
from business.services.dataset_service import (
    check_manifest,
    compute_encoding_stats,
    encode_dataset,
    encode_record,
    load_dataset,
    load_schema,
    manifest,
    split_dataset,
)
from business.services.llm_service import build_embedder, build_llm_client
from business.services.memory_service import PipelineContext, compact_memory, predict_all, train_memory
from business.services.pattern_service import (
    classifier_features,
    enumerate_patterns,
    label_patterns,
    project,
    train_pattern_classifier,
)
from business.services.perception_service import build_knowledge_base
from business.services.selection_service import select_all, weight_distribution
from storage.ledger_manager import LedgerManager
from storage.storage_manager import StorageManager

logger = logging.getLogger(__name__)

@contextmanager
def _rebuilding(artifact: str) -> Iterator[None]:
    """Reports a payload that no longer fits its model as a corrupt artifact."""
    try:
        yield
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptArtifactError(artifact, str(e)) from e


BASELINE_LABELS = {
    "logistic": "Logistic Regression",
    "decision_tree": "Decision Tree",
    "random_forest": "Random Forest",
    "direct_llm": "LLM Inference",
}


# ---------- Schema reconciliation ----------

def reconcile_schemas(train: SurveySchema, test: SurveySchema) -> SurveySchema:
    """Train schema restricted to questions the test survey asks with the same kind."""
    test_kinds = {v.name: v.kind for v in test.variables if v.name != test.decision_column}
    shared = {
        v.name for v in train.variables
        if v.name != train.decision_column and test_kinds.get(v.name) is v.kind
    }
    if not shared:
        raise SchemaMismatchError(f"{train.event_name} and {test.event_name} share no variables")
    missing = [src for src in train.indicators.values() if src not in shared]
    if missing:
        raise SchemaMismatchError(f"Indicator variables missing from the test survey: {missing}")
    return SurveySchema(
        event_name=train.event_name,
        decision_column=train.decision_column,
        variables=[v for v in train.variables if v.name in shared or v.name == train.decision_column],
        indicators=dict(train.indicators),
        id_column=train.id_column,
        context_column=train.context_column,
    )


def adapt_dataset(dataset: Dataset, schema: SurveySchema) -> Dataset:
    """Re-expresses records under another schema (shared answers, same decision)."""
    keep = set(schema.names)
    records = []
    for r in dataset:
        answers = {k: v for k, v in r.answers.items() if k in keep and k != schema.decision_column}
        answers[schema.decision_column] = r.decision.value
        records.append(r.model_copy(update={"answers": answers}))
    return Dataset(schema, records)


def truth(dataset: Dataset) -> List[EvacuationChoice]:
    return [r.decision for r in dataset]


# ---------- Training artifacts ----------

class TrainingArtifacts:
    """Everything learned from a training partition before any test record is seen."""

    def __init__(self, train: Dataset, stats: EncodingStats, weights: Dict[IndicatorKind, WeightVector],
                 subsets: Dict[IndicatorKind, VariableSubset], patterns: List[ReasoningPattern],
                 reports: List[PatternTrialReport], classifier: PatternClassifier, kb: KnowledgeBase):
        self.train = train
        self.stats = stats
        self.weights = weights
        self.subsets = subsets
        self.patterns = patterns
        self.reports = reports
        self.classifier = classifier
        self.kb = kb
        self.provenance = train.fingerprint()

    def to_dict(self) -> Dict:
        return {
            "encoding": self.stats.model_dump(mode="json"),
            "weights": {k.value: w.model_dump(mode="json") for k, w in self.weights.items()},
            "subsets": {k.value: s.to_export() for k, s in self.subsets.items()},
            "pattern_labels": [r.model_dump(mode="json") for r in self.reports],
            "classifier": self.classifier.to_dict(),
            "knowledge_base": self.kb.to_dict(),
        }


def kb_partition(train: Dataset, config: RunConfig) -> Dataset:
    """The first kb_frac of the training partition, in stored order."""
    fraction = config.splits.kb_frac
    return split_dataset(train, [fraction, 1.0 - fraction], config.splits.seed, in_order=True)[0]


def fit_classifier(train: Dataset, stats: EncodingStats, subsets: Dict[IndicatorKind, VariableSubset],
                   reports: Sequence[PatternTrialReport], config: RunConfig) -> PatternClassifier:
    names = classifier_features(train.schema, subsets)
    by_id = {r.record_id: r for r in train}
    features = [project(encode_record(by_id[rep.record_id], train.schema, stats), names) for rep in reports]
    return train_pattern_classifier(
        features, [rep.label for rep in reports],
        kind=config.classifier, max_depth=config.max_depth,
        n_trees=config.n_trees, seed=config.splits.seed,
    )


def build_training_artifacts(train: Dataset, config: RunConfig, llm, embedder) -> TrainingArtifacts:
    """Selection, pattern labels, classifier and knowledge base from `train` alone."""
    stats = compute_encoding_stats(train)
    weights, subsets = select_all(train, config.theta, config.reg_strength, config.selection_method, stats)
    patterns = enumerate_patterns(subsets)
    reports = label_patterns(train, patterns, llm, config.trials)
    classifier = fit_classifier(train, stats, subsets, reports, config)
    by_label = {rep.record_id: patterns[rep.label] for rep in reports}
    kb = build_knowledge_base(kb_partition(train, config), by_label, llm, embedder)
    return TrainingArtifacts(train, stats, weights, subsets, patterns, reports, classifier, kb)


def make_context(schema: SurveySchema, artifacts: TrainingArtifacts, config: RunConfig, llm, embedder,
                 ablation: Optional[AblationFlags] = None) -> PipelineContext:
    return PipelineContext(
        schema=schema,
        stats=artifacts.stats,
        patterns=artifacts.patterns,
        classifier=artifacts.classifier,
        llm=llm,
        embedder=embedder,
        kb=artifacts.kb,
        k=config.k,
        ablation=ablation or config.ablation,
        extras=config.extras,
        concurrency=1 if config.llm.provider.value == "stub" else config.llm.concurrency_bound,
    )


def run_flare(artifacts: TrainingArtifacts, test: Dataset, config: RunConfig, llm, embedder,
              ablation: Optional[AblationFlags] = None) -> Tuple[MemoryStore, List[PredictionOutcome]]:
    """Memory training on the artifacts' partition, then inference on `test`."""
    ctx = make_context(artifacts.train.schema, artifacts, config, llm, embedder, ablation)
    store, _ = train_memory(artifacts.train, ctx, MemoryStore(embedder.dim), config.epochs)
    frozen = store.freeze()
    return frozen, predict_all(test, ctx, frozen)


def decisions(outcomes: Sequence[PredictionOutcome]) -> List[Optional[EvacuationChoice]]:
    return [o.decision.value for o in outcomes]


# ---------- Baselines ----------

def run_baseline(method: str, train: Dataset, test: Dataset, stats: EncodingStats, config: RunConfig,
                 llm=None) -> List[Optional[EvacuationChoice]]:
    """Predictions of one baseline on `test`, trained on `train` only."""
    if method == "direct_llm":
        out = []
        for r in test:
            try:
                out.append(baseline_service.direct_llm_baseline(r, test.schema, llm).value)
            except (LlmFailureError, AmbiguousDecisionError) as e:
                logger.warning("Direct LLM baseline failed for %s: %s", r.record_id, e)
                out.append(None)
        return out

    X_train, X_test = encode_dataset(train, stats), encode_dataset(test, stats)
    y_train = [baseline_service.decision_to_label(d) for d in truth(train)]
    if method == "logistic":
        model = baseline_service.fit_logistic(X_train, y_train, feature_names=train.schema.feature_names)
        return [baseline_service.predict_logistic(model, x) for x in X_test]
    if method == "decision_tree":
        model = baseline_service.fit_tree_baseline(X_train, y_train, config.max_depth)
    elif method == "random_forest":
        model = baseline_service.fit_forest_baseline(
            X_train, y_train, config.n_trees, config.max_depth, config.splits.seed
        )
    else:
        raise ConfigInvalidError(f"Unknown method '{method}'", method=method)
    return [baseline_service.label_to_decision(model.predict_one(x)) for x in X_test]


class CrossEvalResult:
    def __init__(self, report: MetricsReport, artifacts: Optional[TrainingArtifacts],
                 provenance: str, outcomes: Optional[List[PredictionOutcome]] = None):
        self.report = report
        self.artifacts = artifacts
        self.provenance = provenance
        self.outcomes = outcomes


def cross_event_evaluate(train: Dataset, test: Dataset, method: str, config: RunConfig,
                         llm=None, embedder=None) -> CrossEvalResult:
    """
    Trains every artifact on `train` only, then evaluates on `test`. Test
    records are adapted to the reconciled schema after training finishes.
    """
    schema = reconcile_schemas(train.schema, test.schema)
    train = adapt_dataset(train, schema)

    if method == "flare":
        artifacts = build_training_artifacts(train, config, llm, embedder)
        test = adapt_dataset(test, schema)
        _, outcomes = run_flare(artifacts, test, config, llm, embedder)
        report = evaluation_service.compute_metrics(decisions(outcomes), truth(test))
        return CrossEvalResult(report, artifacts, artifacts.provenance, outcomes)

    stats = compute_encoding_stats(train)
    test = adapt_dataset(test, schema)
    preds = run_baseline(method, train, test, stats, config, llm)
    return CrossEvalResult(evaluation_service.compute_metrics(preds, truth(test)), None, train.fingerprint())


# ---------- Stage service ----------

class PipelineService:
    """Runs one CLI stage at a time against a run directory."""

    def __init__(self, config: RunConfig, llm=None, embedder=None):
        self.config = config
        self.storage = StorageManager(config.out_dir)
        self.ledger = LedgerManager(config.out_dir)
        self.config_hash = config.config_hash()
        self.transcript_hash = config.transcript_hash()
        self.partition_hash = config.partition_hash()
        self._llm = llm
        self._embedder = embedder

    @property
    def llm(self):
        if self._llm is None:
            self._llm = build_llm_client(self.config.llm)
        return self._llm

    @property
    def embedder(self):
        if self._embedder is None:
            self._embedder = build_embedder(self.config.embedder)
        return self._embedder

    # ----- helpers -----

    def _partitions(self) -> Tuple[Dataset, Dataset]:
        """(train, test): a seeded split, or the whole file against the held-out test file."""
        source = self.config.dataset
        dataset = load_dataset(source.data, load_schema(source.schema_path))
        if self.config.test_dataset is None:
            fraction = self.config.splits.train_frac
            train, test = split_dataset(dataset, [fraction, 1.0 - fraction], self.config.splits.seed)
            return train, test
        held_out = self.config.test_dataset
        test = load_dataset(held_out.data, load_schema(held_out.schema_path))
        schema = reconcile_schemas(dataset.schema, test.schema)
        return adapt_dataset(dataset, schema), adapt_dataset(test, schema)

    def _save(self, name: str, payload, stage: str, provenance: str) -> Path:
        path = self.storage.save(name, payload, self.config_hash, provenance)
        self.ledger.record(name, path, stage, self.config_hash, self.transcript_hash, self.partition_hash)
        return path

    def _save_rows(self, name: str, rows: List[Dict], stage: str, provenance: str) -> Path:
        path = self.storage.save_rows(name, rows, self.config_hash, provenance)
        self.ledger.record(name, path, stage, self.config_hash, self.transcript_hash, self.partition_hash)
        return path

    def _save_text(self, name: str, text: str, stage: str) -> Path:
        path = self.storage.save_text(name, text)
        self.ledger.record(name, path, stage, self.config_hash, self.transcript_hash, self.partition_hash)
        return path

    def _require(self, name: str, stage: str) -> None:
        self.ledger.require(name, stage, self.partition_hash)

    def _stats(self) -> EncodingStats:
        self._require("encoding", "ingest")
        payload = self.storage.load("encoding")
        with _rebuilding("encoding"):
            return EncodingStats.model_validate(payload)

    def _subsets(self) -> Dict[IndicatorKind, VariableSubset]:
        self._require("subsets", "select-vars")
        payload = self.storage.load("subsets")
        with _rebuilding("subsets"):
            return {IndicatorKind(k): VariableSubset.model_validate(v) for k, v in payload["subsets"].items()}

    def _reports(self) -> List[PatternTrialReport]:
        self._require("pattern_labels", "label-patterns")
        rows = self.storage.load_rows("pattern_labels")
        with _rebuilding("pattern_labels"):
            return [PatternTrialReport.model_validate(r) for r in rows]

    def _classifier(self) -> PatternClassifier:
        self._require("classifier", "train-classifier")
        payload = self.storage.load("classifier")
        with _rebuilding("classifier"):
            return PatternClassifier.from_dict(payload)

    def _kb(self) -> KnowledgeBase:
        self._require("knowledge_base", "build-kb")
        payload = self.storage.load("knowledge_base")
        with _rebuilding("knowledge_base"):
            return KnowledgeBase.model_validate(payload)

    def _context(self, schema: SurveySchema) -> PipelineContext:
        return PipelineContext(
            schema=schema,
            stats=self._stats(),
            patterns=enumerate_patterns(self._subsets()),
            classifier=self._classifier(),
            llm=self.llm,
            embedder=self.embedder,
            kb=self._kb(),
            k=self.config.k,
            ablation=self.config.ablation,
            extras=self.config.extras,
            concurrency=1 if self.config.llm.provider.value == "stub" else self.config.llm.concurrency_bound,
        )

    # ----- stages -----

    def ingest(self) -> Dict:
        train, test = self._partitions()
        full = train if self.config.test_dataset else Dataset(train.schema, train.records + test.records)
        m = manifest(full)
        check = check_manifest(m)
        for note in check["notes"]:
            logger.warning(note)
        kb = kb_partition(train, self.config)
        stats = compute_encoding_stats(train)
        provenance = train.fingerprint()

        self._save("manifest", {"manifest": m.model_dump(mode="json"), "check": check}, "ingest", full.fingerprint())
        self._save("splits", {
            "train": [r.record_id for r in train],
            "test": [r.record_id for r in test],
            "kb": [r.record_id for r in kb],
        }, "ingest", provenance)
        self._save("encoding", stats.model_dump(mode="json"), "ingest", provenance)
        return {"success": True, "message": f"Ingested {m.n_records} records", "manifest": m.model_dump(),
                "check": check, "sizes": {"train": len(train), "test": len(test), "kb": len(kb)}}

    def select_vars(self) -> Dict:
        train, _ = self._partitions()
        stats = self._stats()
        weights, subsets = select_all(
            train, self.config.theta, self.config.reg_strength, self.config.selection_method, stats
        )
        selected = {name for s in subsets.values() for name in s.selected}
        utilized = len(selected) / max(len(train.schema.feature_names), 1)
        provenance = train.fingerprint()
        self._save("weights", {
            k.value: {"vector": w.model_dump(mode="json"), "distribution": weight_distribution(w)}
            for k, w in weights.items()
        }, "select-vars", provenance)
        self._save("subsets", {
            "subsets": {k.value: s.model_dump(mode="json") for k, s in subsets.items()},
            "utilized_ratio": round(utilized, 6),
        }, "select-vars", provenance)
        return {"success": True, "message": f"Selected {len(selected)} variables",
                "subsets": [s.to_export() for s in subsets.values()], "utilized_ratio": utilized}

    def label_patterns(self) -> Dict:
        train, _ = self._partitions()
        patterns = enumerate_patterns(self._subsets())
        reports = label_patterns(train, patterns, self.llm, self.config.trials)
        self._save_rows("pattern_labels", [r.model_dump(mode="json") for r in reports],
                        "label-patterns", train.fingerprint())
        low = sum(r.low_confidence for r in reports)
        return {"success": True, "message": f"Labelled {len(reports)} records ({low} low confidence)"}

    def train_classifier(self) -> Dict:
        train, _ = self._partitions()
        classifier = fit_classifier(train, self._stats(), self._subsets(), self._reports(), self.config)
        self._save("classifier", classifier.to_dict(), "train-classifier", train.fingerprint())
        return {"success": True, "message": f"Trained {classifier.kind} on {len(classifier.feature_names)} features"}

    def build_kb(self) -> Dict:
        train, _ = self._partitions()
        self._classifier()
        patterns = enumerate_patterns(self._subsets())
        assignments = {r.record_id: patterns[r.label] for r in self._reports()}
        kb = build_knowledge_base(kb_partition(train, self.config), assignments, self.llm, self.embedder)
        self._save("knowledge_base", kb.to_dict(), "build-kb", train.fingerprint())
        return {"success": True, "message": f"Knowledge base holds {len(kb.entries)} entries"}

    def train_memory(self) -> Dict:
        train, _ = self._partitions()
        ctx = self._context(train.schema)
        store, outcomes = train_memory(train, ctx, MemoryStore(self.embedder.dim), self.config.epochs)
        provenance = train.fingerprint()
        self._save_rows("memory", store.to_rows(), "train-memory", provenance)
        self._save_rows("training_outcomes", [o.model_dump(mode="json") for o in outcomes],
                        "train-memory", provenance)
        failed = sum(o.failed for o in outcomes)
        return {"success": True, "message": f"Memory holds {len(store)} entries ({failed} failed records)"}

    def predict(self) -> Dict:
        self._require("memory", "train-memory")
        _, test = self._partitions()
        ctx = self._context(test.schema)
        with _rebuilding("memory"):
            store = MemoryStore.load(self.storage.path("memory"), self.embedder.dim, StoreMode.INFERENCE)
        outcomes = predict_all(test, ctx, store)
        rows = [{**o.model_dump(mode="json"), "label": r.decision.value} for o, r in zip(outcomes, test)]
        self._save_rows("predictions", rows, "predict", test.fingerprint())
        return {"success": True, "message": f"Predicted {len(rows)} records"}

    def evaluate(self) -> Dict:
        self._require("predictions", "predict")
        _, test = self._partitions()
        rows = self.storage.load_rows("predictions")
        with _rebuilding("predictions"):
            outcomes = [PredictionOutcome.model_validate({k: v for k, v in r.items() if k != "label"}) for r in rows]

        report = evaluation_service.compute_metrics(decisions(outcomes), truth(test))
        scores = self._score_statistics(test, outcomes)
        report.mse = scores["mse"] or None
        label = self.config.ablation.label
        provenance = test.fingerprint()

        self._save("metrics", {"label": label, "report": report.to_dict()}, "evaluate", provenance)
        self._save_text("metrics_table", evaluation_service.render_metrics_table([(label, report)]), "evaluate")
        self._save("scores", scores, "evaluate", provenance)
        for kind in ("threat", "risk"):
            if scores["confusion"].get(kind):
                sc = ScoreConfusion(matrix=scores["confusion"][kind])
                self._save_text(f"{kind}_heatmap", evaluation_service.score_confusion_csv(sc), "evaluate")
                if self.config.heatmap_svg:
                    evaluation_service.write_heatmap_svg(
                        sc, self.config.out_dir / f"{kind}_heatmap.svg", f"{kind.title()} score accuracy"
                    )
        return {"success": True, "message": "Evaluation complete", "label": label, "report": report}

    def _score_statistics(self, test: Dataset, outcomes: Sequence[PredictionOutcome]) -> Dict:
        """Predicted perception scores against the survey-reported indicator answers."""
        sources = test.schema.indicators
        pairs = {"threat": ([], []), "risk": ([], [])}
        for record, outcome in zip(test, outcomes):
            for kind, result in (("threat", outcome.threat), ("risk", outcome.risk)):
                if result is None:
                    continue
                answer = record.answer(sources[result.indicator.value])
                if answer is not None:
                    pairs[kind][0].append(result.calibrated_score)
                    pairs[kind][1].append(int(float(answer)))
        mse, confusion = {}, {}
        for kind, (predicted, actual) in pairs.items():
            if actual:
                mse[kind] = evaluation_service.compute_mse(predicted, actual)
                confusion[kind] = evaluation_service.score_confusion(predicted, actual).matrix
        return {"mse": mse, "confusion": confusion}

    def cross_eval(self, methods: Sequence[str] = ("flare", *BASELINE_LABELS)) -> Dict:
        if self.config.test_dataset is None:
            raise ConfigInvalidError("cross-eval needs test_dataset in the config")
        train = load_dataset(self.config.dataset.data, load_schema(self.config.dataset.schema_path))
        held_out = self.config.test_dataset
        test = load_dataset(held_out.data, load_schema(held_out.schema_path))

        entries, payload = [], {}
        for method in methods:
            result = cross_event_evaluate(train, test, method, self.config, self.llm, self.embedder)
            label = FULL_LABEL if method == "flare" else BASELINE_LABELS[method]
            entries.append((label, result.report))
            payload[label] = {"report": result.report.to_dict(), "provenance": result.provenance}

        title = f"{train.schema.event_name} -> {test.schema.event_name}"
        self._save("cross_eval", {"train_test": title, "methods": payload}, "cross-eval", train.fingerprint())
        self._save_text("cross_eval_table", evaluation_service.render_metrics_table(entries), "cross-eval")
        return {"success": True, "message": f"Cross-event evaluation {title}", "entries": entries}

    def ablate(self, keys: Sequence[Optional[str]] = (None, *ABLATION_LABELS)) -> Dict:
        """Full pipeline plus each ablation, sharing one set of training artifacts."""
        train, test = self._partitions()
        artifacts = build_training_artifacts(train, self.config, self.llm, self.embedder)
        entries, payload = [], {}
        for key in keys:
            flags = AblationFlags(**({key: True} if key else {}))
            _, outcomes = run_flare(artifacts, test, self.config, self.llm, self.embedder, flags)
            report = evaluation_service.compute_metrics(decisions(outcomes), truth(test))
            entries.append((flags.label, report))
            payload[flags.label] = report.to_dict()

        self._save("ablation", payload, "ablate", artifacts.provenance)
        self._save_text("ablation_table", evaluation_service.render_metrics_table(entries), "ablate")
        return {"success": True, "message": f"Ablation over {len(entries)} configurations", "entries": entries}

    def compact_memory(self) -> Dict:
        self._require("memory", "train-memory")
        with _rebuilding("memory"):
            count = compact_memory(self.storage.path("memory"))
        return {"success": True, "message": f"Memory compacted to {count} entries"}
