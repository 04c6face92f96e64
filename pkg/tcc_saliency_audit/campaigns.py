"""
Cross-validated WP1 / WP2 campaigns.

Every training and evaluation run gets a deterministic id derived from what
defines it (spec, fold, training settings, data, weight source), so a
re-run with the same configuration reuses persisted runs instead of
recomputing them.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .checkpoints import checkpoint_exists, load_checkpoint, save_checkpoint
from .config import CampaignConfig, ModelConfig, TrainConfig
from .data_io import Dataset, FrameSequence, kfold_split
from .errors import ConfigurationError, InputError, OrchestrationError, RunLookupError
from .interventions import (
    DonorMasks,
    WeightSource,
    capture_masks,
    freeze_uniform,
    mask_paths,
    read_masks,
    transplant,
    write_masks,
)
from .logger import get_logger, run_logger
from .metrics import DivergenceReport, mean_divergence, saliency_divergence, spatial_divergence
from .model_zoo import ModelSpec, SaliencyModel
from .results import ResultsStore, RunRecord, make_run_id
from .stats import anova, benjamini_hochberg, tukey_hsd
from .training import evaluate, train
from .verdicts import (
    AccuracyComparison,
    Report,
    VerdictRecord,
    accuracy_vs_baseline,
    split_label,
    summary_report,
    wp1_batch,
    wp2_comparisons,
    wp2_decide,
)

logger = get_logger(__name__)

WP1_VERDICTS = "wp1"
WP2_VERDICTS = "wp2"


@dataclass
class CampaignResult:
    verdicts: List[VerdictRecord]
    accuracy: List[AccuracyComparison]
    report: Report
    details: Dict[str, Any] = field(default_factory=dict)


def model_spec_for(label: str, model_cfg: ModelConfig) -> ModelSpec:
    spec = ModelSpec.from_label(
        label,
        backbone=model_cfg.backbone,
        hidden_size=model_cfg.hidden_size,
        kernel_size=model_cfg.kernel_size,
        attention_width=model_cfg.attention_width,
        dense_noncontextual=model_cfg.dense_noncontextual,
        input_size=(model_cfg.input_height, model_cfg.input_width),
    )
    spec.validate()
    return spec


def spec_tag(spec: ModelSpec) -> str:
    """'C-S', 'C-S-NC' ..."""
    return spec.label if spec.is_contextual else f"{spec.label}-NC"


def dataset_fingerprint(dataset: Dataset) -> str:
    payload = json.dumps(dataset.manifest.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha1(payload).hexdigest()[:16]


def calibrate_spatial_threshold(masks_a: Dict[str, List[np.ndarray]], masks_b: Dict[str, List[np.ndarray]],
                                percentile: float = 10.0, scale: str = "BOUNDED") -> float:
    """
    Percentile of per-item spatial divergence between two independently seeded
    trainings of the same configuration.
    """
    items = sorted(set(masks_a) & set(masks_b))
    if not items:
        raise InputError("no common items to calibrate on")
    values = [spatial_divergence(masks_a[i], masks_b[i], scale) for i in items]
    return float(np.percentile(values, percentile))


class Campaign:
    """Shared orchestration for both tests"""

    def __init__(self, campaign_cfg: CampaignConfig, model_cfg: ModelConfig, train_cfg: TrainConfig,
                 dataset: Dataset, store: ResultsStore):
        train_cfg.validate()
        if campaign_cfg.folds < 2:
            raise ConfigurationError(f"campaigns need at least 2 folds, got {campaign_cfg.folds}")
        self.cfg = campaign_cfg
        self.model_cfg = model_cfg
        self.train_cfg = train_cfg
        self.store = store
        if dataset.manifest.num_folds != campaign_cfg.folds:
            dataset = dataset.with_manifest(kfold_split(dataset.manifest, campaign_cfg.folds, campaign_cfg.seed))
        self.dataset = dataset
        self.fingerprint = dataset_fingerprint(dataset)
        self.specs = {label: model_spec_for(label, model_cfg) for label in campaign_cfg.specs}

    # ---- runs ---------------------------------------------------------------

    def training_run_id(self, spec: ModelSpec, fold: int, seed: int) -> str:
        train_cfg = asdict(replace(self.train_cfg, seed=seed))
        return make_run_id(spec_tag(spec), {"kind": "train", "spec": spec.to_dict(), "fold": fold,
                                            "train": train_cfg, "data": self.fingerprint})

    def trained(self, spec: ModelSpec, fold: int, seed: Optional[int] = None
                ) -> Tuple[SaliencyModel, RunRecord]:
        seed = self.train_cfg.seed if seed is None else seed
        run_id = self.training_run_id(spec, fold, seed)
        directory = self.store.checkpoint_dir(run_id)
        if self.store.has_run(run_id) and checkpoint_exists(directory):
            run_logger(__name__, run_id).info("Reusing completed run")
            return load_checkpoint(directory), self.store.load_run(run_id)
        if not self.cfg.train_missing:
            raise OrchestrationError(f"missing checkpoint for run {run_id} ({spec_tag(spec)}, fold {fold})")
        outcome = train(spec, self.dataset, fold, replace(self.train_cfg, seed=seed), run_id=run_id)
        save_checkpoint(outcome.model, directory)
        record = RunRecord.create(
            run_id, spec, WeightSource.learned(), fold, outcome.test_ids, outcome.errors,
            wall_time=outcome.log.wall_time, seeds={"train": seed},
            checkpoint=os.path.relpath(directory, self.store.out_dir),
        )
        self.store.save_run(record)
        return outcome.model, record

    def captured(self, model: Any, record: RunRecord, sequences: Sequence[FrameSequence]
                 ) -> Dict[str, DonorMasks]:
        """Saliency of ``model`` on every sequence, read back from mask files when present"""
        directory = self.store.masks_dir(record.run_id)
        normalized = record.spec.temporal_kind == "attention"
        captures: Dict[str, DonorMasks] = {}
        refs: List[str] = []
        for seq in sequences:
            if any(os.path.exists(p) for p in mask_paths(directory, seq.id)):
                captures[seq.id] = read_masks(directory, seq.id, normalized)
                continue
            masks, weights = capture_masks(model, seq)
            refs += write_masks(directory, seq.id, masks, weights)
            captures[seq.id] = read_masks(directory, seq.id, normalized)
        if refs:
            record.mask_refs = sorted(set(record.mask_refs)
                                      | {os.path.relpath(p, self.store.out_dir) for p in refs})
            self.store.save_run(record)
        return captures

    def evaluated(self, model: Any, spec: ModelSpec, source: WeightSource, fold: int,
                  parent: RunRecord) -> RunRecord:
        payload = {"kind": "eval", "parent": parent.run_id, "source": source.to_dict(),
                   "renormalize": self.cfg.renormalize_frozen_attention}
        run_id = make_run_id(f"{spec_tag(spec)}-{source.kind.value.lower()}", payload)
        if self.store.has_run(run_id):
            run_logger(__name__, run_id).info("Reusing completed run")
            return self.store.load_run(run_id)
        sequences = self.dataset.sequences(parent.item_ids)
        errors = evaluate(model, sequences)
        seeds = dict(parent.seeds)
        if source.seed is not None:
            seeds["freeze"] = source.seed
        record = RunRecord.create(run_id, spec, source, fold, parent.item_ids, errors, seeds=seeds)
        self.store.save_run(record)
        return record

    def frozen(self, model: SaliencyModel, spec: ModelSpec):
        return freeze_uniform(model, spec.saliency_dims, self.cfg.seed,
                              renormalize_attention=self.cfg.renormalize_frozen_attention)

    # ---- WP1 ----------------------------------------------------------------

    def baseline_maes(self) -> Tuple[List[float], List[str]]:
        spec = model_spec_for("B", self.model_cfg)
        maes, refs = [], []
        for fold in range(self.cfg.folds):
            _, record = self.trained(spec, fold)
            maes.append(record.mae)
            refs.append(record.run_id)
        return maes, refs

    def run_wp1(self) -> CampaignResult:
        samples: Dict[str, Tuple[List[float], List[float]]] = {}
        refs: Dict[str, List[str]] = {}
        for label, spec in self.specs.items():
            learned, uniform, run_refs = [], [], []
            for fold in range(self.cfg.folds):
                model, record = self.trained(spec, fold)
                frozen = self.evaluated(self.frozen(model, spec), spec, WeightSource.uniform(self.cfg.seed),
                                        fold, record)
                learned.append(record.mae)
                uniform.append(frozen.mae)
                run_refs += [record.run_id, frozen.run_id]
            samples[label] = (learned, uniform)
            refs[label] = run_refs
            logger.info(f"WP1 {label}: learned MAE {np.mean(learned):.3f}, uniform MAE {np.mean(uniform):.3f}")

        verdicts = wp1_batch(samples, alpha=self.cfg.alpha, paired=self.cfg.paired, run_refs=refs)
        accuracy: List[AccuracyComparison] = []
        accuracy_refs: List[str] = []
        if self.cfg.compare_baseline:
            baseline, accuracy_refs = self.baseline_maes()
            accuracy = [accuracy_vs_baseline(label, samples[label][0], baseline, self.cfg.alpha, self.cfg.paired)
                        for label in samples]
        self.store.save_verdicts(WP1_VERDICTS, {
            "verdicts": [v.to_dict() for v in verdicts],
            "accuracy": [a.to_dict() for a in accuracy],
            "accuracy_refs": accuracy_refs,
        })
        return CampaignResult(verdicts, accuracy, summary_report(verdicts, accuracy))

    # ---- WP2 ----------------------------------------------------------------

    def spatial_threshold(self, label: str, cache: Dict[str, float]) -> Optional[float]:
        spec = self.specs[label]
        if not spec.has_spatial:
            return None
        if self.cfg.spatial_threshold is not None:
            return self.cfg.spatial_threshold
        if label not in cache:
            model_a, record_a = self.trained(spec, 0)
            model_b, record_b = self.trained(spec, 0, seed=self.train_cfg.seed + 1)
            sequences = self.dataset.sequences(record_a.item_ids)
            a = self.captured(model_a, record_a, sequences)
            b = self.captured(model_b, record_b, sequences)
            cache[label] = calibrate_spatial_threshold(
                {k: v.spatial for k, v in a.items()}, {k: v.spatial for k, v in b.items()},
                self.cfg.calibration_percentile, self.cfg.divergence_scale,
            )
            logger.info(f"Calibrated spatial threshold for {label}: {cache[label]:.4f}")
        return cache[label]

    def run_wp2(self) -> CampaignResult:
        firsts, seconds, divergences, refs = {}, {}, {}, {}
        tukey: Dict[str, Any] = {}
        observations: List[Dict[str, Any]] = []
        for label, spec in self.specs.items():
            nc_spec = spec.noncontextual()
            maes: Dict[str, List[float]] = {"NC-NC": [], "C-NC": [], "U-C": []}
            reports: List[DivergenceReport] = []
            run_refs: List[str] = []
            for fold in range(self.cfg.folds):
                ctx_model, ctx_record = self.trained(spec, fold)
                nc_model, nc_record = self.trained(nc_spec, fold)
                sequences = self.dataset.sequences(nc_record.item_ids)
                own = self.captured(nc_model, nc_record, sequences)
                donors = self.captured(ctx_model, ctx_record, sequences)
                hosted = transplant(nc_model, donors, donor_run_id=ctx_record.run_id)
                c_nc = self.evaluated(hosted, nc_spec, WeightSource.transplanted(ctx_record.run_id), fold,
                                      nc_record)
                u_c = self.evaluated(self.frozen(ctx_model, spec), spec, WeightSource.uniform(self.cfg.seed),
                                     fold, ctx_record)
                moved = self.captured(hosted, c_nc, sequences)
                for seq in sequences:
                    reports.append(saliency_divergence(
                        own[seq.id].spatial, own[seq.id].temporal,
                        moved[seq.id].spatial, moved[seq.id].temporal, self.cfg.divergence_scale,
                    ))
                for source, record in (("NC-NC", nc_record), ("C-NC", c_nc), ("U-C", u_c)):
                    maes[source].append(record.mae)
                    kind, dims = split_label(label)
                    observations.append({"dimension": dims, "type": kind, "weights": source, "mae": record.mae})
                run_refs += [ctx_record.run_id, nc_record.run_id, c_nc.run_id, u_c.run_id]

            firsts[label], seconds[label] = wp2_comparisons(maes["NC-NC"], maes["C-NC"], maes["U-C"],
                                                            paired=self.cfg.paired)
            divergences[label] = mean_divergence(reports)
            refs[label] = run_refs
            try:
                tukey[label] = [
                    {"pair": [t.group_a, t.group_b], "mean_difference": t.mean_difference,
                     "result": t.result.to_dict()}
                    for t in tukey_hsd(list(maes.values()), labels=list(maes))
                ]
            except InputError as e:
                logger.warning(f"Skipping Tukey-HSD for {label}: {e}")

        labels = list(self.specs)
        adjusted_first = benjamini_hochberg([firsts[l].result.p_value for l in labels])
        adjusted_second = benjamini_hochberg([seconds[l].result.p_value for l in labels])
        thresholds_used: Dict[str, List[Optional[float]]] = {}
        calibrated: Dict[str, float] = {}
        verdicts = []
        for label, p_first, p_second in zip(labels, adjusted_first, adjusted_second):
            first = firsts[label].with_adjusted(p_first)
            second = seconds[label].with_adjusted(p_second)
            thresholds: Tuple[float, Optional[float]] = (self.cfg.temporal_threshold, None)
            if not first.significant(self.cfg.alpha):
                thresholds = (self.cfg.temporal_threshold, self.spatial_threshold(label, calibrated))
            thresholds_used[label] = list(thresholds)
            verdicts.append(wp2_decide(label, first, second, divergences[label], thresholds,
                                       self.cfg.alpha, refs[label]))

        anova_tables: Dict[str, Any] = {"interactions": None, "main_effects": None}
        try:
            for key, interactions in (("interactions", True), ("main_effects", False)):
                anova_tables[key] = anova(observations, ["dimension", "type", "weights"],
                                          interactions=interactions).to_dict()
        except InputError as e:
            logger.info(f"Skipping three-factor ANOVA: {e}")

        details = {"tukey": tukey, "anova": anova_tables, "thresholds": thresholds_used}
        self.store.save_verdicts(WP2_VERDICTS, {"verdicts": [v.to_dict() for v in verdicts], **details})
        return CampaignResult(verdicts, [], summary_report(verdicts), details)


def run_wp1(campaign_cfg: CampaignConfig, model_cfg: ModelConfig, train_cfg: TrainConfig,
            dataset: Dataset, store: ResultsStore) -> CampaignResult:
    return Campaign(campaign_cfg, model_cfg, train_cfg, dataset, store).run_wp1()


def run_wp2(campaign_cfg: CampaignConfig, model_cfg: ModelConfig, train_cfg: TrainConfig,
            dataset: Dataset, store: ResultsStore) -> CampaignResult:
    return Campaign(campaign_cfg, model_cfg, train_cfg, dataset, store).run_wp2()


def build_report(store: ResultsStore) -> Report:
    """
    Summary report from persisted verdicts. Every referenced run must still be
    in the store; nothing is recomputed.
    """
    verdicts: List[VerdictRecord] = []
    accuracy: List[AccuracyComparison] = []
    referenced: List[str] = []
    for name in (WP1_VERDICTS, WP2_VERDICTS):
        payload = store.load_verdicts(name)
        if payload is None:
            continue
        batch = [VerdictRecord.from_dict(v) for v in payload["verdicts"]]
        verdicts += batch
        referenced += [ref for v in batch for ref in v.run_refs]
        accuracy += [AccuracyComparison.from_dict(a) for a in payload.get("accuracy", [])]
        referenced += payload.get("accuracy_refs", [])
    missing = sorted({ref for ref in referenced if not store.has_run(ref)})
    if missing:
        raise RunLookupError(f"report references missing runs: {', '.join(missing)}")
    report = summary_report(verdicts, accuracy)
    store.write_text("report.json", report.to_json())
    store.write_text("report.txt", report.to_text())
    return report
