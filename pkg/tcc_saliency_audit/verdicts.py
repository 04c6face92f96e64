"""
WP1 / WP2 decision procedures and the summary report.

WP1: learned saliency must beat frozen uniform saliency.
WP2: contextual saliency transplanted into a non-contextual model must beat
both the non-contextual model's own saliency (comparison i) and the
uniform-saliency contextual model (comparison ii). When comparison (i) is not
significant the saliency divergence separates FAIL (weights diverge but do
not matter) from INCONCLUSIVE (weights barely differ).
"""

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InputError
from .logger import get_logger
from .metrics import DivergenceReport
from .stats import TestResult, benjamini_hochberg, paired_t, t_from_summary, welch_t

logger = get_logger(__name__)

TYPE_ORDER = ("B", "A", "C", "CA")
DIMS_ORDER = ("", "S", "T", "ST")


class TestKind(str, Enum):
    WP1 = "WP1"
    WP2 = "WP2"

    __test__ = False


class Outcome(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


SYMBOLS = {Outcome.PASS: "PASS", Outcome.FAIL: "FAIL", Outcome.INCONCLUSIVE: "INCONCL"}


@dataclass(frozen=True)
class SampleSummary:
    """Per-fold MAE summary used in place of raw samples"""
    mean: float
    sd: float
    n: int

    @classmethod
    def of(cls, sample: Sequence[float]) -> "SampleSummary":
        values = np.asarray(sample, dtype=np.float64)
        if values.size < 2:
            raise InputError(f"need at least 2 observations, got {values.size}")
        return cls(float(values.mean()), float(values.std(ddof=1)), int(values.size))


Sample = Union[Sequence[float], np.ndarray, SampleSummary]


def split_label(label: str) -> Tuple[str, str]:
    """'CA-ST' -> ('CA', 'ST'); 'B' -> ('B', '')"""
    kind, _, dims = label.partition("-")
    return kind, dims


def config_sort_key(label: str) -> Tuple[int, int, str]:
    kind, dims = split_label(label)
    kind_rank = TYPE_ORDER.index(kind) if kind in TYPE_ORDER else len(TYPE_ORDER)
    dims_rank = DIMS_ORDER.index(dims) if dims in DIMS_ORDER else len(DIMS_ORDER)
    return kind_rank, dims_rank, label


@dataclass(frozen=True)
class Comparison:
    """Challenger (expected lower MAE) against a reference"""
    label: str
    result: TestResult
    challenger_mean: float
    reference_mean: float

    @property
    def improves(self) -> bool:
        return self.challenger_mean < self.reference_mean

    def significant(self, alpha: float) -> bool:
        return self.improves and self.result.decisive_p < alpha

    def with_adjusted(self, adjusted_p: float) -> "Comparison":
        return Comparison(self.label, self.result.with_adjusted(adjusted_p),
                          self.challenger_mean, self.reference_mean)

    def to_dict(self) -> Dict[str, Any]:
        return {"label": self.label, "result": self.result.to_dict(),
                "challenger_mean": self.challenger_mean, "reference_mean": self.reference_mean}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Comparison":
        return cls(data["label"], TestResult.from_dict(data["result"]),
                   data["challenger_mean"], data["reference_mean"])


def _summary(sample: Sample) -> SampleSummary:
    return sample if isinstance(sample, SampleSummary) else SampleSummary.of(sample)


def compare(label: str, challenger: Sample, reference: Sample, paired: bool = False) -> Comparison:
    """Two-sided t-test of challenger vs reference (Welch unless ``paired``)"""
    a = _summary(challenger)
    b = _summary(reference)
    if a.sd == 0 and b.sd == 0:
        if a.mean != b.mean:
            raise InputError(f"{label}: both samples are constant with different means")
        result = TestResult(statistic=0.0, df=float(a.n + b.n - 2), p_value=1.0, effect_size=0.0)
    elif paired:
        if isinstance(challenger, SampleSummary) or isinstance(reference, SampleSummary):
            raise InputError(f"{label}: paired comparison needs raw per-fold samples")
        result = paired_t(challenger, reference)
    elif isinstance(challenger, SampleSummary) or isinstance(reference, SampleSummary):
        result = t_from_summary(a.mean, a.sd, a.n, b.mean, b.sd, b.n)
    else:
        result = welch_t(challenger, reference)
    return Comparison(label, result, a.mean, b.mean)


@dataclass
class VerdictRecord:
    config: str
    test: TestKind
    outcome: Outcome
    comparisons: List[Comparison]
    divergence: Optional[DivergenceReport] = None
    rationale: str = ""
    step: Optional[int] = None
    run_refs: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.test = TestKind(self.test)
        self.outcome = Outcome(self.outcome)
        if self.test is TestKind.WP1 and self.outcome is Outcome.INCONCLUSIVE:
            raise InputError("WP1 verdicts are PASS or FAIL")
        if not self.comparisons:
            raise InputError("a verdict must carry the comparisons that justify it")

    @property
    def key(self) -> Tuple[str, str]:
        return self.config, self.test.value

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "test": self.test.value,
            "outcome": self.outcome.value,
            "comparisons": [c.to_dict() for c in self.comparisons],
            "divergence": self.divergence.to_dict() if self.divergence else None,
            "rationale": self.rationale,
            "step": self.step,
            "run_refs": list(self.run_refs),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "VerdictRecord":
        divergence = data.get("divergence")
        return cls(
            config=data["config"],
            test=TestKind(data["test"]),
            outcome=Outcome(data["outcome"]),
            comparisons=[Comparison.from_dict(c) for c in data["comparisons"]],
            divergence=DivergenceReport.from_dict(divergence) if divergence else None,
            rationale=data.get("rationale", ""),
            step=data.get("step"),
            run_refs=list(data.get("run_refs", [])),
        )


# --------------------------------------------------------------------------
# WP1
# --------------------------------------------------------------------------


def wp1_comparison(learned: Sample, uniform: Sample, paired: bool = False) -> Comparison:
    return compare("learned vs uniform", learned, uniform, paired=paired)


def wp1_decide(config: str, comparison: Comparison, alpha: float = 0.05,
               run_refs: Sequence[str] = ()) -> VerdictRecord:
    p = comparison.result.decisive_p
    d = comparison.result.effect_size
    if comparison.significant(alpha):
        outcome = Outcome.PASS
        rationale = f"learned saliency beats frozen uniform (adjusted p={p:.4g} < {alpha}, d={d:.3g})"
    elif not comparison.improves:
        outcome = Outcome.FAIL
        rationale = "frozen uniform saliency is at least as accurate as learned saliency"
    else:
        outcome = Outcome.FAIL
        rationale = f"improvement over frozen uniform is not significant (adjusted p={p:.4g})"
    logger.info(f"WP1 {config}: {outcome.value}")
    return VerdictRecord(config, TestKind.WP1, outcome, [comparison], rationale=rationale,
                         run_refs=list(run_refs))


def wp1_verdict(learned: Sample, uniform: Sample, alpha: float = 0.05, config: str = "",
                adjusted_p: Optional[float] = None, paired: bool = False) -> VerdictRecord:
    """Single WP1 decision; ``adjusted_p`` comes from the campaign-wide BH family"""
    comparison = wp1_comparison(learned, uniform, paired=paired)
    if adjusted_p is None:
        adjusted_p = comparison.result.p_value
    return wp1_decide(config, comparison.with_adjusted(adjusted_p), alpha)


def wp1_batch(samples: Dict[str, Tuple[Sample, Sample]], alpha: float = 0.05, paired: bool = False,
              run_refs: Optional[Dict[str, Sequence[str]]] = None) -> List[VerdictRecord]:
    """WP1 over a family of configurations with Benjamini-Hochberg adjustment"""
    labels = list(samples)
    comparisons = [wp1_comparison(*samples[label], paired=paired) for label in labels]
    adjusted = benjamini_hochberg([c.result.p_value for c in comparisons])
    refs = run_refs or {}
    return [wp1_decide(label, c.with_adjusted(p), alpha, refs.get(label, ()))
            for label, c, p in zip(labels, comparisons, adjusted)]


# --------------------------------------------------------------------------
# WP2
# --------------------------------------------------------------------------


def divergence_is_high(divergence: DivergenceReport, dims: str,
                       thresholds: Tuple[float, Optional[float]]) -> bool:
    """Every dimension under audit must exceed its threshold"""
    temporal_threshold, spatial_threshold = thresholds
    checks = []
    if dims in ("S", "ST"):
        if spatial_threshold is None:
            raise InputError("a spatial divergence threshold is required (calibrate one first)")
        checks.append(divergence.spatial > spatial_threshold)
    if dims in ("T", "ST"):
        checks.append(divergence.temporal > temporal_threshold)
    if not checks:
        raise InputError(f"no saliency dimension in {dims!r}")
    return all(checks)


def wp2_comparisons(mae_nc_nc: Sample, mae_c_nc: Sample, mae_u_c: Sample,
                    paired: bool = False) -> Tuple[Comparison, Comparison]:
    first = compare("transplanted vs non-contextual", mae_c_nc, mae_nc_nc, paired=paired)
    second = compare("transplanted vs uniform", mae_c_nc, mae_u_c, paired=paired)
    return first, second


def wp2_decide(config: str, first: Comparison, second: Comparison,
               divergence: Optional[DivergenceReport], thresholds: Tuple[float, Optional[float]],
               alpha: float = 0.05, run_refs: Sequence[str] = ()) -> VerdictRecord:
    _, dims = split_label(config)
    refs = list(run_refs)
    if not first.significant(alpha):
        if divergence is None:
            raise InputError(f"WP2 {config}: divergence is needed when comparison (i) is not significant")
        if divergence_is_high(divergence, dims, thresholds):
            outcome, step = Outcome.FAIL, 1
            rationale = ("comparison (i) not significant while saliency diverges: "
                         "the weights are not involved in the decision")
        else:
            outcome, step = Outcome.INCONCLUSIVE, 1
            rationale = "comparison (i) not significant and saliency divergence is low"
        logger.info(f"WP2 {config}: {outcome.value} at step {step}")
        return VerdictRecord(config, TestKind.WP2, outcome, [first, second], divergence, rationale, step, refs)

    if second.significant(alpha):
        outcome, step = Outcome.PASS, None
        rationale = "transplanted saliency beats both non-contextual and uniform saliency"
    else:
        outcome, step = Outcome.FAIL, 2
        rationale = "transplanted saliency does not beat the uniform-saliency contextual model"
    logger.info(f"WP2 {config}: {outcome.value}")
    return VerdictRecord(config, TestKind.WP2, outcome, [first, second], divergence, rationale, step, refs)


def wp2_verdict(mae_nc_nc: Sample, mae_c_nc: Sample, mae_u_c: Sample,
                divergence: Optional[DivergenceReport], thresholds: Tuple[float, Optional[float]],
                alpha: float = 0.05, config: str = "", paired: bool = False) -> VerdictRecord:
    first, second = wp2_comparisons(mae_nc_nc, mae_c_nc, mae_u_c, paired=paired)
    return wp2_decide(config, first, second, divergence, thresholds, alpha)


# --------------------------------------------------------------------------
# Baseline accuracy and summary report
# --------------------------------------------------------------------------


@dataclass
class AccuracyComparison:
    config: str
    comparison: Comparison
    alpha: float = 0.05

    @property
    def cell(self) -> str:
        if not self.comparison.result.decisive_p < self.alpha:
            return "n.s."
        return "better" if self.comparison.improves else "worse"

    def to_dict(self) -> Dict[str, Any]:
        return {"config": self.config, "comparison": self.comparison.to_dict(), "alpha": self.alpha,
                "cell": self.cell}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AccuracyComparison":
        return cls(data["config"], Comparison.from_dict(data["comparison"]), data.get("alpha", 0.05))


def accuracy_vs_baseline(config: str, learned: Sample, baseline: Sample, alpha: float = 0.05,
                         paired: bool = False) -> AccuracyComparison:
    return AccuracyComparison(config, compare("learned vs baseline", learned, baseline, paired), alpha)


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{value:.4f}"


@dataclass
class Report:
    verdicts: List[VerdictRecord]
    accuracy: List[AccuracyComparison]

    @property
    def configs(self) -> List[str]:
        labels = {v.config for v in self.verdicts} | {a.config for a in self.accuracy}
        return sorted(labels, key=config_sort_key)

    def verdict(self, config: str, test: TestKind) -> Optional[VerdictRecord]:
        for v in self.verdicts:
            if v.config == config and v.test is test:
                return v
        return None

    def outcomes(self, test: TestKind) -> Dict[str, Outcome]:
        return {v.config: v.outcome for v in self.verdicts if v.test is test}

    def passing(self, test: TestKind) -> List[str]:
        return sorted((c for c, o in self.outcomes(test).items() if o is Outcome.PASS), key=config_sort_key)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "configs": self.configs,
            "verdicts": [v.to_dict() for v in sorted(self.verdicts, key=lambda v: (config_sort_key(v.config), v.test.value))],
            "accuracy": [a.to_dict() for a in sorted(self.accuracy, key=lambda a: config_sort_key(a.config))],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        header = f"{'config':<8}{'vs baseline':<24}{'WP1':<32}{'WP2':<40}"
        lines = [header, "-" * len(header)]
        for config in self.configs:
            accuracy = next((a for a in self.accuracy if a.config == config), None)
            acc_cell = "-" if accuracy is None else f"{accuracy.cell} (p={_fmt(accuracy.comparison.result.decisive_p)})"
            wp1 = self.verdict(config, TestKind.WP1)
            wp1_cell = "-"
            if wp1 is not None:
                result = wp1.comparisons[0].result
                wp1_cell = f"{SYMBOLS[wp1.outcome]} (p={_fmt(result.decisive_p)}, d={_fmt(result.effect_size)})"
            wp2 = self.verdict(config, TestKind.WP2)
            wp2_cell = "-"
            if wp2 is not None:
                stage = f"@{wp2.step}" if wp2.step else ""
                p_i = wp2.comparisons[0].result.decisive_p
                p_ii = wp2.comparisons[1].result.decisive_p
                wp2_cell = f"{SYMBOLS[wp2.outcome]}{stage} (p_i={_fmt(p_i)}, p_ii={_fmt(p_ii)})"
            lines.append(f"{config:<8}{acc_cell:<24}{wp1_cell:<32}{wp2_cell:<40}".rstrip())
        return "\n".join(lines) + "\n"


def summary_report(verdicts: Sequence[VerdictRecord],
                   accuracy_comparisons: Sequence[AccuracyComparison] = ()) -> Report:
    seen = set()
    for v in verdicts:
        if v.key in seen:
            raise InputError(f"duplicate verdict for {v.config} / {v.test.value}")
        seen.add(v.key)
    accuracy_configs = [a.config for a in accuracy_comparisons]
    if len(set(accuracy_configs)) != len(accuracy_configs):
        raise InputError("duplicate accuracy comparison")
    return Report(list(verdicts), list(accuracy_comparisons))
