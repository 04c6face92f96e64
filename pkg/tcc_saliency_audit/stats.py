"""
Statistical engine: t-tests, Benjamini-Hochberg, Cohen's d, factorial ANOVA
and Tukey-HSD.

Student-t tail probabilities come from the regularized incomplete beta
function; the studentized range CDF is integrated numerically.
"""

import math
from dataclasses import asdict, dataclass, replace
from itertools import combinations
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import betainc, fdtrc, gammaln, ndtr

from .errors import InputError


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float
    p_value: float
    adjusted_p: Optional[float] = None
    effect_size: Optional[float] = None

    # keeps pytest from collecting this class
    __test__ = False

    def with_adjusted(self, adjusted_p: float) -> "TestResult":
        return replace(self, adjusted_p=adjusted_p)

    @property
    def decisive_p(self) -> float:
        return self.p_value if self.adjusted_p is None else self.adjusted_p

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TestResult":
        return cls(**{k: data.get(k) for k in cls.__dataclass_fields__ if k != "__test__"})


# --------------------------------------------------------------------------
# Student t
# --------------------------------------------------------------------------


def student_t_cdf(t: float, df: float) -> float:
    if df <= 0:
        raise InputError(f"degrees of freedom must be positive, got {df}")
    if t == 0:
        return 0.5
    tail = 0.5 * float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return 1.0 - tail if t > 0 else tail


def two_sided_p(t: float, df: float) -> float:
    if df <= 0:
        raise InputError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(t):
        return 0.0
    return min(1.0, max(0.0, float(betainc(df / 2.0, 0.5, df / (df + t * t)))))


def _moments(sample: Sequence[float], name: str) -> tuple:
    values = np.asarray(sample, dtype=np.float64).reshape(-1)
    if values.size < 2:
        raise InputError(f"sample {name} needs at least 2 observations, got {values.size}")
    return float(values.mean()), float(values.var(ddof=1)), int(values.size)


def _welch(mean_a: float, var_a: float, n_a: int, mean_b: float, var_b: float, n_b: int) -> TestResult:
    se_a = var_a / n_a
    se_b = var_b / n_b
    se = se_a + se_b
    if se == 0:
        raise InputError("Welch t-test is undefined when both samples have zero variance")
    t = (mean_a - mean_b) / math.sqrt(se)
    df = se * se / (se_a * se_a / (n_a - 1) + se_b * se_b / (n_b - 1))
    effect = cohens_d(mean_a, math.sqrt(var_a), mean_b, math.sqrt(var_b))
    return TestResult(statistic=t, df=df, p_value=two_sided_p(t, df), effect_size=effect)


def welch_t(sample_a: Sequence[float], sample_b: Sequence[float]) -> TestResult:
    """Unpaired two-sided Welch t-test of A - B"""
    mean_a, var_a, n_a = _moments(sample_a, "A")
    mean_b, var_b, n_b = _moments(sample_b, "B")
    return _welch(mean_a, var_a, n_a, mean_b, var_b, n_b)


def t_from_summary(mean_a: float, sd_a: float, n_a: int,
                   mean_b: float, sd_b: float, n_b: int) -> TestResult:
    """Welch t-test from (mean, sd, n) summaries"""
    if n_a < 2 or n_b < 2:
        raise InputError(f"summaries need n >= 2, got {n_a} and {n_b}")
    if sd_a < 0 or sd_b < 0:
        raise InputError("standard deviations must be nonnegative")
    if sd_a == 0 and sd_b == 0:
        raise InputError("both standard deviations are zero")
    return _welch(mean_a, sd_a * sd_a, n_a, mean_b, sd_b * sd_b, n_b)


def pooled_t(sample_a: Sequence[float], sample_b: Sequence[float]) -> TestResult:
    """Student t-test with pooled variance"""
    mean_a, var_a, n_a = _moments(sample_a, "A")
    mean_b, var_b, n_b = _moments(sample_b, "B")
    df = n_a + n_b - 2
    pooled = ((n_a - 1) * var_a + (n_b - 1) * var_b) / df
    if pooled == 0:
        raise InputError("pooled t-test is undefined with zero variance")
    t = (mean_a - mean_b) / math.sqrt(pooled * (1.0 / n_a + 1.0 / n_b))
    return TestResult(statistic=t, df=float(df), p_value=two_sided_p(t, df),
                      effect_size=cohens_d(mean_a, math.sqrt(var_a), mean_b, math.sqrt(var_b)))


def paired_t(sample_a: Sequence[float], sample_b: Sequence[float]) -> TestResult:
    """Paired t-test on per-fold differences A - B"""
    a = np.asarray(sample_a, dtype=np.float64).reshape(-1)
    b = np.asarray(sample_b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise InputError(f"paired samples differ in length: {a.size} vs {b.size}")
    mean_d, var_d, n = _moments(a - b, "A - B")
    if var_d == 0:
        if mean_d == 0:
            return TestResult(statistic=0.0, df=float(n - 1), p_value=1.0, effect_size=0.0)
        raise InputError("paired t-test is undefined for constant nonzero differences")
    t = mean_d / math.sqrt(var_d / n)
    return TestResult(statistic=t, df=float(n - 1), p_value=two_sided_p(t, n - 1),
                      effect_size=cohens_d(float(a.mean()), float(a.std(ddof=1)),
                                           float(b.mean()), float(b.std(ddof=1))))


def cohens_d(mean_a: float, sd_a: float, mean_b: float, sd_b: float) -> float:
    """|mean_a - mean_b| over the root mean square of the two sds"""
    spread = math.sqrt((sd_a * sd_a + sd_b * sd_b) / 2.0)
    if spread == 0:
        if mean_a == mean_b:
            return 0.0
        raise InputError("Cohen's d is undefined for unequal means with zero spread")
    return abs(mean_a - mean_b) / spread


# --------------------------------------------------------------------------
# Multiple comparisons
# --------------------------------------------------------------------------


def benjamini_hochberg(p_values: Sequence[float]) -> List[float]:
    """Step-up adjusted p-values, returned in input order"""
    p = np.asarray(p_values, dtype=np.float64).reshape(-1)
    if p.size == 0:
        return []
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise InputError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    adjusted = np.empty(m)
    adjusted[order] = np.minimum(adjusted_sorted, 1.0)
    return adjusted.tolist()


# --------------------------------------------------------------------------
# ANOVA
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AnovaRow:
    source: str
    sum_squares: float
    df: float
    mean_square: float
    f_value: Optional[float] = None
    p_value: Optional[float] = None


@dataclass
class AnovaTable:
    rows: List[AnovaRow]
    residual: AnovaRow
    total_sum_squares: float

    def row(self, source: str) -> AnovaRow:
        for row in self.rows:
            if row.source == source:
                return row
        raise KeyError(source)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rows": [asdict(r) for r in self.rows],
            "residual": asdict(self.residual),
            "total_sum_squares": self.total_sum_squares,
        }


def anova(observations: Union[pd.DataFrame, Sequence[Mapping[str, Any]]], factors: Sequence[str],
          response: str = "mae", interactions: bool = True) -> AnovaTable:
    """
    Fixed-effects ANOVA on a balanced full-factorial design: main effects plus
    (optionally) all two-way interactions. Higher-order interactions are left
    in the residual.
    """
    frame = observations if isinstance(observations, pd.DataFrame) else pd.DataFrame(list(observations))
    factors = list(factors)
    if not factors:
        raise InputError("anova needs at least one factor")
    missing = [c for c in factors + [response] if c not in frame.columns]
    if missing:
        raise InputError(f"observations lack columns {missing}")

    levels = {f: sorted(frame[f].unique(), key=str) for f in factors}
    cell_counts = frame.groupby(factors).size()
    expected_cells = int(np.prod([len(v) for v in levels.values()]))
    if len(cell_counts) != expected_cells or cell_counts.nunique() != 1:
        raise InputError("anova requires a balanced full-factorial design")
    if int(cell_counts.iloc[0]) < 2:
        raise InputError("anova requires at least 2 replicates per cell")

    y = frame[response].to_numpy(dtype=np.float64)
    grand = float(y.mean())
    total_ss = float(((y - grand) ** 2).sum())

    def effect_ss(columns: List[str]) -> float:
        grouped = frame.groupby(columns)[response].agg(["mean", "size"])
        return float((grouped["size"] * (grouped["mean"] - grand) ** 2).sum())

    components: List[tuple] = []
    main_ss: Dict[str, float] = {}
    for factor in factors:
        main_ss[factor] = effect_ss([factor])
        components.append((factor, main_ss[factor], len(levels[factor]) - 1))
    if interactions:
        for a, b in combinations(factors, 2):
            ss = effect_ss([a, b]) - main_ss[a] - main_ss[b]
            components.append((f"{a}:{b}", max(ss, 0.0), (len(levels[a]) - 1) * (len(levels[b]) - 1)))

    model_ss = sum(c[1] for c in components)
    model_df = sum(c[2] for c in components)
    residual_df = len(y) - 1 - model_df
    residual_ss = max(total_ss - model_ss, 0.0)
    residual_ms = residual_ss / residual_df
    residual = AnovaRow("residual", residual_ss, float(residual_df), residual_ms)

    rows = []
    for source, ss, df in components:
        ms = ss / df if df > 0 else 0.0
        if ms == 0:
            f_value, p_value = 0.0, 1.0
        elif residual_ms == 0:
            f_value, p_value = math.inf, 0.0
        else:
            f_value = ms / residual_ms
            p_value = float(fdtrc(df, residual_df, f_value))
        rows.append(AnovaRow(source, ss, float(df), ms, f_value, p_value))
    return AnovaTable(rows=rows, residual=residual, total_sum_squares=total_ss)


# --------------------------------------------------------------------------
# Studentized range and Tukey-HSD
# --------------------------------------------------------------------------


def _range_cdf_normal(w: float, k: int) -> float:
    """P(range of k standard normals <= w)"""
    if w <= 0:
        return 0.0

    def integrand(z: float) -> float:
        return math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) * (ndtr(z) - ndtr(z - w)) ** (k - 1)

    value, _ = quad(integrand, -8.5, 8.5, epsabs=1e-11, limit=200)
    return min(1.0, k * value)


def studentized_range_cdf(q: float, k: int, df: float) -> float:
    """P(Q <= q) for k groups and df error degrees of freedom"""
    if k < 2:
        raise InputError(f"studentized range needs k >= 2, got {k}")
    if df <= 0:
        raise InputError(f"degrees of freedom must be positive, got {df}")
    if q <= 0:
        return 0.0
    log_norm = (df / 2.0) * math.log(df) - gammaln(df / 2.0) - (df / 2.0 - 1.0) * math.log(2.0)

    def integrand(s: float) -> float:
        if s <= 0:
            return 0.0
        density = math.exp(log_norm + (df - 1.0) * math.log(s) - df * s * s / 2.0)
        return density * _range_cdf_normal(q * s, k)

    upper = 1.0 + 15.0 / math.sqrt(df)
    value, _ = quad(integrand, 0.0, upper, epsabs=1e-9, limit=200, points=[1.0])
    return min(1.0, max(0.0, value))


def studentized_range_critical(k: int, df: float, alpha: float = 0.05) -> float:
    if not 0 < alpha < 1:
        raise InputError(f"alpha must be in (0, 1), got {alpha}")
    return float(brentq(lambda q: studentized_range_cdf(q, k, df) - (1.0 - alpha), 1e-6, 100.0, xtol=1e-8))


@dataclass(frozen=True)
class TukeyComparison:
    group_a: str
    group_b: str
    mean_difference: float
    result: TestResult


def tukey_hsd(groups: Sequence[Sequence[float]], labels: Optional[Sequence[str]] = None
              ) -> List[TukeyComparison]:
    """All pairwise comparisons with studentized-range adjusted p-values"""
    if len(groups) < 2:
        raise InputError("Tukey-HSD needs at least 2 groups")
    samples = [np.asarray(g, dtype=np.float64).reshape(-1) for g in groups]
    if any(s.size < 2 for s in samples):
        raise InputError("every Tukey-HSD group needs at least 2 observations")
    names = list(labels) if labels is not None else [str(i) for i in range(len(samples))]
    k = len(samples)
    total = sum(s.size for s in samples)
    df = float(total - k)
    mse = sum(float(((s - s.mean()) ** 2).sum()) for s in samples) / df

    comparisons = []
    for i, j in combinations(range(k), 2):
        a, b = samples[i], samples[j]
        difference = float(a.mean() - b.mean())
        if difference == 0:
            q, p = 0.0, 1.0
        elif mse == 0:
            raise InputError("Tukey-HSD is undefined with zero within-group variance")
        else:
            q = abs(difference) / math.sqrt(mse / 2.0 * (1.0 / a.size + 1.0 / b.size))
            p = 1.0 - studentized_range_cdf(q, k, df)
        comparisons.append(TukeyComparison(
            names[i], names[j], difference,
            TestResult(statistic=q, df=df, p_value=min(1.0, max(0.0, p)), adjusted_p=min(1.0, max(0.0, p))),
        ))
    return comparisons
