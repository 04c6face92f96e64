"""
Angular-error statistics and saliency divergence metrics
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.ndimage import correlate
from scipy.special import rel_entr

from .errors import InputError
from .model_zoo import TemporalWeights

BCE_EPS = 1e-7
SSIM_SIGMA = 1.5
SSIM_WINDOW = 11
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
LN2 = math.log(2.0)

DIVERGENCE_SCALES = ("BOUNDED", "PAPER_SCALE")


# --------------------------------------------------------------------------
# Angular error
# --------------------------------------------------------------------------


def angular_error(c_hat: Sequence[float], c_gt: Sequence[float]) -> float:
    """Angle in degrees between two illuminant vectors"""
    a = np.asarray(c_hat, dtype=np.float64).reshape(-1)
    b = np.asarray(c_gt, dtype=np.float64).reshape(-1)
    if a.shape != (3,) or b.shape != (3,):
        raise InputError(f"illuminants must be 3-vectors, got {a.shape} and {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise InputError("angular error is undefined for a zero vector")
    cosine = float(np.dot(a, b)) / (norm_a * norm_b)
    return math.degrees(math.acos(min(1.0, max(-1.0, cosine))))


@dataclass(frozen=True)
class ErrorSummary:
    mean: float
    median: float
    trimean: float
    best25: float
    worst25: float
    worst5: float
    n: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ErrorSummary":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__})

    def matches(self, other: "ErrorSummary", tolerance: float = 1e-9) -> bool:
        if self.n != other.n:
            return False
        keys = ("mean", "median", "trimean", "best25", "worst25", "worst5")
        return all(abs(getattr(self, k) - getattr(other, k)) <= tolerance for k in keys)


def summarize_errors(errors: Sequence[float]) -> ErrorSummary:
    """
    Six-statistic summary. Quantiles interpolate linearly at (n - 1) * p;
    best25 / worst25 average the ceil(n / 4) lowest / highest errors and
    worst5 the ceil(n / 20) highest.
    """
    values = np.sort(np.asarray(errors, dtype=np.float64).reshape(-1))
    n = int(values.shape[0])
    if n == 0:
        raise InputError("cannot summarise an empty error list")
    q1, q2, q3 = np.quantile(values, [0.25, 0.5, 0.75])
    quarter = math.ceil(n / 4)
    twentieth = math.ceil(n / 20)
    return ErrorSummary(
        mean=float(values.mean()),
        median=float(q2),
        trimean=float((q1 + 2.0 * q2 + q3) / 4.0),
        best25=float(values[:quarter].mean()),
        worst25=float(values[-quarter:].mean()),
        worst5=float(values[-twentieth:].mean()),
        n=n,
    )


# --------------------------------------------------------------------------
# Mask similarity
# --------------------------------------------------------------------------


def _pair(a: Any, b: Any, what: str) -> tuple:
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise InputError(f"{what}: shape mismatch {x.shape} vs {y.shape}")
    return x, y


def _distribution(values: np.ndarray) -> np.ndarray:
    if np.any(values < 0):
        raise InputError("distributions must be nonnegative")
    total = values.sum()
    if total <= 0:
        return np.full(values.shape, 1.0 / values.size)
    return values / total


def jsd(p: Sequence[float], q: Sequence[float]) -> float:
    """Jensen-Shannon divergence in nats, inputs normalised to sum 1"""
    x, y = _pair(np.ravel(p), np.ravel(q), "jsd")
    if x.size == 0:
        raise InputError("jsd of empty distributions")
    x = _distribution(x)
    y = _distribution(y)
    m = (x + y) / 2.0
    value = 0.5 * (float(rel_entr(x, m).sum()) + float(rel_entr(y, m).sum()))
    return min(max(value, 0.0), LN2)


def bce(a: Any, b: Any, reduction: str = "mean") -> float:
    """Binary cross-entropy of target ``a`` under prediction ``b`` (asymmetric)"""
    target, prediction = _pair(a, b, "bce")
    prediction = np.clip(prediction, BCE_EPS, 1.0 - BCE_EPS)
    losses = -(target * np.log(prediction) + (1.0 - target) * np.log(1.0 - prediction))
    return float(losses.sum() if reduction == "sum" else losses.mean())


def _gaussian_window(size: int) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(offsets ** 2) / (2.0 * SSIM_SIGMA ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a: Any, b: Any) -> float:
    """Mean SSIM with a Gaussian window (sigma 1.5, width 11 truncated to the mask)"""
    x, y = _pair(a, b, "ssim")
    if x.ndim != 2 or x.size == 0:
        raise InputError(f"ssim expects a non-empty 2-D mask, got shape {x.shape}")
    size = min(SSIM_WINDOW, *x.shape)
    if size % 2 == 0:
        size -= 1
    window = _gaussian_window(size)
    mu_x = correlate(x, window, mode="reflect")
    mu_y = correlate(y, window, mode="reflect")
    sigma_x = correlate(x * x, window, mode="reflect") - mu_x * mu_x
    sigma_y = correlate(y * y, window, mode="reflect") - mu_y * mu_y
    sigma_xy = correlate(x * y, window, mode="reflect") - mu_x * mu_y
    numerator = (2 * mu_x * mu_y + SSIM_C1) * (2 * sigma_xy + SSIM_C2)
    denominator = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sigma_x + sigma_y + SSIM_C2)
    return float((numerator / denominator).mean())


def soft_iou(a: Any, b: Any) -> float:
    """sum(min) / sum(max); two all-zero masks count as identical"""
    x, y = _pair(a, b, "soft_iou")
    union = float(np.maximum(x, y).sum())
    if union == 0.0:
        return 1.0
    return float(np.minimum(x, y).sum()) / union


# --------------------------------------------------------------------------
# Divergences
# --------------------------------------------------------------------------


@dataclass
class DivergenceReport:
    temporal: float = 0.0
    spatial: float = 0.0
    spatiotemporal: float = 0.0
    per_frame_spatial: List[float] = field(default_factory=list)
    scale: str = "BOUNDED"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DivergenceReport":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def _check_scale(scale: str) -> str:
    scale = scale.upper()
    if scale not in DIVERGENCE_SCALES:
        raise InputError(f"unknown divergence scale {scale!r}")
    return scale


def spatial_frame_divergence(a: Any, b: Any, scale: str = "BOUNDED") -> float:
    """Excess cross-entropy + (1 - SSIM) + (1 - soft IoU) for one frame"""
    reduction = "sum" if _check_scale(scale) == "PAPER_SCALE" else "mean"
    excess = bce(a, b, reduction) - bce(a, a, reduction)
    return max(0.0, excess + (1.0 - ssim(a, b)) + (1.0 - soft_iou(a, b)))


def spatial_divergence_terms(masks_a: Sequence[Any], masks_b: Sequence[Any],
                             scale: str = "BOUNDED") -> List[float]:
    if len(masks_a) != len(masks_b):
        raise InputError(f"mask lists differ in length: {len(masks_a)} vs {len(masks_b)}")
    return [spatial_frame_divergence(a, b, scale) for a, b in zip(masks_a, masks_b)]


def spatial_divergence(masks_a: Sequence[Any], masks_b: Sequence[Any], scale: str = "BOUNDED") -> float:
    """BOUNDED: mean over frames. PAPER_SCALE: sum over frames with pixel-summed BCE."""
    scale = _check_scale(scale)
    terms = spatial_divergence_terms(masks_a, masks_b, scale)
    if not terms:
        return 0.0
    return float(np.sum(terms)) if scale == "PAPER_SCALE" else float(np.mean(terms))


def temporal_divergence(a: TemporalWeights, b: TemporalWeights) -> float:
    if len(a) != len(b):
        raise InputError(f"temporal weights differ in length: {len(a)} vs {len(b)}")
    return jsd(a.weights, b.weights)


def saliency_divergence(masks_a: Sequence[Any], weights_a: Optional[TemporalWeights],
                        masks_b: Sequence[Any], weights_b: Optional[TemporalWeights],
                        scale: str = "BOUNDED") -> DivergenceReport:
    """Divergence between the saliency two models produced for one input"""
    scale = _check_scale(scale)
    if (weights_a is None) != (weights_b is None):
        raise InputError("temporal weights present for only one side")
    per_frame = spatial_divergence_terms(masks_a, masks_b, scale) if masks_a or masks_b else []
    if per_frame:
        spatial = float(np.sum(per_frame)) if scale == "PAPER_SCALE" else float(np.mean(per_frame))
    else:
        spatial = 0.0
    temporal = temporal_divergence(weights_a, weights_b) if weights_a is not None else 0.0
    return DivergenceReport(temporal=temporal, spatial=spatial, spatiotemporal=temporal + spatial,
                            per_frame_spatial=per_frame, scale=scale)


def mean_divergence(reports: Sequence[DivergenceReport]) -> DivergenceReport:
    """Average over test items"""
    if not reports:
        raise InputError("no divergence reports to average")
    temporal = float(np.mean([r.temporal for r in reports]))
    spatial = float(np.mean([r.spatial for r in reports]))
    return DivergenceReport(temporal=temporal, spatial=spatial, spatiotemporal=temporal + spatial,
                            scale=reports[0].scale)
