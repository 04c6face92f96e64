"""
Saliency interventions: frozen uniform saliency, transplanted contextual
saliency, mask capture and mask files.

Wrappers never touch the wrapped model's parameters; they hand the forward
pass an override that replaces learned masks / weights for one input.
"""

import os
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from .data_io import FrameSequence
from .errors import ConfigurationError, InputError, OrchestrationError
from .logger import get_logger
from .model_zoo import SaliencyDims, SaliencyModel, TemporalWeights, predict
from .tensor_io import read_tensor, write_tensor

logger = get_logger(__name__)


class WeightKind(str, Enum):
    LEARNED = "LEARNED"
    UNIFORM_FROZEN = "UNIFORM_FROZEN"
    TRANSPLANTED_CONTEXTUAL = "TRANSPLANTED_CONTEXTUAL"


@dataclass(frozen=True)
class WeightSource:
    kind: WeightKind = WeightKind.LEARNED
    seed: Optional[int] = None
    donor_run_id: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", WeightKind(self.kind))
        if (self.seed is not None) != (self.kind is WeightKind.UNIFORM_FROZEN):
            raise ConfigurationError("seed is required for, and only for, UNIFORM_FROZEN weights")
        if (self.donor_run_id is not None) != (self.kind is WeightKind.TRANSPLANTED_CONTEXTUAL):
            raise ConfigurationError(
                "donor_run_id is required for, and only for, TRANSPLANTED_CONTEXTUAL weights"
            )

    @classmethod
    def learned(cls) -> "WeightSource":
        return cls()

    @classmethod
    def uniform(cls, seed: int) -> "WeightSource":
        return cls(WeightKind.UNIFORM_FROZEN, seed=seed)

    @classmethod
    def transplanted(cls, donor_run_id: str) -> "WeightSource":
        return cls(WeightKind.TRANSPLANTED_CONTEXTUAL, donor_run_id=donor_run_id)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "seed": self.seed, "donor_run_id": self.donor_run_id}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WeightSource":
        return cls(WeightKind(data["kind"]), seed=data.get("seed"), donor_run_id=data.get("donor_run_id"))


def item_index_for(seq: FrameSequence) -> int:
    """Stable per-input key for frozen draws"""
    return zlib.crc32(seq.id.encode("utf-8"))


def _dims_flags(dims: Union[str, SaliencyDims]) -> Tuple[bool, bool]:
    dims = SaliencyDims(dims)
    if dims is SaliencyDims.NONE:
        raise ConfigurationError("intervention needs at least one saliency dimension")
    return dims in (SaliencyDims.S, SaliencyDims.ST), dims in (SaliencyDims.T, SaliencyDims.ST)


# --------------------------------------------------------------------------
# Frozen uniform saliency
# --------------------------------------------------------------------------


class FrozenUniformOverride:
    def __init__(self, seed: int, item_index: int, spatial: bool, temporal: bool, renormalize: bool):
        self.seed = seed
        self.item_index = item_index
        self.spatial = spatial
        self.temporal = temporal
        self.renormalize = renormalize

    def spatial_draw(self, num_frames: int, height: int, width: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, self.item_index, 0])
        return rng.random((num_frames, height, width))

    def temporal_draw(self, num_frames: int) -> np.ndarray:
        weights = np.random.default_rng([self.seed, self.item_index, 1]).random(num_frames)
        return weights / weights.sum() if self.renormalize else weights

    def spatial_masks(self, num_frames: int, height: int, width: int,
                      like: torch.Tensor) -> Optional[torch.Tensor]:
        if not self.spatial:
            return None
        return torch.from_numpy(self.spatial_draw(num_frames, height, width)).to(like.dtype)

    def temporal_weights(self, num_frames: int, like: torch.Tensor) -> Optional[torch.Tensor]:
        if not self.temporal:
            return None
        return torch.from_numpy(self.temporal_draw(num_frames)).to(like.dtype)


class FrozenUniformModel:
    """Model whose saliency on ``dims`` is replaced by frozen U(0, 1) draws"""

    def __init__(self, base: SaliencyModel, dims: SaliencyDims, seed: int,
                 renormalize_attention: bool = True):
        self.base = base
        self.dims = SaliencyDims(dims)
        self.seed = seed
        self.spatial, self.temporal = _dims_flags(self.dims)
        # Confidence-derived temporal weights stay raw U(0, 1)
        self.renormalize = renormalize_attention and base.spec.temporal_kind == "attention"

    @property
    def spec(self):
        return self.base.spec

    @property
    def weight_source(self) -> WeightSource:
        return WeightSource.uniform(self.seed)

    def override_for(self, seq: FrameSequence, item_index: Optional[int] = None) -> FrozenUniformOverride:
        index = item_index_for(seq) if item_index is None else item_index
        return FrozenUniformOverride(self.seed, index, self.spatial, self.temporal, self.renormalize)


def freeze_uniform(model: SaliencyModel, dims: Union[str, SaliencyDims], seed: int,
                   renormalize_attention: bool = True) -> FrozenUniformModel:
    spatial, temporal = _dims_flags(dims)
    spec = model.spec
    if (spatial and not spec.has_spatial) or (temporal and not spec.has_temporal):
        raise ConfigurationError(
            f"cannot freeze {SaliencyDims(dims).value} saliency on a {spec.label} model"
        )
    logger.debug(f"Freezing {SaliencyDims(dims).value} saliency of {spec.label} (seed={seed})")
    return FrozenUniformModel(model, SaliencyDims(dims), seed, renormalize_attention)


# --------------------------------------------------------------------------
# Capture and transplant
# --------------------------------------------------------------------------


@dataclass
class DonorMasks:
    spatial: List[np.ndarray] = field(default_factory=list)
    temporal: Optional[TemporalWeights] = None

    def frame_counts(self) -> Dict[str, int]:
        """Frames covered by each kind of donor saliency present"""
        counts: Dict[str, int] = {}
        if self.spatial:
            counts["spatial"] = len(self.spatial)
        if self.temporal is not None:
            counts["temporal"] = len(self.temporal)
        return counts


def _base_of(model: Any) -> SaliencyModel:
    return model if isinstance(model, SaliencyModel) else model.base


def capture_masks(model: Any, seq: FrameSequence, item_index: Optional[int] = None
                  ) -> Tuple[List[np.ndarray], Optional[TemporalWeights]]:
    """Saliency exactly as used by the forward pass on ``seq``"""
    spec = _base_of(model).spec
    if not (spec.has_spatial or spec.has_temporal):
        raise ConfigurationError(f"{spec.label} model has no saliency to capture")
    prediction = predict(model, seq, item_index)
    return prediction.captured_spatial_masks, prediction.captured_temporal_weights


class TransplantOverride:
    def __init__(self, donor: DonorMasks):
        self.donor = donor

    def spatial_masks(self, num_frames: int, height: int, width: int,
                      like: torch.Tensor) -> Optional[torch.Tensor]:
        if not self.donor.spatial:
            return None
        masks = torch.from_numpy(np.stack(self.donor.spatial).astype(np.float64)).to(like.dtype)
        if masks.shape[-2:] != (height, width):
            masks = F.interpolate(masks.unsqueeze(0), size=(height, width), mode="bilinear",
                                  align_corners=False).squeeze(0).clamp(0.0, 1.0)
        return masks

    def temporal_weights(self, num_frames: int, like: torch.Tensor) -> Optional[torch.Tensor]:
        if self.donor.temporal is None:
            return None
        return torch.from_numpy(self.donor.temporal.weights).to(like.dtype)


class TransplantedModel:
    """Non-contextual host running on donor saliency captured from a contextual model"""

    def __init__(self, base: SaliencyModel, donors: Union[DonorMasks, Mapping[str, DonorMasks]],
                 donor_run_id: str = "inline"):
        self.base = base
        self.donors = donors
        self.donor_run_id = donor_run_id

    @property
    def spec(self):
        return self.base.spec

    @property
    def weight_source(self) -> WeightSource:
        return WeightSource.transplanted(self.donor_run_id)

    def override_for(self, seq: FrameSequence, item_index: Optional[int] = None) -> TransplantOverride:
        if isinstance(self.donors, DonorMasks):
            donor = self.donors
        elif seq.id in self.donors:
            donor = self.donors[seq.id]
        else:
            raise OrchestrationError(f"no donor masks for sequence {seq.id}")
        for kind, count in donor.frame_counts().items():
            if count != len(seq):
                raise InputError(f"donor {kind} saliency covers {count} frames, "
                                 f"sequence {seq.id} has {len(seq)}")
        return TransplantOverride(donor)


def transplant(nc_model: SaliencyModel, donor_masks: Union[DonorMasks, Mapping[str, DonorMasks]],
               donor_run_id: str = "inline") -> TransplantedModel:
    spec = nc_model.spec
    samples = [donor_masks] if isinstance(donor_masks, DonorMasks) else list(donor_masks.values())
    for donor in samples:
        if donor.spatial and not spec.has_spatial:
            raise ConfigurationError(f"spatial donor masks for a {spec.label} host without spatial saliency")
        if donor.temporal is not None and not spec.has_temporal:
            raise ConfigurationError(f"temporal donor weights for a {spec.label} host without temporal saliency")
        if donor.spatial and spec.spatial_contextual:
            raise ConfigurationError("spatial transplant needs a spatially non-contextual host")
        if donor.temporal is not None and spec.temporal_contextual:
            raise ConfigurationError("temporal transplant needs a temporally non-contextual host")
        lengths = {m.shape for m in donor.spatial}
        if len(lengths) > 1:
            raise InputError(f"donor spatial masks disagree in shape: {sorted(lengths)}")
        counts = donor.frame_counts()
        if len(set(counts.values())) > 1:
            raise InputError(f"donor saliency lengths disagree: {counts}")
    return TransplantedModel(nc_model, donor_masks, donor_run_id)


# --------------------------------------------------------------------------
# Mask files
# --------------------------------------------------------------------------


def mask_paths(directory: str, sequence_id: str) -> Tuple[str, str]:
    return (os.path.join(directory, f"{sequence_id}.spatial.tensor"),
            os.path.join(directory, f"{sequence_id}.temporal.tensor"))


def write_masks(directory: str, sequence_id: str, masks: List[np.ndarray],
                weights: Optional[TemporalWeights]) -> List[str]:
    """One tensor file per dimension; returns the files written"""
    spatial_path, temporal_path = mask_paths(directory, sequence_id)
    written = []
    if masks:
        write_tensor(spatial_path, np.stack(masks).astype(np.float32))
        written.append(spatial_path)
    if weights is not None:
        write_tensor(temporal_path, weights.weights.astype(np.float64))
        written.append(temporal_path)
    return written


def read_masks(directory: str, sequence_id: str, temporal_normalized: Optional[bool] = None) -> DonorMasks:
    """Inverse of write_masks; the normalised flag is inferred from the sum when not given"""
    spatial_path, temporal_path = mask_paths(directory, sequence_id)
    spatial: List[np.ndarray] = []
    if os.path.exists(spatial_path):
        spatial = list(read_tensor(spatial_path))
    temporal = None
    if os.path.exists(temporal_path):
        weights = read_tensor(temporal_path)
        normalized = temporal_normalized
        if normalized is None:
            normalized = bool(abs(weights.sum() - 1.0) <= 1e-6)
        temporal = TemporalWeights(weights, normalized=normalized)
    if not spatial and temporal is None:
        raise OrchestrationError(f"no mask files for {sequence_id} in {directory}")
    return DonorMasks(spatial=spatial, temporal=temporal)
