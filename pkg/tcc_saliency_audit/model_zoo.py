"""
Model zoo: CNN + ConvLSTM illuminant estimators augmented with saliency.

A model is assembled from four stages:
    encoder  -> per-frame features X_i (optionally with a confidence channel)
    spatial  -> mask MS_i (attention module or rescaled confidence)
    temporal -> Y_1..Y_T (ConvLSTM or per-timestep linear map) and weights MT
    head     -> global average pool + FC + clamp + L2 normalisation

Saliency types: A (attention), C (confidence), CA (confidence spatial +
attention temporal). Dimensions: S, T, ST. The baseline has neither.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data_io import FrameSequence
from .errors import ConfigurationError, InputError, NumericError, ShapeError
from .logger import get_logger

logger = get_logger(__name__)

CONFIDENCE_EPS = 1e-8


class SaliencyType(str, Enum):
    NONE = "NONE"
    A = "A"
    C = "C"
    CA = "CA"


class SaliencyDims(str, Enum):
    NONE = "NONE"
    S = "S"
    T = "T"
    ST = "ST"


class Backbone(str, Enum):
    TINY = "TINY"
    SQUEEZE_STYLE = "SQUEEZE_STYLE"


@dataclass(frozen=True)
class ModelSpec:
    """Which variant to build and how large it is"""
    saliency_type: SaliencyType = SaliencyType.NONE
    saliency_dims: SaliencyDims = SaliencyDims.NONE
    spatial_contextual: bool = True
    temporal_contextual: bool = True
    backbone: Backbone = Backbone.TINY
    hidden_size: int = 16
    kernel_size: int = 3
    attention_width: int = 16
    dense_noncontextual: bool = False
    input_size: Optional[Tuple[int, int]] = None

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "saliency_type", SaliencyType(self.saliency_type))
            object.__setattr__(self, "saliency_dims", SaliencyDims(self.saliency_dims))
            object.__setattr__(self, "backbone", Backbone(self.backbone))
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        if self.input_size is not None:
            object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))

    # ---- invariants -------------------------------------------------------

    def validate(self) -> None:
        none_type = self.saliency_type is SaliencyType.NONE
        none_dims = self.saliency_dims is SaliencyDims.NONE
        if none_type != none_dims:
            raise ConfigurationError(
                "saliency type NONE iff saliency dims NONE "
                f"(got {self.saliency_type.value}/{self.saliency_dims.value})"
            )
        if self.saliency_type is SaliencyType.CA and self.saliency_dims is not SaliencyDims.ST:
            raise ConfigurationError(
                f"CA requires saliency dims ST (got {self.saliency_dims.value})"
            )
        if self.hidden_size <= 0:
            raise ConfigurationError(f"hidden_size must be positive, got {self.hidden_size}")
        if self.kernel_size <= 0 or self.kernel_size % 2 == 0:
            raise ConfigurationError(f"kernel_size must be a positive odd integer, got {self.kernel_size}")
        if self.attention_width <= 0:
            raise ConfigurationError(f"attention_width must be positive, got {self.attention_width}")
        if self.dense_noncontextual and not self.spatial_contextual and self.input_size is None:
            raise ConfigurationError("dense non-contextual encoder needs a fixed input_size")

    # ---- derived properties -----------------------------------------------

    @property
    def has_spatial(self) -> bool:
        return self.saliency_dims in (SaliencyDims.S, SaliencyDims.ST)

    @property
    def has_temporal(self) -> bool:
        return self.saliency_dims in (SaliencyDims.T, SaliencyDims.ST)

    @property
    def spatial_kind(self) -> Optional[str]:
        if not self.has_spatial:
            return None
        return "attention" if self.saliency_type is SaliencyType.A else "confidence"

    @property
    def temporal_kind(self) -> Optional[str]:
        if not self.has_temporal:
            return None
        return "confidence" if self.saliency_type is SaliencyType.C else "attention"

    @property
    def uses_confidence(self) -> bool:
        return "confidence" in (self.spatial_kind, self.temporal_kind)

    @property
    def label(self) -> str:
        if self.saliency_type is SaliencyType.NONE:
            return "B"
        return f"{self.saliency_type.value}-{self.saliency_dims.value}"

    @property
    def is_contextual(self) -> bool:
        return self.spatial_contextual and self.temporal_contextual

    def noncontextual(self) -> "ModelSpec":
        """Ablation that swaps the layers of the audited dimension(s) for linear maps"""
        return replace(
            self,
            spatial_contextual=self.spatial_contextual and not self.has_spatial,
            temporal_contextual=self.temporal_contextual and not self.has_temporal,
        )

    # ---- serialisation ----------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        return {
            "saliency_type": self.saliency_type.value,
            "saliency_dims": self.saliency_dims.value,
            "spatial_contextual": self.spatial_contextual,
            "temporal_contextual": self.temporal_contextual,
            "backbone": self.backbone.value,
            "hidden_size": self.hidden_size,
            "kernel_size": self.kernel_size,
            "attention_width": self.attention_width,
            "dense_noncontextual": self.dense_noncontextual,
            "input_size": list(self.input_size) if self.input_size else None,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        if known.get("input_size") is not None:
            known["input_size"] = tuple(known["input_size"])
        return cls(**known)

    @classmethod
    def from_label(cls, label: str, **overrides: Any) -> "ModelSpec":
        """'B', 'A-S', 'C-ST', 'CA-ST' ..."""
        label = label.strip().upper()
        if label == "B":
            return cls(**overrides)
        try:
            kind, dims = label.split("-")
        except ValueError as e:
            raise ConfigurationError(f"malformed model label {label!r}") from e
        return cls(saliency_type=SaliencyType(kind), saliency_dims=SaliencyDims(dims), **overrides)

    @classmethod
    def paper_scale(cls, **overrides: Any) -> "ModelSpec":
        base = dict(backbone=Backbone.SQUEEZE_STYLE, hidden_size=128, kernel_size=5)
        base.update(overrides)
        return cls(**base)


@dataclass
class HiddenState:
    """ConvLSTM hidden (h) and cell (c) state"""
    h: torch.Tensor
    c: torch.Tensor

    def __post_init__(self) -> None:
        if self.h.shape != self.c.shape:
            raise ShapeError(f"hidden {tuple(self.h.shape)} and cell {tuple(self.c.shape)} differ")

    @classmethod
    def zeros(cls, hidden_size: int, height: int, width: int, batch: Optional[int] = None,
              like: Optional[torch.Tensor] = None) -> "HiddenState":
        shape = (hidden_size, height, width) if batch is None else (batch, hidden_size, height, width)
        kwargs = {} if like is None else {"dtype": like.dtype, "device": like.device}
        return cls(torch.zeros(shape, **kwargs), torch.zeros(shape, **kwargs))


@dataclass
class TemporalWeights:
    weights: np.ndarray
    normalized: bool

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)

    def __len__(self) -> int:
        return int(self.weights.shape[0])


@dataclass
class Prediction:
    illuminant: np.ndarray
    captured_spatial_masks: List[np.ndarray] = field(default_factory=list)
    captured_temporal_weights: Optional[TemporalWeights] = None


@dataclass
class ForwardOutput:
    illuminant: torch.Tensor
    spatial_masks: Optional[torch.Tensor] = None
    temporal_weights: Optional[torch.Tensor] = None
    temporal_normalized: bool = False
    raw_confidence: Optional[torch.Tensor] = None


class SaliencyOverride(Protocol):
    """Replaces learned saliency for a single input (batch of one)"""

    def spatial_masks(self, num_frames: int, height: int, width: int,
                      like: torch.Tensor) -> Optional[torch.Tensor]:
        ...

    def temporal_weights(self, num_frames: int, like: torch.Tensor) -> Optional[torch.Tensor]:
        ...


# --------------------------------------------------------------------------
# Encoders
# --------------------------------------------------------------------------


class Fire(nn.Module):
    """SqueezeNet fire module: 1x1 squeeze, parallel 1x1 / 3x3 expand"""

    def __init__(self, in_channels: int, squeeze: int, expand1x1: int, expand3x3: int):
        super().__init__()
        self.squeeze = nn.Conv2d(in_channels, squeeze, kernel_size=1)
        self.expand1x1 = nn.Conv2d(squeeze, expand1x1, kernel_size=1)
        self.expand3x3 = nn.Conv2d(squeeze, expand3x3, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.relu(self.squeeze(x))
        return torch.cat([F.relu(self.expand1x1(x)), F.relu(self.expand3x3(x))], dim=1)


def _tiny_trunk(out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(3, 16, kernel_size=3, stride=2, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(16, 16, kernel_size=3, stride=2, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(16, out_channels, kernel_size=3, stride=1, padding=1),
    )


def _squeeze_trunk(out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(3, 64, kernel_size=3, stride=2),
        nn.ReLU(inplace=True),
        nn.MaxPool2d(kernel_size=3, stride=2, ceil_mode=True),
        Fire(64, 16, 64, 64),
        Fire(128, 16, 64, 64),
        nn.MaxPool2d(kernel_size=3, stride=2, ceil_mode=True),
        Fire(128, 32, 128, 128),
        nn.Conv2d(256, out_channels, kernel_size=3, padding=1),
    )


BACKBONE_CHANNELS = {Backbone.TINY: 16, Backbone.SQUEEZE_STYLE: 64}


class ContextualEncoder(nn.Module):
    """Convolutional trunk; with confidence it emits one extra channel"""

    def __init__(self, backbone: Backbone, confidence: bool):
        super().__init__()
        self.out_channels = BACKBONE_CHANNELS[backbone]
        self.confidence = confidence
        total = self.out_channels + (1 if confidence else 0)
        self.trunk = _tiny_trunk(total) if backbone is Backbone.TINY else _squeeze_trunk(total)
        self._grid_cache: Dict[Tuple[int, int], Tuple[int, int]] = {}

    def output_size(self, height: int, width: int) -> Tuple[int, int]:
        key = (height, width)
        if key not in self._grid_cache:
            param = next(self.parameters())
            with torch.no_grad():
                probe = torch.zeros(1, 3, height, width, dtype=param.dtype)
                out = self.trunk(probe)
            self._grid_cache[key] = (int(out.shape[-2]), int(out.shape[-1]))
        return self._grid_cache[key]

    def forward(self, frames: torch.Tensor) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        out = F.relu(self.trunk(frames))
        if not self.confidence:
            return out, None
        return out[:, : self.out_channels], out[:, self.out_channels:]


class NonContextualEncoder(nn.Module):
    """
    Per-pixel affine map (1x1 receptive field) sampled onto the contextual
    encoder's grid, so saliency modules attach unchanged. The dense variant
    maps the flattened frame instead and needs a fixed input size.
    """

    def __init__(self, backbone: Backbone, confidence: bool, grid: ContextualEncoder,
                 dense: bool = False, input_size: Optional[Tuple[int, int]] = None):
        super().__init__()
        self.out_channels = BACKBONE_CHANNELS[backbone]
        self.confidence = confidence
        self.dense = dense
        self.input_size = input_size
        total = self.out_channels + (1 if confidence else 0)
        # Grid reference only; its parameters are never trained or used.
        self._grid = [grid]
        if dense:
            assert input_size is not None
            gh, gw = grid.output_size(*input_size)
            self.grid_size = (gh, gw)
            self.linear = nn.Linear(3 * input_size[0] * input_size[1], total * gh * gw)
        else:
            self.pointwise = nn.Conv2d(3, total, kernel_size=1)

    def output_size(self, height: int, width: int) -> Tuple[int, int]:
        return self._grid[0].output_size(height, width)

    def forward(self, frames: torch.Tensor) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        n, _, height, width = frames.shape
        if self.dense:
            if (height, width) != self.input_size:
                raise ShapeError(f"dense encoder expects {self.input_size}, got {(height, width)}")
            gh, gw = self.grid_size
            out = self.linear(frames.flatten(1)).view(n, -1, gh, gw)
        else:
            gh, gw = self.output_size(height, width)
            weight = self.pointwise.weight.flatten(1)
            out = _pointwise_affine(frames, weight, self.pointwise.bias, gh, gw)
        if not self.confidence:
            return out, None
        return out[:, : self.out_channels], F.relu(out[:, self.out_channels:])


def _nearest_sample(x: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """Pick pixels on the target grid (no interpolation, no mixing)"""
    if x.shape[-2:] == (height, width):
        return x
    rows = (torch.arange(height) * x.shape[-2]) // height
    cols = (torch.arange(width) * x.shape[-1]) // width
    return x[..., rows, :][..., cols]


def _pointwise_affine(frames: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor,
                      height: int, width: int) -> torch.Tensor:
    """1x1 affine map of (N, C, H, W) frames, sampled onto a (height, width) grid"""
    out = F.conv2d(frames, weight.view(*weight.shape, 1, 1), bias)
    return _nearest_sample(out, height, width)


def rescale_confidence(raw: torch.Tensor) -> torch.Tensor:
    """Min-max rescale each frame's confidence map to [0, 1]; flat maps become all ones"""
    n = raw.shape[0]
    flat = raw.reshape(n, -1)
    lo = flat.min(dim=1, keepdim=True).values
    hi = flat.max(dim=1, keepdim=True).values
    span = hi - lo
    scaled = (flat - lo) / span.clamp_min(CONFIDENCE_EPS)
    mask = torch.where(span > CONFIDENCE_EPS, scaled, torch.ones_like(flat))
    return mask.clamp(0.0, 1.0).reshape(n, *raw.shape[-2:])


# --------------------------------------------------------------------------
# Saliency modules
# --------------------------------------------------------------------------


class SpatialAttention(nn.Module):
    """Three conv layers down to one channel: BN+ReLU, BN+ReLU, Sigmoid"""

    def __init__(self, in_channels: int, kernel_size: int = 3):
        super().__init__()
        self.in_channels = in_channels
        mid = max(in_channels // 2, 1)
        low = max(in_channels // 4, 1)
        pad = kernel_size // 2
        self.layers = nn.Sequential(
            nn.Conv2d(in_channels, mid, kernel_size, padding=pad),
            nn.BatchNorm2d(mid),
            nn.ReLU(inplace=True),
            nn.Conv2d(mid, low, kernel_size, padding=pad),
            nn.BatchNorm2d(low),
            nn.ReLU(inplace=True),
            nn.Conv2d(low, 1, kernel_size, padding=pad),
            nn.Sigmoid(),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"spatial attention expects {self.in_channels} channels, got {x.shape[1]}")
        return self.layers(x).squeeze(1)


class TemporalAttention(nn.Module):
    """score_t = w2 . tanh(W1x pool(X_t) + W1h pool(H_prev)); weights = softmax_t"""

    def __init__(self, feature_channels: int, hidden_channels: int, width: int):
        super().__init__()
        self.feature_channels = feature_channels
        self.hidden_channels = hidden_channels
        self.x_proj = nn.Linear(feature_channels, width)
        self.h_proj = nn.Linear(hidden_channels, width, bias=False)
        self.score = nn.Linear(width, 1)

    def forward(self, encoded: torch.Tensor, h_prev: torch.Tensor) -> torch.Tensor:
        if encoded.shape[2] != self.feature_channels:
            raise ShapeError(
                f"temporal attention expects {self.feature_channels} channels, got {encoded.shape[2]}"
            )
        if h_prev.shape[1] != self.hidden_channels:
            raise ShapeError(
                f"temporal attention expects hidden {self.hidden_channels}, got {h_prev.shape[1]}"
            )
        pooled_x = encoded.mean(dim=(-2, -1))
        pooled_h = h_prev.mean(dim=(-2, -1))
        hidden = torch.tanh(self.x_proj(pooled_x) + self.h_proj(pooled_h).unsqueeze(1))
        return torch.softmax(self.score(hidden).squeeze(-1), dim=1)


class ConvLSTMCell(nn.Module):
    """Canonical convolutional LSTM cell with input/forget/output/candidate gates"""

    def __init__(self, input_channels: int, hidden_size: int, kernel_size: int):
        super().__init__()
        self.input_channels = input_channels
        self.hidden_size = hidden_size
        self.gates = nn.Conv2d(input_channels + hidden_size, 4 * hidden_size, kernel_size,
                               padding=kernel_size // 2)

    def forward(self, x: torch.Tensor, state: Tuple[torch.Tensor, torch.Tensor]
                ) -> Tuple[torch.Tensor, torch.Tensor]:
        prev_hidden, prev_cell = state
        if x.shape[1] != self.input_channels:
            raise ShapeError(f"ConvLSTM expects {self.input_channels} input channels, got {x.shape[1]}")
        if prev_hidden.shape[1] != self.hidden_size or prev_hidden.shape[-2:] != x.shape[-2:]:
            raise ShapeError(
                f"state {tuple(prev_hidden.shape)} incompatible with input {tuple(x.shape)}"
            )
        gates = self.gates(torch.cat((x, prev_hidden), dim=1))
        in_gate, forget_gate, out_gate, cell_gate = gates.chunk(4, dim=1)
        in_gate = torch.sigmoid(in_gate)
        forget_gate = torch.sigmoid(forget_gate)
        out_gate = torch.sigmoid(out_gate)
        cell_gate = torch.tanh(cell_gate)
        cell = forget_gate * prev_cell + in_gate * cell_gate
        hidden = out_gate * torch.tanh(cell)
        return hidden, cell


class NonContextualTemporal(nn.Module):
    """Per-timestep 1x1 affine map in place of the recurrent layer"""

    def __init__(self, input_channels: int, hidden_size: int):
        super().__init__()
        self.input_channels = input_channels
        self.pointwise = nn.Conv2d(input_channels, hidden_size, kernel_size=1)

    def forward(self, sequence: torch.Tensor) -> torch.Tensor:
        b, t, c, h, w = sequence.shape
        if c != self.input_channels:
            raise ShapeError(f"temporal linear map expects {self.input_channels} channels, got {c}")
        out = self.pointwise(sequence.reshape(b * t, c, h, w))
        return out.view(b, t, -1, h, w)


# --------------------------------------------------------------------------
# Full model
# --------------------------------------------------------------------------


def _ensure_finite(tensor: torch.Tensor, layer: str) -> None:
    if not torch.isfinite(tensor).all():
        raise NumericError("non-finite activations", layer=layer)


class SaliencyModel(nn.Module):
    """Baseline or saliency-augmented CNN + ConvLSTM illuminant estimator"""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        spec.validate()
        self.spec = spec
        contextual_encoder = ContextualEncoder(spec.backbone, spec.uses_confidence)
        if spec.spatial_contextual:
            self.encoder: nn.Module = contextual_encoder
        else:
            self.encoder = NonContextualEncoder(
                spec.backbone, spec.uses_confidence, contextual_encoder,
                dense=spec.dense_noncontextual, input_size=spec.input_size,
            )
        channels = BACKBONE_CHANNELS[spec.backbone]
        self.feature_channels = channels

        self.spatial_attention: Optional[SpatialAttention] = None
        if spec.spatial_kind == "attention":
            kernel = 3 if spec.spatial_contextual else 1
            self.spatial_attention = SpatialAttention(channels, kernel_size=kernel)

        if spec.temporal_contextual:
            self.temporal: nn.Module = ConvLSTMCell(channels, spec.hidden_size, spec.kernel_size)
        else:
            self.temporal = NonContextualTemporal(channels, spec.hidden_size)

        self.temporal_attention: Optional[TemporalAttention] = None
        if spec.temporal_kind == "attention":
            self.temporal_attention = TemporalAttention(channels, spec.hidden_size, spec.attention_width)

        self.head = nn.Linear(spec.hidden_size, 3)
        # Positive bias keeps the clamped output away from the zero vector at init
        nn.init.constant_(self.head.bias, 1.0)

    def forward(self, frames: torch.Tensor, override: Optional[SaliencyOverride] = None
                ) -> ForwardOutput:
        if frames.dim() != 5 or frames.shape[2] != 3:
            raise ShapeError(f"expected frames of shape (B, T, 3, H, W), got {tuple(frames.shape)}")
        b, t, _, height, width = frames.shape
        if t == 0:
            raise InputError("empty sequence")
        if override is not None and b != 1:
            raise InputError("saliency overrides apply to a single sequence (batch of one)")
        spec = self.spec

        features, raw_conf = self.encoder(frames.reshape(b * t, 3, height, width))
        _ensure_finite(features, "encoder")
        c, gh, gw = features.shape[1:]
        features = features.view(b, t, c, gh, gw)

        confidence_masks = None
        if raw_conf is not None:
            _ensure_finite(raw_conf, "confidence")
            confidence_masks = rescale_confidence(raw_conf).view(b, t, gh, gw)

        spatial_masks = None
        masked = features
        if spec.has_spatial:
            forced = override.spatial_masks(t, gh, gw, features) if override is not None else None
            if forced is not None:
                spatial_masks = forced.unsqueeze(0)
            elif self.spatial_attention is not None:
                learned = self.spatial_attention(features.view(b * t, c, gh, gw))
                spatial_masks = learned.view(b, t, gh, gw)
            else:
                spatial_masks = confidence_masks
            _ensure_finite(spatial_masks, "spatial_saliency")
            masked = apply_spatial_mask(features, spatial_masks)

        if spec.temporal_contextual:
            state = HiddenState.zeros(spec.hidden_size, gh, gw, batch=b, like=features)
            h, cell = state.h, state.c
            h_prev = h
            outputs = []
            for step in range(t):
                h_prev = h
                h, cell = self.temporal(masked[:, step], (h, cell))
                outputs.append(h)
            y = torch.stack(outputs, dim=1)
        else:
            y = self.temporal(masked)
            h_prev = torch.zeros(b, spec.hidden_size, gh, gw, dtype=features.dtype)
        _ensure_finite(y, "temporal")

        weights = None
        normalized = False
        if spec.has_temporal:
            forced_w = override.temporal_weights(t, features) if override is not None else None
            normalized = spec.temporal_kind == "attention"
            if forced_w is not None:
                weights = forced_w.unsqueeze(0)
            elif self.temporal_attention is not None:
                weights = self.temporal_attention(masked, h_prev)
            else:
                assert confidence_masks is not None
                weights = confidence_masks.mean(dim=(-2, -1))
            _ensure_finite(weights, "temporal_saliency")
            representation = (weights.view(b, t, 1, 1, 1) * y).sum(dim=1)
        elif spec.temporal_contextual:
            representation = y[:, -1]
        else:
            representation = y.mean(dim=1)

        out = self.head(representation.mean(dim=(-2, -1)))
        _ensure_finite(out, "head")
        out = out.clamp_min(0.0)
        norm = out.norm(dim=1, keepdim=True)
        if bool((norm <= 1e-12).any()):
            raise NumericError("illuminant prediction collapsed to the zero vector", layer="head")
        return ForwardOutput(
            illuminant=out / norm,
            spatial_masks=spatial_masks if spec.has_spatial else None,
            temporal_weights=weights,
            temporal_normalized=normalized,
            raw_confidence=None if raw_conf is None else raw_conf.view(b, t, gh, gw),
        )


def build_model(spec: ModelSpec, seed: int) -> SaliencyModel:
    """Deterministically initialised model for ``spec``"""
    spec.validate()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = SaliencyModel(spec)
    logger.info(
        f"Built {spec.label} model (spatial contextual={spec.spatial_contextual}, "
        f"temporal contextual={spec.temporal_contextual}, "
        f"params={count_trainable_parameters(model)}, seed={seed})"
    )
    return model


def count_trainable_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


# --------------------------------------------------------------------------
# Functional operations on single frames / sequences
# --------------------------------------------------------------------------


def spatial_attention_forward(x: torch.Tensor, module: SpatialAttention) -> torch.Tensor:
    """Mask (h, w) in [0, 1] for one encoded frame (C, h, w)"""
    if x.dim() != 3:
        raise ShapeError(f"expected an encoded frame (C, h, w), got {tuple(x.shape)}")
    return module(x.unsqueeze(0)).squeeze(0)


def confidence_forward(frame: torch.Tensor, encoder: nn.Module) -> Tuple[torch.Tensor, torch.Tensor]:
    """Features and rescaled confidence map produced jointly by the same trunk"""
    if frame.dim() != 3 or frame.shape[0] != 3:
        raise ShapeError(f"expected a frame (3, H, W), got {tuple(frame.shape)}")
    if not getattr(encoder, "confidence", False):
        raise ShapeError("encoder was built without a confidence channel")
    features, raw = encoder(frame.unsqueeze(0))
    return features.squeeze(0), rescale_confidence(raw).squeeze(0)


def apply_spatial_mask(x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """X^MS = X * MS, mask broadcast over channels"""
    if x.shape[-2:] != mask.shape[-2:] or x.dim() != mask.dim() + 1:
        raise ShapeError(f"mask {tuple(mask.shape)} does not match features {tuple(x.shape)}")
    return x * mask.unsqueeze(-3)


def temporal_attention_forward(encoded_seq: Union[torch.Tensor, Sequence[torch.Tensor]],
                               h_prev: HiddenState, module: TemporalAttention,
                               values: Optional[torch.Tensor] = None
                               ) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Softmax weights over the T timesteps and the weighted sum of ``values``
    (defaults to the encoded frames themselves).
    """
    if not isinstance(encoded_seq, torch.Tensor):
        if len(encoded_seq) == 0:
            raise InputError("empty sequence")
        encoded_seq = torch.stack(list(encoded_seq))
    if encoded_seq.dim() != 4 or encoded_seq.shape[0] == 0:
        raise InputError(f"expected a non-empty (T, C, h, w) sequence, got {tuple(encoded_seq.shape)}")
    weights = module(encoded_seq.unsqueeze(0), h_prev.h.unsqueeze(0)).squeeze(0)
    source = encoded_seq if values is None else values
    frame = (weights.view(-1, 1, 1, 1) * source).sum(dim=0)
    return weights, frame


def temporal_confidence_weights(masks: Union[torch.Tensor, Sequence[Any]]) -> TemporalWeights:
    """weight_t = mean of mask t"""
    if len(masks) == 0:
        raise InputError("no masks to derive temporal weights from")
    means = [float(np.asarray(_as_numpy(m), dtype=np.float64).mean()) for m in masks]
    return TemporalWeights(np.array(means), normalized=False)


def conv_lstm_step(x: torch.Tensor, state: HiddenState, cell: ConvLSTMCell
                   ) -> Tuple[torch.Tensor, HiddenState]:
    """One ConvLSTM update for an unbatched (C, h, w) input; output is the new h"""
    if x.dim() != 3 or state.h.dim() != 3:
        raise ShapeError(f"expected unbatched tensors, got {tuple(x.shape)} / {tuple(state.h.shape)}")
    h, c = cell(x.unsqueeze(0), (state.h.unsqueeze(0), state.c.unsqueeze(0)))
    new_state = HiddenState(h.squeeze(0), c.squeeze(0))
    return new_state.h, new_state


def noncontextual_spatial_forward(frame: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor,
                                  grid: Optional[Tuple[int, int]] = None) -> torch.Tensor:
    """
    Per-pixel affine map out[:, i, j] = W @ frame[:, i, j] + b, sampled onto
    ``grid`` (the frame size when None) the way the non-contextual encoder does
    """
    if frame.dim() != 3 or weight.dim() != 2 or frame.shape[0] != weight.shape[1]:
        raise ShapeError(f"frame {tuple(frame.shape)} incompatible with weight {tuple(weight.shape)}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"bias {tuple(bias.shape)} does not match weight {tuple(weight.shape)}")
    height, width = grid if grid is not None else tuple(frame.shape[-2:])
    return _pointwise_affine(frame.unsqueeze(0), weight, bias, height, width).squeeze(0)


def noncontextual_temporal_forward(encoded_seq: Union[torch.Tensor, Sequence[torch.Tensor]],
                                   module: NonContextualTemporal,
                                   weights: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Per-timestep affine outputs combined by saliency weights (uniform when absent)"""
    if not isinstance(encoded_seq, torch.Tensor):
        if len(encoded_seq) == 0:
            raise InputError("empty sequence")
        encoded_seq = torch.stack(list(encoded_seq))
    if encoded_seq.dim() != 4 or encoded_seq.shape[0] == 0:
        raise InputError(f"expected a non-empty (T, C, h, w) sequence, got {tuple(encoded_seq.shape)}")
    y = module(encoded_seq.unsqueeze(0)).squeeze(0)
    t = y.shape[0]
    if weights is None:
        weights = torch.full((t,), 1.0 / t, dtype=y.dtype)
    if weights.shape != (t,):
        raise ShapeError(f"weights {tuple(weights.shape)} do not match {t} timesteps")
    return (weights.view(t, 1, 1, 1) * y).sum(dim=0)


# --------------------------------------------------------------------------
# Prediction
# --------------------------------------------------------------------------


def _as_numpy(x: Any) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().numpy()
    return np.asarray(x)


def sequence_tensor(seq: FrameSequence, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(1, T, 3, H, W) tensor from an H x W x 3 frame list"""
    if len(seq.frames) == 0:
        raise InputError(f"sequence {seq.id} is empty")
    stacked = np.stack([np.asarray(f) for f in seq.frames]).transpose(0, 3, 1, 2)
    return torch.from_numpy(np.ascontiguousarray(stacked)).to(dtype).unsqueeze(0)


def resolve_model(model: Any, seq: FrameSequence, item_index: Optional[int]
                  ) -> Tuple[SaliencyModel, Optional[SaliencyOverride]]:
    """Unwrap intervention wrappers into (base model, override for this input)"""
    if isinstance(model, SaliencyModel):
        return model, None
    override_for = getattr(model, "override_for", None)
    if override_for is None:
        raise ConfigurationError(f"{type(model).__name__} is not a model")
    return model.base, override_for(seq, item_index)


def predict(model: Any, seq: FrameSequence, item_index: Optional[int] = None) -> Prediction:
    """Illuminant estimate for ``seq`` plus the saliency actually used"""
    base, override = resolve_model(model, seq, item_index)
    param = next(base.parameters())
    frames = sequence_tensor(seq, dtype=param.dtype)
    base.eval()
    with torch.no_grad():
        out = base(frames, override)
    masks: List[np.ndarray] = []
    if out.spatial_masks is not None:
        masks = [m.astype(np.float32) for m in _as_numpy(out.spatial_masks[0])]
    weights = None
    if out.temporal_weights is not None:
        weights = TemporalWeights(_as_numpy(out.temporal_weights[0]), normalized=out.temporal_normalized)
    illuminant = _as_numpy(out.illuminant[0]).astype(np.float64)
    return Prediction(illuminant=illuminant / np.linalg.norm(illuminant),
                      captured_spatial_masks=masks, captured_temporal_weights=weights)
