"""
Dataset access for temporal colour constancy.

On-disk layout (one directory per sequence under the dataset root):
    <root>/manifest.json                   optional; ids, frame counts, folds
    <root>/<seq_id>/frame_000.tensor ...   or frame_000.png / .jpg ...
    <root>/<seq_id>/groundtruth.json       {"illuminant": [r, g, b]}
    <root>/<seq_id>/evidence.json          optional; planted-evidence record

Ground truth belongs to the last frame of each sequence. Frames are decoded to
float32 H x W x 3 RGB in [0, 1].
"""

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple

import cv2
import numpy as np

from .config import SynthConfig
from .errors import InputError, PersistenceError, SequenceLoadError, describe_load_errors
from .logger import get_logger
from .tensor_io import read_tensor, read_tensor_shape, write_tensor

logger = get_logger(__name__)

GROUND_TRUTH_FILE = "groundtruth.json"
EVIDENCE_FILE = "evidence.json"
MANIFEST_FILE = "manifest.json"
TENSOR_SUFFIX = ".tensor"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")

EVIDENCE_MODES = ("GLOBAL", "SPATIAL_PATCH", "KEY_FRAME")


@dataclass(frozen=True)
class Illuminant:
    """Unit-normalised, nonnegative RGB illuminant"""
    rgb: Tuple[float, float, float]

    def __post_init__(self) -> None:
        values = np.asarray(self.rgb, dtype=np.float64).reshape(-1)
        if values.shape != (3,) or not np.all(np.isfinite(values)):
            raise InputError(f"illuminant must be a finite 3-vector, got {self.rgb!r}")
        if np.any(values < 0):
            raise InputError(f"illuminant components must be nonnegative, got {values.tolist()}")
        norm = float(np.linalg.norm(values))
        if norm == 0.0:
            raise InputError("illuminant must be nonzero")
        # Already-normalised values are kept bit-exact so save/load round-trips
        if abs(norm - 1.0) > 1e-12:
            values = values / norm
        object.__setattr__(self, "rgb", tuple(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array(self.rgb, dtype=np.float64)


@dataclass
class FrameSequence:
    frames: List[np.ndarray]
    ground_truth: Illuminant
    id: str
    evidence: Optional[Dict[str, Any]] = None

    def __post_init__(self) -> None:
        if len(self.frames) == 0:
            raise InputError(f"sequence {self.id} has no frames")
        first = self.frames[0].shape
        if len(first) != 3 or first[2] != 3:
            raise InputError(f"sequence {self.id}: frames must be H x W x 3, got {first}")
        for index, frame in enumerate(self.frames):
            if frame.shape != first:
                raise InputError(
                    f"sequence {self.id}: frame {index} has shape {frame.shape}, expected {first}"
                )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def frame_size(self) -> Tuple[int, int]:
        return int(self.frames[0].shape[0]), int(self.frames[0].shape[1])


@dataclass
class DatasetManifest:
    root: Optional[str]
    sequence_ids: List[str]
    frame_counts: Dict[str, int]
    folds: Dict[str, int] = field(default_factory=dict)

    @property
    def num_folds(self) -> int:
        return max(self.folds.values()) + 1 if self.folds else 0

    def fold_ids(self, fold: int) -> List[str]:
        return [sid for sid in self.sequence_ids if self.folds.get(sid) == fold]

    def train_ids(self, fold: int) -> List[str]:
        self._check_fold(fold)
        return [sid for sid in self.sequence_ids if self.folds[sid] != fold]

    def test_ids(self, fold: int) -> List[str]:
        self._check_fold(fold)
        return self.fold_ids(fold)

    def _check_fold(self, fold: int) -> None:
        if not self.folds:
            raise InputError("manifest has no fold assignments; run kfold_split first")
        if not 0 <= fold < self.num_folds:
            raise InputError(f"fold {fold} out of range [0, {self.num_folds})")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sequence_ids": list(self.sequence_ids),
            "frame_counts": {sid: self.frame_counts[sid] for sid in self.sequence_ids},
            "folds": {sid: self.folds[sid] for sid in self.sequence_ids if sid in self.folds},
        }


@dataclass
class LoadReport:
    errors: List[SequenceLoadError] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def rejected_ids(self) -> List[str]:
        return [e.sequence_id for e in self.errors]

    def summary(self) -> str:
        return describe_load_errors(self.errors)


class Dataset:
    """Manifest plus sequence access (in-memory or lazily decoded from disk)"""

    def __init__(self, manifest: DatasetManifest,
                 sequences: Optional[Dict[str, FrameSequence]] = None,
                 report: Optional[LoadReport] = None):
        self.manifest = manifest
        self._sequences = sequences
        self.report = report or LoadReport()

    def __len__(self) -> int:
        return len(self.manifest.sequence_ids)

    @property
    def ids(self) -> List[str]:
        return list(self.manifest.sequence_ids)

    def __getitem__(self, sequence_id: str) -> FrameSequence:
        if sequence_id not in self.manifest.frame_counts:
            raise KeyError(sequence_id)
        if self._sequences is not None:
            return self._sequences[sequence_id]
        assert self.manifest.root is not None
        return load_sequence(os.path.join(self.manifest.root, sequence_id), sequence_id)

    def sequences(self, ids: Optional[Iterable[str]] = None) -> List[FrameSequence]:
        return [self[sid] for sid in (self.ids if ids is None else ids)]

    def with_manifest(self, manifest: DatasetManifest) -> "Dataset":
        return Dataset(manifest, self._sequences, self.report)


# --------------------------------------------------------------------------
# Loading and saving
# --------------------------------------------------------------------------


def _frame_files(directory: str) -> List[str]:
    names = sorted(os.listdir(directory))
    tensors = [n for n in names if n.endswith(TENSOR_SUFFIX) and n.startswith("frame_")]
    if tensors:
        return tensors
    return [n for n in names if n.lower().endswith(IMAGE_SUFFIXES)]


def _read_ground_truth(directory: str, sequence_id: str) -> Illuminant:
    path = os.path.join(directory, GROUND_TRUTH_FILE)
    if not os.path.exists(path):
        raise SequenceLoadError(sequence_id, "missing ground truth")
    try:
        with open(path, "r") as f:
            record = json.load(f)
        return Illuminant(tuple(record["illuminant"]))
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise SequenceLoadError(sequence_id, f"unreadable ground truth: {e}") from e


def _decode_image(path: str) -> np.ndarray:
    image = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if image is None:
        raise InputError(f"cannot decode {path}")
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    image = cv2.cvtColor(image[:, :, :3], cv2.COLOR_BGR2RGB)
    scale = float(np.iinfo(image.dtype).max) if image.dtype.kind in "ui" else 1.0
    return (image.astype(np.float32) / scale).clip(0.0, 1.0)


def _decode_frame(path: str) -> np.ndarray:
    if path.endswith(TENSOR_SUFFIX):
        return read_tensor(path).astype(np.float32, copy=False)
    return _decode_image(path)


def _frame_shape(path: str) -> Tuple[int, ...]:
    if path.endswith(TENSOR_SUFFIX):
        return read_tensor_shape(path)
    return _decode_image(path).shape


def _validate_sequence_dir(directory: str, sequence_id: str) -> int:
    """Checks ground truth and frame shapes; returns the frame count"""
    _read_ground_truth(directory, sequence_id)
    files = _frame_files(directory)
    if not files:
        raise SequenceLoadError(sequence_id, "no frames")
    shapes = set()
    for name in files:
        try:
            shape = tuple(_frame_shape(os.path.join(directory, name)))
        except (InputError, PersistenceError) as e:
            raise SequenceLoadError(sequence_id, f"unreadable frame {name}: {e}") from e
        if len(shape) != 3 or shape[2] != 3:
            raise SequenceLoadError(sequence_id, f"frame {name} has shape {shape}, expected H x W x 3")
        shapes.add(shape)
    if len(shapes) > 1:
        raise SequenceLoadError(sequence_id, f"inconsistent frame sizes {sorted(shapes)}")
    return len(files)


def load_sequence(directory: str, sequence_id: str) -> FrameSequence:
    ground_truth = _read_ground_truth(directory, sequence_id)
    frames = []
    for name in _frame_files(directory):
        try:
            frames.append(_decode_frame(os.path.join(directory, name)))
        except (InputError, PersistenceError) as e:
            raise SequenceLoadError(sequence_id, f"unreadable frame {name}: {e}") from e
    evidence = None
    evidence_path = os.path.join(directory, EVIDENCE_FILE)
    if os.path.exists(evidence_path):
        with open(evidence_path, "r") as f:
            evidence = json.load(f)
    try:
        return FrameSequence(frames=frames, ground_truth=ground_truth, id=sequence_id, evidence=evidence)
    except InputError as e:
        raise SequenceLoadError(sequence_id, str(e)) from e


def _read_stored_folds(path: str) -> Dict[str, int]:
    try:
        with open(path, "r") as f:
            stored = json.load(f)
        return {str(k): int(v) for k, v in stored.get("folds", {}).items()}
    except (OSError, ValueError, AttributeError, TypeError) as e:
        logger.warning(f"Unreadable manifest {path}, ignoring stored folds: {e}")
        return {}


def load_dataset(root: str) -> Dataset:
    """
    Validate every sequence directory under ``root`` and return a lazily
    decoded dataset. Invalid sequences are excluded and listed in
    ``dataset.report``.
    """
    if not os.path.isdir(root):
        raise InputError(f"dataset root {root} is not a directory")
    report = LoadReport()
    ids: List[str] = []
    counts: Dict[str, int] = {}
    for name in sorted(os.listdir(root)):
        directory = os.path.join(root, name)
        if not os.path.isdir(directory):
            continue
        try:
            counts[name] = _validate_sequence_dir(directory, name)
            ids.append(name)
        except SequenceLoadError as e:
            report.errors.append(e)
            logger.warning(f"Excluding sequence {e}")

    folds: Dict[str, int] = {}
    manifest_path = os.path.join(root, MANIFEST_FILE)
    if os.path.exists(manifest_path):
        stored_folds = _read_stored_folds(manifest_path)
        if stored_folds and set(stored_folds) == set(ids):
            folds = stored_folds
        elif stored_folds:
            logger.warning("Stored fold assignment does not cover the loaded sequences; ignoring it")

    logger.info(f"Loaded manifest for {len(ids)} sequences from {root} ({len(report.errors)} rejected)")
    return Dataset(DatasetManifest(root=root, sequence_ids=ids, frame_counts=counts, folds=folds),
                   report=report)


def save_dataset(dataset: Dataset, root: str) -> DatasetManifest:
    """Write every sequence in the tensor layout plus manifest.json"""
    try:
        os.makedirs(root, exist_ok=True)
        for sequence in dataset.sequences():
            directory = os.path.join(root, sequence.id)
            os.makedirs(directory, exist_ok=True)
            for index, frame in enumerate(sequence.frames):
                write_tensor(os.path.join(directory, f"frame_{index:03d}{TENSOR_SUFFIX}"),
                             np.asarray(frame, dtype=np.float32))
            with open(os.path.join(directory, GROUND_TRUTH_FILE), "w") as f:
                json.dump({"illuminant": list(sequence.ground_truth.rgb)}, f)
            if sequence.evidence is not None:
                with open(os.path.join(directory, EVIDENCE_FILE), "w") as f:
                    json.dump(sequence.evidence, f, sort_keys=True)
        manifest = DatasetManifest(root=root, sequence_ids=dataset.ids,
                                   frame_counts=dict(dataset.manifest.frame_counts),
                                   folds=dict(dataset.manifest.folds))
        with open(os.path.join(root, MANIFEST_FILE), "w") as f:
            json.dump(manifest.to_dict(), f, indent=2, sort_keys=True)
    except OSError as e:
        raise PersistenceError(f"could not save dataset to {root}: {e}") from e
    logger.info(f"Saved {len(dataset)} sequences to {root}")
    return manifest


# --------------------------------------------------------------------------
# Augmentation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentationDraw:
    angle: float
    crop: float
    flip: bool
    offset_y: float = 0.5
    offset_x: float = 0.5


def draw_augmentation(rng: np.random.Generator) -> AugmentationDraw:
    """Rotation in [-30, 30] degrees, crop proportion in [0.8, 1.0], flip with p = 0.5"""
    angle = float(rng.uniform(-30.0, 30.0))
    crop = float(rng.uniform(0.8, 1.0))
    flip = bool(rng.random() < 0.5)
    offset_y, offset_x = (float(v) for v in rng.random(2))
    return AugmentationDraw(angle, crop, flip, offset_y, offset_x)


def _transform_frame(frame: np.ndarray, draw: AugmentationDraw) -> np.ndarray:
    height, width = frame.shape[:2]
    out = np.asarray(frame, dtype=np.float32)
    if draw.angle != 0.0:
        matrix = cv2.getRotationMatrix2D((width / 2.0, height / 2.0), draw.angle, 1.0)
        out = cv2.warpAffine(out, matrix, (width, height), flags=cv2.INTER_LINEAR,
                             borderMode=cv2.BORDER_REFLECT_101)
    if draw.crop != 1.0:
        # proportion of the shorter side; the window keeps the frame aspect
        side = draw.crop * min(height, width)
        crop_h = int(round(side * height / min(height, width)))
        crop_w = int(round(side * width / min(height, width)))
        if crop_h < 1 or crop_w < 1:
            raise InputError(f"crop proportion {draw.crop} leaves less than one pixel")
        top = int(round(draw.offset_y * (height - crop_h)))
        left = int(round(draw.offset_x * (width - crop_w)))
        out = cv2.resize(out[top:top + crop_h, left:left + crop_w], (width, height),
                         interpolation=cv2.INTER_LINEAR)
    if draw.flip:
        out = out[:, ::-1]
    return np.ascontiguousarray(out).clip(0.0, 1.0)


def augment(seq: FrameSequence, rng: np.random.Generator,
            draw: Optional[AugmentationDraw] = None) -> FrameSequence:
    """One draw per sequence applied to every frame; ground truth unchanged"""
    if draw is None:
        draw = draw_augmentation(rng)
    if not 0.0 < draw.crop <= 1.0:
        raise InputError(f"crop proportion must be in (0, 1], got {draw.crop}")
    frames = [_transform_frame(frame, draw) for frame in seq.frames]
    return FrameSequence(frames=frames, ground_truth=seq.ground_truth, id=seq.id, evidence=seq.evidence)


# --------------------------------------------------------------------------
# Cross-validation folds
# --------------------------------------------------------------------------


def kfold_split(manifest: DatasetManifest, k: int = 4, seed: int = 0) -> DatasetManifest:
    """Random partition into k folds whose sizes differ by at most one"""
    n = len(manifest.sequence_ids)
    if k < 2 or k > n:
        raise InputError(f"k must be in [2, {n}], got {k}")
    order = sorted(manifest.sequence_ids)
    permutation = np.random.default_rng(seed).permutation(n)
    folds = {order[index]: position % k for position, index in enumerate(permutation)}
    logger.debug(f"Split {n} sequences into {k} folds (seed={seed})")
    return DatasetManifest(root=manifest.root, sequence_ids=list(manifest.sequence_ids),
                           frame_counts=dict(manifest.frame_counts), folds=folds)


# --------------------------------------------------------------------------
# Synthetic planted-evidence data
# --------------------------------------------------------------------------


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    cosine = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return math.degrees(math.acos(max(-1.0, min(1.0, cosine))))


def gray_world(pixels: np.ndarray) -> np.ndarray:
    """Mean RGB of an (..., 3) array"""
    return np.asarray(pixels, dtype=np.float64).reshape(-1, 3).mean(axis=0)


def _texture(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    coarse = rng.uniform(-0.15, 0.15, size=(max(height // 4, 1), max(width // 4, 1), 3))
    return cv2.resize(coarse.astype(np.float32), (width, height),
                      interpolation=cv2.INTER_LINEAR).astype(np.float64)


def _with_channel_means(texture: np.ndarray, region: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Shift ``texture`` so its mean over ``region`` equals ``levels`` per channel"""
    out = texture.copy()
    for channel in range(3):
        values = out[..., channel]
        values[region] += levels[channel] - values[region].mean()
    return out


def _biased_levels(rng: np.random.Generator, illuminant: np.ndarray, min_angle: float = 15.0) -> np.ndarray:
    while True:
        levels = rng.uniform(0.2, 0.8, size=3)
        if angle_between(levels * illuminant, illuminant) > min_angle:
            return levels


def _cast(reflectance: np.ndarray, illuminant: np.ndarray) -> np.ndarray:
    return (reflectance * illuminant).clip(0.0, 1.0).astype(np.float32)


def synth_generate(config: SynthConfig, seed: int) -> Dataset:
    """
    Sequences of random textures under a planted illuminant cast.

    GLOBAL: every frame is balanced, so gray-world over any frame recovers the cast.
    SPATIAL_PATCH: an achromatic patch carries the cast; the rest of each frame is
        colour-biased (gray-world on the complement is off by more than 15 degrees).
    KEY_FRAME: one frame is balanced, the others are colour-biased.
    """
    mode = config.evidence_mode.upper()
    if mode not in EVIDENCE_MODES:
        raise InputError(f"unknown evidence mode {config.evidence_mode!r}")
    if min(config.num_sequences, config.num_frames, config.height, config.width) <= 0:
        raise InputError("synthetic dataset dimensions must be positive")
    if mode == "SPATIAL_PATCH" and (config.patch_size <= 0
                                    or config.patch_size >= min(config.height, config.width)):
        raise InputError(
            f"patch size {config.patch_size} does not fit a {config.height}x{config.width} frame"
        )

    rng = np.random.default_rng(seed)
    height, width = config.height, config.width
    everywhere = np.ones((height, width), dtype=bool)
    sequences: Dict[str, FrameSequence] = {}
    for index in range(config.num_sequences):
        illuminant = rng.uniform(0.2, 1.0, size=3)
        illuminant /= np.linalg.norm(illuminant)
        evidence: Dict[str, Any] = {"mode": mode}
        frames: List[np.ndarray] = []

        if mode == "GLOBAL":
            for _ in range(config.num_frames):
                reflectance = _with_channel_means(_texture(rng, height, width), everywhere, np.full(3, 0.5))
                frames.append(_cast(reflectance, illuminant))
        elif mode == "SPATIAL_PATCH":
            size = config.patch_size
            top = int(rng.integers(0, height - size + 1))
            left = int(rng.integers(0, width - size + 1))
            patch = np.zeros((height, width), dtype=bool)
            patch[top:top + size, left:left + size] = True
            levels = _biased_levels(rng, illuminant)
            evidence.update({"patch": [top, left, size], "complement_bias": levels.tolist()})
            for _ in range(config.num_frames):
                reflectance = _with_channel_means(_texture(rng, height, width), ~patch, levels)
                reflectance[patch] = float(rng.uniform(0.4, 0.8))
                frames.append(_cast(reflectance, illuminant))
        else:
            key = int(rng.integers(0, config.num_frames))
            levels = _biased_levels(rng, illuminant)
            evidence.update({"key_frame": key, "bias": levels.tolist()})
            for t in range(config.num_frames):
                target = np.full(3, 0.5) if t == key else levels
                reflectance = _with_channel_means(_texture(rng, height, width), everywhere, target)
                frames.append(_cast(reflectance, illuminant))

        sequence_id = f"synth_{index:04d}"
        sequences[sequence_id] = FrameSequence(
            frames=frames, ground_truth=Illuminant(tuple(illuminant)), id=sequence_id, evidence=evidence
        )

    ids = sorted(sequences)
    manifest = DatasetManifest(root=None, sequence_ids=ids,
                               frame_counts={sid: config.num_frames for sid in ids})
    logger.info(f"Generated {len(ids)} synthetic sequences ({mode}, T={config.num_frames}, "
                f"{height}x{width}, seed={seed})")
    return Dataset(manifest, sequences)
