"""
Training loop (angular loss, RMSprop) and evaluation helpers
"""

import math
import time
from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .config import TrainConfig
from .data_io import Dataset, FrameSequence, augment
from .errors import InputError, NumericError
from .logger import get_logger, run_logger
from .metrics import angular_error
from .model_zoo import ModelSpec, SaliencyModel, build_model, predict, sequence_tensor

logger = get_logger(__name__)


def angular_loss(prediction: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean angular error in degrees over the batch"""
    cosine = torch.nn.functional.cosine_similarity(prediction, target, dim=1)
    cosine = cosine.clamp(-1.0 + 1e-7, 1.0 - 1e-7)
    return torch.rad2deg(torch.acos(cosine)).mean()


@dataclass
class TrainingLog:
    epoch_losses: List[float] = field(default_factory=list)
    wall_time: float = 0.0


def _batches(sequences: Sequence[FrameSequence], batch_size: int, order: np.ndarray
             ) -> List[List[FrameSequence]]:
    ordered = [sequences[i] for i in order]
    return [ordered[i:i + batch_size] for i in range(0, len(ordered), batch_size)]


def _stack(batch: List[FrameSequence], dtype: torch.dtype) -> Tuple[torch.Tensor, torch.Tensor]:
    shapes = {(len(seq), seq.frame_size) for seq in batch}
    if len(shapes) > 1:
        raise InputError(f"batch mixes sequence shapes {sorted(shapes)}; use batch_size 1")
    frames = torch.cat([sequence_tensor(seq, dtype) for seq in batch])
    targets = torch.tensor(np.stack([seq.ground_truth.as_array() for seq in batch]), dtype=dtype)
    return frames, targets


def fit(model: SaliencyModel, sequences: Sequence[FrameSequence], cfg: TrainConfig,
        run_id: Optional[str] = None) -> TrainingLog:
    """Train in place. Augmentation draws and batch order derive from ``cfg.seed``."""
    cfg.validate()
    if not sequences:
        raise InputError("no training sequences")
    run_log = run_logger(__name__, run_id)
    rng = np.random.default_rng(cfg.seed)
    dtype = next(model.parameters()).dtype
    optimizer = torch.optim.RMSprop(model.parameters(), lr=cfg.learning_rate)
    log = TrainingLog()
    start = time.perf_counter()
    model.train()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(sequences))
        total = 0.0
        for batch in _batches(sequences, cfg.batch_size, order):
            if cfg.augment:
                batch = [augment(seq, rng) for seq in batch]
            frames, targets = _stack(batch, dtype)
            optimizer.zero_grad()
            loss = angular_loss(model(frames).illuminant, targets)
            if not torch.isfinite(loss):
                raise NumericError(f"divergent loss at epoch {epoch}", layer="loss")
            loss.backward()
            optimizer.step()
            total += float(loss.item()) * len(batch)
        log.epoch_losses.append(total / len(sequences))
        if epoch == 0 or (epoch + 1) % 50 == 0 or epoch + 1 == cfg.epochs:
            run_log.info(f"{model.spec.label} epoch {epoch + 1}/{cfg.epochs}: loss {log.epoch_losses[-1]:.3f} deg")
    model.eval()
    log.wall_time = time.perf_counter() - start
    return log


def evaluate(model: Any, sequences: Sequence[FrameSequence]) -> List[float]:
    """Per-item angular errors in degrees (model may be an intervention wrapper)"""
    errors = []
    for seq in sequences:
        prediction = predict(model, seq)
        errors.append(angular_error(prediction.illuminant, seq.ground_truth.as_array()))
        logger.debug(f"{seq.id}: {errors[-1]:.3f} deg")
    return errors


@dataclass
class TrainOutcome:
    model: SaliencyModel
    log: TrainingLog
    test_ids: List[str]
    errors: List[float]


def train(spec: ModelSpec, dataset: Dataset, fold: Optional[int], cfg: TrainConfig,
          model_seed: Optional[int] = None, run_id: Optional[str] = None) -> TrainOutcome:
    """
    Train on every fold except ``fold`` and evaluate on ``fold``. With
    ``fold=None`` the whole dataset is used for both.
    """
    cfg.validate()
    manifest = dataset.manifest
    if fold is None:
        train_ids = test_ids = manifest.sequence_ids
    else:
        train_ids, test_ids = manifest.train_ids(fold), manifest.test_ids(fold)
    if not train_ids or not test_ids:
        raise InputError(f"fold {fold} leaves an empty train or test split")
    seed = cfg.seed if model_seed is None else model_seed
    model = build_model(spec, seed)
    log = fit(model, dataset.sequences(train_ids), cfg, run_id=run_id)
    errors = evaluate(model, dataset.sequences(test_ids))
    mae = float(np.mean(errors))
    if not math.isfinite(mae):
        raise NumericError("non-finite evaluation error", layer="head")
    run_logger(__name__, run_id).info(
        f"Trained {spec.label} on fold {fold}: test MAE {mae:.3f} deg ({log.wall_time:.1f}s)")
    return TrainOutcome(model=model, log=log, test_ids=list(test_ids), errors=errors)
