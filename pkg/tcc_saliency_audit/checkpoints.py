"""
Checkpoint container: a directory holding spec.json and one tensor file per
state_dict entry (``<name>.tensor``).
"""

import json
import os
from typing import Dict

import numpy as np
import torch

from .errors import OrchestrationError, PersistenceError
from .logger import get_logger
from .model_zoo import ModelSpec, SaliencyModel, build_model
from .tensor_io import read_tensor, write_tensor

logger = get_logger(__name__)

SPEC_FILE = "spec.json"


def _to_numpy(tensor: torch.Tensor) -> np.ndarray:
    array = tensor.detach().cpu().numpy()
    if array.dtype == np.float64:
        return array
    if array.dtype.kind == "f":
        return array.astype(np.float32)
    return array.astype(np.int64)


def save_checkpoint(model: SaliencyModel, directory: str) -> None:
    try:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, SPEC_FILE), "w") as f:
            json.dump(model.spec.to_dict(), f, indent=2, sort_keys=True)
    except OSError as e:
        raise PersistenceError(f"could not write checkpoint {directory}: {e}") from e
    for name, tensor in model.state_dict().items():
        write_tensor(os.path.join(directory, f"{name}.tensor"), _to_numpy(tensor))
    logger.debug(f"Saved {model.spec.label} checkpoint to {directory}")


def checkpoint_exists(directory: str) -> bool:
    return os.path.exists(os.path.join(directory, SPEC_FILE))


def load_checkpoint(directory: str) -> SaliencyModel:
    spec_path = os.path.join(directory, SPEC_FILE)
    if not os.path.exists(spec_path):
        raise OrchestrationError(f"no checkpoint at {directory}")
    try:
        with open(spec_path, "r") as f:
            spec = ModelSpec.from_dict(json.load(f))
    except (OSError, ValueError) as e:
        raise PersistenceError(f"could not read checkpoint spec {spec_path}: {e}") from e
    model = build_model(spec, seed=0)
    reference = model.state_dict()
    state: Dict[str, torch.Tensor] = {}
    for name, current in reference.items():
        array = read_tensor(os.path.join(directory, f"{name}.tensor"))
        state[name] = torch.from_numpy(array).to(current.dtype)
    model.load_state_dict(state)
    model.eval()
    return model
