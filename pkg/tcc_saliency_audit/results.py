"""
Results store: run records, checkpoints, mask files and verdicts under one
output directory.

    <out_dir>/runs/<run_id>.json
    <out_dir>/checkpoints/<run_id>/
    <out_dir>/masks/<run_id>/<seq_id>.{spatial,temporal}.tensor
    <out_dir>/verdicts/<name>.json
"""

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from .errors import InputError, PersistenceError, RunLookupError
from .logger import get_logger
from .interventions import WeightSource
from .metrics import ErrorSummary, summarize_errors
from .model_zoo import ModelSpec

logger = get_logger(__name__)

EXPORT_FORMATS = ("JSON", "CSV")


def make_run_id(label: str, payload: Dict[str, Any]) -> str:
    """Deterministic id: readable prefix plus a digest of everything that defines the run"""
    digest = hashlib.sha1(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()[:12]
    return f"{label}-{digest}"


@dataclass
class RunRecord:
    run_id: str
    spec: ModelSpec
    weight_source: WeightSource
    fold: Optional[int]
    item_ids: List[str]
    per_item_errors: List[float]
    summary: ErrorSummary
    mask_refs: List[str] = field(default_factory=list)
    wall_time: float = 0.0
    seeds: Dict[str, int] = field(default_factory=dict)
    checkpoint: Optional[str] = None

    @classmethod
    def create(cls, run_id: str, spec: ModelSpec, weight_source: WeightSource, fold: Optional[int],
               item_ids: Sequence[str], errors: Sequence[float], **kwargs: Any) -> "RunRecord":
        if len(item_ids) != len(errors):
            raise InputError("one error per evaluated item is required")
        return cls(run_id, spec, weight_source, fold, list(item_ids), [float(e) for e in errors],
                   summarize_errors(errors), **kwargs)

    @property
    def mae(self) -> float:
        return self.summary.mean

    def to_dict(self) -> Dict[str, Any]:
        return {
            "runId": self.run_id,
            "spec": self.spec.to_dict(),
            "weightSource": self.weight_source.to_dict(),
            "fold": self.fold,
            "summary": self.summary.to_dict(),
            "itemIds": list(self.item_ids),
            "perItemErrors": list(self.per_item_errors),
            "maskRefs": list(self.mask_refs),
            "wallTime": self.wall_time,
            "seeds": dict(self.seeds),
            "checkpoint": self.checkpoint,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunRecord":
        record = cls(
            run_id=data["runId"],
            spec=ModelSpec.from_dict(data["spec"]),
            weight_source=WeightSource.from_dict(data["weightSource"]),
            fold=data.get("fold"),
            item_ids=list(data.get("itemIds", [])),
            per_item_errors=[float(e) for e in data["perItemErrors"]],
            summary=ErrorSummary.from_dict(data["summary"]),
            mask_refs=list(data.get("maskRefs", [])),
            wall_time=float(data.get("wallTime", 0.0)),
            seeds={k: int(v) for k, v in data.get("seeds", {}).items()},
            checkpoint=data.get("checkpoint"),
        )
        if not record.summary.matches(summarize_errors(record.per_item_errors)):
            raise PersistenceError(f"run {record.run_id}: summary does not match its per-item errors")
        return record


def _write_json_atomic(path: str, payload: Any) -> None:
    tmp = f"{path}.tmp"
    try:
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(tmp, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, path)
    except OSError as e:
        raise PersistenceError(f"could not write {path}: {e}") from e


def _read_json(path: str) -> Any:
    try:
        with open(path, "r") as f:
            return json.load(f)
    except (OSError, ValueError) as e:
        raise PersistenceError(f"could not read {path}: {e}") from e


class ResultsStore:
    """Single-writer store; each record is committed with an atomic rename"""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.runs_dir = os.path.join(out_dir, "runs")
        self.checkpoints_dir = os.path.join(out_dir, "checkpoints")
        self.masks_root = os.path.join(out_dir, "masks")
        self.verdicts_dir = os.path.join(out_dir, "verdicts")

    def run_path(self, run_id: str) -> str:
        return os.path.join(self.runs_dir, f"{run_id}.json")

    def checkpoint_dir(self, run_id: str) -> str:
        return os.path.join(self.checkpoints_dir, run_id)

    def masks_dir(self, run_id: str) -> str:
        return os.path.join(self.masks_root, run_id)

    def has_run(self, run_id: str) -> bool:
        return os.path.exists(self.run_path(run_id))

    def save_run(self, record: RunRecord) -> str:
        path = self.run_path(record.run_id)
        _write_json_atomic(path, record.to_dict())
        logger.info(f"Persisted run {record.run_id} (MAE {record.mae:.3f} deg)")
        return path

    def load_run(self, run_id: str) -> RunRecord:
        if not self.has_run(run_id):
            raise RunLookupError(f"unknown run {run_id}")
        return RunRecord.from_dict(_read_json(self.run_path(run_id)))

    def list_runs(self) -> List[str]:
        if not os.path.isdir(self.runs_dir):
            return []
        return sorted(name[:-5] for name in os.listdir(self.runs_dir) if name.endswith(".json"))

    def verdicts_path(self, name: str) -> str:
        return os.path.join(self.verdicts_dir, f"{name}.json")

    def save_verdicts(self, name: str, payload: Dict[str, Any]) -> str:
        path = self.verdicts_path(name)
        _write_json_atomic(path, payload)
        return path

    def load_verdicts(self, name: str) -> Optional[Dict[str, Any]]:
        path = self.verdicts_path(name)
        return _read_json(path) if os.path.exists(path) else None

    def write_text(self, name: str, text: str) -> str:
        path = os.path.join(self.out_dir, name)
        tmp = f"{path}.tmp"
        try:
            os.makedirs(self.out_dir, exist_ok=True)
            with open(tmp, "w") as f:
                f.write(text)
            os.replace(tmp, path)
        except OSError as e:
            raise PersistenceError(f"could not write {path}: {e}") from e
        return path


# --------------------------------------------------------------------------
# Export / import
# --------------------------------------------------------------------------


def export_results(store: ResultsStore, run_ids: Sequence[str], fmt: str, path: str) -> str:
    """JSON: list of full records. CSV: one summary row per run."""
    fmt = fmt.upper()
    if fmt not in EXPORT_FORMATS:
        raise InputError(f"unknown export format {fmt!r}")
    records = [store.load_run(run_id) for run_id in run_ids]
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        if fmt == "JSON":
            with open(path, "w") as f:
                json.dump([r.to_dict() for r in records], f, indent=2, sort_keys=True)
                f.write("\n")
        else:
            rows = []
            for r in records:
                row = {"runId": r.run_id, "config": r.spec.label,
                       "spatialContextual": r.spec.spatial_contextual,
                       "temporalContextual": r.spec.temporal_contextual,
                       "weightSource": r.weight_source.kind.value, "fold": r.fold}
                row.update(r.summary.to_dict())
                rows.append(row)
            pd.DataFrame(rows).to_csv(path, index=False)
    except OSError as e:
        raise PersistenceError(f"could not export results to {path}: {e}") from e
    logger.info(f"Exported {len(records)} runs to {path} ({fmt})")
    return path


def import_results(path: str) -> List[RunRecord]:
    """Inverse of a JSON export"""
    payload = _read_json(path)
    if not isinstance(payload, list):
        raise InputError(f"{path} is not a JSON results export")
    return [RunRecord.from_dict(item) for item in payload]


def read_csv_export(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except (OSError, ValueError) as e:
        raise PersistenceError(f"could not read {path}: {e}") from e
