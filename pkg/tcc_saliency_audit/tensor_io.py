"""
Tensor file format shared by checkpoints, mask files and synthetic datasets.

A file is one UTF-8 JSON header line, e.g.
    {"shape": [5, 8, 8], "dtype": "f32", "order": "row-major"}
followed by a newline and the raw little-endian payload in row-major order.
"""

import json
import os
from typing import Any, Dict, Tuple, Union

import numpy as np

from .errors import InputError, PersistenceError

PathLike = Union[str, "os.PathLike[str]"]

_DTYPES: Dict[str, np.dtype] = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "i64": np.dtype("<i8"),
    "u8": np.dtype("u1"),
}
_CODES = {(v.kind, v.itemsize): k for k, v in _DTYPES.items()}


def dtype_code(array: np.ndarray) -> str:
    code = _CODES.get((array.dtype.kind, array.dtype.itemsize))
    if code is None:
        raise InputError(f"dtype {array.dtype} has no tensor file code")
    return code


def encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    code = dtype_code(array)
    header = {"shape": [int(s) for s in array.shape], "dtype": code, "order": "row-major"}
    payload = np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes(order="C")
    return json.dumps(header).encode("utf-8") + b"\n" + payload


def decode_tensor(blob: bytes, source: str = "<bytes>") -> np.ndarray:
    newline = blob.find(b"\n")
    if newline < 0:
        raise InputError(f"{source}: missing tensor header line")
    header = _parse_header(blob[:newline], source)
    shape, dtype = header
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = blob[newline + 1:]
    if len(payload) != expected:
        raise InputError(f"{source}: payload has {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def _parse_header(line: bytes, source: str) -> Tuple[Tuple[int, ...], np.dtype]:
    try:
        header: Dict[str, Any] = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise InputError(f"{source}: malformed tensor header: {e}") from e
    if header.get("order", "row-major") != "row-major":
        raise InputError(f"{source}: unsupported order {header.get('order')!r}")
    code = header.get("dtype")
    if code not in _DTYPES:
        raise InputError(f"{source}: unsupported dtype {code!r}")
    shape = tuple(int(s) for s in header.get("shape", []))
    if any(s < 0 for s in shape):
        raise InputError(f"{source}: negative dimension in shape {shape}")
    return shape, _DTYPES[code]


def write_tensor(path: PathLike, array: np.ndarray) -> None:
    """Write atomically (temp file + rename) so readers never see half a tensor"""
    blob = encode_tensor(array)
    tmp = f"{os.fspath(path)}.tmp"
    try:
        directory = os.path.dirname(os.fspath(path))
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(tmp, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except OSError as e:
        raise PersistenceError(f"could not write tensor {path}: {e}") from e


def read_tensor(path: PathLike) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise PersistenceError(f"could not read tensor {path}: {e}") from e
    return decode_tensor(blob, source=os.fspath(path))


def read_tensor_shape(path: PathLike) -> Tuple[int, ...]:
    """Header-only read, used to validate datasets without decoding payloads"""
    try:
        with open(path, "rb") as f:
            line = f.readline()
    except OSError as e:
        raise PersistenceError(f"could not read tensor {path}: {e}") from e
    shape, _ = _parse_header(line.rstrip(b"\n"), os.fspath(path))
    return shape
