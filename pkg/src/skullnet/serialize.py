"""Bit-exact binary serialization for trained models and fitted classifiers.

Both formats are little-endian throughout and end with a 64-bit checksum:
the first 8 bytes of the SHA-256 digest of every preceding byte, read as a
little-endian unsigned integer. load(save(x)) reproduces x bit-exactly and
a failed magic/version/checksum raises IngestionError.

Model file ("SKN1"):
    magic 4s | version u32 | leaky_slope f64 | block_count u32
    then per block: kind u32 | ndim u32 | dims u32[ndim] | payload f32[]
    kinds: 1 conv kernels, 2 conv bias, 3 dense weights, 4 dense bias
    blocks appear in architecture order, kernels before bias
    trailing checksum u64

Classifier file ("SKK1"):
    magic 4s | version u32 | k u32 | s f64 | m u32 | d u32 | labels u32
    features f32[m*d] | labels u8[m*L] | prior1 f64[L] | prior0 f64[L]
    c1 f64[L*(k+1)] | c0 f64[L*(k+1)] | trailing checksum u64
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import IngestionError
from .mlknn import MlknnModel
from .nn import ConvLayer, DenseLayer, ModelParams

MODEL_MAGIC = b"SKN1"
KNN_MAGIC = b"SKK1"
FORMAT_VERSION = 1

_KIND_CONV_KERNELS = 1
_KIND_CONV_BIAS = 2
_KIND_DENSE_WEIGHTS = 3
_KIND_DENSE_BIAS = 4


def _checksum(data: bytes) -> int:
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "little")


def _f32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _block(kind: int, arr: np.ndarray) -> bytes:
    header = struct.pack("<II", kind, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + _f32_bytes(arr)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise IngestionError(f"{self.path}: truncated file")
        out = self.data[self.pos : self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(count * itemsize), dtype=dtype).copy()


def _read_payload(path, magic: bytes) -> _Reader:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if len(data) < 16 or data[:4] != magic:
        raise IngestionError(f"{path}: not a {magic.decode()} file")
    body, stored = data[:-8], data[-8:]
    if _checksum(body) != int.from_bytes(stored, "little"):
        raise IngestionError(f"{path}: checksum mismatch, file is corrupt")
    reader = _Reader(body, path)
    reader.take(4)  # magic
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise IngestionError(f"{path}: unsupported format version {version}")
    return reader


def save_model(params: ModelParams, path) -> None:
    """Write a ModelParams to the SKN1 binary format."""
    blocks = bytearray()
    count = 0
    for layer in params.conv_layers:
        blocks += _block(_KIND_CONV_KERNELS, layer.kernels)
        blocks += _block(_KIND_CONV_BIAS, layer.bias)
        count += 2
    if params.head is not None:
        blocks += _block(_KIND_DENSE_WEIGHTS, params.head.weights)
        blocks += _block(_KIND_DENSE_BIAS, params.head.bias)
        count += 2
    body = MODEL_MAGIC + struct.pack("<IdI", FORMAT_VERSION, params.leaky_slope, count) + blocks
    _write(path, body)


def load_model(path) -> ModelParams:
    """Read a ModelParams back from a SKN1 file."""
    r = _read_payload(path, MODEL_MAGIC)
    leaky_slope, count = r.unpack("<dI")
    arrays: list[tuple[int, np.ndarray]] = []
    for _ in range(count):
        kind, ndim = r.unpack("<II")
        shape = r.unpack(f"<{ndim}I")
        arr = r.array("<f4", int(np.prod(shape))).reshape(shape)
        arrays.append((kind, arr))
    if r.pos != len(r.data):
        raise IngestionError(f"{path}: trailing bytes after last block")

    conv_layers: list[ConvLayer] = []
    head = None
    i = 0
    while i < len(arrays):
        kind, arr = arrays[i]
        if kind == _KIND_CONV_KERNELS:
            if i + 1 >= len(arrays) or arrays[i + 1][0] != _KIND_CONV_BIAS:
                raise IngestionError(f"{path}: conv kernels block without bias block")
            conv_layers.append(ConvLayer(kernels=arr, bias=arrays[i + 1][1]))
            i += 2
        elif kind == _KIND_DENSE_WEIGHTS:
            if i + 1 >= len(arrays) or arrays[i + 1][0] != _KIND_DENSE_BIAS:
                raise IngestionError(f"{path}: dense weights block without bias block")
            head = DenseLayer(weights=arr, bias=arrays[i + 1][1])
            i += 2
        else:
            raise IngestionError(f"{path}: unexpected block kind {kind}")
    return ModelParams(conv_layers=conv_layers, head=head, leaky_slope=float(leaky_slope))


def save_knn(model: MlknnModel, path) -> None:
    """Write a fitted MlknnModel to the SKK1 binary format.

    Features are stored as float32 (the pipeline's native feature dtype).
    """
    m, d = model.features.shape
    n_labels = model.labels.shape[1]
    body = bytearray()
    body += KNN_MAGIC
    body += struct.pack("<IIdIII", FORMAT_VERSION, model.k, model.s, m, d, n_labels)
    body += _f32_bytes(model.features)
    body += np.ascontiguousarray(model.labels, dtype=np.uint8).tobytes()
    body += np.ascontiguousarray(model.prior1, dtype="<f8").tobytes()
    body += np.ascontiguousarray(model.prior0, dtype="<f8").tobytes()
    body += np.ascontiguousarray(model.c1, dtype="<f8").tobytes()
    body += np.ascontiguousarray(model.c0, dtype="<f8").tobytes()
    _write(path, bytes(body))


def load_knn(path) -> MlknnModel:
    """Read a fitted MlknnModel back from a SKK1 file."""
    r = _read_payload(path, KNN_MAGIC)
    k, s, m, d, n_labels = r.unpack("<IdIII")
    features = r.array("<f4", m * d).reshape(m, d)
    labels = r.array("u1", m * n_labels).reshape(m, n_labels).astype(np.int8)
    prior1 = r.array("<f8", n_labels)
    prior0 = r.array("<f8", n_labels)
    c1 = r.array("<f8", n_labels * (k + 1)).reshape(n_labels, k + 1)
    c0 = r.array("<f8", n_labels * (k + 1)).reshape(n_labels, k + 1)
    if r.pos != len(r.data):
        raise IngestionError(f"{path}: trailing bytes after tables")
    return MlknnModel(
        features=features,
        labels=labels,
        k=int(k),
        s=float(s),
        prior1=prior1,
        prior0=prior0,
        c1=c1,
        c0=c0,
    )


def _write(path, body: bytes) -> None:
    data = body + _checksum(body).to_bytes(8, "little")
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IngestionError(f"cannot write {path}: {exc}") from exc
