"""Binary sample/parameter files, CSV tables and graymaps.

Sample file ("SPNL", little endian)::

    magic  b"SPNL"
    u16    version (1)
    u32    L
    u32    count
    f64    temperature
    f64    alpha
    u64    seed
    count * L * L bytes, row-major, 0x00 = -1 and 0x01 = +1

RBM file ("RBMW"): magic, u16 version, u32 n_visible, u32 n_hidden, then f64
W (row-major), b_v, b_h. Thermometer file ("THRM"): magic, u16 version,
u32 n_inputs, u32 width, u32 n_classes, then f64 class temperatures, W1, b1,
W2, b2.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .geometry import LatticeGeometry
from .mcmc import SampleSet
from .rbm import RbmParams
from .thermometer import ThermometerModel

VERSION = 1
_SPNL = struct.Struct("<4sHIIddQ")
_RBMW = struct.Struct("<4sHII")
_THRM = struct.Struct("<4sHIII")


class FormatError(ValueError):
    pass


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def encode_samples(samples: SampleSet) -> bytes:
    n, L, _ = samples.grids.shape
    head = _SPNL.pack(b"SPNL", VERSION, L, n, float(samples.temperature),
                      float(samples.geometry.alpha), int(samples.seed) % (1 << 64))
    return head + (samples.grids > 0).astype(np.uint8).tobytes(order="C")


def decode_samples(data: bytes, mu: float = 0.0) -> SampleSet:
    if len(data) < _SPNL.size:
        raise FormatError("sample file truncated")
    magic, version, L, n, temperature, alpha, seed = _SPNL.unpack_from(data)
    if magic != b"SPNL":
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported sample format version {version}")
    body = np.frombuffer(data, dtype=np.uint8, offset=_SPNL.size)
    if body.size != n * L * L:
        raise FormatError(f"expected {n * L * L} spin bytes, found {body.size}")
    if np.any(body > 1):
        raise FormatError("spin bytes must be 0x00 or 0x01")
    grids = (2 * body.astype(np.int8) - 1).reshape(n, L, L)
    return SampleSet(grids, temperature, LatticeGeometry(L, alpha, mu), seed)


def write_samples(path, samples: SampleSet) -> None:
    _atomic_write(path, encode_samples(samples))


def read_samples(path, mu: float = 0.0) -> SampleSet:
    return decode_samples(Path(path).read_bytes(), mu)


def _f64(*arrays) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)


def encode_rbm(p: RbmParams) -> bytes:
    return _RBMW.pack(b"RBMW", VERSION, p.n_visible, p.n_hidden) + _f64(p.W, p.b_v, p.b_h)


def decode_rbm(data: bytes) -> RbmParams:
    magic, version, nv, nh = _RBMW.unpack_from(data)
    if magic != b"RBMW" or version != VERSION:
        raise FormatError("not an RBM parameter file")
    vals = np.frombuffer(data, dtype="<f8", offset=_RBMW.size)
    if vals.size != nv * nh + nv + nh:
        raise FormatError("RBM parameter file has the wrong length")
    return RbmParams(vals[:nv * nh].reshape(nv, nh).copy(), vals[nv * nh:nv * nh + nv].copy(),
                     vals[nv * nh + nv:].copy())


def write_rbm(path, p: RbmParams) -> None:
    _atomic_write(path, encode_rbm(p))


def read_rbm(path) -> RbmParams:
    return decode_rbm(Path(path).read_bytes())


def encode_thermometer(m: ThermometerModel) -> bytes:
    N, H = m.W1.shape
    C = len(m.temperatures)
    return (_THRM.pack(b"THRM", VERSION, N, H, C)
            + _f64(m.temperatures, m.W1, m.b1, m.W2, m.b2))


def decode_thermometer(data: bytes) -> ThermometerModel:
    magic, version, N, H, C = _THRM.unpack_from(data)
    if magic != b"THRM" or version != VERSION:
        raise FormatError("not a thermometer parameter file")
    vals = np.frombuffer(data, dtype="<f8", offset=_THRM.size).copy()
    sizes = [C, N * H, H, H * C, C]
    if vals.size != sum(sizes):
        raise FormatError("thermometer file has the wrong length")
    parts = np.split(vals, np.cumsum(sizes)[:-1])
    return ThermometerModel(parts[0], parts[1].reshape(N, H), parts[2],
                            parts[3].reshape(H, C), parts[4])


def write_thermometer(path, m: ThermometerModel) -> None:
    _atomic_write(path, encode_thermometer(m))


def read_thermometer(path) -> ThermometerModel:
    return decode_thermometer(Path(path).read_bytes())


def fmt(x) -> str:
    """Shortest round-trip text for a number."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows, comment: str) -> None:
    lines = [f"# {comment}", ",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def read_csv(path):
    """(header, rows of strings), skipping comment lines."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def graymap(values: np.ndarray) -> bytes:
    """Binary PGM of a [-1, 1] map, linearly rescaled to 0..255."""
    v = np.clip(np.asarray(values, dtype=np.float64), -1.0, 1.0)
    pix = np.floor((v + 1.0) * 127.5 + 0.5).astype(np.uint8)
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode() + pix.tobytes()


def write_graymap(path, values: np.ndarray) -> None:
    _atomic_write(path, graymap(values))
