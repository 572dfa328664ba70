"""Binary checkpoint files for velocity fields.

Layout (little-endian): magic "KHM1", format version u32, n_per_axis u32,
nu f64, time f64, step u64, seed u64, then the coefficients as f64
interleaved (re, im) per component per retained mode in lexicographic
k order.  Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .spectral import Grid, SpectralField

MAGIC = b"KHM1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIddQQ")


class CheckpointError(IOError):
    pass


@dataclass(frozen=True)
class CheckpointMeta:
    n: int
    nu: float
    time: float
    step: int
    seed: int


def write_checkpoint(path, field: SpectralField, nu: float, time: float,
                     step: int, seed: int) -> None:
    g = field.grid
    ks = g.retained_k_list
    idx = tuple((ks % g.n).T)
    # (m, 3) complex in lexicographic mode order
    modes = np.stack([field.coeff[i][idx] for i in range(3)], axis=1)
    flat = np.empty(modes.size * 2, dtype="<f8")
    flat[0::2] = modes.real.ravel()
    flat[1::2] = modes.imag.ravel()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, g.n, nu, time, step, seed))
        fh.write(flat.tobytes())


def read_checkpoint(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise CheckpointError(f"{path}: truncated header")
        magic, version, n, nu, time, step, seed = _HEADER.unpack(head)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        grid = Grid(n)
        ks = grid.retained_k_list
        count = len(ks) * 3 * 2
        flat = np.frombuffer(fh.read(count * 8), dtype="<f8")
        if flat.size != count:
            raise CheckpointError(f"{path}: truncated payload")
    modes = (flat[0::2] + 1j * flat[1::2]).reshape(len(ks), 3)
    coeff = np.zeros((3, n, n, n), dtype=np.complex128)
    idx = tuple((ks % n).T)
    for i in range(3):
        coeff[i][idx] = modes[:, i]
    return SpectralField(grid, coeff), CheckpointMeta(n, nu, time, step, seed)
