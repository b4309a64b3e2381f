"""Compute-once weight management with an on-disk binary cache.

Weight vectors depend only on (X, m, d) and are reused across thousands of
assignments, so they are worth persisting.  Cache files carry a header
(n, p, m, d, design fingerprint) followed by n little-endian float64 values;
a fingerprint or parameter mismatch is treated as corruption and triggers a
recompute-and-overwrite.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .design import NormalizedDesign
from .errors import CacheCorrupt
from .folding import DEFAULT_DEGREE_CAP, GramContext, NeumannWeightVector, neumann_weights

_HEADER = struct.Struct("<qqqqQ")  # n, p, m, d, fingerprint

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _fnv1a(data: bytes, state: int = _FNV_OFFSET) -> int:
    for byte in data:
        state ^= byte
        state = (state * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return state


def design_fingerprint(design: NormalizedDesign) -> int:
    """64-bit FNV-1a hash over the row-major bytes of X plus (n, p)."""
    state = _fnv1a(np.ascontiguousarray(design.X).tobytes())
    return _fnv1a(struct.pack("<qq", design.n, design.p), state)


class WeightStore:
    """Caches weight vectors in memory and, when a directory is given, on disk.

    Concurrent computes of the same key are safe: values are deterministic and
    file writes go through a temp file plus atomic rename.
    """

    def __init__(self, cache_dir: str | Path | None = None):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._memory: dict[tuple[int, int, int], NeumannWeightVector] = {}
        self.computations = 0

    def _path(self, fingerprint: int, m: int, d: int) -> Path:
        return self.cache_dir / f"xi_{fingerprint:016x}_m{m}_d{d}.bin"

    def get_or_compute(self, design: NormalizedDesign, m: int, d: int,
                       ctx: GramContext | None = None,
                       max_degree: int = DEFAULT_DEGREE_CAP) -> NeumannWeightVector:
        fingerprint = design_fingerprint(design)
        key = (fingerprint, m, d)
        vector = self._memory.get(key)
        if vector is not None:
            return vector
        if self.cache_dir is not None:
            path = self._path(fingerprint, m, d)
            if path.exists():
                try:
                    vector = _read_cache_file(path, design.n, design.p, m, d, fingerprint)
                except CacheCorrupt:
                    vector = None
                if vector is not None:
                    self._memory[key] = vector
                    return vector
        if ctx is None:
            ctx = GramContext(design)
        vector = neumann_weights(d, m, ctx, max_degree=max_degree)
        self.computations += 1
        self._memory[key] = vector
        if self.cache_dir is not None:
            _write_cache_file(self._path(fingerprint, m, d), design, vector, fingerprint)
        return vector


def _write_cache_file(path: Path, design: NormalizedDesign,
                      vector: NeumannWeightVector, fingerprint: int) -> None:
    payload = _HEADER.pack(design.n, design.p, vector.m, vector.degree, fingerprint)
    payload += np.asarray(vector.xi, dtype="<f8").tobytes()
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _read_cache_file(path: Path, n: int, p: int, m: int, d: int,
                     fingerprint: int) -> NeumannWeightVector:
    data = path.read_bytes()
    if len(data) != _HEADER.size + 8 * n:
        raise CacheCorrupt(f"{path} is truncated")
    file_n, file_p, file_m, file_d, file_fp = _HEADER.unpack_from(data)
    if (file_n, file_p, file_m, file_d) != (n, p, m, d) or file_fp != fingerprint:
        raise CacheCorrupt(f"{path} does not match the requested design and parameters")
    xi = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).copy()
    return NeumannWeightVector(d, m, xi)
