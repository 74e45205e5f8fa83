"""Truncated cylindrical Wiener increments and the slow-time rescaling.

Each Monte Carlo sample owns a Philox stream keyed by ``(seed, sample_index,
stream)``; the increments are standard normals drawn in row-major
``(step, mode)`` order and scaled by ``sqrt(dt)``.  Samples can therefore be
generated in any order, or in parallel, and still reproduce bit for bit.
"""
from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError

_HEADER = struct.Struct("<dqqQ")  # dt, n_steps, n_modes, seed


def generator(seed: int, sample_index: int = 0, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one (seed, sample, stream) triple."""
    key = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(sample_index), int(stream)])
    return np.random.Generator(np.random.Philox(key))


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Brownian increments on a uniform grid.

    ``increments`` has shape ``(n_steps, n_noise_modes)`` for a single sample or
    ``(n_samples, n_steps, n_noise_modes)`` for a batch.
    """

    dt: float
    increments: np.ndarray
    seed: int = 0
    time_scale: str = "fast"

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim not in (2, 3):
            raise DimensionError("increments must be (n_steps, n_modes) or (n_samples, n_steps, n_modes)")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[-2]

    @property
    def n_noise_modes(self) -> int:
        return self.increments.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.increments.shape[:-2]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def increment(self, n: int) -> np.ndarray:
        """Increments of step n, shape ``batch_shape + (n_noise_modes,)``."""
        return self.increments[..., n, :]

    def brownian(self) -> np.ndarray:
        """Cumulative path W(t_n), n = 0..n_steps, along the step axis."""
        zero = np.zeros(self.batch_shape + (1, self.n_noise_modes))
        return np.concatenate([zero, np.cumsum(self.increments, axis=-2)], axis=-2)

    def __eq__(self, other):
        if not isinstance(other, NoisePath):
            return NotImplemented
        return (self.dt == other.dt and self.seed == other.seed and self.time_scale == other.time_scale
                and np.array_equal(self.increments, other.increments))

    __hash__ = None


def sample_path(dt: float, n_steps: int, n_noise_modes: int = 1, seed: int = 0,
                sample_index: int = 0, stream: int = 0) -> NoisePath:
    """Gaussian increments with variance ``dt``, deterministic in (seed, sample_index, stream)."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if n_steps < 1 or n_noise_modes < 1:
        raise DomainError("n_steps and n_noise_modes must be >= 1")
    z = generator(seed, sample_index, stream).standard_normal((n_steps, n_noise_modes))
    return NoisePath(dt, np.sqrt(dt) * z, seed)


def sample_paths(dt: float, n_steps: int, n_noise_modes: int, seed: int,
                 sample_indices, stream: int = 0) -> NoisePath:
    """Batch of independent samples stacked on a leading axis."""
    rows = [sample_path(dt, n_steps, n_noise_modes, seed, i, stream).increments for i in sample_indices]
    return NoisePath(dt, np.stack(rows), seed)


def rescale_to_slow(path: NoisePath, epsilon: float) -> NoisePath:
    """Increments of ``W~(T) = eps W(T / eps^2)`` on the slow grid ``dT = eps^2 dt``."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    return dataclasses.replace(path, dt=epsilon**2 * path.dt,
                               increments=epsilon * path.increments, time_scale="slow")


def dump_path(path: NoisePath, target) -> None:
    """Binary dump: little-endian header (dt, n_steps, n_modes, seed) then row-major float64."""
    if path.increments.ndim != 2:
        raise DimensionError("only single-sample paths can be dumped")
    with Path(target).open("wb") as fh:
        fh.write(_HEADER.pack(path.dt, path.n_steps, path.n_noise_modes, path.seed & 0xFFFFFFFFFFFFFFFF))
        fh.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())


def load_path(source) -> NoisePath:
    raw = Path(source).read_bytes()
    if len(raw) < _HEADER.size:
        raise DimensionError("file too short for a noise header")
    dt, n_steps, n_modes, seed = _HEADER.unpack_from(raw)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != n_steps * n_modes:
        raise DimensionError(f"expected {n_steps * n_modes} values, found {body.size}")
    return NoisePath(dt, body.reshape(n_steps, n_modes).astype(float), seed)
