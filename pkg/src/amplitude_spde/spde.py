"""Drift-implicit Euler spectral-Galerkin integration of the full SPDE.

Per mode k and step n::

    u_{n+1} = [u_n + dt (eps^2 L u_n + F(u_n)) + eps sum_j (G(u_n) f_j) dbeta_j] / (1 + dt lambda_k)

The stiff operator A is diagonal and treated implicitly; everything else is
explicit and evaluated pseudo-spectrally on the collocation grid.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError
from .model import ModelSpec
from .noise import NoisePath
from .spectral import SpectralBasis, h_alpha_norm, project_s

BLOWUP_GUARD = 1e6


def snapshot_indices(n_steps: int, stride: int) -> np.ndarray:
    """Steps at which states are stored: every ``stride`` steps plus the final step."""
    if stride < 1:
        raise DomainError("snapshot_stride must be >= 1")
    idx = np.arange(0, n_steps + 1, stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def spde_step(model: ModelSpec, u: np.ndarray, dW: np.ndarray, epsilon: float, dt: float) -> np.ndarray:
    """One drift-implicit Euler step for a (batch of) coefficient vector(s)."""
    grid = model.grid
    ux = grid.to_grid(u)
    rhs = u + dt * (epsilon**2 * model.linear_L(u) + model.cubic_coeff * grid.from_grid(ux * ux * ux))
    if epsilon != 0.0:
        noise = model.diffusion_from_grid(ux)  # (..., n_noise, n_modes)
        rhs = rhs + epsilon * np.einsum("...jk,...j->...k", noise, dW)
    return rhs / (1.0 + dt * model.basis.eigenvalues)


@dataclass(frozen=True, eq=False)
class SpdeTrajectory:
    """Stored snapshots of a solve.

    ``states`` has shape ``(n_snapshots,) + batch_shape + (n_modes,)``.  For a
    single path that blew up, the arrays end at the last finite state; in a
    batch the blown-up samples are NaN from the failing step on.
    """

    times: np.ndarray
    states: np.ndarray
    epsilon: float
    blowup_flag: np.ndarray | bool
    steps: np.ndarray
    basis: SpectralBasis | None = None

    @property
    def slow_times(self) -> np.ndarray:
        return self.epsilon**2 * self.times

    def to_csv(self, target) -> None:
        if self.states.ndim != 2:
            raise DimensionError("CSV export needs a single-sample trajectory")
        with Path(target).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"u{k}" for k in range(1, self.states.shape[-1] + 1)])
            for t, row in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def solve_spde(model: ModelSpec, u0, path: NoisePath, epsilon: float, snapshot_stride: int = 1,
               guard: float = BLOWUP_GUARD) -> SpdeTrajectory:
    """Integrate the SPDE on the fast grid of ``path``.

    ``epsilon = 0`` is accepted and switches off both the noise and the
    ``eps^2 L`` perturbation (a deterministic reference problem).
    """
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"epsilon must lie in [0, 1), got {epsilon}")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape[-1] != model.n_modes:
        raise DimensionError("u0 does not match the model basis")
    if not np.all(np.isfinite(u0)):
        raise DomainError("initial state must be finite")
    if path.n_noise_modes != model.noise_modes:
        raise DimensionError("noise path and model disagree on the number of noise modes")

    batch = path.batch_shape
    u = np.broadcast_to(u0, batch + (model.n_modes,)).copy()
    idx = snapshot_indices(path.n_steps, snapshot_stride)
    states = np.empty((idx.size,) + u.shape)
    states[0] = u
    dead = np.zeros(batch, dtype=bool)
    dead_at = np.full(batch, -1)
    slot = 1
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(path.n_steps):
            u = spde_step(model, u, path.increment(n), epsilon, path.dt)
            norm = np.sqrt(np.sum(u * u, axis=-1))
            bad = ~(norm <= guard) & ~dead
            if np.any(bad):
                dead_at = np.where(bad, n + 1, dead_at)
                dead = dead | bad
                u[bad] = np.nan
                if not batch:
                    break
            if slot < idx.size and idx[slot] == n + 1:
                states[slot] = u
                slot += 1
    times = idx * path.dt
    if not batch and dead:
        keep = idx < dead_at
        return SpdeTrajectory(times[keep], states[keep], epsilon, True, idx[keep], model.basis)
    flag = bool(dead) if not batch else dead
    return SpdeTrajectory(times, states, epsilon, flag, idx, model.basis)


def envelope_norms(u: np.ndarray, a1: np.ndarray, epsilon: float, basis: SpectralBasis,
                   alpha: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Norms of the decomposition ``u = eps a1 + eps^2 a2 + eps psi``.

    ``a1`` holds kernel coordinates (last axis of length kernel_dim); ``a2`` is
    recovered from the kernel part of u and ``psi = P_s u / eps``.
    """
    n = basis.kernel_dim
    a1 = np.asarray(a1, dtype=float)
    a2 = (u[..., :n] / epsilon - a1) / epsilon
    psi = project_s(u, basis) / epsilon
    return (np.sqrt(np.sum(a1 * a1, axis=-1)), np.sqrt(np.sum(a2 * a2, axis=-1)),
            h_alpha_norm(psi, basis, alpha))


def stopping_monitor(traj: SpdeTrajectory, amp, kappa: float, alpha: float = 1.0,
                     basis: SpectralBasis | None = None) -> float | None:
    """First slow time at which ``|a1|``, ``|a2|`` or ``|psi|_alpha`` exceeds ``eps^-kappa``.

    Returns None when the envelope holds on the whole stored horizon.  ``amp``
    is an :class:`~amplitude_spde.amplitude.AmplitudePath` on the same snapshots.
    """
    if not 0.0 < kappa < 1.0 / 20.0:
        raise DomainError(f"kappa must lie in (0, 1/20), got {kappa}")
    if traj.states.ndim != 2:
        raise DimensionError("stopping_monitor expects a single-sample trajectory")
    a1 = np.asarray(amp.a1, dtype=float)
    if a1.ndim == 1:
        a1 = a1[:, None]
    if a1.shape[0] != traj.states.shape[0]:
        raise DimensionError("trajectory and amplitude path are not aligned")
    basis = basis or traj.basis
    if basis is None:
        raise DomainError("no spectral basis attached to the trajectory")
    threshold = traj.epsilon ** (-kappa)
    n1, n2, npsi = envelope_norms(traj.states, a1, traj.epsilon, basis, alpha)
    hit = (n1 > threshold) | (n2 > threshold) | (npsi > threshold)
    if not np.any(hit):
        return None
    return float(amp.slow_times[int(np.argmax(hit))])


def stopping_threshold(epsilon: float, kappa: float) -> float:
    return math.exp(-kappa * math.log(epsilon))
