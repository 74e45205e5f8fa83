"""Reduced amplitude equations on the kernel N of A and the fast-mode corrections.

Everything is integrated with Euler-Maruyama on the slow grid ``T_n = n dT``
driven by the rescaled increments ``dW~ = eps dW`` of the SPDE path, so the
reduced and full solutions share one realisation of the noise.

Coefficients are taken from a :class:`ReducedModel`, i.e. the projections of
L, F, G'(0) and G''(0) onto basis vectors, computed once with the model's own
collocation routines.  Amplitudes carry a trailing axis of length
``kernel_dim``; leading axes are snapshot and (optionally) sample axes.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConvergenceError, DimensionError, DomainError, PreconditionError
from .model import ModelSpec, satisfies_case1
from .noise import NoisePath
from .spde import BLOWUP_GUARD, snapshot_indices
from .spectral import SpectralBasis, semigroup_apply, tensor_inverse_weights

CASE_I = "CaseI"
CASE_II = "CaseII"
COUPLINGS = ("same", "signed", "normalized")


# -- reduced coefficients ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReducedModel:
    """Projected coefficient tensors of a model.

    ``L_c[m, i] = <L e_i, e_m>`` and ``F_c[m, a, b, c] = <F(e_a, e_b, e_c), e_m>``
    on the kernel; ``Gp[j, m, i] = <G'(0)(e_i) f_j, e_m>`` on all modes;
    ``Gpp_c[j, m, a, b] = <G''(0)(e_a, e_b) f_j, e_m>`` with m, a, b in the kernel.
    """

    basis: SpectralBasis
    L_c: np.ndarray
    F_c: np.ndarray
    Gp: np.ndarray
    Gpp_c: np.ndarray

    @property
    def kernel_dim(self) -> int:
        return self.basis.kernel_dim

    @property
    def Gp_cc(self) -> np.ndarray:
        n = self.kernel_dim
        return self.Gp[:, :n, :n]

    @property
    def Gp_sc(self) -> np.ndarray:
        """G'_s(0) restricted to kernel directions: ``[j, stable component, kernel direction]``."""
        n = self.kernel_dim
        return self.Gp[:, n:, :n]


def _chop(a: np.ndarray, rel: float = 1e-13) -> np.ndarray:
    scale = float(np.max(np.abs(a), initial=0.0))
    return np.where(np.abs(a) <= rel * scale, 0.0, a)


def reduce_model(model: ModelSpec) -> ReducedModel:
    n = model.basis.kernel_dim
    eye = np.eye(model.n_modes)
    kern = eye[:n]
    L_c = model.linear_L(kern)[:, :n].T
    a, b, c = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    F = model.trilinear_F(kern[a.ravel()], kern[b.ravel()], kern[c.ravel()])[:, :n]
    F_c = F.reshape(n, n, n, n).transpose(3, 0, 1, 2)
    Gp = model.g_prime0(eye).transpose(1, 2, 0)  # (direction, j, out) -> (j, out, direction)
    a, b = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    Gpp = model.g_doubleprime0(kern[a.ravel()], kern[b.ravel()])[..., :n]  # (pairs, j, out)
    Gpp_c = Gpp.reshape(n, n, model.noise_modes, n).transpose(2, 3, 0, 1)
    return ReducedModel(model.basis, _chop(L_c), _chop(F_c), _chop(Gp), _chop(Gpp_c))


# -- per-step right-hand sides ------------------------------------------------

def first_order_drift(red: ReducedModel, a1: np.ndarray) -> np.ndarray:
    return a1 @ red.L_c.T + np.einsum("mabc,...a,...b,...c->...m", red.F_c, a1, a1, a1)


def first_order_noise(red: ReducedModel, a1: np.ndarray) -> np.ndarray:
    """``G'_c(0)(a1) f_j`` stacked as ``(..., n_noise, kernel_dim)``."""
    return np.einsum("jmi,...i->...jm", red.Gp_cc, a1)


def first_order_step(red: ReducedModel, a1, dW, dT: float) -> np.ndarray:
    noise = first_order_noise(red, a1)
    return a1 + dT * first_order_drift(red, a1) + np.einsum("...jm,...j->...m", noise, dW)


def case1_drift(red: ReducedModel, a1, a2) -> np.ndarray:
    return a2 @ red.L_c.T + 3.0 * np.einsum("mabc,...a,...b,...c->...m", red.F_c, a1, a1, a2)


def case1_noise(red: ReducedModel, a1, a2) -> np.ndarray:
    return (np.einsum("jmi,...i->...jm", red.Gp_cc, a2)
            + 0.5 * np.einsum("jmab,...a,...b->...jm", red.Gpp_c, a1, a1))


def case1_step(red: ReducedModel, a1, a2, dW, dT: float) -> np.ndarray:
    noise = case1_noise(red, a1, a2)
    return a2 + dT * case1_drift(red, a1, a2) + np.einsum("...jm,...j->...m", noise, dW)


def fast_K_step(red: ReducedModel, K, a1, Q, dW, decay: np.ndarray) -> np.ndarray:
    """``K <- decay * (K + P_s sum_j G'(0)(a1 + Q) f_j dW_j)`` (kernel entries stay zero)."""
    n = red.kernel_dim
    direction = Q.copy() if Q is not None else np.zeros(np.shape(K))
    direction[..., :n] += a1
    push = np.einsum("jmi,...i,...j->...m", red.Gp[:, n:, :], direction, dW)
    out = np.zeros(np.broadcast_shapes(np.shape(K), push.shape[:-1] + (red.basis.n_modes,)))
    out[..., n:] = decay[n:] * (np.asarray(K)[..., n:] + push)
    return out


# -- paths ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AmplitudePath:
    """Amplitude snapshots on the slow grid.

    ``a1`` and ``a2`` have shape ``(n_snapshots,) + batch_shape + (kernel_dim,)``;
    ``a2`` is None for a first-order solve.  ``steps`` are the slow-grid indices
    of the snapshots.  ``clamp_count`` and ``evaluations`` count negative
    quadratic-variation densities in Case II solves.
    """

    slow_times: np.ndarray
    a1: np.ndarray
    a2: np.ndarray | None
    case_tag: str
    steps: np.ndarray
    epsilon: float = 0.0
    blowup_flag: np.ndarray | bool = False
    clamp_count: int = 0
    evaluations: int = 0
    coupling: str | None = None

    @property
    def clamp_fraction(self) -> float:
        return self.clamp_count / self.evaluations if self.evaluations else 0.0

    @property
    def full_resolution(self) -> bool:
        return bool(np.array_equal(self.steps, np.arange(self.steps.size)))

    def to_csv(self, target) -> None:
        if self.a1.ndim != 2:
            raise DimensionError("CSV export needs a single-sample path")
        n = self.a1.shape[-1]
        names = ["a1", "a2"] if n == 1 else [f"a1_{i + 1}" for i in range(n)] + [f"a2_{i + 1}" for i in range(n)]
        a2 = self.a2 if self.a2 is not None else np.full_like(self.a1, np.nan)
        with Path(target).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T"] + names)
            for T, r1, r2 in zip(self.slow_times, self.a1, a2):
                w.writerow([repr(float(T))] + [repr(float(v)) for v in np.r_[r1, r2]])


def _as_amplitude(x, n: int, batch: tuple) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[-1] != n:
        raise DimensionError(f"amplitude must have {n} kernel components, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("initial amplitude must be finite")
    return np.broadcast_to(x, batch + (n,)).copy()


def _check_full(a1_path: AmplitudePath, path: NoisePath) -> None:
    if not a1_path.full_resolution or a1_path.steps.size != path.n_steps + 1:
        raise DimensionError("a1_path must be stored at every step of the driving path (snapshot_stride=1)")


def _march(state, n_steps: int, stride: int, step: Callable[[int, tuple], tuple], record: int = 1):
    """Run ``step`` n_steps times and store the first ``record`` components of the state.

    Batch members whose stored components leave the finite/guarded range are
    frozen at NaN; a single (unbatched) path stops at the first such step.
    Returns (snapshots, steps, dead mask).
    """
    idx = snapshot_indices(n_steps, stride)
    snaps = [np.empty((idx.size,) + np.shape(state[i])) for i in range(record)]
    for i in range(record):
        snaps[i][0] = state[i]
    batch = np.shape(state[0])[:-1]
    dead = np.zeros(batch, dtype=bool)
    dead_at = np.full(batch, -1)
    slot = 1
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            state = step(n, state)
            norm = sum(np.sum(np.abs(state[i]), axis=-1) for i in range(record))
            bad = ~(norm <= BLOWUP_GUARD) & ~dead
            if np.any(bad):
                dead_at = np.where(bad, n + 1, dead_at)
                dead = dead | bad
                for i in range(record):
                    state[i][bad] = np.nan
                if not batch:
                    break
            if slot < idx.size and idx[slot] == n + 1:
                for i in range(record):
                    snaps[i][slot] = state[i]
                slot += 1
    if not batch and dead:
        keep = idx < dead_at
        return [s[keep] for s in snaps], idx[keep], True
    return snaps, idx, (bool(dead) if not batch else dead)


def solve_first_order(model: ModelSpec, a1_0, slow_path: NoisePath, epsilon: float,
                      snapshot_stride: int = 1, reduced: ReducedModel | None = None) -> AmplitudePath:
    """Euler-Maruyama for ``da1 = (L_c a1 + F_c(a1)) dT + G'_c(0)(a1) dW~``."""
    red = reduced or reduce_model(model)
    if slow_path.n_noise_modes != model.noise_modes:
        raise DimensionError("noise path and model disagree on the number of noise modes")
    a1 = _as_amplitude(a1_0, red.kernel_dim, slow_path.batch_shape)
    dT = slow_path.dt

    def step(n, state):
        return (first_order_step(red, state[0], slow_path.increment(n), dT),)

    (snaps,), idx, dead = _march((a1,), slow_path.n_steps, snapshot_stride, step)
    tag = CASE_I if satisfies_case1(model) else CASE_II
    return AmplitudePath(idx * dT, snaps, None, tag, idx, epsilon, dead)


def solve_second_order_case1(model: ModelSpec, a2_0, a1_path: AmplitudePath, slow_path: NoisePath,
                             epsilon: float, snapshot_stride: int = 1,
                             reduced: ReducedModel | None = None) -> AmplitudePath:
    """Euler-Maruyama for ``da2 = (L_c a2 + 3F_c(a1,a1,a2)) dT + (G'_c(0)(a2) + G''_c(0)(a1,a1)/2) dW~``."""
    if not satisfies_case1(model):
        raise PreconditionError(
            "the cross term G'_c(0)(Y) does not vanish for this model; use solve_second_order_case2")
    red = reduced or reduce_model(model)
    _check_full(a1_path, slow_path)
    a2 = _as_amplitude(a2_0, red.kernel_dim, slow_path.batch_shape)
    a1 = a1_path.a1
    dT = slow_path.dt

    def step(n, state):
        return (case1_step(red, a1[n], state[0], slow_path.increment(n), dT),)

    (snaps,), idx, dead = _march((a2,), slow_path.n_steps, snapshot_stride, step)
    return AmplitudePath(idx * dT, a1[idx], snaps, CASE_I, idx, epsilon, dead)


# -- Case II coefficients ------------------------------------------------------

def _p_odd(k: np.ndarray) -> np.ndarray:
    return (2 * k + 1.0) ** 2 * (4.0 * k * k + 4 * k - 3) ** 2


_SERIES_PREFACTOR = 2.0**12 / math.pi**6
SIGMA1_NOISE_PART = 128.0 / (9.0 * math.pi**3)


def allen_cahn_sigma1_partial(terms: int) -> float:
    """Noise part plus the double series truncated at ``terms`` per index."""
    if terms < 1:
        raise DomainError("terms must be >= 1")
    k = np.arange(1, terms + 1, dtype=float)
    inv_p = 1.0 / _p_odd(k)
    denom = k[:, None] ** 2 + k[None, :] ** 2 + k[:, None] + k[None, :]
    series = float(np.sum(inv_p[:, None] * inv_p[None, :] / denom))
    return SIGMA1_NOISE_PART + _SERIES_PREFACTOR * series


def allen_cahn_sigma1_tail_bound(terms: int) -> float:
    """Upper bound on what the terms beyond ``terms`` per index can add.

    Uses ``p(k) >= 64 k^6`` and ``k^2 + j^2 + k + j >= k^2``, so the part with
    ``k > K`` is at most ``S_p / (448 K^7)``; the symmetric part doubles it.
    """
    k = np.arange(1, terms + 1, dtype=float)
    s_p = float(np.sum(1.0 / _p_odd(k))) + 1.0 / (320.0 * terms**5)
    return _SERIES_PREFACTOR * 2.0 * s_p / (448.0 * terms**7)


def allen_cahn_sigma1_series(tol: float, max_terms: int = 4096) -> tuple[float, int, float]:
    """Sum the closed double series until the tail bound drops below ``tol``.

    Returns (value, terms per index, tail bound).
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    terms = 8
    while terms <= max_terms:
        bound = allen_cahn_sigma1_tail_bound(terms)
        if bound < tol:
            return allen_cahn_sigma1_partial(terms), terms, bound
        terms *= 2
    raise ConvergenceError(f"tail bound still above {tol:g} after {max_terms} terms per index")


@dataclass(frozen=True)
class SigmaCoefficients:
    """Coefficients of the Case II quadratic-variation density.

    ``q(b, a1) = sigma1 b^2 + sigma2_bar a1^2 b + sigma3_bar a1^4`` and the drift
    factor ``sigma4(a1) = L_11 + 3 F_1111 a1^2`` (one-dimensional kernel).
    ``noise_first`` and ``noise_second`` hold, per noise mode, the factors of
    ``b`` and ``a1^2`` in the kernel noise ``G'_c(0)(b) + G''_c(0)(a1, a1)/2``.
    """

    sigma1: float
    sigma2_bar: float
    sigma3_bar: float
    drift_linear: float
    drift_cubic: float
    noise_first: np.ndarray
    noise_second: np.ndarray
    sigma1_noise_part: float
    sigma1_generic: float
    sigma1_series: float | None = None
    series_terms: int = 0
    series_tail_bound: float = 0.0

    def sigma2_fn(self, a1):
        return self.sigma2_bar * np.square(a1)

    def sigma3_fn(self, a1):
        return self.sigma3_bar * np.square(np.square(a1))

    def sigma4_fn(self, a1):
        return self.drift_linear + self.drift_cubic * np.square(a1)

    def q(self, b, a1):
        return self.sigma1 * np.square(b) + self.sigma2_fn(a1) * b + self.sigma3_fn(a1)

    @property
    def discrepancy(self) -> float:
        """Difference between the closed series and the generic tensor route (0 when no series)."""
        return 0.0 if self.sigma1_series is None else abs(self.sigma1_series - self.sigma1_generic)


def _is_allen_cahn_case2(model: ModelSpec) -> bool:
    return model.name == "allen-cahn" and model.parameters.get("noise") == "case2"


def sigma1_generic_parts(red: ReducedModel) -> tuple[float, float]:
    """(noise part, tensor part) of sigma1 from the projected coefficient tensors.

    The tensor part is ``-1/2 sum_{k,l in S} w_kl (sum_i r_ik r_il)(sum_j s_jk s_jl)`` with
    ``s_jk = <G'(0)(e_1) f_j, e_k>``, ``r_ik = <G'(0)(e_k) f_i, e_1>`` and ``w`` the
    pseudo-inverse weights of ``I (x)_s A``.
    """
    if red.kernel_dim != 1:
        raise DomainError("Case II coefficients need a one-dimensional kernel")
    noise = float(np.sum(red.Gp[:, 0, 0] ** 2))
    s = red.Gp[:, 1:, 0]
    r = red.Gp[:, 0, 1:]
    w = tensor_inverse_weights(red.basis)[1:, 1:]
    tensor = -0.5 * float(np.sum(w * (r.T @ r) * (s.T @ s)))
    return noise, tensor


def sigma_coefficients(model: ModelSpec, tol: float = 1e-10,
                       reduced: ReducedModel | None = None) -> SigmaCoefficients:
    """Case II sigma coefficients; for the Allen-Cahn instance sigma1 is also summed in closed form.

    The closed series value is used when available; the generic value (truncated
    at the model's n_modes) is kept for reconciliation and a warning is issued
    if the two differ by more than ``10 tol``.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    red = reduced or reduce_model(model)
    noise, tensor = sigma1_generic_parts(red)
    generic = noise + tensor
    c = red.Gp[:, 0, 0].copy()
    d = 0.5 * red.Gpp_c[:, 0, 0, 0]
    series = None
    terms, bound = 0, 0.0
    sigma1 = generic
    if _is_allen_cahn_case2(model):
        series, terms, bound = allen_cahn_sigma1_series(tol)
        sigma1 = series
        if abs(series - generic) > 10 * tol:
            warnings.warn(f"sigma1 routes differ by {abs(series - generic):.3e} (> 10 tol); "
                          "increase n_modes / n_quad", RuntimeWarning, stacklevel=2)
    return SigmaCoefficients(
        sigma1=sigma1,
        sigma2_bar=float(2.0 * np.sum(c * d)),
        sigma3_bar=float(np.sum(d * d)),
        drift_linear=float(red.L_c[0, 0]),
        drift_cubic=float(3.0 * red.F_c[0, 0, 0, 0]),
        noise_first=c,
        noise_second=d,
        sigma1_noise_part=noise,
        sigma1_generic=generic,
        sigma1_series=series,
        series_terms=terms,
        series_tail_bound=bound,
    )


# -- Case II second-order equation ---------------------------------------------

def case2_density(sig: SigmaCoefficients, b1, b2, clamp_tol: float = 1e-12):
    """Clamped square root of q and the mask of evaluations that had to be clamped."""
    q = sig.q(b2, b1)
    scale = np.maximum(1.0, sig.sigma1 * b2 * b2 + np.abs(sig.sigma2_fn(b1) * b2) + np.abs(sig.sigma3_fn(b1)))
    return np.sqrt(np.maximum(q, 0.0)), q < -clamp_tol * scale


def case2_driver_increment(coupling: str, sig: SigmaCoefficients, b1, b2, dW, root, fallback_dW,
                           cross=None, q_tol: float = 1e-12):
    """Increment of the scalar driver B under a given coupling to the slow noise.

    ``same``: dB = dW~ of noise mode 0.  ``signed``: dB = sum_j m_j dW~_j / |m| with
    ``m_j = c_j b2 + d_j b1^2`` the kernel noise factors (an exact Brownian increment,
    equal to ``sign(m) dW~`` for one noise mode).  ``normalized``: dB = dM1 / sqrt(q),
    where dM1 adds the fast cross term ``cross_j`` (``eps^-1 <G'(0)(Y) f_j, e_1>``).
    Where the normaliser vanishes the fallback increment is used.
    """
    dW = np.asarray(dW)
    if coupling == "same":
        return dW[..., 0]
    m = sig.noise_first * np.asarray(b2)[..., None] + sig.noise_second * np.square(b1)[..., None]
    if coupling == "signed":
        norm = np.sqrt(np.sum(m * m, axis=-1))
        ok = norm > 0
        return np.where(ok, np.sum(m * dW, axis=-1) / np.where(ok, norm, 1.0), fallback_dW)
    if coupling == "normalized":
        if cross is not None:
            m = m + cross
        dM = np.sum(m * dW, axis=-1)
        ok = root > q_tol
        return np.where(ok, dM / np.where(ok, root, 1.0), fallback_dW)
    raise DomainError(f"unknown coupling {coupling!r}; choose from {COUPLINGS}")


def case2_cross(red: ReducedModel, Y, epsilon: float) -> np.ndarray:
    """``eps^-1 <G'(0)(Y) f_j, e_1>`` per noise mode, shape ``(..., n_noise)``."""
    return np.einsum("jk,...k->...j", red.Gp[:, 0, 1:], np.asarray(Y)[..., 1:]) / epsilon


def solve_second_order_case2(model: ModelSpec, a2_0, a1_path: AmplitudePath, driver: NoisePath,
                             sigmas: SigmaCoefficients, epsilon: float, coupling: str = "signed",
                             fallback: NoisePath | None = None, snapshot_stride: int = 1,
                             reduced: ReducedModel | None = None, clamp_tol: float = 1e-12,
                             frozen: np.ndarray | None = None) -> AmplitudePath:
    """Euler-Maruyama for ``db = sigma4(a1) b dT + sqrt(max(q(b, a1), 0)) dB``.

    ``driver`` is the slow noise path shared with ``a1``; the driver B is built
    from it according to ``coupling`` (see :func:`case2_driver_increment`).
    ``fallback`` supplies increments wherever the coupling is undefined
    (default: noise mode 0 of ``driver``).  With ``frozen`` (a process on the
    full slow grid) the diffusion is evaluated at ``frozen`` instead of the
    solution, which is the auxiliary equation used to compare with b~2.
    """
    if coupling not in COUPLINGS:
        raise DomainError(f"unknown coupling {coupling!r}; choose from {COUPLINGS}")
    red = reduced or reduce_model(model)
    if red.kernel_dim != 1:
        raise DomainError("Case II is implemented for a one-dimensional kernel only")
    _check_full(a1_path, driver)
    if fallback is not None and (fallback.n_steps != driver.n_steps or fallback.batch_shape != driver.batch_shape):
        raise DimensionError("fallback path must match the driver")
    if frozen is not None:
        frozen = np.asarray(frozen, dtype=float)
        if frozen.shape[0] != driver.n_steps + 1:
            raise DimensionError("frozen process must be given on every slow step")
    b2 = _as_amplitude(a2_0, 1, driver.batch_shape)[..., 0]
    b1 = a1_path.a1[..., 0]
    dT = driver.dt
    decay = np.exp(-red.basis.eigenvalues * dT / epsilon**2) if coupling == "normalized" else None
    counts = {"clamped": 0, "evals": 0}

    def step(n, state):
        b, Y = state
        dW = driver.increment(n)
        fb = fallback.increment(n)[..., 0] if fallback is not None else dW[..., 0]
        at = b if frozen is None else frozen[n]
        root, clamped = case2_density(sigmas, b1[n], at, clamp_tol)
        counts["clamped"] += int(np.count_nonzero(clamped))
        counts["evals"] += int(np.size(clamped))
        cross = case2_cross(red, Y, epsilon) if coupling == "normalized" else None
        dB = case2_driver_increment(coupling, sigmas, b1[n], at, dW, root, fb, cross)
        b_new = b + dT * sigmas.sigma4_fn(b1[n]) * b + root * dB
        if coupling == "normalized":
            Y = fast_K_step(red, Y, a1_path.a1[n], None, dW, decay)
        return (b_new, Y)

    Y0 = np.zeros(driver.batch_shape + (model.n_modes,))
    (snaps,), idx, dead = _march((b2[..., None], Y0), driver.n_steps, snapshot_stride,
                                 lambda n, s: _wrap_case2(step, n, s))
    return AmplitudePath(idx * dT, a1_path.a1[idx], snaps, CASE_II, idx, epsilon, dead,
                         counts["clamped"], counts["evals"], coupling)


def _wrap_case2(step, n, state):
    b, Y = step(n, (state[0][..., 0], state[1]))
    return (b[..., None], Y)


# -- fast modes ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FastModeState:
    """Stable-mode corrections on the snapshot grid; both arrays are ``(n_snapshots, ..., n_modes)``."""

    Q: np.ndarray
    K: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "FastModeState":
        return cls(np.zeros(shape), np.zeros(shape))


def fast_mode_Q(psi0, T, epsilon: float, basis: SpectralBasis) -> np.ndarray:
    """``Q(T) = exp(A_s T / eps^2) psi0``; ``T`` may be a vector of slow times."""
    psi0 = np.asarray(psi0, dtype=float)
    if np.any(psi0[..., : basis.kernel_dim] != 0.0):
        raise DomainError("psi0 must lie in the stable subspace")
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    T = np.asarray(T, dtype=float)
    if T.ndim == 0:
        return semigroup_apply(psi0, basis, float(T) / epsilon**2)
    return np.stack([semigroup_apply(psi0, basis, float(t) / epsilon**2) for t in T])


def fast_mode_K(model: ModelSpec, a1_path: AmplitudePath, psi0, slow_path: NoisePath, epsilon: float,
                snapshot_stride: int = 1, reduced: ReducedModel | None = None) -> np.ndarray:
    """Exponential-Euler stochastic convolution ``K(T) = int exp(A_s (T-s)/eps^2) G'_s(0)(a1 + Q) dW~``."""
    red = reduced or reduce_model(model)
    _check_full(a1_path, slow_path)
    basis = model.basis
    psi0 = np.asarray(psi0, dtype=float)
    if psi0.shape[-1] != basis.n_modes:
        raise DimensionError("psi0 does not match the basis")
    dT = slow_path.dt
    decay = np.exp(-basis.eigenvalues * dT / epsilon**2)
    lead = decay.copy()
    has_q = bool(np.any(psi0 != 0.0))
    K = np.zeros(slow_path.batch_shape + (basis.n_modes,))
    Q = np.broadcast_to(fast_mode_Q(psi0, 0.0, epsilon, basis), K.shape).copy() if has_q else None
    idx = snapshot_indices(slow_path.n_steps, snapshot_stride)
    out = np.empty((idx.size,) + K.shape)
    out[0] = K
    slot = 1
    for n in range(slow_path.n_steps):
        K = fast_K_step(red, K, a1_path.a1[n], Q, slow_path.increment(n), decay)
        if has_q:
            Q = Q * lead
        if slot < idx.size and idx[slot] == n + 1:
            out[slot] = K
            slot += 1
    return out


def assemble_approximation(order: int, a1_path: AmplitudePath, a2_path: AmplitudePath | None,
                           fast: FastModeState | None, epsilon: float, basis: SpectralBasis) -> np.ndarray:
    """``eps a1 + eps^2 a2 + eps (Q + K)`` as coefficient vectors on the snapshot grid.

    Order 1 drops the ``eps^2 a2`` term.  Missing fast modes count as zero.
    """
    if order not in (1, 2):
        raise DomainError("order must be 1 or 2")
    a1 = np.asarray(a1_path.a1)
    n = basis.kernel_dim
    if a1.shape[-1] != n:
        raise DimensionError("a1 does not match the kernel dimension")
    out = np.zeros(a1.shape[:-1] + (basis.n_modes,))
    out[..., :n] = epsilon * a1
    if order == 2:
        if a2_path is None or a2_path.a2 is None:
            raise DomainError("order 2 needs a second-order path")
        if a2_path.a2.shape != a1.shape or not np.array_equal(a2_path.steps, a1_path.steps):
            raise DimensionError("a1 and a2 paths are not aligned")
        out[..., :n] += epsilon**2 * a2_path.a2
    if fast is not None:
        for part in (fast.Q, fast.K):
            part = np.asarray(part)
            if part.shape != out.shape:
                raise DimensionError(f"fast-mode array has shape {part.shape}, expected {out.shape}")
            out += epsilon * part
    return out
