"""Sine-spectral representation of fields on [0, pi] with Dirichlet conditions.

A field is stored as its coefficient vector ``gamma`` in the orthonormal basis
``e_k(x) = sqrt(2/pi) sin(k x)``, k = 1..n_modes, so the L2 norm is the
Euclidean norm of the coefficients.  Every function here accepts arrays with
arbitrary leading batch axes; the mode axis is always last.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, NumericError, SingularityError

Field = np.ndarray


@dataclass(frozen=True)
class SpectralBasis:
    """Eigen-decomposition of the dissipative operator A (``A e_k = -lambda_k e_k``)."""

    eigenvalues: np.ndarray
    kernel_dim: int

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise DimensionError("eigenvalues must be a non-empty vector")
        if not np.all(np.isfinite(lam)):
            raise NumericError("eigenvalues must be finite")
        if np.any(np.diff(lam) < 0):
            raise DomainError("eigenvalues must be nondecreasing")
        if not 1 <= self.kernel_dim <= lam.size:
            raise DomainError("kernel_dim must lie in [1, n_modes]")
        n_zero = int(np.count_nonzero(lam == 0.0))
        if n_zero != self.kernel_dim or np.any(lam[: self.kernel_dim] != 0.0):
            raise DomainError(
                f"expected exactly {self.kernel_dim} leading zero eigenvalues, found {n_zero}"
            )
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @classmethod
    def allen_cahn(cls, n_modes: int = 32) -> "SpectralBasis":
        """Basis of ``d_xx + 1`` on [0, pi]: lambda_k = k^2 - 1, one-dimensional kernel."""
        if n_modes < 2:
            raise DomainError("need at least one stable mode")
        k = np.arange(1, n_modes + 1, dtype=float)
        return cls(k**2 - 1.0, kernel_dim=1)

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def spectral_gap(self) -> float:
        """Smallest stable eigenvalue lambda_{N+1}."""
        return float(self.eigenvalues[self.kernel_dim])

    @property
    def kernel_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_modes, dtype=bool)
        mask[: self.kernel_dim] = True
        return mask


def _coeffs(f, basis: SpectralBasis) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim == 0 or f.shape[-1] != basis.n_modes:
        raise DimensionError(
            f"field has {f.shape[-1] if f.ndim else 0} modes, basis has {basis.n_modes}"
        )
    return f


def h_alpha_norm(f, basis: SpectralBasis, alpha: float = 0.0):
    """Norm of H^alpha: ``sqrt(sum gamma_k^2 (lambda_k + 1)^(2 alpha))``."""
    f = _coeffs(f, basis)
    if not np.all(np.isfinite(f)) or not np.isfinite(alpha):
        raise NumericError("non-finite field or exponent")
    weights = (basis.eigenvalues + 1.0) ** (2.0 * alpha)
    return np.sqrt(np.sum(weights * f * f, axis=-1))


def project_c(f, basis: SpectralBasis) -> Field:
    """Projection onto the kernel N of A."""
    f = _coeffs(f, basis)
    return np.where(basis.kernel_mask, f, 0.0)


def project_s(f, basis: SpectralBasis) -> Field:
    """Projection onto the stable complement S = (I - P_c) H."""
    f = _coeffs(f, basis)
    return np.where(basis.kernel_mask, 0.0, f)


def semigroup_apply(f, basis: SpectralBasis, t: float) -> Field:
    """Action of ``exp(A t)``: multiply mode k by ``exp(-lambda_k t)``."""
    f = _coeffs(f, basis)
    if not t >= 0:
        raise DomainError(f"semigroup time must be nonnegative, got {t}")
    return f * np.exp(-basis.eigenvalues * t)


def tensor_inverse_weight(k: int, j: int, basis: SpectralBasis) -> float:
    """Eigenvalue of the pseudo-inverse of ``I (x)_s A`` on ``e_k (x)_s e_j`` (1-based indices).

    ``I (x)_s A`` has eigenvalue ``-(lambda_k + lambda_j)/2``; the pseudo-inverse
    vanishes on N (x)_s N.
    """
    if k < 1 or j < 1 or k > basis.n_modes or j > basis.n_modes:
        raise DomainError(f"mode indices must lie in 1..{basis.n_modes}")
    if k <= basis.kernel_dim and j <= basis.kernel_dim:
        return 0.0
    total = basis.eigenvalues[k - 1] + basis.eigenvalues[j - 1]
    if total == 0.0:
        raise SingularityError(f"lambda_{k} + lambda_{j} = 0 outside the kernel pair")
    return -2.0 / total


def tensor_inverse_weights(basis: SpectralBasis) -> np.ndarray:
    """Matrix of :func:`tensor_inverse_weight` over all mode pairs."""
    lam = basis.eigenvalues
    total = lam[:, None] + lam[None, :]
    kern = basis.kernel_mask
    both = kern[:, None] & kern[None, :]
    with np.errstate(divide="ignore"):
        w = np.where(both, 0.0, -2.0 / np.where(both, 1.0, total))
    if np.any(~both & (total == 0.0)):
        raise SingularityError("zero eigenvalue sum outside the kernel block")
    return w


class SineGrid:
    """Uniform interior collocation grid ``x_i = pi i / n_quad`` (i = 1..n_quad-1).

    Synthesis evaluates a coefficient vector at the grid points; analysis is the
    composite trapezoid rule for ``<f, e_k>`` (the endpoints carry no weight since
    all integrands vanish there).  Analysis is exact for trigonometric integrands
    of degree below ``2 n_quad``.
    """

    def __init__(self, n_modes: int, n_quad: int = 512):
        if n_modes < 1 or n_quad < 2:
            raise DomainError("n_modes >= 1 and n_quad >= 2 required")
        self.n_modes = n_modes
        self.n_quad = n_quad
        self.x = np.pi * np.arange(1, n_quad) / n_quad
        self.weight = np.pi / n_quad
        k = np.arange(1, n_modes + 1)
        # (n_modes, n_points): row k holds e_k at the grid points
        self.modes = np.sqrt(2.0 / np.pi) * np.sin(np.outer(k, self.x))
        self._analysis = (self.modes * self.weight).T

    def to_grid(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-1] != self.n_modes:
            raise DimensionError("coefficient length does not match grid")
        return f @ self.modes

    def from_grid(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.x.size:
            raise DimensionError("grid values do not match grid size")
        return values @ self._analysis

    def inner(self, f_values, g_values):
        """Trapezoid approximation of ``int_0^pi f g dx`` from grid values."""
        return np.sum(np.asarray(f_values) * np.asarray(g_values), axis=-1) * self.weight

    def l2_norm(self, values):
        values = np.asarray(values, dtype=float)
        return np.sqrt(self.inner(values, values))
