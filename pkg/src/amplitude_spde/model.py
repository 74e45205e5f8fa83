"""Model contract for cubic SPDEs with multiplicative noise and the Allen-Cahn instance.

The models handled here are pointwise on [0, pi]::

    du = [A u + eps^2 L u + F(u)] dt + eps G(u) dW,
    F(u, v, w) = c * P(u v w),      L = l * I,
    G(u) f_j = P(g(u(x)) f_j(x)),

where P is the sine projection, ``f_j`` are the noise profiles (functions of x
spanning the noise directions) and ``g(0) = 0`` is required by the theory.
"""
from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np

from .errors import AliasingError, CatalogError, DimensionError, DomainError
from .spectral import SineGrid, SpectralBasis, h_alpha_norm, project_c, project_s


@dataclass(frozen=True)
class AllenCahnParams:
    h: float
    epsilon: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not math.isfinite(self.h):
            raise DomainError("h must be finite")


@dataclass(frozen=True)
class ModelSpec:
    """Operator bundle (A, L, F, G) on a truncated sine basis.

    ``g`` is the scalar diffusion nonlinearity, ``g1 = g'(0)`` and
    ``g2 = g''(0)`` its Taylor coefficients used by the amplitude equations.
    ``noise_profiles`` has shape ``(n_noise, n_points)``.
    """

    basis: SpectralBasis
    grid: SineGrid
    g: Callable[[np.ndarray], np.ndarray]
    g1: float
    g2: float
    noise_profiles: np.ndarray
    linear_scale: float = 1.0
    cubic_coeff: float = -1.0
    name: str = "custom"
    parameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.grid.n_modes != self.basis.n_modes:
            raise DimensionError("grid and basis disagree on n_modes")
        if self.grid.n_quad < 4 * self.basis.n_modes:
            raise AliasingError(
                f"n_quad={self.grid.n_quad} < 4*n_modes={4 * self.basis.n_modes}: "
                "cubic products would alias"
            )
        prof = np.atleast_2d(np.asarray(self.noise_profiles, dtype=float))
        if prof.shape[-1] != self.grid.x.size:
            raise DimensionError("noise profiles must be sampled on the grid")
        prof.setflags(write=False)
        object.__setattr__(self, "noise_profiles", prof)

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    @property
    def noise_modes(self) -> int:
        return self.noise_profiles.shape[0]

    def replace(self, **changes) -> "ModelSpec":
        return dataclasses.replace(self, **changes)

    def with_noise(self, profiles) -> "ModelSpec":
        return self.replace(noise_profiles=np.atleast_2d(profiles))

    # -- deterministic part -------------------------------------------------

    def linear_L(self, u) -> np.ndarray:
        return self.linear_scale * np.asarray(u, dtype=float)

    def trilinear_F(self, u, v, w) -> np.ndarray:
        to_grid = self.grid.to_grid
        return self.cubic_coeff * self.grid.from_grid(to_grid(u) * to_grid(v) * to_grid(w))

    def cubic(self, u) -> np.ndarray:
        """F(u) = F(u, u, u) with a single synthesis."""
        ux = self.grid.to_grid(u)
        return self.cubic_coeff * self.grid.from_grid(ux * ux * ux)

    # -- diffusion ----------------------------------------------------------

    def _select(self, out: np.ndarray, j):
        return out if j is None else out[..., j, :]

    def diffusion_G(self, u, j: int | None = None) -> np.ndarray:
        """Coefficients of ``G(u) f_j``; all noise modes stacked on axis -2 when j is None."""
        gx = self.g(self.grid.to_grid(u))
        return self._select(self.grid.from_grid(gx[..., None, :] * self.noise_profiles), j)

    def diffusion_from_grid(self, ux: np.ndarray) -> np.ndarray:
        """Same as :meth:`diffusion_G` for a state already synthesised on the grid."""
        return self.grid.from_grid(self.g(ux)[..., None, :] * self.noise_profiles)

    def g_prime0(self, u, j: int | None = None) -> np.ndarray:
        ux = self.grid.to_grid(u)
        return self._select(self.grid.from_grid(self.g1 * ux[..., None, :] * self.noise_profiles), j)

    def g_doubleprime0(self, u1, u2, j: int | None = None) -> np.ndarray:
        prod = self.grid.to_grid(u1) * self.grid.to_grid(u2)
        return self._select(self.grid.from_grid(self.g2 * prod[..., None, :] * self.noise_profiles), j)

    def unit(self, k: int) -> np.ndarray:
        """Basis vector e_k (1-based)."""
        e = np.zeros(self.n_modes)
        e[k - 1] = 1.0
        return e


def allen_cahn_g(h: float) -> Callable[[np.ndarray], np.ndarray]:
    def g(u):
        return np.sin(u) - np.cos(u) + np.cos(h * u)

    return g


def allen_cahn_model(params: AllenCahnParams | float, n_modes: int = 32, n_quad: int = 512,
                     noise: str = "case1") -> ModelSpec:
    """Stochastic Allen-Cahn equation ``u_t = (d_xx + 1)u + eps^2 u - u^3 + eps g(u) dW``.

    ``noise="case1"``: one scalar Brownian motion acting through ``g(u(x)) * 1``.
    ``noise="case2"``: ``W = e_1(x) beta_t``, i.e. the profile is ``sqrt(2/pi) sin x``.
    """
    h = params.h if isinstance(params, AllenCahnParams) else float(params)
    basis = SpectralBasis.allen_cahn(n_modes)
    if n_quad < 4 * n_modes:
        raise AliasingError(f"n_quad={n_quad} < 4*n_modes={4 * n_modes}")
    grid = SineGrid(n_modes, n_quad)
    if noise == "case1":
        profile = np.ones_like(grid.x)
    elif noise == "case2":
        profile = grid.modes[0].copy()
    else:
        raise DomainError(f"unknown noise configuration {noise!r}")
    return ModelSpec(
        basis=basis,
        grid=grid,
        g=allen_cahn_g(h),
        g1=1.0,
        g2=1.0 - h * h,
        noise_profiles=profile[None, :],
        linear_scale=1.0,
        cubic_coeff=-1.0,
        name="allen-cahn",
        parameters={"h": h, "noise": noise},
    )


def satisfies_case1(model: ModelSpec, tol: float = 1e-12) -> bool:
    """Structural sufficient condition for the vanishing cross term.

    Either G'_s(0) maps kernel directions to zero, or G'_c(0) maps stable
    directions to zero (for every noise mode).
    """
    basis = model.basis
    n = basis.kernel_dim
    eye = np.eye(model.n_modes)
    images = model.g_prime0(eye)  # (n_modes [direction], n_noise, n_modes [component])
    scale = max(1.0, float(np.max(np.abs(images))))
    kernel_to_stable = np.max(np.abs(images[:n, :, n:]), initial=0.0)
    stable_to_kernel = np.max(np.abs(images[n:, :, :n]), initial=0.0)
    return bool(kernel_to_stable <= tol * scale or stable_to_kernel <= tol * scale)


# -- coefficient catalog --------------------------------------------------------

_E1_PROFILE = "e1"
_UNIFORM_PROFILE = "uniform"


def _h(model: ModelSpec) -> float:
    try:
        return float(model.parameters["h"])
    except KeyError:
        raise CatalogError("closed forms need the Allen-Cahn parameter h") from None


@dataclass(frozen=True)
class CoefficientEntry:
    tag: str
    description: str
    closed_form: Callable[[float], float]
    quadrature: Callable[[ModelSpec], float]


@lru_cache(maxsize=8)
def _gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * math.pi * (nodes + 1.0), 0.5 * math.pi * weights


def _int_e1_power(m: ModelSpec, power: int) -> float:
    """Gauss-Legendre value of ``int_0^pi e_1(x)^power dx`` (independent of the solver grid)."""
    x, w = _gauss_rule(m.grid.n_quad)
    return float(np.sum(w * (math.sqrt(2.0 / math.pi) * np.sin(x)) ** power))


def _q_f111(m: ModelSpec) -> float:
    return m.cubic_coeff * _int_e1_power(m, 4)


def _q_gp(m: ModelSpec, which: str) -> float:
    # <g'(0) e1 f, e1> with f = 1 (uniform) or f = e1
    return m.g1 * _int_e1_power(m, 2 if which == _UNIFORM_PROFILE else 3)


def _q_gpp_half(m: ModelSpec, which: str) -> float:
    return 0.5 * m.g2 * _int_e1_power(m, 3 if which == _UNIFORM_PROFILE else 4)


_SQ = math.sqrt(2.0) / math.pi**1.5

CATALOG: dict[str, CoefficientEntry] = {
    entry.tag: entry
    for entry in [
        CoefficientEntry(
            "F111", "<F(e1,e1,e1), e1>: cubic drift of the first-order equation",
            lambda h: -3.0 / (2.0 * math.pi), _q_f111),
        CoefficientEntry(
            "F_second_drift", "<3 F(e1,e1,e1), e1>: a1^2 drift factor of the second-order equation",
            lambda h: -9.0 / (2.0 * math.pi), lambda m: 3.0 * _q_f111(m)),
        CoefficientEntry(
            "L11", "<L e1, e1>", lambda h: 1.0, lambda m: float(m.linear_L(m.unit(1))[0])),
        CoefficientEntry(
            "case1_first_noise", "<G'(0)(e1) 1, e1>: Case I first-order noise factor",
            lambda h: 1.0, lambda m: _q_gp(m, _UNIFORM_PROFILE)),
        CoefficientEntry(
            "Gc_e1_e1", "<G'(0)(e1) e1, e1>: Case II first-order noise factor",
            lambda h: 8.0 * _SQ / 3.0, lambda m: _q_gp(m, _E1_PROFILE)),
        CoefficientEntry(
            "case1_second_noise", "<(1/2) G''(0)(e1,e1) 1, e1>: a1^2 noise factor of the Case I second-order equation",
            lambda h: -4.0 * (h * h - 1.0) * _SQ / 3.0, lambda m: _q_gpp_half(m, _UNIFORM_PROFILE)),
        CoefficientEntry(
            "sigma1_noise_part", "sum_j |G'_c(0)(e1) f_j|^2 with f = e1",
            lambda h: 128.0 / (9.0 * math.pi**3), lambda m: _q_gp(m, _E1_PROFILE) ** 2),
        CoefficientEntry(
            "sigma2_bar", "<G'_c(0)(e1) e1, G''_c(0)(e1,e1) e1>",
            lambda h: -(h * h - 1.0) * (2.0 / math.pi) ** 2.5,
            lambda m: _q_gp(m, _E1_PROFILE) * 2.0 * _q_gpp_half(m, _E1_PROFILE)),
        CoefficientEntry(
            "sigma3_bar", "(1/4) |G''_c(0)(e1,e1) e1|^2",
            lambda h: 9.0 * (h * h - 1.0) ** 2 / (16.0 * math.pi**2),
            lambda m: _q_gpp_half(m, _E1_PROFILE) ** 2),
    ]
}


def projected_coefficient(model: ModelSpec, tag: str) -> float:
    """Quadrature value of a catalogued inner product."""
    try:
        entry = CATALOG[tag]
    except KeyError:
        raise CatalogError(f"unknown coefficient tag {tag!r}; known: {sorted(CATALOG)}") from None
    return entry.quadrature(model)


def closed_form_coefficient(model: ModelSpec, tag: str) -> float:
    try:
        entry = CATALOG[tag]
    except KeyError:
        raise CatalogError(f"unknown coefficient tag {tag!r}") from None
    return entry.closed_form(_h(model))


# -- assumption checks ----------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def format(self) -> str:
        lines = [f"{'check':<22} {'result':<6} {'worst':>12}  detail"]
        for c in self.checks:
            lines.append(f"{c.name:<22} {'PASS' if c.passed else 'FAIL':<6} {c.worst:>12.4e}  {c.detail}")
        return "\n".join(lines)


def _random_fields(rng, n_modes: int, count: int, active: int = 4) -> np.ndarray:
    out = np.zeros((count, n_modes))
    active = min(active, n_modes)
    out[:, :active] = rng.standard_normal((count, active))
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def _hs_norm(coeffs: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(coeffs * coeffs, axis=(-2, -1)))


def _loglog_slope(x, y) -> float:
    y = np.asarray(y, dtype=float)
    if np.all(y == 0.0):
        return math.inf
    y = np.maximum(y, 1e-300)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def validate_assumptions(model: ModelSpec, samples: int = 20, seed: int = 0,
                         alpha: float = 1.0, c0_cap: float = 1e3) -> ValidationReport:
    """Randomised checks of the structural assumptions on (A, L, F, G)."""
    if samples < 1:
        raise DomainError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    basis = model.basis
    n = model.n_modes
    checks = []

    lam = basis.eigenvalues
    checks.append(CheckResult(
        "A_spectrum", bool(np.all(np.diff(lam) >= 0) and np.all(lam[: basis.kernel_dim] == 0)),
        float(lam[basis.kernel_dim]), f"kernel_dim={basis.kernel_dim}, gap={lam[basis.kernel_dim]:g}"))

    u, v, w = (_random_fields(rng, n, samples) for _ in range(3))
    Luc = model.linear_L(project_c(u, basis)) - project_c(model.linear_L(u), basis)
    checks.append(CheckResult("L_commutes", bool(np.max(np.abs(Luc)) <= 1e-12),
                              float(np.max(np.abs(Luc)))))

    base = model.trilinear_F(u, v, w)
    scale = float(np.max(np.abs(base))) or 1.0
    worst = 0.0
    for perm in itertools.permutations((u, v, w)):
        worst = max(worst, float(np.max(np.abs(model.trilinear_F(*perm) - base))))
    checks.append(CheckResult("F_symmetric", worst <= 1e-12 * scale, worst))

    ratio = h_alpha_norm(base, basis, alpha) / (
        h_alpha_norm(u, basis, alpha) * h_alpha_norm(v, basis, alpha) * h_alpha_norm(w, basis, alpha))
    worst = float(np.max(ratio))
    checks.append(CheckResult("F_bounded", bool(np.isfinite(worst) and worst <= c0_cap), worst,
                              f"max |F(u,v,w)|/(|u||v||w|) in H^{alpha:g}"))

    uc = project_c(_random_fields(rng, n, samples, active=basis.kernel_dim), basis)
    wc = project_c(_random_fields(rng, n, samples, active=basis.kernel_dim), basis)
    pairing = np.sum(project_c(model.trilinear_F(uc, uc, wc), basis) * wc, axis=-1)
    worst = float(np.max(pairing))
    checks.append(CheckResult("F_dissipative_on_N", worst <= 1e-12, worst, "max <F_c(u,u,w), w>"))

    g0 = float(np.max(_hs_norm(model.diffusion_G(np.zeros(n)))))
    checks.append(CheckResult("G_zero", g0 <= 1e-12, g0, "|G(0)|_HS"))

    deltas = np.array([1e-2, 1e-3, 1e-4])
    dirs = _random_fields(rng, n, samples)
    G0 = model.diffusion_G(np.zeros(n))
    r1 = np.empty((deltas.size, samples))
    r2 = np.empty_like(r1)
    lin = model.g_prime0(dirs)
    quad = model.g_doubleprime0(dirs, dirs)
    for i, d in enumerate(deltas):
        rem1 = model.diffusion_G(d * dirs) - G0 - d * lin
        r1[i] = _hs_norm(rem1)
        r2[i] = _hs_norm(rem1 - 0.5 * d * d * quad)
    slopes1 = [_loglog_slope(deltas, r1[:, s]) for s in range(samples)]
    slopes2 = [_loglog_slope(deltas, r2[:, s]) for s in range(samples)]
    checks.append(CheckResult("G_frechet_order1", min(slopes1) >= 1.9, float(np.max(r1[-1])),
                              f"min log-log slope {min(slopes1):.3f} (need >= 1.9)"))
    checks.append(CheckResult("G_frechet_order2", min(slopes2) >= 2.5, float(np.max(r2[-1])),
                              f"min log-log slope {min(slopes2):.3f} (need >= 2.5)"))
    return ValidationReport(tuple(checks))
