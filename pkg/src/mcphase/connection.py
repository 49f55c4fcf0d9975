"""Scalar minimal connection between the two wells and its straight-line orbit."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from .wells import TYPE1, PotentialSpec, WellGeometry, potential_value

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class ProfileError(ValueError):
    pass


class NotMinimalPair(ValueError):
    pass


def f_bar(spec: PotentialSpec, lam, d_N: float):
    """Even one-dimensional reduction of the potential: f((d_N/2 - |lam|)^2)."""
    if spec.kind != TYPE1:
        raise ValueError("f_bar is defined for type I potentials")
    lam = np.asarray(lam, dtype=float)
    return spec.f((d_N / 2 - np.abs(lam)) ** 2)


def c0_quadrature(spec: PotentialSpec, d_N: float) -> float:
    if spec.kind != TYPE1:
        raise ValueError("c0_quadrature is defined for type I potentials")
    val, err = integrate.quad(lambda s: np.sqrt(float(spec.f(s * s))), 0.0, d_N / 2,
                              epsabs=1e-13, epsrel=1e-13, limit=200)
    if not np.isfinite(val) or err > 1e-10:
        raise ProfileError(f"quadrature did not converge (error estimate {err:g})")
    return 4.0 * val


def _panel_integral(fn, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gauss-Legendre integral of fn over each panel [a_i, b_i]."""
    mid = 0.5 * (a + b)
    rad = 0.5 * (b - a)
    x = mid[:, None] + rad[:, None] * _GL_X[None, :]
    return rad * (fn(x) @ _GL_W)


def _simpson(y: np.ndarray, dx: float) -> float:
    return float(integrate.simpson(y, dx=dx))


@dataclass
class ProfileSolution:
    d_N: float
    c0: float
    grid: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    energy: float
    closed_form_tag: str | None = None
    _log_gap: CubicHermiteSpline = field(repr=False, default=None)
    _t_end: float = 0.0
    _slope_end: float = 0.0
    _fbar: Callable = field(repr=False, default=None)
    profile_f: Callable = field(repr=False, default=None)

    @property
    def half(self) -> float:
        return self.d_N / 2

    def gap(self, t) -> np.ndarray:
        """d_N/2 - |alpha(t)|, computed without cancellation."""
        s = np.abs(np.asarray(t, dtype=float))
        inside = s <= self._t_end
        y = np.where(inside, self._log_gap(np.minimum(s, self._t_end)),
                     self._log_gap(self._t_end) + self._slope_end * (s - self._t_end))
        return np.exp(y)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.sign(t) * (self.half - self.gap(t))

    def slope(self, t) -> np.ndarray:
        """alpha'(t) from the interpolant (not from the ODE)."""
        s = np.abs(np.asarray(t, dtype=float))
        inside = s <= self._t_end
        sc = np.minimum(s, self._t_end)
        dy = np.where(inside, self._log_gap(sc, 1), self._slope_end)
        return -self.gap(s) * dy

    def fbar(self, lam):
        return self._fbar(lam)

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.grid, self.values]), delimiter=",",
                   header="t,alpha", comments="", fmt="%.17g")


def solve_profile(spec: PotentialSpec, d_N: float, t_max: float | None = None,
                  n_grid: int = 8001, panel: float = 0.01) -> ProfileSolution:
    """Optimal profile alpha' = sqrt(Fbar(alpha)), alpha(0) = 0, by inverting t(alpha)."""
    ok, consts = spec.satisfies_H(d_N / 4)
    slope0 = spec.slope_at_zero()
    if not ok or not (0 < slope0 < np.inf):
        raise ProfileError("potential violates the growth hypothesis; the profile is degenerate "
                           f"(constants {consts})")
    D = d_N / 2
    if t_max is None:
        t_max = 40.0 / np.sqrt(slope0)

    def fb(lam):
        return f_bar(spec, lam, d_N)

    # table in y = log(D - alpha); dt/dy = -e^y / sqrt(Fbar(D - e^y))
    def dt_dy(y):
        b = np.exp(y)
        return b / np.sqrt(spec.f(b * b))

    y_top = np.log(D)
    depth = 1.25 * t_max * np.sqrt(slope0) + 10.0
    n_pan = int(np.ceil(depth / panel))
    y_nodes = y_top - panel * np.arange(n_pan + 1)
    incr = _panel_integral(dt_dy, y_nodes[1:], y_nodes[:-1])
    t_nodes = np.concatenate([[0.0], np.cumsum(incr)])
    if not np.all(np.diff(t_nodes) > 0) or t_nodes[-1] < t_max:
        raise ProfileError("profile reaches the well in finite time or table too short")
    dydt = -1.0 / dt_dy(y_nodes)
    spline = CubicHermiteSpline(t_nodes, y_nodes, dydt)

    grid = np.linspace(-t_max, t_max, n_grid)
    ps = ProfileSolution(d_N=d_N, c0=c0_quadrature(spec, d_N), grid=grid, values=grid * 0,
                         derivative=grid * 0, energy=0.0,
                         closed_form_tag="exp" if spec.name == "linear" else None,
                         _log_gap=spline, _t_end=float(t_nodes[-1]), _slope_end=float(dydt[-1]), _fbar=fb, profile_f=spec.f)
    ps.values = ps(grid)
    ps.derivative = np.sqrt(fb(ps.values))
    dt = grid[1] - grid[0]
    ps.energy = _simpson(ps.derivative**2 + fb(ps.values), dt)
    return ps


@dataclass
class TruncatedProfile:
    """alpha on [-L, L], linear ramps to the wells on L <= |t| <= 2L."""

    profile: ProfileSolution
    L: float
    excess: float = 0.0

    @property
    def energy(self) -> float:
        return self.profile.c0 + self.excess

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        ps, L, D = self.profile, self.L, self.profile.half
        s = np.abs(t)
        b = float(ps.gap(L))
        ramp = D - b * np.clip((2 * L - s) / L, 0.0, 1.0)
        inner = D - ps.gap(np.minimum(s, L))
        return np.sign(t) * np.where(s <= L, inner, ramp)

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        ps, L = self.profile, self.L
        s = np.abs(t)
        b = float(ps.gap(L))
        inner = np.sqrt(ps.fbar(self(t)))
        return np.where(s <= L, inner, np.where(s <= 2 * L, b / L, 0.0))

    def values(self, n: int = 4001) -> tuple[np.ndarray, np.ndarray]:
        t = np.linspace(-2 * self.L, 2 * self.L, n)
        return t, self(t)


def truncate_profile(ps: ProfileSolution, L: float, L0: float = 0.0) -> TruncatedProfile:
    """Truncation and its energy excess over c0.

    The excess is assembled from the ramp energy and the discarded tail,
    each integrated separately, so that it keeps relative accuracy even when
    it is far below machine precision of c0.
    """
    if not L > L0:
        raise ValueError(f"truncation half-width L={L} must exceed {L0}")
    b = float(ps.gap(L))
    f = ps.profile_f
    # Fbar(D - b*u) = f((b*u)^2) on the ramp
    ramp_pot, _ = integrate.quad(lambda u: float(f((b * u) ** 2)), 0.0, 1.0, epsabs=0, epsrel=1e-13)
    ramp = 2.0 * (b * b / L + L * ramp_pot)
    tail_int, _ = integrate.quad(lambda u: float(np.sqrt(f((b * u) ** 2))), 0.0, 1.0, epsabs=0, epsrel=1e-13)
    tail = 4.0 * b * tail_int
    return TruncatedProfile(ps, float(L), ramp - tail)


def truncated_energy_quadrature(tp: TruncatedProfile, n: int = 200001) -> float:
    """Direct quadrature of the truncated energy on a uniform grid (cross-check)."""
    t = np.linspace(-2 * tp.L, 2 * tp.L, n)
    a = tp(t)
    da = tp.derivative(t)
    # the kinks at +-L are grid nodes only when n-1 is divisible by 4
    return float(integrate.trapezoid(da**2 + tp.profile.fbar(a), t))


def minimal_orbit(g: WellGeometry, p_plus, p_minus, ps: ProfileSolution, tol: float = 1e-9):
    p_plus = np.asarray(p_plus, dtype=float)
    p_minus = np.asarray(p_minus, dtype=float)
    if g.minus.distance(p_minus) > tol or g.plus.distance(p_plus) > tol:
        raise NotMinimalPair("endpoints must lie on the wells")
    dist = float(np.linalg.norm(p_plus - p_minus))
    if abs(dist - g.d_N) > tol * max(1.0, g.d_N):
        raise NotMinimalPair(f"|p+ - p-| = {dist} differs from d_N = {g.d_N}")
    mid = 0.5 * (p_plus + p_minus)
    e = (p_plus - p_minus) / dist

    def path(t):
        a = ps(np.asarray(t, dtype=float))
        return mid + a[..., None] * e

    path.direction = e
    path.midpoint = mid
    return path


def path_energy(g: WellGeometry, spec: PotentialSpec, t: np.ndarray, gamma: np.ndarray,
                dgamma: np.ndarray | None = None) -> float:
    """Integral of |gamma'|^2 + F(gamma) over the sample grid t (Simpson)."""
    if dgamma is None:
        dgamma = np.gradient(gamma, t, axis=0, edge_order=2)
    dens = np.sum(dgamma**2, axis=-1) + potential_value(g, spec, gamma)
    return float(integrate.simpson(dens, x=t))


def lattice_connection_energy(spec: PotentialSpec, d_N: float, spacing: float,
                              half_length: float | None = None) -> float:
    """Least energy of a transition sampled on a lattice of the given spacing (in layer units).

    Minimizes sum (lam_{i+1} - lam_i)^2 / r + r * sum Fbar(lam_i) over chains
    pinned to the wells at both ends; both site- and bond-centred starts are
    tried and the lower value kept.  As spacing -> 0 this tends to c0.
    """
    from scipy import optimize

    if not spacing > 0:
        raise ValueError("spacing must be positive")
    D = d_N / 2
    s0 = spec.slope_at_zero()
    if half_length is None:
        half_length = 40.0 / np.sqrt(s0) if np.isfinite(s0) and s0 > 0 else 40.0
    n = int(np.ceil(half_length / spacing))
    r = spacing
    ps = solve_profile(spec, d_N)

    def fun(x):
        lam = np.concatenate([[-D], x, [D]])
        d = np.diff(lam)
        gap = D - np.abs(x)
        fb = spec.f(gap * gap)
        e = float(np.sum(d * d)) / r + r * float(np.sum(fb))
        grad = 2 * (d[:-1] - d[1:]) / r - r * spec.df(gap * gap) * 2 * gap * np.sign(x)
        return e, grad

    best = np.inf
    for shift in (0.0, 0.5):
        t = (np.arange(-n, n + 1) + shift) * r
        x0 = ps(t)
        res = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=[(-D, D)] * len(x0),
                                options={"ftol": 1e-16, "gtol": 1e-13, "maxiter": 20000, "maxcor": 30})
        best = min(best, float(res.fun))
    return best
