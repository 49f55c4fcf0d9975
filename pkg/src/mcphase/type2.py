"""Single-valued (signed well distance) constraint: compact profile, constants, rearrangement."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .grid import Grid
from .isoperimetry import IsoperimetricProfile, SymmetrizedProfile, i_star, v_omega
from .wells import SIGNED, TYPE2, DensitySpec, Manifold, PotentialSpec, WellGeometry


class ProfileDivergence(ValueError):
    pass


def _params(spec: PotentialSpec) -> tuple[float, float, float, float]:
    p = spec.p
    return p.get("half_width", 0.5), p.get("q", 0.5), p.get("tilt", 0.0), p.get("coef", 1.0)


def _f_from_gaps(spec: PotentialSpec, s, lo_gap, hi_gap):
    """f~(s) with h + s = lo_gap and h - s = hi_gap supplied separately (no cancellation)."""
    h, q, a, coef = _params(spec)
    w = np.maximum(lo_gap * hi_gap, 0.0)
    return coef * np.power(w, 1 + q) * (1 + a * s * w / h**3)


@dataclass
class OptimalProfileZ:
    """Monotone solution of z' = sqrt(f~(z)), z(0) = c, constant outside [t1, t2]."""

    half: float
    c: float
    t1: float
    t2: float
    t: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    spec: PotentialSpec = field(repr=False)
    _spline: CubicHermiteSpline = field(repr=False, default=None)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        inside = np.clip(t, self.t1, self.t2)
        out = self._spline(inside)
        out = np.where(t <= self.t1, -self.half, np.where(t >= self.t2, self.half, out))
        return np.clip(out, -self.half, self.half)

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        d = self._spline(np.clip(t, self.t1, self.t2), 1)
        return np.where((t <= self.t1) | (t >= self.t2), 0.0, d)

    def ode_residual(self, n: int = 20001) -> float:
        """Largest |z' - sqrt(f~(z))| on a uniform grid strictly inside the support."""
        t = np.linspace(self.t1, self.t2, n + 2)[1:-1]
        z = self(t)
        return float(np.max(np.abs(self.derivative(t) - np.sqrt(self.spec.f_tilde(z)))))

    def energy_split(self, n: int = 400001) -> tuple[float, float]:
        """(int z'^2, int f~(z)) by Simpson's rule over the support."""
        t = np.linspace(self.t1, self.t2, n)
        kin = integrate.simpson(self.derivative(t) ** 2, x=t)
        pot = integrate.simpson(self.spec.f_tilde(self(t)), x=t)
        return float(kin), float(pot)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "z", "dz"])
            for ti, zi, di in zip(self.t, self.values, self.derivative(self.t)):
                w.writerow([repr(float(ti)), repr(float(zi)), repr(float(di))])


def _half_branch(spec: PotentialSpec, c: float, upper: bool, n_panels: int):
    """Table of (t, s) on one side of c using the substitution gap = (gap at c) * v^k.

    With k = 2 / (1 - q) the integrand ds / sqrt(f~) becomes bounded at the
    well, so Gauss-Legendre panels in v converge quickly and the endpoint
    time is finite.
    """
    h, q, _, _ = _params(spec)
    k = 2.0 / (1.0 - q)
    g0 = (h - c) if upper else (h + c)
    sign = 1.0 if upper else -1.0

    def s_and_gaps(v):
        gap = g0 * v**k
        s = sign * (h - gap)
        # the near edge is at distance gap, the far one at 2h - gap
        lo, hi = (2 * h - gap, gap) if upper else (gap, 2 * h - gap)
        return s, lo, hi

    def integrand(v):
        s, lo, hi = s_and_gaps(v)
        # ds/dv = k g0 v^(k-1); f~ ~ gap^(1+q) so the ratio is bounded at v = 0
        return k * g0 * v ** (k - 1) / np.sqrt(_f_from_gaps(spec, s, lo, hi))

    v = np.linspace(0.0, 1.0, n_panels + 1)
    gx, gw = np.polynomial.legendre.leggauss(10)
    mid, rad = 0.5 * (v[1:] + v[:-1]), 0.5 * (v[1:] - v[:-1])
    x = mid[:, None] + rad[:, None] * gx[None, :]
    panel = rad * (integrand(x) @ gw)
    cum = np.concatenate([[0.0], np.cumsum(panel)])   # time from the well edge
    total = float(cum[-1])
    s, lo, hi = s_and_gaps(v)
    slope = np.sqrt(_f_from_gaps(spec, s, lo, hi))
    # moments for the mass offset: int (z - sgn) dt over this half
    moment = float(np.sum(rad * ((g0 * x**k * integrand(x)) @ gw)))
    return v, cum, total, s, slope, moment


def solve_z(spec: PotentialSpec, d_N: float, n_panels: int = 2000) -> OptimalProfileZ:
    if spec.kind != TYPE2:
        raise ValueError("solve_z needs a single-valued constraint potential")
    h, q, _, _ = _params(spec)
    if not np.isclose(h, d_N / 2, rtol=1e-12):
        raise ValueError(f"potential half width {h} does not match d_N/2 = {d_N / 2}")
    if not 0 < q < 1:
        raise ProfileDivergence("exponent q must lie in (0, 1); the transit time diverges otherwise")
    c = spec.check_type2_shape()
    _, cum_u, T2, s_u, sl_u, _ = _half_branch(spec, c, True, n_panels)
    _, cum_l, T1, s_l, sl_l, _ = _half_branch(spec, c, False, n_panels)
    if not (np.isfinite(T1) and np.isfinite(T2)):
        raise ProfileDivergence("transit time is not finite")
    # lower half: t runs from -T1 (v = 0) up to 0 (v = 1); upper from 0 (v = 1) to T2 (v = 0)
    t_lo = -T1 + cum_l
    t_hi = (T2 - cum_u)[::-1]
    t = np.concatenate([t_lo[:-1], [0.0], t_hi[1:]])
    z = np.concatenate([s_l[:-1], [c], s_u[::-1][1:]])
    dz = np.concatenate([sl_l[:-1], [float(np.sqrt(spec.f_tilde(c)))], sl_u[::-1][1:]])
    z[0], z[-1], dz[0], dz[-1] = -h, h, 0.0, 0.0
    spl = CubicHermiteSpline(t, z, dz)
    return OptimalProfileZ(h, float(c), float(t[0]), float(t[-1]), t, z, spec, spl)


def c0_tilde(spec: PotentialSpec) -> float:
    """2 * int_{-h}^{h} sqrt(f~) with the endpoint powers handled by an algebraic weight."""
    h, q, a, coef = _params(spec)
    e = 0.5 * (1 + q)
    val, err = integrate.quad(lambda s: np.sqrt(coef * (1 + a * s * (h * h - s * s) / h**3)), -h, h,
                              weight="alg", wvar=(e, e), epsabs=1e-14, epsrel=1e-13)
    return 2.0 * float(val)


@dataclass
class SecondOrderConstants:
    c0_tilde: float
    c_sym: float
    tau0: float
    kappa0: float
    n: int
    profile_value: float = 1.0
    profile_slope: float = 0.0

    @property
    def second_order(self) -> float:
        """(c_sym + c0~ tau0) (n-1) kappa0 I(sigma)."""
        return (self.c_sym + self.c0_tilde * self.tau0) * (self.n - 1) * self.kappa0 * self.profile_value

    def as_dict(self) -> dict:
        return {**self.__dict__, "second_order": self.second_order}


def mass_offset(spec: PotentialSpec, c: float, n_panels: int = 2000) -> float:
    """int (z(t) - h sgn(t)) dt with h the half width, evaluated in the stretched variable of each half."""
    up = _half_branch(spec, c, True, n_panels)[5]
    lo = _half_branch(spec, c, False, n_panels)[5]
    return lo - up


def second_order_constants(z: OptimalProfileZ, I: IsoperimetricProfile | None = None,
                           minus_volume: float | None = None, n_fine: int = 400001) -> SecondOrderConstants:
    """Profile constants and the curvature of the minimizing interface.

    ``minus_volume`` is the volume fraction of the minus phase; the curvature
    is oriented so that (n-1) kappa0 is the derivative of the profile when
    the minus phase grows.
    """
    spec = z.spec
    c0 = c0_tilde(spec)
    t = np.linspace(z.t1, z.t2, n_fine)
    c_sym = 2.0 * float(integrate.simpson(spec.f_tilde(z(t)) * t, x=t))
    tau0 = mass_offset(spec, z.c) / (2 * z.half)
    if I is None or minus_volume is None:
        return SecondOrderConstants(c0, c_sym, tau0, 0.0, 1)
    n = I.domain.n
    val = float(I(minus_volume))
    if n == 1:
        return SecondOrderConstants(c0, c_sym, tau0, 0.0, 1, val, 0.0)
    desc = I.descriptor(1 - minus_volume)
    slope = I.derivative(minus_volume)
    kappa = abs(desc.curvature) * (np.sign(slope) if slope != 0 else 1.0)
    return SecondOrderConstants(c0, c_sym, tau0, float(kappa), n, val, float(slope))


# ---------------------------------------------------------------- reduced problem


@dataclass
class ReducedProblem:
    """Uniform cells on (-T, T) weighted by I*(V); V' = I*(V)."""

    istar: SymmetrizedProfile
    V: Callable
    T: float
    n: int
    grid: Grid
    t: np.ndarray = field(repr=False)
    v_edges: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, I: IsoperimetricProfile, sigma: float, n: int) -> "ReducedProblem":
        ist = i_star(I, sigma)
        V, T, _ = v_omega(ist)
        dt = 2 * T / n
        edges = -T + dt * np.arange(n + 1)
        v_edges = np.asarray(V(edges), float)
        v_edges[0], v_edges[-1] = 0.0, 1.0
        node_w = np.diff(v_edges)
        edge_w = np.asarray(ist(v_edges[1:-1]), float) * dt
        grid = Grid.weighted_1d(node_w, edge_w, dt, -T)
        return cls(ist, V, T, n, grid, 0.5 * (edges[1:] + edges[:-1]), v_edges)

    def rearrange(self, values: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Cell averages of the increasing quantile function of a scalar field.

        The cell on [t_k, t_k+1] receives the mean of the sorted values over
        the volume window [V(t_k), V(t_k+1)], so the mass is preserved exactly.
        """
        return rearrange(values, weights, self.v_edges)

    def energy(self, P: np.ndarray, spec: PotentialSpec, eps: float) -> float:
        return reduced_energy(P, self, spec, eps)

    def mass(self, P: np.ndarray) -> float:
        return float(np.sum(self.grid.weights * P))


def rearrange(values: np.ndarray, weights: np.ndarray, v_edges: np.ndarray) -> np.ndarray:
    u = np.ravel(np.asarray(values, float))
    w = np.ravel(np.asarray(weights, float))
    keep = w > 0
    u, w = u[keep], w[keep]
    order = np.argsort(u, kind="stable")
    u, w = u[order], w[order]
    W = np.concatenate([[0.0], np.cumsum(w)])
    total = W[-1]
    C = np.concatenate([[0.0], np.cumsum(w * u)])
    edges = np.asarray(v_edges, float) * total
    # int_0^v Q is piecewise linear in v with breaks at the cumulative weights
    Ce = np.interp(edges, W, C)
    dv = np.diff(edges)
    return np.diff(Ce) / np.where(dv > 0, dv, 1.0)


def distribution_mismatch(values, weights, P, node_w, thresholds) -> float:
    """max over thresholds of |mu{u > s} - sum_{P > s} dV|."""
    u = np.ravel(values)
    w = np.ravel(weights)
    out = 0.0
    for s in thresholds:
        out = max(out, abs(float(np.sum(w[u > s])) - float(np.sum(node_w[P > s]))))
    return out


def scalar_geometry(d_N: float = 1.0) -> WellGeometry:
    """Point wells at -d_N/2 and d_N/2 on the line: d0 is the identity on [-d_N/2, d_N/2]."""
    return WellGeometry(Manifold.point([-d_N / 2]), Manifold.point([d_N / 2]))


def reduced_energy(P: np.ndarray, red: ReducedProblem, spec: PotentialSpec, eps: float) -> float:
    """int (P'^2 + f~(P)/eps^2) I*(V) dt on the reduced grid."""
    g = red.grid
    P = np.asarray(P, float).reshape(-1)
    dP = np.diff(P) / g.h
    dirichlet = float(np.sum(g.edge_weights[0] * dP * dP))
    pot = float(np.sum(g.weights * spec.f_tilde(P))) / eps**2
    return dirichlet + pot


def profile_start(red: ReducedProblem, z: OptimalProfileZ, m: float, eps: float) -> tuple[np.ndarray, float]:
    """z((t - t0)/eps) with t0 fixed by the mass constraint."""
    def resid(t0):
        return red.mass(z((red.t - t0) / eps)) - m

    lo, hi = -red.T, red.T
    t0 = optimize.brentq(resid, lo, hi, xtol=1e-15, rtol=1e-15)
    return z((red.t - t0) / eps), float(t0)


def minus_volume(m: float, d_N: float) -> float:
    """Volume of the minus phase for a sharp two-phase state with mass m."""
    return (d_N / 2 - m) / d_N


def reduced_density(g: WellGeometry) -> DensitySpec:
    return DensitySpec.for_geometry(SIGNED, g)
