"""Explicit admissible maps (upper-bound constructions) and their mass shift."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .connection import ProfileSolution, truncate_profile
from .grid import DiscreteField, Grid, energy, signed_distance
from .isoperimetry import Descriptor
from .wells import NORM, DensitySpec, PotentialSpec, WellGeometry, density_value


class ComparisonMapError(ValueError):
    pass


class RefinedMapUnavailable(ComparisonMapError):
    pass


@dataclass
class MapReport:
    kind: str
    eps: float
    tau: float
    layer_width: float
    mass: float
    mass_residual: float
    dirichlet: float = float("nan")
    potential: float = float("nan")
    total: float = float("nan")
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "extra"}
        d.update(self.extra)
        return d


def solve_tau(mass_of_tau: Callable[[float], float], m: float, tau1: float, c_tol: float,
              max_iter: int = 60) -> float:
    """Bisection for mass(tau) = m on [-tau1, tau1] (mass may increase or decrease in tau)."""
    lo, hi = -tau1, tau1
    f_lo, f_hi = mass_of_tau(lo) - m, mass_of_tau(hi) - m
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise ComparisonMapError(f"mass does not straddle m on [{lo}, {hi}]: residuals {f_lo:.3e}, {f_hi:.3e}")
    mid = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = mass_of_tau(mid) - m
        if abs(f_mid) <= c_tol:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    if abs(mass_of_tau(mid) - m) > c_tol:
        raise ComparisonMapError("bisection did not reach the mass tolerance")
    return mid


def connector_path(g: WellGeometry, p_plus, q) -> Callable[[np.ndarray], np.ndarray]:
    """Constant-speed geodesic on N+ from p_plus (s=0) to q (s=1)."""
    p_plus = np.asarray(p_plus, float)
    q = np.asarray(q, float)
    well = g.plus
    if well.kind == "point" or np.allclose(p_plus, q, atol=1e-15):
        def const(s):
            s = np.asarray(s, float)
            return np.broadcast_to(p_plus, s.shape + p_plus.shape).copy()
        const.length = 0.0
        return const
    c, r = well.c, well.radius
    a = (p_plus - c) / r
    b = (q - c) / r
    ang = float(np.arccos(np.clip(a @ b, -1.0, 1.0)))
    perp = b - (a @ b) * a
    if np.linalg.norm(perp) < 1e-12:
        # antipodal: rotate toward a fixed axis (counterclockwise in the plane)
        basis = np.eye(len(a))
        perp = np.array([-a[1], a[0]] + [0.0] * (len(a) - 2)) if len(a) >= 2 else basis[0]
        perp = perp - (perp @ a) * a
    perp /= np.linalg.norm(perp)

    def xi(s):
        s = np.asarray(s, float)[..., None]
        return c + r * (np.cos(s * ang) * a + np.sin(s * ang) * perp)

    xi.length = r * ang
    return xi


def density_point(g: WellGeometry, rho1: float) -> np.ndarray:
    """A point q on N+ with |q| = rho1, reached from p+ along a monotone arc."""
    well = g.plus
    if well.kind == "point":
        return well.c.copy()
    c, r = well.c, well.radius
    cn = float(np.linalg.norm(c))
    ec = c / cn
    basis = np.eye(len(c))
    perp = basis[int(np.argmin(np.abs(basis @ ec)))]
    perp = perp - (perp @ ec) * ec
    perp /= np.linalg.norm(perp)
    if len(c) == 2:
        perp = np.array([-ec[1], ec[0]])
    cosang = np.clip((rho1**2 - cn**2 - r**2) / (2 * r * cn), -1.0, 1.0)
    ang = np.arccos(cosang)
    return c + r * (np.cos(ang) * ec + np.sin(ang) * perp)


def _layer_frame(g: WellGeometry):
    mid = 0.5 * (g.p_plus + g.p_minus)
    e = (g.p_plus - g.p_minus) / np.linalg.norm(g.p_plus - g.p_minus)
    return mid, e


def _mass(values, grid, g, dens) -> float:
    return float(np.sum(grid.weights * density_value(dens, values, g)))


def _report(kind, v, g, spec, dens, m, eps, tau, width, extra=None) -> MapReport:
    bd = energy(v, g, spec, eps, dens, m)
    return MapReport(kind, eps, tau, width, bd.mass, bd.mass_residual, bd.dirichlet, bd.potential,
                     bd.total, extra or {})


def build_rough_map(g: WellGeometry, spec: PotentialSpec, dens: DensitySpec, m: float, eps: float,
                    gamma_desc: Descriptor, grid: Grid, profile: ProfileSolution, tau1: float = 1.0,
                    c_tol: float = 1e-9) -> tuple[DiscreteField, MapReport]:
    """sqrt(eps)-layer map: p- | straight orbit | geodesic connector to q | q."""
    d = signed_distance(grid, gamma_desc)
    vol_plus = float(np.sum(grid.weights * (d >= 0)))
    rho1 = m / vol_plus
    # the grid resolves the plus volume only up to one cell layer along the interface
    slack = rho1 * grid.h * gamma_desc.perimeter / vol_plus + 1e-12
    if dens.kind != NORM or not dens.m1 - slack <= rho1 <= dens.m2 + slack:
        raise ComparisonMapError(f"target density {rho1:.6g} outside [m1, m2] = [{dens.m1}, {dens.m2}]")
    w = np.sqrt(eps)
    tp = truncate_profile(profile, 0.5 * w / eps)
    mid, e = _layer_frame(g)
    q = density_point(g, min(max(rho1, dens.m1), dens.m2))
    xi = connector_path(g, g.p_plus, q)
    k = g.k

    def build(tau):
        t = d - tau * w
        out = np.empty(d.shape + (k,))
        out[...] = g.p_minus
        lay = (t > -w) & (t <= w)
        out[lay] = mid + tp(t[lay] / eps)[:, None] * e
        con = (t > w) & (t <= 2 * w)
        out[con] = xi(t[con] / w - 1.0)
        out[t > 2 * w] = q
        return out

    tau = solve_tau(lambda s: _mass(build(s), grid, g, dens), m, tau1, c_tol)
    v = DiscreteField(grid, build(tau))
    rep = _report("rough", v, g, spec, dens, m, eps, tau, w,
                  {"rho1": rho1, "connector_length": xi.length, "truncation_L": tp.L})
    return v, rep


def _inradius(grid: Grid, d: np.ndarray) -> float:
    x = grid.coords()
    if grid.domain is not None:
        bd = grid.domain.boundary_distance(x)
    else:
        bd = np.full(d.shape, np.inf)
    inside = (d >= 0) & grid.mask
    return float(np.max(np.minimum(d, bd)[inside])) if inside.any() else 0.0


@dataclass
class WellMap:
    """H^1 map of the plus region into N+: p+ on a collar, then a one-parameter geodesic sweep."""

    delta: float
    sweep: float
    values: np.ndarray = field(repr=False)


def build_u0(g: WellGeometry, dens: DensitySpec, m: float, grid: Grid, d: np.ndarray,
             delta: float) -> WellMap:
    plus = (d >= 0) & grid.mask
    dmax = float(d[plus].max())
    if not 0 < delta < dmax:
        raise RefinedMapUnavailable(f"collar width {delta} does not fit in the plus region (depth {dmax})")
    s = np.clip((d - delta) / (dmax - delta), 0.0, 1.0)
    phi = s * s * (3 - 2 * s)
    if g.plus.kind == "point":
        far = g.plus.c
    else:
        far = 2 * g.plus.c - g.p_plus  # antipode of p+: largest density on N+
    xi = connector_path(g, g.p_plus, far)
    wplus = grid.weights * plus

    def mass(a):
        return float(np.sum(wplus * density_value(dens, xi(a * phi), g)))

    lo, hi = mass(0.0), mass(1.0)
    if not lo - 1e-14 <= m <= hi + 1e-14:
        raise RefinedMapUnavailable(f"mass identity unreachable: sweep gives [{lo:.6g}, {hi:.6g}] vs m={m}")
    if abs(lo - m) <= 1e-14:
        a = 0.0
    else:
        a = optimize.brentq(lambda a: mass(a) - m, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
    vals = xi(a * phi)
    vals[~plus] = g.p_plus
    return WellMap(delta, a, vals)


def build_refined_map(g: WellGeometry, spec: PotentialSpec, dens: DensitySpec, m: float, eps: float,
                      gamma: float, gamma_desc: Descriptor, grid: Grid, profile: ProfileSolution,
                      u0: WellMap | None = None, delta: float | None = None, tau1: float = 0.9,
                      c_tol: float = 1e-9, curvature_tol: float = 1e-12) -> tuple[DiscreteField, MapReport]:
    """eps^gamma-layer map: p- | straight orbit | u0."""
    if not 0.5 < gamma < 1:
        raise ValueError("gamma must lie in (1/2, 1)")
    if abs(gamma_desc.curvature) > curvature_tol:
        raise RefinedMapUnavailable("interface must have zero mean curvature")
    d = signed_distance(grid, gamma_desc)
    lw = eps**gamma
    if u0 is None:
        if delta is None:
            # half the inradius, widened when the layer would not fit inside the collar
            delta = max(0.5 * _inradius(grid, d), 1.2 * lw)
        u0 = build_u0(g, dens, m, grid, d, delta)
    tp = truncate_profile(profile, 0.5 * lw / eps)
    mid, e = _layer_frame(g)
    k = g.k

    def build(tau):
        out = np.empty(d.shape + (k,))
        out[...] = g.p_minus
        t = (d - tau * lw) / eps
        lay = (d > (-1 + tau) * lw) & (d < (1 + tau) * lw)
        out[lay] = mid + tp(t[lay])[:, None] * e
        top = d >= (1 + tau) * lw
        out[top] = u0.values[top]
        return out

    tau = solve_tau(lambda s: _mass(build(s), grid, g, dens), m, tau1, c_tol)
    if (1 + tau) * lw > u0.delta:
        raise RefinedMapUnavailable(f"layer (1+tau) eps^gamma = {(1 + tau) * lw:.4g} exceeds collar {u0.delta:.4g}")
    v = DiscreteField(grid, build(tau))
    rep = _report("refined", v, g, spec, dens, m, eps, tau, lw,
                  {"gamma": gamma, "collar": u0.delta, "sweep": u0.sweep, "truncation_L": tp.L})
    return v, rep


def build_type2_map(g: WellGeometry, spec: PotentialSpec, dens: DensitySpec, m: float, eps: float,
                    gamma_desc: Descriptor, grid: Grid, zprof, tau1: float = 3.0,
                    c_tol: float = 1e-9) -> tuple[DiscreteField, MapReport]:
    """Straight orbit with the compactly supported profile z, shifted to fix the mass."""
    d = signed_distance(grid, gamma_desc)
    mid, e = _layer_frame(g)

    def build(tau):
        return mid + zprof(d / eps - tau)[..., None] * e

    span = zprof.t2 - zprof.t1
    tau = solve_tau(lambda s: _mass(build(s), grid, g, dens), m, tau1 * span, c_tol)
    v = DiscreteField(grid, build(tau))
    return v, _report("type2", v, g, spec, dens, m, eps, tau, eps * span)
