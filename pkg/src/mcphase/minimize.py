"""Mass-constrained minimization of the discrete energy.

Augmented Lagrangian L = E + lam*c + (mu/2)*c^2 with c = mass - m, inner
preconditioned gradient descent with Armijo backtracking.  The
preconditioner is the (shifted) discrete Laplacian, inverted exactly by a
cosine transform on uniform grids or a banded solve on weighted 1D grids,
plus a Sherman-Morrison update for the rank-one penalty curvature.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import fft, linalg

from .grid import (DiscreteField, EnergyBreakdown, Grid, energy, energy_derivative, energy_parts)
from .wells import (NORM, TYPE1, DensitySpec, PotentialSpec, WellGeometry, density_grad,
                    density_value)

log = logging.getLogger(__name__)


class MinimizerError(RuntimeError):
    def __init__(self, msg: str, last_good: DiscreteField | None = None):
        super().__init__(msg)
        self.last_good = last_good


class AdmissibilityError(ValueError):
    pass


@dataclass
class SolverConfig:
    eps: float
    tau0: float = 1.0
    shrink: float = 0.5
    growth: float = 1.1
    tau_max: float = 4.0
    mu_pen: float = 1.0          # initial penalty, in units of 1/eps^2
    lam_factor: float = 1.0      # multiplier update: lam += lam_factor * mu * c
    stall_ratio: float = 0.25    # penalty doubles when |c| fails to shrink by this factor
    g_tol: float = 1e-6
    c_tol: float = 1e-9
    max_iter: int = 20000
    inner_iter: int = 2000
    max_outer: int = 40
    stall_window: int = 200      # inner loop stops when L barely moves over this many steps
    stall_tol: float = 1e-15
    precond_shift: float | None = None
    seed: int = 0
    init: str = "comparison_map"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        for name in ("tau0", "g_tol", "c_tol", "mu_pen"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.shrink < 1 or self.growth < 1:
            raise ValueError("need 0 < shrink < 1 <= growth")
        if self.init not in ("comparison_map", "random", "file"):
            raise ValueError(f"unknown init {self.init!r}")

    def check_mass_tol(self, m: float) -> None:
        if self.c_tol > 1e-8 * max(1.0, abs(m)):
            raise ValueError("c_tol must not exceed 1e-8 * max(1, |m|)")


@dataclass
class SolveResult:
    field: DiscreteField
    breakdown: EnergyBreakdown
    iterations: int
    converged: bool
    multiplier: float
    projected_gradient: float
    eps: float
    history: list = field(default_factory=list, repr=False)
    note: str = ""

    def summary(self) -> dict:
        return {"eps": self.eps, **self.breakdown.as_dict(), "iterations": self.iterations,
                "converged": self.converged, "multiplier": self.multiplier,
                "projected_gradient": self.projected_gradient, "note": self.note}


def check_admissible(g: WellGeometry, dens: DensitySpec, m: float) -> None:
    if dens.kind == NORM:
        if not 0 < m < dens.m1:
            raise AdmissibilityError(f"type I mass must satisfy 0 < m < m1 = {dens.m1}, got {m}")
    elif not abs(m) < g.half:
        raise AdmissibilityError(f"type II mass must satisfy |m| < d_N/2 = {g.half}, got {m}")


def default_shift(spec: PotentialSpec) -> float:
    if spec.kind == TYPE1:
        s = spec.slope_at_zero()
        return 2.0 * s if np.isfinite(s) and s > 0 else 1.0
    h = spec.p.get("half_width", 0.5)
    return 4.0 * float(spec.f_tilde(0.0)) / h**2


class Preconditioner:
    """Inverse of a*K + b*W for the grid Laplacian K and weights W."""

    def __init__(self, grid: Grid, eps: float, shift: float):
        self.grid = grid
        a = 2.0 / grid.h**2
        b = shift / eps**2
        self.uniform = grid.ndim > 1 or grid.domain is not None
        if self.uniform:
            vol = float(grid.weights[grid.mask].max())
            lam = 0.0
            for ax, n in enumerate(grid.shape):
                k = np.arange(n)
                shape = [1] * grid.ndim
                shape[ax] = n
                lam = lam + (2 - 2 * np.cos(np.pi * k / n)).reshape(shape)
            self.diag = vol * (a * lam + b)
        else:
            ew = grid.edge_weights[0]
            n = grid.shape[0]
            main = b * grid.weights.copy()
            main[:-1] += a * ew
            main[1:] += a * ew
            # keep the system definite on zero-weight nodes
            main = np.where(main > 0, main, b * 1e-12 + 1e-300)
            off = np.zeros(n)
            off[1:] = -a * ew
            self.band = np.vstack([off, main])

    def __call__(self, G: np.ndarray) -> np.ndarray:
        if self.uniform:
            axes = tuple(range(self.grid.ndim))
            spec = fft.dctn(G, type=2, axes=axes, norm="ortho")
            spec /= self.diag[..., None]
            return fft.idctn(spec, type=2, axes=axes, norm="ortho")
        return linalg.solveh_banded(self.band, G, lower=False)


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a * b))


def minimize(init: DiscreteField, g: WellGeometry, spec: PotentialSpec, dens: DensitySpec, m: float,
             cfg: SolverConfig, callback: Callable[[dict], None] | None = None) -> SolveResult:
    check_admissible(g, dens, m)
    cfg.check_mass_tol(m)
    grid = init.grid
    eps = cfg.eps
    w = grid.weights[..., None]
    P = Preconditioner(grid, eps, cfg.precond_shift or default_shift(spec))

    def mass_parts(u):
        rho = density_value(dens, u, g)
        return float(np.sum(grid.weights * rho)) - m, w * density_grad(dens, u, g)

    def projected_gradient(u):
        # energy gradient with its component along the constraint gradient removed, in the P^-1 norm
        GE = energy_derivative(u, grid, g, spec, eps)
        _, GM = mass_parts(u)
        PGM = P(GM)
        Gp = GE - (_dot(GE, PGM) / max(_dot(GM, PGM), 1e-300)) * GM
        return float(np.sqrt(max(_dot(Gp, P(Gp)), 0.0)))

    def objective(u, lam, mu):
        d, p = energy_parts(u, grid, g, spec, eps)
        c, _ = mass_parts(u)
        return d + p + lam * c + 0.5 * mu * c * c, d + p, c

    u = init.values.copy()
    start = energy(init, g, spec, eps, dens, m)
    start_ok = abs(start.mass_residual) <= cfg.c_tol
    GE = energy_derivative(u, grid, g, spec, eps)
    c, GM = mass_parts(u)
    PGM = P(GM)
    lam = -_dot(GE, PGM) / max(_dot(GM, PGM), 1e-300)
    mu = cfg.mu_pen / eps**2
    omega = 1e-2
    tau = cfg.tau0
    it = 0
    history = []
    converged = False
    pg = np.inf
    c_prev = abs(c)
    note = ""
    stalled = False

    for outer in range(cfg.max_outer):
        L, E, c = objective(u, lam, mu)
        recent = [L]
        stalled = False
        for inner in range(cfg.inner_iter):
            GE = energy_derivative(u, grid, g, spec, eps)
            c, GM = mass_parts(u)
            G = GE + (lam + mu * c) * GM
            PG = P(G)
            PGM = P(GM)
            # Sherman-Morrison for the penalty curvature mu * GM GM^T
            gm_pgm = _dot(GM, PGM)
            d = -(PG - PGM * (mu * _dot(GM, PG) / (1.0 + mu * gm_pgm)))
            slope = _dot(G, d)
            dec = np.sqrt(max(-slope, 0.0))
            if dec <= max(omega, 0.1 * cfg.g_tol) or it >= cfg.max_iter:
                break
            accepted = False
            for _ in range(60):
                trial = u + tau * d
                Lt, Et, ct = objective(trial, lam, mu)
                if not np.isfinite(Lt):
                    raise MinimizerError("non-finite energy", DiscreteField(grid, u))
                if Lt <= L + 1e-4 * tau * slope and Lt <= L:
                    accepted = True
                    break
                tau *= cfg.shrink
            if not accepted:
                note = "line search stalled"
                break
            assert Lt <= L, "augmented Lagrangian increased on an accepted step"
            u, L, E, c = trial, Lt, Et, ct
            tau = min(tau * cfg.growth, cfg.tau_max)
            it += 1
            recent.append(L)
            if len(recent) > cfg.stall_window:
                if recent[0] - L <= cfg.stall_tol * max(1.0, abs(L)):
                    stalled = True
                    break
                recent.pop(0)
        # convergence test on the energy gradient projected off the constraint gradient
        c, _ = mass_parts(u)
        pg = projected_gradient(u)
        rec = {"outer": outer, "iterations": it, "energy": E, "residual": c, "lam": lam, "mu": mu,
               "projected_gradient": pg}
        history.append(rec)
        if callback is not None:
            callback(rec)
        log.debug("outer %d: %s", outer, rec)
        if abs(c) <= cfg.c_tol and pg <= cfg.g_tol:
            converged = True
            break
        if it >= cfg.max_iter or note:
            break
        lam += cfg.lam_factor * mu * c
        if abs(c) > cfg.stall_ratio * c_prev:
            mu *= 2.0
        c_prev = abs(c)
        omega = max(0.3 * omega, 0.1 * cfg.g_tol)

    u, restored = _restore_mass(u, grid, g, dens, m, P, cfg.c_tol)
    field_ = DiscreteField(grid, u)
    bd = energy(field_, g, spec, eps, dens, m)
    if restored:
        pg = projected_gradient(u)
    converged = abs(bd.mass_residual) <= cfg.c_tol and pg <= cfg.g_tol
    if not converged and not note and stalled:
        note = "stagnated"
    if start_ok and (start.total < bd.total or abs(bd.mass_residual) > cfg.c_tol):
        # never hand back an admissible state worse than the one we were given
        field_, bd, converged = init.copy(), start, False
        pg = projected_gradient(field_.values)
        note = (note + "; " if note else "") + "initial state retained"
    return SolveResult(field_, bd, it, converged, lam, pg, eps, history, note)


def _restore_mass(u, grid, g, dens, m, P, c_tol, max_newton: int = 30):
    """Newton along a smooth (preconditioned) direction until the mass is exact."""
    w = grid.weights
    c = float(np.sum(w * density_value(dens, u, g))) - m
    if abs(c) <= 0.5 * c_tol:
        return u, False
    for _ in range(max_newton):
        GM = w[..., None] * density_grad(dens, u, g)
        d = P(GM)
        slope = _dot(GM, d)
        if slope <= 0:
            break
        u = u - (c / slope) * d
        c = float(np.sum(w * density_value(dens, u, g))) - m
        if abs(c) <= 0.1 * c_tol:
            break
    return u, True


def random_init(grid: Grid, g: WellGeometry, seed: int) -> DiscreteField:
    """Well-valued i.i.d. node assignment (either well, uniformly random point on it)."""
    rng = np.random.default_rng(seed)
    n = int(np.prod(grid.shape))
    side = rng.random(n) < 0.5
    pm = g.minus.sample(256)
    pp = g.plus.sample(256)
    vals = np.where(side[:, None], pp[rng.integers(0, len(pp), n)], pm[rng.integers(0, len(pm), n)])
    return DiscreteField(grid, vals.reshape(grid.shape + (g.k,)))


@dataclass
class SweepEntry:
    eps: float
    result: SolveResult | None
    error: str | None = None
    init_source: str = ""


def continuation_sweep(eps_list, g: WellGeometry, spec: PotentialSpec, dens: DensitySpec, m: float,
                       cfg: SolverConfig, first_init: Callable[[float], DiscreteField],
                       comparison: Callable[[float], DiscreteField | None] | None = None,
                       callback: Callable[[dict], None] | None = None) -> list[SweepEntry]:
    """Solve along a strictly decreasing eps schedule, warm-starting each solve.

    The previous solution is the default start; when a comparison map for
    the current eps is available and has lower energy it is used instead, so
    every solve starts at or below the constructive upper bound.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    out: list[SweepEntry] = []
    prev: DiscreteField | None = None
    for eps in eps_list:
        c = SolverConfig(**{**asdict(cfg), "eps": eps})
        try:
            cands = []
            if prev is not None:
                cands.append(("warm", prev))
            cmp_ = comparison(eps) if comparison is not None else None
            if cmp_ is not None:
                cands.append(("comparison_map", cmp_))
            if not cands:
                cands.append(("initial", first_init(eps)))
            src, init = min(cands, key=lambda sc: energy(sc[1], g, spec, eps, dens, m).total
                            if abs(energy(sc[1], g, spec, eps, dens, m).mass_residual) <= 1e-6 else np.inf)
            res = minimize(init, g, spec, dens, m, c, callback)
            out.append(SweepEntry(eps, res, None, src))
            prev = res.field
        except Exception as exc:  # recorded per entry, sweep continues
            log.warning("eps=%g failed: %s", eps, exc)
            out.append(SweepEntry(eps, None, f"{type(exc).__name__}: {exc}"))
    return out
