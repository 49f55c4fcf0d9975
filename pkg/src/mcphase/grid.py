"""Cell-centred grids, discrete energy, mass functional and phase diagnostics.

Gradients returned here are L^2 densities: the directional derivative of a
functional J along v is sum_i w_i <g_i, v_i>, with w the node weights.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .isoperimetry import Descriptor, DomainSpec
from .levelset import extend_outside, level_line_length
from .wells import (DensitySpec, PotentialSpec, WellGeometry, density_grad, density_value,
                    potential_grad, potential_value)

_MAGIC = b"MCPF"


@dataclass
class Grid:
    """Uniform cell-centred grid with node (cell) weights and edge weights.

    The discrete Dirichlet energy is sum_edges e * |(u_j - u_i)/h|^2.
    """

    shape: tuple[int, ...]
    h: float
    origin: np.ndarray
    weights: np.ndarray
    edge_weights: list[np.ndarray]
    domain: DomainSpec | None = None

    @classmethod
    def build(cls, domain: DomainSpec, resolution: int, supersample: int = 8) -> "Grid":
        lo, hi = domain.bounding_box()
        n = domain.n
        h = float((hi[0] - lo[0]) / resolution)
        shape = (resolution,) * n
        vol = h**n
        if domain.kind != "disk":
            w = np.full(shape, vol)
            edges = [np.full(tuple(s - 1 if a == ax else s for a, s in enumerate(shape)), vol)
                     for ax in range(n)]
        else:
            frac = _cut_cell_fractions(domain, lo, h, resolution, supersample)
            w = frac * vol
            edges = []
            for ax in range(n):
                ff = _face_fractions(domain, lo, h, resolution, ax, supersample)
                # an edge only couples two cells that both carry volume
                both = (np.diff(frac > 0, axis=ax) == 0) & (np.delete(frac, 0, axis=ax) > 0)
                edges.append(np.where(both, ff, 0.0) * vol)
        total = math.fsum(w.ravel())
        w = w / total
        edges = [e / total * 1.0 for e in edges]
        return cls(shape, h, np.asarray(lo, float), w, edges, domain)

    @classmethod
    def weighted_1d(cls, node_weights: np.ndarray, edge_weights: np.ndarray, h: float,
                    origin: float = 0.0) -> "Grid":
        """1D grid with prescribed node and edge weights (weighted reduced problems)."""
        node_weights = np.asarray(node_weights, float)
        edge_weights = np.asarray(edge_weights, float)
        if edge_weights.shape[0] != node_weights.shape[0] - 1:
            raise ValueError("need one edge weight per consecutive pair of nodes")
        return cls((node_weights.size,), float(h), np.array([origin]), node_weights, [edge_weights], None)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def mask(self) -> np.ndarray:
        return self.weights > 0

    def coords(self) -> np.ndarray:
        axes = [self.origin[a] + (np.arange(s) + 0.5) * self.h for a, s in enumerate(self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def contains(self, x: np.ndarray) -> np.ndarray:
        if self.domain is not None:
            return self.domain.contains(x)
        lo = self.origin
        hi = self.origin + self.h * np.asarray(self.shape)
        return np.all((x >= lo) & (x <= hi), axis=-1)


def _cut_cell_fractions(domain, lo, h, n, ss):
    sub = (np.arange(ss) + 0.5) / ss
    xs = lo[0] + (np.arange(n)[:, None] + sub[None, :]) * h  # (n, ss)
    ys = lo[1] + (np.arange(n)[:, None] + sub[None, :]) * h
    X = xs[:, None, :, None]
    Y = ys[None, :, None, :]
    inside = X**2 + Y**2 <= domain.radius**2
    return inside.mean(axis=(2, 3))


def _face_fractions(domain, lo, h, n, axis, ss):
    """Fraction of each interior face (between cells i, i+1 along axis) inside the disk."""
    sub = (np.arange(ss) + 0.5) / ss
    face_pos = lo[axis] + (np.arange(1, n)) * h  # n-1 faces
    other = lo[1 - axis] + (np.arange(n)[:, None] + sub[None, :]) * h  # (n, ss)
    A = face_pos[:, None, None]
    B = other[None, :, :]
    inside = A**2 + B**2 <= domain.radius**2
    fr = inside.mean(axis=2)  # (n-1, n): [face index, other index]
    return fr if axis == 0 else fr.T


@dataclass
class DiscreteField:
    grid: Grid
    values: np.ndarray  # shape grid.shape + (k,)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[:-1] != tuple(self.grid.shape):
            raise ValueError("values do not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite values")

    @property
    def k(self) -> int:
        return self.values.shape[-1]

    def copy(self) -> "DiscreteField":
        return DiscreteField(self.grid, self.values.copy())

    # ---- serialization
    def to_bytes(self) -> bytes:
        head = _MAGIC + struct.pack("<I", self.grid.ndim)
        head += struct.pack(f"<{self.grid.ndim}I", *self.grid.shape)
        head += struct.pack("<Id", self.k, self.grid.h)
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    def to_csv(self, path) -> None:
        if self.grid.ndim != 1:
            raise ValueError("CSV export is for 1D fields")
        x = self.grid.coords()[..., 0]
        cols = ",".join(f"u{i + 1}" for i in range(self.k))
        np.savetxt(path, np.column_stack([x, self.values]), delimiter=",", header="x," + cols,
                   comments="", fmt="%.17g")


def read_field(data: bytes, grid: Grid | None = None) -> tuple[tuple[int, ...], int, float, np.ndarray]:
    """Parse the binary layout; returns (dims, k, h, values)."""
    if data[:4] != _MAGIC:
        raise ValueError("not a field file")
    (nd,) = struct.unpack_from("<I", data, 4)
    dims = struct.unpack_from(f"<{nd}I", data, 8)
    off = 8 + 4 * nd
    k, h = struct.unpack_from("<Id", data, off)
    off += 12
    vals = np.frombuffer(data, dtype="<f8", offset=off).reshape(tuple(dims) + (k,)).copy()
    return tuple(dims), k, h, vals


# ---------------------------------------------------------------- energy


@dataclass
class EnergyBreakdown:
    dirichlet: float
    potential: float
    total: float
    mass: float = float("nan")
    mass_residual: float = float("nan")

    def as_dict(self) -> dict:
        return {"dirichlet": self.dirichlet, "potential": self.potential, "total": self.total,
                "mass": self.mass, "mass_residual": self.mass_residual}


def _fsum(a: np.ndarray) -> float:
    return math.fsum(np.ravel(a))


def dirichlet_density(values: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Per-edge weighted squared differences, one array per axis."""
    out = []
    for ax, ew in enumerate(grid.edge_weights):
        d = np.diff(values, axis=ax) / grid.h
        out.append(ew * np.sum(d * d, axis=-1))
    return out


def energy_parts(values: np.ndarray, grid: Grid, g: WellGeometry, spec: PotentialSpec, eps: float,
                 exact: bool = False) -> tuple[float, float]:
    s = _fsum if exact else (lambda a: float(np.sum(a)))
    dir_ = sum(s(a) for a in dirichlet_density(values, grid))
    pot = s(grid.weights * potential_value(g, spec, values)) / eps**2
    return dir_, pot


def energy(u: DiscreteField, g: WellGeometry, spec: PotentialSpec, eps: float,
           dens: DensitySpec | None = None, m: float | None = None) -> EnergyBreakdown:
    if not eps > 0:
        raise ValueError("eps must be positive")
    d, p = energy_parts(u.values, u.grid, g, spec, eps, exact=True)
    out = EnergyBreakdown(d, p, d + p)
    if dens is not None:
        out.mass = mass_and_gradient(u, g, dens)[0]
        if m is not None:
            out.mass_residual = out.mass - m
    return out


def energy_derivative(values: np.ndarray, grid: Grid, g: WellGeometry, spec: PotentialSpec,
                      eps: float) -> np.ndarray:
    """Partial derivatives of the discrete energy with respect to node values."""
    G = grid.weights[..., None] * potential_grad(g, spec, values) / eps**2
    for ax, ew in enumerate(grid.edge_weights):
        flux = 2.0 * ew[..., None] * np.diff(values, axis=ax) / grid.h**2
        lo = [slice(None)] * G.ndim
        hi = [slice(None)] * G.ndim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        G[tuple(lo)] -= flux
        G[tuple(hi)] += flux
    return G


def _as_density(G: np.ndarray, grid: Grid) -> np.ndarray:
    w = grid.weights[..., None]
    return np.where(w > 0, G / np.where(w > 0, w, 1.0), 0.0)


def energy_gradient(u: DiscreteField, g: WellGeometry, spec: PotentialSpec, eps: float) -> DiscreteField:
    """L^2 gradient of the discrete energy (discrete -2 Lap u + F'(u)/eps^2)."""
    return DiscreteField(u.grid, _as_density(energy_derivative(u.values, u.grid, g, spec, eps), u.grid))


def mass_and_gradient(u: DiscreteField, g: WellGeometry, dens: DensitySpec) -> tuple[float, DiscreteField]:
    rho = density_value(dens, u.values, g)
    mass = _fsum(u.grid.weights * rho)
    return mass, DiscreteField(u.grid, density_grad(dens, u.values, g))


# ---------------------------------------------------------------- diagnostics


@dataclass
class PhaseDiagnostics:
    vol_plus: float
    vol_minus: float
    vol_rest: float
    perimeter_plus: float
    perimeter_minus: float
    extra: dict = field(default_factory=dict)


def _set_perimeter(indicator_field: np.ndarray, grid: Grid) -> float:
    """Perimeter of {field <= 0} relative to the domain."""
    mask = grid.mask
    if grid.ndim == 1:
        ind = (indicator_field <= 0)[mask]
        return float(np.count_nonzero(ind[1:] != ind[:-1]))
    f = extend_outside(indicator_field, mask)
    return level_line_length(f, 0.0, grid.origin, grid.h, grid.contains)


def phase_diagnostics(u: DiscreteField, g: WellGeometry, delta: float) -> PhaseDiagnostics:
    if not 0 < delta <= g.delta_N + 1e-15:
        raise ValueError("need 0 < delta <= delta_N")
    dm, dp = g.distances(u.values)
    w = u.grid.weights
    minus = dm <= delta
    plus = (dp <= delta) & ~minus
    vm = _fsum(w * minus)
    vp = _fsum(w * plus)
    vr = _fsum(w * ~(minus | plus))
    pm = _set_perimeter(dm - delta, u.grid)
    pp = _set_perimeter(dp - delta, u.grid)
    return PhaseDiagnostics(vp, vm, vr, pp, pm)


def interface_width(u: DiscreteField, g: WellGeometry, level: float | None = None) -> float:
    """Width of the transition layer {d(u, N) > level}, level = delta_N/2 by default.

    In 1D this is the distance between the outermost level crossings; in 2D
    the layer area divided by the length of its mid-line.
    """
    level = g.delta_N / 2 if level is None else level
    dm, dp = g.distances(u.values)
    d = np.minimum(dm, dp) - level
    grid = u.grid
    if grid.ndim == 1:
        x = grid.coords()[..., 0]
        idx = np.nonzero(np.sign(d[1:]) != np.sign(d[:-1]))[0]
        if idx.size < 2:
            return 0.0
        cross = x[idx] + (x[idx + 1] - x[idx]) * d[idx] / (d[idx] - d[idx + 1])
        return float(cross[-1] - cross[0])
    area = _fsum(grid.weights * (d > 0))
    mid = level_line_length(extend_outside(dm - dp, grid.mask), 0.0, grid.origin, grid.h, grid.contains)
    return area / mid if mid > 0 else 0.0


def signed_distance(grid: Grid, descriptor: Descriptor) -> np.ndarray:
    return descriptor.sdf(grid.coords())


def projected_field(u: DiscreteField, g: WellGeometry) -> DiscreteField:
    foot, _, _ = g.project(u.values)
    return DiscreteField(u.grid, foot)
