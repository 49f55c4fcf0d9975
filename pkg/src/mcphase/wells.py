"""Wells N = N+ u N-, the potentials built on them, and mass densities.

All pointwise evaluators are vectorized: a point argument is an array whose
last axis has length k (the ambient dimension).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import optimize

MINUS = -1
PLUS = 1


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Manifold:
    """A point, circle (k=2) or round sphere in R^k."""

    kind: str
    center: tuple[float, ...]
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("point", "circle", "sphere"):
            raise GeometryError(f"unknown manifold kind {self.kind!r}")
        if self.kind == "circle" and len(self.center) != 2:
            raise GeometryError("a circle lives in R^2")
        if self.kind != "point" and not self.radius > 0:
            raise GeometryError("radius must be positive")

    @classmethod
    def point(cls, center) -> "Manifold":
        return cls("point", tuple(float(c) for c in center))

    @classmethod
    def circle(cls, center, radius) -> "Manifold":
        return cls("circle", tuple(float(c) for c in center), float(radius))

    @classmethod
    def sphere(cls, center, radius) -> "Manifold":
        return cls("sphere", tuple(float(c) for c in center), float(radius))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def reach(self) -> float:
        return np.inf if self.kind == "point" else self.radius

    @property
    def max_curvature(self) -> float:
        return 0.0 if self.kind == "point" else 1.0 / self.radius

    def project(self, p: np.ndarray) -> np.ndarray:
        """Nearest point; the center of a sphere maps to center + r*e1."""
        p = np.asarray(p, dtype=float)
        c = self.c
        if self.kind == "point":
            return np.broadcast_to(c, p.shape).copy()
        v = p - c
        nrm = np.linalg.norm(v, axis=-1, keepdims=True)
        e1 = np.zeros_like(c)
        e1[0] = 1.0
        safe = nrm > 1e-300
        direction = np.where(safe, v / np.where(safe, nrm, 1.0), e1)
        return c + self.radius * direction

    def distance(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        r = np.linalg.norm(p - self.c, axis=-1)
        return r if self.kind == "point" else np.abs(r - self.radius)

    def sample(self, n: int) -> np.ndarray:
        """Deterministic, roughly uniform sample of n points."""
        c = self.c
        if self.kind == "point":
            return c[None, :].copy()
        k = self.dim
        if k == 2:
            th = 2 * np.pi * np.arange(n) / n
            return c + self.radius * np.stack([np.cos(th), np.sin(th)], axis=1)
        # fixed-seed random directions
        rng = np.random.default_rng(12345)
        x = rng.standard_normal((n, k))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        return c + self.radius * x

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "center": list(self.center)}
        if self.kind != "point":
            d["radius"] = self.radius
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Manifold":
        return cls(d["kind"], tuple(float(c) for c in d["center"]), float(d.get("radius", 0.0)))


def _closest_pair(a: Manifold, b: Manifold, n_samples: int = 4096) -> tuple[np.ndarray, np.ndarray, float]:
    """Closest points of two manifolds: sampling followed by alternating projections."""
    pa = a.sample(n_samples)
    pb = b.sample(n_samples)
    # coarse search: nearest point of b to each sample of a
    db = b.distance(pa)
    i = int(np.argmin(db))
    x = pa[i]
    y = b.project(x)
    prev = np.inf
    for _ in range(10000):
        x = a.project(y)
        y = b.project(x)
        d = float(np.linalg.norm(x - y))
        if prev - d <= 1e-15 * max(d, 1.0):
            break
        prev = d
    return x, y, float(np.linalg.norm(x - y))


@dataclass
class WellGeometry:
    minus: Manifold
    plus: Manifold
    delta_N: float | None = None
    d_N: float = field(init=False)
    p_minus: np.ndarray = field(init=False, repr=False)
    p_plus: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.minus.dim != self.plus.dim:
            raise GeometryError("wells must live in the same R^k")
        x, y, d = _closest_pair(self.minus, self.plus)
        # refine in the other order too and keep the best
        y2, x2, d2 = _closest_pair(self.plus, self.minus)
        if d2 < d:
            x, y, d = x2, y2, d2
        if not d > 1e-12:
            raise GeometryError("wells intersect (d_N = 0)")
        self.d_N = float(np.linalg.norm(x - y))
        self.p_minus = x
        self.p_plus = y
        reach = min(self.minus.reach, self.plus.reach)
        if self.delta_N is None:
            self.delta_N = min(self.d_N / 4, reach / 2)
        if not (0 < self.delta_N < self.d_N / 2 and self.delta_N < reach):
            raise GeometryError(f"delta_N={self.delta_N} violates 0 < delta_N < min(d_N/2, reach)")

    @property
    def k(self) -> int:
        return self.minus.dim

    @property
    def half(self) -> float:
        return self.d_N / 2

    @property
    def curvature_bound(self) -> float:
        """Twice the largest principal curvature of N."""
        return 2 * max(self.minus.max_curvature, self.plus.max_curvature)

    def default_delta_star(self) -> float:
        c = self.curvature_bound
        cap = np.inf if c == 0 else 1.0 / c
        return 0.5 * min(self.delta_N, cap)

    def distances(self, p) -> tuple[np.ndarray, np.ndarray]:
        return self.minus.distance(p), self.plus.distance(p)

    def project(self, p):
        """(foot, dist, side) of the nearest point of N; ties go to minus."""
        p = np.asarray(p, dtype=float)
        dm, dp = self.distances(p)
        to_minus = dm <= dp
        foot = np.where(to_minus[..., None], self.minus.project(p), self.plus.project(p))
        dist = np.where(to_minus, dm, dp)
        side = np.where(to_minus, MINUS, PLUS)
        return foot, dist, side

    def signed_well_distance(self, p) -> np.ndarray:
        """d0: d(p,N-) - d/2 near N-, d/2 - d(p,N+) near N+, 0 elsewhere."""
        dm, dp = self.distances(p)
        h = self.half
        return np.where(dm <= h, dm - h, np.where(dp <= h, h - dp, 0.0))

    def signed_well_distance_grad(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        dm, dp = self.distances(p)
        h = self.half
        gm = _unit(p - self.minus.project(p))
        gp = -_unit(p - self.plus.project(p))
        out = np.where((dm <= h)[..., None], gm, np.where((dp <= h)[..., None], gp, 0.0))
        return out

    def to_dict(self) -> dict:
        return {"minus": self.minus.to_dict(), "plus": self.plus.to_dict(), "delta_N": self.delta_N}

    @classmethod
    def from_dict(cls, d: dict) -> "WellGeometry":
        return cls(Manifold.from_dict(d["minus"]), Manifold.from_dict(d["plus"]), d.get("delta_N"))


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.where(n > 1e-300, v / np.where(n > 1e-300, n, 1.0), 0.0)


# ---------------------------------------------------------------- potentials

TYPE1 = "type1"
TYPE2 = "type2"


@dataclass(frozen=True)
class PotentialSpec:
    """Named scalar profile.

    type1: ``linear`` f(t)=coef*t, ``power`` f(t)=coef*t**exponent.
    type2: ``power_well`` f(s)=coef*(h^2-s^2)^(1+q) * (1 + tilt*s*(h^2-s^2)/h^3),
    with h = half_width (= d_N/2).
    """

    kind: str
    name: str
    params: tuple[tuple[str, float], ...] = ()

    @classmethod
    def type1(cls, name: str = "linear", **params) -> "PotentialSpec":
        return cls(TYPE1, name, tuple(sorted((k, float(v)) for k, v in params.items())))

    @classmethod
    def type2(cls, half_width: float, q: float = 0.5, tilt: float = 0.0, coef: float = 1.0) -> "PotentialSpec":
        return cls(TYPE2, "power_well", tuple(sorted(
            {"half_width": float(half_width), "q": float(q), "tilt": float(tilt), "coef": float(coef)}.items())))

    def __post_init__(self):
        known = {TYPE1: ("linear", "power"), TYPE2: ("power_well",)}
        if self.kind not in known or self.name not in known[self.kind]:
            raise ValueError(f"unknown potential {self.kind}/{self.name}")

    @property
    def p(self) -> dict[str, float]:
        return dict(self.params)

    def _get(self, key, default):
        return self.p.get(key, default)

    # ---- type I profile f on [0, inf)
    def f(self, t):
        t = np.asarray(t, dtype=float)
        coef = self._get("coef", 1.0)
        if self.name == "linear":
            return coef * t
        return coef * np.power(np.maximum(t, 0.0), self._get("exponent", 1.0))

    def df(self, t):
        t = np.asarray(t, dtype=float)
        coef = self._get("coef", 1.0)
        if self.name == "linear":
            return np.full_like(t, coef)
        e = self._get("exponent", 1.0)
        return coef * e * np.power(np.maximum(t, 1e-300), e - 1.0)

    def slope_at_zero(self) -> float:
        """lim f(t)/t as t -> 0 (0 or inf when degenerate)."""
        if self.name == "linear":
            return self._get("coef", 1.0)
        e = self._get("exponent", 1.0)
        if e == 1.0:
            return self._get("coef", 1.0)
        return 0.0 if e > 1 else np.inf

    def satisfies_H(self, delta_N: float, n: int = 400) -> tuple[bool, dict]:
        """Spot-check the growth hypothesis on a log grid."""
        small = np.logspace(-12, np.log10(delta_N**2), n)
        ratio = self.f(small) / small
        c1, c2 = float(ratio.min()), float(ratio.max())
        large = np.logspace(np.log10(delta_N**2), 8, n)
        c3 = float(self.f(large).min())
        tail = np.logspace(2, 8, n)
        c4 = float((self.f(tail) / np.sqrt(tail)).min())
        # c1 must not degenerate as t -> 0: compare the two smallest decades
        stable = ratio[: n // 10].min() > 0.5 * ratio[n // 10: n // 5].min()
        ok = c1 > 0 and np.isfinite(c2) and c3 > 0 and c4 > 0 and stable
        return bool(ok), {"c1": c1, "c2": c2, "c3": c3, "c4": c4}

    # ---- type II profile f~ on [-h, h]
    def f_tilde(self, s):
        s = np.asarray(s, dtype=float)
        h = self._get("half_width", 0.5)
        q = self._get("q", 0.5)
        a = self._get("tilt", 0.0)
        w = np.maximum(h * h - s * s, 0.0)
        return self._get("coef", 1.0) * np.power(w, 1 + q) * (1 + a * s * w / h**3)

    def df_tilde(self, s):
        s = np.asarray(s, dtype=float)
        h = self._get("half_width", 0.5)
        q = self._get("q", 0.5)
        a = self._get("tilt", 0.0)
        w = np.maximum(h * h - s * s, 0.0)
        g = 1 + a * s * w / h**3
        dg = a * (w - 2 * s * s) / h**3
        dw = -2 * s
        return self._get("coef", 1.0) * ((1 + q) * np.power(w, q) * dw * g + np.power(w, 1 + q) * dg)

    def check_type2_shape(self, n: int = 20001) -> float:
        """Verify two zeros at +-h and a single interior critical point; return it."""
        h = self._get("half_width", 0.5)
        q = self._get("q", 0.5)
        if not 0 < q < 1:
            raise ValueError("exponent q must lie in (0, 1) for a compactly supported profile")
        s = np.linspace(-h, h, n)
        v = self.f_tilde(s)
        if np.any(v[1:-1] <= 0) or abs(v[0]) > 0 or abs(v[-1]) > 0:
            raise ValueError("f~ must vanish exactly at +-h and be positive inside")
        x = s[1:-1]
        d = self.df_tilde(x)
        zero = np.nonzero(d == 0)[0]
        nz = d != 0
        changes = np.nonzero(np.diff(np.sign(d[nz])) != 0)[0]
        if len(changes) != 1:
            raise ValueError(f"f~ must have one interior critical point, found {len(changes)}")
        if zero.size == 1:
            return float(x[zero[0]])
        xs = x[nz]
        i = changes[0]
        return float(optimize.brentq(lambda y: float(self.df_tilde(y)), xs[i], xs[i + 1], xtol=1e-15))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "name": self.name, **self.p}

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialSpec":
        d = dict(d)
        kind, name = d.pop("kind"), d.pop("name")
        return cls(kind, name, tuple(sorted((k, float(v)) for k, v in d.items())))


def potential_value(g: WellGeometry, spec: PotentialSpec, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if spec.kind == TYPE1:
        dm, dp = g.distances(p)
        d = np.minimum(dm, dp)
        return spec.f(d * d)
    return spec.f_tilde(g.signed_well_distance(p))


def potential_grad(g: WellGeometry, spec: PotentialSpec, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if spec.kind == TYPE1:
        foot, dist, _ = g.project(p)
        return 2 * spec.df(dist * dist)[..., None] * (p - foot)
    s = g.signed_well_distance(p)
    return spec.df_tilde(s)[..., None] * g.signed_well_distance_grad(p)


# ---------------------------------------------------------------- densities

NORM = "norm"
SIGNED = "signed_well_distance"


@dataclass
class DensitySpec:
    kind: str
    m1: float = float("nan")
    m2: float = float("nan")

    @classmethod
    def for_geometry(cls, kind: str, g: WellGeometry) -> "DensitySpec":
        if kind == SIGNED:
            return cls(SIGNED, g.half, g.half)
        if kind != NORM:
            raise ValueError(f"unknown density {kind!r}")
        if not np.allclose(g.minus.sample(64), 0.0, atol=1e-14):
            raise GeometryError("norm density needs N- = {0}")
        pl = g.plus
        if pl.kind == "point":
            m1 = m2 = float(np.linalg.norm(pl.c))
        else:
            cn = float(np.linalg.norm(pl.c))
            m1, m2 = abs(cn - pl.radius), cn + pl.radius
        s = np.linalg.norm(pl.sample(2048), axis=1)
        if s.min() < m1 - 1e-9 or s.max() > m2 + 1e-9:
            raise GeometryError("sampled density range disagrees with closed form")
        if not 0 < m1 < m2:
            raise GeometryError(f"need 0 < m1 < m2, got {m1}, {m2}")
        return cls(NORM, m1, m2)

    @property
    def lipschitz(self) -> float:
        return 1.0


def density_value(spec: DensitySpec, p, g: WellGeometry | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if spec.kind == NORM:
        return np.linalg.norm(p, axis=-1)
    if g is None:
        raise ValueError("signed well distance density needs the geometry")
    return g.signed_well_distance(p)


def density_grad(spec: DensitySpec, p, g: WellGeometry | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if spec.kind == NORM:
        return _unit(p)
    return g.signed_well_distance_grad(p)
