import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import beta, gamma

from mcphase.grid import DiscreteField, Grid, energy
from mcphase.isoperimetry import DomainSpec, IsoperimetricProfile
from mcphase.type2 import (ProfileDivergence, ReducedProblem, c0_tilde, distribution_mismatch, mass_offset,
                           minus_volume, profile_start, rearrange, reduced_energy, scalar_geometry,
                           second_order_constants, solve_z)
from mcphase.wells import PotentialSpec

EVEN = PotentialSpec.type2(0.5)
TILTED = PotentialSpec.type2(0.5, tilt=0.5)


@pytest.fixture(scope="module")
def z_even():
    return solve_z(EVEN, 1.0)


@pytest.fixture(scope="module")
def z_tilt():
    return solve_z(TILTED, 1.0)


def test_even_support_closed_form(z_even):
    # int_0^h ds / (h^2 - s^2)^(3/4) = h^(-1/2) B(1/2, 1/4) / 2
    T = 0.5**-0.5 * 0.5 * beta(0.5, 0.25)
    assert z_even.t2 == pytest.approx(T, abs=1e-12)
    assert z_even.t1 == pytest.approx(-T, abs=1e-12)
    assert z_even.c == 0.0


def test_even_c0_closed_form():
    # 2 int_{-h}^{h} (h^2 - s^2)^(3/4) ds = 2 h^(5/2) sqrt(pi) Gamma(7/4) / Gamma(9/4)
    expected = 2 * 0.5**2.5 * np.sqrt(np.pi) * gamma(1.75) / gamma(2.25)
    assert c0_tilde(EVEN) == pytest.approx(expected, abs=1e-14)


def test_even_symmetry_constants(z_even):
    C = second_order_constants(z_even)
    assert abs(C.c_sym) <= 1e-10
    assert abs(C.tau0) <= 1e-10
    kin, pot = z_even.energy_split()
    assert abs(kin - pot) <= 1e-8
    assert kin + pot == pytest.approx(c0_tilde(EVEN), abs=1e-8)


def test_profile_solves_ode(z_even, z_tilt):
    assert z_even.ode_residual() <= 1e-8
    assert z_tilt.ode_residual() <= 1e-8
    assert z_tilt(np.array([z_tilt.t1 - 1, z_tilt.t2 + 1])).tolist() == [-0.5, 0.5]
    assert float(z_tilt(0.0)) == pytest.approx(z_tilt.c, abs=1e-14)


def test_tilted_support_by_quadrature(z_tilt):
    inv = lambda s: 1 / np.sqrt(TILTED.f_tilde(s))
    t2, _ = integrate.quad(inv, z_tilt.c, 0.5, limit=400)
    t1, _ = integrate.quad(inv, -0.5, z_tilt.c, limit=400)
    assert z_tilt.t2 == pytest.approx(t2, abs=1e-8)
    assert z_tilt.t1 == pytest.approx(-t1, abs=1e-8)


def test_tilted_c0_by_plain_quadrature():
    val, _ = integrate.quad(lambda s: np.sqrt(TILTED.f_tilde(s)), -0.5, 0.5, limit=400, epsabs=1e-14)
    assert c0_tilde(TILTED) == pytest.approx(2 * val, abs=1e-12)


def test_tilted_asymmetry_constant(z_tilt):
    # c_sym = 2 int f~(z(t)) t dt; in the variable s = z(t) this is 2 int sqrt(f~(s)) t(s) ds
    def t_of(s):
        return integrate.quad(lambda u: 1 / np.sqrt(TILTED.f_tilde(u)), z_tilt.c, s, limit=200)[0]
    ref = 2 * integrate.quad(lambda s: np.sqrt(TILTED.f_tilde(s)) * t_of(s), -0.5, 0.5, limit=200)[0]
    C = second_order_constants(z_tilt)
    assert C.c_sym == pytest.approx(ref, abs=1e-12)
    assert C.c_sym == pytest.approx(-0.09571985892886299, abs=1e-12)


def test_tilted_mass_offset(z_tilt):
    # int (z - h sgn t) dt over each half, split at the jump of sgn
    lo, _ = integrate.quad(lambda t: float(z_tilt(t)) + 0.5, z_tilt.t1, 0.0, limit=400, epsabs=1e-13)
    hi, _ = integrate.quad(lambda t: float(z_tilt(t)) - 0.5, 0.0, z_tilt.t2, limit=400, epsabs=1e-13)
    assert mass_offset(TILTED, z_tilt.c) == pytest.approx(lo + hi, abs=1e-8)
    assert second_order_constants(z_tilt).tau0 == pytest.approx(0.2539961455867721, abs=1e-12)


def test_second_order_constants_disk(z_tilt):
    disk = IsoperimetricProfile(DomainSpec("disk"))
    sv = minus_volume(0.2, 1.0)
    assert sv == pytest.approx(0.3)
    C = second_order_constants(z_tilt, disk, sv)
    assert C.n == 2
    assert C.kappa0 == pytest.approx(disk.derivative(sv), rel=1e-6)
    assert C.profile_value == pytest.approx(float(disk(0.3)))
    expected = (C.c_sym + C.c0_tilde * C.tau0) * C.kappa0 * C.profile_value
    assert C.second_order == pytest.approx(expected)
    # one dimension: the curvature term vanishes
    assert second_order_constants(z_tilt, IsoperimetricProfile(DomainSpec("interval")), sv).second_order == 0


def test_divergent_exponent_rejected():
    with pytest.raises((ProfileDivergence, ValueError)):
        solve_z(PotentialSpec.type2(0.5, q=1.0), 1.0)
    with pytest.raises(ValueError):
        solve_z(EVEN, 2.0)


@pytest.fixture(scope="module")
def disk_reduced():
    return ReducedProblem.build(IsoperimetricProfile(DomainSpec("disk")), 0.3, 2048)


def test_reduced_problem_weights(disk_reduced):
    red = disk_reduced
    assert red.grid.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(red.grid.weights > 0)
    assert np.all(np.diff(red.v_edges) > 0)


def test_profile_start_mass(disk_reduced, z_tilt):
    P, t0 = profile_start(disk_reduced, z_tilt, 0.2, 0.02)
    assert disk_reduced.mass(P) == pytest.approx(0.2, abs=1e-12)
    assert np.all(np.diff(P) >= 0)


@given(st.integers(0, 2**31 - 1))
def test_rearrangement_preserves_mass_and_distribution(disk_reduced, seed):
    rng = np.random.default_rng(seed)
    grid = Grid.build(DomainSpec("disk"), 48)
    u = rng.uniform(-0.5, 0.5, grid.shape)
    P = disk_reduced.rearrange(u, grid.weights)
    # averages come from differences of a cumulative integral, so allow roundoff
    assert np.all(np.diff(P) >= -1e-10)
    assert disk_reduced.mass(P) == pytest.approx(float(np.sum(grid.weights * u)), abs=1e-13)
    thresholds = np.quantile(u[grid.weights > 0], [0.1, 0.3, 0.5, 0.7, 0.9])
    # cell averaging can move at most one reduced cell plus one source cell across a threshold
    tol = disk_reduced.grid.weights.max() + grid.weights.max()
    assert distribution_mismatch(u, grid.weights, P, disk_reduced.grid.weights, thresholds) <= tol


def test_interval_rearrangement_is_sorting():
    n = 64
    red = ReducedProblem.build(IsoperimetricProfile(DomainSpec("interval")), 0.4, n)
    u = np.random.default_rng(0).uniform(-0.5, 0.5, n)
    np.testing.assert_allclose(red.rearrange(u, np.full(n, 1 / n)), np.sort(u), atol=1e-15)
    np.testing.assert_allclose(rearrange(u, np.ones(n), np.linspace(0, 1, n + 1)), np.sort(u), atol=1e-15)


@pytest.mark.parametrize("n", [64, 256, 1024])
@given(seed=st.integers(0, 2**31 - 1), eps=st.floats(0.01, 0.5))
def test_rearranged_energy_never_larger(n, seed, eps):
    g1 = scalar_geometry(1.0)
    red = ReducedProblem.build(IsoperimetricProfile(DomainSpec("interval")), 0.4, n)
    grid = Grid.build(DomainSpec("interval"), n)
    rng = np.random.default_rng(seed)
    u = np.cumsum(rng.normal(size=n)) * rng.uniform(0.01, 0.2)
    u = np.clip(u - u.mean(), -0.5, 0.5)
    full = energy(DiscreteField(grid, u[:, None]), g1, TILTED, eps).total
    P = red.rearrange(u, grid.weights)
    assert reduced_energy(P, red, TILTED, eps) <= full * (1 + 1e-12) + 1e-12
