import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from mcphase.wells import (NORM, SIGNED, DensitySpec, GeometryError, Manifold, PotentialSpec, WellGeometry,
                           density_grad, density_value, potential_grad, potential_value)

coord = st.floats(-3, 3, allow_nan=False)


def canonical_geometry():
    return WellGeometry(Manifold.point([0, 0]), Manifold.circle([2, 0], 1))


def test_closest_pair_point_and_circle():
    g = canonical_geometry()
    assert g.d_N == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(g.p_minus, [0, 0], atol=1e-12)
    np.testing.assert_allclose(g.p_plus, [1, 0], atol=1e-12)
    assert g.half == pytest.approx(0.5)


def test_closest_pair_two_circles():
    # centre distance 5, radii 1 and 2: gap 2 along the axis
    g = WellGeometry(Manifold.circle([0, 0], 1), Manifold.circle([5, 0], 2))
    assert g.d_N == pytest.approx(2.0, abs=1e-10)
    np.testing.assert_allclose(g.p_minus, [1, 0], atol=1e-8)
    np.testing.assert_allclose(g.p_plus, [3, 0], atol=1e-8)


def test_spheres_in_three_dimensions():
    g = WellGeometry(Manifold.point([0, 0, 0]), Manifold.sphere([0, 0, 3], 1))
    assert g.d_N == pytest.approx(2.0, abs=1e-10)


def test_intersecting_wells_rejected():
    with pytest.raises(GeometryError):
        WellGeometry(Manifold.point([2, 1]), Manifold.circle([2, 0], 1))


def test_bad_manifolds_rejected():
    with pytest.raises(GeometryError):
        Manifold.circle([0, 0, 0], 1)
    with pytest.raises(GeometryError):
        Manifold.circle([0, 0], 0)
    with pytest.raises(GeometryError):
        WellGeometry(Manifold.point([0, 0]), Manifold.point([1, 0]), delta_N=0.6)


@given(coord, coord)
def test_circle_projection_lands_on_circle(x, y):
    c = Manifold.circle([2, 0], 1)
    p = np.array([x, y])
    q = c.project(p)
    assert np.linalg.norm(q - c.c) == pytest.approx(1.0, abs=1e-12)
    # distance agrees with the distance to the projected point
    assert c.distance(p) == pytest.approx(np.linalg.norm(p - q), abs=1e-12)
    # and no sampled point is closer
    assert c.distance(p) <= np.min(np.linalg.norm(c.sample(720) - p, axis=1)) + 1e-12


def test_norm_density_range_of_circle():
    g = canonical_geometry()
    dens = DensitySpec.for_geometry(NORM, g)
    assert (dens.m1, dens.m2) == (pytest.approx(1.0), pytest.approx(3.0))


def test_norm_density_needs_origin_well():
    g = WellGeometry(Manifold.point([0.5, 0]), Manifold.circle([3, 0], 1))
    with pytest.raises(GeometryError):
        DensitySpec.for_geometry(NORM, g)


def test_signed_well_distance_values():
    g = canonical_geometry()
    p = np.array([[0.3, 0.0], [0.0, 0.0], [1.0, 0.0], [0.5, 0.0], [2.0, 1.2], [5.0, 5.0]])
    # d0 = d(p, N-) - 1/2 near N-, 1/2 - d(p, N+) near N+, 0 elsewhere
    expected = [0.3 - 0.5, -0.5, 0.5, 0.0, 0.5 - 0.2, 0.0]
    np.testing.assert_allclose(g.signed_well_distance(p), expected, atol=1e-12)
    dens = DensitySpec.for_geometry(SIGNED, g)
    np.testing.assert_allclose(density_value(dens, p, g), expected, atol=1e-12)


@given(st.floats(-0.45, 0.45), st.floats(-0.45, 0.45), st.sampled_from(["type1", "type2"]))
def test_potential_gradient_matches_differences(x, y, kind):
    g = canonical_geometry()
    spec = PotentialSpec.type1("linear") if kind == "type1" else PotentialSpec.type2(0.5, tilt=0.3)
    p = np.array([0.5 + x, y])
    dm, dp = g.distances(p)
    assume(abs(dm - dp) > 1e-4)  # F has a kink on the medial set
    grad = potential_grad(g, spec, p)
    h = 1e-6
    fd = [(potential_value(g, spec, p + h * e) - potential_value(g, spec, p - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(grad, fd, atol=1e-6)


@given(st.floats(-2, 4), st.floats(-2, 2))
def test_norm_density_gradient(x, y):
    p = np.array([x, y])
    if np.linalg.norm(p) < 1e-3:
        return
    dens = DensitySpec(NORM, 1.0, 3.0)
    h = 1e-7
    fd = [(density_value(dens, p + h * e) - density_value(dens, p - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(density_grad(dens, p), fd, atol=1e-6)


def test_type1_potential_vanishes_on_wells():
    g = canonical_geometry()
    spec = PotentialSpec.type1("linear")
    pts = np.vstack([g.minus.sample(1), g.plus.sample(64)])
    assert np.all(potential_value(g, spec, pts) <= 1e-28)
    # linear f: F(p) = dist(p, N)^2
    p = np.array([0.2, 0.1])
    assert potential_value(g, spec, p) == pytest.approx(0.05)


def test_growth_hypothesis_spot_check():
    ok, consts = PotentialSpec.type1("linear").satisfies_H(0.25)
    assert ok and consts["c1"] == pytest.approx(1.0)
    # t^2 degenerates at the well: f(t)/t -> 0
    ok, _ = PotentialSpec.type1("power", exponent=2.0).satisfies_H(0.25)
    assert not ok


def test_type2_shape_even_and_tilted():
    assert PotentialSpec.type2(0.5).check_type2_shape() == pytest.approx(0.0, abs=1e-15)
    spec = PotentialSpec.type2(0.5, tilt=0.5)
    c = spec.check_type2_shape()
    # independent check: maximizer of f~ by dense sampling and a parabola through the top three samples
    s = np.linspace(-0.5, 0.5, 200001)
    v = spec.f_tilde(s)
    i = int(np.argmax(v))
    a, b, cc = np.polyfit(s[i - 1:i + 2] - s[i], v[i - 1:i + 2], 2)
    assert c == pytest.approx(s[i] - b / (2 * a), abs=1e-9)
    assert c == pytest.approx(0.0715860952511636, abs=1e-12)


def test_type2_shape_rejects_bad_exponent():
    with pytest.raises(ValueError):
        PotentialSpec.type2(0.5, q=1.0).check_type2_shape()


def test_potential_spec_round_trip():
    for spec in (PotentialSpec.type1("linear", coef=2.0), PotentialSpec.type2(0.5, q=0.25, tilt=0.1)):
        assert PotentialSpec.from_dict(spec.to_dict()) == spec
    g = canonical_geometry()
    assert WellGeometry.from_dict(g.to_dict()).d_N == pytest.approx(g.d_N)
