import csv
import io
import json

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from mcphase import harness
from mcphase.cli import main
from mcphase.grid import DiscreteField, Grid
from mcphase.harness import (ROW_FIELDS, Scenario, ScenarioError, classify_slope, fit_expansion, load_scenario,
                             order_of, remainder_slope, theorem3_diagnostics, volume_band)
from mcphase.isoperimetry import DomainSpec

GEOM = {"minus": {"kind": "point", "center": [0.0, 0.0]},
        "plus": {"kind": "circle", "center": [2.0, 0.0], "radius": 1.0}}


def base(**kw):
    d = {"name": "t", "experiment": "theorem1", "domain": "interval", "geometry": GEOM,
         "potential": {"kind": "type1", "name": "linear"}, "density": "norm", "m": 0.45,
         "eps": [0.08, 0.04, 0.02], "resolution": 512}
    d.update(kw)
    return d


EPS = np.array([0.08, 0.04, 0.02, 0.01])


@given(A=st.floats(0.1, 5), B=st.floats(-3, 3))
def test_fit_bounded_remainder(A, B):
    fit = fit_expansion(EPS, A / EPS + B)
    assert fit.c_lead == pytest.approx(A, abs=1e-9)
    assert fit.remainder_class == "bounded"
    assert fit.verdict == "bounded"


@given(A=st.floats(0.1, 5), C=st.floats(0.05, 3))
def test_fit_half_power_remainder(A, C):
    fit = fit_expansion(EPS, A / EPS + C / np.sqrt(EPS))
    assert fit.order == pytest.approx(0.5, abs=1e-6)
    assert fit.c_lead == pytest.approx(A, abs=1e-9)
    assert fit.slope == pytest.approx(-0.5, abs=1e-6)
    assert fit.remainder_class == "eps^-1/2"


def test_fit_non_monotone_is_inconclusive():
    y = np.array([0.5, 0.52, 0.49, 0.51])
    fit = fit_expansion(EPS, y / EPS)
    assert not fit.monotone
    assert fit.verdict == "inconclusive"


def test_fit_input_order_irrelevant_and_needs_three_points():
    E = 0.5 / EPS + 1
    assert fit_expansion(EPS[::-1], E[::-1]).c_lead == pytest.approx(fit_expansion(EPS, E).c_lead, abs=1e-12)
    with pytest.raises(ValueError):
        fit_expansion(EPS[:2], E[:2])


def test_slope_classes():
    assert classify_slope(0.5) == "bounded"
    assert classify_slope(-0.1) == "bounded"
    assert classify_slope(-0.5) == "eps^-1/2"
    assert classify_slope(-1.0) == "worse"
    assert classify_slope(-0.25) == "inconclusive"
    assert remainder_slope(EPS, np.zeros(4)) == 0.0
    assert remainder_slope(EPS, 3 * EPS**2) == pytest.approx(2.0)


def test_volume_band_and_order():
    eps = np.array([0.04, 0.02, 0.01])
    stable = volume_band([0.6, 0.58, 0.56], eps, 0.4, 0.55)
    assert stable["C"] == pytest.approx(0.05 / 0.2)
    assert stable["stable"]
    drifting = volume_band([0.56, 0.58, 0.6], eps, 0.4, 0.55)
    assert not drifting["stable"]
    assert volume_band([0.5, 0.5, 0.5], eps, 0.4, 0.55) == {
        "C": 0.0, "per_eps": [0.0, 0.0, 0.0], "stable": True, "interval": [0.4, 0.55]}
    assert order_of(eps, 7 * eps) == pytest.approx(1.0)


@pytest.mark.parametrize("patch,code", [
    ({"m": 1.0}, "mass_admissibility"),
    ({"m": 0.0}, "mass_admissibility"),
    ({"potential": {"kind": "type2", "q": 0.5}, "density": "signed_well_distance", "m": 0.6}, "mass_admissibility"),
    ({"density": "signed_well_distance"}, "consistency"),
    ({"potential": {"kind": "type2", "half_width": 0.3}, "density": "signed_well_distance", "m": 0.1}, "consistency"),
    ({"eps": [0.02, 0.04, 0.01]}, "schedule"),
    ({"eps": [0.04, 0.02]}, "schedule"),
    ({"experiment": "nonsense"}, "experiment"),
    ({"solver": {"warp_speed": 9}}, "schema"),
    ({"geometry": {"minus": {"kind": "point"}}}, "schema"),
    ({"m": None}, "schema"),
])
def test_scenario_errors(patch, code):
    with pytest.raises(ScenarioError) as info:
        Scenario.from_dict(base(**patch))
    assert info.value.code == code
    assert info.value.as_dict()["error"] == code


def test_digest_is_stable_and_sensitive():
    a, b = Scenario.from_dict(base()), Scenario.from_dict(base())
    assert a.digest() == b.digest()
    assert Scenario.from_dict(a.canonical()).digest() == a.digest()
    assert a.with_overrides(seed=3).digest() != a.digest()
    assert a.with_overrides(resolution=256).resolution == 256
    assert harness.output_dir(a, "/x").name == f"t-{a.digest()[:16]}"


def test_builtin_scenarios_load():
    found = harness.builtin_scenarios()
    assert {"theorem1_interval", "theorem2_square", "theorem4_interval", "theorem4_disk"} <= set(found)
    for path in found.values():
        assert load_scenario(path).name == path.stem


def test_unreadable_config(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("- just\n- a list\n")
    with pytest.raises(ScenarioError) as info:
        load_scenario(p)
    assert info.value.code == "schema"


def test_projection_diagnostics_vanish_on_well_valued_field():
    grid = Grid.build(DomainSpec("interval"), 100)
    x = grid.coords()[..., 0]
    vals = np.where((x >= 0.55)[:, None], [1.0, 0.0], [0.0, 0.0])
    sc = Scenario.from_dict(base())
    d = theorem3_diagnostics([DiscreteField(grid, vals)], [0.01], sc.geometry, sc.density, 0.45, x - 0.55)
    assert d[0]["l1_projection"] == 0
    assert d[0]["projected_mass"] == pytest.approx(0.45)
    assert d[0]["plus_side_distance"] == 0 and d[0]["minus_side_distance"] == 0


def test_profile_run_writes_artifacts(tmp_path):
    rep = harness.run(harness.builtin_scenarios()["profile"], tmp_path)
    out = tmp_path / rep.extra["out_dir"]
    assert rep.constants["c0"] == pytest.approx(0.5, abs=1e-12)
    assert {p.name for p in out.iterdir()} >= {"scenario.json", "run_log.jsonl", "report.csv", "report.json",
                                                "profile.csv"}
    logged = [json.loads(line) for line in (out / "run_log.jsonl").read_text().splitlines()]
    assert logged[0]["event"] == "start" and logged[-1]["event"] == "done"


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    root = tmp_path_factory.mktemp("sweep")
    cfg = root / "small.yaml"
    cfg.write_text(yaml.safe_dump(base()))
    return harness.run(cfg, root), root


def test_small_sweep_report(small_sweep):
    rep, _ = small_sweep
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert list(rows[0]) == ROW_FIELDS
    assert [float(r["eps"]) for r in rows] == [0.08, 0.04, 0.02]
    for r in rows:
        assert abs(float(r["mass_residual"])) <= 1e-9
    assert rep.fit["c_lead"] == pytest.approx(0.5, rel=0.05)
    assert rep.verdicts["minimizer_below_refined"]
    data = json.loads(rep.to_json())
    assert data["digest"] == rep.digest and len(data["rows"]) == 3


def test_cli_report_and_errors(small_sweep, tmp_path, capsys):
    rep, _ = small_sweep
    assert main(["report", rep.extra["out_dir"]]) == 0
    assert "eps_energy" in capsys.readouterr().out
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(base(m=1.5)))
    assert main(["sweep", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "mass_admissibility"
    assert main(["sweep", str(tmp_path / "missing.yaml")]) == 2


def test_cli_constants(capsys, tmp_path):
    assert main(["type2", "theorem4_disk", "--out-dir", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["second_order"] == pytest.approx(0.03167601348359602, rel=1e-9)
    assert main(["profile", "profile"]) == 0
    assert json.loads(capsys.readouterr().out)["constants"]["c0"] == pytest.approx(0.5)
    assert main(["isoperimetry", "isoperimetry"]) == 0
    assert json.loads(capsys.readouterr().out)["constants"]["condition_G"] in (True, False)
