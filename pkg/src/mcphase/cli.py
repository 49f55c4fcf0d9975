"""Command line entry point: ``mcphase <subcommand> CONFIG [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .harness import Scenario, ScenarioError, load_scenario


def _load(args) -> Scenario:
    path = Path(args.config)
    if not path.exists() and args.config in harness.builtin_scenarios():
        path = harness.builtin_scenarios()[args.config]
    sc = load_scenario(path)
    return sc.with_overrides(args.seed, args.resolution)


def _as(sc: Scenario, experiment: str) -> Scenario:
    return Scenario.from_dict({**sc.canonical(), "experiment": experiment, "name": f"{sc.name}-{experiment}"})


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=harness._json_default))


def cmd_profile(args) -> int:
    rep = harness.run(_as(_load(args), "profile_only"), args.out_dir)
    _emit({"constants": rep.constants, "out_dir": rep.extra["out_dir"]})
    return 0


def cmd_isoperimetry(args) -> int:
    rep = harness.run(_as(_load(args), "isoperimetry_only"), args.out_dir)
    _emit({"constants": rep.constants, "out_dir": rep.extra["out_dir"]})
    return 0


def cmd_type2(args) -> int:
    from .isoperimetry import IsoperimetricProfile
    from .type2 import minus_volume, second_order_constants, solve_z

    sc = _load(args)
    if sc.potential.kind != "type2":
        raise ScenarioError("consistency", "type2 needs a type2 potential")
    z = solve_z(sc.potential, sc.geometry.d_N)
    sv = minus_volume(sc.m, sc.geometry.d_N)
    C = second_order_constants(z, IsoperimetricProfile(sc.domain), sv)
    out = {**C.as_dict(), "second_order": C.second_order, "support": [z.t1, z.t2], "c": z.c,
           "minus_volume": sv, "ode_residual": z.ode_residual()}
    if args.out_dir is not None:
        d = harness.output_dir(sc, args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        z.to_csv(d / "z_profile.csv")
        (d / "type2_constants.json").write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
        out["out_dir"] = str(d)
    _emit(out)
    return 0


def cmd_minimize(args) -> int:
    """Single solve at one eps, started from the comparison map (type2 map for type II)."""
    from .comparison import build_refined_map, build_rough_map, build_type2_map
    from .connection import solve_profile
    from .grid import Grid
    from .isoperimetry import IsoperimetricProfile, check_condition_G, sigma_m
    from .minimize import minimize, random_init
    from .type2 import minus_volume, solve_z

    sc = _load(args)
    eps = args.eps if args.eps is not None else sc.eps[-1]
    g, spec, dens, m = sc.geometry, sc.potential, sc.density, sc.m
    grid = Grid.build(sc.domain, sc.resolution)
    I = IsoperimetricProfile(sc.domain)
    cfg = sc.solver_config(eps)
    if cfg.init == "random":
        init = random_init(grid, g, sc.seed)
    elif spec.kind == "type2":
        sv = minus_volume(m, g.d_N)
        init, _ = build_type2_map(g, spec, dens, m, eps, I.descriptor(1 - sv), grid, solve_z(spec, g.d_N))
    else:
        ps = solve_profile(spec, g.d_N)
        G = check_condition_G(I, m, dens.m1, dens.m2, target_density=float(np.linalg.norm(g.p_plus)))
        if G.holds:
            init, _ = build_refined_map(g, spec, dens, m, eps, sc.gamma, I.descriptor(G.sigma), grid, ps)
        else:
            s, _ = sigma_m(I, m, dens.m1, dens.m2)
            init, _ = build_rough_map(g, spec, dens, m, eps, I.descriptor(s), grid, ps)
    res = minimize(init, g, spec, dens, m, cfg)
    out = res.summary()
    if args.out_dir is not None:
        d = harness.output_dir(sc, args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        res.field.save(d / f"minimizer_eps_{eps!r}.mcpf")
        out["out_dir"] = str(d)
    _emit(out)
    return 0 if res.converged else 3


def cmd_sweep(args) -> int:
    rep = harness.run(_load(args), args.out_dir)
    _emit({"verdicts": rep.verdicts, "fit": rep.fit, "constants": rep.constants, "out_dir": rep.extra["out_dir"]})
    return 0


def cmd_report(args) -> int:
    """Print the per-eps table of a finished run (a run directory or its report.json)."""
    path = Path(args.config)
    if path.is_dir():
        path = path / "report.json"
    data = json.loads(path.read_text())
    cols = ["eps", "energy", "eps_energy", "remainder", "mass_residual", "iterations", "converged"]
    print("  ".join(f"{c:>22}" for c in cols))
    for row in data["rows"]:
        print("  ".join(f"{_cell(row.get(c)):>22}" for c in cols))
    _emit({"fit": data["fit"], "verdicts": data["verdicts"]})
    return 0


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcphase", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    handlers = {"profile": cmd_profile, "isoperimetry": cmd_isoperimetry, "minimize": cmd_minimize,
                "sweep": cmd_sweep, "type2": cmd_type2, "report": cmd_report}
    helps = {"profile": "connecting profile and its constant",
             "isoperimetry": "isoperimetric profile, sigma_m and the flat-region check",
             "minimize": "one constrained solve at a single eps",
             "sweep": "full eps sweep with fits and verdicts",
             "type2": "compact profile and second-order constants",
             "report": "print a finished run (directory or report.json)"}
    for name, fn in handlers.items():
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("config", help="scenario YAML (or a built-in scenario name); run directory for report")
        if name != "report":
            sp.add_argument("--seed", type=int, default=None)
            sp.add_argument("--out-dir", default=None)
            sp.add_argument("--resolution", type=int, default=None)
        if name == "minimize":
            sp.add_argument("--eps", type=float, default=None, help="defaults to the smallest scheduled eps")
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(json.dumps(exc.as_dict()), file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
