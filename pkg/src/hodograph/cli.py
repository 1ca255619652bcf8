"""Config-driven scenario runner.

A scenario file wires the whole pipeline: build the domain, solve the
auxiliary function v, complete it, build and verify the flattening map,
localize, inject the solution of interest u, transport and reflect it,
and assemble the counting ledger.  Outputs are a canonical report.json,
points.csv / curves.csv, a byte-stable figure.svg and a matplotlib
figure.png.

Exit codes: 0 all conclusive checks pass, 1 hard error or failed check,
2 inconclusive counts.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import analytic, critical, figure, geometry, mapping, report, solver

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2


class ConfigError(ValueError):
    pass


def _parse_floats(text):
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _parse_points(text):
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        x, y = (float(v) for v in part.split(","))
        out.append(complex(x, y))
    return out


def load_config(path_or_name):
    """Read a scenario config from a path or a bundled scenario name."""
    p = Path(path_or_name)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if p.exists():
        cp.read(p)
        return cp, str(p)
    bundled = resources.files("hodograph").joinpath(f"scenarios/{path_or_name}.cfg")
    if bundled.is_file():
        cp.read_string(bundled.read_text())
        return cp, f"bundled:{path_or_name}"
    raise ConfigError(f"no config file at {path_or_name!r} and no bundled scenario of that name")


def build_domain(cfg):
    kind = cfg.get("domain", "kind", fallback="halfdisk").strip()
    if kind == "halfdisk":
        return geometry.half_disk_domain()
    if kind == "graph":
        name = cfg.get("domain", "phi", fallback="zero").strip()
        half_width = cfg.getfloat("domain", "half_width", fallback=0.5)
        if name == "zero":
            phi = geometry.graph_zero()
        elif name == "dmo":
            phi = geometry.graph_dmo()
        elif name == "corner":
            phi = geometry.graph_corner()
        elif name == "custom-polyline":
            knots = _parse_points(cfg.get("domain", "knots"))
            phi = geometry.graph_polyline([k.real for k in knots], [k.imag for k in knots])
        else:
            raise ConfigError(f"unknown phi {name!r}")
        return geometry.make_graph_domain(phi, half_width)
    if kind == "polygon":
        vertices = _parse_points(cfg.get("domain", "vertices"))
        cap_edges = [int(v) for v in _parse_floats(cfg.get("domain", "cap_edges", fallback=""))]
        return geometry.polygon_domain(vertices, cap_edges=cap_edges)
    raise ConfigError(f"unknown domain kind {kind!r}")


def _solver_config(cfg, section):
    return solver.SolverConfig(
        charges=cfg.getint(section, "charges", fallback=160),
        collocation=cfg.getint(section, "collocation", fallback=0),
        target_residual=cfg.getfloat(section, "target_residual", fallback=1e-3),
    )


def _bump_from(cfg, section, domain):
    lo_f, hi_f = _parse_floats(cfg.get(section, "support", fallback="0.3, 0.7"))
    peak_f = cfg.getfloat(section, "peak", fallback=0.5)
    return solver.unimodal_from_fractions(domain, lo_f, hi_f, peak_f)


_TRACES = {"y": lambda z: z.imag}


def build_auxiliary(cfg, domain):
    """Solve the positive auxiliary function from the configured data."""
    spec = cfg.get("auxiliary", "data", fallback="bump").strip()
    sc = _solver_config(cfg, "auxiliary" if cfg.has_option("auxiliary", "charges") else "solver")
    if spec == "bump":
        data = _bump_from(cfg, "auxiliary", domain)
    elif spec.startswith("trace:"):
        name = spec.split(":", 1)[1]
        if name not in _TRACES:
            raise ConfigError(f"unknown trace {name!r}")
        data = _TRACES[name]
    else:
        raise ConfigError(f"unknown auxiliary data {spec!r}")
    return solver.solve_dirichlet(domain, data, sc), data


def build_solution(cfg, domain):
    """The function of interest u: a closed form or its own solve."""
    kind = cfg.get("solution", "kind", fallback="closedform").strip()
    if kind == "closedform":
        name = cfg.get("solution", "name", fallback="y").strip()
        u = solver.closed_form(name)
        return u, {"kind": "closedform", "name": name}
    if kind == "solve":
        sc = _solver_config(cfg, "solution" if cfg.has_option("solution", "charges") else "solver")
        data = _bump_from(cfg, "solution", domain)
        u = solver.solve_dirichlet(domain, data, sc)
        return u, {"kind": "solve", **u.diagnostics}
    raise ConfigError(f"unknown solution kind {kind!r}")


def _check(checks, name, passed, value=None):
    entry = {"name": name, "passed": bool(passed)}
    if value is not None:
        entry["value"] = value
    checks.append(entry)
    return bool(passed)


def run_pipeline(cfg, seed=None, out_dir=None, verbose=False, verify_only=False):
    """Execute the scenario; returns (exit_status, report_dict, artifacts)."""

    def log(msg):
        if verbose:
            print(msg)

    name = cfg.get("scenario", "name", fallback="unnamed")
    if seed is None:
        seed = cfg.getint("scenario", "seed", fallback=0)
    checks = []
    stage = "domain"
    try:
        domain = build_domain(cfg)
        log(f"[{stage}] boundary length {domain.boundary.length:.6f}")

        stage = "solver"
        v, v_data = build_auxiliary(cfg, domain)
        log(f"[{stage}] v residual {v.residual:.3e}")
        _check(checks, "v_residual_within_target", not v.diagnostics["warning"], v.residual)

        stage = "analytic"
        comp_v = analytic.complete(v, anchor=domain.anchor, domain=domain)
        diag = comp_v.diagnostics()
        _check(checks, "cauchy_riemann_residual", diag["cr_residual"] <= 1e-8, diag["cr_residual"])
        _check(checks, "conjugate_anchored", abs(diag["anchor_conjugate"]) <= 1e-8, diag["anchor_conjugate"])

        stage = "hodograph"
        hmap = mapping.build_map(comp_v, domain, residual=v.residual, strict=False)
        _check(checks, "map_diagnostics_clean", hmap.ok(), list(hmap.diagnostics))
        _check(checks, "conformal_factor_identity", hmap.det_identity_rel <= 1e-10, hmap.det_identity_rel)

        n_levels = cfg.getint("hodograph", "levels", fallback=10)
        max_data = 1.0 if not isinstance(v_data, solver.BoundaryData) else 1.0
        levels = list(np.linspace(0.08, 0.92, n_levels) * max_data)
        curves = mapping.trace_levels(v, domain, levels)
        n_probe = cfg.getint("hodograph", "probe_pairs", fallback=10000)
        inj = mapping.verify_injectivity(hmap, levels, n_probe=n_probe, seed=seed, curves=curves)
        _check(checks, "injectivity", inj.passed, inj.min_increment())
        log(f"[{stage}] injectivity passed={inj.passed}")

        rect_spec = cfg.get("hodograph", "rectangle", fallback="auto").strip()
        rect = None if rect_spec == "auto" else tuple(_parse_floats(rect_spec))
        region = mapping.localize_E_r(hmap, rectangle=rect, seed=seed)
        _check(checks, "region_inner_inclusion", region.inner_ok)
        _check(checks, "region_outer_inclusion", region.outer_ok)
        log(f"[{stage}] rectangle a={region.a:.4f} b={region.b:.4f}")

        sample = region.samples(1000, seed=seed)
        roundtrip = mapping.invert(hmap, hmap.theta(sample), boundary_tol=1e-6)
        roundtrip_max = float(np.max(np.abs(roundtrip - sample)))
        _check(checks, "roundtrip", roundtrip_max <= 1e-8, roundtrip_max)

        stage = "critical"
        v_interior = solver.verify_no_interior_critical_points(comp_v, domain)
        _check(checks, "auxiliary_no_interior_critical_points",
               v_interior["conclusive"] and v_interior["count"] == 0, v_interior["count"])

        eps = _parse_floats(cfg.get("critical", "epsilons", fallback="0.08, 0.04, 0.02, 0.01, 0.001"))
        if 1e-6 not in eps:
            eps = [1e-6] + eps
        n_bnd = cfg.getint("critical", "boundary_samples", fallback=2048)
        table = critical.boundary_small_gradient_measure(v, domain, eps, n=n_bnd)
        _check(checks, "boundary_measure_clean", not table.warning, table.flagged_fraction)
        small = table.measures[list(table.epsilons).index(1e-3)] if 1e-3 in table.epsilons else table.measures[0]
        _check(checks, "boundary_measure_small_at_1e-3",
               small < 0.01 * domain.boundary.length, float(small))

        stage = "solution"
        u, u_info = build_solution(cfg, domain)
        omega = geometry.boundary_sample(domain, 512).of_role("omega")
        u_trace = float(np.max(np.abs(u.value(omega.points))))
        u_res = getattr(u, "residual", 0.0)
        _check(checks, "u_vanishes_on_original_boundary", u_trace <= max(10 * u_res, 1e-8), u_trace)
        comp_u = analytic.complete(u, anchor=domain.anchor, domain=domain)

        stage = "transport"
        transported = mapping.TransportedCompletion(comp_u, hmap)
        reflected = critical.reflect_odd(transported, (-0.9 * region.a, 0.9 * region.a))
        law = mapping.transformation_law_residual(hmap, comp_u, region=region, n=500, seed=seed)
        _check(checks, "transformation_law", law <= 1e-6, law)

        stage = "ledger"
        led = critical.counting_ledger(comp_u, hmap, reflected, region, measure_table=table)
        _check(checks, "ledger_conclusive", led.conclusive)
        if led.conclusive:
            _check(checks, "counting_inequality", led.inequality_holds, list(led.ledger()))
        log(f"[{stage}] ledger {led.ledger()}")
    except Exception as exc:  # noqa: BLE001 - report the failing stage, then fail
        print(f"error: stage {stage!r} failed: {exc}", file=sys.stderr)
        if verbose:
            raise
        return EXIT_FAIL, None, None

    inconclusive = not led.conclusive or not v_interior["conclusive"]
    all_pass = all(c["passed"] for c in checks)
    status = EXIT_PASS if all_pass else (EXIT_INCONCLUSIVE if inconclusive else EXIT_FAIL)

    rep = {
        "scenario": {
            "name": name,
            "seed": int(seed),
            "domain": {
                "kind": cfg.get("domain", "kind", fallback="halfdisk"),
                "boundary_length": domain.boundary.length,
                "corners": len(domain.boundary.corners),
            },
        },
        "solver": {"v": dict(v.diagnostics), "u": u_info},
        "analytic": diag,
        "hodograph": {
            "anchor_image": {"re": float(hmap.anchor_image.real), "im": float(hmap.anchor_image.imag)},
            "det_identity_rel": hmap.det_identity_rel,
            "boundary_image_max": hmap.boundary_image_max,
            "rectangle": {
                "a": region.a,
                "b": region.b,
                "auto": rect is None,
                "inner_ok": region.inner_ok,
                "outer_ok": region.outer_ok,
            },
            "injectivity": {
                "passed": inj.passed,
                "levels": inj.level_results,
                "probe_pairs": inj.n_probe,
                "collisions": len(inj.collisions),
            },
            "roundtrip_max": roundtrip_max,
            "transformation_law_rel": law,
        },
        "critical": {
            "interior": [
                {"x": float(np.real(z)), "y": float(np.imag(z)), "multiplicity": int(m)}
                for z, m in led.interior_points
            ],
            "boundary": table.as_dict(),
            "ledger": {
                "count_u": led.count_u,
                "count_theta": led.count_theta,
                "count_U": led.count_U,
                "conclusive": led.conclusive,
                "inequality_holds": led.inequality_holds,
            },
            "interior_count_v": {
                "count": v_interior["count"],
                "conclusive": v_interior["conclusive"],
                "margin": v_interior["margin"],
            },
        },
        "checks": checks,
        "exit_status": status,
    }
    report.validate_report(rep)

    artifacts = {
        "domain": domain,
        "curves": curves,
        "levels": levels,
        "region": region,
        "ledger": led,
        "table": table,
    }
    if verify_only or out_dir is None:
        return status, rep, artifacts

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write_report(out / "report.json", rep)
    report.write_points_csv(out / "points.csv", led.interior_points)
    curve_map = {}
    for lv, c in zip(levels, curves):
        if c is not None:
            curve_map[f"level-{lv:.6g}"] = c.path()
    for side, poly in region.sides.items():
        curve_map[f"er-{side}"] = poly
    curve_map["boundary"] = domain.boundary.polyline(1024)
    report.write_curves_csv(out / "curves.csv", curve_map)

    art = figure.FigureArtifacts(
        boundary=domain.boundary.polyline(1024),
        level_curves=[c.path() for c in curves if c is not None],
        critical_points=led.interior_points,
        region_sides=region.sides,
        warnings=[c["name"] for c in checks if not c["passed"]],
    )
    figure.write_svg(out / "figure.svg", art)
    figure.write_png(out / "figure.png", art)
    return status, rep, artifacts


def _interior(domain, n, seed):
    from .sampling import interior_points

    return interior_points(domain, n, seed=seed + 7, margin=1e-3)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="hodograph",
        description="Boundary-flattening pipeline for planar harmonic functions: "
        "solve, conjugate, flatten, reflect, count.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and write report files")
    run_p.add_argument("config", help="path to a scenario config or a bundled scenario name")
    run_p.add_argument("--out", default=None, help="output directory (default: from config)")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--verbose", action="store_true")

    ver_p = sub.add_parser("verify", help="run only the invariant suites, write nothing")
    ver_p.add_argument("config", help="path to a scenario config or a bundled scenario name")
    ver_p.add_argument("--seed", type=int, default=None)
    ver_p.add_argument("--verbose", action="store_true")

    lst = sub.add_parser("scenarios", help="list bundled scenarios")

    args = parser.parse_args(argv)
    if args.command == "scenarios":
        root = resources.files("hodograph").joinpath("scenarios")
        for item in sorted(root.iterdir()):
            if item.name.endswith(".cfg"):
                print(item.name[:-4])
        return EXIT_PASS

    try:
        cfg, origin = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL

    if args.command == "verify":
        status, rep, _ = run_pipeline(cfg, seed=args.seed, verbose=args.verbose, verify_only=True)
        if rep is not None:
            for c in rep["checks"]:
                mark = "pass" if c["passed"] else "FAIL"
                extra = f"  ({c.get('value')})" if "value" in c else ""
                print(f"[{mark}] {c['name']}{extra}")
        print(f"verify: exit status {status}")
        return status

    out_dir = args.out or cfg.get("output", "directory", fallback="out")
    status, rep, _ = run_pipeline(cfg, seed=args.seed, out_dir=out_dir, verbose=args.verbose)
    if rep is not None:
        led = rep["critical"]["ledger"]
        print(
            f"{rep['scenario']['name']}: ledger=({led['count_u']}, {led['count_theta']}, "
            f"{led['count_U']}) residual={rep['solver']['v']['residual']:.3e} -> exit {status}"
        )
    return status


if __name__ == "__main__":
    sys.exit(main())
