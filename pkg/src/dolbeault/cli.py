"""Scenario runner: ``dolbeault run scenario.json [--out DIR] [--seed N] [--grid N]``.

A scenario is a JSON object with a ``kind`` and kind-specific parameters.
Each run writes four files next to each other in the output directory:

``<name>.report.json``
    Deterministic report: parameters, results and checks (sorted keys, full
    float precision, rounded display strings).
``<name>.meta.json``
    Timestamps, wall time and library versions; kept apart so that reports
    can be diffed byte for byte.
``<name>.summary.txt``
    One human-readable line per check.
``<name>.eigenvalues.csv``
    Eigenvalue table, for the kinds that compute spectra.

Exit codes: 0 every check passed, 2 some check failed, 3 input error
(unparsable scenario, memory budget exceeded, or a theorem hypothesis
rejected), 4 solver failure.
"""
import argparse
import csv
import datetime
import json
import math
import platform
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import clifford
from . import conformal as cf
from . import geometry as geo
from . import operators as op
from . import products as pr
from . import spectral as sp
from . import studies
from .errors import HypothesisError, MetricError, ScenarioError, SolverError

KINDS = ("identities", "geometry", "spectrum", "bounds", "lemma2", "weitzenboeck", "conformal", "products",
         "section4")
EXIT_PASS, EXIT_CHECK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3, 4

#: memory budget for one scenario, overridable with ``memory_budget_mb``
DEFAULT_BUDGET_MB = 8192
#: rough bytes per lattice point: geometry tables, sparse operator and solver workspace
BYTES_PER_POINT = 16 * 1024


class BudgetError(ScenarioError):
    """The grids of a scenario need more memory than the configured budget."""


# ----------------------------------------------------------------------------
# checks


def _display(x):
    if isinstance(x, bool) or x is None:
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.3e}"
    return str(x)


def check(name: str, measured, expected, relation: str, theorem: bool = False, note: str = "") -> dict:
    """One verdict: ``measured relation expected`` with ``relation`` in ``<=``, ``>=``, ``==``."""
    if relation == "<=":
        ok = measured is not None and measured <= expected
    elif relation == ">=":
        ok = measured is not None and measured >= expected
    elif relation == "==":
        ok = measured == expected
    else:
        raise ValueError(f"unknown relation {relation!r}")
    out = {"name": name, "measured": measured, "expected": expected, "relation": relation,
           "passed": bool(ok), "theorem_backed": theorem,
           "display": f"{_display(measured)} {relation} {_display(expected)}"}
    if note:
        out["note"] = note
    return out


#: residuals at or below this on every grid count as exact; a slope between roundoff values is meaningless
EXACT_FLOOR = 1e-13


def slope_checks(label: str, grids, values, slopes, minimum: float) -> list:
    """Slope checks for one refinement series, or a single exactness check when it sits at roundoff."""
    if max(values) <= EXACT_FLOOR:
        return [check(f"{label} (exact at every grid)", max(values), EXACT_FLOOR, "<=")]
    return [check(f"{label} slope {a}->{b}", sl, minimum, ">=") for a, b, sl in zip(grids, grids[1:], slopes)]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


# ----------------------------------------------------------------------------
# scenario parsing


def load_scenario(path, seed: Optional[int] = None, grid: Optional[int] = None) -> dict:
    """Read and validate a scenario file; command-line overrides are applied here."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("a scenario must be a JSON object")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ScenarioError(f"unknown scenario kind {kind!r}; expected one of {', '.join(KINDS)}")
    data.setdefault("seed", 0)
    if seed is not None:
        data["seed"] = seed
    if not isinstance(data["seed"], int):
        raise ScenarioError("seed must be an integer")
    if grid is not None:
        # a single-grid kind runs on N^4; a refinement study runs on (N/2)^4 and N^4
        data["grids"] = [grid] if kind in ("spectrum", "bounds") else [grid // 2, grid]
    if "grids" in data:
        data["grids"] = [_grid(g) for g in data["grids"]]
        if not data["grids"]:
            raise ScenarioError("grids must not be empty")
    _check_budget(data)
    _check_expressions(data)
    return data


def _grid(g):
    if isinstance(g, int) and g >= 2:
        return g
    if isinstance(g, list) and len(g) == 4 and all(isinstance(n, int) and n >= 2 for n in g):
        return g
    raise ScenarioError(f"a grid is an integer N (for N^4) or a list of four sizes, not {g!r}")


def _npoints(g) -> int:
    return g ** 4 if isinstance(g, int) else int(np.prod(g))


def _check_budget(data: dict):
    budget = data.get("memory_budget_mb", DEFAULT_BUDGET_MB)
    if not isinstance(budget, (int, float)) or budget <= 0:
        raise ScenarioError("memory_budget_mb must be a positive number")
    for g in data.get("grids", []):
        need = _npoints(g) * BYTES_PER_POINT / 2 ** 20
        if need > budget:
            raise BudgetError(f"grid {g} needs about {need:.0f} MB, over the budget of {budget} MB")


def _check_expressions(data: dict):
    """Parse every referenced expression up front so that typos fail before any computation."""
    from . import expressions

    def walk(v):
        if isinstance(v, str):
            expressions.parse(v)
        elif isinstance(v, dict):
            for w in v.values():
                if not isinstance(w, (int, float, bool)) or isinstance(w, str):
                    walk(w)
        elif isinstance(v, list):
            for w in v:
                walk(w)

    metric = data.get("metric", "flat")
    if metric != "flat":
        if isinstance(metric, dict) and "random_hermitian" in metric:
            pass
        else:
            walk(metric)
    if "f" in data:
        walk(data["f"])
    if "profile" in data:
        pr.Profile(data["profile"])


def _metric(data):
    return data.get("metric", "flat")


def _derivatives(data):
    return "spectral" if data.get("analytic_derivatives") else "central"


def _expect(data, key, default):
    return data.get("expect", {}).get(key, default)


def _tables(data, g):
    ch = studies.chart_for(g, data.get("periods"))
    return geo.compute_tables(ch, geo.metric_from_spec(ch, _metric(data), _derivatives(data)))


# ----------------------------------------------------------------------------
# scenario kinds; each returns (results, checks, eigenvalue rows or None)


def run_identities(data):
    suite = clifford.identity_suite()
    checks = [check(f"identity {k}", v["failed"], 0, "==", theorem=True) for k, v in sorted(suite.items())]
    return {"identities": suite}, checks, None


def run_geometry(data):
    grids = data.get("grids", [8, 16])
    results = {"tables": {}}
    for g in grids:
        results["tables"][str(g)] = _tables(data, g).summary()
    study = studies.geometry_study(_metric(data), grids, data.get("periods"))
    results["refinement"] = study
    exact = _expect(data, "exact_tol", 1e-12)
    checks = [check(f"discrete Lee identity at {g}", r, exact, "<=", theorem=True)
              for g, r in zip(study["grids"], study["discrete_identity_max"])]
    slope = _expect(data, "slope", 1.8)
    G = study["grids"]
    checks += slope_checks("Lee-form identity", G, study["lee_identity_rms"], study["lee_slopes"], slope)
    checks += slope_checks("dOmega = theta^Omega", G, study["d_omega_rms"], study["d_omega_slopes"], slope)
    return results, checks, None


def _spectrum_rows(rep):
    return [("index", "box_squared")] + [(i, v) for i, v in enumerate(rep.eigenvalues_box_sq)]


def run_spectrum(data, bounds=False):
    g = data.get("grids", [8])[-1]
    T = _tables(data, g)
    rep = sp.spectrum_report(T, tol=data.get("tol", 1e-9), seed=data["seed"], count=data.get("count", 48))
    d = rep.to_dict()
    checks = [check("theorem-backed violations", len(rep.violations), 0, "==", theorem=True,
                    note="; ".join(rep.violations))]
    checks.append(check("kernel classification unambiguous", rep.indeterminate, False, "=="))
    for key in ("kernel_dim", "kernel_dim_plus", "kernel_dim_minus", "index"):
        if key in data.get("expect", {}):
            checks.append(check(key, d[key], data["expect"][key], "==", theorem=(key == "index")))
    checks.append(check("solver residual", d["solver_meta"]["residual_max"], 10 * data.get("tol", 1e-9), "<="))
    if bounds:
        if rep.bound_thm2 is not None:
            checks.append(check("lambda^2 - inf s/6", rep.bound_thm2["equality_gap"], -1e-8, ">=", theorem=True))
        if rep.bound_thm3 is not None:
            checks.append(check("lambda^2 - inf k/2", rep.bound_thm3["equality_gap"], -1e-8, ">=", theorem=True))
        elif data.get("theorem3"):
            sp.bound_verdicts(rep.lambda_sq_min, rep.kernel_dim, float(T.s.min()), float(T.k.min()),
                              sp.grid_tolerance(T), theorem3=True)
        if _expect(data, "limiting", False) and rep.bound_thm2 is not None:
            checks.append(check("|lambda^2 - inf s/6| (limiting case)", abs(rep.bound_thm2["equality_gap"]),
                                1e-8, "<="))
        if rep.kernel_dim_plus:
            st = op.Stencils(T)
            ki = sp.kernel_and_index(st, tol=data.get("tol", 1e-9), seed=data["seed"])
            basis = ki["plus"].smooth_basis
            res = max(sp.parallel_residual(st, basis[:, j]) for j in range(basis.shape[1]))
            d["parallel_residual_plus"] = res
            checks.append(check("Bismut-parallel Sigma_+ kernel", res, data.get("tol", 1e-9), "<="))
    d["inf_s"], d["inf_k"] = float(T.s.min()), float(T.k.min())
    return d, checks, _spectrum_rows(rep)


def run_lemma2(data):
    grids = data.get("grids", [8, 16])
    t_values = data.get("t", [-3, -1, 0, 1])
    study = studies.lemma2_study(_metric(data), grids, t_values, data["seed"], data.get("periods"))
    tol, slope = _expect(data, "relative", 1e-2), _expect(data, "slope", 1.8)
    checks = []
    for t in map(str, t_values):
        checks.append(check(f"twistor-norm identity residual t={t} at {study['grids'][-1]}", study["relative"][t][-1],
                            tol, "<="))
        checks += slope_checks(f"twistor-norm identity t={t}", study["grids"], study["relative"][t], study["slopes"][t], slope)
    return study, checks, None


def run_weitzenboeck(data):
    grids = data.get("grids", [8, 16])
    controls = data.get("t_control", [0.0, 1.0])
    study = studies.weitzenboeck_study(_metric(data), grids, data["seed"], controls, data.get("periods"))
    tol, slope = _expect(data, "relative", 1e-2), _expect(data, "slope", 1.8)
    control = _expect(data, "negative_control", 0.1)
    checks = [check(f"Weitzenboeck relative residual at {study['grids'][-1]}", study["residual"][-1], tol, "<=")]
    checks += slope_checks("Weitzenboeck", study["grids"], study["residual"], study["slopes"], slope)
    for t, vals in study["negative_control"].items():
        checks.append(check(f"negative control t={t} stays O(1)", vals[-1], control, ">="))
    return study, checks, None


def run_conformal(data):
    grids = data.get("grids", [8, 16])
    f = data.get("f")
    if f is None:
        raise ScenarioError("a conformal scenario needs an expression 'f'")
    t_values = data.get("t", [-3, -1, 0, 1])
    slope = _expect(data, "slope", 1.8)
    ch = studies.chart_for(grids[0], data.get("periods"))
    pair = cf.ConformalPair.build(ch, geo.metric_from_spec(ch, _metric(data)), f)
    psi = op.band_limited_spinor(ch, seed=data["seed"])
    results = {"bookkeeping": {"identification_defect": pair.identification_defect(),
                               "kaehler_form_defect": pair.kaehler_form_defect(),
                               "norm": pair.norm_bookkeeping(psi)}}
    exact = _expect(data, "exact_tol", 1e-12)
    checks = [check("spinor identification", results["bookkeeping"]["identification_defect"], exact, "<=",
                    theorem=True),
              check("Kaehler form scales by e^f", results["bookkeeping"]["kaehler_form_defect"], exact, "<=",
                    theorem=True),
              check("norm bookkeeping", results["bookkeeping"]["norm"]["relative"], exact, "<=", theorem=True)]
    tr = studies.transport_study(_metric(data), f, grids, t_values, data["seed"], data.get("periods"))
    results["transport"] = tr
    G = tr["grids"]
    checks += slope_checks("Levi-Civita transport", G, tr["levi_civita"], tr["levi_civita_slopes"], slope)
    for t, sls in tr["hermitian_slopes"].items():
        checks += slope_checks(f"Hermitian transport t={t}", G, tr["hermitian"][t], sls, slope)
    if len(G) > 1:
        checks.append(check("k~ - e^-f k decreases", tr["k_covariance"][-1],
                            max(tr["k_covariance"][0], EXACT_FLOOR), "<="))
    if data.get("lemma4", _metric(data) == "flat"):
        l4 = studies.lemma4_study(f, grids, data.get("lemma4_t", [-3, 0, 1]), _metric(data), data.get("periods"))
        results["lemma4"] = l4
        for t, vals in l4["residual"].items():
            checks += slope_checks(f"transported twistor spinor t={t}", G, vals, l4["slopes"][t], slope)
        for t, vals in l4["no_exponent"].items():
            checks.append(check(f"transported twistor spinor without exponent t={t} (negative control)", vals[-1],
                                _expect(data, "negative_control", 0.01), ">="))
    return results, checks, None


def _factor(spec, modes):
    kind = spec.get("type")
    if kind == "sphere":
        if "profile" in spec:
            return pr.axisym_conformal_sphere(spec.get("radius", 1.0), spec["profile"], modes)
        return pr.sphere_spectrum(spec.get("radius", 1.0), modes)
    if kind == "torus":
        return pr.torus_spectrum(tuple(spec.get("periods", (2 * np.pi, 2 * np.pi))), modes)
    raise ScenarioError(f"unknown factor type {kind!r}; expected 'sphere' or 'torus'")


def run_products(data):
    specs = data.get("factors")
    if not isinstance(specs, list) or len(specs) != 2:
        raise ScenarioError("a products scenario needs exactly two 'factors'")
    modes = data.get("modes", 4)
    f1, f2 = (_factor(s, modes) for s in specs)
    p = pr.assemble_product(f1, f2)
    gap_tol = _expect(data, "gap_tol", 1e-8)
    results = {"lambda_sq_min": p.lambda_sq_min, "k": p.k, "s": p.s, "thm3_gap": p.thm3_gap,
               "warnings": p.warnings, "factors": [{"kind": f.kind, "params": f.params, "levels": f.levels,
                                                    "multiplicity": f.multiplicity, "kernel_dim": f.kernel_dim}
                                                   for f in (f1, f2)],
               "kernel_dim": int(f1.kernel_dim * f2.kernel_dim)}
    checks = [check("truncation warnings", len(p.warnings), 0, "==", note="; ".join(p.warnings))]
    if p.thm3_gap is not None:
        checks.append(check("lambda^2 - k/2 >= 0", p.thm3_gap, -gap_tol, ">=", theorem=True))
        if _expect(data, "limiting", True):
            checks.append(check("|lambda^2 - k/2| (limiting case)", abs(p.thm3_gap), gap_tol, "<="))
    for key in ("lambda_sq_min", "k"):
        if key in data.get("expect", {}):
            checks.append(check(f"{key} matches", abs(results[key] - data["expect"][key]), gap_tol, "<="))
    if p.s > 0:
        checks.append(check("no harmonic spinors when s > 0", results["kernel_dim"], 0, "==", theorem=True))
    oracle = []
    radii = sorted({float(s.get("radius", 1.0)) for s in specs if s.get("type") == "sphere" and "profile" not in s})
    for r in radii:
        for m in (0.5, 1.5):
            sec = pr.SphereSector(m, r, 8)
            gal = np.linalg.eigvalsh(sec.dirac())
            gal = np.sort(gal[np.argsort(np.abs(gal), kind="stable")][:6])
            for n in data.get("oracle_resolutions", [12, 24]):
                dev = float(np.abs(np.sort(pr.sphere_oracle(r, m, n)[:6]) - gal).max())
                oracle.append({"radius": r, "m": m, "n": n, "deviation": dev})
                checks.append(check(f"sphere oracle r={r} m={m} n={n}", dev, 1e-8, "<="))
    results["oracle"] = oracle
    rows = [("lambda_sq", "multiplicity")] + [(v, int(m)) for v, m in zip(p.lambda_sq, p.multiplicity)]
    return results, checks, rows


def run_section4(data):
    kw = {k: data[k] for k in ("r1", "r2", "second", "profile", "m_max", "mu_count") if k in data}
    res = data.get("resolution", pr.DEFAULT_RESOLUTION)
    coarse = pr.section4_limiting_run(resolution=res, **kw)
    fine = pr.section4_limiting_run(resolution=2 * res, **kw)
    tol = _expect(data, "tol", 1e-3)
    checks = [check("max|k~ - 1|", coarse["k_tilde_max_dev"], tol, "<="),
              check("|min lambda^2 - 1/2|", coarse["lambda_sq_dev"], tol, "<="),
              check("max|k~ - 1| improves under doubling", fine["k_tilde_max_dev"], coarse["k_tilde_max_dev"], "<="),
              check("|min lambda^2 - 1/2| improves under doubling", fine["lambda_sq_dev"],
                    max(coarse["lambda_sq_dev"], 1e-14), "<="),
              check("lambda^2 - k~/2 >= 0", coarse["thm3_gap"], -1e-8, ">=", theorem=True),
              check("t=-3 twistor residual with exponent", coarse["twistor_residual"], tol, "<="),
              check("t=-3 twistor residual without exponent stays O(1)", coarse["twistor_residual_no_exponent"],
                    _expect(data, "negative_control", 0.1), ">=",
                    note="per unit sup|dF|: " + _display(coarse["twistor_residual_no_exponent_per_dF"]))]
    return {"resolution": coarse, "doubled": fine}, checks, None


RUNNERS = {
    "identities": run_identities,
    "geometry": run_geometry,
    "spectrum": run_spectrum,
    "bounds": lambda d: run_spectrum(d, bounds=True),
    "lemma2": run_lemma2,
    "weitzenboeck": run_weitzenboeck,
    "conformal": run_conformal,
    "products": run_products,
    "section4": run_section4,
}


# ----------------------------------------------------------------------------
# driver


def execute(data: dict) -> dict:
    """Run a validated scenario and return the report (without any timing data)."""
    np.random.seed(data["seed"])
    results, checks, rows = RUNNERS[data["kind"]](data)
    passed = all(c["passed"] for c in checks)
    report = {"kind": data["kind"], "seed": data["seed"], "scenario": data, "results": results,
              "checks": checks, "passed": passed, "status": "pass" if passed else "check-failure"}
    if rows is not None:
        report["_rows"] = rows
    return report


def write_outputs(report: dict, out: Path, name: str, meta: dict):
    out.mkdir(parents=True, exist_ok=True)
    rows = report.pop("_rows", None)
    (out / f"{name}.report.json").write_text(json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n")
    (out / f"{name}.meta.json").write_text(json.dumps(_jsonable(meta), sort_keys=True, indent=2) + "\n")
    lines = [f"{name}: kind={report['kind']} seed={report['seed']} status={report['status']}"]
    for c in report.get("checks", []):
        tag = "PASS" if c["passed"] else "FAIL"
        lines.append(f"{tag}  {c['name']}: {c['display']}" + (f"  [{c['note']}]" if c.get("note") else ""))
    if "error" in report:
        lines.append(f"ERROR {report['error']['kind']}: {report['error']['message']}")
    (out / f"{name}.summary.txt").write_text("\n".join(lines) + "\n")
    if rows is not None:
        with open(out / f"{name}.eigenvalues.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(rows[0])
            for r in rows[1:]:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return lines


def _versions():
    import scipy
    import sympy

    return {"dolbeault": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "sympy": sympy.__version__, "python": platform.python_version()}


def run(path, out=None, seed=None, grid=None, kind=None, stream=sys.stdout) -> int:
    """Run one scenario file and return the process exit code."""
    path = Path(path)
    name = path.stem
    out = Path(out) if out is not None else Path("reports")
    start = time.time()
    meta = {"started": datetime.datetime.now(datetime.timezone.utc).isoformat(), "versions": _versions(),
            "scenario_file": str(path)}
    report = {"kind": kind, "seed": seed, "checks": []}

    def fail(code, kind_, exc):
        report.update(status=kind_, passed=False, error={"kind": kind_, "message": str(exc)})
        meta["wall_seconds"] = time.time() - start
        write_outputs(report, out, name, meta)
        print(f"{kind_}: {exc}", file=sys.stderr)
        return code

    try:
        data = load_scenario(path, seed, grid)
        if kind is not None and data["kind"] != kind:
            raise ScenarioError(f"scenario kind is {data['kind']!r} but the subcommand is {kind!r}")
        report.update(kind=data["kind"], seed=data["seed"], scenario=data)
        report = execute(data)
    except BudgetError as exc:
        return fail(EXIT_INPUT, "budget-error", exc)
    except HypothesisError as exc:
        return fail(EXIT_INPUT, "hypothesis-rejected", exc)
    except (ScenarioError, MetricError) as exc:
        return fail(EXIT_INPUT, "parse-error", exc)
    except SolverError as exc:
        return fail(EXIT_SOLVER, "solver-failure", exc)
    meta["wall_seconds"] = time.time() - start
    for line in write_outputs(report, out, name, meta):
        print(line, file=stream)
    return EXIT_PASS if report["passed"] else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dolbeault", description="Run verification scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("run",) + KINDS:
        p = sub.add_parser(cmd, help="run a scenario file" if cmd == "run" else f"run a '{cmd}' scenario file")
        p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("--out", default="reports", help="output directory (default: reports)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--grid", type=int, default=None,
                       help="grid size N: N^4 for single-grid kinds, (N/2)^4 -> N^4 for refinement kinds")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.scenario, args.out, args.seed, args.grid, None if args.command == "run" else args.command)


if __name__ == "__main__":
    sys.exit(main())
