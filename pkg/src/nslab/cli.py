"""Command-line entry point: ``nslab {run, sweep, verify, analyze}``.

Exit codes: 0 success, 1 failed assertion (a verification suite or an
invariant check), 2 configuration error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import spectral as sp
from .blowup import diagnose, omega_trace, rate_functional, typeI_functional
from .errors import ConfigError, NSLabError, NumericalDivergenceError
from .fieldio import load_trajectory, records_csv, save_field, save_trajectory, write_csv
from .initial_data import build_initial_data
from .mild import solve_local
from .scenario import Scenario, load_scenario

log = logging.getLogger("nslab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

RECORD_COLUMNS = ["t", "dt", "omega", "lp", "energy", "dissipation_integral", "sweeps", "converged",
                  "div_residual", "support_xi1"]

DIV_TOL = 1e-12


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _finite(x):
    return x if isinstance(x, (int, float)) and math.isfinite(x) else str(x)


# --------------------------------------------------------------------------
# run


def _trajectory_rows(traj: sp.Trajectory) -> list[dict]:
    return [{"t": t, **rec} for t, rec in zip(traj.times, traj.records)]


def _energy_rows(traj: sp.Trajectory) -> list[list]:
    """``t, E(t), dissipation integral, E(t) + D(t), relative defect``."""
    e0 = traj.records[0]["energy"]
    out = []
    for t, rec in zip(traj.times, traj.records):
        tot = rec["energy"] + rec["dissipation_integral"]
        out.append([t, rec["energy"], rec["dissipation_integral"], tot, abs(tot - e0) / e0 if e0 else 0.0])
    return out


def execute_scenario(sc: Scenario, out: Path, stride: int | None = None) -> dict:
    """Solve one scenario, write its artifacts under ``out`` and return a summary."""
    out.mkdir(parents=True, exist_ok=True)
    g = sc.grid()
    u0 = build_initial_data(g, sc.initial_data_spec())
    cfg = sc.solver_config()
    res = solve_local(u0, cfg)
    traj = res.trajectory
    stride = sc.stride if stride is None else stride
    (out / "scenario.json").write_text(sc.to_json() + "\n")
    save_field(u0, out / "initial.nsf")
    save_trajectory(traj, out / "trajectory.nst", stride)
    rows = _trajectory_rows(traj)
    records_csv(rows, out / "trajectory.csv", RECORD_COLUMNS)
    diags = sc.diagnostics
    if "energy" in diags:
        write_csv(out / "energy.csv", ["t", "energy", "dissipation_integral", "total", "relative_defect"],
                  _energy_rows(traj))
    T_est = res.T_est if math.isfinite(res.T_est) else None
    T_ref = T_est if T_est is not None else traj.t_end
    p = sc.diagnostics_p
    if "omega" in diags:
        om = omega_trace(traj)
        write_csv(out / "omega.csv", ["t", "omega"], om.rows())
    if "rate" in diags:
        write_csv(out / "rate.csv", ["t", "rate"], rate_functional(traj, T_ref).rows())
    if "typeI" in diags and p > g.d:
        write_csv(out / "typeI.csv", ["t", "typeI"], typeI_functional(traj, T_ref, p).rows())
    if "support" in diags:
        write_csv(out / "support.csv", ["t", "support_xi1"], [[r["t"], r["support_xi1"]] for r in rows])
    if "concentration" in diags:
        rep = diagnose(traj, T_ref, p)
        _write_json(out / "concentration.json", rep.concentration_json())
    max_div = max(r["div_residual"] / max(math.sqrt(2 * r["energy"]), 1e-300) for r in traj.records)
    summary = {
        "name": sc.name,
        "steps": len(traj) - 1,
        "t_end": traj.t_end,
        "T_est": _finite(res.T_est),
        "blowup_declared": res.blowup_declared,
        "reason": res.reason,
        "max_omega": max(r["omega"] for r in traj.records),
        "max_relative_divergence": max_div,
        "divergence_ok": bool(max_div <= DIV_TOL),
        "notes": res.notes,
        "proviso": "declared blowup is a heuristic stopping condition, not a certified singularity",
    }
    if "typeI" in diags and p > g.d and res.blowup_declared:
        ti = typeI_functional(traj, res.T_est, p).value
        summary["typeI_min"] = float(np.min(ti[:-1])) if len(ti) > 1 else float(ti[0])
        summary["typeI_max"] = float(np.max(ti))
    _write_json(out / "summary.json", summary)
    return summary


def cmd_run(args) -> int:
    sc = _load(args)
    summary = execute_scenario(sc, sc.output_dir(args.out), args.stride)
    log.info("%s: %s after %d steps", sc.name, summary["reason"], summary["steps"])
    return EXIT_OK if summary["divergence_ok"] else EXIT_FAIL


# --------------------------------------------------------------------------
# sweep


def _sweep_point(payload):
    doc, assignment, mode, rho, n0_max, out = payload
    sc = Scenario.from_dict(doc)
    for k, v in assignment.items():
        sc = sc.with_value(k, v)
    row = dict(assignment)
    if mode == "global_criterion":
        from .initial_data import half_space_rho
        from .mild import check_global_criterion

        g = sc.grid()
        spec = sc.initial_data_spec()
        u0 = build_initial_data(g, spec)
        r = rho if rho is not None else half_space_rho(int(spec.get("params", {}).get("L", 0)))
        res = check_global_criterion(u0, r, n0_max=n0_max, T_probe=sc.solver_config().T_horizon)
        row.update({"satisfied": res.satisfied, "best_n0": res.best_n0, "margin": res.margin,
                    "sup_u0": sp.sup_norm(u0, False), "cauchy_ok": res.cauchy_ok})
        return row
    name = "_".join(f"{k.split('.')[-1]}={v}" for k, v in assignment.items())
    try:
        s = execute_scenario(sc, Path(out) / name)
    except NumericalDivergenceError as exc:
        row.update({"T_est": "nan", "blowup_declared": False, "reason": f"diverged: {exc}"})
        return row
    row.update({k: s.get(k, "") for k in ("T_est", "blowup_declared", "reason", "max_omega",
                                          "typeI_min", "typeI_max")})
    return row


def run_sweep(sc: Scenario, out: Path, workers: int = 1) -> list[dict]:
    """Cartesian sweep over ``sweep.parameters``; rows come back in grid order."""
    spec = sc.raw["sweep"]
    params = spec["parameters"]
    keys = list(params)
    mode = spec.get("mode", "solve")
    out.mkdir(parents=True, exist_ok=True)
    base = sc.to_dict()
    base.pop("sweep")
    for k in keys:  # validate every path and value before any work starts
        for v in params[k]:
            sc.with_value(k, v)
    jobs = [(base, dict(zip(keys, combo)), mode, spec.get("rho"), spec.get("n0_max", 2), str(out))
            for combo in itertools.product(*(params[k] for k in keys))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    cols = keys + [c for c in rows[0] if c not in keys]
    records_csv(rows, out / "sweep.csv", cols)
    summary = {"mode": mode, "points": len(rows)}
    if mode == "solve":
        declared = [r for r in rows if r.get("blowup_declared") is True and r.get("typeI_min") not in ("", None)]
        summary["declared_blowups"] = len(declared)
        if declared:
            summary["min_typeI"] = min(float(r["typeI_min"]) for r in declared)
        summary["caveat"] = "minima over declared-blowup runs only; no singularity is certified"
    else:
        sat = [r for r in rows if r["satisfied"]]
        summary["satisfied"] = len(sat)
        summary["caveat"] = "criterion evaluated with sup in time over [0, T_probe] only"
    _write_json(out / "sweep_summary.json", summary)
    return rows


def cmd_sweep(args) -> int:
    sc = _load(args)
    if "sweep" not in sc.raw:
        raise ConfigError("scenario has no sweep section", "sweep")
    rows = run_sweep(sc, sc.output_dir(args.out), args.threads)
    log.info("sweep: %d points", len(rows))
    return EXIT_OK


# --------------------------------------------------------------------------
# verify


def _suite_cutoffs(opts) -> list:
    from .besov import CutoffFamily, dyadic_blocks

    g = sp.Grid(opts.get("d", 2), opts.get("N", 64), opts.get("box_scale", 1.0))
    fam = CutoffFamily.for_grid(g)
    lo, hi = fam.exact_band()
    band = (g.xi_abs >= lo) & (g.xi_abs <= hi)
    err = float(np.max(np.abs(fam.partition_sum()[band] - 1.0)))
    f = sp.to_spectral(np.random.default_rng(opts.get("seed", 0)).standard_normal((g.d,) + g.shape), g)
    rec = dyadic_blocks(f).reconstruct()
    rerr = sp.l2_norm(rec - f) / sp.l2_norm(f)
    return [("partition_of_unity", err, 1e-12), ("block_reconstruction", rerr, 1e-12)]


def _suite_decay(opts) -> list:
    from .besov import _noise_field, verify_exp_decay, verify_higher_frequency_decay

    g = sp.Grid(2, opts.get("N", 64), 1.0)
    f = _noise_field(g, opts.get("seed", 0), g.N // 3)
    rows = []
    for j in range(opts.get("j_min", 0), opts.get("j_max", 4) + 1):
        rows.append((f"exp_decay_j{j}", verify_exp_decay(f, j).sup, opts.get("bound", 10.0)))
    F = _noise_field(g, opts.get("seed", 0) + 1, g.N // 3)
    M = sp.SpectralField(g, np.concatenate([F.coeffs, F.coeffs[::-1]]) * (g.xi_abs >= 4.0))
    rows.append(("higher_frequency_j2", verify_higher_frequency_decay(M, 2).sup, opts.get("bound", 10.0)))
    return rows


def _suite_heat_spacetime(opts) -> list:
    from .besov import _noise_field, verify_heat_spacetime

    g = sp.Grid(2, opts.get("N", 64), 1.0)
    f = _noise_field(g, opts.get("seed", 0), g.N // 3)
    f = f.like(f.coeffs * (g.xi_sq > 0))
    rows = []
    for a, r, p in [(0.5, 2.0, 4.0), (0.0, 2.0, 6.0), (0.25, 3.0, 6.0)]:
        inv = 1.0 / p
        gamma = 2.0 / (a + g.d * (1.0 / r - inv))
        if gamma < r:
            continue
        ratio = verify_heat_spacetime(f, a, r, p, gamma)
        rows.append((f"heat_spacetime_a{a}_r{r}_p{p}", ratio, 10.0))
    return rows


def _half_space_case(opts):
    from .initial_data import half_space, half_space_rho

    g = sp.Grid(opts.get("d", 3), opts.get("N", 32), opts.get("box_scale", 0.5))
    L = opts.get("L", 3)
    return half_space(g, L, opts.get("c", 1.0)), half_space_rho(L)


def _suite_support(opts) -> list:
    from .mild import frequency_support_tracker

    u0, rho = _half_space_case(opts)
    res = frequency_support_tracker(u0, rho, opts.get("n_max", 2), opts.get("T", 1.0))
    return [(f"outside_mass_n{r.n}", r.outside_fraction, 1e-8) for r in res.records]


def _suite_global_criterion(opts) -> list:
    from .mild import check_global_criterion

    opts = {"c": 30.0, **opts}
    u0, rho = _half_space_case(opts)
    res = check_global_criterion(u0, rho, n0_max=0, T_probe=opts.get("T", 1.0), n_extra=opts.get("n_extra", 3))
    rows = [("criterion_margin", -res.margin, 0.0), ("cauchy_bound", 0.0 if res.cauchy_ok else 1.0, 0.0),
            ("ratios_missing", 0.0 if res.ratios else 1.0, 0.0)]
    rows += [(f"difference_ratio_{i}", r, 0.6) for i, r in enumerate(res.ratios)]
    return rows


def _suite_profiles(opts) -> list:
    from .profiles import (ProfileDecomposition, elementary_inequality_check, greedy_extract,
                           norm_splitting_check, synthesize)

    g = sp.Grid(2, opts.get("N", 256), 1.0)
    truth = [(0.25, (1.0, 1.0)), (0.5, (4.5, 1.5)), (1.0, (3.0, 4.5))]
    D = ProfileDecomposition(g, ["gaussian", "gaussian", "mexican_hat"], [str(s) for s, _ in truth],
                             [[str(c) for c in x] for _, x in truth], p=3)
    fields = [synthesize(D, n) for n in range(1, 7)]
    ex = greedy_extract(fields, 3, 3)
    rows = [("profiles_found", float(3 - ex.J), 0.0)]
    for lam, x in truth:
        best = min(range(ex.J), key=lambda j: abs(math.log(ex.scales[j][-1] / lam)) +
                   float(np.linalg.norm(ex.cores[j][-1] - np.array(x))) / lam) if ex.J else None
        if best is None:
            continue
        rows.append((f"scale_log2_error_{lam}", abs(math.log2(ex.scales[best][-1] / lam)), 1.0))
        rows.append((f"core_error_{lam}", float(np.linalg.norm(ex.cores[best][-1] - np.array(x))) / lam, 1.0))
    rows.append(("norm_splitting_gap", abs(norm_splitting_check(D, 6)["relative_gap"]), 1e-4))
    e = elementary_inequality_check([1.0, -1.0], 2)
    rows.append(("elementary_hand_case", abs(e["lhs"] - 2) + abs(e["rhs"] - 2), 1e-14))
    return rows


SUITES = {
    "cutoffs": _suite_cutoffs,
    "decay": _suite_decay,
    "heat_spacetime": _suite_heat_spacetime,
    "support": _suite_support,
    "global_criterion": _suite_global_criterion,
    "profiles": _suite_profiles,
}


def run_suite(name: str, opts: dict | None = None) -> list[tuple]:
    """Rows ``(check, value, bound, passed)``; a check passes when ``value <= bound``."""
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}", "suite")
    rows = SUITES[name](dict(opts or {}))
    return [(c, float(v), float(b), bool(np.isfinite(v) and v <= b)) for c, v, b in rows]


def cmd_verify(args) -> int:
    opts = {}
    if args.config:
        sc = load_scenario(args.config)
        opts = dict(sc.raw.get("verify", {}).get(args.suite, {}))
    if args.seed is not None:
        opts["seed"] = args.seed
    rows = run_suite(args.suite, opts)
    out = Path(args.out or f"verify_{args.suite}")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{args.suite}.csv", ["check", "value", "bound", "passed"], rows)
    ok = all(r[3] for r in rows)
    for c, v, b, p in rows:
        print(f"{'PASS' if p else 'FAIL'} {args.suite}.{c}: {v:.3e} <= {b:.3e}")
    _write_json(out / f"{args.suite}.json", {"suite": args.suite, "passed": ok,
                                              "checks": [dict(zip(("check", "value", "bound", "passed"), r))
                                                         for r in rows]})
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# analyze


def cmd_analyze(args) -> int:
    traj = load_trajectory(args.trajectory)
    out = Path(args.out or Path(args.trajectory).with_suffix("").as_posix() + "_analysis")
    out.mkdir(parents=True, exist_ok=True)
    T_est = traj.t_end if args.T_est is None else args.T_est
    d = traj.grid.d
    rows = []
    for t, f in zip(traj.times, traj.fields):
        rows.append([t, sp.sup_norm(f), sp.lp_norm(f, args.p), sp.energy(f), sp.divergence_residual(f)])
    write_csv(out / "norms.csv", ["t", "omega", "lp", "energy", "div_residual"], rows)
    write_csv(out / "rate.csv", ["t", "rate"], rate_functional(traj, T_est).rows())
    if args.p > d:
        write_csv(out / "typeI.csv", ["t", "typeI"], typeI_functional(traj, T_est, args.p).rows())
    rep = diagnose(traj, T_est, args.p)
    _write_json(out / "concentration.json", rep.concentration_json())
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def _load(args) -> Scenario:
    if not args.config:
        raise ConfigError("--config is required", "config")
    sc = load_scenario(args.config)
    if args.seed is not None:
        doc = sc.to_dict()
        doc["seed"] = args.seed
        sc = Scenario.from_dict(doc)
    return sc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nslab", description="Mild Navier-Stokes solver and diagnostics.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="scenario JSON file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="FFT workers / sweep processes")
    common.add_argument("--seed", type=int, default=None, metavar="U64", help="override the scenario seed")
    common.add_argument("--stride", type=int, default=None, metavar="K", help="trajectory save stride")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="solve one scenario")
    sub.add_parser("sweep", parents=[common], help="run a parameter sweep")
    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("suite", choices=sorted(SUITES))
    a = sub.add_parser("analyze", parents=[common], help="post-process a stored trajectory")
    a.add_argument("trajectory", help="trajectory file written by run")
    a.add_argument("--T-est", dest="T_est", type=float, default=None, help="blowup time estimate")
    a.add_argument("--p", type=float, default=6.0, help="Lebesgue exponent of the type-I functional")
    return ap


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "analyze": cmd_analyze}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("config error: seed: must fit in an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.stride is not None and args.stride < 1:
        print("config error: stride: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    sp.set_threads(max(1, args.threads))
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalDivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NSLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
