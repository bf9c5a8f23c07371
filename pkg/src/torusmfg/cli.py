"""Command-line front end: solve, sweep, corrector, select, example, verify.

Configuration comes from an optional JSON file plus flags; a flag always wins
over the file.  Every output directory receives a meta.json echoing the fully
resolved configuration.  Exit codes: 0 success, 1 solver failure (partial
outputs are still written, with failure markers), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .closed_form import example_bbb, example_exlp
from .corrector import (
    CorrectorError,
    ErgodicTriple,
    solve_limit_corrector,
    verify_expansion,
)
from .grid import GridField, TorusGrid, from_csv, integrate, to_csv
from .model import (
    Coupling,
    MFGModel,
    Potential,
    Regularization,
    model_from_config,
)
from .selection import exdp_model, run_selection_experiment, trig_test_basis
from .selection import holonomy_defect_discounted
from .solver import (
    SolverError,
    continuation_solve,
    energy_identity_residual,
    jacobian_fd_check,
)


class UsageError(ValueError):
    pass


MODEL_FLAGS = ("potential", "c", "alpha", "kappa", "sigma", "delta")
MODEL_DEFAULTS = {"potential": "zero", "c": 0.0, "alpha": 1.0, "kappa": 1.0,
                  "sigma": 0.0, "delta": 0.0}


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config file {path} must contain a JSON object")
    return cfg


def _resolve(name: str, flag_value, cfg: dict, default):
    """Flag wins over file; file wins over default."""
    if flag_value is not None:
        return flag_value
    if name in cfg:
        return cfg[name]
    return default


def _resolve_model(args, cfg: dict) -> tuple[MFGModel, Regularization, dict]:
    block = dict(MODEL_DEFAULTS)
    for key in ("coupling", "potential", "regularization"):
        sub = cfg.get(key, {})
        if isinstance(sub, dict):
            for k, v in sub.items():
                if k == "kind":
                    block["potential"] = v
                elif k in block:
                    block[k] = v
    for name in MODEL_FLAGS:
        val = getattr(args, name, None)
        if val is not None:
            block[name] = val
    try:
        model = MFGModel(
            coupling=Coupling(kappa=float(block["kappa"]), alpha=float(block["alpha"])),
            potential=Potential(kind=block["potential"], c=float(block["c"])),
        )
        reg = Regularization(sigma=float(block["sigma"]), delta=float(block["delta"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return model, reg, block


def _positive(name: str, value: float) -> float:
    if value is None or value <= 0:
        raise UsageError(f"{name} must be positive, got {value}")
    return float(value)


def _parse_ladder(text: str) -> list[float]:
    try:
        ladder = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad ladder {text!r}") from exc
    if not ladder or any(e <= 0 for e in ladder):
        raise UsageError("ladder entries must be positive")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise UsageError("ladder must be strictly decreasing")
    return ladder


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_meta(outdir: str, command: str, resolved: dict) -> None:
    _write_json(os.path.join(outdir, "meta.json"),
                {"command": command, "config": resolved, "version": __version__})


def _write_rows_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def _fmt(v: float) -> float:
    return float(v)


def cmd_solve(args) -> int:
    cfg = _load_config_file(args.config)
    eps = _positive("epsilon", _resolve("epsilon", args.epsilon, cfg, None))
    n = int(_positive("n", _resolve("n", args.n, cfg, 512)))
    tol = _positive("tol", _resolve("tol", args.tol, cfg, 1e-10))
    model, reg, block = _resolve_model(args, cfg)
    outdir = _ensure_outdir(args.out)
    resolved = {"epsilon": eps, "n": n, "tol": tol, **block}
    _write_meta(outdir, "solve", resolved)
    grid = TorusGrid(n=n)
    try:
        sol = continuation_solve(eps, model, reg, grid, tol_abs=tol)
    except SolverError as exc:
        info = {"failed": True, "epsilon": eps, "error": str(exc)}
        lam = getattr(exc, "lam_reached", None)
        if lam is not None:
            info["lam_reached"] = lam
        _write_json(os.path.join(outdir, "solve.json"), info)
        print(f"solve failed: {exc}", file=sys.stderr)
        return 1
    x = grid.coordinates()
    _write_rows_csv(
        os.path.join(outdir, "solution.csv"), ["x", "u", "m"],
        [[_fmt(xi), _fmt(ui), _fmt(mi)] for xi, ui, mi in zip(x, sol.u.values, sol.m.values)],
    )
    eu = eps * sol.u.values
    _write_json(os.path.join(outdir, "solve.json"), {
        "epsilon": eps,
        "residual_sup": sol.residual_sup,
        "iters": sol.newton_iters,
        "mass": sol.mass,
        "min_m": float(np.min(sol.m.values)),
        "eps_u_min": float(np.min(eu)),
        "eps_u_max": float(np.max(eu)),
    })
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config_file(args.config)
    ladder = _parse_ladder(_resolve("eps_ladder", args.eps_ladder, cfg, None) or "")
    n = int(_positive("n", _resolve("n", args.n, cfg, 512)))
    tol = _positive("tol", _resolve("tol", args.tol, cfg, 1e-10))
    model, reg, block = _resolve_model(args, cfg)
    outdir = _ensure_outdir(args.out)
    _write_meta(outdir, "sweep", {"eps_ladder": ladder, "n": n, "tol": tol, **block})
    grid = TorusGrid(n=n)
    rows, failures = [], []
    warm = None
    for eps in ladder:
        try:
            sol = continuation_solve(eps, model, reg, grid, tol_abs=tol, u_init=warm)
        except SolverError as exc:
            failures.append({"eps": eps, "error": str(exc)})
            rows.append([_fmt(eps)] + [float("nan")] * 5)
            warm = None
            continue
        warm = sol.u
        rows.append([
            _fmt(eps), _fmt(sol.residual_sup), sol.newton_iters,
            _fmt(-eps * integrate(sol.u)), _fmt(sol.mass),
            _fmt(float(np.min(sol.m.values))),
        ])
    _write_rows_csv(os.path.join(outdir, "sweep.csv"),
                    ["eps", "residual_sup", "iters", "Hbar_est", "mass", "min_m"], rows)
    if failures:
        _write_json(os.path.join(outdir, "failures.json"), {"failed_rows": failures})
        print(f"{len(failures)} sweep row(s) failed", file=sys.stderr)
        return 1
    return 0


def _load_base(path: str) -> ErgodicTriple:
    u_path = os.path.join(path, "u.csv")
    m_path = os.path.join(path, "m.csv")
    h_path = os.path.join(path, "hbar.json")
    for p in (u_path, m_path, h_path):
        if not os.path.exists(p):
            raise UsageError(f"base directory {path} is missing {os.path.basename(p)}")
    with open(h_path) as fh:
        hbar = float(json.load(fh)["hbar"])
    return ErgodicTriple(u=from_csv(u_path), m=from_csv(m_path), hbar=hbar)


def cmd_corrector(args) -> int:
    cfg = _load_config_file(args.config)
    model, reg, block = _resolve_model(args, cfg)
    tol = _positive("tol", _resolve("tol", args.tol, cfg, 1e-10))
    base = _load_base(args.base)
    outdir = _ensure_outdir(args.out)
    ladder = _parse_ladder(args.epsilon_list) if args.epsilon_list else []
    _write_meta(outdir, "corrector",
                {"base": args.base, "epsilon_list": ladder, "tol": tol, **block})
    try:
        corr = solve_limit_corrector(base, model)
    except CorrectorError as exc:
        _write_json(os.path.join(outdir, "corrector.json"),
                    {"failed": True, "error": str(exc)})
        print(f"corrector failed: {exc}", file=sys.stderr)
        return 1
    slopes = None
    if ladder:
        sweep = []
        try:
            for eps in ladder:
                sweep.append(continuation_solve(eps, model, reg, base.grid, tol_abs=tol))
            report = verify_expansion(sweep, base, corr)
            slopes = {"e_u": report.slope_e_u, "e_m": report.slope_e_m,
                      "e2": report.slope_e2}
        except SolverError as exc:
            slopes = {"failed": True, "error": str(exc)}
    x = base.grid.coordinates()
    _write_rows_csv(
        os.path.join(outdir, "corrector.csv"), ["x", "v", "theta"],
        [[_fmt(a), _fmt(b), _fmt(c)]
         for a, b, c in zip(x, corr.v.values, corr.theta.values)],
    )
    _write_json(os.path.join(outdir, "corrector.json"), {
        "lambda": corr.lam,
        "route_agreement": corr.route_agreement,
        "slopes": slopes,
    })
    return 0


def cmd_select(args) -> int:
    cfg = _load_config_file(args.config)
    n = int(_positive("n", _resolve("n", args.n, cfg, 512)))
    ladder = _parse_ladder(
        _resolve("eps_ladder", args.eps_ladder, cfg, "0.2,0.1,0.05,0.025"))
    model_name = _resolve("model", args.model, cfg, "exdp")
    if model_name == "exdp":
        model = exdp_model()
    else:
        raise UsageError(f"unknown selection model {model_name!r}")
    outdir = _ensure_outdir(args.out)
    _write_meta(outdir, "select", {"model": model_name, "n": n, "eps_ladder": ladder})
    grid = TorusGrid(n=n)
    sweep, verdict = run_selection_experiment(model, grid, ladder)
    header = ["eps", "sigma", "delta", "Hbar_est", "F_value", "mass", "min_m",
              "holonomy_max", "action_gap", "coupling_gap"]
    rows = [[_fmt(r.eps), _fmt(r.sigma), _fmt(r.delta), _fmt(r.hbar_est),
             _fmt(r.f_value), _fmt(r.mass), _fmt(r.min_m), _fmt(r.holonomy_max),
             _fmt(r.action_gap), _fmt(r.coupling_gap)] for r in sweep.rows]
    _write_rows_csv(os.path.join(outdir, "sweep.csv"), header, rows)
    failures = [{"eps": r.eps, "error": r.error} for r in sweep.rows if r.failed]
    if verdict is None:
        _write_json(os.path.join(outdir, "verdict.json"),
                    {"failed": True, "error": "no ladder rung converged"})
    else:
        _write_json(os.path.join(outdir, "verdict.json"), {
            "criterion_ok": verdict.criterion_ok,
            "nearest_label": verdict.nearest_label,
            "nearest_l2": verdict.nearest_l2,
            "functional_gaps": verdict.functional_gaps,
            "terminal_eps": verdict.terminal_eps,
            "degenerate": verdict.degenerate,
        })
    if failures:
        _write_json(os.path.join(outdir, "failures.json"), {"failed_rows": failures})
        print(f"{len(failures)} ladder rung(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_example(args) -> int:
    n = int(_positive("n", 512 if args.n is None else args.n))
    grid = TorusGrid(n=n)
    builders = {"bbb": example_bbb, "exlp": example_exlp}
    m, hbar, candidates = builders[args.name](grid)
    outdir = _ensure_outdir(args.out)
    _write_meta(outdir, "example", {"name": args.name, "n": n, "hbar": hbar})
    to_csv(m, os.path.join(outdir, "m.csv"))
    x = grid.coordinates()
    for cand in candidates:
        _write_rows_csv(
            os.path.join(outdir, f"candidate_{cand.label}.csv"), ["x", "u_x", "u"],
            [[_fmt(a), _fmt(b), _fmt(c)]
             for a, b, c in zip(x, cand.u_x.values, cand.u.values)],
        )
    return 0


def cmd_verify(args) -> int:
    n = int(_positive("n", 256 if args.n is None else args.n))
    eps, tol = 0.1, 1e-10
    grid = TorusGrid(n=n)
    model = MFGModel(potential=Potential(kind="sine", c=0.3))
    reg = Regularization()
    sol = continuation_solve(eps, model, reg, grid, tol_abs=tol)
    h2 = grid.h**2

    checks = []
    checks.append(("mass", abs(sol.mass - 1.0), 10 * tol / eps))
    checks.append(("energy_identity", energy_identity_residual(sol, model), 5 * h2))
    worst = 0.0
    for k, phi in enumerate(trig_test_basis(grid), start=1):
        mode = (k + 1) // 2
        bound = (2 * np.pi * mode) ** 2
        worst = max(worst, holonomy_defect_discounted(eps, sol, phi) / bound)
    checks.append(("holonomy", worst, 10 * h2))
    checks.append(("jacobian_fd", jacobian_fd_check(sol.u, eps, 1.0, model, reg), 1e-6))

    all_ok = True
    for name, value, bound in checks:
        ok = value <= bound
        all_ok &= ok
        print(f"{name:18s} {value:12.3e} <= {bound:9.3e}  {'PASS' if ok else 'FAIL'}")
    return 0 if all_ok else 1


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--potential", choices=["zero", "sine", "cos4pi", "cos2pi"])
    p.add_argument("--c", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--delta", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="torusmfg",
        description="Discounted mean-field game solver and verification lab on the 1-torus.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single discounted solve")
    p.add_argument("--config")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--tol", type=float)
    _add_model_flags(p)
    p.add_argument("--out", default="out_solve")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="vanishing-discount ladder of solves")
    p.add_argument("--config")
    p.add_argument("--eps-ladder", dest="eps_ladder")
    p.add_argument("--n", type=int)
    p.add_argument("--tol", type=float)
    _add_model_flags(p)
    p.add_argument("--out", default="out_sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("corrector", help="limit corrector from a stored base")
    p.add_argument("--config")
    p.add_argument("--base", required=True,
                   help="directory with u.csv, m.csv, hbar.json")
    p.add_argument("--epsilon-list", dest="epsilon_list",
                   help="discounted sweep for expansion slopes")
    p.add_argument("--tol", type=float)
    _add_model_flags(p)
    p.add_argument("--out", default="out_corrector")
    p.set_defaults(func=cmd_corrector)

    p = sub.add_parser("select", help="selection experiment on the explicit example")
    p.add_argument("--config")
    p.add_argument("--model")
    p.add_argument("--n", type=int)
    p.add_argument("--eps-ladder", dest="eps_ladder")
    p.add_argument("--out", default="out_select")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("example", help="write closed-form oracle CSVs")
    p.add_argument("name", choices=["bbb", "exlp"])
    p.add_argument("--n", type=int)
    p.add_argument("--out", default="out_example")
    p.set_defaults(func=cmd_example)

    p = sub.add_parser("verify", help="run the invariant suite")
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
