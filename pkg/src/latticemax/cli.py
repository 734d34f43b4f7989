"""Batch runner: ``latticemax <command> [--config PATH] [--out DIR] ...``.

Precedence for run settings is flag > environment (LATTICEMAX_SEED,
LATTICEMAX_THREADS, LATTICEMAX_BUDGET_UPDATES, LATTICEMAX_OUT) > config file
> built-in default. ``--set key=value`` overrides a command parameter.

Exit codes: 0 success, 2 invalid configuration, 3 budget exceeded,
4 inequality violated (offending rows are written to ``violations.csv``).
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import math
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import ergodic, lattice, maxop, multiplier, torus
from .config import COMMANDS, ExperimentConfig, env_overrides
from .errors import BudgetExceededError, ConfigError, InequalityViolation, RegimeError

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_VIOLATION = 0, 2, 3, 4


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _r(x) -> str:
    return repr(float(x))


# ------------------------------------------------------------------ commands
# each returns ({artifact name: text}, meta dict, violation rows as CSV text or "")


def cmd_count(cfg: ExperimentConfig):
    P = cfg.params
    rows = []
    for q in P["q"]:
        for d in P["d"]:
            for N in P["N"]:
                spec = lattice.BallSpec(d, N, q)
                rows.append([d, _r(N), spec.q, lattice.count_ball(spec, cfg.budget_updates).count])
    out = {"counts.csv": _csv(["d", "N", "q", "count"], rows)}
    meta = {}
    viol = ""
    if P["volume_d"]:
        rep = lattice.count_volume_report(P["volume_d"], (1, 2, 4), P["C1"], cfg.budget_updates)
        out["count_volume.csv"] = rep.to_csv()
        meta["c2_fit"] = rep.c2_fit
        if not rep.all_upper_ok:
            bad = [r for r in rep.rows if not r.upper_ok]
            viol = _csv(["d", "N", "ratio"], [[r.d, _r(r.N), _r(r.ratio)] for r in bad])
    return out, meta, viol


def cmd_multiplier(cfg: ExperimentConfig):
    P = cfg.params
    samples = multiplier.SampleSpec(P["samples"], cfg.seed, tuple(P["strata"]), P["offset"])
    d, N, kind = P["d"], P["N"], P["kind"]
    if kind == "origin":
        rep = multiplier.verify_origin_bound(d, N, samples, cfg.budget_updates)
    elif kind == "decay":
        C = None if math.isnan(P["C_fit"]) else P["C_fit"]
        rep = multiplier.verify_decay_bound(d, N, samples, C, cfg.budget_updates)
    elif kind in ("small-scale", "small_scale"):
        c = None if math.isnan(P["c_fit"]) else P["c_fit"]
        rep = multiplier.verify_small_scale_approx(d, N, samples, c, cfg.budget_updates)
    else:
        raise ConfigError(f"unknown multiplier check {kind!r}")
    body = rep.to_csv(trailer=False)
    viol = ""
    if rep.violations:
        lines = body.splitlines()
        bad = {id(r) for r in rep.violations}
        keep = [lines[0]] + [line for r, line in zip(rep.rows, lines[1:]) if id(r) in bad]
        viol = "\n".join(keep) + "\n"
    return {"multiplier.csv": body}, rep.trailer(), viol


SEMIGROUP_TOL = {"plancherel": 1e-9, "two_path": 1e-8, "law": 1e-8, "positivity": -1e-9, "conv_thm": 1e-9}


def cmd_semigroup(cfg: ExperimentConfig):
    P = cfg.params
    M, d, n, ts = P["M"], P["d"], P["n"], P["t"]
    rows, bad = [], []
    header = ["field", "t", "plancherel", "two_path", "law", "min_eig_heat", "min_eig_ball", "conv_thm"]
    for i in range(P["fields"]):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i]))
        f = torus.TorusField.random(M, d, n, rng, "positive")
        plan = torus.plancherel_residual(f)
        N = 1
        ball = torus.convolve_ball(f, N)
        conv = float(np.max(np.abs(torus.dft(ball).values - torus.ball_multiplier_grid(M, d, N)[
            (...,) + (None, None)] * torus.dft(f).values)))
        min_ball = float(np.linalg.eigvalsh(ball.values).min())
        for t in ts:
            spec = torus.heat_semigroup(f, t, "spectral")
            series = torus.heat_semigroup(f, t, "series")
            law = torus.heat_semigroup(torus.heat_semigroup(f, t / 2), t / 2).max_abs_diff(spec)
            row = [i, _r(t), _r(plan), _r(spec.max_abs_diff(series)), _r(law),
                   _r(np.linalg.eigvalsh(series.values).min()), _r(min_ball), _r(conv)]
            rows.append(row)
            vals = dict(zip(header[2:], map(float, row[2:])))
            if (vals["plancherel"] > SEMIGROUP_TOL["plancherel"] or vals["two_path"] > SEMIGROUP_TOL["two_path"]
                    or vals["law"] > SEMIGROUP_TOL["law"] or vals["conv_thm"] > SEMIGROUP_TOL["conv_thm"]
                    or min(vals["min_eig_heat"], vals["min_eig_ball"]) < SEMIGROUP_TOL["positivity"]):
                bad.append(row)
    return {"semigroup.csv": _csv(header, rows)}, {"tolerances": SEMIGROUP_TOL}, (_csv(header, bad) if bad else "")


def cmd_maximal(cfg: ExperimentConfig):
    P = cfg.params
    rc = maxop.RegimeConfig(P["c0"], P["c1"], P["c2"], P["c3"], P["N_max"])
    for name in P["inputs"]:
        if name not in maxop.INPUTS:
            raise ConfigError(f"unknown input {name!r}")
    rep = maxop.maximal_ratio_experiment(P["inputs"], P["p"], P["d"], rc, seed=cfg.seed, n=P["n"], tol=P["tol"])
    body = rep.to_csv()
    bad = [r for r in rep.rows if r.input_id == "delta" and not math.isnan(r.ratio) and r.ratio > P["delta_bound"]]
    viol = ""
    if bad:
        viol = _csv(["d", "regime", "ratio"], [[r.d, r.regime, _r(r.ratio)] for r in bad])
    return {"maximal.csv": body}, rep.meta, viol


def cmd_domination(cfg: ExperimentConfig):
    P = cfg.params
    d, N = P["d"], P["N"]
    if P["samples"] > cfg.budget_updates:
        raise BudgetExceededError("Monte Carlo sample count exceeds the update budget",
                                  required=P["samples"], budget=cfg.budget_updates)
    M = maxop.domination_torus_side(d, N)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
    f = maxop.make_input(P["input"], M, d, 1, rng)
    if f.n != 1:
        raise ConfigError("domination check needs a scalar input")
    chk = maxop.DominationCheck(d, N, P["samples"], cfg.seed)
    C2 = None if math.isnan(P["C2"]) else P["C2"]
    rep = maxop.large_scale_domination_check(f, chk, P["C1"], C2, M)
    meta = dict(rep.meta)
    meta.update({"N1": rep.N1, "M": rep.M, "constant": rep.constant, "volume_ratio": rep.volume_ratio,
                 "volume_bound": rep.volume_bound, "pooled_rel_stderr": rep.pooled_rel_stderr,
                 "max_rel_stderr": rep.max_rel_stderr, "pointwise_ok": rep.pointwise_ok,
                 "volume_ok": rep.volume_ok})
    viol = ""
    if not (rep.pointwise_ok and rep.volume_ok):
        body = rep.to_csv().splitlines()
        viol = "\n".join([body[0]] + [line for line in body[1:] if line.endswith("false")]) + "\n"
        if not rep.volume_ok:
            viol += f"# volume ratio {rep.volume_ratio!r} > {rep.volume_bound!r}\n"
    return {"domination.csv": rep.to_csv()}, meta, viol


def cmd_ergodic(cfg: ExperimentConfig):
    P = cfg.params
    reports = []
    for i in range(P["cases"]):
        for p in P["p"]:
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i]))
            system = ergodic.ShiftSystem(P["M"], P["d"], P["n"])
            f = torus.TorusField.random(P["M"], P["d"], P["n"], rng, "hermitian")
            reports.append(ergodic.transference_check(system, f, p, P["radii"], P["R"], P["eps"]))
    meta = {"identity_residual": max(r.identity_residual for r in reports),
            "c_emp": [r.c_emp for r in reports]}
    bad = [r for r in reports if not r.ok or r.identity_residual != 0.0]
    viol = ergodic.transference_csv(bad) if bad else ""
    return {"transference.csv": ergodic.transference_csv(reports)}, meta, viol


def cmd_bau(cfg: ExperimentConfig):
    P = cfg.params
    seq = [np.diag([1.0 / N, 1.0]) for N in range(1, P["length"] + 1)]
    rep = ergodic.bau_projection_search(seq, np.zeros((2, 2)), P["eps"], tail_tol=P["tail_tol"])
    residuals = _csv(["N", "residual"], [[N, _r(r)] for N, r in enumerate(rep.residuals, start=1)])
    viol = "" if rep.trace_deficit < P["eps"] else f"trace deficit {rep.trace_deficit!r} >= eps\n"
    return {"bau.json": rep.to_json() + "\n", "bau_residuals.csv": residuals}, {"converged": rep.converged}, viol


HANDLERS = {
    "count": cmd_count,
    "multiplier-verify": cmd_multiplier,
    "semigroup-check": cmd_semigroup,
    "maximal-experiment": cmd_maximal,
    "domination-check": cmd_domination,
    "ergodic-demo": cmd_ergodic,
    "bau-demo": cmd_bau,
}


# -------------------------------------------------------------------- runner


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


def run(cfg: ExperimentConfig, out_dir: Path) -> int:
    """Run one command, write its artifacts and manifest, and return the exit code."""
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    artifacts, meta, violations = HANDLERS[cfg.command](cfg)
    wall = time.perf_counter() - t0
    for name, text in artifacts.items():
        (out_dir / name).write_text(text)
    if violations:
        (out_dir / "violations.csv").write_text(violations)
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=float) + "\n")
    (out_dir / "config.ini").write_text(cfg.to_text())
    manifest = {
        "command": cfg.command,
        "config_hash": cfg.content_hash(),
        "seed": cfg.seed,
        "threads": cfg.threads,
        "budget_updates": cfg.budget_updates,
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "package": _version("artifact")},
        "wall_time_s": round(wall, 3),
        "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "artifacts": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(artifacts.items())},
        "violations": bool(violations),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if violations:
        raise InequalityViolation(f"{cfg.command}: inequality violated, see {out_dir / 'violations.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latticemax", description="Lattice maximal-function experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="INI file with [run] and per-command sections")
    ap.add_argument("--out", type=Path, help="output directory (default: out/<command>)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int, help="recorded in the manifest; computation is single threaded")
    ap.add_argument("--budget-updates", type=int, dest="budget_updates",
                    help="cap on dynamic-program states, Monte Carlo samples and similar work units")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a command parameter, e.g. --set d=1,2,3")
    return ap


def resolve_config(args: argparse.Namespace, environ=None) -> tuple[ExperimentConfig, Path]:
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = ExperimentConfig.from_text(text, args.command)
    else:
        cfg = ExperimentConfig(args.command)
    env = env_overrides(environ)
    try:
        for key in ("seed", "threads", "budget_updates"):
            value = getattr(args, key)
            if value is None and key in env:
                value = int(env[key])
            if value is not None:
                setattr(cfg, key, value)
    except ValueError:
        raise ConfigError("environment override is not an integer") from None
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(key.strip(), value)
    cfg = ExperimentConfig(cfg.command, cfg.params, cfg.seed, cfg.threads, cfg.budget_updates)
    out = args.out or (Path(env["out"]) if "out" in env else Path("out") / cfg.command)
    return cfg, out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, out = resolve_config(args)
        code = run(cfg, out)
        print(f"{cfg.command}: ok, artifacts in {out}")
        return code
    except (ConfigError, RegimeError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InequalityViolation as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
