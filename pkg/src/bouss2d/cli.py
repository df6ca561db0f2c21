"""Command line front end.

Subcommands: run (integrate one configured simulation), verify (replay checks
over a finished run directory), analyze (norms and shell energies of one
snapshot), lp-report (commutator scaling tables), sweep (exponent grid), and
suite (the packaged experiment suites).  Exit codes: 0 success, 1 a check or
suite failed, 2 numeric blow-up, 3 invalid configuration or input.
"""

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .config import (
    config_digest,
    environment_fingerprint,
    execute_run,
    load_config,
    parse_config,
    write_json,
)
from .diagnostics import (
    SweepConfig,
    check_apriori_bounds,
    energy_residual_theta,
    energy_residual_u,
    eta_equivalences,
    gagliardo_nirenberg_check,
    max_principle_probe,
    regularity_sweep,
)
from .errors import (
    ConfigError,
    DegenerateInputError,
    DomainError,
    GridMismatchError,
    NumericError,
    ShapeError,
    SnapshotFormatError,
    StepRejectedError,
    UndefinedRatioError,
)
from .fieldio import read_snapshot
from .initial import random_hs_field
from .ledger import EnergyLedger
from .lp import commutator_scaling_report, decompose, filter_bank, sobolev_norm
from .solver import Trajectory, TimeStepperConfig, initial_state
from .spectral import Grid, l2_norm, zero_vector
from .suites import SUITE_NAMES, resolve_workers, run_suite


def _cmd_run(args) -> int:
    cfg = load_config(args.config, overrides=tuple(args.set))
    traj, out = execute_run(cfg, out_dir=args.out)
    print(f"run complete: t={traj.times[-1]:g}, {len(traj.ledger)} ledger rows -> {out}")
    return 0


# --- verify -----------------------------------------------------------------------


def load_run(run_dir: Path) -> tuple[Trajectory, dict]:
    """Rebuild a Trajectory (ledger, temperature snapshots, laws) from the
    files `run` leaves behind, enough for every replay diagnostic."""
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "meta.json").read_text(encoding="utf-8"))
    cfg = parse_config(meta["config"])
    ledger = EnergyLedger.from_csv(run_dir / "ledger.csv")
    snapshots = []
    for path in sorted(run_dir.glob("snap_*.fld")):
        t = float(path.stem[len("snap_") :])
        theta = read_snapshot(path, cfg.grid, dealias_fraction=cfg.grid.dealias_fraction)
        state = initial_state(
            theta, zero_vector(cfg.grid), cfg.laws, beta=cfg.beta, cutoff=cfg.cutoff, time=t
        )
        snapshots.append((t, state))
    if not snapshots:
        raise SnapshotFormatError(f"no snap_*.fld files under {run_dir}")
    constants = meta.get("constants", {})
    traj = Trajectory(
        ledger=ledger,
        snapshots=snapshots,
        final=snapshots[-1][1],
        dt=float(constants.get("dt", 0.0)),
        scheme=constants.get("scheme", "unknown"),
    )
    return traj, meta


def _report_row(rep) -> dict:
    return {
        "name": rep.name,
        "lhs": float(rep.lhs),
        "rhs": float(rep.rhs),
        "ratio": float(rep.ratio),
        "passed": bool(rep.passed),
    }


def verify_run(run_dir: Path) -> dict:
    """Replay every estimate over a run directory.  Hard checks are the
    parameter-free ones: exact-constant uniform bounds, finite energy bands,
    eta sandwiches and round trip, the strain identity, and dissipation
    floors.  Residual sizes, overshoot, and the interpolation ratio depend on
    resolution or step size, so they are reported but not gated."""
    traj, meta = load_run(run_dir)
    led = traj.ledger
    times = led.times

    hard = [_report_row(r) for r in check_apriori_bounds(traj)]
    hard += [_report_row(r) for r in eta_equivalences(traj)]

    strain_sq = led.column("strain_u") ** 2
    grad_sq = led.column("grad_u") ** 2
    defect = np.abs(strain_sq - 2.0 * grad_sq) / np.maximum(strain_sq, 1e-300)
    worst = int(np.argmax(defect)) if len(defect) else 0
    hard.append(
        {
            "name": "strain_identity",
            "lhs": float(defect[worst]),
            "rhs": 1e-12,
            "ratio": float(defect[worst] / 1e-12),
            "passed": bool(defect[worst] <= 1e-12),
        }
    )
    kap_lo = traj.final.laws.a.lower_bound
    mu_lo = traj.final.laws.b.lower_bound
    for name, diss, floor in (
        ("dissipation_floor_theta", led.column("diss_theta"), kap_lo * led.column("grad_theta") ** 2),
        ("dissipation_floor_u", led.column("diss_u"), mu_lo * grad_sq),
    ):
        margin = diss - floor * (1.0 - 1e-10)
        k = int(np.argmin(margin)) if len(margin) else 0
        hard.append(
            {
                "name": name,
                "lhs": float(floor[k]),
                "rhs": float(diss[k]),
                "ratio": float(floor[k] / diss[k]) if diss[k] else 0.0,
                "passed": bool(margin[k] >= 0.0),
            }
        )

    over = max_principle_probe(traj)
    soft = [
        {
            "name": "max_principle_overshoot",
            "value": float(over.overshoot),
            "time": float(over.time_of_worst),
            "passed": bool(over.passed),
        },
        {
            "name": "residual_theta_max",
            "value": float(np.max(np.abs(energy_residual_theta(traj)))),
        },
        {
            "name": "residual_u_max",
            "value": float(np.max(np.abs(energy_residual_u(traj)))),
        },
    ]
    try:
        gn = gagliardo_nirenberg_check([s.theta for _, s in traj.snapshots])
        soft.append({"name": "gagliardo_nirenberg", "value": float(gn.lhs), "passed": bool(gn.passed)})
    except ValueError:
        soft.append({"name": "gagliardo_nirenberg", "value": None, "note": "constant snapshots"})

    return {
        "run": str(run_dir),
        "config_sha256": meta.get("config_sha256", config_digest(meta["config"])),
        "rows": len(led),
        "span": [float(times[0]), float(times[-1])] if len(times) else [],
        "hard_checks": hard,
        "soft_checks": soft,
        "passed": all(r["passed"] for r in hard),
        "environment": environment_fingerprint(),
    }


def _cmd_verify(args) -> int:
    report = verify_run(Path(args.run))
    out = Path(args.out) if args.out else Path(args.run) / "report.json"
    write_json(out, report)
    verdict = "pass" if report["passed"] else "FAIL"
    bad = [r["name"] for r in report["hard_checks"] if not r["passed"]]
    print(f"verify {verdict}: {len(report['hard_checks'])} hard checks -> {out}")
    if bad:
        print("failed: " + ", ".join(bad))
    return 0 if report["passed"] else 1


# --- analyze / lp-report ----------------------------------------------------------


def _cmd_analyze(args) -> int:
    field = read_snapshot(Path(args.field))
    exponents = [float(tok) for tok in args.norms.split(",") if tok.strip()]
    if not exponents:
        raise ConfigError("analyze needs at least one exponent in --norms")
    d = decompose(field, filter_bank(field.grid))
    shells = {"-1": l2_norm(d.shell(-1)) ** 2}
    for j in range(d.j_max + 1):
        shells[str(j)] = l2_norm(d.shell(j)) ** 2
    payload = {
        "field": str(args.field),
        "n": field.grid.n,
        "box_length": field.grid.box_length,
        "norms": {f"{s:g}": sobolev_norm(field, s) for s in exponents},
        "shell_energies": shells,
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def _cmd_lp_report(args) -> int:
    pairs = []
    for tok in args.pairs.split(";"):
        if not tok.strip():
            continue
        s_txt, nu_txt = tok.split(",")
        pairs.append((float(s_txt), float(nu_txt)))
    if not pairs:
        raise ConfigError("lp-report needs at least one s,nu pair")
    g = Grid(args.n)
    rows = []
    for s, nu in pairs:
        for k in range(args.count):
            phi = random_hs_field(g, args.field_s, 1.0, args.seed + 2 * k, 0)
            psi = random_hs_field(g, args.field_s, 1.0, args.seed + 2 * k + 1, 0)
            rep = commutator_scaling_report(phi, psi, s, nu)
            rows.append(
                (
                    s,
                    nu,
                    args.seed + 2 * k,
                    rep.l1_sum,
                    rep.l1_rhs,
                    rep.l1_ratio,
                    "" if rep.l2_ratio is None else rep.l2_ratio,
                    rep.geometric_ratio,
                    rep.tail_estimate,
                )
            )
    _emit_csv(
        ("s", "nu", "seed", "l1_sum", "l1_rhs", "l1_ratio", "l2_ratio",
         "geometric_ratio", "tail_estimate"),
        rows,
        args.out,
    )
    return 0


# --- sweep / suite ----------------------------------------------------------------


def _emit_csv(header, rows, out_path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if out_path:
        Path(out_path).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())


def _parse_grid_spec(spec: str) -> list:
    pairs = []
    for tok in spec.split(";"):
        if not tok.strip():
            continue
        parts = tok.split(",")
        if len(parts) != 2:
            raise ConfigError(f"grid point {tok!r} is not of the form s_theta,s_u")
        pairs.append((float(parts[0]), float(parts[1])))
    if not pairs:
        raise ConfigError("sweep needs at least one grid point")
    return pairs


def _cmd_sweep(args) -> int:
    from .suites import _law_pair, _VARYING_LAWS  # default Figure-1 laws

    pairs = _parse_grid_spec(args.grid)
    cfg = SweepConfig(
        grid=Grid(args.n),
        laws=_law_pair(_VARYING_LAWS),
        stepper=TimeStepperConfig(t_end=args.t_end, dt="auto" if args.dt == "auto" else float(args.dt)),
        seed=args.seed,
        growth_cap=args.cap,
    )
    report = regularity_sweep(pairs, cfg, workers=resolve_workers(args.workers))
    _emit_csv(
        ("s_theta", "s_u", "sup_theta", "sup_u", "int_grad_theta", "int_grad_u",
         "passed", "reason"),
        [
            (p.s_theta, p.s_u, p.sup_theta, p.sup_u, p.int_grad_theta, p.int_grad_u,
             p.passed, p.reason)
            for p in report.points
        ],
        args.out,
    )
    return 0


def _cmd_suite(args) -> int:
    out = Path(args.out) if args.out else Path(f"suite_{args.name}")
    result = run_suite(
        args.name,
        config_overrides=tuple(args.set),
        out_dir=out,
        workers=args.workers,
    )
    for case in result.cases:
        print(f"  [{'pass' if case.passed else 'FAIL'}] {case.name}")
    verdict = "pass" if result.passed else "FAIL"
    print(f"suite {result.suite} {verdict} -> {out}")
    if result.failure:
        print(f"first violation: {result.failure}")
    return 0 if result.passed else 1


# --- parser -----------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bouss2d",
        description="2D Boussinesq simulations with temperature-dependent coefficients",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate one configured simulation")
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                   help="override a config key by dotted path (repeatable)")
    p.add_argument("--out", default=None, help="output directory (defaults to output_dir)")
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("verify", help="replay estimate checks over a run directory")
    p.add_argument("--run", required=True, help="directory written by `run`")
    p.add_argument("--out", default=None, help="report path (default <run>/report.json)")
    p.set_defaults(handler=_cmd_verify)

    p = sub.add_parser("analyze", help="norms and shell energies of one snapshot")
    p.add_argument("--field", required=True, help="snapshot .fld file")
    p.add_argument("--norms", required=True, help="comma-separated Sobolev exponents")
    p.add_argument("--out", default=None, help="also write the JSON here")
    p.set_defaults(handler=_cmd_analyze)

    p = sub.add_parser("lp-report", help="commutator scaling reports as CSV")
    p.add_argument("--pairs", default="0.5,0.25;1.2,0.5;1.5,0.75",
                   help="semicolon-separated s,nu pairs")
    p.add_argument("--n", type=int, default=64, help="grid size")
    p.add_argument("--count", type=int, default=5, help="field pairs per (s,nu)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--field-s", type=float, default=1.8, dest="field_s",
                   help="Sobolev regularity of the random draws")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(handler=_cmd_lp_report)

    p = sub.add_parser("sweep", help="regularity sweep over exponent pairs")
    p.add_argument("--grid", required=True, help="grid spec like '1,0;2,0;1,2'")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--t-end", type=float, default=0.5, dest="t_end")
    p.add_argument("--dt", default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=float, default=10.0, help="allowed sup-norm growth factor")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("suite", help="run one packaged experiment suite")
    p.add_argument("--name", required=True, choices=SUITE_NAMES)
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                   help="override a suite default by dotted path (repeatable)")
    p.add_argument("--out", default=None, help="report directory (default suite_<name>)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=_cmd_suite)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (NumericError, StepRejectedError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 2
    except (
        ConfigError,
        DomainError,
        ShapeError,
        GridMismatchError,
        SnapshotFormatError,
        UndefinedRatioError,
        DegenerateInputError,
        FileNotFoundError,
    ) as err:
        print(f"invalid input: {err}", file=sys.stderr)
        return 3
