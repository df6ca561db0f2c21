"""TOML run configuration, dotted-path overrides, and reproducible run output.

A run is one TOML file.  The resolved mapping (defaults filled in) is what
gets hashed and written back out, so re-running from a run directory's
meta.json reproduces the run byte for byte.
"""

from __future__ import annotations

import copy
import hashlib
import json
import platform
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy
import scipy

from . import __version__
from .errors import ConfigError
from .fieldio import write_snapshot
from .initial import generate_initial
from .laws import PrimitiveTransform, law_from_config
from .ledger import EnergyLedger
from .solver import LawPair, SimState, TimeStepperConfig, Trajectory, initial_state, run
from .spectral import Grid

_GRID_KEYS = {"n", "box_length", "dealias_fraction", "cutoff"}
_STEPPER_KEYS = {"t_end", "dt", "scheme", "cfl_safety", "snapshot_interval"}
_TOP_KEYS = {"grid", "laws", "initial_data", "stepper", "probes", "output_dir", "seed", "beta"}
_DATA_KINDS = ("zero", "taylor_green", "random_hs", "file")


@dataclass(frozen=True)
class RunConfig:
    grid: Grid
    laws: LawPair
    theta_spec: dict
    u_spec: dict
    stepper: TimeStepperConfig
    probes: tuple
    output_dir: str
    seed: int
    beta: float
    cutoff: float | None
    resolved: dict


def _reject_unknown(section: Mapping, allowed: set, where: str) -> None:
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"unknown key '{extra[0]}' in {where}")


def _data_section(section: Mapping, where: str) -> dict:
    spec = dict(section)
    kind = spec.get("kind")
    if kind not in _DATA_KINDS:
        raise ConfigError(f"{where}: initial data kind must be one of {_DATA_KINDS}, got {kind!r}")
    return spec


def parse_config(mapping: Mapping) -> RunConfig:
    """Validate a config mapping and resolve it into runnable objects.

    Validation happens before any field allocation; unknown keys anywhere are
    rejected so typos cannot silently fall back to defaults.
    """
    _reject_unknown(mapping, _TOP_KEYS, "config")

    grid_sec = dict(mapping.get("grid") or {})
    _reject_unknown(grid_sec, _GRID_KEYS, "[grid]")
    if "n" not in grid_sec:
        raise ConfigError("[grid] needs 'n'")
    n = int(grid_sec["n"])
    box_length = float(grid_sec.get("box_length", 1.0))
    dealias = float(grid_sec.get("dealias_fraction", 2.0 / 3.0))
    cutoff = grid_sec.get("cutoff")
    cutoff = None if cutoff is None else float(cutoff)

    laws_sec = dict(mapping.get("laws") or {})
    _reject_unknown(laws_sec, {"kappa", "mu"}, "[laws]")
    for name in ("kappa", "mu"):
        if name not in laws_sec:
            raise ConfigError(f"[laws] needs a [laws.{name}] section")
    a = law_from_config(laws_sec["kappa"])
    b = law_from_config(laws_sec["mu"])
    laws = LawPair(a=a, b=b, a_primitive=PrimitiveTransform.build(a))

    data_sec = dict(mapping.get("initial_data") or {})
    _reject_unknown(data_sec, {"theta", "u"}, "[initial_data]")
    theta_spec = _data_section(data_sec.get("theta") or {"kind": "zero"}, "[initial_data.theta]")
    u_spec = _data_section(data_sec.get("u") or {"kind": "zero"}, "[initial_data.u]")

    step_sec = dict(mapping.get("stepper") or {})
    _reject_unknown(step_sec, _STEPPER_KEYS, "[stepper]")
    if "t_end" not in step_sec:
        raise ConfigError("[stepper] needs 't_end'")
    stepper = TimeStepperConfig(
        t_end=float(step_sec["t_end"]),
        dt=step_sec.get("dt", "auto"),
        scheme=str(step_sec.get("scheme", "imex_cn_rk2")),
        cfl_safety=float(step_sec.get("cfl_safety", 0.4)),
        snapshot_interval=step_sec.get("snapshot_interval"),
    )

    probes = tuple(str(p) for p in mapping.get("probes", ()))
    EnergyLedger(probes=probes)  # rejects unknown probe names

    seed = int(mapping.get("seed", 0))
    if not 0 <= seed < 2**63:
        raise ConfigError(f"seed must be a nonnegative 64-bit integer, got {seed}")
    beta = float(mapping.get("beta", 1.0))
    if not beta > 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    output_dir = str(mapping.get("output_dir", "out"))

    resolved = {
        "grid": {"n": n, "box_length": box_length, "dealias_fraction": dealias},
        "laws": {"kappa": dict(laws_sec["kappa"]), "mu": dict(laws_sec["mu"])},
        "initial_data": {"theta": theta_spec, "u": u_spec},
        "stepper": {
            "t_end": stepper.t_end,
            "dt": stepper.dt,
            "scheme": stepper.scheme,
            "cfl_safety": stepper.cfl_safety,
            "snapshot_interval": stepper.snapshot_interval,
        },
        "probes": list(probes),
        "output_dir": output_dir,
        "seed": seed,
        "beta": beta,
    }
    if cutoff is not None:
        resolved["grid"]["cutoff"] = cutoff

    return RunConfig(
        grid=Grid(n, box_length, dealias),
        laws=laws,
        theta_spec=theta_spec,
        u_spec=u_spec,
        stepper=stepper,
        probes=probes,
        output_dir=output_dir,
        seed=seed,
        beta=beta,
        cutoff=cutoff,
        resolved=resolved,
    )


def load_config(path: str | Path, overrides=()) -> RunConfig:
    with open(path, "rb") as fh:
        mapping = tomllib.load(fh)
    if overrides:
        mapping = apply_overrides(mapping, overrides)
    return parse_config(mapping)


def _parse_literal(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(mapping: Mapping, assignments) -> dict:
    """Apply dotted-path assignments like stepper.dt=0.001 to a config copy."""
    out = copy.deepcopy(dict(mapping))
    for raw in assignments:
        if "=" not in raw:
            raise ConfigError(f"override '{raw}' is not of the form path.key=value")
        path, text = raw.split("=", 1)
        keys = [k for k in path.strip().split(".") if k]
        if not keys:
            raise ConfigError(f"override '{raw}' has an empty path")
        node = out
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{raw}' descends into a non-table value")
        node[keys[-1]] = _parse_literal(text.strip())
    return out


def config_digest(mapping: Mapping) -> str:
    blob = json.dumps(mapping, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def build_state(cfg: RunConfig) -> SimState:
    theta = generate_initial(dict(cfg.theta_spec, unknown="temperature"), cfg.grid, cfg.seed)
    u = generate_initial(dict(cfg.u_spec, unknown="velocity"), cfg.grid, cfg.seed)
    return initial_state(theta, u, cfg.laws, beta=cfg.beta, cutoff=cfg.cutoff)


def environment_fingerprint() -> dict:
    """Library and platform identifiers; stable across reruns on one build."""
    return {
        "bouss2d": __version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "machine": platform.machine(),
    }


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def execute_run(cfg: RunConfig, out_dir: str | Path | None = None) -> tuple[Trajectory, Path]:
    """Run the configured simulation and write ledger.csv, snapshots, meta.json."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = build_state(cfg)
    traj = run(state, cfg.stepper, probes=cfg.probes)
    traj.ledger.write_csv(out / "ledger.csv")
    for t, snap in traj.snapshots:
        write_snapshot(out / f"snap_{t:.6f}.fld", snap.theta)
    meta = {
        "config": cfg.resolved,
        "config_sha256": config_digest(cfg.resolved),
        "constants": {
            "cutoff": traj.final.cutoff,
            "spacing": cfg.grid.spacing,
            "dt": traj.dt,
            "scheme": traj.scheme,
            "steps": len(traj.ledger) - 1,
        },
        "environment": environment_fingerprint(),
    }
    write_json(out / "meta.json", meta)
    return traj, out
