"""Command-line harness: ``cmvjump {simulate,couple,study,regime,validate}``.

Exit status: 0 success, 1 a validator or test FAILed, 2 input or
configuration error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .chaos import convergence_study, envelope_check, map_replications, run_synchronous_coupling
from .config import ConfigErrors, ExperimentConfig, config_from_dict, parse_config
from .errors import CmvError, NumericalDivergenceError
from .integrator import (
    SimConfig,
    regime_base_field,
    regime_occupation,
    regime_transition_counts,
    replication_base_field,
    simulate_finite_system,
    simulate_regime_switching,
)
from .model import (
    RegimeSpec,
    SystemicRiskParams,
    build_regime_switching,
    build_systemic_risk,
    constant_generator,
    generator_from_rates,
    state_drifts,
    validate_all,
    warn_if_unbounded,
    zero_model,
)
from .noise import Purpose, SeedSpec, StreamKey, derive_stream

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2, 3

STUDY_HEADER = ["n", "replications", "path_err_sq", "path_err_se", "w2_err_sq", "w2_err_se"]
TRAJECTORY_HEADER = ["replication", "particle", "time", "coord_index", "value", "is_jump"]
REGIME_HEADER = ["replication", "time", "regime_state"]


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    return obj


def build_model(cfg: ExperimentConfig):
    m = cfg.model
    d = cfg.sim.d
    if m.name == "systemic_risk":
        params = SystemicRiskParams(m.a, m.vol, m.jump_scale, m.lambda0, m.lambda1, m.x0_mean, m.x0_std)
        model = build_systemic_risk(params, m.lambda_bar, d=d)
    elif m.name == "zero":
        model = zero_model(d=d, x0_std=m.x0_std)
    else:
        Q = generator_from_rates(m.rates)
        H0 = m.H0 if m.H0 is not None else max(float((Q.diagonal() * -1).max()), 1.0)
        spec = RegimeSpec(m.states, constant_generator(Q), H0)
        drifts = m.drifts if m.drifts is not None else [0.0] * len(m.states)
        std = m.x0_std

        def x0(rng, size):
            return std * rng.standard_normal((int(size), d))

        model = build_regime_switching(spec, state_drifts(drifts), m.vol, d=d, x0=x0, y0=m.y0)
    overrides = {k: getattr(m, k) for k in ("K", "K0", "beta", "gamma_star") if getattr(m, k) is not None}
    if overrides:
        model.constants = dataclasses.replace(model.constants, **overrides)
    return model


def _sim_config(cfg: ExperimentConfig, model, rep: int, n: int | None = None) -> SimConfig:
    s = cfg.sim
    return SimConfig(
        T=s.T,
        dt=s.dt,
        n=s.n if n is None else n,
        d=model.d,
        k=model.k,
        l=getattr(model, "l", 1),
        seed_spec=SeedSpec(cfg.seeds.common, cfg.seeds.idiosyncratic),
        replication=rep,
        dt_noise=s.dt_noise,
        common_init=s.common_init,
    )


class Outputs:
    """Collects written files so the manifest can checksum each of them."""

    def __init__(self, directory: Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def csv(self, name: str, header, rows):
        path = self.dir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
        self.files.append(path)
        return path

    def json(self, name: str, obj):
        path = self.dir / name
        path.write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")
        self.files.append(path)
        return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _finish(out: Outputs, cfg: ExperimentConfig, command: str, summary: dict, started: float):
    """Write summary.json (deterministic) and manifest.json (adds wall-clock)."""
    deterministic = {
        "command": command,
        "config_sha256": cfg.digest(),
        "version": __version__,
        "seeds": {"common": cfg.seeds.common, "idiosyncratic": cfg.seeds.idiosyncratic},
        "files": {p.name: _sha256(p) for p in out.files},
    }
    doc = {"config": cfg.echo(), "manifest": deterministic, **summary}
    if "json" in cfg.output.formats:
        out.json("summary.json", doc)
    manifest = dict(deterministic)
    manifest["wall_clock_seconds"] = time.perf_counter() - started
    manifest["files"] = {p.name: _sha256(p) for p in out.files}
    path = out.dir / "manifest.json"
    path.write_text(json.dumps(_json_safe(manifest), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: ExperimentConfig, threads: int = 1) -> tuple[int, dict]:
    """Simulate the finite system and write long-format trajectories."""
    model = build_model(cfg)

    def one(rep):
        sc = _sim_config(cfg, model, rep)
        traj, _ = simulate_finite_system(model, sc, replication_base_field(model, sc))
        return traj

    trajs = map_replications(one, list(range(cfg.sim.R)), threads)

    def rows():
        for rep, tr in enumerate(trajs):
            jump_set = set(int(i) for i in tr.jump_index)
            for p in range(tr.states.shape[1]):
                for g, t in enumerate(tr.grid):
                    if g in jump_set:
                        for c in range(tr.states.shape[2]):
                            yield rep, p, t, c, tr.pre_jump[g][p, c], 0
                    flag = 1 if g in jump_set else 0
                    for c in range(tr.states.shape[2]):
                        yield rep, p, t, c, tr.states[g, p, c], flag

    out = _outputs(cfg)
    if "csv" in cfg.output.formats:
        out.csv("trajectories.csv", TRAJECTORY_HEADER, rows())
    summary = {
        "jump_counts": [tr.jumps.total() for tr in trajs],
        "terminal_mean": [float(tr.terminal.mean()) for tr in trajs],
    }
    return EXIT_OK, {"out": out, "summary": summary}


def _study_rows(rows):
    return [r.as_row() for r in rows]


def cmd_couple(cfg: ExperimentConfig, threads: int = 1) -> tuple[int, dict]:
    """Synchronous coupling at a single n."""
    model = build_model(cfg)
    s = cfg.sim
    if s.R < 2:
        raise ConfigErrors(["sim.R: coupling needs at least 2 replications"])
    res = run_synchronous_coupling(
        model, s.n, s.N_ref, s.index_set, s.R, SeedSpec(cfg.seeds.common, cfg.seeds.idiosyncratic),
        T=s.T, dt=s.dt, threads=threads,
    )
    out = _outputs(cfg)
    if "csv" in cfg.output.formats:
        out.csv("coupling.csv", STUDY_HEADER, [res.as_row()])
    summary = {"row": dict(zip(STUDY_HEADER, res.as_row())), "w2_sup_time": res.sup_time}
    return EXIT_OK, {"out": out, "summary": summary}


def _slope_dict(fit):
    return {"slope": fit.slope, "stderr": fit.stderr, "upper_95": fit.upper, "applicable": fit.applicable}


def cmd_study(cfg: ExperimentConfig, threads: int = 1) -> tuple[int, dict]:
    """Convergence study over the n grid."""
    model = build_model(cfg)
    s = cfg.sim
    if s.R < 2:
        raise ConfigErrors(["sim.R: a study needs at least 2 replications"])
    study = convergence_study(
        model, s.n_grid, s.N_ref, s.R, SeedSpec(cfg.seeds.common, cfg.seeds.idiosyncratic),
        T=s.T, dt=s.dt, threads=threads, proxy_check=cfg.study.proxy_check,
    )
    out = _outputs(cfg)
    if "csv" in cfg.output.formats:
        out.csv("study.csv", STUDY_HEADER, _study_rows(study.rows))
    path_dec, path_z = study.decreasing("path")
    w2_dec, w2_z = study.decreasing("w2")
    summary = {
        "slope_path": _slope_dict(study.slope_path),
        "slope_w2": _slope_dict(study.slope_w2),
        "path_decreasing": {"holds": path_dec, "z_scores": path_z},
        "w2_decreasing": {"holds": w2_dec, "z_scores": w2_z},
        "proxy_sensitivity": study.proxy_sensitivity(),
    }
    if cfg.study.envelope_k is not None:
        env = envelope_check(study, cfg.study.envelope_k, cfg.study.envelope_eps, T=s.T)
        summary["envelope"] = [vars(r) for r in env]
    return EXIT_OK, {"out": out, "summary": summary}


def cmd_regime(cfg: ExperimentConfig, threads: int = 1) -> tuple[int, dict]:
    """Simulate the regime-switching system and write regime paths."""
    model = build_model(cfg)
    if cfg.model.name != "regime_switching":
        raise ConfigErrors(["model.name: the regime command needs model.name = 'regime_switching'"])
    S = model.spec.size

    def one(rep):
        sc = _sim_config(cfg, model, rep)
        return simulate_regime_switching(model, sc, regime_base_field(model, sc))

    trajs = map_replications(one, list(range(cfg.sim.R)), threads)
    counts = np.zeros((S, S))
    holding = np.zeros(S)
    occ = []
    rows = []
    labels = model.spec.states
    for rep, tr in enumerate(trajs):
        c, h = regime_transition_counts(tr.regime_path, cfg.sim.T, S)
        counts += c
        holding += h
        occ.append(regime_occupation(tr.regime_path, cfg.sim.T, S))
        for t, y in zip(*tr.regime_path):
            rows.append((rep, t, labels[y]))
    out = _outputs(cfg)
    if "csv" in cfg.output.formats:
        out.csv("regime.csv", REGIME_HEADER, rows)
    occ = np.array(occ)
    rates = np.divide(counts, holding[:, None], out=np.zeros_like(counts), where=holding[:, None] > 0)
    summary = {
        "jumps": int(counts.sum()),
        "empirical_rates": rates,
        "occupation_mean": occ.mean(axis=0),
        "occupation_se": occ.std(axis=0, ddof=1) / math.sqrt(len(occ)) if len(occ) > 1 else None,
    }
    return EXIT_OK, {"out": out, "summary": summary}


def cmd_validate(cfg: ExperimentConfig, threads: int = 1) -> tuple[int, dict]:
    """Run the assumption validators; exit 1 if any fails."""
    model = build_model(cfg)
    rng = derive_stream(SeedSpec(cfg.seeds.common, cfg.seeds.idiosyncratic), StreamKey(0, 0, Purpose.AUX))
    reports = validate_all(model, cfg.validate_.samples, rng, strict_growth=cfg.validate_.strict_growth)
    summary = {"reports": [r.as_dict() for r in reports]}
    if cfg.model.name == "regime_switching":
        summary["drift_looks_unbounded"] = warn_if_unbounded(model, rng)
    failed = [r.name for r in reports if not r.passed]
    summary["failed"] = failed
    out = _outputs(cfg)
    for name in failed:
        print(f"FAIL {name}", file=sys.stderr)
    return (EXIT_FAIL if failed else EXIT_OK), {"out": out, "summary": summary}


COMMANDS = {
    "simulate": cmd_simulate,
    "couple": cmd_couple,
    "study": cmd_study,
    "regime": cmd_regime,
    "validate": cmd_validate,
}


def _outputs(cfg: ExperimentConfig) -> Outputs:
    return Outputs(Path(cfg.output.directory))


def _add_global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    # flags are accepted before or after the subcommand; SUPPRESS keeps the
    # subcommand copy from overwriting a value given before it
    dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", metavar="PATH", default=dflt(None), help="TOML experiment file (defaults apply when omitted)")
    p.add_argument("--seed-common", metavar="U64", default=dflt(None), help="seed of the common noise (decimal or 0x-hex)")
    p.add_argument("--seed-idio", metavar="U64", default=dflt(None), help="seed of the idiosyncratic noise")
    p.add_argument("--out-dir", metavar="PATH", default=dflt(None), help="output directory")
    p.add_argument("--threads", type=int, metavar="N", default=dflt(1), help="worker threads (outputs do not depend on N)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmvjump", description=__doc__.splitlines()[0])
    _add_global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).splitlines()[0])
        _add_global_flags(sp, suppress=True)
    return parser


def load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = parse_config(args.config)
        data = cfg.echo()
    else:
        data = {}
    if args.seed_common is not None or args.seed_idio is not None:
        seeds = dict(data.get("seeds", {}))
        if args.seed_common is not None:
            seeds["common"] = args.seed_common
        if args.seed_idio is not None:
            seeds["idiosyncratic"] = args.seed_idio
        data["seeds"] = seeds
    if args.out_dir is not None:
        data["output"] = {**data.get("output", {}), "directory": args.out_dir}
    return config_from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        if args.threads < 1:
            raise ConfigErrors(["--threads: must be >= 1"])
        cfg = load_config(args)
        status, res = COMMANDS[args.command](cfg, threads=args.threads)
        _finish(res["out"], cfg, args.command, res["summary"], started)
        return status
    except NumericalDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except CmvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
