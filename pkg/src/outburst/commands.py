"""Command implementations behind the CLI.

Each command validates its config, runs replications (in-process or in a
process pool), writes artifacts plus a manifest listing them, and returns an
exit code: 0 success, 1 config error, 2 check failure. Artifact bytes depend
only on (config, seed), never on the pool size.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from . import __version__
from .config import ConfigError, ExperimentConfig, RunManifest
from .dynamics import init, run_until
from .estimators import estimate_mu, shape_report
from .eventlog import render_event_log, replay_check_file
from .seeds import TAG_REPLICATION, derive_rng, derive_seed


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _pool_map(workers: int) -> Callable[..., Iterable]:
    if workers <= 1:
        return map

    def parallel_map(fn, *iterables):
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, *iterables))

    return parallel_map


def _write_manifest(
    out: Path, command: str, cfg: ExperimentConfig, seeds: list[int], artifacts: list[str], started: str
) -> None:
    manifest = RunManifest(
        command=command,
        config=cfg.to_dict(),
        replication_seeds=seeds,
        artifacts=sorted(artifacts),
        started_at=started,
        finished_at=_utcnow(),
        engine_version=__version__,
    )
    manifest.write(out / f"{command}_manifest.json")


def _simulate_one(args: tuple) -> list[tuple[str, str]]:
    cfg_dict, rep, seed = args
    cfg = ExperimentConfig(**cfg_dict)
    law = cfg.law()
    state = init(cfg.initial(), law, cfg.dimension, seed=seed)
    if cfg.stepper == "thinning":
        from .dynamics import PoissonField

        run_until(
            state, t_max=cfg.t_max, n_max=cfg.n_max, stepper="thinning",
            field=PoissonField(seed, law, cfg.dimension),
        )
    else:
        run_until(
            state, t_max=cfg.t_max, n_max=cfg.n_max, stepper="rate",
            rng=derive_rng(seed), target_rel_error=cfg.target_rel_error,
        )
    files = [(f"rep{rep:04d}.csv", render_event_log(state))]
    for k, t in enumerate(cfg.snapshot_times or []):
        files.append((f"rep{rep:04d}_snap{k}.csv", render_event_log(state, t_limit=t)))
    return files


def cmd_simulate(cfg: ExperimentConfig) -> int:
    if cfg.t_max is None and cfg.n_max is None:
        raise ConfigError("simulate needs t_max and/or n_max")
    started = _utcnow()
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    seeds = [derive_seed(cfg.seed, TAG_REPLICATION, r) for r in range(cfg.replications)]
    tasks = [(cfg.to_dict(), r, s) for r, s in enumerate(seeds)]
    artifacts = []
    for files in _pool_map(cfg.workers)(_simulate_one, tasks):
        for name, text in files:
            (out / name).write_text(text)
            artifacts.append(name)
    _write_manifest(out, "simulate", cfg, seeds, artifacts, started)
    print(f"simulate: wrote {len(artifacts)} file(s) to {out}")
    return 0


def cmd_estimate_mu(cfg: ExperimentConfig) -> int:
    if cfg.distances is None:
        raise ConfigError("estimate-mu needs 'distances'")
    started = _utcnow()
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    direction = cfg.direction or [1.0] + [0.0] * (cfg.dimension - 1)
    estimate = estimate_mu(
        direction=direction,
        distances=cfg.distances,
        reps=cfg.replications,
        law=cfg.law(),
        d=cfg.dimension,
        seed=cfg.seed,
        stepper=cfg.stepper,
        initial=cfg.initial(),
        net_resolution=cfg.net_resolution,
        event_cap=cfg.event_cap,
        pool_map=_pool_map(cfg.workers),
    )
    name = "mu_estimate.json"
    (out / name).write_text(json.dumps(estimate.to_dict(), indent=2, sort_keys=True) + "\n")
    seeds = [
        derive_seed(cfg.seed, TAG_REPLICATION, i, rep)
        for i in range(len(cfg.distances))
        for rep in range(cfg.replications)
    ]
    _write_manifest(out, "estimate-mu", cfg, seeds, [name], started)
    print(
        f"estimate-mu: mu_hat={estimate.mu_hat:.6g} "
        f"ci=[{estimate.ci_low:.6g}, {estimate.ci_high:.6g}]"
        + (" (degenerate CI: <2 replications)" if estimate.degenerate else "")
    )
    return 0


def _resolve_mu(cfg: ExperimentConfig) -> float:
    if cfg.mu is not None:
        return cfg.mu
    if cfg.mu_file is not None:
        try:
            data = json.loads(Path(cfg.mu_file).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"mu_file: cannot read {cfg.mu_file}: {exc}") from exc
        if "mu_hat" not in data:
            raise ConfigError(f"mu_file: {cfg.mu_file} has no 'mu_hat' key")
        return float(data["mu_hat"])
    raise ConfigError("shape-test needs 'mu' or 'mu_file'")


def _shape_one(args: tuple) -> dict:
    cfg_dict, rep, seed, mu = args
    cfg = ExperimentConfig(**cfg_dict)
    law = cfg.law()
    state = init(cfg.initial(), law, cfg.dimension, seed=seed)
    if cfg.stepper == "thinning":
        from .dynamics import PoissonField

        run_until(state, t_max=cfg.t_max, field=PoissonField(seed, law, cfg.dimension))
    else:
        run_until(
            state, t_max=cfg.t_max, stepper="rate", rng=derive_rng(seed),
            target_rel_error=cfg.target_rel_error,
        )
    net_resolution = cfg.net_resolution if cfg.net_resolution is not None else law.gamma / 4
    report = shape_report(state, mu, cfg.epsilon, net_resolution)
    return {"replication": rep, "n_events": state.n_events, **report.to_dict()}


def cmd_shape_test(cfg: ExperimentConfig) -> int:
    mu = _resolve_mu(cfg)
    if cfg.t_max is None:
        raise ConfigError("shape-test needs 't_max'")
    if cfg.epsilon is None:
        raise ConfigError("shape-test needs 'epsilon'")
    started = _utcnow()
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    seeds = [derive_seed(cfg.seed, TAG_REPLICATION, r) for r in range(cfg.replications)]
    tasks = [(cfg.to_dict(), r, s, mu) for r, s in enumerate(seeds)]
    reports = list(_pool_map(cfg.workers)(_shape_one, tasks))
    artifacts = []
    for rep, report in enumerate(reports):
        name = f"shape_rep{rep:04d}.json"
        (out / name).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        artifacts.append(name)
    both = [r["inner_ok"] and r["outer_ok"] for r in reports]
    summary = {
        "mu": mu,
        "epsilon": cfg.epsilon,
        "t": cfg.t_max,
        "replications": cfg.replications,
        "pass_fraction": sum(both) / len(both),
        "inner_fraction": sum(r["inner_ok"] for r in reports) / len(reports),
        "outer_fraction": sum(r["outer_ok"] for r in reports) / len(reports),
    }
    name = "shape_summary.json"
    (out / name).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    artifacts.append(name)
    _write_manifest(out, "shape-test", cfg, seeds, artifacts, started)
    print(
        f"shape-test: pass_fraction={summary['pass_fraction']:.2f} "
        f"(inner {summary['inner_fraction']:.2f}, outer {summary['outer_fraction']:.2f})"
    )
    return 0


def cmd_replay_check(paths: list[str]) -> int:
    failures = 0
    checked = 0
    for raw in paths:
        p = Path(raw)
        files = sorted(p.glob("rep*.csv")) if p.is_dir() else [p]
        if not files:
            print(f"replay-check: no event logs under {p}")
            failures += 1
        for f in files:
            report = replay_check_file(f)
            checked += 1
            if report.ok:
                print(f"replay-check: OK   {f} ({report.n_events} events)")
            else:
                failures += 1
                print(f"replay-check: FAIL {f}")
                for problem in report.problems:
                    print(f"  - {problem}")
    if checked == 0:
        return 1
    return 2 if failures else 0
