"""Command-line experiment runner: simulate, qini, validate, token and serve"""
import argparse
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import sklearn
import yaml
from joblib import Parallel, delayed
from pydantic import ValidationError
from sklearn.model_selection import train_test_split

from . import __version__, settings
from .bandits import BanditAgent, make_cmab, make_ucmab
from .errors import ConfigurationError, UCMABError
from .estimators import make_estimator
from .evaluation import (
    RegretTrace, aggregate_traces, qini_area, qini_curve_arrays, qini_permutation_null, random_selection_line,
    write_aggregate_csv, write_qini_csv, write_trace_csv,
)
from .hillstrom import load_hillstrom_data
from .models import EmailArm, ExperimentConfig, ExperimentKind, PolicyName
from .simenv import build_environment, run_episode
from .uplift_baseline import UpliftController

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


# ============= CONFIG =============
def load_config(path: Union[str, Path], seed_override: Optional[Sequence[int]] = None) -> ExperimentConfig:
    """Parse a YAML or JSON experiment file into a validated ExperimentConfig"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must hold a mapping at the top level")
    if seed_override:
        raw["seeds"] = list(seed_override)
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config {path}:\n{exc}") from exc


def policy_seed(seed: int, policy: PolicyName) -> int:
    """Independent agent seed per (run seed, policy)"""
    index = list(PolicyName).index(policy)
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def _write_json(data: Dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_manifest(config: ExperimentConfig, out_dir: Path) -> Path:
    manifest = {
        "kind": config.kind.value,
        "seeds": config.seeds,
        "config": config.model_dump(mode="json"),
        "versions": {
            "ucmab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "scikit-learn": sklearn.__version__,
        },
    }
    return _write_json(manifest, out_dir / "manifest.json")


# ============= SIMULATE =============
def make_policy(config: ExperimentConfig, policy: PolicyName, seed: int):
    agent_seed = policy_seed(seed, policy)
    bounds = [(0.0, 1.0)] * config.env.n
    if policy == PolicyName.UCMAB:
        return BanditAgent(make_ucmab(config.bandit_config(policy), bounds, agent_seed), name=policy.value)
    if policy == PolicyName.CMAB:
        return BanditAgent(make_cmab(config.bandit_config(policy), bounds, agent_seed), name=policy.value)
    return UpliftController(config.controller_config(), seed=agent_seed)


def run_seed(config: ExperimentConfig, seed: int) -> Dict[str, RegretTrace]:
    env = build_environment(config.environment_spec(seed))
    traces = {}
    for policy in config.agents.policies:
        logger.info("seed %d: running %s for %d steps", seed, policy.value, env.horizon)
        traces[policy.value] = run_episode(env, make_policy(config, policy, seed), config.env.window)
        logger.info("seed %d: %s final windowed regret %.4f", seed, policy.value, traces[policy.value].final)
    return traces


def _segments(trace: RegretTrace) -> Dict[str, float]:
    """Mean regret before, during and after the drift markers"""
    drift = sorted(step for step, label in trace.markers if label.startswith("drift"))
    if not drift:
        return {"all": trace.mean_between(0, len(trace))}
    begin, end = drift[0], drift[-1]
    segments = {"before_drift": trace.mean_between(0, begin), "after_drift": trace.mean_between(end, len(trace))}
    if end > begin:
        segments["during_drift"] = trace.mean_between(begin, end)
    return segments


def run_simulate(config: ExperimentConfig, out_dir: Union[str, Path], jobs: int = 1) -> Dict[str, Any]:
    out_dir = Path(out_dir)
    write_manifest(config, out_dir)
    results: List[Dict[str, RegretTrace]] = Parallel(n_jobs=jobs)(
        delayed(run_seed)(config, seed) for seed in config.seeds
    )

    summary: Dict[str, Any] = {"kind": "simulate", "seeds": config.seeds, "window": config.env.window, "policies": {}}
    for policy in config.agents.policies:
        name = policy.value
        traces = [r[name] for r in results]
        for seed, trace in zip(config.seeds, traces):
            write_trace_csv(trace, out_dir / f"{name}_seed{seed}.csv")
        write_aggregate_csv(aggregate_traces(traces), out_dir / f"{name}_trace.csv")
        entry = {
            "mean_final_window_regret": float(np.mean([t.final for t in traces])),
            "final_window_regret": {str(s): t.final for s, t in zip(config.seeds, traces)},
            "mean_regret": float(np.mean([t.regret.mean() for t in traces])),
            "segments": {k: float(np.mean([_segments(t)[k] for t in traces])) for k in _segments(traces[0])},
        }
        if policy == PolicyName.URF:
            entry["deployments"] = {str(s): sum(1 for _, e in t.markers if e == "deployed")
                                    for s, t in zip(config.seeds, traces)}
            entry["detections"] = {str(s): sum(1 for _, e in t.markers if e == "collecting")
                                   for s, t in zip(config.seeds, traces)}
        summary["policies"][name] = entry
    _write_json(summary, out_dir / "summary.json")
    logger.info("wrote simulate results for %d seeds to %s", len(config.seeds), out_dir)
    return summary


# ============= QINI =============
def qini_run(config: ExperimentConfig, arm: EmailArm, seed: int, out_dir: Path) -> Dict[str, Any]:
    section = config.qini
    data, metadata = load_hillstrom_data(section.dataset, section.response_field, arm)
    index = np.arange(len(data))
    train_idx, test_idx = train_test_split(
        index, test_size=section.holdout_fraction, random_state=seed, stratify=data.arm,
    )
    train, test = data.take(np.sort(train_idx)), data.take(np.sort(test_idx))

    estimator = make_estimator(section.estimator, section.forest, seed)
    estimator.fit(train.X, train.arm, train.y)
    score = estimator.predict_uplift(test.X)

    curve = qini_curve_arrays(score, test.arm, test.y, section.bins)
    area = qini_area(curve, random_selection_line(curve[-1].q, section.bins))
    write_qini_csv(curve, out_dir / f"qini_{arm.value}_seed{seed}.csv")

    entry = {
        "treatment_arm": arm.value,
        "seed": seed,
        "estimator": section.estimator.value,
        "qini_area": area,
        "final_q": curve[-1].q,
        "n_train": len(train),
        "n_holdout": len(test),
        "features": metadata.to_dict(),
    }
    if section.permutations > 0:
        null = qini_permutation_null(score, test.arm, test.y, section.bins, section.permutations, seed)
        entry["null_p95"] = float(np.percentile(null, 95))
        entry["exceeds_null_p95"] = bool(area > entry["null_p95"])
    logger.info("%s seed %d: qini area %.6f", arm.value, seed, area)
    return entry


def run_qini(config: ExperimentConfig, out_dir: Union[str, Path], jobs: int = 1) -> Dict[str, Any]:
    out_dir = Path(out_dir)
    write_manifest(config, out_dir)
    jobs_list = [(arm, seed) for arm in config.qini.treatment_arms for seed in config.seeds]
    runs = Parallel(n_jobs=jobs)(delayed(qini_run)(config, arm, seed, out_dir) for arm, seed in jobs_list)
    summary = {"kind": "qini", "seeds": config.seeds, "runs": runs}
    _write_json(summary, out_dir / "summary.json")
    return summary


def validate(config: ExperimentConfig) -> None:
    """Checks that go beyond the schema: surfaces stay in [0, 1] and the dataset exists"""
    if config.kind == ExperimentKind.SIMULATE:
        for seed in config.seeds:
            build_environment(config.environment_spec(seed))
    elif not Path(config.qini.dataset).is_file():
        raise ConfigurationError(f"dataset {config.qini.dataset} does not exist")


# ============= ENTRY POINT =============
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ucmab", description="Uplifted contextual bandit experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("simulate", "Run drift simulations"), ("qini", "Run the Hillstrom qini experiment"),
                            ("validate", "Validate a config without running it")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", type=Path)
        cmd.add_argument("--seed-override", type=int, nargs="+", help="Replace the config's seeds")
        if name != "validate":
            cmd.add_argument("--out", type=Path, help="Output directory")
            cmd.add_argument("--jobs", type=int, default=None, help="Parallel seeds (default UCMAB_JOBS)")

    token = sub.add_parser("token", help="Mint an operator token for the decision service")
    token.add_argument("--subject", default="operator")
    token.add_argument("--expires-minutes", type=int, default=60)

    serve = sub.add_parser("serve", help="Run the decision service")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=10000)
    return parser


def _run(args: argparse.Namespace) -> None:
    if args.command == "token":
        from web.security import create_operator_token
        print(create_operator_token(args.subject, args.expires_minutes))
        return
    if args.command == "serve":
        import uvicorn
        uvicorn.run("main:app", host=args.host, port=args.port, reload=False)
        return

    config = load_config(args.config, args.seed_override)
    if args.command == "validate":
        validate(config)
        print(f"{args.config}: ok")
        return
    if config.kind.value != args.command:
        raise ConfigurationError(f"{args.config} is a {config.kind.value} config, not {args.command}")
    out_dir = args.out or config.output_dir or Path(settings.OUTPUT_DIR)
    jobs = args.jobs or settings.JOBS
    if args.command == "simulate":
        run_simulate(config, out_dir, jobs)
    else:
        run_qini(config, out_dir, jobs)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging(logging.DEBUG if args.verbose else None)
    try:
        _run(args)
    except ConfigurationError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except (UCMABError, OSError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
