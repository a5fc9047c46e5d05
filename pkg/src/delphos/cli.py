"""Command-line surface: simulate, estimate, search, report.

Exit codes: 0 success, 2 user error, 3 runtime abort. Progress goes to
stderr; results go to files (plus a one-line summary where stated). The
``DELPHOS_SEED`` environment variable overrides the search config seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .agent import AgentConfig
from .dataset import CsvSchema, load_wide_csv, save_wide_csv, split_holdout
from .estimator import OptimizerSettings, build_design, estimate, null_log_likelihood
from .reward import BehaviouralConstraint, NormalizationTracker, RewardConfig, episode_reward
from .search import (
    RunConfig,
    SearchAborted,
    read_episodes_csv,
    run_search,
    summarise,
    write_best_json,
    write_episodes_csv,
    write_models_jsonl,
    write_pareto_csv,
)
from .space import ModellingSpace, ModelSpec, canonical_key, space_size, validate_spec
from .synthetic import generate, get_case
from .transforms import TRANSFORMS


class UserError(Exception):
    """Bad input from the operator; maps to exit code 2."""


_TOP_KEYS = {
    "dataset", "schema", "split", "seed", "episodes", "min_episodes",
    "search_window", "stop_threshold", "agent", "reward", "space",
    "optimizer", "pareto_objective", "reference", "out_dir",
}
_AGENT_KEYS = {
    "layers", "units", "learning_rate", "gamma", "buffer_capacity",
    "target_update", "batch_size", "eps_start", "eps_end", "eps_decay_frac",
    "grad_clip",
}
_REWARD_KEYS = {"weights", "constraints"}
_SPACE_KEYS = {"n_attrs", "asc_enabled", "transforms", "tastes", "covariates", "max_steps"}
_OPT_KEYS = {"grad_tol", "max_iter", "time_budget_s", "hess_step", "armijo_c"}
_SPLIT_KEYS = {"in_sample_frac", "seed"}


def _check_keys(doc: dict, allowed: set, where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise UserError(f"unknown key(s) {sorted(unknown)} in {where}")


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise UserError(f"missing required key {key!r} in {where}")
    return doc[key]


def load_run_config(path) -> dict:
    """Parse and validate a run-configuration JSON document."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise UserError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UserError(f"malformed config JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise UserError("config root must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "config")
    _require(doc, "dataset", "config")
    _check_keys(_require(doc, "space", "config"), _SPACE_KEYS, "config.space")
    _check_keys(_require(doc, "reward", "config"), _REWARD_KEYS, "config.reward")
    _check_keys(doc.get("agent", {}), _AGENT_KEYS, "config.agent")
    _check_keys(doc.get("optimizer", {}), _OPT_KEYS, "config.optimizer")
    if doc.get("split") is not None:
        _check_keys(doc["split"], _SPLIT_KEYS, "config.split")
    return doc


def build_run_config(doc: dict) -> RunConfig:
    agent = AgentConfig(**doc.get("agent", {}))
    reward_doc = doc["reward"]
    constraints = tuple(
        BehaviouralConstraint(target=c["target"], expected_sign=c["sign"])
        for c in reward_doc.get("constraints", [])
    )
    reward = RewardConfig(
        weights=dict(reward_doc["weights"]), constraints=constraints, gamma=agent.gamma
    )
    seed = int(doc.get("seed", 0))
    if os.environ.get("DELPHOS_SEED"):
        seed = int(os.environ["DELPHOS_SEED"])
    return RunConfig(
        space=ModellingSpace.from_json(doc["space"]),
        reward=reward,
        agent=agent,
        episodes=int(doc.get("episodes", 10_000)),
        min_episodes=doc.get("min_episodes"),
        search_window=int(doc.get("search_window", 100)),
        stop_threshold=float(doc.get("stop_threshold", 0.05)),
        seed=seed,
        optimizer=OptimizerSettings(**doc.get("optimizer", {})),
        pareto_objective=doc.get("pareto_objective", "aic"),
    )


def _load_schema(path) -> CsvSchema | None:
    if path is None:
        return None
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return CsvSchema(
        choice=doc.get("choice", "choice"),
        attrs=doc.get("attrs", {}),
        covs=doc.get("covs", []),
        avail=doc.get("avail"),
    )


def _training_dataset(doc: dict, base: Path):
    path = Path(doc["dataset"])
    if not path.is_absolute():
        path = base / path
    schema = None
    if isinstance(doc.get("schema"), dict):
        schema = CsvSchema(
            choice=doc["schema"].get("choice", "choice"),
            attrs=doc["schema"].get("attrs", {}),
            covs=doc["schema"].get("covs", []),
            avail=doc["schema"].get("avail"),
        )
    ds = load_wide_csv(path, schema)
    split = doc.get("split")
    if split:
        ds, _ = split_holdout(ds, float(split["in_sample_frac"]), int(split.get("seed", 0)))
    return ds


def _load_reference_spec(path) -> ModelSpec:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return ModelSpec.from_json(doc["spec"] if "spec" in doc else doc)


def cmd_simulate(args) -> int:
    try:
        case = get_case(args.case)
    except KeyError as exc:
        raise UserError(str(exc.args[0])) from exc
    ds, truth = generate(case, args.n, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_wide_csv(ds, out / "data.csv")
    with open(out / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=2)
    print(f"wrote {out / 'data.csv'} and {out / 'truth.json'}", file=sys.stderr)
    return 0


def cmd_estimate(args) -> int:
    ds = load_wide_csv(args.data, _load_schema(args.schema))
    try:
        with open(args.spec, encoding="utf-8") as fh:
            spec_doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UserError(
            f"malformed spec JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    spec = ModelSpec.from_json(spec_doc)
    if args.space:
        with open(args.space, encoding="utf-8") as fh:
            space = ModellingSpace.from_json(json.load(fh))
    else:
        space = ModellingSpace(
            n_attrs=ds.n_attrs,
            asc_enabled=True,
            transforms=TRANSFORMS,
            tastes=("generic", "specific"),
            covariates=tuple(range(ds.n_covs)),
        )
    try:
        validate_spec(space, spec)
        design = build_design(spec, space, ds)
    except ValueError as exc:
        raise UserError(f"spec incompatible with dataset: {exc}") from exc
    outcome = estimate(design, ds, OptimizerSettings())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(outcome.to_json(), fh, indent=2)
    print(
        f"LL={outcome.ll:.6f} AIC={outcome.aic:.6f} BIC={outcome.bic:.6f} "
        f"converged={outcome.converged}"
    )
    return 0


def _write_search_artifacts(out: Path, result, summary: dict, doc: dict) -> None:
    write_episodes_csv(result.records, out / "episodes.csv")
    write_models_jsonl(result.cache, out / "models.jsonl")
    write_best_json(result, out / "best.json")
    write_pareto_csv(result.pareto, result.config.pareto_objective, out / "pareto.csv")
    summary_doc = {
        "summary": summary,
        "reward_config": result.config.reward.to_json(),
        "tracker": result.tracker_state,
        "episodes_run": len(result.records),
        "stopped_early": result.stopped_early,
        "wall_s": result.wall_s,
        "seed": result.config.seed,
        "space_size": space_size(result.config.space),
        "estimations": result.cache.n_estimations,
        "cache_hits": result.cache.n_hits,
        "actions": result.action_counts,
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary_doc, fh, indent=2)
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


def cmd_search(args) -> int:
    doc = load_run_config(args.config)
    base = Path(args.config).resolve().parent
    cfg = build_run_config(doc)
    ds = _training_dataset(doc, base)
    out = Path(args.out or doc.get("out_dir") or "run")
    if not out.is_absolute() and not args.out:
        out = base / out
    out.mkdir(parents=True, exist_ok=True)

    def progress(episode, rolling, best, unique):
        print(
            f"[episode {episode}] reward(rolling)={rolling:.4f} "
            f"best={best:.4f} unique={unique}",
            file=sys.stderr,
        )

    try:
        result = run_search(cfg, ds, progress=progress)
    except SearchAborted as exc:
        exc.agent.policy.save(out / "checkpoint.json")
        print(f"search aborted: {exc}", file=sys.stderr)
        print(f"checkpoint preserved at {out / 'checkpoint.json'}", file=sys.stderr)
        return 3

    reference = None
    if doc.get("reference"):
        ref_path = Path(doc["reference"])
        if not ref_path.is_absolute():
            ref_path = base / ref_path
        ref_spec = _load_reference_spec(ref_path)
        ref_key = canonical_key(ref_spec)
        ref_outcome = result.cache.outcome(ref_key)
        if ref_outcome is None:
            ref_outcome = estimate(build_design(ref_spec, cfg.space, ds), ds, cfg.optimizer)
        reference = (ref_spec, ref_outcome)

    summary = summarise(result, reference)
    _write_search_artifacts(out, result, summary, doc)
    if result.policy is not None:
        result.policy.save(out / "checkpoint.json")
    print(f"run complete: {len(result.records)} episodes, artifacts in {out}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    episodes_path = run_dir / "episodes.csv"
    models_path = run_dir / "models.jsonl"
    summary_path = run_dir / "summary.json"
    for p in (episodes_path, models_path, summary_path):
        if not p.exists():
            raise UserError(f"missing run artifact: {p}")
    records = read_episodes_csv(episodes_path)
    models = {}
    with open(models_path, encoding="utf-8") as fh:
        for line in fh:
            doc = json.loads(line)
            models[doc["key"]] = doc
    with open(summary_path, encoding="utf-8") as fh:
        summary_doc = json.load(fh)

    unique = len(models)
    converged = sum(1 for doc in models.values() if doc["outcome"]["converged"])
    last = records[-100:]
    last_rewards = np.array([r.reward for r in last])
    report = {
        "unique_models": unique,
        "converged_pct": 100.0 * converged / unique if unique else 0.0,
        "first_recovery": None,
        "reward_last100": float(last_rewards.mean()) if last_rewards.size else 0.0,
        "delta_vs_reference": None,
        "rmse_vs_reference": None,
    }
    if args.reference:
        ref_spec = _load_reference_spec(args.reference)
        ref_key = canonical_key(ref_spec)
        for r in records:
            if r.key == ref_key:
                report["first_recovery"] = r.episode
                break
        ref_reward = None
        if ref_key in models:
            from .estimator import EstimationOutcome

            outcome = EstimationOutcome.from_json(models[ref_key]["outcome"])
            config = RewardConfig(
                weights=summary_doc["reward_config"]["weights"],
                constraints=tuple(
                    BehaviouralConstraint(target=c["target"], expected_sign=c["sign"])
                    for c in summary_doc["reward_config"]["constraints"]
                ),
                gamma=summary_doc["reward_config"]["gamma"],
            )
            tracker = NormalizationTracker(**summary_doc["tracker"])
            ref_reward = episode_reward(outcome, config, tracker)
        elif summary_doc.get("summary", {}).get("reference_reward") is not None:
            ref_reward = summary_doc["summary"]["reference_reward"]
        if ref_reward is not None and last_rewards.size:
            report["delta_vs_reference"] = float(last_rewards.mean() - ref_reward)
            report["rmse_vs_reference"] = float(
                np.sqrt(np.mean((last_rewards - ref_reward) ** 2))
            )

    for key, value in report.items():
        shown = "absent" if value is None else value
        print(f"{key}: {shown}")
    with open(run_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delphos",
        description="Utility-specification search for discrete choice models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic choice dataset")
    p.add_argument("--case", required=True, help="S1, S2, or S3")
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("estimate", help="fit one specification by maximum likelihood")
    p.add_argument("--data", required=True)
    p.add_argument("--spec", required=True, help="specification JSON file")
    p.add_argument("--schema", default=None, help="CSV column-mapping JSON")
    p.add_argument("--space", default=None, help="modelling space JSON")
    p.add_argument("--out", default=None, help="outcome JSON path")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("search", help="run the full specification search")
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("report", help="summarise a completed run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--reference", default=None, help="truth/spec JSON for recovery metrics")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
