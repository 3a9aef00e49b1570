"""Command-line entry points.

Subcommands: train, verify, probe-consistency, probe-doob, probe-transition,
ablate, report.  Every run directory gets a manifest (resolved config, seed,
package version, output paths, per-phase wall-clock timings) next to its
artifacts.  Exit codes: 0 success, 1 config/usage error, 2 verification
failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__, geometry, probes
from .config import apply_overrides, config_from_doc, config_to_doc, load_config, save_config
from .policy import exact_response_entropy, load_checkpoint, pathwise_entropy, random_policy
from .trainer import TrainConfig, load_metrics, masked_train, train


class CliError(Exception):
    """Config or usage problem: maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse default exits with 2
        raise CliError(message)


def _write_manifest(out_dir: str, command: str, config_doc: dict | None, seed: int,
                    outputs: list[str], timings: dict[str, float]) -> None:
    doc = {
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config_doc,
        "outputs": outputs,
        "timings": timings,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_config(args: argparse.Namespace) -> TrainConfig:
    doc = config_to_doc(load_config(args.config)) if args.config else config_to_doc(TrainConfig())
    doc = apply_overrides(doc, args.set or [])
    return config_from_doc(doc)


def cmd_train(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    os.makedirs(args.out, exist_ok=True)
    save_config(config, os.path.join(args.out, "config.json"))
    metrics_path = os.path.join(args.out, "metrics.jsonl")
    if args.mask_sign is not None:
        result = masked_train(config, args.mask_sign, metrics_path=metrics_path, checkpoint_dir=args.out)
    else:
        result = train(config, metrics_path=metrics_path, checkpoint_dir=args.out)
    outputs = sorted(f for f in os.listdir(args.out) if f != "manifest.json")
    _write_manifest(args.out, "train", config_to_doc(config), config.seed, outputs, result.timings)
    final = result.metrics[-1]
    print(f"trained {config.steps} steps: success_rate={final.success_rate:.3f} "
          f"entropy={final.policy_entropy_estimate:.4f} mean_reward={final.mean_reward:.3f}")
    return 0


def _nesting_reports(trials: int, rng: np.random.Generator, tol_abs: float) -> list[dict]:
    reports = []
    for _ in range(trials):
        vocab_size = int(rng.integers(2, 5))
        max_len = int(rng.integers(2, 5))
        policy = random_policy(vocab_size, max_len, rng)
        route_a = exact_response_entropy(policy, "s")
        route_b = pathwise_entropy(policy, "s")
        err = abs(route_a - route_b)
        reports.append({
            "kind": "nesting",
            "analytic": route_a,
            "finite_difference": route_b,
            "abs_error": err,
            "rel_error": err / abs(route_a) if route_a != 0.0 else float("inf"),
            "ok": err <= tol_abs,
        })
    return reports


def cmd_verify(args: argparse.Namespace) -> int:
    kinds = ["resp", "regularized", "parametrized", "nesting"] if args.kind == "all" else [args.kind]
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    rows: list[dict] = []
    for kind in kinds:
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, kinds.index(kind)]))
        if kind == "nesting":
            rows.extend(_nesting_reports(args.trials, rng, tol_abs=1e-10))
        else:
            reports = geometry.verify_drift_fd(
                kind, args.trials, rng,
                fd_step=args.fd_step, tol_rel=args.tol_rel, tol_abs=args.tol_abs,
            )
            rows.extend(dataclasses.asdict(r) for r in reports)
    with open(os.path.join(args.out, "reports.jsonl"), "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")
    n_fail = sum(1 for row in rows if not row["ok"])
    summary = {
        "kinds": kinds,
        "trials_per_kind": args.trials,
        "n_reports": len(rows),
        "n_fail": n_fail,
        "max_abs_error": max(row["abs_error"] for row in rows),
    }
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out, "verify", None, args.seed, ["reports.jsonl", "summary.json"],
                    {"total": time.perf_counter() - t0})
    print(f"verify {'+'.join(kinds)}: {len(rows)} reports, {n_fail} failures")
    return 0 if n_fail == 0 else 2


def _env_from_config(config: TrainConfig):
    from .envs import make_env

    return make_env(config.env_kind, seed=config.env_seed, **config.env_overrides)


def cmd_probe_consistency(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    policy = load_checkpoint(args.checkpoint)
    env = _env_from_config(config)
    states = probes.reachable_states(env)
    rng = np.random.default_rng(args.seed)
    if len(states) > args.states:
        idx = rng.permutation(len(states))[: args.states]
        states = [states[int(i)] for i in sorted(idx)]
    report = probes.consistency_probe(policy, states, args.samples, rng,
                                      lam=config.aem_lambda, eps=config.aem_eps)
    os.makedirs(args.out, exist_ok=True)
    doc = dataclasses.asdict(report)
    pairs = doc.pop("pairs")
    with open(os.path.join(args.out, "consistency.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(args.out, "pairs.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha_minus_one", "mc_entropy_change"])
        writer.writerows(pairs)
    _write_manifest(args.out, "probe-consistency", config_to_doc(config), args.seed,
                    ["consistency.json", "pairs.csv"], {})
    print(f"consistency: r={report.pearson_r:.4f} ci=[{report.ci_low:.4f}, {report.ci_high:.4f}] "
          f"sign_agreement={report.sign_agreement:.3f} over {report.n_sign_pairs} pairs")
    return 0


def cmd_probe_doob(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    policy = load_checkpoint(args.checkpoint)
    env = _env_from_config(config)
    states = probes.reachable_states(env)
    state = args.state if args.state else states[0]
    rng = np.random.default_rng(args.seed)
    report = probes.doob_probe(policy, state, args.samples, rng)
    exact = probes.doob_exact_residuals(policy, state)
    os.makedirs(args.out, exist_ok=True)
    doc = dataclasses.asdict(report)
    doc["exact_residual_max"] = max(abs(v) for v in exact.values())
    with open(os.path.join(args.out, "doob.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out, "probe-doob", config_to_doc(config), args.seed, ["doob.json"], {})
    print(f"doob at {state}: mean={report.residual_mean:.6f} stderr={report.residual_stderr:.6f} "
          f"ok={report.ok}")
    return 0 if report.ok else 2


def cmd_probe_transition(args: argparse.Namespace) -> int:
    baseline = load_metrics(os.path.join(args.baseline, "metrics.jsonl"))
    modulated = load_metrics(os.path.join(args.modulated, "metrics.jsonl"))
    summary = probes.transition_tracker(baseline, modulated)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "transition.json"), "w") as fh:
        json.dump(dataclasses.asdict(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(args.out, "transition.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "baseline_entropy", "modulated_entropy",
                         "baseline_success", "modulated_success"])
        for step, (b, m) in enumerate(zip(baseline, modulated)):
            writer.writerow([step, b["policy_entropy_estimate"], m["policy_entropy_estimate"],
                             b["success_rate"], m["success_rate"]])
    _write_manifest(args.out, "probe-transition", None, 0, ["transition.json", "transition.csv"], {})
    print(f"transition: early entropy {summary.baseline_early_entropy:.4f} -> "
          f"{summary.modulated_early_entropy:.4f}, late {summary.baseline_late_entropy:.4f} -> "
          f"{summary.modulated_late_entropy:.4f}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    variants = args.variants.split(",")
    seeds = [int(s) for s in args.seeds.split(",")]
    os.makedirs(args.out, exist_ok=True)
    results_path = os.path.join(args.out, "results.csv")
    rows = []
    with open(results_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "n_seeds", "success_mean", "success_std",
                         "reward_mean", "reward_std"])
        fh.flush()
        for variant in variants:
            successes, rewards = [], []
            for seed in seeds:
                doc = config_to_doc(config)
                doc["aem_mode"] = variant
                doc["seed"] = seed
                run_cfg = config_from_doc(doc)
                run_dir = os.path.join(args.out, f"{variant}_seed{seed}")
                os.makedirs(run_dir, exist_ok=True)
                result = train(run_cfg, metrics_path=os.path.join(run_dir, "metrics.jsonl"))
                q = max(1, len(result.metrics) // 4)
                successes.append(sum(m.success_rate for m in result.metrics[-q:]) / q)
                rewards.append(sum(m.mean_reward for m in result.metrics[-q:]) / q)
            row = [variant, len(seeds),
                   float(np.mean(successes)), float(np.std(successes, ddof=1) if len(seeds) > 1 else 0.0),
                   float(np.mean(rewards)), float(np.std(rewards, ddof=1) if len(seeds) > 1 else 0.0)]
            rows.append(row)
            writer.writerow(row)
            fh.flush()
    _write_manifest(args.out, "ablate", config_to_doc(config), config.seed, ["results.csv"], {})
    for row in rows:
        print(f"{row[0]}: success {row[2]:.3f} +/- {row[3]:.3f}, reward {row[4]:.3f} +/- {row[5]:.3f}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for run_dir in args.run:
        name = os.path.basename(os.path.normpath(run_dir))
        metrics = load_metrics(os.path.join(run_dir, "metrics.jsonl"))
        series_path = os.path.join(args.out, f"{name}_series.csv")
        with open(series_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "entropy", "success_rate", "mean_reward",
                             "mean_alpha", "frac_positive_advantage"])
            for m in metrics:
                writer.writerow([m["step"], m["policy_entropy_estimate"], m["success_rate"],
                                 m["mean_reward"], m["mean_alpha"], m["frac_positive_advantage"]])
        scatter_path = os.path.join(args.out, f"{name}_alpha_scatter.csv")
        with open(scatter_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "group", "rollout", "turn", "h_bar", "h_tilde", "alpha", "advantage"])
            for m in metrics:
                for g, i, t, h_bar, h_tilde, alpha, adv in m["spans"]:
                    writer.writerow([m["step"], g, i, t, h_bar,
                                     "" if h_tilde is None else h_tilde, alpha, adv])
        outputs.extend([os.path.basename(series_path), os.path.basename(scatter_path)])
        verify_path = os.path.join(run_dir, "summary.json")
        if os.path.exists(verify_path):
            with open(verify_path) as fh:
                summary = json.load(fh)
            out_path = os.path.join(args.out, f"{name}_verify_summary.json")
            with open(out_path, "w") as vh:
                json.dump(summary, vh, indent=2, sort_keys=True)
                vh.write("\n")
            outputs.append(os.path.basename(out_path))
    _write_manifest(args.out, "report", None, 0, outputs, {})
    print(f"report: wrote {len(outputs)} files to {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="entlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p: _Parser) -> None:
        p.add_argument("--config", help="experiment config file (JSON)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (dot paths for nesting)")

    p = sub.add_parser("train", help="run a training loop")
    add_config_args(p)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--mask-sign", type=int, choices=(1, -1), default=None,
                   help="drop spans with this sgn(A * (alpha - 1)) from updates")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="check drift identities against finite differences")
    p.add_argument("--kind", choices=("resp", "regularized", "parametrized", "nesting", "all"),
                   default="all")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fd-step", type=float, default=geometry.DEFAULT_FD_STEP)
    p.add_argument("--tol-rel", type=float, default=geometry.DEFAULT_REL_TOL)
    p.add_argument("--tol-abs", type=float, default=geometry.DEFAULT_ABS_TOL)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("probe-consistency", help="coefficient vs MC entropy-change consistency")
    add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--states", type=int, default=64)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe_consistency)

    p = sub.add_parser("probe-doob", help="martingale residuals of the surprisal decomposition")
    add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--state", default=None, help="policy state key (default: first reachable)")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe_doob)

    p = sub.add_parser("probe-transition", help="compare a baseline run against a modulated run")
    p.add_argument("--baseline", required=True, help="baseline run directory")
    p.add_argument("--modulated", required=True, help="modulated run directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe_transition)

    p = sub.add_parser("ablate", help="train every modulation variant over seeds")
    add_config_args(p)
    p.add_argument("--variants", default="off,aem,reverse,shuffle,traj_norm,batch_norm")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="emit CSV series from run directories")
    p.add_argument("--run", action="append", required=True, help="run directory (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
