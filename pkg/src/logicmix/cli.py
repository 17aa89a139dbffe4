"""Command-line entry points: train, eval, explain, inspect-rules.

Every config key can be overridden with ``--dotted.key value`` flags on top
of an optional JSON config file. Exit codes: 0 success, 2 config error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import assets
from .checkpoint import Checkpoint, CheckpointError, build_checkpoint
from .config import (
    ConfigError, RunConfig, build_policy, build_trainer,
    env_spec, load_config, resolve_sources, validate,
)
from .envs import EnvSpecError, Modification, make_env
from .evaluate import evaluate_policy
from .explain import write_report_dir
from .grounding import GroundingError, build_graph, ground_program
from .lang import ParseError, parse_language, parse_rules
from .policy import PolicyConfigError
from .training import TrainingError
from .valuation import ValuationError

CONFIG_ERRORS = (ConfigError, ParseError, EnvSpecError, PolicyConfigError,
                 CheckpointError, ValuationError, GroundingError,
                 FileNotFoundError)


def entrypoint():
    sys.exit(main(sys.argv[1:]))


def main(argv) -> int:
    parser = _build_parser()
    try:
        args, leftover = parser.parse_known_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    if not getattr(args, "command", None):
        parser.print_help()
        return 2
    try:
        overrides = _parse_leftover(leftover)
        return args.func(args, overrides)
    except CONFIG_ERRORS as exc:
        for line in _error_lines(exc):
            print(f"error: {line}", file=sys.stderr)
        return 2
    except (TrainingError, RuntimeError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


def _error_lines(exc) -> list[str]:
    if isinstance(exc, ConfigError):
        return exc.errors
    return [str(exc)]


def _parse_leftover(tokens) -> dict:
    overrides = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError([f"unexpected argument {tok!r}"])
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(tokens):
                raise ConfigError([f"flag --{key} is missing a value"])
            i += 1
            value = tokens[i]
        overrides[key] = value
        i += 1
    return overrides


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="logicmix",
        description="Blended neuro-symbolic RL: train, evaluate, explain.",
    )
    sub = parser.add_subparsers(dest="command")

    tr = sub.add_parser("train", help="train an agent")
    tr.add_argument("--config", default=None, help="JSON run config")
    tr.add_argument("--env", default=None)
    tr.add_argument("--rules", default=None)
    tr.add_argument("--blend-rules", dest="blend_rules", default=None)
    tr.add_argument("--language", default=None)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--total-timesteps", dest="total_timesteps", type=int, default=None)
    tr.add_argument("--force-beta", dest="force_beta", type=float, default=None)
    tr.add_argument("--mod", default=None, help="comma-separated modification flags")
    tr.add_argument("--noise", default=None, type=float)
    tr.add_argument("--run-name", dest="run_name", default=None)
    tr.add_argument("--out-dir", dest="out_dir", default=None)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--env", default=None)
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--mod", default=None, help="comma-separated modification flags")
    ev.add_argument("--noise", default=None,
                    help="noise rate or comma-separated sweep, e.g. 0,0.1,0.3")
    ev.add_argument("--out", default=None, help="write summary rows as JSON lines")
    ev.set_defaults(func=cmd_eval)

    ex = sub.add_parser("explain", help="write per-step explanation reports")
    ex.add_argument("--checkpoint", required=True)
    ex.add_argument("--env", default=None)
    ex.add_argument("--steps", type=int, default=100)
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--out", default=None)
    ex.add_argument("--top-k", dest="top_k", type=int, default=3)
    ex.add_argument("--ig-steps", dest="ig_steps", type=int, default=64)
    ex.set_defaults(func=cmd_explain)

    ins = sub.add_parser("inspect-rules", help="parsed/ground program stats")
    ins.add_argument("--env", default=None)
    ins.add_argument("--language", default=None)
    ins.add_argument("--rules", default=None)
    ins.add_argument("--blend-rules", dest="blend_rules", default=None)
    ins.add_argument("--dump-graph", dest="dump_graph", action="store_true")
    ins.set_defaults(func=cmd_inspect_rules)
    return parser


def _train_config(args, overrides) -> RunConfig:
    flat = dict(overrides)
    direct = {
        "env": args.env, "rules": args.rules, "blend_rules": args.blend_rules,
        "language": args.language, "force_beta": args.force_beta,
        "noise": args.noise, "run_name": args.run_name, "out_dir": args.out_dir,
        "train.seed": args.seed, "train.total_timesteps": args.total_timesteps,
    }
    for key, val in direct.items():
        if val is not None:
            flat[key] = val
    if args.mod is not None:
        flat["mods"] = args.mod
    return load_config(args.config, flat)


def cmd_train(args, overrides) -> int:
    cfg = _train_config(args, overrides)
    errors = validate(cfg)
    if errors:
        raise ConfigError(errors)

    run_name = cfg.run_name or f"{cfg.env}-seed{cfg.train.seed}"
    run_dir = Path(cfg.out_dir) / run_name
    n = 1
    while run_dir.exists():
        run_dir = Path(cfg.out_dir) / f"{run_name}-{n}"
        n += 1
    run_dir.mkdir(parents=True)
    (run_dir / "config.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
    )

    metrics_path = run_dir / "metrics.jsonl"

    def log_fn(line: str):
        print(line)
        with open(metrics_path, "a") as f:
            f.write(line + "\n")

    sources = resolve_sources(cfg)

    def checkpoint_fn(trainer):
        ckpt = build_checkpoint(trainer, cfg.to_dict(), sources)
        ckpt.save(run_dir / f"ckpt_{trainer.global_step}.bin")

    trainer = build_trainer(cfg, run_dir=run_dir, log_fn=log_fn)
    trainer.train(checkpoint_interval=cfg.checkpoint_interval,
                  checkpoint_fn=checkpoint_fn)
    print(f"run directory: {run_dir}")
    return 0


def _policy_from_checkpoint(path, env_override=None):
    ckpt = Checkpoint.load(path)
    cfg = RunConfig.from_dict(ckpt.header["config"])
    if env_override is not None:
        cfg = replace(cfg, env=env_override)
    sources = {
        "language": ckpt.sections["src_language"].decode("utf-8"),
        "rules": ckpt.sections["src_rules"].decode("utf-8"),
        "blend_rules": ckpt.sections["src_blend_rules"].decode("utf-8"),
    }
    policy = build_policy(cfg, sources)
    policy.load_state_dict(ckpt.tensor_section("policy"))
    policy.eval()
    return ckpt, cfg, policy


def cmd_eval(args, overrides) -> int:
    if overrides:
        raise ConfigError([f"unknown eval flag --{k}" for k in overrides])
    ckpt, cfg, policy = _policy_from_checkpoint(args.checkpoint, args.env)
    mods = args.mod.split(",") if args.mod else list(cfg.mods)
    noise_values = [cfg.noise]
    if args.noise is not None:
        noise_values = [float(v) for v in str(args.noise).split(",")]

    rows = []
    for noise in noise_values:
        spec = replace(
            env_spec(cfg, seed=args.seed),
            mods=Modification.from_names(mods, noise=noise),
        )
        stats = evaluate_policy(policy, spec, episodes=args.episodes,
                                base_seed=args.seed)
        row = {"env": cfg.env, "mods": [m for m in mods if m], "noise": noise,
               **stats.summary()}
        rows.append(row)
        print(
            f"env={cfg.env} mods={','.join(row['mods']) or '-'} noise={noise:g} "
            f"episodes={stats.episodes} "
            f"return={stats.mean_return:.2f}±{stats.std_return:.2f} "
            f"length={stats.mean_length:.1f}±{stats.std_length:.1f}"
        )
    if args.out:
        with open(args.out, "w") as f:
            for row in rows:
                f.write(json.dumps(row, sort_keys=True) + "\n")
    return 0


def cmd_explain(args, overrides) -> int:
    if overrides:
        raise ConfigError([f"unknown explain flag --{k}" for k in overrides])
    ckpt, cfg, policy = _policy_from_checkpoint(args.checkpoint, args.env)
    spec = env_spec(cfg, seed=args.seed)
    env = make_env(spec)
    out = args.out or (Path(args.checkpoint).parent / "reports")
    out_dir = write_report_dir(policy, env, steps=args.steps, out_dir=out,
                               seed=args.seed, k=args.top_k, ig_steps=args.ig_steps)
    print(f"wrote {args.steps} reports to {out_dir}")
    return 0


def cmd_inspect_rules(args, overrides) -> int:
    if overrides:
        raise ConfigError([f"unknown inspect flag --{k}" for k in overrides])
    if args.env:
        names = assets.asset_names(args.env)
        lang_text = assets.asset_text(names[0])
        rule_text = assets.asset_text(names[1])
        blend_text = assets.asset_text(names[2])
    else:
        if not (args.language and args.rules):
            raise ConfigError(["inspect-rules needs --env or --language/--rules"])
        lang_text = Path(args.language).read_text()
        rule_text = Path(args.rules).read_text()
        blend_text = Path(args.blend_rules).read_text() if args.blend_rules else None

    lang = parse_language(lang_text)
    print(f"types: {len(lang.types)}  constants: {len(lang.constants)}  "
          f"predicates: {len(lang.predicates)}")
    for kind in ("action", "state", "blend"):
        preds = [str(p) for p in lang.predicates_of_kind(kind)]
        print(f"  {kind}: {', '.join(preds) if preds else '-'}")
    for label, text in (("rules", rule_text), ("blend rules", blend_text)):
        if text is None:
            continue
        rs = parse_rules(text, lang)
        gp = ground_program(rs)
        graph = build_graph(gp)
        print(f"{label}: {len(rs.rules)} rules -> {len(gp.ground_rules)} ground rules, "
              f"{len(gp.atoms)} ground atoms, "
              f"{graph.n_atoms + graph.n_conj} nodes, {graph.n_edges} edges")
        if args.dump_graph:
            print(graph.dump(gp), end="")
    return 0


if __name__ == "__main__":
    entrypoint()
