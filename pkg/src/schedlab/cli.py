"""Command-line front end.

Subcommands:
    train-offline   run the off-line loop, save networks and metrics
    evaluate        run frozen policies (classical or a saved actor)
    run-online      BS + edge-server fine-tuning (in-process, or via sockets)
    oracle          self-check suites (markov | fbl | gradcheck | all)
    export          re-emit a saved metrics.json as CSV

A JSON config supplies any subset of fields; command-line flags override
file values; everything else takes the defaults.  Output directory comes
from --out, else $SCHEDLAB_OUT, else the working directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, drl, metrics as metrics_mod, nn, online, oracles
from .config import (FLAG_IMPORTANCE_SAMPLING, FLAG_MULTI_HEAD,
                     FLAG_REWARD_SHAPING, ConfigError, RngBundle, SystemConfig)
from .drl import TrainingDiverged
from .env import SchedulerEnv

EXIT_OK = 0
EXIT_ORACLE_FAIL = 1
EXIT_BAD_CONFIG = 2
EXIT_DIVERGED = 3


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--users", type=int, dest="num_users")
    p.add_argument("--rbs", type=int, dest="num_rbs")
    p.add_argument("--mode", choices=("straightforward", "tdrl"))
    p.add_argument("--flags", nargs="*",
                   choices=(FLAG_MULTI_HEAD, FLAG_REWARD_SHAPING,
                            FLAG_IMPORTANCE_SAMPLING, "none"),
                   help="knowledge flags; 'none' for plain DDPG")
    p.add_argument("--episodes", type=int)
    p.add_argument("--snr-offset-db", type=float, dest="snr_offset_db")
    p.add_argument("--out", type=Path, help="output directory")


def build_config(args: argparse.Namespace) -> SystemConfig:
    if args.config is not None:
        cfg = SystemConfig.from_json(Path(args.config).read_text())
    else:
        cfg = SystemConfig()
    for name in ("seed", "num_users", "num_rbs", "mode", "episodes", "snr_offset_db"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    flags = getattr(args, "flags", None)
    if flags is not None:
        cfg.flags = [] if flags == ["none"] else list(dict.fromkeys(flags))
    return cfg.validate()


def out_dir(args: argparse.Namespace) -> Path:
    d = args.out or os.environ.get("SCHEDLAB_OUT") or "."
    d = Path(d)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _dump_run(dest: Path, cfg: SystemConfig, windows, stem: str) -> None:
    record = metrics_mod.MetricsJson(
        config=json.loads(cfg.to_json()),
        windows=[metrics_mod.MetricsJson.window_dict(m) for m in windows],
    )
    (dest / f"{stem}.json").write_text(
        json.dumps(dataclasses.asdict(record), indent=2, sort_keys=True) + "\n")
    metrics_mod.write_csv(dest / f"{stem}.csv", windows)


# --- subcommands --------------------------------------------------------------

def cmd_train_offline(args) -> int:
    cfg = build_config(args)
    dest = out_dir(args)
    result = drl.train(cfg)
    (dest / "config.json").write_text(cfg.to_json())
    (dest / "actor.bin").write_bytes(nn.serialize(result.nets.actor))
    (dest / "critic.bin").write_bytes(nn.serialize(result.nets.critic))
    _dump_run(dest, cfg, result.metrics, "metrics")
    if result.metrics:
        last = result.metrics[-1]
        print(f"trained {cfg.episodes} episodes; final window: "
              f"worst_reward={last.worst_reward:.4f} "
              f"loss_prob={['%.4f' % v for v in last.loss_prob]}")
    print(f"wrote {dest / 'metrics.csv'}")
    return EXIT_OK


def _load_actor(path: Path) -> nn.MlpParams:
    return nn.deserialize(Path(path).read_bytes())


def cmd_evaluate(args) -> int:
    cfg = build_config(args)
    dest = out_dir(args)
    policies = args.policy or ["edf"]
    windows = []
    names = []
    for i, name in enumerate(policies):
        rngs = RngBundle(cfg.seed)
        env = SchedulerEnv(cfg, rngs)
        if name == "actor":
            if not args.actor:
                raise ConfigError("config field 'actor': --actor PATH required "
                                  "to evaluate a saved actor")
            policy = drl.greedy_policy(_load_actor(args.actor), cfg)
        else:
            policy = baselines.make_policy(name, cfg.num_users)
        m = baselines.evaluate(policy, env, args.eval_episodes, window=i)
        windows.append(m)
        names.append(name)
        print(f"policy {name}: loss_prob={['%.4f' % v for v in m.loss_prob]} "
              f"worst_reward={m.worst_reward:.4f}")
    _dump_run(dest, cfg, windows, "eval")
    (dest / "eval_policies.json").write_text(json.dumps(names) + "\n")
    print(f"wrote {dest / 'eval.csv'} (window column = policy index: "
          f"{', '.join(f'{i}={n}' for i, n in enumerate(names))})")
    return EXIT_OK


def cmd_run_online(args) -> int:
    cfg = build_config(args)
    dest = out_dir(args)
    actor = _load_actor(args.offline_actor) if args.offline_actor else None
    critic = _load_actor(args.offline_critic) if args.offline_critic else None

    try:
        if args.listen:
            host, port = _parse_addr(args.listen)
            pushes = online.serve(cfg, host, port, actor_init=actor,
                                  critic_init=critic)
            print(f"server done after {pushes} parameter pushes")
            return EXIT_OK
        if args.connect:
            host, port = _parse_addr(args.connect)
            result = online.connect_and_run(cfg, host, port, actor,
                                            args.online_episodes)
        else:
            result = online.run_online(cfg, actor, args.online_episodes,
                                       critic_init=critic)
    except ValueError as e:
        raise ConfigError(f"config field 'critic': {e}") from e
    _dump_run(dest, cfg, result.metrics, "online")
    (dest / "actor_final.bin").write_bytes(nn.serialize(result.final_actor))
    print(f"online run: {result.param_pushes} parameter pushes, "
          f"{result.deadline_misses} deadline misses")
    print(f"wrote {dest / 'online.csv'}")
    return EXIT_OK


def _parse_addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"config field 'address': expected HOST:PORT, got '{text}'")
    return host or "127.0.0.1", int(port)


def cmd_oracle(args) -> int:
    reports = []
    if args.suite in ("markov", "all"):
        reports.append(oracles.run_markov_suite(trials=args.trials, seed=args.seed or 0))
    if args.suite in ("fbl", "all"):
        reports.append(oracles.run_fbl_suite(draws=args.draws, seed=args.seed or 0))
    if args.suite in ("gradcheck", "all"):
        reports.append(oracles.run_gradcheck_suite(seed=args.seed or 0))
    ok = True
    for r in reports:
        print(r.line())
        ok = ok and r.passed
    return EXIT_OK if ok else EXIT_ORACLE_FAIL


def cmd_export(args) -> int:
    raw = json.loads(Path(args.metrics_json).read_text())
    windows = [metrics_mod.MetricsJson.window_from_dict(w) for w in raw["windows"]]
    metrics_mod.write_csv(args.csv_out, windows)
    print(f"wrote {args.csv_out}")
    return EXIT_OK


# --- entry point ------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="schedlab",
                                description="desk-scale scheduler laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train-offline", help="run the off-line training loop")
    _add_config_args(t)
    t.set_defaults(fn=cmd_train_offline)

    e = sub.add_parser("evaluate", help="evaluate frozen policies")
    _add_config_args(e)
    e.add_argument("--policy", action="append",
                   choices=tuple(baselines.POLICIES) + ("actor",),
                   help="repeatable; each policy becomes one CSV window")
    e.add_argument("--actor", type=Path, help="saved actor for --policy actor")
    e.add_argument("--eval-episodes", type=int, default=500)
    e.set_defaults(fn=cmd_evaluate)

    o = sub.add_parser("run-online", help="BS + edge-server fine-tuning")
    _add_config_args(o)
    o.add_argument("--offline-actor", type=Path,
                   help="saved actor to fine-tune; omit for random init")
    o.add_argument("--offline-critic", type=Path,
                   help="saved critic to warm-start the trainer's value "
                        "estimate (recommended alongside --offline-actor)")
    o.add_argument("--online-episodes", type=int, default=50)
    o.add_argument("--listen", help="serve on HOST:PORT instead of in-process")
    o.add_argument("--connect", help="run the BS against HOST:PORT")
    o.set_defaults(fn=cmd_run_online)

    r = sub.add_parser("oracle", help="run self-check suites")
    r.add_argument("suite", choices=("markov", "fbl", "gradcheck", "all"))
    r.add_argument("--trials", type=int, default=1_000_000,
                   help="Monte-Carlo trials per Markov row")
    r.add_argument("--draws", type=int, default=1000,
                   help="random links for the fbl suite")
    r.add_argument("--seed", type=int)
    r.set_defaults(fn=cmd_oracle)

    x = sub.add_parser("export", help="metrics.json to CSV")
    x.add_argument("metrics_json", type=Path)
    x.add_argument("csv_out", type=Path)
    x.set_defaults(fn=cmd_export)

    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except TrainingDiverged as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
