"""Command line: ``opqueue train | eval | reproduce``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, dump_config, load_config
from .experiments import (
    FIGURES,
    NoiseSpec,
    UsageError,
    frozen_policy,
    reproduce_figure,
    run_test_phase,
    write_learning_curve,
    write_test_summary,
)
from .learning import InvalidInputError, Model, read_policy, write_policy
from .training import ConfigurationError, train


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: Optional[str] = None
    model: Optional[Model] = None
    episodes: Optional[int] = None
    seed: int = 0
    out_dir: str = "."
    runs: int = 30
    jobs: int = 1
    policy_path: Optional[str] = None
    figure: Optional[str] = None
    noise_level: float = 0.0
    mu_bar_convention: Optional[str] = None

    def __post_init__(self):
        if self.command not in ("train", "eval", "reproduce"):
            raise UsageError(f"unknown command {self.command!r}")
        if self.command == "train" and self.model is None:
            raise UsageError("train requires --model")
        if self.command == "eval" and self.policy_path is None:
            raise UsageError("eval requires --policy")
        if self.command == "reproduce" and self.figure not in FIGURES:
            raise UsageError(f"unknown figure {self.figure!r}; expected one of {', '.join(FIGURES)}")


def _write_manifest(out: Path, m: RunManifest, sim, params) -> Path:
    path = out / "manifest.ini"
    head = [f"# command: {m.command}"]
    keys = {
        "train": ("model", "episodes"),
        "eval": ("policy_path", "runs", "noise_level"),
        "reproduce": ("figure", "episodes", "runs"),
    }[m.command]
    for key in keys + ("config_path",):
        value = getattr(m, key)
        if value is not None:
            head.append(f"# {key}: {value.value if isinstance(value, Model) else value}")
    path.write_text("\n".join(head) + "\n" + dump_config(sim, params), encoding="utf-8")
    return path


def cmd_run(m: RunManifest) -> int:
    sim, params = load_config(m.config_path)
    sim = sim.replace(seed=m.seed)
    if m.mu_bar_convention is not None:
        params = replace(params, mu_bar_convention=m.mu_bar_convention)
    out = Path(m.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if m.command == "train":
        tables, curve = train(sim, m.model, params, m.episodes or 2000, seed=m.seed)
        write_policy(out / "policy.txt", tables, m.model)
        write_learning_curve(out / "learning_curve.csv", curve)
    elif m.command == "eval":
        if not Path(m.policy_path).is_file():
            raise FileNotFoundError(f"policy file not found: {m.policy_path}")
        model, tables = read_policy(m.policy_path)
        pol = frozen_policy(model, tables, params, sim.n_robots)
        noise = NoiseSpec(m.noise_level) if m.noise_level else None
        stats = run_test_phase({model.name.replace("_", "-"): pol}, sim, m.runs, m.seed, params,
                               noise=noise, jobs=m.jobs)
        write_test_summary(out / "test_summary.csv", stats)
    else:
        reproduce_figure(m.figure, out, m.seed, sim, params, m.episodes, m.runs, m.jobs)
    _write_manifest(out, m, sim, params)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned key-value config file")
    common.add_argument("--seed", type=int, default=0, help="64-bit master seed (default 0)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="max concurrent replications")
    common.add_argument("--mu-bar-convention", choices=("time", "rate"), default=None)

    parser = argparse.ArgumentParser(prog="opqueue", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="learn a balking policy")
    p.add_argument("--model", required=True, choices=[m.value for m in Model])
    p.add_argument("--episodes", type=int, default=2000)

    p = sub.add_parser("eval", parents=[common], help="test a policy file greedily")
    p.add_argument("--policy", required=True)
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--noise-level", type=float, default=0.0)

    p = sub.add_parser("reproduce", parents=[common], help="regenerate one figure's data")
    p.add_argument("figure", help=", ".join(FIGURES))
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--runs", type=int, default=30)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        manifest = RunManifest(
            command=args.command,
            config_path=args.config,
            model=Model.parse(args.model) if getattr(args, "model", None) else None,
            episodes=getattr(args, "episodes", None),
            seed=args.seed,
            out_dir=args.out,
            runs=getattr(args, "runs", 30),
            jobs=args.jobs,
            policy_path=getattr(args, "policy", None),
            figure=getattr(args, "figure", None),
            noise_level=getattr(args, "noise_level", 0.0),
            mu_bar_convention=args.mu_bar_convention,
        )
        return cmd_run(manifest)
    except UsageError as exc:
        print(f"opqueue: usage error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ConfigurationError, InvalidInputError, OSError, ValueError) as exc:
        print(f"opqueue: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
