"""Experiment harness: parameter schedules, test-phase noise, replication
statistics and the CSV data behind each figure."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .learning import LearningParams, Model
from .queue_core import Discipline
from .sim_kernel import AlwaysJoin, NaorPolicy, SeedLike, SimConfig, child_seed, run_episode
from .training import QAgent, train


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant overrides: ``((episode, {"mu": ..., "lam": ..., "mix": ...}), ...)``."""

    breakpoints: tuple = ()

    def __post_init__(self):
        bps = tuple((int(ep), dict(ov)) for ep, ov in self.breakpoints)
        eps = [ep for ep, _ in bps]
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ValueError(f"breakpoint episodes must be strictly increasing, got {eps}")
        for _, ov in bps:
            unknown = set(ov) - {"mu", "lam", "mix"}
            if unknown:
                raise ValueError(f"unsupported schedule overrides: {sorted(unknown)}")
        object.__setattr__(self, "breakpoints", bps)

    def apply(self, base: SimConfig, episode: int) -> SimConfig:
        return schedule_params(base, episode, self)


def schedule_params(base: SimConfig, episode: int, schedule: Schedule) -> SimConfig:
    active = None
    for ep, ov in schedule.breakpoints:
        if ep <= episode:
            active = ov
        else:
            break
    if not active:
        return base
    changes = {k: v for k, v in active.items() if k in ("mu", "lam")}
    if "mix" in active:
        changes["catalog"] = base.catalog.with_mix(active["mix"])
    return base.replace(**changes)


def e1_share_mix(share: float) -> tuple[float, float, float]:
    """E1 gets ``share``; the rest is split evenly between E2 and E3."""
    rest = (1.0 - share) / 2.0
    return (share, rest, rest)


@dataclass(frozen=True)
class NoiseSpec:
    level: float = 0.0
    applies_to: frozenset = field(default_factory=lambda: frozenset({"lambda", "mu"}))

    def __post_init__(self):
        if not 0.0 <= self.level <= 0.9:
            raise ValueError(f"noise level must be in [0, 0.9], got {self.level}")
        targets = frozenset(self.applies_to)
        if not targets <= {"lambda", "mu"}:
            raise ValueError(f"noise applies only to lambda and mu, got {sorted(targets)}")
        object.__setattr__(self, "applies_to", targets)


def inject_noise(lam: float, mu: float, spec: NoiseSpec, rng) -> tuple[float, float]:
    """Scale each selected rate by ``1 + d`` with ``d ~ U[-level, level]``."""
    if "lambda" in spec.applies_to:
        lam = lam * (1.0 + rng.uniform(-spec.level, spec.level))
    if "mu" in spec.applies_to:
        mu = mu * (1.0 + rng.uniform(-spec.level, spec.level))
    return lam, mu


def summarize(samples: Sequence[float]) -> tuple[float, float]:
    """Mean and standard error of the mean (n-1 denominator; 0 for one sample)."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("summarize needs at least one sample")
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


@dataclass(frozen=True)
class PolicySummary:
    mean_reward: float
    sem_reward: float
    mean_idle: float
    sem_idle: float
    n_runs: int
    rewards: tuple = ()
    idles: tuple = ()


# policy name -> PolicySummary, in insertion order
SummaryStats = dict


def _run_one(policy, config: SimConfig, params: LearningParams, seed, noise, noise_seed):
    cfg = config
    if noise is not None and noise.level > 0:
        lam, mu = inject_noise(config.lam, config.mu, noise, np.random.default_rng(noise_seed))
        cfg = config.replace(lam=lam, mu=mu)
    m = run_episode(cfg, policy, params=params, seed=seed)
    return m.team_reward, m.idle_time_total


def run_test_phase(
    policies: Mapping[str, object],
    config: SimConfig,
    n_runs: int = 30,
    seed: SeedLike = None,
    params: Optional[LearningParams] = None,
    noise: Optional[NoiseSpec] = None,
    jobs: int = 1,
) -> SummaryStats:
    """Run every policy ``n_runs`` times and summarize reward and idle time.

    Run ``i`` uses the same episode stream for every policy (common random
    numbers). Reward constants come from the nominal config, so noise only
    perturbs the simulated rates, never what the robots believe them to be.
    """
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    master = config.seed if seed is None else seed
    params = (params or LearningParams()).resolve(config.lam, config.mu)
    tasks = [
        (name, i, policy, child_seed(master, i), child_seed(master, i, 2))
        for name, policy in policies.items()
        for i in range(n_runs)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_run_one, pol, config, params, s, noise, ns) for _, _, pol, s, ns in tasks
            ]
            results = [f.result() for f in futures]
    else:
        results = [_run_one(pol, config, params, s, noise, ns) for _, _, pol, s, ns in tasks]
    out: SummaryStats = {}
    for name in policies:
        rows = [res for (n, _, _, _, _), res in zip(tasks, results) if n == name]
        rewards = [r for r, _ in rows]
        idles = [t for _, t in rows]
        mr, sr = summarize(rewards)
        mi, si = summarize(idles)
        out[name] = PolicySummary(mr, sr, mi, si, n_runs, tuple(rewards), tuple(idles))
    return out


def moving_average(curve: Sequence[float], window: int = 200) -> np.ndarray:
    """Trailing mean over full windows; element ``i`` covers ``curve[i:i+window]``."""
    x = np.asarray(curve, dtype=float)
    if x.size < window:
        raise ValueError(f"curve of length {x.size} is shorter than the window {window}")
    c = np.cumsum(np.insert(x, 0, 0.0))
    return (c[window:] - c[:-window]) / window


def episodes_to_reach(curve: Sequence[float], fraction: float = 0.9, window: int = 200) -> int:
    """First episode at which the moving average has covered ``fraction`` of
    the way from its first to its final value.

    Returns the index of the last episode inside that window.
    """
    ma = moving_average(curve, window)
    start, final = ma[0], ma[-1]
    target = start + fraction * (final - start)
    hit = np.nonzero(ma >= target if final >= start else ma <= target)[0]
    return int(hit[0]) + window - 1


# -- CSV writers ------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_learning_curve(path, curve: Sequence[float]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "reward"])
        for i, r in enumerate(curve):
            w.writerow([i, _fmt(r)])
    return path


def read_learning_curve(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([float(row["reward"]) for row in csv.DictReader(fh)])


def write_test_summary(path, stats: SummaryStats) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "mean_reward", "sem_reward", "mean_idle", "sem_idle", "n_runs"])
        for name, s in stats.items():
            w.writerow(
                [name, _fmt(s.mean_reward), _fmt(s.sem_reward), _fmt(s.mean_idle), _fmt(s.sem_idle), s.n_runs]
            )
    return path


def write_noise_sweep(path, rows: Sequence[tuple[float, PolicySummary]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["noise_level", "mean_reward", "sem_reward", "mean_idle", "sem_idle"])
        for level, s in rows:
            w.writerow([_fmt(level), _fmt(s.mean_reward), _fmt(s.sem_reward), _fmt(s.mean_idle), _fmt(s.sem_idle)])
    return path


# -- figure scenarios -------------------------------------------------------

FIGURES = ("fig2", "fig3", "fig4", "fig5a", "fig5b", "fig5c", "fig6", "fig7")
MODELS = (Model.TL, Model.IL_U, Model.IL_O)
SHIFT_EPISODE = 2150
MU_SHIFTS = (0.37, 0.17)
E1_SHARES = (1.0, 0.8, 0.5, 0.1, 0.0)
NOISE_LEVELS = (0.0, 0.1, 0.2, 0.3, 0.4)

# seed paths under the master seed
_TRAIN, _TEST, _SHIFT, _MIX, _NOISE = 1, 2, 3, 4, 5


def _policy_label(model: Model) -> str:
    return model.name.replace("_", "-")


def _train_job(args):
    config, model, params, episodes, schedule, seed = args
    tables, curve = train(config, model, params, episodes, schedule=schedule, seed=seed)
    return tables, curve


def _map(fn, jobs_args: list, jobs: int) -> list:
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, jobs_args))
    return [fn(a) for a in jobs_args]


def train_models(config, params, episodes, master_seed, models=MODELS, jobs=1) -> dict:
    """Train each model on its own derived stream; ``{model: (tables, curve)}``."""
    args = [
        (config, m, params, episodes, None, child_seed(master_seed, _TRAIN, MODELS.index(m)))
        for m in models
    ]
    return dict(zip(models, _map(_train_job, args, jobs)))


def frozen_policy(model: Model, tables, params, n_robots) -> QAgent:
    return QAgent(model, params, n_robots, tables, learn=False, epsilon=0.0)


def naor_policy(config: SimConfig, params: LearningParams, waiting_cost: float = 1.0) -> NaorPolicy:
    from .queue_core import naor_threshold

    return NaorPolicy(naor_threshold(params.r_s, waiting_cost, config.mu))


def reproduce_figure(
    figure_id: str,
    out_dir,
    master_seed: int = 0,
    config: Optional[SimConfig] = None,
    params: Optional[LearningParams] = None,
    episodes: Optional[int] = None,
    n_runs: int = 30,
    jobs: int = 1,
) -> list[Path]:
    """Regenerate one figure's plot data as CSV files in ``out_dir``.

    ``episodes`` defaults to 2000 for the learning/test figures and 4000 for
    the two non-stationarity figures (their shift happens at episode 2150).
    """
    if figure_id not in FIGURES:
        raise UsageError(f"unknown figure {figure_id!r}; expected one of {', '.join(FIGURES)}")
    config = config or SimConfig()
    params = params or LearningParams()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if figure_id == "fig2":
        trained = train_models(config, params, episodes or 2000, master_seed, jobs=jobs)
        for m, (_, curve) in trained.items():
            written.append(write_learning_curve(out / f"fig2_{m.value}.csv", curve))

    elif figure_id == "fig3":
        n = episodes or 4000
        args = [
            (config, Model.IL_O, params, n, Schedule(((SHIFT_EPISODE, {"mu": mu}),)),
             child_seed(master_seed, _SHIFT))
            for mu in MU_SHIFTS
        ]
        for mu, (_, curve) in zip(MU_SHIFTS, _map(_train_job, args, jobs)):
            written.append(write_learning_curve(out / f"fig3_mu{config.mu:g}-to-{mu:g}.csv", curve))

    elif figure_id == "fig4":
        n = episodes or 4000
        args = [
            (config, Model.IL_O, params, n, Schedule(((SHIFT_EPISODE, {"mix": e1_share_mix(s)}),)),
             child_seed(master_seed, _MIX))
            for s in E1_SHARES
        ]
        for s, (_, curve) in zip(E1_SHARES, _map(_train_job, args, jobs)):
            written.append(write_learning_curve(out / f"fig4_e1-{round(s * 100)}.csv", curve))

    elif figure_id in ("fig5a", "fig5b", "fig5c"):
        trained = train_models(config, params, episodes or 2000, master_seed, jobs=jobs)
        policies = {}
        if figure_id == "fig5c":
            policies["FIFO"] = AlwaysJoin()
            policies["SJF"] = AlwaysJoin()
        for m, (tables, _) in trained.items():
            policies[_policy_label(m)] = frozen_policy(m, tables, params, config.n_robots)
        test_seed = child_seed(master_seed, _TEST)
        stats = {}
        for name, pol in policies.items():
            cfg = config.replace(discipline=Discipline.SJF) if name == "SJF" else config
            stats.update(run_test_phase({name: pol}, cfg, n_runs, test_seed, params, jobs=jobs))
        written.append(write_test_summary(out / f"{figure_id}.csv", stats))

    else:  # fig6 / fig7: same sweep, reward vs idle columns
        trained = train_models(config, params, episodes or 2000, master_seed, models=(Model.IL_O,), jobs=jobs)
        tables, _ = trained[Model.IL_O]
        pol = frozen_policy(Model.IL_O, tables, params, config.n_robots)
        rows = []
        for level in NOISE_LEVELS:
            stats = run_test_phase(
                {"IL-O": pol}, config, n_runs, child_seed(master_seed, _NOISE), params,
                noise=NoiseSpec(level), jobs=jobs,
            )
            rows.append((level, stats["IL-O"]))
        written.append(write_noise_sweep(out / f"{figure_id}.csv", rows))

    return written
