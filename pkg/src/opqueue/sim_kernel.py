"""Seeded discrete-event simulation of a robot team sharing one operator.

Robots work through their tasks in autonomy. Failure events arrive as a
Poisson stream and hit a random robot that is still working; that robot
either joins the operator queue or balks. A balk may fail, in which case
the robot stops and its (longer) repair is queued anyway. The operator
serves one request at a time.
"""

from __future__ import annotations

import bisect
import enum
import heapq
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Protocol, Union

import numpy as np

from .learning import Action, LearningParams, Outcome, reward_balk, reward_join
from .queue_core import (
    Discipline,
    EventCatalog,
    EventType,
    InvalidParameterError,
    OperatorQueue,
    QueueStateError,
    Request,
    default_catalog,
)

SeedLike = Union[int, np.random.SeedSequence, None]


@dataclass(frozen=True)
class SimConfig:
    n_robots: int = 5
    n_tasks_total: int = 30
    lam: float = 0.25
    mu: float = 0.27
    episode_event_horizon: int = 20
    task_duration: float = 60.0
    fail_service_multiplier: float = 2.0
    catalog: EventCatalog = field(default_factory=default_catalog)
    discipline: Discipline = Discipline.FIFO
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "discipline", Discipline(self.discipline))
        checks = [
            ("lambda", self.lam > 0, "> 0"),
            ("mu", self.mu > 0, "> 0"),
            ("n_robots", self.n_robots >= 1, ">= 1"),
            ("n_tasks_total", self.n_tasks_total >= 0, ">= 0"),
            ("episode_event_horizon", self.episode_event_horizon >= 1, ">= 1"),
            ("task_duration", self.task_duration > 0, "> 0"),
            ("fail_service_multiplier", self.fail_service_multiplier >= 1, ">= 1"),
        ]
        for name, ok, bound in checks:
            if not ok:
                raise InvalidParameterError(f"{name} must be {bound}, got {self._value(name)}")
        if not 0 <= self.seed < 2**64:
            raise InvalidParameterError(f"seed must fit in 64 bits, got {self.seed}")

    def _value(self, name):
        return self.lam if name == "lambda" else getattr(self, name)

    def replace(self, **changes) -> "SimConfig":
        return replace(self, **changes)


class Status(enum.Enum):
    AUTONOMY = "A"
    EVENT = "E"
    WAITING = "W"
    FAILED = "F"


@dataclass
class RobotState:
    id: int
    initial_tasks: int
    status: Status = Status.AUTONOMY
    event: Optional[EventType] = None
    n_tasks: int = -1
    autonomy_time: float = 0.0
    idle_since: Optional[float] = None
    idle_accum: float = 0.0
    wait_accum: float = 0.0

    def __post_init__(self):
        if self.n_tasks < 0:
            self.n_tasks = self.initial_tasks

    @property
    def code(self) -> str:
        """Status as it appears in state keys: event id, or A/W/F."""
        if self.status is Status.EVENT:
            return self.event.id
        return self.status.value

    @property
    def tasks_completed(self) -> int:
        return self.initial_tasks - self.n_tasks


class Kind(enum.IntEnum):
    # completions sort first on equal timestamps
    SERVICE_COMPLETION = 0
    ARRIVAL = 1


@dataclass(order=True, frozen=True)
class SimEvent:
    time: float
    kind: Kind
    seq: int = 0


@dataclass(frozen=True)
class Occurrence:
    time: float
    kind: Kind
    robot_id: Optional[int] = None
    event: Optional[EventType] = None
    dropped: bool = False

    @property
    def needs_decision(self) -> bool:
        return self.kind is Kind.ARRIVAL and not self.dropped


@dataclass(frozen=True)
class Transition:
    robot_id: int
    action: Action
    status: Status
    queue_len: int
    failed: bool
    t_serv: float


@dataclass(frozen=True)
class Observation:
    robot_id: int
    code: str
    n_tasks: int
    queue_len: int
    joint: tuple
    n_robots: int
    time: float


@dataclass
class EpisodeMetrics:
    team_reward: float = 0.0
    idle_time_total: float = 0.0
    wait_time_total: float = 0.0
    events_total: int = 0
    failures_total: int = 0
    joins_total: int = 0
    balks_total: int = 0
    dropped_arrivals: int = 0
    episode_duration: float = 0.0
    tasks_completed: int = 0


class EpisodeEnd(Exception):
    """The calendar is empty: nothing left to simulate."""


def sample_exponential(rng, rate: float) -> float:
    if not rate > 0:
        raise InvalidParameterError(f"rate must be > 0, got {rate}")
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return -math.log(u) / rate


def assign_tasks(n_tasks_total: int, n_robots: int) -> list[int]:
    if n_robots < 1:
        raise InvalidParameterError(f"n_robots must be >= 1, got {n_robots}")
    base, extra = divmod(n_tasks_total, n_robots)
    return [base + (1 if i < extra else 0) for i in range(n_robots)]


def episode_streams(seed: SeedLike) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (simulation, policy) generators for one episode."""
    seed = as_seed_sequence(seed)
    return np.random.default_rng(child_seed(seed, 0)), np.random.default_rng(child_seed(seed, 1))


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def child_seed(seed: SeedLike, *path: int) -> np.random.SeedSequence:
    """Counter-based child stream: the same path always yields the same stream.

    Unlike ``SeedSequence.spawn`` this keeps no state, so adding streams
    never shifts existing ones.
    """
    seed = as_seed_sequence(seed)
    return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(path))


class Simulation:
    """One episode's mutable state. Single-threaded; drive it via ``advance``."""

    def __init__(self, config: SimConfig, rng: Optional[np.random.Generator] = None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.clock = 0.0
        self.queue = OperatorQueue(config.discipline)
        self.robots = [
            RobotState(i, n) for i, n in enumerate(assign_tasks(config.n_tasks_total, config.n_robots))
        ]
        self.in_service: Optional[Request] = None
        self.arrivals_open = True
        self._calendar: list[SimEvent] = []
        self._seq = itertools.count()
        self._mix = list(itertools.accumulate(config.catalog.mix))
        self.schedule(self.clock + sample_exponential(self.rng, config.lam), Kind.ARRIVAL)

    # -- calendar ---------------------------------------------------------
    def schedule(self, time: float, kind: Kind) -> None:
        if time < self.clock:
            raise QueueStateError(f"cannot schedule at {time} before clock {self.clock}")
        heapq.heappush(self._calendar, SimEvent(time, kind, next(self._seq)))

    @property
    def calendar(self) -> list[SimEvent]:
        return sorted(self._calendar)

    def close_arrivals(self) -> None:
        """Stop the arrival stream; pending service still completes."""
        self.arrivals_open = False
        self._calendar = [e for e in self._calendar if e.kind is not Kind.ARRIVAL]
        heapq.heapify(self._calendar)

    @property
    def total_tasks_left(self) -> int:
        return sum(r.n_tasks for r in self.robots)

    def eligible(self) -> list[int]:
        return [r.id for r in self.robots if r.status is Status.AUTONOMY and r.n_tasks > 0]

    # -- stepping ---------------------------------------------------------
    def _progress(self, dt: float) -> None:
        if dt <= 0:
            return
        d = self.config.task_duration
        for r in self.robots:
            if r.status is Status.AUTONOMY and r.n_tasks > 0:
                r.autonomy_time += dt
                r.n_tasks = max(r.initial_tasks - int(r.autonomy_time // d), 0)

    def advance(self) -> Occurrence:
        """Pop the earliest calendar entry and process exactly that occurrence."""
        if not self._calendar:
            raise EpisodeEnd()
        ev = heapq.heappop(self._calendar)
        self._progress(ev.time - self.clock)
        self.clock = ev.time
        if ev.kind is Kind.SERVICE_COMPLETION:
            return self._complete_service()
        return self._arrive()

    def _arrive(self) -> Occurrence:
        cfg = self.config
        self.schedule(self.clock + sample_exponential(self.rng, cfg.lam), Kind.ARRIVAL)
        candidates = self.eligible()
        if not candidates:
            return Occurrence(self.clock, Kind.ARRIVAL, dropped=True)
        idx = bisect.bisect_right(self._mix, self.rng.random())
        etype = cfg.catalog.entries[min(idx, len(cfg.catalog) - 1)]
        rid = candidates[int(self.rng.random() * len(candidates))]
        robot = self.robots[rid]
        robot.status = Status.EVENT
        robot.event = etype
        return Occurrence(self.clock, Kind.ARRIVAL, rid, etype)

    def _complete_service(self) -> Occurrence:
        req = self.in_service
        self.in_service = None
        robot = self.robots[req.robot_id]
        robot.idle_accum += self.clock - robot.idle_since
        robot.idle_since = None
        robot.status = Status.AUTONOMY
        robot.event = None
        self._start_service()
        return Occurrence(self.clock, Kind.SERVICE_COMPLETION, req.robot_id, req.event)

    def _start_service(self) -> None:
        if self.in_service is not None or not self.queue:
            return
        req = self.queue.dequeue_next()
        self.in_service = req
        self.robots[req.robot_id].wait_accum += self.clock - req.arrival_time
        duration = sample_exponential(self.rng, 1.0 / req.expected_service)
        self.schedule(self.clock + duration, Kind.SERVICE_COMPLETION)

    def apply_decision(self, robot_id: int, action: Action, rng=None) -> Transition:
        rng = self.rng if rng is None else rng
        robot = self.robots[robot_id]
        if robot.status is not Status.EVENT:
            raise QueueStateError(f"robot {robot_id} has no pending event (status {robot.status})")
        etype = robot.event
        n_q = len(self.queue)
        t_serv = etype.service_multiplier / self.config.mu
        action = Action(action)
        failed = False
        if action is Action.JOIN:
            robot.status = Status.WAITING
            self._enqueue(robot, Request(robot_id, etype, self.clock, t_serv))
        else:
            failed = rng.random() < etype.fail_prob
            if failed:
                robot.status = Status.FAILED
                expected = t_serv * self.config.fail_service_multiplier
                self._enqueue(robot, Request(robot_id, etype, self.clock, expected, is_failure=True))
            else:
                robot.status = Status.AUTONOMY
                robot.event = None
        return Transition(robot_id, action, robot.status, n_q, failed, t_serv)

    def _enqueue(self, robot: RobotState, req: Request) -> None:
        robot.idle_since = self.clock
        self.queue.enqueue(req)
        self._start_service()

    # -- views ------------------------------------------------------------
    def observe(self, robot_id: int) -> Observation:
        r = self.robots[robot_id]
        joint = tuple((x.code, x.n_tasks) for x in self.robots)
        return Observation(
            robot_id, r.code, r.n_tasks, len(self.queue), joint, self.config.n_robots, self.clock
        )

    def check_invariants(self) -> None:
        """Raise AssertionError if the queue/robot bookkeeping is inconsistent."""
        held = sum(r.status in (Status.WAITING, Status.FAILED) for r in self.robots)
        in_service = 1 if self.in_service is not None else 0
        assert len(self.queue) == held - in_service, (len(self.queue), held, in_service)
        assert in_service or not self.queue, "operator idle with a non-empty queue"
        for r in self.robots:
            assert (r.idle_since is not None) == (r.status in (Status.WAITING, Status.FAILED))
            assert 0 <= r.n_tasks <= r.initial_tasks
        ids = [q.robot_id for q in self.queue.pending]
        assert len(ids) == len(set(ids))


class Policy(Protocol):
    def act(self, obs: Observation, rng: np.random.Generator) -> Action: ...


class LearningHook(Protocol):
    def observe(self, obs: Observation) -> None: ...

    def record(self, obs: Observation, action: Action, reward: float) -> None: ...

    def end_episode(self) -> None: ...


class AlwaysJoin:
    """Non-balking robots: the plain FIFO/SJF queue baselines."""

    def act(self, obs, rng):
        return Action.JOIN


class AlwaysBalk:
    def act(self, obs, rng):
        return Action.BALK


class NaorPolicy:
    """Join iff the pending queue is no longer than a fixed threshold."""

    def __init__(self, threshold: int):
        self.threshold = int(threshold)

    def act(self, obs, rng):
        return Action.JOIN if obs.queue_len <= self.threshold else Action.BALK


def run_episode(
    config: SimConfig,
    policy: Policy,
    learner: Optional[LearningHook] = None,
    *,
    params: Optional[LearningParams] = None,
    seed: SeedLike = None,
    trace: Optional[list] = None,
) -> EpisodeMetrics:
    """Simulate one episode and return its metrics.

    ``params`` supplies the reward constants; unresolved mu_bar/lambda_bar
    are taken from ``config``. ``seed`` defaults to ``config.seed``. When
    ``trace`` is a list, every occurrence and transition is appended to it.
    """
    params = (params or LearningParams()).resolve(config.lam, config.mu)
    sim_rng, pol_rng = episode_streams(config.seed if seed is None else seed)
    sim = Simulation(config, sim_rng)
    m = EpisodeMetrics()
    horizon = config.episode_event_horizon
    while True:
        try:
            occ = sim.advance()
        except EpisodeEnd:
            break
        if trace is not None:
            trace.append(occ)
        if occ.dropped:
            m.dropped_arrivals += 1
        if occ.needs_decision:
            obs = sim.observe(occ.robot_id)
            if learner is not None:
                learner.observe(obs)
            action = Action(policy.act(obs, pol_rng))
            tr = sim.apply_decision(occ.robot_id, action)
            if trace is not None:
                trace.append(tr)
            if action is Action.JOIN:
                # expected service as the robots estimate it, not the simulated rate
                t_serv = occ.event.service_multiplier * params.mean_service_time
                r = reward_join(tr.queue_len, params, t_serv)
                m.joins_total += 1
            else:
                outcome = Outcome.FAILED if tr.failed else Outcome.AUTONOMY
                r = reward_balk(outcome, tr.queue_len, params)
                m.balks_total += 1
                m.failures_total += tr.failed
            m.events_total += 1
            m.team_reward += r
            if learner is not None:
                learner.record(obs, action, r)
        if sim.arrivals_open and (m.events_total >= horizon or sim.total_tasks_left == 0):
            sim.close_arrivals()
    if learner is not None:
        learner.end_episode()
    m.idle_time_total = sum(r.idle_accum for r in sim.robots)
    m.wait_time_total = sum(r.wait_accum for r in sim.robots)
    m.episode_duration = sim.clock
    m.tasks_completed = sum(r.tasks_completed for r in sim.robots)
    return m
