"""Tabular Q-learning pieces shared by every state model.

State keys are plain tuples so they hash fast inside the simulation loop:

* ``IL_U``: ``(S_b, n_tasks)``
* ``IL_O``: ``(S_b, n_tasks, s_q)`` with ``s_q`` clamped to the team size
* ``TL``:   ``((S_b, n_tasks), ...)`` one pair per robot, in robot order

``S_b`` is an event id (``"E1"``...) or one of ``"A"``, ``"W"``, ``"F"``.
"""

from __future__ import annotations

import enum
import io
import os
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Mapping, Optional, TextIO, Union

import numpy as np


class Model(str, enum.Enum):
    TL = "tl"
    IL_U = "il-u"
    IL_O = "il-o"

    @classmethod
    def parse(cls, value: Union[str, "Model"]) -> "Model":
        if isinstance(value, cls):
            return value
        norm = str(value).strip().lower().replace("_", "-")
        for m in cls:
            if m.value == norm:
                return m
        raise ValueError(f"unknown model {value!r}; expected one of tl, il-u, il-o")


class Action(enum.IntEnum):
    JOIN = 0
    BALK = 1


class Outcome(str, enum.Enum):
    FAILED = "F"
    AUTONOMY = "A"


class InvalidInputError(ValueError):
    pass


MU_BAR_CONVENTIONS = ("time", "rate")


@dataclass(frozen=True)
class LearningParams:
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon: float = 0.1
    r_s: float = 1.0
    r_f: float = -2.0
    r_t: float = 0.3
    # None means "take it from the simulated rates" (see resolve)
    mu_bar: Optional[float] = None
    lambda_bar: Optional[float] = None
    mu_bar_convention: str = "time"
    # None: constant alpha; otherwise alpha_k = alpha * c / (c + k - 1) per (state, action)
    alpha_decay: Optional[float] = None

    def __post_init__(self):
        # alpha = 0 is allowed and freezes the tables
        if not 0 <= self.alpha <= 1:
            raise InvalidInputError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0 <= self.gamma < 1:
            raise InvalidInputError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0 <= self.epsilon <= 1:
            raise InvalidInputError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.mu_bar is not None and not self.mu_bar > 0:
            raise InvalidInputError(f"mu_bar must be > 0, got {self.mu_bar}")
        if self.lambda_bar is not None and not self.lambda_bar > 0:
            raise InvalidInputError(f"lambda_bar must be > 0, got {self.lambda_bar}")
        if self.mu_bar_convention not in MU_BAR_CONVENTIONS:
            raise InvalidInputError(
                f"mu_bar_convention must be one of {MU_BAR_CONVENTIONS}, "
                f"got {self.mu_bar_convention!r}"
            )
        if self.alpha_decay is not None and not self.alpha_decay > 0:
            raise InvalidInputError(f"alpha_decay must be > 0, got {self.alpha_decay}")

    def resolve(self, lam: float, mu: float) -> "LearningParams":
        """Fill in mu_bar / lambda_bar from the arrival and service rates.

        Under the ``time`` convention mu_bar is the mean service time 1/mu;
        under ``rate`` it is mu itself. lambda_bar is always the arrival rate.
        Values set explicitly are kept.
        """
        mu_bar = self.mu_bar
        if mu_bar is None:
            mu_bar = 1.0 / mu if self.mu_bar_convention == "time" else mu
        lambda_bar = self.lambda_bar if self.lambda_bar is not None else lam
        return replace(self, mu_bar=mu_bar, lambda_bar=lambda_bar)

    @property
    def mean_service_time(self) -> float:
        """Mean service time implied by mu_bar under the active convention."""
        return self.mu_bar if self.mu_bar_convention == "time" else 1.0 / self.mu_bar

    def reward_bound(self, max_queue: int, t_serv_max: float) -> float:
        """Upper bound on |reward| for queue lengths up to ``max_queue``."""
        p = self if self.mu_bar is not None else self.resolve(1.0, 1.0)
        join = abs(p.r_s) + max_queue * p.mu_bar + t_serv_max
        fail = abs(p.r_f) * p.mu_bar / p.lambda_bar + max_queue
        return max(join, fail, abs(p.r_t))


def reward_join(n_q: int, params: LearningParams, t_serv: float) -> float:
    """Service reward minus the expected wait ahead and the own service time."""
    return params.r_s - (n_q * params.mu_bar + t_serv)


def reward_balk(outcome: Outcome, n_q: int, params: LearningParams) -> float:
    if Outcome(outcome) is Outcome.FAILED:
        return params.r_f * (params.mu_bar / params.lambda_bar) + n_q
    return params.r_t


# -- state encoding ---------------------------------------------------------

def encode_state(robot_view, queue_len, joint_view=None, model=Model.IL_O, n_robots=None):
    """Build the canonical key for one decision.

    ``robot_view`` is ``(S_b, n_tasks)``; ``joint_view`` is the sequence of
    every robot's ``(S_b, n_tasks)`` (needed for TL). ``n_robots`` caps the
    queue feature and defaults to ``len(joint_view)`` when that is given.
    """
    model = Model.parse(model)
    status, n_tasks = robot_view
    if model is Model.IL_U:
        return (status, int(n_tasks))
    if model is Model.IL_O:
        if n_robots is None:
            n_robots = len(joint_view) if joint_view is not None else queue_len
        return (status, int(n_tasks), min(int(queue_len), int(n_robots)))
    if joint_view is None:
        raise InvalidInputError("the TL model needs the joint view of all robots")
    return tuple((s, int(n)) for s, n in joint_view)


def format_key(key) -> str:
    if key and isinstance(key[0], tuple):
        return "|".join(f"{s}:{n}" for s, n in key)
    return ",".join(str(x) for x in key)


def parse_key(text: str, model: Model):
    model = Model.parse(model)
    text = text.strip()
    if model is Model.TL:
        pairs = []
        for part in text.split("|"):
            s, n = part.split(":")
            pairs.append((s, int(n)))
        return tuple(pairs)
    parts = text.split(",")
    expected = 2 if model is Model.IL_U else 3
    if len(parts) != expected:
        raise InvalidInputError(f"malformed {model.value} state key {text!r}")
    return (parts[0],) + tuple(int(p) for p in parts[1:])


# -- Q-table ----------------------------------------------------------------

class QTable:
    """Map from state key to ``[q_join, q_balk]``; unseen keys read as zeros."""

    def __init__(self, entries: Optional[Mapping] = None):
        self.entries: dict = {k: [float(v[0]), float(v[1])] for k, v in (entries or {}).items()}
        self.visits: dict = {}

    def __len__(self):
        return len(self.entries)

    def __contains__(self, key):
        return key in self.entries

    def __iter__(self) -> Iterator:
        return iter(self.entries)

    def values(self, key) -> tuple[float, float]:
        v = self.entries.get(key)
        if v is None:
            return (0.0, 0.0)
        return (v[0], v[1])

    def row(self, key) -> list:
        v = self.entries.get(key)
        if v is None:
            v = self.entries[key] = [0.0, 0.0]
        return v

    def max_value(self, key) -> float:
        v = self.entries.get(key)
        if v is None:
            return 0.0
        return v[0] if v[0] >= v[1] else v[1]

    def greedy(self, key) -> Optional[Action]:
        """Greedy action, or None on an exact tie."""
        qj, qb = self.values(key)
        if qj > qb:
            return Action.JOIN
        if qb > qj:
            return Action.BALK
        return None

    def copy(self) -> "QTable":
        out = QTable(self.entries)
        out.visits = dict(self.visits)
        return out

    def as_dict(self) -> dict:
        return {k: tuple(v) for k, v in self.entries.items()}

    def __eq__(self, other):
        if not isinstance(other, QTable):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __repr__(self):
        return f"QTable({len(self)} states)"


def select_action(q: QTable, s, epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy choice; exact ties go to a coin flip from ``rng``."""
    if rng.random() < epsilon:
        return Action.JOIN if rng.random() < 0.5 else Action.BALK
    best = q.greedy(s)
    if best is None:
        return Action.JOIN if rng.random() < 0.5 else Action.BALK
    return best


def q_update(q: QTable, s, a, r: float, s_next, params: LearningParams) -> QTable:
    """One Q-learning backup. ``s_next=None`` marks a terminal epoch (no bootstrap)."""
    a = int(a)
    row = q.row(s)
    alpha = params.alpha
    if params.alpha_decay is not None:
        k = q.visits.get((s, a), 0) + 1
        q.visits[(s, a)] = k
        c = params.alpha_decay
        alpha = params.alpha * c / (c + k - 1)
    target = r if s_next is None else r + params.gamma * q.max_value(s_next)
    row[a] += alpha * (target - row[a])
    return q


# -- policy files -----------------------------------------------------------

POLICY_HEADER = "# opqueue policy v1: model owner state q_join q_balk"

PathOrFile = Union[str, os.PathLike, TextIO]


def write_policy(dest: PathOrFile, tables: Mapping[int, QTable], model) -> None:
    """Write Q-tables as tab-separated lines, sorted by owner then state.

    ``tables`` maps an owner (robot index, or 0 for the single team learner)
    to its table.
    """
    model = Model.parse(model)
    lines = [POLICY_HEADER]
    for owner in sorted(tables):
        table = tables[owner]
        # keys mix str and int in fixed positions, so plain tuple order is total
        for key in sorted(table.entries):
            qj, qb = table.entries[key]
            lines.append(f"{model.value}\t{owner}\t{format_key(key)}\t{qj:.9g}\t{qb:.9g}")
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)


def read_policy(src: PathOrFile) -> tuple[Model, dict[int, QTable]]:
    if hasattr(src, "read"):
        text = src.read()
    else:
        with open(src, encoding="utf-8") as fh:
            text = fh.read()
    model = None
    tables: dict[int, QTable] = {}
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise InvalidInputError(f"policy line {lineno}: expected 5 fields, got {len(fields)}")
        m = Model.parse(fields[0])
        if model is None:
            model = m
        elif m is not model:
            raise InvalidInputError(f"policy line {lineno}: mixed models {model.value}/{m.value}")
        owner = int(fields[1])
        key = parse_key(fields[2], m)
        q = tables.setdefault(owner, QTable())
        q.entries[key] = [float(fields[3]), float(fields[4])]
    if model is None:
        raise InvalidInputError("policy file holds no entries")
    return model, tables


def greedy_actions(tables: Mapping[int, QTable]) -> dict:
    """``{(owner, key): action or None}`` for every stored state."""
    return {(o, k): t.greedy(k) for o, t in tables.items() for k in t.entries}


def iter_keys(tables: Iterable[QTable]) -> set:
    out = set()
    for t in tables:
        out.update(t.entries)
    return out
