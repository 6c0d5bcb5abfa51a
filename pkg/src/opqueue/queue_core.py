"""Event types, operator requests, the shared operator queue and Naor's threshold."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence


class InvalidParameterError(ValueError):
    pass


class QueueStateError(RuntimeError):
    """Raised when a queue operation would break a simulator invariant."""


class EmptyQueueError(QueueStateError):
    pass


class Discipline(str, enum.Enum):
    FIFO = "fifo"
    SJF = "sjf"


@dataclass(frozen=True)
class EventType:
    id: str
    label: str
    fail_prob: float
    service_multiplier: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.fail_prob <= 1.0:
            raise InvalidParameterError(f"fail_prob must be in [0, 1], got {self.fail_prob}")
        if not self.service_multiplier > 0:
            raise InvalidParameterError(
                f"service_multiplier must be > 0, got {self.service_multiplier}"
            )


@dataclass(frozen=True)
class EventCatalog:
    entries: tuple[EventType, ...]
    mix: tuple[float, ...] = ()

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise InvalidParameterError("catalog needs at least one event type")
        ids = [e.id for e in entries]
        if len(set(ids)) != len(ids):
            raise InvalidParameterError(f"duplicate event ids in catalog: {ids}")
        mix = tuple(float(p) for p in self.mix) if self.mix else (1.0 / len(entries),) * len(entries)
        if len(mix) != len(entries):
            raise InvalidParameterError(
                f"mix has {len(mix)} components for {len(entries)} event types"
            )
        if any(p < 0 for p in mix) or abs(sum(mix) - 1.0) > 1e-9:
            raise InvalidParameterError(f"mix must be a probability vector, got {mix}")
        object.__setattr__(self, "mix", mix)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i) -> EventType:
        return self.entries[i]

    def by_id(self, event_id: str) -> EventType:
        for e in self.entries:
            if e.id == event_id:
                return e
        raise KeyError(event_id)

    def with_mix(self, mix: Sequence[float]) -> "EventCatalog":
        return EventCatalog(self.entries, tuple(mix))

    def with_fail_probs(self, probs: Sequence[float]) -> "EventCatalog":
        if len(probs) != len(self.entries):
            raise InvalidParameterError("one failure probability per event type is required")
        entries = tuple(
            EventType(e.id, e.label, float(p), e.service_multiplier)
            for e, p in zip(self.entries, probs)
        )
        return EventCatalog(entries, self.mix)

    def with_service_multipliers(self, mults: Sequence[float]) -> "EventCatalog":
        if len(mults) != len(self.entries):
            raise InvalidParameterError("one service multiplier per event type is required")
        entries = tuple(
            EventType(e.id, e.label, e.fail_prob, float(m))
            for e, m in zip(self.entries, mults)
        )
        return EventCatalog(entries, self.mix)


def default_catalog() -> EventCatalog:
    """The three vessel event types with their failure probabilities, uniform mix."""
    return EventCatalog(
        (
            EventType("E1", "Battery-Recharge", 0.9),
            EventType("E2", "Traversing-Dangerous-Area", 0.4),
            EventType("E3", "Losing-Connection", 0.2),
        )
    )


def sjf_catalog() -> EventCatalog:
    """Extension preset with unequal per-type service times.

    Not part of the original vessel setup, where every request shares one
    service rate. Only useful to make SJF ordering differ from FIFO.
    """
    return default_catalog().with_service_multipliers((1.0, 1.5, 0.5))


@dataclass(frozen=True)
class Request:
    robot_id: int
    event: EventType
    arrival_time: float
    expected_service: float
    is_failure: bool = False

    def __post_init__(self):
        if self.arrival_time < 0:
            raise InvalidParameterError(f"arrival_time must be >= 0, got {self.arrival_time}")
        if not self.expected_service > 0:
            raise InvalidParameterError(
                f"expected_service must be > 0, got {self.expected_service}"
            )


@dataclass
class OperatorQueue:
    """Pending operator requests, unbounded, at most one per robot.

    The request currently in service is not part of ``pending``.
    """

    discipline: Discipline = Discipline.FIFO
    pending: list[Request] = field(default_factory=list)

    def __len__(self):
        return len(self.pending)

    def __bool__(self):
        return bool(self.pending)

    def __contains__(self, robot_id: int):
        return any(r.robot_id == robot_id for r in self.pending)

    def enqueue(self, req: Request) -> "OperatorQueue":
        if req.robot_id in self:
            raise QueueStateError(f"robot {req.robot_id} already has a pending request")
        self.pending.append(req)
        return self

    def dequeue_next(self) -> Request:
        if not self.pending:
            raise EmptyQueueError("dequeue from an empty operator queue")
        if self.discipline is Discipline.FIFO:
            idx = 0
        else:
            # pending is kept in arrival order, so min() picks the oldest on ties
            idx = min(range(len(self.pending)), key=lambda i: self.pending[i].expected_service)
        return self.pending.pop(idx)


def enqueue(queue: OperatorQueue, req: Request) -> OperatorQueue:
    return queue.enqueue(req)


def dequeue_next(queue: OperatorQueue) -> Request:
    return queue.dequeue_next()


def naor_threshold(R: float, C: float, mu: float) -> int:
    """Largest queue length at which a reward-R, cost-C customer still joins.

    A customer joins while ``R - n * C / mu >= 0``, so the threshold is
    ``floor(R * mu / C)``.
    """
    if not C > 0:
        raise InvalidParameterError(f"waiting cost C must be > 0, got {C}")
    if not mu > 0:
        raise InvalidParameterError(f"service rate mu must be > 0, got {mu}")
    if R < 0:
        raise InvalidParameterError(f"service reward R must be >= 0, got {R}")
    return int(math.floor(R * mu / C))
