"""Q-learning agents for the three state models and the episode training loop."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .learning import (
    Action,
    LearningParams,
    Model,
    QTable,
    encode_state,
    q_update,
    select_action,
)
from .sim_kernel import Observation, SeedLike, SimConfig, child_seed, run_episode


class ConfigurationError(ValueError):
    pass


TEAM = 0  # owner index of the single team-learner table


class QAgent:
    """Epsilon-greedy Q-learner acting for every robot of a team.

    IL models keep one table per robot and only ever update robot i's table
    with robot i's own decisions. TL keeps one table over joint states and
    treats every decision as its own. A decision's backup is applied when
    its owner reaches its next decision epoch, or without bootstrap at the
    end of the episode.

    With ``learn=False`` the agent is a frozen policy (no updates); pair it
    with ``epsilon=0`` for greedy execution.
    """

    def __init__(
        self,
        model,
        params: Optional[LearningParams] = None,
        n_robots: int = 5,
        tables: Optional[dict] = None,
        learn: bool = True,
        epsilon: Optional[float] = None,
        log: Optional[list] = None,
    ):
        self.model = Model.parse(model)
        self.params = params or LearningParams()
        self.n_robots = n_robots
        self.learn = learn
        self.epsilon = self.params.epsilon if epsilon is None else epsilon
        owners = [TEAM] if self.model is Model.TL else range(n_robots)
        self.tables: dict[int, QTable] = tables if tables is not None else {o: QTable() for o in owners}
        self._pending: dict[int, tuple] = {}
        self._keys: dict[int, tuple] = {}
        # (owner, s, a, r, s_next) per committed backup, for replay checks
        self.log = log

    def owner(self, obs: Observation) -> int:
        return TEAM if self.model is Model.TL else obs.robot_id

    def key(self, obs: Observation):
        return encode_state(
            (obs.code, obs.n_tasks), obs.queue_len, obs.joint, self.model, obs.n_robots
        )

    def table(self, owner: int) -> QTable:
        t = self.tables.get(owner)
        if t is None:
            t = self.tables[owner] = QTable()
        return t

    def _commit(self, owner: int, s_next) -> None:
        pend = self._pending.pop(owner, None)
        if pend is None:
            return
        s, a, r = pend
        q_update(self.table(owner), s, a, r, s_next, self.params)
        if self.log is not None:
            self.log.append((owner, s, a, r, s_next))

    # -- LearningHook -------------------------------------------------------
    def observe(self, obs: Observation) -> None:
        owner = self.owner(obs)
        key = self.key(obs)
        self._keys[obs.robot_id] = key
        if self.learn:
            self._commit(owner, key)

    def record(self, obs: Observation, action: Action, reward: float) -> None:
        if self.learn:
            self._pending[self.owner(obs)] = (self._keys[obs.robot_id], int(action), reward)

    def end_episode(self) -> None:
        for owner in list(self._pending):
            self._commit(owner, None)
        self._keys.clear()

    # -- Policy -------------------------------------------------------------
    def act(self, obs: Observation, rng: np.random.Generator) -> Action:
        key = self._keys.get(obs.robot_id)
        if key is None:
            key = self.key(obs)
        return select_action(self.table(self.owner(obs)), key, self.epsilon, rng)

    def frozen(self) -> "QAgent":
        """Greedy, non-learning copy sharing nothing with this agent."""
        tables = {o: t.copy() for o, t in self.tables.items()}
        return QAgent(self.model, self.params, self.n_robots, tables, learn=False, epsilon=0.0)


def train(
    config: SimConfig,
    model,
    params: Optional[LearningParams] = None,
    n_episodes: int = 2000,
    schedule=None,
    seed: SeedLike = None,
    callback: Optional[Callable] = None,
    log: Optional[list] = None,
) -> tuple[dict[int, QTable], np.ndarray]:
    """Train one model and return its tables and per-episode team reward.

    Episode ``k`` runs on the stream ``child_seed(seed, k)``. ``schedule``
    (anything with ``apply(config, episode)``) may change the simulated
    parameters from a given episode on; reward constants that were left
    unset follow the effective rates. ``callback(episode, metrics)`` is
    called after every episode.
    """
    try:
        model = Model.parse(model)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    if n_episodes < 1:
        raise ConfigurationError(f"n_episodes must be >= 1, got {n_episodes}")
    params = params or LearningParams()
    master = config.seed if seed is None else seed
    agent = QAgent(model, params, config.n_robots, log=log)
    curve = np.empty(n_episodes)
    for ep in range(n_episodes):
        cfg = schedule.apply(config, ep) if schedule is not None else config
        m = run_episode(cfg, agent, agent, params=params, seed=child_seed(master, ep))
        curve[ep] = m.team_reward
        if callback is not None:
            callback(ep, m)
    return agent.tables, curve
