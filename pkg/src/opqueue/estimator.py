"""scikit-learn style wrapper around the balking-policy learner."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _validation as val
from .experiments import run_test_phase
from .learning import Action, LearningParams, Model, read_policy, write_policy
from .sim_kernel import SimConfig
from .training import QAgent, train


class BalkingQLearner(BaseEstimator):
    """Learn join/balk policies for a robot team sharing one operator.

    ``fit`` takes the simulated scenario (a :class:`SimConfig`, a dict of
    its fields, or None for the default 5-robot setup) in place of a data
    matrix. ``predict`` maps decision-time observations to actions
    (0 = join, 1 = balk); exact ties resolve to join. The fitted estimator
    is itself a policy and can be passed to ``run_episode`` directly, in
    which case ties use the episode's policy stream.

    Parameters
    ----------
    model : {"tl", "il-u", "il-o"}
        State model: team learner, or independent learners without / with
        the queue length in their state.
    n_episodes : int
        Training episodes.
    alpha, gamma, epsilon : float
        Learning rate, discount and exploration rate.
    r_s, r_f, r_t : float
        Reward for a served join, failure coefficient, and successful-balk reward.
    mu_bar_convention : {"time", "rate"}
        Whether the reward's mu_bar is the mean service time or the rate.
    alpha_decay : float or None
        If set, the step size for the k-th update of a state-action pair is
        ``alpha * c / (c + k - 1)``.
    schedule : Schedule or None
        Per-episode parameter overrides during training.
    random_state : int, Generator or None
        Master seed.

    Attributes
    ----------
    tables_ : dict[int, QTable]
        One table per robot (IL models) or a single table under key 0 (TL).
    learning_curve_ : ndarray of shape (n_episodes,)
        Team reward of each training episode.
    config_ : SimConfig
    """

    def __init__(
        self,
        model="il-o",
        n_episodes=2000,
        alpha=0.1,
        gamma=0.9,
        epsilon=0.1,
        r_s=1.0,
        r_f=-2.0,
        r_t=0.3,
        mu_bar_convention="time",
        alpha_decay=None,
        schedule=None,
        random_state=None,
    ):
        self.model = model
        self.n_episodes = n_episodes
        self.alpha = alpha
        self.gamma = gamma
        self.epsilon = epsilon
        self.r_s = r_s
        self.r_f = r_f
        self.r_t = r_t
        self.mu_bar_convention = mu_bar_convention
        self.alpha_decay = alpha_decay
        self.schedule = schedule
        self.random_state = random_state

    def _learning_params(self) -> LearningParams:
        return LearningParams(
            alpha=self.alpha,
            gamma=self.gamma,
            epsilon=self.epsilon,
            r_s=self.r_s,
            r_f=self.r_f,
            r_t=self.r_t,
            mu_bar_convention=self.mu_bar_convention,
            alpha_decay=self.alpha_decay,
        )

    def fit(self, X=None, y=None):
        config = val.check_sim_config(X)
        model = val.check_model(self.model)
        n_episodes = val.check_positive_int(self.n_episodes, "n_episodes")
        seed = val.check_seed(self.random_state)
        params = self._learning_params()
        self.tables_, self.learning_curve_ = train(
            config, model, params, n_episodes, schedule=self.schedule, seed=seed
        )
        self.config_ = config
        self.model_ = model
        self.params_ = params
        self.seed_ = seed
        return self

    def _agent(self) -> QAgent:
        check_is_fitted(self, "tables_")
        return QAgent(self.model_, self.params_, self.config_.n_robots, self.tables_, learn=False, epsilon=0.0)

    def decision_function(self, X) -> np.ndarray:
        """``q_join - q_balk`` per observation; positive means join."""
        agent = self._agent()
        out = []
        for obs in val.check_observations(X):
            qj, qb = agent.table(agent.owner(obs)).values(agent.key(obs))
            out.append(qj - qb)
        return np.asarray(out, dtype=float)

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, int(Action.JOIN), int(Action.BALK))

    def act(self, obs, rng):
        return self._agent().act(obs, rng)

    def score(self, X=None, y=None, n_runs: int = 30, seed: Optional[int] = None) -> float:
        """Mean greedy test-phase team reward over ``n_runs`` episodes."""
        agent = self._agent()
        config = val.check_sim_config(X) if X is not None else self.config_
        stats = run_test_phase({"policy": agent}, config, n_runs, seed if seed is not None else self.seed_ + 1,
                               self.params_)
        return stats["policy"].mean_reward

    def save_policy(self, path) -> None:
        check_is_fitted(self, "tables_")
        write_policy(path, self.tables_, self.model_)

    @classmethod
    def from_policy(cls, path, config: Optional[SimConfig] = None, **kwargs) -> "BalkingQLearner":
        """Rebuild a fitted (frozen) estimator from a policy file."""
        model, tables = read_policy(path)
        est = cls(model=model.value, **kwargs)
        est.tables_ = tables
        est.learning_curve_ = np.empty(0)
        est.config_ = val.check_sim_config(config)
        est.model_ = Model.parse(model)
        est.params_ = est._learning_params()
        est.seed_ = val.check_seed(est.random_state if est.random_state is not None else 0)
        return est
