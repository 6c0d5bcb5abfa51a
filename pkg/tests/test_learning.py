import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opqueue.learning import (
    Action,
    InvalidInputError,
    LearningParams,
    Model,
    Outcome,
    QTable,
    encode_state,
    format_key,
    parse_key,
    q_update,
    read_policy,
    reward_balk,
    reward_join,
    select_action,
    write_policy,
)
from opqueue.queue_core import EventCatalog, EventType
from opqueue.sim_kernel import SimConfig, run_episode
from opqueue.training import ConfigurationError, QAgent, train

MB = 1 / 0.27
P = LearningParams(mu_bar=MB, lambda_bar=0.25)


class TestParams:
    def test_defaults(self):
        p = LearningParams()
        assert (p.alpha, p.gamma, p.epsilon, p.r_s, p.r_f, p.r_t) == (0.1, 0.9, 0.1, 1.0, -2.0, 0.3)

    def test_resolve_conventions(self):
        assert LearningParams().resolve(0.25, 0.27).mu_bar == pytest.approx(3.7037, abs=1e-4)
        assert LearningParams(mu_bar_convention="rate").resolve(0.25, 0.27).mu_bar == 0.27
        assert LearningParams(mu_bar=2.0).resolve(0.25, 0.27).mu_bar == 2.0

    @pytest.mark.parametrize(
        "kw", [{"alpha": 1.5}, {"alpha": -0.1}, {"gamma": 1.0}, {"epsilon": 2}, {"mu_bar": 0},
               {"lambda_bar": -1}, {"mu_bar_convention": "hours"}, {"alpha_decay": 0}],
    )
    def test_ranges(self, kw):
        with pytest.raises(InvalidInputError):
            LearningParams(**kw)


class TestEncodeState:
    def test_il_u(self):
        assert encode_state(("E1", 3), 4, model=Model.IL_U) == ("E1", 3)

    def test_il_o(self):
        assert encode_state(("E1", 3), 2, model=Model.IL_O, n_robots=5) == ("E1", 3, 2)

    def test_il_o_clamps_queue(self):
        assert encode_state(("E2", 1), 9, model="il-o", n_robots=5) == ("E2", 1, 5)

    def test_tl(self):
        key = encode_state(("E1", 3), 0, [("E1", 3), ("A", 5)], model=Model.TL)
        assert key == (("E1", 3), ("A", 5))

    def test_tl_needs_joint_view(self):
        with pytest.raises(InvalidInputError):
            encode_state(("E1", 3), 0, model=Model.TL)

    @pytest.mark.parametrize(
        "key, model",
        [(("E1", 3), Model.IL_U), (("E3", 0, 4), Model.IL_O), ((("E1", 3), ("A", 5), ("W", 0)), Model.TL)],
    )
    def test_key_text_round_trip(self, key, model):
        assert parse_key(format_key(key), model) == key

    def test_malformed_key(self):
        with pytest.raises(InvalidInputError):
            parse_key("E1,3", Model.IL_O)


class TestSelectAction:
    def test_greedy(self):
        q = QTable({"s": [0.5, 0.2]})
        assert select_action(q, "s", 0.0, np.random.default_rng(0)) is Action.JOIN

    def test_uniform_exploration(self):
        rng = np.random.default_rng(99)
        q = QTable({"s": [5.0, 0.0]})
        joins = sum(select_action(q, "s", 1.0, rng) is Action.JOIN for _ in range(10_000))
        assert joins / 10_000 == pytest.approx(0.5, abs=0.02)

    def test_tie_is_seeded(self):
        q = QTable()
        first = [select_action(q, "s", 0.0, np.random.default_rng(s)) for s in range(40)]
        again = [select_action(q, "s", 0.0, np.random.default_rng(s)) for s in range(40)]
        assert first == again
        assert set(first) == {Action.JOIN, Action.BALK}


class TestRewards:
    def test_join(self):
        assert reward_join(0, P, MB) == pytest.approx(-2.7037, abs=1e-4)
        assert reward_join(2, P, MB) == pytest.approx(-10.1111, abs=1e-4)
        assert reward_join(0, P, 0.0) == 1.0

    def test_balk(self):
        assert reward_balk(Outcome.AUTONOMY, 7, P) == 0.3
        assert reward_balk(Outcome.FAILED, 0, P) == pytest.approx(-29.6296, abs=1e-4)
        assert reward_balk(Outcome.FAILED, 5, P) == pytest.approx(-24.6296, abs=1e-4)


class TestQUpdate:
    def test_first_step(self):
        q = q_update(QTable(), "s", Action.JOIN, 1.0, "t", LearningParams())
        assert q.values("s") == pytest.approx((0.1, 0.0))

    def test_zero_alpha(self):
        q = QTable({"s": [0.5, -1.0], "t": [1.0, 0.0]})
        before = q.as_dict()
        q_update(q, "s", Action.BALK, 123.0, "t", LearningParams(alpha=0.0))
        assert q.as_dict() == before

    def test_bootstrap(self):
        q = QTable({"s": [0.5, 0.0], "t": [1.0, 0.0]})
        q_update(q, "s", Action.JOIN, -2.0, "t", LearningParams())
        assert q.values("s")[0] == pytest.approx(0.34)

    def test_terminal_has_no_bootstrap(self):
        q = QTable({"s": [0.5, 0.0]})
        q_update(q, "s", Action.JOIN, -2.0, None, LearningParams())
        assert q.values("s")[0] == pytest.approx(0.5 + 0.1 * (-2.0 - 0.5))

    def test_decayed_alpha_is_sample_mean(self):
        # gamma=0, alpha_k = 1/k: Q must equal the running mean exactly
        params = LearningParams(alpha=1.0, gamma=0.0, alpha_decay=1.0)
        q = QTable()
        rs = [3.0, -1.0, 4.0, 1.0]
        for r in rs:
            q_update(q, "s", Action.JOIN, r, "s", params)
        assert q.values("s")[0] == pytest.approx(np.mean(rs))


def test_stationary_bandit():
    params = LearningParams(alpha=1.0, gamma=0.0, alpha_decay=1.0)
    rng = np.random.default_rng(5)
    q = QTable()
    seen = {Action.JOIN: [], Action.BALK: []}
    means = {Action.JOIN: -2.7, Action.BALK: 0.3}
    for _ in range(10_000):
        a = Action.JOIN if rng.random() < 0.5 else Action.BALK
        r = rng.normal(means[a], 2.0)
        seen[a].append(r)
        q_update(q, "only", a, r, "only", params)
    qj, qb = q.values("only")
    assert abs(qj - np.mean(seen[Action.JOIN])) <= 0.05
    assert abs(qb - np.mean(seen[Action.BALK])) <= 0.05


keys = st.sampled_from(["a", "b", "c", "d"])
update = st.tuples(keys, st.sampled_from([Action.JOIN, Action.BALK]), st.floats(-1, 1), keys | st.none())


@settings(max_examples=1000, deadline=None)
@given(
    updates=st.lists(update, max_size=200),
    r_max=st.floats(0.1, 50),
    alpha=st.floats(0.01, 1.0),
    gamma=st.floats(0.0, 0.99),
    decay=st.none() | st.floats(0.5, 10),
)
def test_q_values_stay_bounded(updates, r_max, alpha, gamma, decay):
    params = LearningParams(alpha=alpha, gamma=gamma, alpha_decay=decay)
    q = QTable()
    bound = r_max / (1 - gamma)
    for s, a, frac, s_next in updates:
        q_update(q, s, a, frac * r_max, s_next, params)
        assert all(abs(v) <= bound * (1 + 1e-9) for row in q.entries.values() for v in row)


# multiples of 1/8 in a modest range add exactly in binary floating point
eighths = st.integers(-8000, 8000).map(lambda i: i / 8)


@settings(max_examples=1000, deadline=None)
@given(rows=st.dictionaries(st.integers(0, 50), st.tuples(eighths, eighths), max_size=30), c=eighths)
def test_argmax_invariance(rows, c):
    q = QTable(rows)
    shifted = QTable({k: (qj + c, qb + c) for k, (qj, qb) in rows.items()})
    for k in rows:
        assert q.greedy(k) == shifted.greedy(k)


class TestTrain:
    def test_curve_length(self):
        tables, curve = train(SimConfig(), Model.IL_O, n_episodes=10, seed=1)
        assert curve.shape == (10,)
        assert set(tables) == set(range(5))

    def test_tl_has_one_table(self):
        tables, _ = train(SimConfig(), "tl", n_episodes=5, seed=1)
        assert list(tables) == [0]

    def test_zero_alpha_keeps_tables_zero(self):
        tables, _ = train(SimConfig(), Model.IL_O, LearningParams(alpha=0.0), n_episodes=20, seed=2)
        assert all(v == 0.0 for t in tables.values() for row in t.entries.values() for v in row)

    def test_bad_inputs(self):
        with pytest.raises(ConfigurationError):
            train(SimConfig(), Model.IL_U, n_episodes=0)
        with pytest.raises(ConfigurationError):
            train(SimConfig(), "dqn", n_episodes=5)

    def test_deterministic(self):
        a = train(SimConfig(), Model.TL, n_episodes=30, seed=8)
        b = train(SimConfig(), Model.TL, n_episodes=30, seed=8)
        assert a[0] == b[0]
        assert np.array_equal(a[1], b[1])


def replay(entries, params):
    """Standalone tabular updater, written without QTable/q_update."""
    table = {}
    for s, a, r, s_next in entries:
        row = table.setdefault(s, [0.0, 0.0])
        boot = 0.0 if s_next is None else params.gamma * max(table.get(s_next, [0.0, 0.0]))
        row[a] = row[a] + params.alpha * (r + boot - row[a])
    return table


@pytest.mark.parametrize("model", [Model.IL_U, Model.IL_O])
def test_per_robot_isolation(model):
    log = []
    params = LearningParams()
    tables, _ = train(SimConfig(), model, params, n_episodes=150, seed=21, log=log)
    assert {owner for owner, *_ in log} == set(range(5))
    for owner, table in tables.items():
        own = [(s, a, r, s_next) for o, s, a, r, s_next in log if o == owner]
        expected = replay(own, params)
        assert set(expected) == set(table.entries)
        for s, row in expected.items():
            assert table.values(s) == pytest.approx(tuple(row), rel=1e-12, abs=1e-12)


class ObservationRecorder(QAgent):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.seen = []

    def observe(self, obs):
        self.seen.append(obs)
        super().observe(obs)


def test_tl_distinguishes_at_least_as_many_states():
    cfg = SimConfig()
    agent = ObservationRecorder(Model.TL, LearningParams(), cfg.n_robots)
    for ep in range(200):
        run_episode(cfg, agent, agent, seed=ep)
    tl = {encode_state((o.code, o.n_tasks), o.queue_len, o.joint, Model.TL) for o in agent.seen}
    il_o = {encode_state((o.code, o.n_tasks), o.queue_len, o.joint, Model.IL_O, o.n_robots) for o in agent.seen}
    assert len(tl) >= len(il_o)


class TestPolicyFile:
    def test_round_trip(self, tmp_path):
        tables, _ = train(SimConfig(), Model.IL_O, n_episodes=40, seed=4)
        path = tmp_path / "policy.txt"
        write_policy(path, tables, Model.IL_O)
        model, back = read_policy(path)
        assert model is Model.IL_O
        assert set(back) == set(tables)
        for owner in tables:
            for k, (qj, qb) in tables[owner].as_dict().items():
                assert back[owner].values(k) == pytest.approx((qj, qb), rel=1e-8)

    def test_layout_is_sorted_and_stable(self):
        t = QTable({("E2", 1, 0): [0.123456789012, -1.0], ("E1", 3, 2): [2.0, 1.0 / 3]})
        buf = io.StringIO()
        write_policy(buf, {0: t}, "il-o")
        lines = buf.getvalue().splitlines()
        assert lines[0].startswith("#")
        assert lines[1:] == ["il-o\t0\tE1,3,2\t2\t0.333333333", "il-o\t0\tE2,1,0\t0.123456789\t-1"]
        buf2 = io.StringIO()
        write_policy(buf2, read_policy(io.StringIO(buf.getvalue()))[1], "il-o")
        assert buf2.getvalue() == buf.getvalue()

    @pytest.mark.parametrize("text", ["", "# only a header\n", "il-o\t0\tE1,3\t1\t2\n", "tl\t0\tE1:3\t1\n"])
    def test_bad_files(self, text):
        with pytest.raises(InvalidInputError):
            read_policy(io.StringIO(text))


# -- toy MDP checked against value iteration ---------------------------------
#
# One robot, one event type that always fails when ignored, so the queue is
# empty at every decision and both actions leave the task process alone. The
# state is the number of tasks left. Between decisions the robot spends an
# Exp(lam) stretch in autonomy; averaging the task phase uniformly, with
# x = lam * d and e = exp(-x), the chance of finishing j tasks in between is
#   j = 0:  (x - 1 + e) / x
#   j >= 1: (1 - e)^2 e^(-x (j - 1)) / x
# and finishing the last task ends the episode.

TOY_LAM, TOY_MU, TOY_D, TOY_TASKS = 0.25, 0.5, 8.0, 5


def toy_oracle(gamma=0.9):
    x = TOY_LAM * TOY_D
    e = math.exp(-x)
    r_join = 1.0 - 1.0 / TOY_MU
    r_balk = -2.0 * (1.0 / TOY_MU) / TOY_LAM
    p = np.zeros((TOY_TASKS + 1, TOY_TASKS + 1))  # p[k, j]: k tasks -> j tasks (0 = terminal)
    for k in range(1, TOY_TASKS + 1):
        p[k, k] = (x - 1 + e) / x
        for j in range(1, k):
            p[k, j] = (1 - e) ** 2 * math.exp(-x * (k - j - 1)) / x
        p[k, 0] = 1 - p[k, 1:].sum()
    v = np.zeros(TOY_TASKS + 1)
    for _ in range(2000):
        cont = gamma * p @ v
        q = np.stack([r_join + cont, r_balk + cont], axis=1)
        v = q.max(axis=1)
        v[0] = 0.0
    return {k: tuple(q[k]) for k in range(1, TOY_TASKS + 1)}


TOY_CONFIG = SimConfig(
    n_robots=1,
    n_tasks_total=TOY_TASKS,
    lam=TOY_LAM,
    mu=TOY_MU,
    task_duration=TOY_D,
    episode_event_horizon=10**6,
    catalog=EventCatalog((EventType("E1", "Always-Fail", 1.0),)),
)


def test_toy_greedy_policy_matches_oracle():
    oracle = toy_oracle()
    params = LearningParams(alpha=1.0, gamma=0.9, epsilon=1.0, alpha_decay=5.0)
    tables, _ = train(TOY_CONFIG, Model.IL_U, params, n_episodes=5000, seed=1)
    learned = tables[0]
    for k, (qj, qb) in oracle.items():
        best = Action.JOIN if qj > qb else Action.BALK
        assert learned.greedy(("E1", k)) is best


@pytest.mark.slow
def test_toy_values_match_oracle():
    oracle = toy_oracle()
    params = LearningParams(alpha=1.0, gamma=0.9, epsilon=1.0, alpha_decay=5.0)
    tables, _ = train(TOY_CONFIG, Model.IL_U, params, n_episodes=20_000, seed=2)
    for k, expected in oracle.items():
        assert tables[0].values(("E1", k)) == pytest.approx(expected, abs=0.1)
