import numpy as np
import pytest

from opqueue.cli import RunManifest, main
from opqueue.config import ConfigError, dump_config, load_config, parse_config
from opqueue.experiments import UsageError, read_learning_curve
from opqueue.learning import LearningParams, Model, greedy_actions, read_policy
from opqueue.queue_core import Discipline
from opqueue.sim_kernel import SimConfig


class TestParseConfig:
    def test_empty_gives_defaults(self):
        sim, params = parse_config("")
        assert sim == SimConfig()
        assert params == LearningParams()
        assert [e.fail_prob for e in sim.catalog.entries] == [0.9, 0.4, 0.2]

    def test_negative_lambda(self):
        with pytest.raises(ConfigError, match="lambda"):
            parse_config("[sim]\nlambda = -1\n")

    def test_gamma_passthrough(self):
        assert parse_config("[learning]\ngamma = 0.9\n")[1].gamma == 0.9

    def test_overrides(self):
        text = """
        [sim]
        n_robots = 3
        discipline = SJF   # shortest first
        [events]
        preset = sjf
        mix = 0.5, 0.25, 0.25
        [learning]
        mu_bar_convention = rate
        """
        sim, params = parse_config("\n".join(line.strip() for line in text.splitlines()))
        assert sim.n_robots == 3 and sim.discipline is Discipline.SJF
        assert sim.catalog.mix == (0.5, 0.25, 0.25)
        assert [e.service_multiplier for e in sim.catalog.entries] == [1.0, 1.5, 0.5]
        assert params.mu_bar_convention == "rate"

    @pytest.mark.parametrize(
        "text, needle",
        [("[sim]\nlamda = 1\n", "lamda"), ("[robots]\nn = 1\n", "robots"),
         ("[learning]\nalpha = 2\n", "alpha"), ("[events]\nfail_probs = 0.9, x\n", "fail_probs"),
         ("[events]\nmix = 0.5, 0.5\n", "events"), ("[sim]\nn_robots = many\n", "n_robots"),
         ("not an ini file", "malformed")],
    )
    def test_errors_name_the_problem(self, text, needle):
        with pytest.raises(ConfigError, match=needle):
            parse_config(text)

    def test_dump_round_trip(self):
        sim = SimConfig(n_robots=4, lam=0.3, discipline=Discipline.SJF, seed=2**63 + 5).replace(
            catalog=SimConfig().catalog.with_mix((0.1, 0.45, 0.45)).with_fail_probs((0.8, 0.3, 0.1))
        )
        params = LearningParams(alpha=0.05, alpha_decay=3.0, mu_bar=2.5)
        assert parse_config(dump_config(sim, params)) == (sim, params)

    def test_load_none(self):
        assert load_config(None) == parse_config("")


class TestManifest:
    def test_train_needs_model(self):
        with pytest.raises(UsageError):
            RunManifest("train")

    def test_eval_needs_policy(self):
        with pytest.raises(UsageError):
            RunManifest("eval")

    def test_reproduce_figure_id(self):
        with pytest.raises(UsageError):
            RunManifest("reproduce", figure="fig8")


def test_train_then_eval(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--model", "il-o", "--episodes", "50", "--seed", "7", "--out", str(out)]) == 0
    curve = read_learning_curve(out / "learning_curve.csv")
    assert curve.shape == (50,)
    model, tables = read_policy(out / "policy.txt")
    assert model is Model.IL_O and set(tables) == set(range(5))
    manifest = (out / "manifest.ini").read_text()
    assert "# command: train" in manifest and "seed = 7" in manifest

    # the manifest alone reproduces the run
    again = tmp_path / "again"
    assert main(["train", "--model", "il-o", "--episodes", "50", "--seed", "7",
                 "--config", str(out / "manifest.ini"), "--out", str(again)]) == 0
    assert (again / "policy.txt").read_bytes() == (out / "policy.txt").read_bytes()

    ev = tmp_path / "eval"
    assert main(["eval", "--policy", str(out / "policy.txt"), "--runs", "30", "--out", str(ev)]) == 0
    lines = (ev / "test_summary.csv").read_text().splitlines()
    assert lines[0] == "policy,mean_reward,sem_reward,mean_idle,sem_idle,n_runs"
    assert lines[1].startswith("IL-O,") and lines[1].endswith(",30")


def test_policy_round_trip_keeps_greedy_actions(tmp_path):
    from opqueue.learning import write_policy
    from opqueue.training import train

    tables, _ = train(SimConfig(), Model.TL, n_episodes=60, seed=3)
    write_policy(tmp_path / "p.txt", tables, Model.TL)
    _, back = read_policy(tmp_path / "p.txt")
    assert greedy_actions(back) == greedy_actions(tables)


def test_eval_missing_policy(tmp_path, capsys):
    assert main(["eval", "--policy", str(tmp_path / "nope.txt"), "--out", str(tmp_path)]) == 1
    assert "opqueue: error:" in capsys.readouterr().err


def test_bad_figure_is_usage_error(tmp_path, capsys):
    assert main(["reproduce", "fig9", "--out", str(tmp_path)]) == 2
    assert "fig9" in capsys.readouterr().err


def test_bad_config_reports_key(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[sim]\nlambda = -1\n")
    assert main(["train", "--model", "tl", "--episodes", "5", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "lambda" in capsys.readouterr().err


def test_reproduce_twice_identical(tmp_path):
    args = ["reproduce", "fig5c", "--seed", "7", "--episodes", "20", "--runs", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("fig5c.csv", "manifest.ini"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_mu_bar_convention_flag(tmp_path):
    assert main(["train", "--model", "il-u", "--episodes", "5", "--mu-bar-convention", "rate",
                 "--out", str(tmp_path)]) == 0
    assert "mu_bar_convention = rate" in (tmp_path / "manifest.ini").read_text()
    assert np.isfinite(read_learning_curve(tmp_path / "learning_curve.csv")).all()
