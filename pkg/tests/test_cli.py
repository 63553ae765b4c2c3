import json
import subprocess
import sys

import numpy as np
import pytest

from regretlab import TabularMDP, chain, heaven_hell, load_mdp, save_mdp
from regretlab.cli import main
from regretlab.errors import ConfigError


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"environment": {"prior": "heaven_hell", "p": 0.5},
                                "agent": {"agent": "psrl", "H": 2}, "T": 20, "n_seeds": 10,
                                "decomposition": "finite"}))
    return path


class TestRun:
    def test_writes_outputs(self, capsys, config, tmp_path):
        code, out, _ = run(capsys, "run", "--config", str(config), "--out", str(tmp_path / "o"))
        assert code == 0 and "mean final regret" in out
        files = sorted(p.name for p in (tmp_path / "o").iterdir())
        assert len(files) == 11 and "summary.json" in files

    def test_rerun_is_byte_identical(self, capsys, config, tmp_path):
        for name, jobs in (("a", "1"), ("b", "3")):
            run(capsys, "run", "--config", str(config), "--out", str(tmp_path / name), "--jobs", jobs)
        for f in (tmp_path / "a").iterdir():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_seed_override(self, capsys, config, tmp_path):
        run(capsys, "run", "--config", str(config), "--out", str(tmp_path / "s"), "--seed", "100")
        assert (tmp_path / "s" / "seed_109.csv").exists()
        assert not (tmp_path / "s" / "seed_0.csv").exists()

    def test_malformed_json(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"T": 3,,}')
        code, _, err = run(capsys, "run", "--config", str(bad), "--out", str(tmp_path / "o"))
        assert code == 2 and "bad.json: line 1" in err
        assert not (tmp_path / "o").exists()

    def test_invalid_field(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"environment": {"name": "chain"}, "agent": {"agent": "ofu"},
                                   "T": -1, "n_seeds": 2}))
        code, _, err = run(capsys, "run", "--config", str(bad), "--out", str(tmp_path / "o"))
        assert code == 2 and "T:" in err

    def test_missing_config_file(self, capsys, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert exc.value.code == 2


class TestCounterexample:
    def test_full_scale_horizon(self, capsys):
        code, out, _ = run(capsys, "counterexample", "--hmax", "1000", "--T", "1000", "--p", "0.5")
        assert code == 0
        assert "absolute: 249.75" in out and "signed: -249.75" in out

    def test_small(self, capsys):
        assert "absolute: 0.25" in run(capsys, "counterexample", "--hmax", "2", "--T", "2")[1]

    def test_point_mass(self, capsys):
        assert "absolute: 0\n" in run(capsys, "counterexample", "--hmax", "5", "--T", "5",
                                      "--p", "1.0")[1]

    def test_monte_carlo(self, capsys):
        code, out, _ = run(capsys, "counterexample", "--hmax", "20", "--T", "20", "--mc-seeds", "3000")
        assert code == 0
        z = float(out.rsplit("z = ", 1)[1])
        assert abs(z) < 4

    def test_rejects_hmax_one(self, capsys):
        assert run(capsys, "counterexample", "--hmax", "1", "--T", "5")[0] == 2

    def test_rejects_bad_probability(self):
        with pytest.raises(SystemExit) as exc:
            main(["counterexample", "--hmax", "3", "--T", "3", "--p", "1.5"])
        assert exc.value.code == 2


def test_heaven_hell(capsys):
    code, out, _ = run(capsys, "heaven-hell", "--T", "1000", "--p", "0.5")
    assert code == 0 and "expected regret: 500\n" in out


class TestClassify:
    def test_builtin(self, capsys):
        out = run(capsys, "classify", "--env", "heaven_hell")[1]
        assert "communicating: false" in out and "weakly_communicating: false" in out

    def test_single_state_file(self, capsys, tmp_path):
        f = tmp_path / "one.json"
        save_mdp(TabularMDP(np.ones((1, 1, 1)), np.ones((1, 1)), False), f)
        out = run(capsys, "classify", "--mdp", str(f))[1]
        assert all(f"{k}: true" in out for k in ("ergodic", "unichain", "communicating",
                                                  "weakly_communicating"))

    def test_chain_export(self, capsys, tmp_path):
        f = tmp_path / "chain.json"
        save_mdp(chain(3), f)
        assert "communicating: true" in run(capsys, "classify", "--mdp", str(f))[1]

    def test_invalid_schema(self, capsys, tmp_path):
        f = tmp_path / "bad.json"
        f.write_text(json.dumps({"n_states": 2, "n_actions": 1,
                                 "transitions": [[[1.0, 0.0]], [[0.3, 0.3]]],
                                 "rewards": [[{"kind": "point", "value": 0}]] * 2}))
        code, _, err = run(capsys, "classify", "--mdp", str(f))
        assert code == 2 and "transitions[1][0]" in err


def test_lemma_check(capsys, tmp_path):
    f = tmp_path / "lemma.json"
    f.write_text(json.dumps({"environment": {"prior": "two_point", "p": 0.5},
                             "agent": {"agent": "lazy_psrl",
                                       "signal": {"kind": "reward_threshold", "h_max": 100}},
                             "T": 100, "lemma": {"episode": 1, "stratum": "next_episode_exists"}}))
    code, out, _ = run(capsys, "lemma-check", "--config", str(f), "--n", "1000")
    assert code == 0
    p = float(out.split("p_value: ")[1].split()[0])
    assert p < 0.01


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "regretlab", "heaven-hell", "--T", "10"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "expected regret: 5" in res.stdout


def test_usage_error_exit_code():
    res = subprocess.run([sys.executable, "-m", "regretlab"], capture_output=True, text=True)
    assert res.returncode == 2


class TestMdpFiles:
    @pytest.mark.parametrize("mdp", [chain(4), heaven_hell(2, horizon=5)])
    def test_round_trip(self, tmp_path, mdp):
        save_mdp(mdp, tmp_path / "m.json")
        back = load_mdp(tmp_path / "m.json")
        base, back_base = getattr(mdp, "base", mdp), getattr(back, "base", back)
        assert np.array_equal(base.transitions, back_base.transitions)
        assert np.array_equal(base.reward_bernoulli, back_base.reward_bernoulli)

    @pytest.mark.parametrize("doc,path", [
        ({"n_states": 0}, "n_states"),
        ({"n_states": 1, "n_actions": 1, "transitions": [[[1.0]]],
          "rewards": [[{"kind": "gauss", "value": 0}]]}, "rewards[0][0].kind"),
        ({"n_states": 1, "n_actions": 1, "transitions": [[[1.0]]],
          "rewards": [[{"kind": "point", "value": 2}]]}, "rewards[0][0].value"),
        ({"n_states": 1, "n_actions": 1, "transitions": [[[1.0]]],
          "rewards": [[{"kind": "point", "value": 0}]], "horizon": 0}, "horizon"),
    ])
    def test_schema_errors(self, tmp_path, doc, path):
        f = tmp_path / "m.json"
        f.write_text(json.dumps(doc))
        with pytest.raises(ConfigError) as exc:
            load_mdp(f)
        assert exc.value.path == path
