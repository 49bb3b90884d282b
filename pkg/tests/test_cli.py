import hashlib
import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from sigbsg import cli, lp


def schema(name):
    return json.loads(resources.files("sigbsg.schemas").joinpath(name).read_text())


@pytest.fixture
def game_file(tmp_path, market):
    path = tmp_path / "example.json"
    path.write_text(json.dumps(market.to_document()))
    return path


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_bse(capsys, game_file, tmp_path):
    out_path = tmp_path / "bse.json"
    code, _, _ = run(capsys, "solve", "--game", game_file, "--mode", "bse", "--out", out_path)
    assert code == 0
    doc = json.loads(out_path.read_text())
    jsonschema.validate(doc, schema("result.schema.json"))
    assert doc["value"] == pytest.approx(0.55, abs=1e-12)


def test_solve_eps_to_stdout(capsys, game_file):
    code, out, _ = run(capsys, "solve", "--game", game_file, "--mode", "eps", "--eps", "1e-3")
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, schema("result.schema.json"))
    assert doc["value"] >= 0.549
    assert doc["epsilon"] == 1e-3


def test_solve_iclp(capsys, game_file):
    code, out, _ = run(capsys, "solve", "--game", game_file, "--mode", "iclp")
    assert code == 0
    assert json.loads(out)["value"] == pytest.approx(171 / 220, abs=1e-9)


def test_floats_have_17_digits(capsys, game_file):
    _, out, _ = run(capsys, "solve", "--game", game_file, "--mode", "bse")
    assert '"value": 0.55000000000000004' in out


def test_simulate_deterministic(capsys, game_file, tmp_path):
    digests = []
    for n in range(2):
        trace, summary = tmp_path / f"t{n}.csv", tmp_path / f"s{n}.json"
        code, _, _ = run(capsys, "simulate", "--game", game_file, "--algo", "ftl-ic", "--rounds", 100,
                         "--seed", 7, "--trace", trace, "--out", summary)
        assert code == 0
        lines = trace.read_text().splitlines()
        assert len(lines) == 101
        digests.append(hashlib.sha256(trace.read_bytes() + summary.read_bytes()).hexdigest())
        jsonschema.validate(json.loads(summary.read_text()), schema("summary.schema.json"))
    assert digests[0] == digests[1]
    # no temporary files left behind by the atomic writes
    assert sorted(p.name for p in tmp_path.iterdir()) == ["example.json", "s0.json", "s1.json", "t0.csv", "t1.csv"]


def test_simulate_hedge_replicates(capsys, game_file):
    code, out, _ = run(capsys, "simulate", "--game", game_file, "--algo", "hedge", "--rounds", 200,
                       "--seed", 3, "--replicates", 3, "--eta", 0.1)
    assert code == 0
    doc = json.loads(out)
    assert [r["seed"] for r in doc["runs"]] == [3, 4, 5]
    assert doc["eta"] == 0.1
    jsonschema.validate(doc, schema("summary.schema.json"))


def test_inspect(capsys, game_file):
    code, out, _ = run(capsys, "inspect", "--game", game_file)
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, schema("inspect.schema.json"))
    assert len(doc["atlas"]["points"]) == 7
    assert len(doc["pieces"]) == 4


def test_example_report(capsys):
    code, out, _ = run(capsys, "example")
    assert code == 0
    assert "0.55000000000000004" in out and "[published 0.55]" in out
    assert "0.86250000000000004" in out and "[published 0.8625]" in out
    assert "0.52500000000000002" in out and "[derived 0.525]" in out
    assert "theta1" in out.splitlines()[-1]


def test_invalid_game_exit_1(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"leader_actions": ["a"], "follower_actions": ["l"], "leader_payoff": [[1]],
                               "types": [{"name": "t", "prior": 0.4, "follower_payoff": [[0]]}]}))
    code, out, err = run(capsys, "solve", "--game", bad)
    assert code == 1 and out == ""
    report = json.loads(err)
    jsonschema.validate(report, schema("error.schema.json"))
    assert report["error"]["kind"] == "validation"


def test_missing_file_and_bad_flags_exit_1(capsys, tmp_path):
    assert run(capsys, "solve", "--game", tmp_path / "nope.json")[0] == 1
    assert run(capsys, "solve", "--mode", "best")[0] == 1
    assert run(capsys, "simulate", "--rounds", 0)[0] == 1
    assert run(capsys, "solve", "--unknown")[0] == 1
    assert run(capsys)[0] == 1


def test_solver_failure_exit_2(capsys, game_file, monkeypatch):
    def boom(game):
        raise lp.LPError("solver gave up")

    monkeypatch.setattr(cli, "solve_bse", boom)
    code, _, err = run(capsys, "solve", "--game", game_file, "--mode", "bse")
    assert code == 2
    assert json.loads(err)["error"] == {"kind": "solver", "type": "LPError", "message": "solver gave up", "exit_code": 2}


def test_help_lists_schemas(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0
    for name in cli.SCHEMAS:
        assert name in out


def test_console_script(tmp_path):
    out = tmp_path / "r.json"
    proc = subprocess.run([sys.executable, "-m", "sigbsg.cli", "solve", "--mode", "bse", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["value"] == pytest.approx(0.55)


def test_dumps_handles_non_finite():
    assert cli.dumps({"a": float("inf"), "b": [1.0, 2]}) == '{\n  "a": null,\n  "b": [1, 2]\n}\n'
