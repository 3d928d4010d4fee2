import json
import subprocess
import sys

import pytest

from clique_factory import cli


def run(argv, capsys):
    code = cli.run([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


def test_constants_q3(capsys):
    code, out = run(["constants", "--q", 3], capsys)
    data = json.loads(out)
    assert code == 0
    assert data["outcome"]["k"] == "9/4" and data["outcome"]["delta"] == "9/13"


def test_gen_solve_verify_round_trip(tmp_path, capsys):
    inst, fac = tmp_path / "i.json", tmp_path / "f.json"
    assert run(["gen", "--kind", "random-threshold", "--q", 3, "--ell", 13, "--seed", 7, "--out", inst], capsys)[0] == 0
    code, out = run(["solve", "--input", inst, "--seed", 7, "--out", fac], capsys)
    first = json.loads(out)["digests"]
    assert code == 0
    code, out = run(["verify", "--factor", fac, "--instance", inst], capsys)
    assert code == 0 and json.loads(out)["outcome"]["ok"]
    code, out = run(["solve", "--input", inst, "--seed", 7], capsys)
    assert json.loads(out)["digests"] == first


def test_verify_detects_tampering(tmp_path, capsys):
    inst, fac = tmp_path / "i.json", tmp_path / "f.json"
    run(["gen", "--kind", "random-threshold", "--q", 3, "--ell", 6, "--seed", 1, "--out", inst], capsys)
    run(["solve", "--input", inst, "--out", fac], capsys)
    data = json.loads(fac.read_text())
    data["cliques"][0][0][2] = "1"          # inflate one clique's weight
    for slot in data["cliques"][0]:
        slot[2] = "1"
    fac.write_text(json.dumps(data))
    code, out = run(["verify", "--factor", fac, "--instance", inst], capsys)
    assert code == 2 and json.loads(out)["violations"]


def test_usage_errors_exit_one(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run(["constants"])
    assert exc.value.code == 1
    assert cli.run(["solve", "--input", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.run(["solve", "--input", str(bad)]) == 1


def test_hall_violator_exits_two(tmp_path, capsys):
    pair = tmp_path / "p.json"
    pair.write_text(json.dumps({"a": 2, "b": 2, "edges": [[0, 0], [1, 0]]}))
    code, out = run(["match", "--pair", pair], capsys)
    assert code == 2


def test_match_and_regularize(tmp_path, capsys):
    pair = tmp_path / "p.json"
    pair.write_text(json.dumps({"a": 3, "b": 3, "edges": [[a, b] for a in range(3) for b in range(3)]}))
    assert run(["match", "--pair", pair], capsys)[0] == 0
    code, out = run(["regularize", "--pair", pair, "--r", 2], capsys)
    assert code == 0


def test_pipeline_and_replay(tmp_path, capsys):
    rep = tmp_path / "r.json"
    code, _ = run(["pipeline", "--seed", 2, "--report", rep], capsys)
    assert code == 0
    report = json.loads(rep.read_text())
    for key in ("command", "version", "backend", "seed", "spec", "exit_code", "timings_ms", "digests"):
        assert key in report
    code, out = run(["replay", "--report", rep], capsys)
    assert code == 0 and json.loads(out)["identical"]


def test_replay_detects_changed_digest(tmp_path, capsys):
    rep = tmp_path / "r.json"
    run(["constants", "--q", 4, "--report", rep], capsys)
    data = json.loads(rep.read_text())
    assert data["digests"]
    key = next(iter(data["digests"]))
    data["digests"][key] = "0" * 64
    rep.write_text(json.dumps(data))
    code, out = run(["replay", "--report", rep], capsys)
    assert code == 2 and not json.loads(out)["identical"]


@pytest.mark.parametrize("op,extra", [("probe", []), ("trim", ["--d", "1/2"]), ("split", ["--k", 2]),
                                      ("halve", []), ("grow", ["--count", 2])])
def test_reglab_ops_replay(op, extra, tmp_path, capsys):
    rep = tmp_path / "r.json"
    code, _ = run(["reglab", op, "--random", 20, 20, 0.5, "--eps", 0.1, "--samples", 50,
                   "--report", rep, *extra], capsys)
    assert code == 0
    assert run(["replay", "--report", rep], capsys)[0] == 0


def test_oracle_commands(tmp_path, capsys):
    code, out = run(["oracle", "matching", "--n", 3], capsys)
    assert code == 0
    code, out = run(["oracle", "regular", "--n", 3], capsys)
    assert code == 0
    inst = tmp_path / "i.json"
    run(["gen", "--kind", "complete", "--q", 3, "--ell", 2, "--out", inst], capsys)
    code, out = run(["oracle", "factor", "--instance", inst], capsys)
    assert code == 0


def test_bench_grids(tmp_path, capsys):
    code, out = run(["bench", "--q", "", "--ell", ""], capsys)
    assert code == 0 and json.loads(out)["outcome"]["cells"] == 0
    csv_path, json_path = tmp_path / "t.csv", tmp_path / "t.json"
    code, out = run(["bench", "--q", 3, "--ell", 13, "--seeds", 10, "--csv", csv_path, "--json", json_path], capsys)
    row = json.loads(json_path.read_text())[0]
    assert code == 0 and row["successes"] == 10 and row["lemma_exact"] == 10
    assert csv_path.read_text().startswith("certified_failures,")


def test_bench_sub_threshold_cells_are_certified(tmp_path, capsys):
    json_path = tmp_path / "t.json"
    code, out = run(["bench", "--q", 3, "--ell", 13, "--margin", "0,1/5", "--seeds", 5, "--json", json_path],
                    capsys)
    rows = json.loads(json_path.read_text())
    assert code == 0 and all(r["invalid"] == 0 for r in rows)
    assert all(r["successes"] + sum(r["certified_failures"].values()) == r["runs"] for r in rows)


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "clique_factory", "constants", "--q", "3"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "9/13" in out.stdout
