import hashlib
import os

import pytest

from oscmix.cli import main

CHAIN = """[chain]
L = 2
k = 1
[simulate]
seed = 5
h = 0.01
T = 0.5
N = 5000
[control]
start = 1,-1,0.5,2
horizon = 0.5
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def test_verify_chain_ok(tmp_path):
    out = tmp_path / "out"
    assert main(["verify", "--config", _write(tmp_path, CHAIN), "--out", str(out)]) == 0
    text = (out / "verify.txt").read_text()
    assert "D=pass" in text and "all_hold=yes" in text


def test_verify_without_noise_fails(tmp_path):
    out = tmp_path / "out"
    cfg = _write(tmp_path, "[linear]\nA = -1,0;0,-1\nB = 0;0\n")
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 2
    assert "K=fail" in (out / "verify.txt").read_text()


def test_malformed_config_writes_nothing(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = _write(tmp_path, CHAIN + "[linear]\nA = -1\nB = 1\n")
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 4
    assert not out.exists()
    assert "exactly one network section" in capsys.readouterr().err


def test_missing_seed_is_config_error(tmp_path):
    cfg = _write(tmp_path, "[linear]\nA = -1\nB = 1\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 4
    assert not (tmp_path / "o").exists()


def test_certify_ou(tmp_path, capsys):
    cfg = _write(tmp_path, "[linear]\nA = -1\nB = 1\n")
    assert main(["certify", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    lines = capsys.readouterr().out
    assert "M = [[0.5]]" in lines and "K = 0.5" in lines and "R = 2.581976707" in lines


def test_certify_unstable_is_hypothesis_failure(tmp_path):
    cfg = _write(tmp_path, "[linear]\nA = 1\nB = 1\n")
    assert main(["certify", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_control_writes_trajectory_csv(tmp_path):
    out = tmp_path / "o"
    cfg = _write(tmp_path, CHAIN)
    assert main(["control", "--config", cfg, "--out", str(out), "--horizon", "0.4"]) == 0
    lines = (out / "control.csv").read_text().splitlines()
    assert lines[0].startswith("# seed=5")
    assert lines[1] == "t,u0,u1,x0,x1,x2,x3"


def test_simulate_deterministic_across_runs_and_workers(tmp_path):
    cfg = _write(tmp_path, CHAIN)
    outs = []
    for i, w in enumerate(["1", "8", "1"]):
        o = tmp_path / f"o{i}"
        assert main(["simulate", "--config", cfg, "--out", str(o), "--workers", w]) == 0
        outs.append(o)
    for name in ("trajectories.csv", "moments.csv"):
        assert len({_digest(o / name) for o in outs}) == 1


def test_seed_flag_overrides_and_changes_output(tmp_path):
    cfg = _write(tmp_path, CHAIN)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "6"])
    a = (tmp_path / "a" / "trajectories.csv").read_text()
    b = (tmp_path / "b" / "trajectories.csv").read_text()
    assert a != b and "seed=6" in b.splitlines()[0]


def test_mix_identical_starts_flagged(tmp_path):
    cfg = _write(tmp_path, CHAIN + "[mix]\npairs = 0,0,1,1;0,0,1,1\nN = 2000\nhorizon = 2\n")
    out = tmp_path / "o"
    assert main(["mix", "--config", cfg, "--out", str(out)]) == 0
    assert "degenerate" in (out / "mixing_fit.csv").read_text()
    svg = (out / "mixing.svg").read_text()
    assert svg.startswith("<svg") and "<script" not in svg


def test_wiener_tables(tmp_path):
    cfg = _write(tmp_path, CHAIN + "[wiener]\nM = 2000\nn_controls = 2\nN_grid = 10,100\ngrid = 4096\n")
    out = tmp_path / "o"
    assert main(["wiener", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "basis.csv").read_text().splitlines()[1].startswith("t,psi_1")
    assert len((out / "lemma.csv").read_text().splitlines()) == 4


def test_report_round_trip(tmp_path):
    cfg = _write(tmp_path, CHAIN + "[mix]\npairs = 0,0,2,-2;0,0,-2,2\nN = 2000\nhorizon = 2\n")
    r1, r2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["report", "--config", cfg, "--out", str(r1)]) == 0
    rep = (r1 / "report.txt").read_text()
    assert "[manifest]" in rep and "config| [chain]" in rep
    assert main(["report", "--config", str(r1 / "report.txt"), "--out", str(r2)]) == 0
    produced = sorted(f for f in os.listdir(r1) if f != "report.txt")
    assert produced == sorted(f for f in os.listdir(r2) if f != "report.txt")
    for f in produced:
        assert _digest(r1 / f) == _digest(r2 / f)
        assert f"{f} sha256={_digest(r1 / f)}" in rep


def test_writes_stay_in_output_directory(tmp_path):
    cfg = _write(tmp_path, CHAIN)
    before = set(os.listdir(tmp_path))
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert set(os.listdir(tmp_path)) - before == {"o"}


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        main(["frobnicate", "--config", "x"])
