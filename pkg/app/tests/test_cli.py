import json

import pytest

from app.main import cli_main


def test_plan_example(capsys):
    exit_code = cli_main(["plan", "--d", "1024", "--eps", "0.1", "--delta", "0.0009765625"])

    assert exit_code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["action"] == "plan"
    assert report["payload_type"] == "PlanResult"
    assert report["payload"]["m_unadjusted"] == 103787
    assert report["config"]["mode"] == "cor_basic"


def test_help_exits_cleanly(capsys):
    assert cli_main(["verify", "--help"]) == 0
    assert "--gaussian-baseline" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["plan", "--bogus", "1"],
        ["sketch", "--m", "ten"],
        [],
    ],
)
def test_usage_errors_exit_with_one(argv):
    assert cli_main(argv) == 1


def test_invalid_parameters_exit_with_one(capsys):
    exit_code = cli_main(["sketch", "--m", "10", "--n", "5", "--s", "3"])

    assert exit_code == 1
    captured = capsys.readouterr()
    assert captured.out == ""
    assert "divide" in captured.err


def test_missing_required_config_exits_with_one(capsys):
    assert cli_main(["plan", "--d", "10"]) == 1
    assert "Invalid configuration" in capsys.readouterr().err


def test_numeric_failure_exits_with_two(tmp_path, capsys):
    a_path = tmp_path / "a.mtx"
    a_path.write_text(
        "%%MatrixMarket matrix array real general\n10 2\n"
        + "".join(f"{i}\n" for i in range(1, 11)) * 2
    )
    b_path = tmp_path / "b.txt"
    b_path.write_text("".join(f"{i}\n" for i in range(10)))

    exit_code = cli_main(["regress", "--a", str(a_path), "--b", str(b_path), "--m", "4", "--s", "1"])

    assert exit_code == 2
    assert "rank" in capsys.readouterr().err


def test_exact_moment_from_a_basis_file(diagonal_basis_file, capsys):
    exit_code = cli_main([
        "moments", "--basis", diagonal_basis_file, "--m", "2", "--s", "1", "--q", "1", "--exact",
    ])

    assert exit_code == 0
    payload = json.loads(capsys.readouterr().out)["payload"]
    assert payload["raw_mean"] == pytest.approx(0.5, abs=1e-12)
    assert payload["trials"] == 16


def test_undecodable_input_exits_with_one(tmp_path, capsys):
    basis = tmp_path / "basis.mtx"
    basis.write_bytes(b"\xff\xfe")

    exit_code = cli_main(["moments", "--basis", str(basis), "--m", "2", "--s", "1", "--exact"])

    assert exit_code == 1
    assert "not UTF-8" in capsys.readouterr().err


def test_csv_report(capsys):
    exit_code = cli_main(["verify", "--n", "64", "--d", "2", "--m", "32", "--s", "2", "--trials", "5", "--format", "csv"])

    assert exit_code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# ose-report schema=EmbeddingReport version=1")
    assert lines[1] == "trial,s_min,s_max,eps_hat,failed"
    assert len(lines) == 2 + 5


def test_threads_do_not_change_the_report(capsys):
    argv = ["moments", "--n", "64", "--d", "4", "--m", "32", "--s", "4", "--q", "2", "--trials", "40", "--seed", "5"]

    cli_main(argv + ["--threads", "1"])
    single = json.loads(capsys.readouterr().out)
    cli_main(argv + ["--threads", "3"])
    pooled = json.loads(capsys.readouterr().out)

    assert single["payload"] == pooled["payload"]


def test_config_file_and_flags(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"sketch": {"m": 8, "n": 4, "s": 2, "seed": 11}}))

    exit_code = cli_main(["sketch", "--config", str(config), "--s", "4"])

    assert exit_code == 0
    report = json.loads(capsys.readouterr().out)
    assert (report["config"]["m"], report["config"]["s"], report["config"]["seed"]) == (8, 4, 11)
    assert len(report["payload"]["triplets"]) == 4 * 4


def test_replay_reproduces_a_report(tmp_path, capsys):
    output = tmp_path / "sketch.json"
    assert cli_main(["sketch", "--m", "8", "--n", "5", "--s", "2", "--seed", "3", "--output", str(output)]) == 0
    assert capsys.readouterr().out == ""

    assert cli_main(["--replay", str(output)]) == 0
    replayed = json.loads(capsys.readouterr().out)
    assert replayed["payload"] == json.loads(output.read_text())["payload"]


def test_replay_detects_a_tampered_report(tmp_path, capsys):
    output = tmp_path / "plan.json"
    assert cli_main(["plan", "--d", "64", "--eps", "0.2", "--delta", "0.01", "--output", str(output)]) == 0
    report = json.loads(output.read_text())
    report["payload"]["m"] += 1
    output.write_text(json.dumps(report))

    assert cli_main(["--replay", str(output)]) == 2
    assert "did not reproduce" in capsys.readouterr().err


def test_replay_of_an_unreadable_report(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")

    assert cli_main(["--replay", str(broken)]) == 1
    assert cli_main(["--replay", str(tmp_path / "missing.json")]) == 1
