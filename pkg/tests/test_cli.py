import subprocess
import sys

import pytest

from promptrag.cli import main

from conftest import DATA, export_bytes


def mock_run_args(tmp_path, *extra):
    return [
        "--dataset", str(DATA / "e2e_5.jsonl"),
        "--templates", "standard_context_aware,hierarchical_synthesis,slm_hotpot_smec",
        "--cache-dir", str(tmp_path / "cache"),
        "--out", str(tmp_path / "out"),
        "--mock-behavior", str(DATA / "e2e_behavior.json"),
        "--fixed-clock",
        *extra,
    ]


def test_list_templates(capsys):
    assert main(["list-templates"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 24
    assert lines[0].startswith("standard_context_aware")
    assert sum("(reconstructed)" in l for l in lines) == 10


def test_verify_tables(capsys):
    assert main(["verify-tables"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS (24/24") == 2


def test_verify_tables_failure(tmp_path, capsys):
    f = tmp_path / "t.csv"
    f.write_text("prompt_method,accuracy,time_s,efficiency\nx,0.5,1.0,0.6\n")
    assert main(["verify-tables", str(f)]) == 2
    assert "x" in capsys.readouterr().out


def test_run_judge_report(tmp_path, capsys):
    assert main(["run", *mock_run_args(tmp_path, "--top-k", "2")]) == 0
    out = capsys.readouterr().out
    assert "Baseline" in out and "cells: 15  failed: 0" in out
    first = export_bytes(tmp_path / "out")
    assert main(["report", *mock_run_args(tmp_path)]) == 0
    assert export_bytes(tmp_path / "out") == first
    assert main(["judge", *mock_run_args(tmp_path), "--force"]) == 0
    assert "judged 15 cell(s)" in capsys.readouterr().out
    assert export_bytes(tmp_path / "out") == first


def test_skip_judge(tmp_path, capsys):
    assert main(["run", *mock_run_args(tmp_path, "--skip-judge")]) == 0
    assert "judging skipped" in capsys.readouterr().out
    assert not (tmp_path / "out" / "mock-model").exists()


def test_config_errors_exit_1(tmp_path, capsys):
    assert main(["run", *mock_run_args(tmp_path, "--templates", "nope")]) == 1
    assert main(["run", "--dataset", str(tmp_path / "missing.jsonl"), "--mock"]) == 1
    assert main(["run", "--dataset", str(DATA / "e2e_5.jsonl")]) == 1
    assert main(["run", *mock_run_args(tmp_path, "--seed", "3")]) == 1
    assert main(["run", "--dataset", str(DATA / "blank_question_line3.jsonl"), "--mock",
                 "--out", str(tmp_path / "o"), "--cache-dir", str(tmp_path / "c")]) == 1
    err = capsys.readouterr().err
    assert "unknown template" in err and "line 3" in err


def test_missing_key_exit_1(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("PROMPTRAG_NO_KEY", raising=False)
    args = ["run", "--dataset", str(DATA / "e2e_5.jsonl"), "--model-url", "http://127.0.0.1:9/v1",
            "--model-name", "m", "--model-key-env", "PROMPTRAG_NO_KEY", "--judge-key-env", "",
            "--judge-url", "http://127.0.0.1:9/v1",
            "--cache-dir", str(tmp_path / "c"), "--out", str(tmp_path / "o")]
    assert main(args) == 1
    assert "PROMPTRAG_NO_KEY" in capsys.readouterr().err


def test_probe_unreachable(capsys):
    args = ["probe", "--model-url", "http://127.0.0.1:9/v1", "--model-name", "m",
            "--model-key-env", "", "--timeout", "2", "--max-retries", "0"]
    assert main(args) == 1
    assert "UNREACHABLE" in capsys.readouterr().out


def test_probe_loopback(capsys):
    from promptrag.mock import scripted

    ep = scripted(["pong"], model_name="m1")
    with ep.serve() as url:
        assert main(["probe", "--model-url", url, "--model-name", "m1", "--model-key-env", ""]) == 0
    assert "reports model 'm1'" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "promptrag", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "verify-tables" in proc.stdout


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
