import json
import subprocess
import sys

import pytest

from ragqa.cli import main


def write_config(tmp_path, **extra):
    path = tmp_path / "sweep.json"
    payload = {"grid": {"chunk_size": [100, 200], "metric": ["cosine", "pairwise"]},
               "output_dir": "out", **extra}
    path.write_text(json.dumps(payload))
    return path


def test_sweep_verb(tmp_path, capsys):
    code = main(["sweep", "--config", str(write_config(tmp_path)), "--limit", "3"])
    assert code == 0
    assert "4 cell(s) run, 0 skipped, 0 failed" in capsys.readouterr().out
    lines = (tmp_path / "out/results.csv").read_text().splitlines()
    assert len(lines) == 5
    assert all(line.split(",")[-3] == "3" for line in lines[1:])


def test_sweep_out_flag_overrides_file(tmp_path):
    assert main(["sweep", "--config", str(write_config(tmp_path)), "--out", str(tmp_path / "elsewhere")]) == 0
    assert (tmp_path / "elsewhere/results.md").exists()
    assert not (tmp_path / "out").exists()


def test_sweep_service_failure_exit_code(tmp_path, monkeypatch):
    monkeypatch.setenv("RAGQA_CHAT_ENDPOINT", "http://127.0.0.1:9/v1/chat/completions")
    config = write_config(tmp_path, generator={"kind": "extractive-oracle", "retries": 0, "timeout": 2})
    assert main(["sweep", "--config", str(config), "--limit", "1"]) == 3
    assert "error" in (tmp_path / "out/results.csv").read_text()


def test_env_selects_chat_service(tmp_path, monkeypatch, fake_service, capsys):
    monkeypatch.setenv("RAGQA_CHAT_ENDPOINT", fake_service.base_url + "/v1/chat/completions")
    monkeypatch.setenv("RAGQA_CHAT_MODEL", "env-model")
    assert main(["ask", "--qid", "hb-1"]) == 0
    assert "predicted: 'The Drug Enforcement Administration'" in capsys.readouterr().out
    assert fake_service.requests[0][1]["model"] == "env-model"


def test_ask_verb_with_overrides(capsys):
    assert main(["ask", "--qid", "gr-2", "--unit", "sentence", "--back-retrieval", "true",
                 "--overlap", "0.1", "--top-n", "1"]) == 0
    out = capsys.readouterr().out
    assert "== Back-retrieved chunks ==\nchunk" in out
    assert "EM=1" in out


def test_ask_unknown_qid(capsys):
    assert main(["ask", "--qid", "nope"]) == 2
    assert "unknown qid" in capsys.readouterr().err


def test_ask_invalid_cell_is_config_error(capsys):
    assert main(["ask", "--qid", "hb-1", "--overlap", "0.9"]) == 1


def test_missing_config_file(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "absent.json")]) == 1


def test_eval_verb(tmp_path, capsys):
    preds = tmp_path / "p.jsonl"
    preds.write_text(json.dumps({"qid": "hb-1", "predicted_answer": "Corrosion."}) + "\n")
    assert main(["eval", "--predictions", str(preds), "--per-question"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert json.loads(lines[0])["qid"] == "hb-1" and json.loads(lines[0])["em"] == 1
    summary = json.loads(lines[-1])
    assert summary["n_questions"] == 6
    assert summary["em"] == pytest.approx(1 / 6)


def test_eval_missing_predictions(tmp_path):
    assert main(["eval", "--predictions", str(tmp_path / "none.jsonl")]) == 2


def test_dump_chunks(capsys):
    assert main(["dump-chunks", "--doc", "harbor-bridge", "--spec",
                 '{"strategy": "fixed", "chunk_size": 100, "overlap": 0.1}']) == 0
    recs = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [(r["char_start"], r["char_end"]) for r in recs[:2]] == [(0, 100), (90, 190)]


def test_dump_chunks_flags_override_spec(capsys):
    assert main(["dump-chunks", "--doc", "glass-robot", "--spec", '{"strategy": "fixed"}',
                 "--strategy", "sentence"]) == 0
    recs = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert len(recs) == 6 and {r["kind"] for r in recs} == {"sentence"}


@pytest.mark.parametrize("argv, code", [
    (["dump-chunks", "--doc", "nope"], 2),
    (["dump-chunks", "--doc", "glass-robot", "--spec", "{bad json"], 1),
    (["dump-chunks", "--doc", "glass-robot", "--chunk-size", "0"], 1),
])
def test_dump_chunks_errors(argv, code):
    assert main(argv) == code


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ragqa", "dump-chunks", "--doc", "glass-robot",
                           "--strategy", "sentence"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert len(proc.stdout.splitlines()) == 6
