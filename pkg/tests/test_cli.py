import json

import pytest

from oncv.cli import main, resolve_settings, build_parser
from oncv.rollout import log_content_hash

from conftest import DATA_DIR


def run(*argv):
    return main([str(a) for a in argv])


def rollout(tmp_path, name, *extra):
    out = tmp_path / name
    code = run("rollout", "--dataset", "fixture:dataset.jsonl", "--index", "fixture:corpus.jsonl", *extra, "--out", out)
    assert code == 0
    return out


def test_evaluate_golden_report(tmp_path, capsys):
    report = tmp_path / "report.json"
    assert run("evaluate", "--log", "fixture:six_sample_log.jsonl", "--report", report) == 0
    assert report.read_bytes() == (DATA_DIR / "six_sample_report.json").read_bytes()
    assert (tmp_path / "report.txt").read_bytes() == (DATA_DIR / "six_sample_report.txt").read_bytes()


def test_evaluate_strict_nei(tmp_path):
    report = tmp_path / "strict.json"
    assert run("evaluate", "--log", "fixture:six_sample_log.jsonl", "--strict-nei", "--report", report) == 0
    data = json.loads(report.read_text())
    assert data["relax_nei"] is False and data["overall"]["joint_acc"] == 1 / 6


def test_rollout_hash_deterministic(tmp_path, capsys):
    a = rollout(tmp_path, "a.jsonl", "--policy", "scripted:happy_path", "--jobs", "1")
    b = rollout(tmp_path, "b.jsonl", "--policy", "scripted:happy_path", "--jobs", "4")
    assert log_content_hash(a) == log_content_hash(b)
    meta = json.loads((tmp_path / "a.jsonl.meta.json").read_text())
    assert meta["content_hash"] == log_content_hash(a)
    assert "timestamp" in meta and meta["settings"]["group_size"] == 3
    assert len(a.read_text().splitlines()) == 18


def test_reward_audit_clean_and_tampered(tmp_path, capsys):
    log = rollout(tmp_path, "log.jsonl", "--policy", "scripted:mixed", "--group-size", "2")
    capsys.readouterr()
    assert run("reward", "--log", log) == 0
    assert json.loads(capsys.readouterr().out)["num_diffs"] == 0
    rows = [json.loads(l) for l in log.read_text().splitlines()]
    rows[0]["reward"]["r_final"] = 99.0
    log.write_text("".join(json.dumps(r) + "\n" for r in rows))
    assert run("reward", "--log", log) == 2
    diffs = json.loads(capsys.readouterr().out)["diffs"]
    assert diffs == [{"line": 1, "claim_id": rows[0]["claim_id"], "field": "r_final", "logged": 99.0, "recomputed": diffs[0]["recomputed"]}]


def test_offline_rollout_and_audit(tmp_path, capsys):
    log = rollout(tmp_path, "off.jsonl", "--policy", "scripted:offline_happy", "--mode", "offline", "--group-size", "1")
    rows = [json.loads(l) for l in log.read_text().splitlines()]
    assert all(r["reward"]["r_final"] == 4.0 for r in rows)
    assert run("reward", "--log", log) == 0


def test_ingest_then_rollout_from_index(tmp_path):
    idx = tmp_path / "index.json"
    assert run("ingest", "--corpus", "fixture:corpus.jsonl", "--out", idx) == 0
    a = tmp_path / "a.jsonl"
    assert run("rollout", "--dataset", "fixture:dataset.jsonl", "--index", idx, "--policy", "scripted:mixed", "--out", a) == 0
    b = rollout(tmp_path, "b.jsonl", "--policy", "scripted:mixed")
    assert log_content_hash(a) == log_content_hash(b)


def test_filter_and_confidence(tmp_path, capsys):
    kept = tmp_path / "kept.jsonl"
    code = run("filter", "--dataset", "fixture:dataset.jsonl", "--index", "fixture:corpus.jsonl", "--judge", "scripted:offline_happy", "--out", kept)
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["kept"] == 6 and summary["retention_rate"] == 1.0
    assert (tmp_path / "kept.jsonl.decisions.jsonl").exists()

    log = rollout(tmp_path, "log.jsonl", "--policy", "scripted:mixed", "--group-size", "1")
    out = tmp_path / "conf"
    assert run("confidence", "--log", log, "--out", out) == 0
    data = json.loads((out / "confidence.json").read_text())
    assert set(data) == {"buckets", "precision_recall"}
    assert (out / "buckets.csv").read_text().startswith("gold_label,bucket")


def test_error_json(tmp_path, capsys):
    assert run("evaluate", "--log", tmp_path / "missing.jsonl", "--report", tmp_path / "r.json") == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "FileNotFoundError" and err["command"] == "evaluate"


def test_bad_policy_error(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("ONCV_BASE_URL", raising=False)
    out = tmp_path / "x.jsonl"
    assert run("rollout", "--dataset", "fixture:dataset.jsonl", "--index", "fixture:corpus.jsonl", "--out", out) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "CliError"


def test_usage_error_is_json(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["evaluate"])
    assert exc.value.code == 2
    assert json.loads(capsys.readouterr().err)["error"] == "UsageError"


def test_settings_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\ntimeout = 5\nretries = 7\ntop-k = 4\n")
    monkeypatch.setenv("ONCV_TIMEOUT", "9")
    monkeypatch.setenv("ONCV_RETRIES", "8")
    monkeypatch.setenv("ONCV_MODEL", "env-model")
    args = build_parser().parse_args(
        ["rollout", "--dataset", "d", "--index", "i", "--out", "o", "--config", str(cfg), "--retries", "2"]
    )
    s = resolve_settings(args)
    assert s["retries"] == 2  # flag
    assert s["timeout"] == 5.0 and s["top_k"] == 4  # file beats env
    assert s["model"] == "env-model"  # env beats default
    assert s["max_searches"] == 3  # default


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert run("reward", "--log", "x", "--config", cfg) == 1
    assert "unknown setting" in json.loads(capsys.readouterr().err)["message"]
