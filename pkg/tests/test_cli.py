import hashlib
import json
import os
import subprocess
import sys

import pytest

from degenerate_elliptic.cli import CONFIG_SCHEMA, TASKS, run


def write_cfg(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


@pytest.mark.parametrize("task", ["classify", "solve", "kummer", "verify"])
def test_tasks_write_outputs(tmp_path, task, capsys):
    out = tmp_path / task
    cfg = {"verify": {"trials": 3}} if task == "verify" else {}
    assert run(["--config", write_cfg(tmp_path, cfg), "--out", str(out), task]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["task"] == task and man["passed"]
    for name, digest in man["files"].items():
        data = (out / name).read_bytes()
        assert b"\r" not in data
        assert hashlib.sha256(data).hexdigest() == digest
    assert "status: PASS" in capsys.readouterr().out


def test_obstacle_task(tmp_path):
    cfg = {"operator": {"name": "kummer", "params": {"alpha": 1.0, "beta": 1.0}},
           "domain": {"bounds": [[0.0, 1.0]], "counts": [21]},
           "obstacle": {"psi": 2.0, "g": 2.718281828459045, "omega": 1.2}}
    assert run(["--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path / "o"), "obstacle"]) == 0
    text = (tmp_path / "o" / "active_set.csv").read_text().splitlines()
    assert text[0] == "x1,active" and sum(int(r.split(",")[1]) for r in text[1:]) == 8


def test_rerun_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run(["--out", str(tmp_path / d), "--seed", "3", "classify"]) == 0
    for name in ("classification.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("cfg,path", [
    ({"operator": {"name": "heston", "params": {"kapa": 1}}}, "/operator/params"),
    ({"domain": {"bounds": [[0, 1]], "counts": [2]}}, "/domain/counts/0"),
    ({"obstacle": {"omega": 2.5}}, "/obstacle/omega"),
    ({"bogus": 1}, "/"),
])
def test_schema_errors_exit_2(tmp_path, cfg, path, capsys):
    assert run(["--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path / "x"), "classify"]) == 2
    err = capsys.readouterr().err
    assert err.startswith(f"config error at {path}")
    assert not (tmp_path / "x").exists()


def test_invalid_json_exit_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run(["--config", str(p), "classify"]) == 2


def test_task_mismatch(tmp_path):
    assert run(["--config", write_cfg(tmp_path, {"task": "solve"}), "classify"]) == 2


def test_domain_errors_exit_1(tmp_path, capsys):
    cfg = {"operator": {"name": "kummer", "params": {"alpha": 1.0, "beta": -1.0}}}
    assert run(["--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path / "y"), "classify"]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_schema_is_closed():
    def walk(node):
        if isinstance(node, dict):
            if node.get("type") == "object":
                assert node.get("additionalProperties") is False
            for v in node.values():
                walk(v)
    walk(CONFIG_SCHEMA)
    assert set(TASKS) == set(CONFIG_SCHEMA["properties"]["task"]["enum"])


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "degenerate_elliptic", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "0.1.0"
