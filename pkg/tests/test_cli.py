from __future__ import annotations

import csv
import json

import pytest
from filelock import FileLock

from biaslens.cli import main
from biaslens.config import load_config, parse_config
from biaslens.errors import ConfigError
from biaslens.pipeline import LOCK_NAME, STAGES


def demo(out, *extra):
    return main([*extra[:1], "--config", "builtin:demo", "--out", str(out), "--offline", *extra[1:]])


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != LOCK_NAME}


def test_stage_without_its_input_exits_2(tmp_path):
    assert demo(tmp_path / "r", "classify") == 2


def test_bad_config_exits_3(tmp_path, capsys):
    assert main(["clean", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 3
    assert "config error" in capsys.readouterr().err
    assert demo(tmp_path / "r", "clean", "--models", "nope") == 3


def test_locked_run_exits_4(tmp_path):
    out = tmp_path / "r"
    out.mkdir()
    with FileLock(str(out / LOCK_NAME)):
        assert demo(out, "ingest") == 4


def test_online_run_without_key_exits_1(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("BIASLENS_LLM_API_KEY", raising=False)
    assert demo(tmp_path / "r", "ingest") == 0
    assert demo(tmp_path / "r", "clean") == 0
    assert main(["classify", "--config", "builtin:demo", "--out", str(tmp_path / "r"), "--models", "gemini"]) == 1
    assert "AuthError" in capsys.readouterr().err


def test_ngram_flags_shape_the_tables(tmp_path):
    out = tmp_path / "r"
    for stage in ("ingest", "clean"):
        assert demo(out, stage) == 0
    assert demo(out, "ngram", "--n", "3", "--top", "20", "--conflict", "RU", "--source", "BBC") == 0
    files = sorted(p.name for p in (out / "ngram").iterdir())
    assert files == ["RussiaUkraine_BBC_n3.csv"]
    with open(out / "ngram" / files[0], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 20 and [int(r["rank"]) for r in rows] == list(range(1, 21))
    assert all(len(r["ngram"].split()) == 3 for r in rows)


def test_sequential_stages_equal_run_all(tmp_path, demo_run):
    out = tmp_path / "seq"
    for stage in STAGES:
        assert demo(out, stage) == 0
    assert tree(out) == tree(demo_run)


def test_strict_mode_rejects_malformed_corpus_records(tmp_path):
    out = tmp_path / "r"
    for stage in ("ingest", "clean"):
        assert demo(out, stage) == 0
    path = out / "corpus" / "RussiaUkraine_BBC.jsonl"
    path.write_text(path.read_text() + '{"url": "broken"}\n')
    assert demo(out, "ngram", "--conflict", "RU", "--source", "BBC") == 0
    assert demo(out, "ngram", "--strict", "--conflict", "RU", "--source", "BBC") == 1


BASE = {
    "datasets": [{"source": "BBC", "conflict": "RU", "input": {"kind": "file", "path": "raw.jsonl"}}],
    "models": [{"id": "m", "strategy": "chunk", "mock": {"kind": "lexicon"}}],
}


@pytest.mark.parametrize("change", [
    {"models": [{"id": "bad id", "strategy": "chunk"}]},
    {"models": [{"id": "m", "strategy": "guess"}]},
    {"models": [{"id": "m", "strategy": "prompt", "runs": 2}]},
    {"models": [{"id": "m", "strategy": "chunk"}, {"id": "m", "strategy": "chunk"}]},
    {"datasets": []},
    {"datasets": [{"source": "BBC", "conflict": "RU", "input": {"kind": "carrier-pigeon"}}]},
    {"chunking": {"window": 4, "stride": 8}},
])
def test_invalid_configs_are_rejected(tmp_path, change):
    (tmp_path / "raw.jsonl").write_text("")
    with pytest.raises(ConfigError):
        parse_config({**BASE, **change}, tmp_path, output_dir=tmp_path / "out")


def test_config_requires_output_dir_and_existing_files(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(BASE, tmp_path, output_dir=None)
    (tmp_path / "raw.jsonl").write_text("")
    cfg = parse_config(BASE, tmp_path, output_dir=tmp_path / "out")
    assert cfg.datasets[0].name == "RussiaUkraine_BBC"
    assert "output_dir" not in json.dumps(cfg.snapshot())


def test_builtin_demo_config_loads():
    cfg = load_config("builtin:demo", output_dir="runs/x")
    assert [m.model_id for m in cfg.models] == ["bert", "gemini", "deepseek"]
    with pytest.raises(ConfigError):
        load_config("builtin:nothing", output_dir="runs/x")
