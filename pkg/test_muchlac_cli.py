"""Tests for the muchlac command-line entrypoint."""

import json

import pytest
from joblib import cpu_count

from muchlac import load_environment_config
from muchlac_cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for key in ("OUTPUT_DIR", "MUCHLAC_SEED", "MUCHLAC_THREADS", "MUCHLAC_ROUNDS", "MUCHLAC_BINS"):
        monkeypatch.delenv(key, raising=False)


def test_version(capsys):
    assert main(["--version"]) == EXIT_OK
    assert "muchlac 1.0.0 (formats: FMX1, MBR1, RAB1)" in capsys.readouterr().out


def test_threads_default_to_the_cpu_count(monkeypatch):
    monkeypatch.setattr("muchlac.load_dotenv", lambda: None)
    assert int(load_environment_config()["MUCHLAC_THREADS"]) == cpu_count() >= 1

    monkeypatch.setenv("MUCHLAC_THREADS", "3")
    assert load_environment_config()["MUCHLAC_THREADS"] == "3"


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["train", "--features", "x.fmx", "--out", "m.json", "--bogus"]) == EXIT_USAGE
    assert main(["masks", "dump", "--kind", "other"]) == EXIT_USAGE


def test_missing_input_is_a_data_error(tmp_path, capsys):
    code = main(["train", "--features", str(tmp_path / "missing.fmx"), "--out", str(tmp_path / "m.json")])
    assert code == EXIT_DATA
    assert "ERROR:" in capsys.readouterr().out


def test_masks_dump_to_stdout(capsys):
    assert main(["masks", "dump", "--kind", "muchlac", "--m", "1"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["count"] == 82
    assert payload["config"]["subcommand"] == "masks dump"


def _run_pipeline(work):
    """Run every stage on a small synthetic scene, returning each exit code."""
    common = ["--seed", "7"]
    steps = [
        ["synth", "--cells", "4", "--out", str(work / "scene")] + common,
        [
            "dataset", "build",
            "--raster", str(work / "scene" / "raster.mbr"),
            "--mask", str(work / "scene" / "mask.mbr"),
            "--patch-size", "16",
            "--out", str(work / "patches.json"),
        ] + common,
        [
            "features", "extract",
            "--raster", str(work / "scene" / "raster.mbr"),
            "--patches", str(work / "patches.json"),
            "--feature", "muchlac",
            "--bands", "0,1",
            "--distances", "1",
            "--out", str(work / "features.fmx"),
        ] + common,
        ["train", "--features", str(work / "features.fmx"), "--rounds", "5", "--bins", "4",
         "--out", str(work / "model.json")] + common,
        ["predict", "--features", str(work / "features.fmx"), "--model", str(work / "model.json"),
         "--out", str(work / "scores.json")] + common,
        ["eval", "--features", str(work / "features.fmx"), "--folds", "2", "--rounds", "3", "--bins", "4",
         "--out", str(work / "report.json")] + common,
        ["importance", "--features", str(work / "features.fmx"), "--trees", "5", "--top", "10",
         "--out", str(work / "importance.json")] + common,
        ["select", "--features", str(work / "features.fmx"), "--importance", str(work / "importance.json"),
         "--k", "10", "--out", str(work / "selected.fmx")] + common,
    ]
    return [main(step) for step in steps]


ARTIFACTS = [
    "scene/raster.mbr",
    "scene/mask.mbr",
    "patches.json",
    "features.fmx",
    "model.json",
    "scores.json",
    "report.json",
    "importance.json",
    "selected.fmx",
]


def test_full_pipeline_is_reproducible(tmp_path):
    assert _run_pipeline(tmp_path) == [EXIT_OK] * 8
    first = {name: (tmp_path / name).read_bytes() for name in ARTIFACTS}

    assert _run_pipeline(tmp_path) == [EXIT_OK] * 8
    for name in ARTIFACTS:
        assert (tmp_path / name).read_bytes() == first[name], name

    scores = json.loads(first["scores.json"])
    assert len(scores["scores"]) == 16
    assert scores["config"]["subcommand"] == "predict"

    report = json.loads(first["report.json"])
    assert report["config"]["seed"] == 7
    assert report["config"]["evaluation"]["folds"] == 2

    importance = json.loads(first["importance.json"])
    assert importance["config"]["params"]["n_trees"] == 5
    assert sorted(importance["ranking"]) == list(range(2 * 35 + 2 * 82))


def test_thread_count_does_not_change_features(tmp_path):
    assert main(["synth", "--cells", "3", "--out", str(tmp_path / "scene")]) == EXIT_OK
    assert main([
        "dataset", "build",
        "--raster", str(tmp_path / "scene" / "raster.mbr"),
        "--mask", str(tmp_path / "scene" / "mask.mbr"),
        "--out", str(tmp_path / "patches.json"),
    ]) == EXIT_OK

    outputs = []
    for threads in ("1", "3"):
        out = tmp_path / f"features-{threads}.fmx"
        assert main([
            "features", "extract",
            "--raster", str(tmp_path / "scene" / "raster.mbr"),
            "--patches", str(tmp_path / "patches.json"),
            "--kind", "hlac",
            "--bands", "0,1",
            "--distances", "1,2",
            "--invariance", "d4",
            "--threads", threads,
            "--out", str(out),
        ]) == EXIT_OK
        outputs.append(out.read_bytes())

    # Output path differs in the config echo, so compare from the payload
    assert outputs[0].split(b"\n", 1)[1] == outputs[1].split(b"\n", 1)[1]


def test_bad_patch_size_is_a_data_error(tmp_path):
    assert main(["synth", "--cells", "2", "--out", str(tmp_path / "scene")]) == EXIT_OK
    code = main([
        "dataset", "build",
        "--raster", str(tmp_path / "scene" / "raster.mbr"),
        "--mask", str(tmp_path / "scene" / "mask.mbr"),
        "--patch-size", "64",
        "--out", str(tmp_path / "patches.json"),
    ])
    assert code == EXIT_DATA
