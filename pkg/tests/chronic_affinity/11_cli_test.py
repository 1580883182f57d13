#!/usr/bin/env python
# encoding: utf-8

# pylint: disable=missing-class-docstring, missing-function-docstring, invalid-name

import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from chronic_affinity import pipeline
from chronic_affinity.affinity import affinity_scores
from chronic_affinity.choropleth import ChoroplethException
from chronic_affinity.cli import exit_code, main
from chronic_affinity.pipeline import load_region
from chronic_affinity.region import RegionIngestException
from chronic_affinity.run_config import RunConfig
from chronic_affinity.spatial_stats import SpatialStatsException
from chronic_affinity.writers import LOCK_FILE, dumps, read_results_properties


SCENARIO = Path(__file__).parents[2] / "sample_data" / "synth_scenario.toml"


SYNTH = """
[synth]
rows = 6
cols = 6
rho = 0.5

[[synth.hotspots]]
row = 3
col = 3
radius = 1

[inference]
seed = 7
n_perm = 99

[output]
dir = "synth"
"""

ANALYZE = """
[inputs]
prevalence = "synth/prevalence.csv"
indicators = "synth/indicators.csv"
geometry = "synth/geometry.geojson"

[schema]
missing_policy = "{policy}"

[inference]
seed = 7
n_perm = 99

[output]
dir = "run"
weights = true
"""


def write_config(folder: Path, name: str, text: str) -> Path:
    rtn = folder / name
    rtn.write_text(text, encoding="utf-8")
    return rtn


@pytest.fixture(name="inputs")
def fixture_inputs(tmp_path):
    config = write_config(tmp_path, "synth.toml", SYNTH)
    assert main(["synth", "--config", str(config), "--quiet"]) == 0
    return tmp_path


def analyze_config(folder: Path, policy: str = "drop_incomplete") -> Path:
    return write_config(folder, "analyze.toml", ANALYZE.format(policy=policy))


def test_synth(tmp_path, inputs):
    synth = inputs / "synth"
    assert sorted(x.name for x in synth.iterdir()) == [
        "geometry.geojson", "indicators.csv", "prevalence.csv"]

    config = inputs / "synth.toml"
    assert main(["synth", "--config", str(config), "--out", str(tmp_path / "again")]) == 0
    for name in ("geometry.geojson", "indicators.csv", "prevalence.csv"):
        assert (synth / name).read_bytes() == (tmp_path / "again" / name).read_bytes()

    assert main(["synth", "--config", str(config), "--out", str(tmp_path / "other"),
        "--seed", "8"]) == 0
    assert (synth / "prevalence.csv").read_bytes() != \
        (tmp_path / "other" / "prevalence.csv").read_bytes()

    prevalence = pd.read_csv(synth / "prevalence.csv", dtype={"GEOID": str})
    assert len(prevalence) == 36
    assert "CASTHMA_CrudePrev" in prevalence.columns


def test_synth_errors(tmp_path):
    config = write_config(tmp_path, "bad.toml", SYNTH.replace("rho = 0.5", "rho = 1.0"))
    assert main(["synth", "--config", str(config)]) == 1

    config = write_config(tmp_path, "noseed.toml", SYNTH.replace("seed = 7", ""))
    assert main(["synth", "--config", str(config)]) == 1

    assert main(["synth", "--config", str(tmp_path / "missing.toml")]) == 2

    config = write_config(tmp_path, "broken.toml", "[synth\nrows = ")
    assert main(["synth", "--config", str(config)]) == 1


def test_validate(inputs, capsys):
    config = analyze_config(inputs)
    assert main(["validate", "--config", str(config)]) == 0
    assert "dropped: 0 tracts" in capsys.readouterr().out

    # One tract without prevalence
    file = inputs / "synth" / "prevalence.csv"
    lines = file.read_text(encoding="utf-8").splitlines(keepends=True)
    file.write_text("".join(lines[:-1]), encoding="utf-8")

    assert main(["validate", "--config", str(config)]) == 0
    assert "no prevalence" in capsys.readouterr().out

    config = analyze_config(inputs, policy="strict")
    assert main(["validate", "--config", str(config)]) == 1

    file.unlink()
    assert main(["validate", "--config", str(config)]) == 2


def test_validate_out_of_range(inputs, capsys):
    file = inputs / "synth" / "indicators.csv"
    data = pd.read_csv(file, dtype={"GEOID": str})
    data.loc[0, "pct_poverty"] = 120.0
    data.to_csv(file, index=False)

    assert main(["validate", "--config", str(analyze_config(inputs))]) == 0
    out = capsys.readouterr().out
    assert "out of range: 1 values" in out
    assert f"{data.loc[0, 'GEOID']}: poverty" in out

    assert main(["validate", "--config", str(analyze_config(inputs, policy="strict"))]) == 1


def run(inputs: Path, out: str, *args) -> Path:
    config = analyze_config(inputs)
    assert main(["analyze", "--config", str(config), "--out", str(inputs / out), *args]) == 0
    return inputs / out


def test_analyze(inputs):
    out = run(inputs, "a")
    names = sorted(x.name for x in out.iterdir())
    assert names == [
        "choropleth_affinity.svg", "choropleth_crime.svg", "choropleth_hotspots.svg",
        "choropleth_hotspots_raw.svg", "choropleth_poverty.svg", "choropleth_unemployment.svg",
        "report.json", "results.geojson", "weights_gi.json", "weights_moran.json"]

    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["metadata"]["seed"] == 7
    assert report["metadata"]["n_tracts"] == 36
    assert report["moran"]["n_perm"] == 99
    assert 0 < report["moran"]["p_permutation"] <= 1
    assert set(report["table3"]["models"]) == {"model1", "model2"}

    groups = [x["group"] for x in report["table1"].values()]
    assert groups.count("condition") == 6
    assert groups.count("affinity") == 1
    assert report["table1"]["affinity"]["n"] == 36
    assert len(report["table2"]["variables"]) == 6

    # The map counts agree with the report
    props = read_results_properties(out / "results.geojson", ["affinity", "hotspot_cat",
        "hotspot_cat_raw", "gi_z"])
    assert len(props) == 36
    counts = props["hotspot_cat"].value_counts().to_dict()
    assert {k: v for k, v in report["hotspots"]["counts"].items() if v} == counts
    counts = props["hotspot_cat_raw"].value_counts().to_dict()
    assert {k: v for k, v in report["hotspots"]["counts_raw"].items() if v} == counts

    # Affinity survives the round trip
    region, _, _ = load_region(RunConfig.from_toml(analyze_config(inputs)))
    expected = affinity_scores(region).score
    assert props.loc[expected.index, "affinity"].astype(int).to_list() == expected.to_list()

    svg = (out / "choropleth_affinity.svg").read_text(encoding="utf-8")
    assert report["metadata"]["config_hash"] in svg
    assert not (out / LOCK_FILE).exists()


def test_determinism(tmp_path):
    # The shipped scenario, seed 42: three runs and a multi-threaded run agree byte by byte
    outputs = []
    for name, args in (("a", ()), ("b", ()), ("c", ()), ("d", ("--jobs", "4"))):
        out = tmp_path / name
        assert main(["analyze", "--config", str(SCENARIO), "--out", str(out), "--quiet", *args]) == 0
        outputs.append(out)

    for name in ("report.json", "results.geojson", "weights_moran.json", "choropleth_hotspots.svg"):
        first = (outputs[0] / name).read_bytes()
        assert all((x / name).read_bytes() == first for x in outputs[1:])

    report = json.loads((outputs[0] / "report.json").read_text(encoding="utf-8"))
    assert report["metadata"]["seed"] == 42
    assert report["metadata"]["n_tracts"] == 400


def test_seed_changes_report(inputs):
    a = run(inputs, "a")
    b = run(inputs, "b", "--seed", "8")
    assert (a / "report.json").read_bytes() != (b / "report.json").read_bytes()


def test_input_order(inputs):
    # Shuffled CSV rows and GeoJSON features give the same results
    shuffled = inputs / "shuffled"
    (shuffled / "synth").mkdir(parents=True)
    rng = np.random.default_rng(3)
    for name in ("prevalence.csv", "indicators.csv"):
        header, *rows = (inputs / "synth" / name).read_text(encoding="utf-8").splitlines()
        rows = [rows[i] for i in rng.permutation(len(rows))]
        (shuffled / "synth" / name).write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")

    data = json.loads((inputs / "synth" / "geometry.geojson").read_text(encoding="utf-8"))
    data["features"] = [data["features"][i] for i in rng.permutation(len(data["features"]))]
    (shuffled / "synth" / "geometry.geojson").write_text(json.dumps(data), encoding="utf-8")

    a = json.loads((run(inputs, "a") / "report.json").read_text(encoding="utf-8"))
    b = json.loads((run(shuffled, "a") / "report.json").read_text(encoding="utf-8"))

    # Only the input file digests differ
    assert a["metadata"].pop("input_sha256") != b["metadata"].pop("input_sha256")
    assert a == b


def test_numeric_failure(inputs):
    # Identical prevalences: the affinity score is constant
    file = inputs / "synth" / "prevalence.csv"
    data = pd.read_csv(file, dtype={"GEOID": str})
    for column in data.columns[1:]:
        data[column] = 10.0
    data.to_csv(file, index=False)

    config = analyze_config(inputs)
    assert main(["analyze", "--config", str(config)]) == 3
    assert not (inputs / "run" / "report.json").exists()


def test_partial_artifacts(inputs, monkeypatch):
    def broken(*_, **__):
        raise ChoroplethException("cannot draw")

    monkeypatch.setattr(pipeline, "render_choropleth", broken)
    config = analyze_config(inputs)
    assert main(["analyze", "--config", str(config)]) == 1

    out = inputs / "run"
    assert list(out.iterdir()) == []


def test_locked(inputs):
    # Held by a live process
    out = inputs / "run"
    out.mkdir()
    (out / LOCK_FILE).write_text(str(os.getpid()), encoding="ascii")
    config = analyze_config(inputs)
    assert main(["analyze", "--config", str(config)]) == 2
    assert not (out / "report.json").exists()
    assert (out / LOCK_FILE).exists()

    # Pid not (yet) written
    (out / LOCK_FILE).write_text("", encoding="ascii")
    assert main(["analyze", "--config", str(config)]) == 2


@pytest.mark.skipif(os.name == "nt", reason="no signal 0 on Windows")
def test_stale_lock(inputs):
    # Left behind by a process that has exited
    proc = subprocess.Popen([sys.executable, "-c", "pass"])
    proc.wait()

    out = inputs / "run"
    out.mkdir()
    (out / LOCK_FILE).write_text(str(proc.pid), encoding="ascii")
    config = analyze_config(inputs)
    assert main(["analyze", "--config", str(config)]) == 0
    assert (out / "report.json").exists()
    assert not (out / LOCK_FILE).exists()


def test_json_numbers():
    # Every double reads back identically
    values = [1.0 / 3.0, 0.1 + 0.2, np.float64(2.0) ** 0.5, 1e-300, 123456789.123456789, 0.5]
    data = json.loads(dumps({"x": values, "nan": np.nan, "inf": -np.inf, "n": np.int64(3)}))
    assert data["x"] == [float(x) for x in values]
    assert data["nan"] is None
    assert data["inf"] == "-inf"
    assert data["n"] == 3
    assert "0.30000000000000004" in dumps([0.1 + 0.2])


def test_exit_codes():
    assert exit_code(FileNotFoundError("x")) == 2
    assert exit_code(RegionIngestException("x")) == 1
    assert exit_code(SpatialStatsException("x")) == 3
    assert exit_code(np.linalg.LinAlgError("x")) == 3
    with pytest.raises(KeyError):
        exit_code(KeyError("x"))


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert "chronic-affinity" in capsys.readouterr().out
