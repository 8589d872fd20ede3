import hashlib
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from redline_ensemble import io
from redline_ensemble.chain import baseline_entropy, run_ensemble
from redline_ensemble.cli import main
from redline_ensemble.config import build_config, load_config, with_chain
from redline_ensemble.errors import IngestionError
from redline_ensemble.geo import build_adjacency, build_crosswalk
from redline_ensemble.metrics import entropy_from_tallies
from redline_ensemble.partition import from_crosswalk
from redline_ensemble.synth import make_region

INGEST_FILES = ("crosswalk.csv", "graph.json", "seed_map.csv")


def digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def region(tmp_path_factory):
    d = tmp_path_factory.mktemp("region")
    assert main(["synth", "--rows", "10", "--cols", "10", "--districts", "4", "--segregation", "0.8", "--out", str(d)]) == 0
    return d


@pytest.fixture(scope="module")
def smoke_run(region, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    t0 = time.perf_counter()
    code = main(["run", "--region", str(region), "--out", str(out), "--chains", "2", "--steps", "200", "--seed", "3"])
    return code, out, time.perf_counter() - t0


class TestIngest:
    def test_artifacts_and_determinism(self, region, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["ingest", "--region", str(region), "--out", str(a)]) == 0
        assert main(["ingest", "--region", str(region), "--out", str(b)]) == 0
        for name in INGEST_FILES:
            assert (a / name).exists()
            assert digest(a / name) == digest(b / name)
        graph = io.read_json(a / "graph.json")
        assert {"nodes", "edges"} <= set(graph)
        assert len(io.read_csv(a / "seed_map.csv")) == 100

    def test_inputs_not_mutated(self, region, tmp_path):
        before = {p.name: digest(p) for p in region.iterdir()}
        main(["run", "--region", str(region), "--out", str(tmp_path), "--chains", "2", "--steps", "100"])
        assert {p.name: digest(p) for p in region.iterdir()} == before

    def test_missing_property(self, region, tmp_path, capsys):
        doc = json.loads((region / "blocks.geojson").read_text())
        del doc["features"][4]["properties"]["Asian"]
        bad = tmp_path / "bad"
        bad.mkdir()
        (bad / "blocks.geojson").write_text(json.dumps(doc))
        (bad / "districts.geojson").write_text((region / "districts.geojson").read_text())
        assert main(["ingest", "--region", str(bad), "--out", str(tmp_path / "o")]) == 1
        err = capsys.readouterr().err
        assert "Asian" in err and "4" in err

    def test_missing_file(self, tmp_path):
        assert main(["ingest", "--region", str(tmp_path), "--out", str(tmp_path / "o")]) == 1


class TestRun:
    def test_smoke(self, smoke_run):
        code, out, elapsed = smoke_run
        assert code == 0
        assert elapsed < 10
        report = io.read_json(out / "report.json")
        for key in ("baseline", "ensemble_mean", "abs_difference", "t_value", "p_value", "r_hat", "n_samples", "compactness"):
            assert report[key] is not None, key
        assert report["n_samples"] == 2 * 36
        assert sorted(p.name for p in (out / "traces").iterdir()) == ["chain_000.csv", "chain_001.csv"]
        manifest = io.read_json(out / "manifest.json")
        assert manifest["total_steps"] == 400 and manifest["retained_values"] == 72
        assert len({c["seed"] for c in manifest["chains"]}) == 2

    def test_repeatable(self, region, smoke_run, tmp_path):
        _, first, _ = smoke_run
        assert main(["run", "--region", str(region), "--out", str(tmp_path), "--chains", "2", "--steps", "200", "--seed", "3"]) == 0
        for name in ("report.json", "report.csv", "rhat.csv", "manifest.json", "traces/chain_001.csv"):
            assert (first / name).read_bytes() == (tmp_path / name).read_bytes(), name

    def test_headers(self, smoke_run):
        _, out, _ = smoke_run
        h = load_config(None, {"chain.n_chains": 2, "chain.steps": 200, "chain.base_seed": 3}).hash()
        for name in ("crosswalk.csv", "seed_map.csv", "report.csv", "rhat.csv", "traces/chain_000.csv"):
            first = (out / name).read_text().splitlines()[0]
            assert first == f"# engine=redline_ensemble version=0.1.0 config_hash={h}"
        for name in ("graph.json", "report.json", "manifest.json"):
            assert io.read_json(out / name)["_meta"] == {"engine": "redline_ensemble", "version": "0.1.0", "config_hash": h}

    def test_report_subcommand(self, smoke_run, capsys):
        _, out, _ = smoke_run
        assert main(["report", "--out", str(out)]) == 0
        assert "baseline" in capsys.readouterr().out

    def test_dry_run(self, region, tmp_path, capsys):
        assert main(["run", "--region", str(region), "--out", str(tmp_path), "--dry-run"]) == 0
        assert "dry run" in capsys.readouterr().out
        assert not (tmp_path / "traces").exists()

    def test_dump_maps(self, region, tmp_path):
        assert main(["run", "--region", str(region), "--out", str(tmp_path), "--chains", "2", "--steps", "20",
                     "--dump-maps"]) == 0
        assert len(list((tmp_path / "traces" / "maps" / "chain_000").iterdir())) == 3

    def test_stuck_exit_code(self, region, tmp_path):
        cfg = tmp_path / "tight.yaml"
        cfg.write_text(
            "validators.std_lower_factor: 0.999999\n"
            "validators.std_upper_factor: 1.000001\n"
            "chain.max_consecutive_rejects: 20\n"
        )
        code = main(["run", "--region", str(region), "--config", str(cfg), "--out", str(tmp_path / "o"),
                     "--chains", "1", "--steps", "300"])
        assert code == 2

    def test_degenerate_exit_code(self, region, tmp_path):
        far = tmp_path / "far"
        far.mkdir()
        (far / "blocks.geojson").write_text((region / "blocks.geojson").read_text())
        doc = json.loads((region / "districts.geojson").read_text())
        for feat in doc["features"]:
            feat["geometry"]["coordinates"] = [[[x + 1000, y] for x, y in ring] for ring in feat["geometry"]["coordinates"]]
        (far / "districts.geojson").write_text(json.dumps(doc))
        assert main(["run", "--region", str(far), "--out", str(tmp_path / "o"), "--chains", "2", "--steps", "100"]) == 3

    def test_module_entry_point(self, tmp_path):
        out = subprocess.run(
            [sys.executable, "-m", "redline_ensemble", "synth", "--rows", "3", "--cols", "3", "--districts", "2",
             "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert out.returncode == 0, out.stderr
        assert (tmp_path / "blocks.geojson").exists()


class TestPlacebo:
    def test_outputs(self, region, tmp_path):
        code = main(["placebo", "--region", str(region), "--out", str(tmp_path), "--replicates", "2", "--steps", "100"])
        assert code == 0
        rows = io.read_csv(tmp_path / "placebo_baselines.csv")
        assert [r["replicate"] for r in rows] == ["0", "1"]
        assert len(list((tmp_path / "placebo_traces").iterdir())) == 2


class TestSynth:
    def test_infeasible(self, tmp_path):
        assert main(["synth", "--rows", "1", "--cols", "1", "--districts", "4", "--out", str(tmp_path)]) == 1
        assert main(["synth", "--segregation", "1.5", "--out", str(tmp_path)]) == 1

    @pytest.mark.parametrize("level", [0.0, 1.0])
    def test_extremes(self, level):
        units, districts = make_region(10, 10, 4, level, seed=1)
        m = from_crosswalk(build_crosswalk(units, districts), build_adjacency(units), units)
        H = entropy_from_tallies(m.tally_table()).H
        if level == 1.0:
            assert H == 1.0
        else:
            assert H < 0.02


@pytest.mark.slow
def test_planted_baseline_beats_ensemble(synthetic_region):
    *_, seed_map = synthetic_region
    cfgs = with_chain(load_config(), n_chains=10, steps=1000, base_seed=5)
    traces = run_ensemble(seed_map, seed_map.graph, cfgs)
    pooled = np.concatenate([t.values for t in traces])
    assert baseline_entropy(seed_map) > np.quantile(pooled, 0.99)


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg.chain.steps == 10_000 and cfg.chain.thinning == 5 and cfg.chain.n_chains == 100
        assert cfg.validators.ddof == 1 and cfg.weighting.value == "population_weighted"
        assert len(cfg.schema.labels) == 8

    def test_file_and_overrides(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("# comment\nchain.steps: 500\nmetrics.weighting: literal_paper\nmetrics.groups: [A, B]\n")
        cfg = load_config(p, {"chain.steps": 300, "chain.n_chains": None})
        assert cfg.chain.steps == 300 and cfg.chain.n_chains == 100
        assert cfg.weighting.value == "literal_paper" and cfg.schema.labels == ("A", "B")
        assert cfg.hash() != load_config().hash()

    @pytest.mark.parametrize("text", ["chain: {steps: 5}\n", "chain.stepz: 5\n", "proposal.enforce_contiguity: maybe\n",
                                      "chain.thinning: 0\n"])
    def test_bad(self, tmp_path, text):
        p = tmp_path / "c.yaml"
        p.write_text(text)
        with pytest.raises(IngestionError):
            load_config(p)

    def test_flat_roundtrip(self):
        cfg = build_config({"chain.steps": 400, "validators.std_ddof": 0})
        assert build_config(cfg.flat()) == cfg
