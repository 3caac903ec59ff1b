from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from cloneforge.cli import main
from conftest import write_synth_cifar


@pytest.fixture(scope="module")
def store(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("cli")
    raw = root / "batch.bin"
    write_synth_cifar(raw, 160, seed=77)
    store_path = root / "corpus.cfc"
    assert main(["ingest", "--cifar", str(raw), "--out", str(store_path)]) == 0
    return store_path


def run_ok(argv: list[str]) -> None:
    assert main(argv) == 0


class TestIngest:
    def test_store_and_manifest_created(self, store):
        assert store.exists()
        manifest = json.loads((store.parent / "corpus.cfc.manifest.json").read_text())
        assert manifest["count"] == 160
        assert manifest["format"] == "cifar10-bin"

    def test_rerun_identical_checksum(self, store, tmp_path):
        out2 = tmp_path / "again.cfc"
        run_ok(["ingest", "--cifar", str(store.parent / "batch.bin"), "--out", str(out2)])
        a = json.loads((store.parent / "corpus.cfc.manifest.json").read_text())["checksum"]
        b = json.loads((tmp_path / "again.cfc.manifest.json").read_text())["checksum"]
        assert a == b

    def test_dir_ingest_with_corrupt_file(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        img_dir = tmp_path / "imgs"
        img_dir.mkdir()
        for i in range(3):
            rgb = rng.integers(0, 256, size=(40, 40, 3), dtype=np.uint8)
            (img_dir / f"{i}.ppm").write_bytes(b"P6\n40 40\n255\n" + rgb.tobytes())
        (img_dir / "zz_bad.ppm").write_bytes(b"P6\nbroken")
        run_ok(["ingest", "--dir", str(img_dir), "--out", str(tmp_path / "d.cfc")])
        out = capsys.readouterr().out
        assert "ingested 3 images" in out
        assert "zz_bad.ppm" in out

    def test_corrupt_only_dir_exits_1(self, tmp_path):
        img_dir = tmp_path / "bad"
        img_dir.mkdir()
        (img_dir / "a.ppm").write_bytes(b"nope")
        assert main(["ingest", "--dir", str(img_dir), "--out", str(tmp_path / "x.cfc")]) == 1

    def test_missing_file_exits_1(self, tmp_path):
        assert main(["ingest", "--cifar", str(tmp_path / "absent.bin"), "--out", str(tmp_path / "x.cfc")]) == 1


class TestTrain:
    def test_model_and_trace_written(self, store, tmp_path):
        out = tmp_path / "train_out"
        run_ok(["train", "--store", str(store), "--anchor", "3", "--seed", "5", "--out", str(out)])
        assert (out / "anchor_3.cfe").exists()
        trace = (out / "anchor_3_trace.csv").read_text().strip().splitlines()
        assert len(trace) == 41
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["seed"] == 5

    def test_anchor_by_string_id(self, store, tmp_path):
        out = tmp_path / "by_id"
        run_ok(["train", "--store", str(store), "--anchor", "batch.bin:00002", "--seed", "5", "--out", str(out)])
        assert (out / "anchor_2.cfe").exists()

    def test_unknown_anchor_exits_2(self, store, tmp_path):
        assert main(["train", "--store", str(store), "--anchor", "9999", "--out", str(tmp_path / "x")]) == 2


class TestFindSimilar:
    def test_topk_csv_contract(self, store, tmp_path):
        out = tmp_path / "fs"
        run_ok(["find-similar", "--store", str(store), "--anchor", "7", "--seed", "3", "--k", "10", "--out", str(out)])
        with (out / "topk.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 11  # top-10 plus the single least-similar row
        assert rows[-1]["rank"] == "least"
        scores = [float(r["score"]) for r in rows[:10]]
        assert all(b <= a for a, b in zip(scores, scores[1:]))
        assert (out / "fig_norms.png").exists()
        assert (out / f"anchor_7.cfe").exists()

    def test_rerun_same_seed_identical_csv(self, store, tmp_path):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        for d in (a_dir, b_dir):
            run_ok(["find-similar", "--store", str(store), "--anchor", "7", "--seed", "3", "--out", str(d)])
        assert (a_dir / "topk.csv").read_bytes() == (b_dir / "topk.csv").read_bytes()

    def test_default_k_is_20(self, store, tmp_path):
        out = tmp_path / "k20"
        run_ok(["find-similar", "--store", str(store), "--anchor", "7", "--seed", "3", "--out", str(out)])
        with (out / "topk.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 21


class TestBench:
    def test_reports_written_and_deterministic(self, store, tmp_path):
        args = [
            "bench", "--store", str(store), "--anchors", "2", "--seed", "9",
            "--n-test-pos", "64", "--n-test-neg", "50",
        ]
        a_dir, b_dir = tmp_path / "r1", tmp_path / "r2"
        run_ok(args + ["--out", str(a_dir)])
        run_ok(args + ["--out", str(b_dir)])
        for name in ("report.csv", "report.json", "calibration.csv"):
            assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes(), name
        assert (a_dir / "timing.json").exists()
        assert (a_dir / "fig_mu_hist.png").exists()
        assert (a_dir / "fig_calibration.png").exists()
        report = json.loads((a_dir / "report.json").read_text())
        assert len(report["per_anchor"]) == 2
        assert set(report["aggregate"]) >= {"precision", "recall", "f1", "auroc", "auprc"}

    def test_config_file_supplies_defaults(self, store, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"anchors": 2, "n_test_pos": 64, "n_test_neg": 50, "seed": 9}))
        out = tmp_path / "cfgout"
        run_ok(["--config", str(config), "bench", "--store", str(store), "--out", str(out)])
        report = json.loads((out / "report.json").read_text())
        assert len(report["per_anchor"]) == 2


class TestCalibrate:
    def test_calibration_tables_and_figure(self, store, tmp_path):
        out = tmp_path / "cal"
        run_ok([
            "calibrate", "--store", str(store), "--anchors", "2", "--seed", "4",
            "--n-test-pos", "64", "--n-test-neg", "50", "--out", str(out),
        ])
        with (out / "calibration.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        per_anchor = [r for r in rows if r["anchor_id"] != "mean"]
        mean_rows = [r for r in rows if r["anchor_id"] == "mean"]
        assert len(per_anchor) == 2 * 21
        assert len(mean_rows) == 21
        assert (out / "fig_calibration.png").exists()


def test_env_seed_fallback(store, tmp_path, monkeypatch):
    monkeypatch.setenv("CLONEFORGE_SEED", "3")
    out = tmp_path / "env_seed"
    run_ok(["find-similar", "--store", str(store), "--anchor", "7", "--out", str(out)])
    explicit = tmp_path / "explicit"
    run_ok(["find-similar", "--store", str(store), "--anchor", "7", "--seed", "3", "--out", str(explicit)])
    assert (out / "topk.csv").read_bytes() == (explicit / "topk.csv").read_bytes()
