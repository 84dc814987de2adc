import json

import pytest
from click.testing import CliRunner

from embedkit.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def run(runner, args, expect=0):
    result = runner.invoke(main, args)
    if result.exit_code != expect:
        raise AssertionError(
            f"exit {result.exit_code} (wanted {expect}): {result.output}"
        )
    return result


@pytest.fixture()
def corpus_dir(tmp_path, runner):
    out = tmp_path / "corpus"
    run(runner, ["synth", "--classes", "10", "--dim", "32",
                 "--train-per-class", "10", "--val-per-class", "4",
                 "--test-per-class", "4", "--sigma-image", "0.05",
                 "--seed", "7", "--out", str(out)])
    return out


class TestSynth:
    def test_writes_three_files(self, corpus_dir):
        assert (corpus_dir / "images.cemb").exists()
        assert (corpus_dir / "texts.cemb").exists()
        assert (corpus_dir / "manifest.jsonl").exists()

    def test_rerun_identical_files(self, tmp_path, runner):
        args = ["synth", "--classes", "3", "--dim", "8", "--seed", "1"]
        a, b = tmp_path / "a", tmp_path / "b"
        run(runner, args + ["--out", str(a)])
        run(runner, args + ["--out", str(b)])
        for name in ("images.cemb", "texts.cemb", "manifest.jsonl"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_zero_classes_usage_error(self, runner, tmp_path):
        result = runner.invoke(main, ["synth", "--classes", "0",
                                      "--out", str(tmp_path / "x")])
        assert result.exit_code == 2

    def test_summary_json(self, tmp_path, runner):
        result = run(runner, ["synth", "--classes", "2", "--dim", "8",
                              "--out", str(tmp_path / "c")])
        payload = json.loads(result.output)
        assert payload["num_classes"] == 2
        assert payload["dim"] == 8


class TestNormalizeAndCheck:
    def test_normalize_roundtrip(self, corpus_dir, runner, tmp_path):
        src = corpus_dir / "images.cemb"
        dst = tmp_path / "norm.cemb"
        run(runner, ["normalize", str(src), str(dst)])
        assert dst.exists()

    def test_check_aligned(self, corpus_dir, runner):
        result = run(runner, ["check", "--store",
                              str(corpus_dir / "images.cemb"),
                              "--manifest",
                              str(corpus_dir / "manifest.jsonl")])
        payload = json.loads(result.output)
        assert payload["alignment"]["aligned"] is True
        assert payload["findings"] == []

    def test_check_bad_file(self, runner, tmp_path):
        bad = tmp_path / "bad.cemb"
        bad.write_bytes(b"nope")
        result = runner.invoke(main, ["check", "--store", str(bad)])
        assert result.exit_code == 1

    def test_check_missing_file_usage_error(self, runner):
        result = runner.invoke(main, ["check", "--store", "/no/such/file"])
        assert result.exit_code == 2


class TestTrainEval:
    def test_train_and_eval(self, corpus_dir, runner, tmp_path):
        ckpt = tmp_path / "model.cprm"
        report_path = tmp_path / "train.json"
        run(runner, ["train",
                     "--store", str(corpus_dir / "images.cemb"),
                     "--manifest", str(corpus_dir / "manifest.jsonl"),
                     "--epochs", "30", "--batch-size", "16", "--lr", "1e-3",
                     "--hidden", "64", "--seed", "0",
                     "--checkpoint", str(ckpt),
                     "--report", str(report_path)])
        report = json.loads(report_path.read_text())
        assert report["config"]["epochs"] == 30
        losses = [e["train_loss"] for e in report["epochs"]]
        assert losses[-1] < losses[0]

        result = run(runner, ["eval-classify",
                              "--checkpoint", str(ckpt),
                              "--store", str(corpus_dir / "images.cemb"),
                              "--manifest", str(corpus_dir / "manifest.jsonl"),
                              "--split", "test"])
        payload = json.loads(result.output)
        assert payload["accuracy"] >= 0.9
        assert 0.0 <= payload["map"] <= 1.0

    def test_defaults_echoed(self, corpus_dir, runner, tmp_path):
        # bare run must echo the library defaults: 300/64/1e-4/4096
        result = runner.invoke(main, ["train", "--help"])
        assert "300" in result.output
        assert "4096" in result.output
        assert "0.0001" in result.output or "1e-04" in result.output

    def test_zero_epochs_usage_error(self, corpus_dir, runner, tmp_path):
        result = runner.invoke(main, [
            "train", "--store", str(corpus_dir / "images.cemb"),
            "--manifest", str(corpus_dir / "manifest.jsonl"),
            "--epochs", "0", "--checkpoint", str(tmp_path / "c.cprm"),
        ])
        assert result.exit_code == 2

    def test_misaligned_store_exit_1(self, corpus_dir, runner, tmp_path):
        other = tmp_path / "other"
        run(runner, ["synth", "--classes", "2", "--dim", "32",
                     "--out", str(other)])
        result = runner.invoke(main, [
            "train", "--store", str(other / "images.cemb"),
            "--manifest", str(corpus_dir / "manifest.jsonl"),
            "--epochs", "1", "--checkpoint", str(tmp_path / "c.cprm"),
        ])
        assert result.exit_code == 1
        assert "missing" in result.output


class TestZeroShotAndRetrieve:
    def test_zero_shot_perfect_on_tight_corpus(self, corpus_dir, runner):
        result = run(runner, ["zero-shot",
                              "--images", str(corpus_dir / "images.cemb"),
                              "--texts", str(corpus_dir / "texts.cemb"),
                              "--manifest", str(corpus_dir / "manifest.jsonl"),
                              "--split", "test"])
        payload = json.loads(result.output)
        assert payload["accuracy"] == 1.0

    @pytest.mark.parametrize("mode", ["visual", "class-text",
                                      "class-text-rerank", "oracle"])
    def test_modes_run(self, corpus_dir, runner, mode, tmp_path):
        out = tmp_path / f"{mode}.json"
        run(runner, ["retrieve",
                     "--images", str(corpus_dir / "images.cemb"),
                     "--texts", str(corpus_dir / "texts.cemb"),
                     "--manifest", str(corpus_dir / "manifest.jsonl"),
                     "--mode", mode, "--out", str(out)])
        payload = json.loads(out.read_text())
        assert 0.0 <= payload["map"] <= 1.0
        assert payload["config"]["query_split"] == "val"

    def test_class_text_without_texts_usage_error(self, corpus_dir, runner):
        result = runner.invoke(main, [
            "retrieve", "--images", str(corpus_dir / "images.cemb"),
            "--manifest", str(corpus_dir / "manifest.jsonl"),
            "--mode", "class-text",
        ])
        assert result.exit_code == 2

    def test_rerank_depth_one_equals_class_text(self, corpus_dir, runner,
                                                tmp_path):
        common = ["--images", str(corpus_dir / "images.cemb"),
                  "--texts", str(corpus_dir / "texts.cemb"),
                  "--manifest", str(corpus_dir / "manifest.jsonl")]
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(runner, ["retrieve", *common, "--mode", "class-text-rerank",
                     "--rerank-depth", "1", "--out", str(a)])
        run(runner, ["retrieve", *common, "--mode", "class-text",
                     "--out", str(b)])
        pa = json.loads(a.read_text())
        pb = json.loads(b.read_text())
        assert pa["per_unit_ap"] == pb["per_unit_ap"]
        assert pa["map"] == pb["map"]

    def test_retrieve_deterministic_bytes(self, corpus_dir, runner, tmp_path):
        common = ["retrieve",
                  "--images", str(corpus_dir / "images.cemb"),
                  "--texts", str(corpus_dir / "texts.cemb"),
                  "--manifest", str(corpus_dir / "manifest.jsonl"),
                  "--mode", "class-text-rerank"]
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        ra, rb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run(runner, common + ["--out", str(a), "--rankings-out", str(ra)])
        run(runner, common + ["--out", str(b), "--rankings-out", str(rb)])
        assert a.read_bytes() == b.read_bytes()
        assert ra.read_bytes() == rb.read_bytes()


class TestReportDiff:
    def test_equal_reports(self, runner, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps({"map": 0.5, "per_unit_ap": {"q": 0.5}}))
        b.write_text(json.dumps({"map": 0.5, "per_unit_ap": {"q": 0.5}}))
        run(runner, ["report-diff", str(a), str(b)])

    def test_different_reports_exit_1(self, runner, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps({"map": 0.5}))
        b.write_text(json.dumps({"map": 0.75}))
        result = runner.invoke(main, ["report-diff", str(a), str(b)])
        assert result.exit_code == 1

    def test_tolerance_absorbs_difference(self, runner, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps({"map": 0.5}))
        b.write_text(json.dumps({"map": 0.5004}))
        run(runner, ["report-diff", str(a), str(b), "--tol", "0.001"])
