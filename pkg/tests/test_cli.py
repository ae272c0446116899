"""CLI subcommand contracts: payloads, exit codes, determinism."""

import json

import numpy as np
import pytest

from onnxnet import ArchRecord, parse_onnx, write_manifest
from onnxnet.cli import run

from onnx_oracle import single_conv_model
from test_encoding import GOLDEN_CONV_FULL
from test_ranker import synthetic_corpus


@pytest.fixture
def conv_file(tmp_path):
    path = tmp_path / "net.onnx"
    path.write_bytes(single_conv_model())
    return str(path)


def text_manifest(tmp_path, name, items, space="toy"):
    records = [
        ArchRecord(id=f"a{i:03d}", accuracy=acc, space=space, text=text)
        for i, (text, acc) in enumerate(items)
    ]
    path = tmp_path / name
    write_manifest(records, path)
    return str(path), records


class TestEncode:
    def test_golden_full_encoding(self, conv_file, capsys):
        assert run(["encode", conv_file, "--variant", "full"]) == 0
        assert capsys.readouterr().out == GOLDEN_CONV_FULL + "\n"

    def test_base_variant(self, conv_file, capsys):
        assert run(["encode", conv_file, "--variant", "base"]) == 0
        assert capsys.readouterr().out == "Conv --> Out\n"

    def test_out_file(self, conv_file, tmp_path, capsys):
        out = tmp_path / "enc.txt"
        assert run(["encode", conv_file, "--out", str(out)]) == 0
        assert out.read_text() == GOLDEN_CONV_FULL + "\n"
        assert capsys.readouterr().out == ""

    def test_missing_file_is_operational_error(self, tmp_path, capsys):
        missing = str(tmp_path / "nope.onnx")
        assert run(["encode", missing]) == 1
        err = capsys.readouterr().err
        assert err.startswith("error: ")

    def test_malformed_file_reports_error_kind(self, tmp_path, capsys):
        bad = tmp_path / "bad.onnx"
        bad.write_bytes(b"\x01\x02junk")
        assert run(["encode", str(bad)]) == 1
        assert "MalformedFile" in capsys.readouterr().err


class TestUsageErrors:
    def test_unknown_flag(self, conv_file, capsys):
        assert run(["encode", conv_file, "--wat"]) == 2

    def test_unknown_subcommand(self, capsys):
        assert run(["frobnicate"]) == 2

    def test_no_arguments(self, capsys):
        assert run([]) == 2


class TestSimplifyStats:
    def test_simplify_round_trips_and_reports(self, conv_file, tmp_path, capsys):
        out = tmp_path / "simplified.onnx"
        assert run(["simplify", conv_file, "--out", str(out), "--report"]) == 0
        reports = json.loads(capsys.readouterr().out)["reports"]
        assert {r["pass_name"] for r in reports} == {
            "remove_low_importance", "fold_constants", "merge_patterns",
        }
        g = parse_onnx(out.read_bytes())
        assert g.n_nodes == 1

    def test_stats_json(self, conv_file, capsys):
        assert run(["stats", conv_file]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["node_count"] == 1
        assert payload["op_histogram"] == {"Conv": 1.0}
        assert set(payload["variants"]) == {"base", "inputs", "parameters", "outshape", "full"}
        base, full = payload["variants"]["base"], payload["variants"]["full"]
        assert base["lines"] == full["lines"] == 1
        assert base["tokens"] <= full["tokens"]


class TestEval:
    def test_perfect_predictions(self, tmp_path, capsys):
        truth_path, records = text_manifest(
            tmp_path, "truth.jsonl", [(f"Conv --> Value{i} --> Out\n", float(i)) for i in range(6)]
        )
        pred_path = tmp_path / "preds.jsonl"
        with open(pred_path, "w") as fh:
            for r in records:
                fh.write(json.dumps({"id": r.id, "score": r.accuracy}) + "\n")
        assert run(["eval", "--pred", str(pred_path), "--truth", truth_path]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n"] == 6
        assert payload["kendall_tau"] == pytest.approx(1.0, abs=1e-12)
        assert payload["spearman_rho"] == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_truth_is_operational_error(self, tmp_path, capsys):
        truth_path, records = text_manifest(
            tmp_path, "truth.jsonl", [("Conv --> Out\n", 5.0), ("Relu --> Out\n", 5.0)]
        )
        pred_path = tmp_path / "preds.jsonl"
        with open(pred_path, "w") as fh:
            for r in records:
                fh.write(json.dumps({"id": r.id, "score": 5.0}) + "\n")
        assert run(["eval", "--pred", str(pred_path), "--truth", truth_path]) == 1
        assert "DegenerateInput" in capsys.readouterr().err


class TestTrainPredictLoop:
    def test_train_predict_eval_round_trip(self, tmp_path, capsys):
        items = synthetic_corpus(60, seed=3)
        train_path, _ = text_manifest(tmp_path, "train.jsonl", items[:48])
        val_path, _ = text_manifest(tmp_path, "val.jsonl", items[48:])
        model_path = str(tmp_path / "model.bin")
        assert run([
            "train-ranker", "--train", train_path, "--val", val_path,
            "--model-out", model_path, "--epochs", "2",
        ]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["epochs"] == 2
        assert summary["val_kendall_tau"] > 0.5

        preds_path = str(tmp_path / "preds.jsonl")
        assert run(["predict", "--model", model_path, "--manifest", val_path,
                    "--out", preds_path]) == 0
        assert run(["eval", "--pred", preds_path, "--truth", val_path]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n"] == 12
        assert payload["kendall_tau"] > 0.5

    def test_defaults_mirror_reference_recipe(self):
        from onnxnet.cli import build_parser

        args = build_parser().parse_args([
            "train-ranker", "--train", "t", "--model-out", "m",
        ])
        assert args.lr == 5e-5
        assert args.epochs == 5
        assert args.batch == 16
        assert args.margin == 1.0
        assert args.seed == 42
        assert args.schedule == "polynomial"
        assert args.end_lr == 5e-6
        assert args.weight_decay == 0.1
        assert args.warmup == 0.06

    def test_train_on_path_records_needs_text(self, tmp_path, conv_file, capsys):
        records = [ArchRecord(id="a", accuracy=1.0, path=conv_file),
                   ArchRecord(id="b", accuracy=2.0, path=conv_file)]
        path = tmp_path / "paths.jsonl"
        write_manifest(records, path)
        assert run(["train-ranker", "--train", str(path),
                    "--model-out", str(tmp_path / "m.bin")]) == 1
        assert "MissingText" in capsys.readouterr().err


class TestIngest:
    def _path_manifest(self, tmp_path, n=6, corrupt=None):
        records = []
        for i in range(n):
            p = tmp_path / f"net{i}.onnx"
            if i == corrupt:
                p.write_bytes(b"junk")
            else:
                p.write_bytes(single_conv_model(filters=4 + i))
            records.append(ArchRecord(id=f"net{i}", accuracy=float(i), path=str(p)))
        path = tmp_path / "in.jsonl"
        write_manifest(records, path)
        return str(path)

    def test_ingest_writes_encoded_manifest(self, tmp_path):
        manifest = self._path_manifest(tmp_path)
        out = tmp_path / "enc.jsonl"
        assert run(["ingest", "--manifest", manifest, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 6
        assert all("text" in json.loads(line) for line in lines)

    def test_worker_determinism_and_error_sidecar(self, tmp_path):
        manifest = self._path_manifest(tmp_path, n=8, corrupt=2)
        out1, out8 = tmp_path / "w1.jsonl", tmp_path / "w8.jsonl"
        err1, err8 = tmp_path / "e1.jsonl", tmp_path / "e8.jsonl"
        assert run(["ingest", "--manifest", manifest, "--out", str(out1),
                    "--workers", "1", "--errors", str(err1)]) == 0
        assert run(["ingest", "--manifest", manifest, "--out", str(out8),
                    "--workers", "8", "--errors", str(err8)]) == 0
        assert out1.read_bytes() == out8.read_bytes()
        assert err1.read_bytes() == err8.read_bytes()
        errors = [json.loads(l) for l in err1.read_text().splitlines()]
        assert [e["id"] for e in errors] == ["net2"]
        assert len(out1.read_text().splitlines()) == 7


class TestLogging:
    def test_ingest_errors_logged_without_sidecar(self, tmp_path, caplog):
        bad = tmp_path / "bad.onnx"
        bad.write_bytes(b"junk")
        records = [ArchRecord(id="bad", accuracy=1.0, path=str(bad)),
                   ArchRecord(id="ok", accuracy=2.0, text="Conv --> Out\n")]
        manifest = tmp_path / "in.jsonl"
        write_manifest(records, manifest)
        out = tmp_path / "out.jsonl"
        with caplog.at_level("WARNING", logger="onnxnet"):
            assert run(["ingest", "--manifest", str(manifest), "--out", str(out)]) == 0
        assert any("bad" in record.message for record in caplog.records)
        assert len(out.read_text().splitlines()) == 1

    def test_log_env_var_accepts_levels(self, monkeypatch, conv_file, capsys):
        monkeypatch.setenv("ONNXNET_LOG", "debug")
        assert run(["stats", conv_file]) == 0
        monkeypatch.setenv("ONNXNET_LOG", "error")
        assert run(["stats", conv_file]) == 0


class TestDiversity:
    def _space_manifest(self, tmp_path, name, filter_counts):
        records = []
        for i, filters in enumerate(filter_counts):
            p = tmp_path / f"{name}{i}.onnx"
            p.write_bytes(single_conv_model(filters=filters))
            records.append(
                ArchRecord(id=f"{name}{i}", accuracy=float(i), space=name, path=str(p))
            )
        path = tmp_path / f"{name}.jsonl"
        write_manifest(records, path)
        return str(path)

    def test_within_identical_models_zero(self, tmp_path, capsys):
        manifest = self._space_manifest(tmp_path, "s1", [8, 8, 8])
        assert run(["diversity", "--manifest-a", manifest, "--within"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["mode"] == "within"
        assert payload["value_bits"] == 0.0
        assert payload["n"] == 3
        assert payload["pairs"] == 3

    def test_between_identical_spaces_zero(self, tmp_path, capsys):
        a = self._space_manifest(tmp_path, "sa", [8, 8])
        b = self._space_manifest(tmp_path, "sb", [8, 8])
        assert run(["diversity", "--manifest-a", a, "--manifest-b", b]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["mode"] == "between"
        assert payload["value_bits"] == 0.0
        assert payload["space_a"] == "sa" and payload["space_b"] == "sb"
