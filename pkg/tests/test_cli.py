import json
from pathlib import Path

import pytest

from hiccap import synth
from hiccap.cli import all_orderings, main

CFG = {
    "model": {"d_model": 12, "recurrent_hidden": 12},
    "optimizer": {"initial_lr": 3e-3, "epochs": 2, "batch_size": 16},
    "split": {"train": 0.66, "val": 0.17, "test": 0.17},
}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_data")
    manifest = synth.generate(synth.default_spec(n_clips=60, seed=31), out)
    return manifest


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "run.json"
    path.write_text(json.dumps(CFG))
    return path


@pytest.fixture(scope="module")
def finetuned(tmp_path_factory, dataset, config_file):
    out = tmp_path_factory.mktemp("ft")
    code = main([
        "finetune", "--manifest", str(dataset), "--config", str(config_file),
        "--task", "multitask", "--seed", "0", "--out", str(out), "--no-timestamps",
    ])
    assert code == 0
    return out / "finetuned.hckp"


class TestValidate:
    def test_valid_manifest_exits_zero(self, dataset, capsys):
        assert main(["validate", "--manifest", str(dataset)]) == 0
        assert "zero violations" in capsys.readouterr().out

    def test_missing_file_exits_two(self, dataset, tmp_path, capsys):
        manifest = json.loads(Path(dataset).read_text())
        manifest["clips"][0]["audio_path"] = "nope.hcmf"
        broken = tmp_path / "broken.json"
        broken.write_text(json.dumps(manifest))
        assert main(["validate", "--manifest", str(broken)]) == 2
        assert "missing file" in capsys.readouterr().err

    def test_empty_manifest_warns_but_passes(self, tmp_path, capsys):
        empty = tmp_path / "empty.json"
        empty.write_text(json.dumps({"version": 1, "dims": {"text": 2, "audio": 2, "video": 2}, "clips": []}))
        assert main(["validate", "--manifest", str(empty)]) == 0
        assert "no clips" in capsys.readouterr().err


class TestStats:
    def test_writes_csv_and_text(self, dataset, tmp_path):
        out = tmp_path / "stats"
        assert main(["stats", "--manifest", str(dataset), "--out", str(out)]) == 0
        assert (out / "stats.csv").exists() and (out / "stats.txt").exists()
        assert "frames" in (out / "stats.csv").read_text()

    def test_agreement_from_annotations(self, dataset, tmp_path, capsys):
        ann = [{"clip_id": "clip_00000", "votes": [{"categories": [1, 0, 0, 0]}] * 3}]
        path = tmp_path / "ann.json"
        path.write_text(json.dumps(ann))
        assert main(["stats", "--manifest", str(dataset), "--annotations", str(path)]) == 0
        assert "kappa" in capsys.readouterr().out


class TestTrainEvalPipeline:
    def test_finetune_writes_artifacts(self, finetuned):
        out = finetuned.parent
        assert finetuned.exists()
        assert (out / "history.json").exists()
        assert (out / "config.json").exists()
        assert (out / "test_metrics.json").exists()

    def test_eval_reports_metrics(self, finetuned, dataset, capsys):
        assert main([
            "eval", "--checkpoint", str(finetuned), "--manifest", str(dataset),
            "--task", "multitask", "--no-timestamps",
        ]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert "macro_f1" in payload and payload["n_clips"] == 60

    def test_predict_round_trips_to_eval_metrics(self, finetuned, dataset, tmp_path, capsys):
        out = tmp_path / "pred"
        assert main([
            "predict", "--checkpoint", str(finetuned), "--manifest", str(dataset),
            "--task", "binary", "--out", str(out), "--no-timestamps",
        ]) == 0
        rows = json.loads((out / "predictions.json").read_text())["predictions"]
        assert len(rows) == 60
        for row in rows:
            assert sum(row["probs"]) == pytest.approx(1.0, abs=1e-5)

        # rescore by hand and compare with cmd_eval's f1
        from hiccap.ingest import load_dataset
        from hiccap.metrics import f1

        clips = {c.clip_id: c for c in load_dataset(dataset)}
        preds = [int(r["probs"][1] > r["probs"][0]) for r in rows]
        golds = [clips[r["clip_id"]].labels.binary for r in rows]
        assert main([
            "eval", "--checkpoint", str(finetuned), "--manifest", str(dataset),
            "--task", "binary", "--no-timestamps",
        ]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["f1_per_class"]["positive"] == pytest.approx(f1(preds, golds))

    def test_mask_probe_tags_report(self, finetuned, dataset, capsys):
        assert main([
            "mask-probe", "--checkpoint", str(finetuned), "--manifest", str(dataset),
            "--task", "multitask", "--mask", "tv", "--no-timestamps",
        ]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert sorted(payload["masked"]) == ["text", "video"]

    def test_bad_mask_exits_two(self, finetuned, dataset):
        assert main([
            "mask-probe", "--checkpoint", str(finetuned), "--manifest", str(dataset),
            "--mask", "xyz",
        ]) == 2


class TestDeterminism:
    def test_same_seed_identical_reports(self, dataset, config_file, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main([
                "finetune", "--manifest", str(dataset), "--config", str(config_file),
                "--task", "binary", "--seed", "7", "--out", str(out), "--no-timestamps",
            ]) == 0
            outs.append((out / "history.json").read_text())
        assert outs[0] == outs[1]

    def test_pretrain_smoke_and_warm_start(self, dataset, config_file, tmp_path):
        pre = tmp_path / "pre"
        assert main([
            "pretrain", "--manifest", str(dataset), "--config", str(config_file),
            "--seed", "3", "--epochs", "1", "--out", str(pre), "--no-timestamps",
        ]) == 0
        ft = tmp_path / "warm"
        assert main([
            "finetune", "--manifest", str(dataset), "--config", str(config_file),
            "--task", "multitask", "--seed", "3", "--out", str(ft),
            "--checkpoint", str(pre / "pretrained.hckp"), "--no-timestamps",
        ]) == 0
        assert (ft / "finetuned.hckp").exists()


class TestOrderingSweep:
    def test_eight_distinct_orderings(self):
        orderings = all_orderings()
        assert len(orderings) == 8
        assert len({o.to_string() for o in orderings}) == 8

    def test_sweep_emits_ranked_table_reproducibly(self, dataset, tmp_path):
        cfg = dict(CFG)
        cfg["optimizer"] = {"initial_lr": 3e-3, "epochs": 1, "batch_size": 32}
        cfg["model"] = {"d_model": 8, "recurrent_hidden": 8}
        cfg_path = tmp_path / "sweep.json"
        cfg_path.write_text(json.dumps(cfg))
        tables = []
        for name in ("sweep_a", "sweep_b"):
            out = tmp_path / name
            assert main([
                "sweep-ordering", "--manifest", str(dataset), "--config", str(cfg_path),
                "--task", "binary", "--seed", "1", "--out", str(out), "--no-timestamps",
            ]) == 0
            tables.append((out / "ordering_sweep.json").read_text())
        assert tables[0] == tables[1]
        payload = json.loads(tables[0])
        assert len(payload["ranking"]) == 8
        assert len({r["ordering"] for r in payload["ranking"]}) == 8
        metrics = [r["test_metric"] for r in payload["ranking"]]
        assert metrics == sorted(metrics, reverse=True)
        out = tmp_path / "sweep_a"
        csv = (out / "ordering_sweep.csv").read_text()
        assert csv.count("\n") == 9
