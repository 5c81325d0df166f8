import json

import numpy as np
import pytest

from tumorgraph import cli, data, graph, weights_io

from conftest import balanced_spec, build_manifest, write_gray_png


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    manifest = build_manifest(root / "data", balanced_spec(per_class=3),
                              image_size=(96, 96), bit16_every=4)
    return root, manifest


@pytest.fixture(scope="module")
def small_config(workspace):
    root, _ = workspace
    cfg = {
        "input_size": 75,
        "hidden": 16,
        "dropout_rate": 0.0,
        "learning_rate": 1e-3,
        "batch_size": 4,
        "max_epochs": 1,
        "policy": "head_only",
        "seed": 3,
        "train_fraction": 0.7,
        "augment": {"rotation_max": 5.0, "zoom_range": 0.05, "width_shift": 0.05,
                    "height_shift": 0.05, "shear_max": 5.0, "horizontal_flip": True},
    }
    path = root / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestInspect:
    def test_reports_fig3_total(self, capsys):
        assert cli.main(["inspect", "--input-size", "150"]) == 0
        out = capsys.readouterr().out
        assert "22,475,427" in out
        assert "22,454,051" in out
        assert "21,376" in out

    def test_75_input_flatten_width(self, capsys):
        assert cli.main(["inspect", "--input-size", "75"]) == 0
        out = capsys.readouterr().out
        flatten_line = next(l for l in out.splitlines() if l.startswith("flatten "))
        assert "1280" in flatten_line

    def test_head_only_policy(self, capsys):
        assert cli.main(["inspect", "--input-size", "150", "--policy", "head_only"]) == 0
        assert "11,800,579" in capsys.readouterr().out


class TestWeightsCommands:
    def test_export_then_import_round_trip(self, tmp_path, capsys):
        out = tmp_path / "w.tgw"
        assert cli.main(["weights", "export", "--out", str(out), "--input-size", "75",
                         "--hidden", "16", "--seed", "5"]) == 0
        copy = tmp_path / "w2.tgw"
        assert cli.main(["weights", "import", "--weights", str(out),
                         "--out", str(copy)]) == 0
        assert out.read_bytes() == copy.read_bytes()

    def test_import_corrupt_file_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.tgw"
        bad.write_bytes(b"NOPE" + b"\x00" * 32)
        assert cli.main(["weights", "import", "--weights", str(bad)]) == 2
        assert "corrupt" in capsys.readouterr().err


class TestPredict:
    def test_zero_head_gives_thirds(self, tmp_path, capsys, rng):
        g = graph.build_model(75, hidden=16, dropout_rate=0.0)
        store = graph.init_random(g, seed=1)
        for name in ("dense_0/kernel", "dense_0/bias", "dense_1/kernel", "dense_1/bias"):
            store.set(name, np.zeros_like(store[name]))
        wpath = tmp_path / "zero_head.tgw"
        weights_io.export_weights(store, wpath, meta={"input_size": [75, 75],
                                                      "hidden": 16, "classes": 3,
                                                      "dropout_rate": 0.0})
        img = tmp_path / "scan.png"
        write_gray_png(img, rng.integers(0, 256, (64, 64), dtype=np.uint8))
        assert cli.main(["predict", "--image", str(img), "--weights", str(wpath)]) == 0
        out = capsys.readouterr().out
        assert out.count("0.333333") == 3

    def test_weights_without_meta_need_input_size(self, tmp_path, capsys, rng):
        # default hyperparameters: only the input size is unknown without meta
        g = graph.build_model(75)
        store = graph.init_random(g, seed=1)
        wpath = tmp_path / "bare.tgw"
        weights_io.export_weights(store, wpath)  # no meta
        img = tmp_path / "scan.png"
        write_gray_png(img, rng.integers(0, 256, (32, 32), dtype=np.uint8))
        assert cli.main(["predict", "--image", str(img), "--weights", str(wpath)]) == 1
        assert cli.main(["predict", "--image", str(img), "--weights", str(wpath),
                         "--input-size", "75"]) == 0


class TestTrainEvaluate:
    def test_train_writes_all_artifacts(self, workspace, small_config, tmp_path, capsys):
        _, manifest = workspace
        out = tmp_path / "run"
        code = cli.main(["train", "--manifest", str(manifest),
                         "--config", str(small_config), "--out", str(out)])
        assert code == 0
        for name in ("weights.tgw", "history.csv", "final_metrics.json",
                     "confusion_matrix.csv", "run_report.txt"):
            assert (out / name).exists(), name
        history = (out / "history.csv").read_text().strip().splitlines()
        assert len(history) == 2  # header + 1 epoch
        run_report = (out / "run_report.txt").read_text()
        assert "learning_rate = 0.001" in run_report
        assert "rotation_max" in run_report

    def test_evaluate_trained_weights(self, workspace, small_config, tmp_path, capsys):
        _, manifest = workspace
        out = tmp_path / "run"
        assert cli.main(["train", "--manifest", str(manifest),
                         "--config", str(small_config), "--out", str(out)]) == 0
        capsys.readouterr()
        code = cli.main(["evaluate", "--manifest", str(manifest),
                         "--weights", str(out / "weights.tgw"),
                         "--split", "val", "--train-fraction", "0.7", "--seed", "3",
                         "--out", str(tmp_path / "metrics.json")])
        assert code == 0
        payload = json.loads((tmp_path / "metrics.json").read_text())
        assert "accuracy" in payload and "loss" in payload
        assert set(payload["per_class"]) == set(data.CLASSES)


class TestAugmentPreview:
    def test_writes_images_and_sidecar(self, workspace, tmp_path, capsys):
        _, manifest = workspace
        out = tmp_path / "aug"
        assert cli.main(["augment-preview", "--manifest", str(manifest),
                         "--n", "5", "--out", str(out), "--seed", "9"]) == 0
        pngs = sorted(out.glob("*.png"))
        assert len(pngs) == 5
        sidecar = (out / "params.txt").read_text().strip().splitlines()
        assert sidecar[0].split() == ["filename", "source", "theta", "zoom",
                                      "tx", "ty", "shear", "flip"]
        assert len(sidecar) == 6


class TestErrorPaths:
    def test_unknown_flag_exits_1(self, capsys):
        assert cli.main(["inspect", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_subcommand_exits_1(self, capsys):
        assert cli.main(["transmogrify"]) == 1

    def test_missing_manifest_exits_2(self, tmp_path, capsys):
        assert cli.main(["train", "--manifest", str(tmp_path / "nope.csv"),
                         "--out", str(tmp_path / "o")]) == 2

    def test_bad_config_key_exits_1(self, workspace, tmp_path, capsys):
        _, manifest = workspace
        cfg = tmp_path / "bad.json"
        cfg.write_text('{"learning_rat": 0.1}')
        assert cli.main(["train", "--manifest", str(manifest),
                         "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "learning_rat" in capsys.readouterr().err

    def test_gradcheck_smoke(self, capsys):
        assert cli.main(["gradcheck", "--shapes", "1", "--seed", "7"]) == 0
        out = capsys.readouterr().out
        assert "conv2d" in out and "within tolerance" in out

    def test_corrupt_weights_in_evaluate_exits_2(self, workspace, tmp_path, capsys):
        _, manifest = workspace
        bad = tmp_path / "bad.tgw"
        bad.write_bytes(b"TGW1" + b"\xff" * 16)
        assert cli.main(["evaluate", "--manifest", str(manifest),
                         "--weights", str(bad)]) == 2
