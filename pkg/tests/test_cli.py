import glob
import json
import os

import numpy as np
import pytest
import torch

from turbmit import cli
from turbmit import trainer as tr
from turbmit import turbsim as ts
from turbmit.pngio import load_png, save_png


def run_dirs(out_root, subcommand):
    return sorted(glob.glob(os.path.join(out_root, f"run_*_{subcommand}")))


class TestSimulate:
    def test_synthetic_run(self, clean_dir, tmp_path, capsys):
        out_root = str(tmp_path / "runs")
        code = cli.main(["simulate", "--clean-dir", clean_dir,
                         "--out-root", out_root, "--count", "5",
                         "--domain", "synthetic", "--seed", "3"])
        assert code == 0
        (run_dir,) = run_dirs(out_root, "simulate")
        manifest = ts.load_manifest(os.path.join(run_dir, "dataset",
                                                 ts.TRAIN_MANIFEST))
        assert len(manifest.records) == 5
        degraded = glob.glob(os.path.join(run_dir, "dataset", "degraded", "*.png"))
        assert len(degraded) == 5
        assert os.path.exists(os.path.join(run_dir, "resolved_config.ini"))
        assert os.path.exists(os.path.join(run_dir, "MANIFEST"))
        assert "manifest:" in capsys.readouterr().out

    def test_proxy_real_training_view_sealed(self, clean_dir, tmp_path):
        out_root = str(tmp_path / "runs")
        assert cli.main(["simulate", "--clean-dir", clean_dir,
                         "--out-root", out_root, "--count", "4",
                         "--domain", "proxy_real"]) == 0
        (run_dir,) = run_dirs(out_root, "simulate")
        view = ts.load_manifest(os.path.join(run_dir, "dataset", ts.TRAIN_MANIFEST))
        assert all(r.clean_path is None for r in view.records)
        sealed = ts.load_manifest(os.path.join(run_dir, "dataset",
                                               ts.SEALED_MANIFEST))
        assert all(r.clean_path is not None for r in sealed.records)

    def test_rerun_same_seed_identical_outputs(self, clean_dir, tmp_path):
        roots = [str(tmp_path / "a"), str(tmp_path / "b")]
        for root in roots:
            assert cli.main(["simulate", "--clean-dir", clean_dir,
                             "--out-root", root, "--count", "3",
                             "--seed", "11"]) == 0
        files = []
        for root in roots:
            (run_dir,) = run_dirs(root, "simulate")
            with open(os.path.join(run_dir, "dataset", ts.TRAIN_MANIFEST), "rb") as fh:
                files.append(fh.read())
        assert files[0] == files[1]

    def test_bad_domain_is_validation_error(self, clean_dir, tmp_path):
        code = cli.main(["simulate", "--clean-dir", clean_dir,
                         "--out-root", str(tmp_path), "--count", "2",
                         "--domain", "real"])
        assert code == 1

    def test_missing_clean_dir_is_io_error(self, tmp_path):
        code = cli.main(["simulate", "--clean-dir", str(tmp_path / "nope"),
                         "--out-root", str(tmp_path / "r"), "--count", "2"])
        assert code == 2


class TestTrain:
    def test_smoke_run_writes_artifacts(self, synthetic_dataset, tmp_path):
        out_root = str(tmp_path / "runs")
        manifest = os.path.join(synthetic_dataset, ts.TRAIN_MANIFEST)
        code = cli.main(["train", "--out-root", out_root, "--quiet",
                         "--set", f"teacher_manifest={manifest}",
                         "--set", "epochs=2", "--set", "iters_per_epoch=2",
                         "--set", "batch_size=2", "--set", "crop_size=32",
                         "--set", "base_width=8", "--set", "disc_width=8",
                         "--set", "rnet_width=8", "--set", "val_count=2"])
        assert code == 0
        (run_dir,) = run_dirs(out_root, "train")
        for name in ("resolved_config.ini", "train_log.jsonl", "metrics.jsonl",
                     "losses.png", "val_psnr.png", "MANIFEST"):
            assert os.path.exists(os.path.join(run_dir, name)), name
        assert os.path.exists(os.path.join(run_dir, "checkpoints", "latest.pt"))
        with open(os.path.join(run_dir, "metrics.jsonl")) as fh:
            epochs = [json.loads(line) for line in fh]
        assert len(epochs) == 2
        assert all("val_psnr" in e for e in epochs)
        # the snapshot alone reproduces the run configuration
        cfg = tr.load_config(os.path.join(run_dir, "resolved_config.ini"))
        assert cfg.epochs == 2 and cfg.base_width == 8

    def test_real_atm_without_student_manifest_names_key(self, synthetic_dataset,
                                                         tmp_path, capsys):
        manifest = os.path.join(synthetic_dataset, ts.TRAIN_MANIFEST)
        code = cli.main(["train", "--out-root", str(tmp_path), "--quiet",
                         "--set", f"teacher_manifest={manifest}",
                         "--set", "mode=real_atm"])
        assert code == 1
        assert "student_manifest" in capsys.readouterr().err

    def test_unknown_key_is_validation_error(self, tmp_path, capsys):
        code = cli.main(["train", "--out-root", str(tmp_path),
                         "--set", "warmup_iters=5"])
        assert code == 1
        assert "warmup_iters" in capsys.readouterr().err


@pytest.fixture(scope="module")
def zero_trunk_checkpoint(tmp_path_factory, synthetic_dataset):
    cfg = tr.TrainConfig(
        mode="syn_atm", epochs=1, iters_per_epoch=1, batch_size=2, crop_size=32,
        base_width=8, disc_width=8, rnet_width=8, val_count=2,
        teacher_manifest=os.path.join(synthetic_dataset, ts.TRAIN_MANIFEST))
    state = tr.build_state(cfg)
    with torch.no_grad():
        for p in state.gen.trunk.parameters():
            p.zero_()
    path = str(tmp_path_factory.mktemp("ckpt") / "zero_trunk.pt")
    tr.save_checkpoint(state, path)
    return path


class TestRestore:
    def test_zero_trunk_restores_identity(self, zero_trunk_checkpoint, tmp_path):
        input_dir = tmp_path / "inputs"
        input_dir.mkdir()
        rng = np.random.default_rng(0)
        for i in range(3):
            save_png(str(input_dir / f"im{i}.png"),
                     rng.uniform(0, 1, (3, 32, 32)).astype(np.float32))
        out_root = str(tmp_path / "runs")
        code = cli.main(["restore", "--checkpoint", zero_trunk_checkpoint,
                         "--input-dir", str(input_dir), "--out-root", out_root])
        assert code == 0
        (run_dir,) = run_dirs(out_root, "restore")
        outputs = sorted(glob.glob(os.path.join(run_dir, "restored", "*.png")))
        assert len(outputs) == 3
        for i, out in enumerate(outputs):
            a = load_png(str(input_dir / f"im{i}.png"))
            b = load_png(out)
            assert np.array_equal(a, b)

    def test_missing_checkpoint_is_io_error(self, tmp_path):
        code = cli.main(["restore", "--checkpoint", str(tmp_path / "none.pt"),
                         "--input-dir", str(tmp_path), "--out-root",
                         str(tmp_path / "r")])
        assert code == 2


class TestEvaluate:
    @pytest.fixture()
    def image_dirs(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir()
        b.mkdir()
        for i in range(3):
            frame = ts.make_test_card(32, seed=40 + i)
            save_png(str(a / f"x{i}.png"), frame)
            save_png(str(b / f"x{i}.png"), frame)
        return str(a), str(b)

    def test_with_references(self, image_dirs, tmp_path, capsys):
        a, b = image_dirs
        out_root = str(tmp_path / "runs")
        code = cli.main(["evaluate", "--restored-dir", a,
                         "--reference-dir", b, "--out-root", out_root])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["mean_ssim"] == pytest.approx(1.0)
        (run_dir,) = run_dirs(out_root, "evaluate")
        header = open(os.path.join(run_dir, "report.csv")).readline().strip()
        assert header == "name,psnr,ssim,piqe"

    def test_without_references(self, image_dirs, tmp_path):
        a, _ = image_dirs
        out_root = str(tmp_path / "runs")
        assert cli.main(["evaluate", "--restored-dir", a,
                         "--out-root", out_root]) == 0
        (run_dir,) = run_dirs(out_root, "evaluate")
        header = open(os.path.join(run_dir, "report.csv")).readline().strip()
        assert header == "name,piqe"

    def test_missing_dir_is_io_error(self, tmp_path):
        assert cli.main(["evaluate", "--restored-dir", str(tmp_path / "nope"),
                         "--out-root", str(tmp_path / "r")]) == 2


class TestUsage:
    def test_missing_subcommand(self):
        assert cli.main([]) == 1

    def test_bad_flag(self):
        assert cli.main(["simulate", "--unknown-flag", "x"]) == 1
