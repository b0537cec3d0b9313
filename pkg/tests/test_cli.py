import json

import numpy as np
import pytest
from PIL import Image

from tcrgan.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from tcrgan.dataset import denormalize, load_samples
from tcrgan.render import GUTTER, make_panel, save_panel

FAST = ["--input-size", "32", "--levels", "3", "--base-channels", "8"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["make-synthetic", "--out", str(root / "raw"), "--count", "10", "--image-size", "33",
                 "--seed", "1"]) == EXIT_OK
    assert main(["build-dataset", str(root / "raw"), str(root / "ds"), "--train-count", "7"]) == EXIT_OK
    assert main(["train", "--dataset", str(root / "ds"), "--out", str(root / "run"), "--variant", "tcr-gan",
                 "--epochs", "1", "--seed", "0", *FAST]) == EXIT_OK
    return root


def test_make_synthetic_writes_raw_layout(workspace):
    irs = sorted((workspace / "raw").rglob("*_ir.npy"))
    pmrs = sorted((workspace / "raw").rglob("*_pmr.npy"))
    assert len(irs) == len(pmrs) == 10
    assert np.load(irs[0]).shape == (33, 33) and np.load(pmrs[0]).shape == (9, 9)


def test_build_dataset_split(workspace):
    manifest = json.loads((workspace / "ds" / "manifest.json").read_text())
    assert [r["split"] for r in manifest["records"]] == ["train"] * 7 + ["test"] * 3
    assert manifest["image_size"] == 33
    assert set(manifest["stats"]) == {"ir", "pmr"}


def test_build_dataset_is_byte_identical(workspace, tmp_path):
    assert main(["build-dataset", str(workspace / "raw"), str(tmp_path / "again"), "--train-count", "7"]) == EXIT_OK
    assert (tmp_path / "again" / "manifest.json").read_bytes() == (workspace / "ds" / "manifest.json").read_bytes()


def test_build_dataset_empty_raw(tmp_path):
    (tmp_path / "raw").mkdir()
    assert main(["build-dataset", str(tmp_path / "raw"), str(tmp_path / "ds"), "--train-count", "1"]) == EXIT_RUNTIME
    assert not (tmp_path / "ds" / "manifest.json").exists()


def test_build_dataset_refuses_existing_manifest(workspace):
    assert main(["build-dataset", str(workspace / "raw"), str(workspace / "ds"), "--train-count", "7"]) == EXIT_USAGE


def test_train_writes_checkpoint(workspace):
    assert (workspace / "run" / "checkpoint_epoch0001.pt").exists()
    assert (workspace / "run" / "history.csv").read_text().startswith("step,epoch,d_loss,g_adv,g_l1,g_total")


def test_train_never_overwrites_silently(workspace):
    argv = ["train", "--dataset", str(workspace / "ds"), "--out", str(workspace / "run"), "--epochs", "1", *FAST]
    assert main(argv) == EXIT_USAGE


def test_train_bad_config_is_usage_error(workspace, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("learning_rate = 3\n")
    argv = ["train", "--dataset", str(workspace / "ds"), "--out", str(tmp_path / "r"), "--config", str(cfg)]
    assert main(argv) == EXIT_USAGE


def test_train_resume(workspace, tmp_path):
    argv = ["train", "--dataset", str(workspace / "ds"), "--out", str(tmp_path / "r2"),
            "--resume", str(workspace / "run" / "checkpoint_epoch0001.pt"), "--epochs", "2"]
    assert main(argv) == EXIT_OK
    assert (tmp_path / "r2" / "checkpoint_epoch0002.pt").exists()


def test_evaluate(workspace, capsys):
    out = workspace / "eval"
    assert main(["evaluate", "--checkpoint", str(workspace / "run" / "checkpoint_epoch0001.pt"),
                 "--dataset", str(workspace / "ds"), "--out", str(out)]) == EXIT_OK
    lines = (out / "report.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 + 1
    assert "PSNR" in capsys.readouterr().out


def test_evaluate_without_checkpoint(workspace, capsys):
    assert main(["evaluate", "--dataset", str(workspace / "ds"), "--out", "x"]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_predict_count(workspace, tmp_path):
    inputs = sorted((workspace / "raw").rglob("*_ir.npy"))[:3]
    assert main(["predict", "--checkpoint", str(workspace / "run" / "checkpoint_epoch0001.pt"),
                 "--out", str(tmp_path / "pred"), *map(str, inputs)]) == EXIT_OK
    outputs = sorted((tmp_path / "pred").glob("*.npy"))
    assert len(outputs) == 3
    assert np.load(outputs[0]).shape == (33, 33)


def test_render_panels(workspace, tmp_path):
    assert main(["render", "--checkpoint", str(workspace / "run" / "checkpoint_epoch0001.pt"),
                 "--dataset", str(workspace / "ds"), "--out", str(tmp_path / "fig"), "--count", "5"]) == EXIT_OK
    # the test split holds 3 samples
    files = sorted((tmp_path / "fig").glob("*.png"))
    assert len(files) == 3
    img = np.asarray(Image.open(files[0]))
    assert img.shape == (33, 3 * 33 + 2 * GUTTER, 3)


def test_render_five_train_panels(workspace, tmp_path):
    assert main(["render", "--checkpoint", str(workspace / "run" / "checkpoint_epoch0001.pt"),
                 "--dataset", str(workspace / "ds"), "--out", str(tmp_path / "fig"), "--split", "train"]) == EXIT_OK
    assert len(list((tmp_path / "fig").glob("*.png"))) == 5


def test_no_command_is_usage_error():
    assert main([]) == EXIT_USAGE


def test_help_lists_flags(capsys):
    assert main(["train", "--help"]) == EXIT_OK
    text = capsys.readouterr().out
    for flag in ("--variant", "--epochs", "--seed", "--config", "--resume", "--lambda-l1"):
        assert flag in text


# -- render contract ---------------------------------------------------------


def test_shared_scale(rng):
    truth = rng.uniform(0, 40, size=(16, 16))
    pred = rng.uniform(0, 55, size=(16, 16))
    panel = make_panel(rng.uniform(190, 300, size=(16, 16)), pred, truth)
    assert panel.pmr_vmax == max(truth.max(), pred.max())
    assert panel.pmr_vmin == 0.0


def test_oracle_panel_halves_identical(workspace, tmp_path):
    samples, manifest = load_samples(workspace / "ds", which="test")
    s = samples[0]
    truth = denormalize(s.pmr, manifest.stats).values
    panel = make_panel(denormalize(s.ir, manifest.stats).values, truth.copy(), truth)
    path = save_panel(panel, tmp_path / "oracle.png")
    img = np.asarray(Image.open(path))
    w = truth.shape[1]
    middle = img[:, w + GUTTER:2 * w + GUTTER]
    right = img[:, 2 * w + 2 * GUTTER:]
    np.testing.assert_array_equal(middle, right)
