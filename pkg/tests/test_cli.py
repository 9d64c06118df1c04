import csv
import os

import numpy as np
import pytest

from lsksr.checkpoint import load_checkpoint
from lsksr.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from lsksr.imaging import load_png, plane_to_u8, save_png
from tests.conftest import synthetic_image


def run(*argv):
    return main(list(argv))


@pytest.fixture
def hr_dir(tmp_path):
    d = tmp_path / "hr"
    d.mkdir()
    rng = np.random.default_rng(42)
    for i in range(4):
        save_png(plane_to_u8(synthetic_image(rng, 48)), d / f"img{i}.png")
    return d


@pytest.fixture
def dataset_dir(hr_dir, tmp_path):
    d = tmp_path / "data"
    assert run("degrade", "--hr-dir", str(hr_dir), "--out-dir", str(d),
               "--scale", "2") == EXIT_OK
    return d


def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


# -- analyze ----------------------------------------------------------------------

def test_analyze_table_and_csv(tmp_path, capsys):
    csv_path = tmp_path / "t.csv"
    assert run("analyze", "--models", "SRCNN,S-SRCNN,ESPCN,S-ESPCN",
               "--csv", str(csv_path)) == EXIT_OK
    out = capsys.readouterr().out
    assert "57.28" in out and "21.47" in out and "12.10" in out
    rows = list(csv.DictReader(open(csv_path)))
    assert [r["model"] for r in rows] == ["SRCNN", "S-SRCNN", "ESPCN", "S-ESPCN"]
    decline = float(rows[1]["decline_params_pct"])
    assert decline == pytest.approx(100 * (1 - 21473 / 57281), abs=0.01)
    assert float(rows[1]["flops_mul_g"]) == pytest.approx(5.63, abs=0.01)


def test_analyze_needs_pairs(capsys):
    assert run("analyze", "--models", "SRCNN") == EXIT_USAGE
    assert "pairs" in capsys.readouterr().err


def test_analyze_unknown_model(capsys):
    assert run("analyze", "--models", "SRCNN,NOPE") == EXIT_USAGE


def test_analyze_deterministic_csv(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run("analyze", "--models", "VDSR-B2,S-VDSR-B2", "--csv", str(a))
    run("analyze", "--models", "VDSR-B2,S-VDSR-B2", "--csv", str(b))
    assert a.read_bytes() == b.read_bytes()


# -- degrade ----------------------------------------------------------------------

def test_degrade_outputs(dataset_dir):
    names = sorted(os.listdir(dataset_dir))
    assert "manifest.csv" in names
    pngs = [n for n in names if n.endswith(".png")]
    assert len(pngs) == 12  # 4 images x (hr, lr, bic)
    hr = load_png(dataset_dir / "img0_hr.png")
    lr = load_png(dataset_dir / "img0_lr.png")
    bic = load_png(dataset_dir / "img0_bic.png")
    assert hr.shape == (48, 48) and lr.shape == (24, 24) and bic.shape == (48, 48)


def test_degrade_idempotent(hr_dir, tmp_path):
    d1, d2 = tmp_path / "d1", tmp_path / "d2"
    for d in (d1, d2):
        run("degrade", "--hr-dir", str(hr_dir), "--out-dir", str(d), "--scale", "2")
    for name in sorted(os.listdir(d1)):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_degrade_missing_dir(tmp_path, capsys):
    assert run("degrade", "--hr-dir", str(tmp_path / "nope"),
               "--out-dir", str(tmp_path / "o")) == EXIT_USAGE


def test_degrade_empty_dir(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("degrade", "--hr-dir", str(empty),
               "--out-dir", str(tmp_path / "o")) == EXIT_USAGE


# -- train -------------------------------------------------------------------------

TRAIN_CFG = """
model = S-SRCNN
preset = toy
scale = 2
epochs = 2
batch_size = 8
lr_schedule = 0:1e-3
seed = 7
patch = 32
stride = 16
init = identity
loss_shave = 4
optimizer = adam
"""


def test_train_smoke_and_artifacts(dataset_dir, tmp_path):
    cfg = write_cfg(tmp_path, TRAIN_CFG)
    out = tmp_path / "out"
    assert run("train", "--config", cfg, "--dataset-dir", str(dataset_dir),
               "--out-dir", str(out)) == EXIT_OK
    assert (out / "S-SRCNN_final.lskc").exists()
    assert (out / "S-SRCNN_best.lskc").exists()
    rows = list(csv.DictReader(open(out / "S-SRCNN_metrics.csv")))
    assert [r["epoch"] for r in rows] == ["0", "1"]
    assert all(float(r["val_psnr"]) > 0 for r in rows)
    spec, tensors = load_checkpoint(out / "S-SRCNN_final.lskc")
    assert spec.name == "S-SRCNN"


def test_train_seed_reproducible(dataset_dir, tmp_path):
    cfg = write_cfg(tmp_path, TRAIN_CFG)
    outs = []
    for sub in ("o1", "o2"):
        out = tmp_path / sub
        run("train", "--config", cfg, "--dataset-dir", str(dataset_dir),
            "--out-dir", str(out))
        outs.append(out)
    assert (outs[0] / "S-SRCNN_metrics.csv").read_bytes() == \
           (outs[1] / "S-SRCNN_metrics.csv").read_bytes()
    assert (outs[0] / "S-SRCNN_final.lskc").read_bytes() == \
           (outs[1] / "S-SRCNN_final.lskc").read_bytes()


def test_train_divergence_exit_code(dataset_dir, tmp_path, capsys):
    cfg = write_cfg(tmp_path, TRAIN_CFG.replace("0:1e-3", "0:1e6")
                    .replace("optimizer = adam", "optimizer = sgd-momentum")
                    .replace("init = identity", "init = uniform")
                    .replace("epochs = 2", "epochs = 10"))
    out = tmp_path / "out"
    with np.errstate(all="ignore"):
        code = run("train", "--config", cfg, "--dataset-dir", str(dataset_dir),
                   "--out-dir", str(out))
    assert code == EXIT_NUMERIC
    assert "diverged" in capsys.readouterr().err


def test_train_missing_dataset(tmp_path, capsys):
    cfg = write_cfg(tmp_path, TRAIN_CFG)
    assert run("train", "--config", cfg, "--dataset-dir", str(tmp_path / "none"),
               "--out-dir", str(tmp_path / "o")) == EXIT_USAGE


# -- eval --------------------------------------------------------------------------

@pytest.fixture
def trained(dataset_dir, tmp_path):
    cfg = write_cfg(tmp_path, TRAIN_CFG)
    out = tmp_path / "out"
    run("train", "--config", cfg, "--dataset-dir", str(dataset_dir),
        "--out-dir", str(out))
    return out / "S-SRCNN_final.lskc"


def test_eval_outputs(trained, dataset_dir, tmp_path, capsys):
    out = tmp_path / "evalout"
    assert run("eval", "--checkpoint", str(trained), "--dataset-dir", str(dataset_dir),
               "--out-dir", str(out), "--scale", "2") == EXIT_OK
    rows = list(csv.DictReader(open(out / "eval.csv")))
    assert [r["image"] for r in rows] == ["img0", "img1", "img2", "img3", "mean"]
    per_image = [float(r["psnr_db"]) for r in rows[:-1]]
    assert float(rows[-1]["psnr_db"]) == pytest.approx(np.mean(per_image), abs=0.005)
    for r in rows:
        assert 5.0 < float(r["psnr_db"]) <= 100.0
        assert 0.0 < float(r["ssim"]) <= 1.0
        assert 5.0 < float(r["bicubic_psnr_db"]) <= 100.0


def test_eval_requires_checkpoint(dataset_dir, tmp_path):
    assert run("eval", "--dataset-dir", str(dataset_dir),
               "--out-dir", str(tmp_path / "o")) == EXIT_USAGE


# -- convert -----------------------------------------------------------------------

def test_convert_merge_then_eval_matches(trained, dataset_dir, tmp_path, capsys):
    merged = tmp_path / "merged.lskc"
    assert run("convert", "--checkpoint", str(trained), "--mode", "merge",
               "--out", str(merged)) == EXIT_OK
    assert "merged 1 separable layer(s)" in capsys.readouterr().out
    out_a, out_b = tmp_path / "ea", tmp_path / "eb"
    run("eval", "--checkpoint", str(trained), "--dataset-dir", str(dataset_dir),
        "--out-dir", str(out_a), "--scale", "2")
    run("eval", "--checkpoint", str(merged), "--dataset-dir", str(dataset_dir),
        "--out-dir", str(out_b), "--scale", "2")
    # merge is numerically exact at the reported precision
    assert (out_a / "eval.csv").read_bytes() == (out_b / "eval.csv").read_bytes()


def test_convert_merge_noop_warns(trained, tmp_path, capsys):
    merged = tmp_path / "m.lskc"
    run("convert", "--checkpoint", str(trained), "--mode", "merge", "--out", str(merged))
    capsys.readouterr()
    again = tmp_path / "m2.lskc"
    assert run("convert", "--checkpoint", str(merged), "--mode", "merge",
               "--out", str(again)) == EXIT_OK
    assert "no-op" in capsys.readouterr().err


def test_convert_decompose_round_trip(trained, tmp_path, capsys):
    merged = tmp_path / "m.lskc"
    run("convert", "--checkpoint", str(trained), "--mode", "merge", "--out", str(merged))
    dec = tmp_path / "d.lskc"
    assert run("convert", "--checkpoint", str(merged), "--mode", "decompose",
               "--out", str(dec)) == EXIT_OK
    out = capsys.readouterr().out
    assert "residual" in out
    spec, _ = load_checkpoint(dec)
    assert any(l.kind == "separable" for l in spec.layers)


# -- dump-features -------------------------------------------------------------------

def test_dump_features(trained, dataset_dir, tmp_path, capsys):
    out = tmp_path / "feat"
    img = dataset_dir / "img0_bic.png"
    assert run("dump-features", "--checkpoint", str(trained), "--image", str(img),
               "--layer-index", "0", "--out-dir", str(out)) == EXIT_OK
    pngs = sorted(os.listdir(out))
    # toy S-SRCNN layer 0 has 16 output channels + 1 montage
    assert len([p for p in pngs if p.startswith("feature_0_")]) == 16
    assert "montage_0.png" in pngs
    m = load_png(out / "feature_0_000.png")
    assert m.dtype == np.uint8 and m.shape == (48, 48)


def test_dump_features_bad_layer(trained, dataset_dir, tmp_path):
    assert run("dump-features", "--checkpoint", str(trained),
               "--image", str(dataset_dir / "img0_bic.png"),
               "--layer-index", "9", "--out-dir", str(tmp_path / "f")) == EXIT_USAGE
