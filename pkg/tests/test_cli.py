import json
import subprocess
import sys

import numpy as np
import pytest

from fginpaint.checkpoint import load_checkpoint
from fginpaint.cli import main
from fginpaint.datakit import load_mask_png, load_png, read_manifest
from fginpaint.evalkit import MetricReport

TINY = ["--set", "scene.canvas_size=32", "--set", "optim.batch_size=1", "--set", "data.n_images=3",
        "--set", "schedule.stage_boundaries=[2,4]"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def ckpts(tmp_path_factory):
    d = tmp_path_factory.mktemp("ckpts")
    assert main(["synth", "--out", str(d / "ds"), "--n", "3", *TINY]) == 0
    assert main(["train", "--phase", "contour", "--data", str(d / "ds"), "--steps", "2",
                 "--out", str(d / "c.ckpt"), *TINY]) == 0
    assert main(["train", "--phase", "image-pretrain", "--steps", "2", "--out", str(d / "p.ckpt"), *TINY]) == 0
    assert main(["train", "--phase", "image-finetune", "--init", str(d / "p.ckpt"), "--steps", "2",
                 "--out", str(d / "g.ckpt"), *TINY]) == 0
    return d


def test_help_lists_subcommands():
    res = subprocess.run([sys.executable, "-m", "fginpaint", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("synth", "train", "infer", "eval", "inspect-ckpt"):
        assert cmd in res.stdout


@pytest.mark.parametrize("argv", [[], ["bogus"], ["synth", "--n", "0"], ["train"],
                                  ["train", "--phase", "nope"], ["eval"], ["synth", "--set", "noequals"]])
def test_usage_errors_exit_1(capsys, tmp_path, argv):
    if argv[:1] == ["synth"]:
        argv = argv + ["--out", str(tmp_path / "d")]
    with pytest.raises(SystemExit) as exc:
        code = main(argv)
        raise SystemExit(code)
    assert exc.value.code == 1


def test_synth_writes_manifest_and_refuses_overwrite(capsys, tmp_path):
    code, out, _ = run(capsys, "synth", "--out", tmp_path / "ds", "--n", 4, "--seed", 3, *TINY)
    assert code == 0
    info = json.loads(out)
    man = read_manifest(tmp_path / "ds")
    assert len(man["samples"]) == 4
    assert man["meta"]["seed"] == 3 and man["meta"]["config_hash"] == info["config_hash"]
    assert load_png(tmp_path / "ds" / man["samples"][0]["image"], 3).shape == (32, 32, 3)
    code, _, err = run(capsys, "synth", "--out", tmp_path / "ds", "--n", 4, *TINY)
    assert code == 1 and "--force" in err
    assert run(capsys, "synth", "--out", tmp_path / "ds", "--n", 2, "--force", *TINY)[0] == 0


def test_synth_is_deterministic(capsys, tmp_path):
    for name in ("a", "b"):
        run(capsys, "synth", "--out", tmp_path / name, "--n", 2, "--regime", "overlap", *TINY)
    for sub in ("image/00001.png", "hole/00001.png", "contour/00000.png"):
        assert (tmp_path / "a" / sub).read_bytes() == (tmp_path / "b" / sub).read_bytes()


def test_config_env_var(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 11\nscene:\n  canvas_size: 32\n")
    monkeypatch.setenv("FGINPAINT_CONFIG", str(cfg))
    code, out, _ = run(capsys, "synth", "--out", tmp_path / "ds", "--n", 1)
    assert code == 0 and json.loads(out)["seed"] == 11
    # flags win over the file
    code, out, _ = run(capsys, "synth", "--out", tmp_path / "ds2", "--n", 1, "--seed", 5)
    assert json.loads(out)["seed"] == 5
    monkeypatch.setenv("FGINPAINT_CONFIG", str(tmp_path / "missing.yaml"))
    assert run(capsys, "synth", "--out", tmp_path / "ds3", "--n", 1)[0] == 2


def test_bad_config_value_is_usage_error(capsys, tmp_path):
    code, _, err = run(capsys, "synth", "--out", tmp_path / "d", "--set", "profile=huge")
    assert code == 1 and "profile" in err


def test_train_resume_matches_uninterrupted(capsys, tmp_path):
    args = ["train", "--phase", "contour", *TINY]
    assert run(capsys, *args, "--steps", 4, "--out", tmp_path / "full.ckpt")[0] == 0
    assert run(capsys, *args, "--steps", 2, "--out", tmp_path / "part.ckpt")[0] == 0
    assert run(capsys, *args, "--steps", 4, "--resume", tmp_path / "part.ckpt", "--out",
               tmp_path / "part.ckpt")[0] == 0
    a, b = load_checkpoint(tmp_path / "full.ckpt"), load_checkpoint(tmp_path / "part.ckpt")
    assert a.meta["step"] == b.meta["step"] == 4
    for k in a.arrays:
        if k.startswith("contour_g/"):
            np.testing.assert_array_equal(a.arrays[k], b.arrays[k])


def test_train_joint_requires_checkpoints(capsys, ckpts):
    code, _, err = run(capsys, "train", "--phase", "joint", "--steps", 1, *TINY)
    assert code == 1 and "--contour-ckpt" in err
    code, _, err = run(capsys, "train", "--phase", "joint", "--steps", 1, "--contour-ckpt", ckpts / "nope.ckpt",
                       "--image-ckpt", ckpts / "g.ckpt", *TINY)
    assert code == 2


def test_train_joint_and_inspect(capsys, ckpts, tmp_path):
    code, out, _ = run(capsys, "train", "--phase", "joint", "--contour-ckpt", ckpts / "c.ckpt", "--image-ckpt",
                       ckpts / "g.ckpt", "--steps", 1, "--out", tmp_path / "j.ckpt", *TINY)
    assert code == 0 and json.loads(out)["kind"] == "joint"
    code, out, _ = run(capsys, "inspect-ckpt", tmp_path / "j.ckpt", "--arrays")
    info = json.loads(out)
    assert code == 0 and info["kind"] == "joint" and info["step"] == 1
    assert {"contour_g", "image_g"} <= set(info["groups"])
    assert info["config_hash"] == json.loads(run(capsys, "inspect-ckpt", ckpts / "g.ckpt")[1])["config_hash"]
    assert run(capsys, "inspect-ckpt", tmp_path / "missing.ckpt")[0] == 2
    (tmp_path / "junk.ckpt").write_bytes(b"not a checkpoint")
    assert run(capsys, "inspect-ckpt", tmp_path / "junk.ckpt")[0] == 2


def test_infer_writes_outputs(capsys, ckpts, tmp_path):
    ds = ckpts / "ds"
    code, _, _ = run(capsys, "infer", "--image", ds / "image/00000.png", "--hole", ds / "hole/00000.png",
                     "--seg", ds / "seg/00000.png", "--contour-ckpt", ckpts / "c.ckpt",
                     "--image-ckpt", ckpts / "g.ckpt", "--out-dir", tmp_path / "o")
    assert code == 0
    for f in ("completed.png", "contour_in.png", "contour.png", "overlay.png", "infer.json"):
        assert (tmp_path / "o" / f).exists()
    prov = json.loads((tmp_path / "o" / "infer.json").read_text())
    assert prov["provenance"] == "external" and prov["image_ckpt"]["seed"] == 0
    done = load_png(tmp_path / "o" / "completed.png", 3)
    img = load_png(ds / "image/00000.png", 3)
    keep = load_mask_png(ds / "hole/00000.png") == 0
    np.testing.assert_array_equal(done[keep], img[keep])


def test_infer_errors(capsys, ckpts, tmp_path):
    ds = ckpts / "ds"
    base = ["infer", "--image", ds / "image/00000.png", "--hole", ds / "hole/00000.png", "--out-dir", tmp_path]
    # guided model without a contour checkpoint
    assert run(capsys, *base, "--image-ckpt", ckpts / "g.ckpt")[0] == 2
    assert run(capsys, *base, "--image-ckpt", ckpts / "nope.ckpt")[0] == 2
    # unguided model needs no contour checkpoint and falls back to the heuristic detector
    assert run(capsys, *base, "--image-ckpt", ckpts / "p.ckpt")[0] == 0


def test_eval_reports(capsys, ckpts, tmp_path):
    code, out, _ = run(capsys, "eval", "--models", "oracle", f"guided={ckpts / 'g.ckpt'},{ckpts / 'c.ckpt'}",
                       "--n-images", 2, "--regimes", "overlap", "--out-dir", tmp_path, *TINY)
    assert code == 0
    means = json.loads(out)["means"]
    assert means["oracle"]["all"]["l1"] == 0.0
    rep = MetricReport.from_csv(tmp_path / "report_guided.csv")
    assert len(rep.rows) == 2 and rep.meta["seed"] == 0 and "config_hash" in rep.meta
    assert MetricReport.from_json(tmp_path / "report_guided.json").rows == rep.rows
    assert run(capsys, "eval", "--models", "guided", *TINY)[0] == 1
    assert run(capsys, "eval", "--models", f"x={ckpts / 'c.ckpt'}", *TINY)[0] == 1
