"""End-to-end command-line tests, all in-process via cli.main(argv)."""

import json

import pytest

from smallclip.cli import main


SYNTH = ["synth", "--classes", "3", "--clips-per-class", "4",
         "--val-per-class", "2", "--test-per-class", "2",
         "--frames-min", "2", "--frames-max", "4",
         "--d-feature", "5", "--d-audio", "6",
         "--margin", "5.0", "--noise", "0.2", "--seed", "0"]

FAST_CFG = "epochs = 2\nn = 3\nhidden = 8\nn_trees = 5\nlstm_hidden = 8\n"


@pytest.fixture
def workdir(tmp_path):
    manifest = tmp_path / "data.jsonl"
    assert main(SYNTH + ["--out", str(manifest)]) == 0
    cfg = tmp_path / "fast.cfg"
    cfg.write_text(FAST_CFG)
    return tmp_path


def test_help_and_version_exit_zero(capsys):
    assert main(["--help"]) == 0
    assert main(["--version"]) == 0
    assert main(["synth", "--help"]) == 0
    capsys.readouterr()


def test_usage_errors_exit_two(capsys):
    assert main([]) == 2
    assert main(["no-such-command"]) == 2
    assert main(["train-video"]) == 2          # missing required args
    assert main(["predict", "--model", "x", "--manifest", "y",
                 "--split", "weird", "--out", "z"]) == 2
    capsys.readouterr()


def test_synth_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(SYNTH + ["--out", str(a)]) == 0
    assert main(SYNTH + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    out = capsys.readouterr().out
    assert "wrote 24 clips" in out


def test_validate_prints_statistics(workdir, capsys):
    assert main(["validate", "--manifest", str(workdir / "data.jsonl")]) == 0
    assert "train" in capsys.readouterr().out


def test_missing_files_exit_one(workdir, capsys):
    m = str(workdir / "data.jsonl")
    assert main(["validate", "--manifest", str(workdir / "gone.jsonl")]) == 1
    assert main(["train-video", "--manifest", m, "--config",
                 str(workdir / "gone.cfg"), "--out",
                 str(workdir / "m.json")]) == 1
    assert main(["predict", "--model", str(workdir / "gone.json"),
                 "--manifest", m, "--out", str(workdir / "s.csv")]) == 1
    assert main(["evaluate", "--scores", str(workdir / "gone.csv"),
                 "--manifest", m]) == 1
    err = capsys.readouterr().err
    assert "error:" in err


def test_bad_config_file_exits_two(workdir, capsys):
    bad = workdir / "bad.cfg"
    bad.write_text("epochs = sometimes\n")
    assert main(["train-video", "--manifest", str(workdir / "data.jsonl"),
                 "--config", str(bad),
                 "--out", str(workdir / "m.json")]) == 2
    assert "line 1" in capsys.readouterr().err


def test_train_predict_evaluate_pipeline(workdir, capsys):
    m = str(workdir / "data.jsonl")
    cfg = str(workdir / "fast.cfg")
    ckpt = str(workdir / "video.json")
    scores = str(workdir / "scores.csv")

    assert main(["train-video", "--manifest", m, "--config", cfg,
                 "--pooling", "avg-pool", "--seed", "1",
                 "--out", ckpt]) == 0
    manifest = json.loads((workdir / "video.json.manifest.json").read_text())
    assert manifest["command"] == "train-video"
    assert manifest["seeds"] == [1]
    assert manifest["config"]["head"] == "avg-pool"
    assert manifest["inputs"][0] == m
    assert manifest["outputs"] == [ckpt]
    assert manifest["duration_s"] >= 0
    assert "version" in manifest and "argv" in manifest

    assert main(["predict", "--model", ckpt, "--manifest", m,
                 "--split", "val", "--out", scores]) == 0
    assert main(["evaluate", "--scores", scores, "--manifest", m,
                 "--split", "val"]) == 0
    out = capsys.readouterr().out
    assert "overall accuracy:" in out

    report_csv = str(workdir / "report.csv")
    assert main(["evaluate", "--scores", scores, "--manifest", m,
                 "--split", "val", "--out", report_csv]) == 0
    lines = (workdir / "report.csv").read_text().splitlines()
    assert lines[0] == "metric,value,n"
    capsys.readouterr()


def test_train_audio_and_pretrain(workdir, capsys):
    m = str(workdir / "data.jsonl")
    cfg = str(workdir / "fast.cfg")
    pre = workdir / "pre.jsonl"
    assert main(SYNTH + ["--seed", "9", "--out", str(pre)]) == 0

    assert main(["train-audio", "--manifest", m, "--config", cfg,
                 "--model", "mlp", "--pretrain", str(pre),
                 "--out", str(workdir / "mlp.json")]) == 0
    assert main(["train-audio", "--manifest", m, "--config", cfg,
                 "--model", "forest",
                 "--out", str(workdir / "forest.json")]) == 0
    out = capsys.readouterr().out
    assert out.count("val accuracy:") == 2
    # forests have no gradient pretraining phase
    assert main(["train-audio", "--manifest", m, "--config", cfg,
                 "--model", "forest", "--pretrain", str(pre),
                 "--out", str(workdir / "f2.json")]) == 1
    capsys.readouterr()


def test_evaluate_packaged_distribution_fallback(tmp_path, capsys):
    # 7-class data so the shipped distribution applies
    manifest = tmp_path / "d7.jsonl"
    args = list(SYNTH)
    args[args.index("--classes") + 1] = "7"
    assert main(args + ["--out", str(manifest)]) == 0
    cfg = tmp_path / "fast.cfg"
    cfg.write_text(FAST_CFG)
    ckpt = str(tmp_path / "v.json")
    scores = str(tmp_path / "s.csv")
    assert main(["train-video", "--manifest", str(manifest), "--config",
                 str(cfg), "--out", ckpt]) == 0
    assert main(["predict", "--model", ckpt, "--manifest", str(manifest),
                 "--split", "val", "--out", scores]) == 0
    capsys.readouterr()
    assert main(["evaluate", "--scores", scores, "--manifest", str(manifest),
                 "--split", "val", "--dist", "afew_test_dist.csv"]) == 0
    out = capsys.readouterr().out
    assert "overall accuracy:" in out
    assert "weighted accuracy:" in out
    assert main(["evaluate", "--scores", scores, "--manifest", str(manifest),
                 "--split", "val", "--dist", "nonexistent_dist.csv"]) == 1
    capsys.readouterr()


def test_fuse_and_learn_fusion(workdir, capsys):
    m = str(workdir / "data.jsonl")
    cfg = str(workdir / "fast.cfg")
    tables = []
    for i, modality in enumerate(("video", "audio")):
        ckpt = str(workdir / f"m{i}.json")
        cmd = ("train-video" if modality == "video" else "train-audio")
        assert main([cmd, "--manifest", m, "--config", cfg, "--seed", str(i),
                     "--out", ckpt]) == 0
        table = str(workdir / f"t{i}.csv")
        assert main(["predict", "--model", ckpt, "--manifest", m,
                     "--out", table]) == 0
        tables.append(table)

    fused = str(workdir / "fused.csv")
    assert main(["fuse", "--scores", *tables, "--weights", "0.65", "0.35",
                 "--out", fused]) == 0
    assert main(["evaluate", "--scores", fused, "--manifest", m,
                 "--split", "val"]) == 0

    weights_json = workdir / "w.json"
    assert main(["learn-fusion", "--scores", *tables, "--manifest", m,
                 "--grid-step", "0.25", "--out", str(weights_json)]) == 0
    payload = json.loads(weights_json.read_text())
    assert len(payload["weights"]) == 2
    assert abs(sum(payload["weights"]) - 1.0) < 1e-9
    assert 0.0 <= payload["accuracy"] <= 1.0
    out = capsys.readouterr().out
    assert "weights:" in out
    # out-of-range grid step fails the run
    assert main(["learn-fusion", "--scores", *tables, "--manifest", m,
                 "--grid-step", "0.7"]) == 1


def test_ensemble_jobs_do_not_change_output(workdir, capsys):
    m = str(workdir / "data.jsonl")
    cfg = str(workdir / "fast.cfg")
    a, b = str(workdir / "e1.csv"), str(workdir / "e2.csv")
    base = ["ensemble", "--manifest", m, "--config", cfg, "--modality",
            "audio", "--model", "forest", "--count", "3", "--seed", "4"]
    assert main(base + ["--jobs", "1", "--out", a]) == 0
    assert main(base + ["--jobs", "3", "--out", b]) == 0
    assert (workdir / "e1.csv").read_bytes() == (workdir / "e2.csv").read_bytes()
    manifest = json.loads((workdir / "e1.csv.manifest.json").read_text())
    assert manifest["seeds"] == [4, 5, 6]
    assert manifest["extra"]["modality"] == "audio"
    capsys.readouterr()


def test_cross_validate_and_repeat(workdir, capsys):
    m = str(workdir / "data.jsonl")
    cfg = str(workdir / "fast.cfg")
    out = workdir / "cv.csv"
    assert main(["cross-validate", "--manifest", m, "--config", cfg,
                 "--modality", "audio", "--model", "forest", "--folds", "3",
                 "--jobs", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "fold,accuracy,n"
    assert lines[-1].startswith("pooled,")
    assert len(lines) == 5  # header + 3 folds + pooled
    assert "3-fold accuracies:" in capsys.readouterr().out
    # k beyond the class support is a usage error
    assert main(["cross-validate", "--manifest", m, "--config", cfg,
                 "--modality", "audio", "--model", "forest",
                 "--folds", "40"]) == 2

    rep = workdir / "seeds.csv"
    assert main(["repeat", "--manifest", m, "--config", cfg, "--modality",
                 "audio", "--model", "forest", "--seeds", "1", "2", "3",
                 "--jobs", "3", "--out", str(rep)]) == 0
    lines = rep.read_text().splitlines()
    assert lines[0] == "seed,accuracy"
    assert len(lines) == 4
    assert "mean:" in capsys.readouterr().out


def test_recipe_preset_end_to_end(workdir, capsys):
    m = str(workdir / "data.jsonl")
    cfg = str(workdir / "fast.cfg")
    a, b = str(workdir / "r1.csv"), str(workdir / "r2.csv")
    base = ["recipe", "--preset", "submission1", "--manifest", m,
            "--config", cfg, "--seed", "2"]
    assert main(base + ["--jobs", "1", "--out", a]) == 0
    assert main(base + ["--jobs", "2", "--out", b]) == 0
    assert (workdir / "r1.csv").read_bytes() == (workdir / "r2.csv").read_bytes()
    manifest = json.loads((workdir / "r1.csv.manifest.json").read_text())
    assert manifest["extra"]["recipe"] == "submission1"
    assert [mm["seed"] for mm in manifest["extra"]["members"]] == [2, 3]
    assert manifest["extra"]["weights"] == [0.65, 0.35]
    out = capsys.readouterr().out
    assert "recipe submission1: 2 members" in out
    assert "held-out accuracy:" in out


def test_recipe_source_selection_errors(workdir, capsys):
    m = str(workdir / "data.jsonl")
    out = str(workdir / "x.csv")
    assert main(["recipe", "--manifest", m, "--out", out]) == 2
    assert main(["recipe", "--preset", "submission1", "--recipe", "f.preset",
                 "--manifest", m, "--out", out]) == 2
    assert main(["recipe", "--preset", "submission9", "--manifest", m,
                 "--out", out]) == 2
    capsys.readouterr()


def test_recipe_file_and_member_manifest(workdir, capsys):
    m = str(workdir / "data.jsonl")
    cfg = str(workdir / "fast.cfg")
    rcp = workdir / "six.preset"
    rcp.write_text("video = avg-pool*2 weighted-avg-pool*2\n"
                   "audio = forest*1 mlp*1\nfusion = mean\n")
    out = str(workdir / "six.csv")
    assert main(["recipe", "--recipe", str(rcp), "--manifest", m,
                 "--config", cfg, "--seed", "0", "--out", out]) == 0
    manifest = json.loads((workdir / "six.csv.manifest.json").read_text())
    members = manifest["extra"]["members"]
    assert len(members) == 6
    assert [mm["seed"] for mm in members] == list(range(6))
    kinds = [mm["kind"] for mm in members]
    assert kinds == ["avg-pool", "avg-pool", "weighted-avg-pool",
                     "weighted-avg-pool", "forest", "mlp"]
    capsys.readouterr()
