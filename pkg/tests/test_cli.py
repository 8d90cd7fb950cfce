"""End-to-end command-line contract tests on a small synthetic dataset."""

import numpy as np
import pytest

from skullnet import cli
from skullnet.data import LABEL_COLUMNS, generate_synthetic


def run(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A 12-image dataset with a trained model, features, and classifier."""
    root = tmp_path_factory.mktemp("cliws")
    ds = root / "ds"
    assert run("synth", "--n", "12", "--seed", "3", "--out", str(ds)) == 0
    cfg = root / "train.cfg"
    cfg.write_text("epochs = 1\nbatch_size = 4\nseed = 11\n")
    model = root / "model.skn"
    history = root / "history.csv"
    split = root / "split.csv"
    rc = run(
        "train", "--data", str(ds), "--config", str(cfg), "--out", str(model),
        "--history", str(history), "--split-out", str(split),
    )
    assert rc == 0
    features = root / "features.csv"
    assert run("extract", "--model", str(model), "--data", str(ds), "--out", str(features)) == 0
    knn = root / "knn.skk"
    rc = run("fit-knn", "--features", str(features), "--labels", str(ds / "labels.csv"),
             "--k", "3", "--out", str(knn))
    assert rc == 0
    return root


@pytest.fixture(scope="module")
def memo_workspace(tmp_path_factory):
    """Memorisation fixture: 48 images, untrained extractor (epochs=0),
    k=1 classifier fitted on, and evaluated against, the full set."""
    root = tmp_path_factory.mktemp("memows")
    ds = root / "ds"
    assert run("synth", "--n", "48", "--seed", "21", "--out", str(ds)) == 0
    cfg = root / "train.cfg"
    cfg.write_text("epochs = 0\nseed = 2\n")
    model = root / "model.skn"
    rc = run("train", "--data", str(ds), "--config", str(cfg), "--out", str(model),
             "--train-ratio", "1.0", "--val-ratio", "0.0", "--test-ratio", "0.0")
    assert rc == 0
    features = root / "features.csv"
    assert run("extract", "--model", str(model), "--data", str(ds), "--out", str(features)) == 0
    knn = root / "knn.skk"
    rc = run("fit-knn", "--features", str(features), "--labels", str(ds / "labels.csv"),
             "--k", "1", "--out", str(knn))
    assert rc == 0
    return root


class TestSynth:
    def test_writes_images_and_labels(self, tmp_path):
        out = tmp_path / "d"
        assert run("synth", "--n", "10", "--seed", "1", "--out", str(out)) == 0
        assert len(list(out.glob("*.png"))) == 10
        assert (out / "labels.csv").exists()

    def test_n_zero_usage_error(self, tmp_path):
        assert run("synth", "--n", "0", "--seed", "1", "--out", str(tmp_path / "x")) == 2

    def test_deterministic_reruns(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run("synth", "--n", "8", "--seed", "5", "--out", str(a))
        run("synth", "--n", "8", "--seed", "5", "--out", str(b))
        assert (a / "labels.csv").read_bytes() == (b / "labels.csv").read_bytes()


class TestTrain:
    def test_outputs_exist(self, workspace):
        assert (workspace / "model.skn").exists()
        lines = (workspace / "history.csv").read_text().strip().split("\n")
        assert lines[0] == "epoch,train_loss,val_loss"
        assert len(lines) == 2  # one epoch
        epoch, tl, vl = lines[1].split(",")
        assert epoch == "1"
        float(tl), float(vl)

    def test_split_file(self, workspace):
        lines = (workspace / "split.csv").read_text().strip().split("\n")
        assert lines[0] == "filename,partition"
        parts = {line.split(",")[1] for line in lines[1:]}
        assert parts == {"train", "val", "test"}
        assert len(lines) - 1 == 12

    def test_deterministic_history(self, tmp_path, workspace):
        cfg = tmp_path / "cfg"
        cfg.write_text("epochs = 1\nbatch_size = 4\nseed = 11\n")
        h1, h2 = tmp_path / "h1.csv", tmp_path / "h2.csv"
        ds = workspace / "ds"
        for h in (h1, h2):
            rc = run("train", "--data", str(ds), "--config", str(cfg),
                     "--out", str(tmp_path / "m.skn"), "--history", str(h))
            assert rc == 0
        assert h1.read_bytes() == h2.read_bytes()

    def test_bad_config_exit_2(self, tmp_path, workspace):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("optimizer = quantum\n")
        rc = run("train", "--data", str(workspace / "ds"), "--config", str(cfg),
                 "--out", str(tmp_path / "m.skn"))
        assert rc == 2

    def test_missing_data_dir_exit_3(self, tmp_path):
        rc = run("train", "--data", str(tmp_path / "absent"), "--out", str(tmp_path / "m.skn"))
        assert rc == 3


class TestExtract:
    def test_row_and_column_counts(self, workspace):
        lines = (workspace / "features.csv").read_text().strip().split("\n")
        assert len(lines) == 13
        header = lines[0].split(",")
        assert header[0] == "filename"
        assert len(header) == 36865
        assert header[1] == "f0" and header[-1] == "f36863"

    def test_empty_dir_exit_2(self, tmp_path, workspace):
        empty = tmp_path / "empty"
        empty.mkdir()
        rc = run("extract", "--model", str(workspace / "model.skn"),
                 "--data", str(empty), "--out", str(tmp_path / "f.csv"))
        assert rc == 2

    def test_corrupt_model_exit_3(self, tmp_path, workspace):
        bad = tmp_path / "bad.skn"
        blob = bytearray((workspace / "model.skn").read_bytes())
        blob[-1] ^= 0xFF
        bad.write_bytes(bytes(blob))
        rc = run("extract", "--model", str(bad), "--data", str(workspace / "ds"),
                 "--out", str(tmp_path / "f.csv"))
        assert rc == 3

    def test_deterministic_rows(self, tmp_path, workspace):
        out = tmp_path / "again.csv"
        rc = run("extract", "--model", str(workspace / "model.skn"),
                 "--data", str(workspace / "ds"), "--out", str(out))
        assert rc == 0
        assert out.read_bytes() == (workspace / "features.csv").read_bytes()


class TestFitKnn:
    def test_records_k(self, workspace):
        from skullnet.serialize import load_knn

        model = load_knn(workspace / "knn.skk")
        assert model.k == 3
        assert model.s == 1.0
        assert model.features.shape == (12, 36864)

    def test_m_leq_k_exit_2(self, tmp_path, workspace):
        import pandas as pd

        feats = pd.read_csv(workspace / "features.csv").head(3)
        small = tmp_path / "small.csv"
        feats.to_csv(small, index=False)
        rc = run("fit-knn", "--features", str(small),
                 "--labels", str(workspace / "ds" / "labels.csv"),
                 "--k", "3", "--out", str(tmp_path / "k.skk"))
        assert rc == 2

    def test_round_trip_from_csv(self, tmp_path, workspace):
        from skullnet.serialize import load_knn, save_knn

        model = load_knn(workspace / "knn.skk")
        again = tmp_path / "again.skk"
        save_knn(model, again)
        assert again.read_bytes() == (workspace / "knn.skk").read_bytes()


class TestPredict:
    def test_output_format(self, workspace, capsys):
        rc = run("predict", "--model", str(workspace / "model.skn"),
                 "--knn", str(workspace / "knn.skk"),
                 "--image", str(workspace / "ds" / "img_00001.png"))
        assert rc == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert len(lines) == 7
        for line, name in zip(lines, LABEL_COLUMNS):
            parts = line.split(" ")
            assert parts[0] == name
            assert parts[1] in ("0", "1")
            conf = float(parts[2])
            assert 0.0 < conf < 1.0
            assert len(parts[2].split(".")[1]) == 6

    def test_training_image_recovers_own_label(self, memo_workspace, capsys):
        # img_00001 is a linear-fracture rendering and sits in the stored
        # training set, so with k=1 its own features are the neighbourhood
        rc = run("predict", "--model", str(memo_workspace / "model.skn"),
                 "--knn", str(memo_workspace / "knn.skk"),
                 "--image", str(memo_workspace / "ds" / "img_00001.png"))
        assert rc == 0
        out = dict(line.split(" ")[:2] for line in capsys.readouterr().out.strip().split("\n"))
        assert out["linear"] == "1"
        assert out["fracture"] == "1"
        assert out["not_fractured"] == "0"

    def test_missing_image_exit_3(self, workspace):
        rc = run("predict", "--model", str(workspace / "model.skn"),
                 "--knn", str(workspace / "knn.skk"),
                 "--image", str(workspace / "nope.png"))
        assert rc == 3


class TestEvaluate:
    def test_memorisation_fixture_perfect(self, memo_workspace, tmp_path):
        report_dir = tmp_path / "report"
        rc = run("evaluate", "--model", str(memo_workspace / "model.skn"),
                 "--knn", str(memo_workspace / "knn.skk"),
                 "--data", str(memo_workspace / "ds"),
                 "--labels", str(memo_workspace / "ds" / "labels.csv"),
                 "--report-dir", str(report_dir))
        assert rc == 0
        text = (report_dir / "report.txt").read_text()
        values = dict(line.split("=") for line in text.strip().split("\n"))
        # every query's own stored features are its 1-neighbourhood
        assert float(values["subset_accuracy"]) == 1.0
        assert float(values["hamming_loss"]) == 0.0
        assert float(values["micro_f1"]) == 1.0

    def test_report_schema_and_curves(self, workspace, tmp_path):
        report_dir = tmp_path / "r2"
        run("evaluate", "--model", str(workspace / "model.skn"),
            "--knn", str(workspace / "knn.skk"),
            "--data", str(workspace / "ds"),
            "--labels", str(workspace / "ds" / "labels.csv"),
            "--report-dir", str(report_dir))
        text = (report_dir / "report.txt").read_text()
        keys = [line.split("=")[0] for line in text.strip().split("\n")]
        assert keys[:5] == [
            "subset_accuracy", "hamming_score", "hamming_loss",
            "roc_auc_macro", "average_precision_macro",
        ]
        for name in LABEL_COLUMNS:
            assert f"{name}_precision" in keys
            assert f"{name}_tp" in keys
        for curve in ("roc.csv", "pr.csv"):
            lines = (report_dir / curve).read_text().strip().split("\n")
            assert lines[0] == "label,threshold,x,y"
        conf_lines = (report_dir / "confusion.csv").read_text().strip().split("\n")
        assert conf_lines[0] == "label,tp,fp,tn,fn"
        assert len(conf_lines) == 8

    def test_pr_recall_monotone_per_label(self, workspace, tmp_path):
        report_dir = tmp_path / "r3"
        run("evaluate", "--model", str(workspace / "model.skn"),
            "--knn", str(workspace / "knn.skk"),
            "--data", str(workspace / "ds"),
            "--labels", str(workspace / "ds" / "labels.csv"),
            "--report-dir", str(report_dir))
        lines = (report_dir / "pr.csv").read_text().strip().split("\n")[1:]
        per_label = {}
        for line in lines:
            label, _, recall, _ = line.split(",")
            per_label.setdefault(label, []).append(float(recall))
        for recalls in per_label.values():
            assert all(a <= b + 1e-12 for a, b in zip(recalls, recalls[1:]))


class TestUsage:
    def test_no_command(self):
        assert run() == 2

    def test_unknown_command(self):
        assert run("transmogrify") == 2

    def test_missing_required_flag(self):
        assert run("synth", "--n", "5") == 2
