import json

import numpy as np
import pytest

from tfvaegan.classify import harmonic_mean
from tfvaegan.cli import main, parse_synthetic_recipe
from tfvaegan.data import load_native_bundle

SYN = "seed=1,n_seen_classes=4,n_unseen_classes=2,d_a=4,d_x=8,samples_per_class=12"
SMALL = ["--hidden", "8", "--batch-size", "16", "--n-critic", "1", "--syn-num", "6", "--cls-epochs", "2"]


@pytest.fixture
def trained(tmp_path):
    out = tmp_path / "train"
    assert main(["train", "--synthetic", SYN, "--epochs", "2", *SMALL, "--out", str(out)]) == 0
    return out


def test_train_outputs(trained):
    assert (trained / "checkpoint.zip").exists()
    records = [json.loads(line) for line in (trained / "metrics.jsonl").read_text().splitlines()]
    assert records and {"iteration", "critic", "kl", "recon", "cycle"} <= set(records[0])
    echo = json.loads((trained / "config.json").read_text())
    assert echo["model.epochs"] == 2 and echo["data.synthetic"] == SYN


def test_train_is_reproducible(tmp_path, trained):
    again = tmp_path / "again"
    assert main(["train", "--synthetic", SYN, "--epochs", "2", *SMALL, "--out", str(again)]) == 0
    assert (again / "checkpoint.zip").read_bytes() == (trained / "checkpoint.zip").read_bytes()
    assert (again / "metrics.jsonl").read_text() == (trained / "metrics.jsonl").read_text()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"data.synthetic": SYN, "model.epochs": 3, "model.hidden": 8, "n_critic": 1,
                               "output.dir": str(tmp_path / "o")}))
    assert main(["train", "--config", str(cfg), "--epochs", "1"]) == 0
    echo = json.loads((tmp_path / "o" / "config.json").read_text())
    assert echo["model.epochs"] == 1 and echo["model.n_critic"] == 1


def test_two_stage_log_has_two_phases(tmp_path):
    out = tmp_path / "ts"
    assert main(["train", "--synthetic", SYN, "--epochs", "1", "--strategy", "two_stage", *SMALL,
                 "--out", str(out)]) == 0
    phases = {json.loads(line)["phase"] for line in (out / "metrics.jsonl").read_text().splitlines()}
    assert phases == {"pretrain", "feedback"}


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("TFVAEGAN_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["train", "--synthetic", SYN, "--epochs", "0", *SMALL]) == 0
    assert (tmp_path / "root" / "train" / "checkpoint.zip").exists()


def test_eval_reports(tmp_path, trained):
    widths = {}
    for variant in ("orig", "concat_latent"):
        out = tmp_path / variant
        assert main(["eval", "--synthetic", SYN, "--checkpoint", str(trained / "checkpoint.zip"),
                     "--classifier-input", variant, "--syn-num", "6", "--cls-epochs", "2", "--out", str(out),
                     "--format", "csv"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert {"zsl_t1", "u", "s", "H"} <= set(report)
        assert report["H"] == pytest.approx(harmonic_mean(report["u"], report["s"]))
        assert (out / "zsl_per_class.csv").exists()
        widths[variant] = report["feature_width"]
    assert widths == {"orig": 8, "concat_latent": 16}


def test_eval_dimension_mismatch(tmp_path, trained):
    code = main(["eval", "--synthetic", SYN.replace("d_x=8", "d_x=10"), "--checkpoint",
                 str(trained / "checkpoint.zip"), "--out", str(tmp_path / "e")])
    assert code == 3


def test_export_embeddings(tmp_path, trained):
    out = tmp_path / "emb"
    assert main(["export-embeddings", "--synthetic", SYN, "--checkpoint", str(trained / "checkpoint.zip"),
                 "--syn-num", "5", "--out", str(out)]) == 0
    bundle = load_native_bundle(out)
    from tfvaegan.data import read_array_bundle

    source = read_array_bundle(out)[0]["source"]
    n_test = bundle.test_seen.size + bundle.test_unseen.size
    assert set(np.unique(source).tolist()) == {0, 1}
    assert (source == 0).sum() == n_test and (source == 1).sum() == 2 * 5
    assert bundle.features.shape == (n_test + 10, 16)


def test_ablate_grid(tmp_path):
    out = tmp_path / "ab"
    assert main(["ablate", "--synthetic", SYN, "--epochs", "1", *SMALL, "--appendix", "feedback",
                 "--out", str(out)]) == 0
    report = json.loads((out / "ablation.json").read_text())
    main_table = report["grids"]["main"]["table"]
    assert list(main_table) == ["ZSL", "GZSL"]
    assert list(main_table["ZSL"]) == ["Baseline", "Feedback", "T-feature", "TF-VAEGAN"]
    assert list(report["grids"]["feedback"]["table"]["GZSL"]) == ["TwoStage+D", "TwoStage+Dec", "Alternating"]
    rows = (out / "ablation_main.csv").read_text().splitlines()
    assert rows[0] == "task,Baseline,Feedback,T-feature,TF-VAEGAN" and len(rows) == 3


def test_make_synth_and_validate(tmp_path, capsys):
    out = tmp_path / "syn"
    assert main(["make-synth", "--synthetic", SYN, "--out", str(out)]) == 0
    assert main(["validate-data", "--native", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["seen"] == 4 and summary["test_unseen"] == 24


class TestExitCodes:
    def test_missing_source(self):
        assert main(["train", "--epochs", "1"]) == 2

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 2

    def test_bad_field_value(self):
        assert main(["train", "--synthetic", SYN, "--n-critic", "0"]) == 2

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"data.synthetic": SYN, "model.learning_rate": 1}))
        assert main(["train", "--config", str(cfg)]) == 2

    def test_bad_bundle(self, tmp_path):
        assert main(["validate-data", "--native", str(tmp_path)]) == 3

    def test_nan_abort(self, tmp_path):
        assert main(["train", "--synthetic", SYN, "--epochs", "1", *SMALL, "--lr", "1e30",
                     "--out", str(tmp_path / "n")]) == 4


def test_synthetic_spec_parsing():
    assert parse_synthetic_recipe("seed=3, noise_sigma=0.5") == {"seed": 3, "noise_sigma": 0.5}
    assert parse_synthetic_recipe("") == {}
