"""End-to-end runs of the command-line pipeline on a small cohort."""

import csv
import json

import pytest

from kt_career.cli import main

CONFIG_TEXT = """
seed = 11
cohort.n_students = 40
cohort.n_skills = 4
cohort.min_length = 8
cohort.max_length = 15
cohort.stem_fraction = 0.3
cohort.ability_gap = 0.25
cohort.gap_skills = 0,1

kt.variant = both
kt.hidden_size = 8
kt.max_epochs = 3
kt.batch_size = 16
kt.optimizer = adam
kt.dropout = 0.2
kt.val_fraction = 0.25
kt.max_segment_len = 50

eval.folds = 3
eval.grid.gbdt.n_estimators = 5
eval.grid.gbdt.max_depth = 2
eval.grid.lda.solver = svd
eval.grid.lr.c = 1.0
eval.grid.svm.c = 1.0

analysis.nlg_window = 3
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    config = root / "run.cfg"
    config.write_text(CONFIG_TEXT, encoding="utf-8")
    out = root / "out"
    for command in ("generate", "train-kt", "extract"):
        code = main([command, "--config", str(config), "--out", str(out)])
        assert code == 0, command
    return config, out


def run(config, out, command):
    return main([command, "--config", str(config), "--out", str(out)])


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


class TestUpstreamStages:
    def test_generate_artifacts(self, workspace):
        _, out = workspace
        for name in (
            "clickstream.csv",
            "profiles.csv",
            "vocabulary.txt",
            "ground_truth.csv",
            "manifest_generate.json",
        ):
            assert (out / name).exists(), name
        vocabulary = (out / "vocabulary.txt").read_text().split()
        assert len(vocabulary) == 4

    def test_train_kt_artifacts(self, workspace):
        _, out = workspace
        for name in (
            "dkt.ckpt",
            "dktplus.ckpt",
            "dkt_training_log.csv",
            "dktplus_training_log.csv",
        ):
            assert (out / name).exists(), name
        log = read_rows(out / "dkt_training_log.csv")
        assert len(log) == 3
        manifest = json.loads((out / "manifest_train-kt.json").read_text())
        assert manifest["seed"] == 11
        assert "dkt.ckpt" in manifest["artifacts"]

    def test_extract_widths(self, workspace):
        _, out = workspace
        expectations = {
            "features_sp.csv": 10,
            "features_kt_dkt.csv": 4,
            "features_kt_dktplus.csv": 4,
            "features_kt_sp_dkt.csv": 14,
            "features_kt_sp_dktplus.csv": 14,
        }
        for name, width in expectations.items():
            rows = read_rows(out / name)
            assert len(rows) == 40, name
            # columns: student_id + features + label
            assert len(rows[0]) == width + 2, name

    def test_checkpoint_rerun_is_byte_identical(self, workspace):
        config, out = workspace
        before = (out / "dktplus.ckpt").read_bytes()
        assert run(config, out, "train-kt") == 0
        assert (out / "dktplus.ckpt").read_bytes() == before

    def test_extract_rerun_is_byte_identical(self, workspace):
        config, out = workspace
        name = "features_kt_sp_dktplus.csv"
        before = (out / name).read_bytes()
        assert run(config, out, "extract") == 0
        assert (out / name).read_bytes() == before


class TestEvaluate:
    def test_twenty_rows_and_rerun_determinism(self, workspace):
        config, out = workspace
        assert run(config, out, "evaluate") == 0
        report = out / "eval_report.csv"
        rows = read_rows(report)
        assert len(rows) == 20
        pairs = {(r["feature_set"], r["family"]) for r in rows}
        assert len(pairs) == 20
        families = {r["family"] for r in rows}
        assert families == {"gbdt", "lda", "lr", "svm"}
        sets = {r["feature_set"] for r in rows}
        assert sets == {
            "sp",
            "kt_dkt",
            "kt_dktplus",
            "kt_sp_dkt",
            "kt_sp_dktplus",
        }
        for row in rows:
            auc = float(row["test_auc_mean"])
            rmse = float(row["test_rmse_mean"])
            combined = float(row["test_combined_mean"])
            assert 0.0 <= auc <= 1.0
            assert 0.0 <= rmse <= 1.0
            assert combined == pytest.approx(auc + (1.0 - rmse), abs=1e-9)
            assert row["best_spec"]
        before = report.read_bytes()
        assert run(config, out, "evaluate") == 0
        assert report.read_bytes() == before

    def test_rfe_and_nested_paths(self, workspace, capsys):
        config, out = workspace
        extended = config.parent / "extended.cfg"
        extended.write_text(
            CONFIG_TEXT
            + "eval.families = lda, lr\n"
            + "eval.nested = true\n"
            + "rfe.enabled = true\n"
            + "rfe.sizes = 4,all\n",
            encoding="utf-8",
        )
        assert main(["evaluate", "--config", str(extended), "--out", str(out)]) == 0
        # the extended config hashes differently from the manifests the
        # upstream commands wrote, so a staleness warning is expected
        assert "stale" in capsys.readouterr().err
        rows = read_rows(out / "eval_report.csv")
        assert len(rows) == 10
        for row in rows:
            assert row["nested_auc"] != ""
            assert 0.0 <= float(row["nested_combined"]) <= 2.0
            assert row["selected_features"] != ""
        rfe_rows = read_rows(out / "rfe_report.csv")
        assert len(rfe_rows) == 10
        for row in rfe_rows:
            assert int(row["best_size"]) >= 1
            assert row["selected_features"]
        # restore the plain report for the tests that rerun evaluate
        assert run(config, out, "evaluate") == 0

    def test_manifest_records_grids_and_folds(self, workspace):
        config, out = workspace
        assert run(config, out, "evaluate") == 0
        manifest = json.loads((out / "manifest_evaluate.json").read_text())
        details = manifest["details"]
        assert details["folds"] == 3
        assert details["feature_sets"][0] == "sp"
        assert details["grids"]["lda"] == ["solver=svd"]
        assert len(details["grids"]["gbdt"]) == 1
        assert details["nested"] is False


class TestAnalyze:
    def test_outputs_and_rerun_determinism(self, workspace):
        config, out = workspace
        assert run(config, out, "analyze") == 0
        profile = read_rows(out / "profile_ttests.csv")
        assert len(profile) == 10
        assert profile[0]["attribute"] == "NumActions"
        for variant in ("dkt", "dktplus"):
            skills = read_rows(out / f"skill_ttests_{variant}.csv")
            assert len(skills) == 4
            assert skills[0]["skill"].startswith("skill_")
        overlap = read_rows(out / "lda_overlap.csv")
        assert [r["feature_set"] for r in overlap] == [
            "sp",
            "kt_dkt",
            "kt_dktplus",
            "kt_sp_dkt",
            "kt_sp_dktplus",
        ]
        for row in overlap:
            assert 0.0 <= float(row["overlap"]) <= 1.0
        projection = read_rows(out / "lda_projection_sp.csv")
        assert len(projection) == 30
        summary = read_rows(out / "nlg_summary.csv")
        assert len(summary) == 1
        assert summary[0]["variant"] == "dktplus"
        assert int(summary[0]["n_stem"]) == 12
        assert int(summary[0]["n_nonstem"]) == 28
        assert int(summary[0]["n_skipped"]) == 0
        assert 0.0 <= float(summary[0]["p_one_tailed_pooled"]) <= 1.0
        per_student = read_rows(out / "nlg_per_student.csv")
        assert len(per_student) == 40

        before = (out / "nlg_summary.csv").read_bytes()
        assert run(config, out, "analyze") == 0
        assert (out / "nlg_summary.csv").read_bytes() == before


class TestTrainPredictor:
    def test_model_file_written(self, workspace):
        config, out = workspace
        assert run(config, out, "train-predictor") == 0
        model_path = out / "models" / "gbdt_sp.json"
        assert model_path.exists()
        document = json.loads(model_path.read_text())
        assert document["family"] == "gbdt"
        assert len(document["feature_names"]) == 10
        manifest = json.loads(
            (out / "manifest_train-predictor.json").read_text()
        )
        assert manifest["details"]["standardized"] is False


class TestFailureModes:
    def test_missing_upstream_is_exit_3(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text(CONFIG_TEXT, encoding="utf-8")
        fresh = tmp_path / "fresh"
        assert run(config, fresh, "train-kt") == 3
        err = capsys.readouterr().err
        assert "clickstream.csv" in err
        assert "generate" in err
        assert run(config, fresh, "evaluate") == 3
        assert run(config, fresh, "analyze") == 3

    def test_extract_without_checkpoints_is_exit_3(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text(CONFIG_TEXT, encoding="utf-8")
        fresh = tmp_path / "fresh"
        assert run(config, fresh, "generate") == 0
        assert run(config, fresh, "extract") == 3
        assert "train-kt" in capsys.readouterr().err

    def test_bad_config_is_exit_1(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("seed = 1\nmystery.key = 2\n", encoding="utf-8")
        assert run(config, tmp_path / "o", "generate") == 1
        assert "mystery.key" in capsys.readouterr().err

    def test_missing_config_file_is_exit_1(self, tmp_path):
        assert (
            main(
                [
                    "generate",
                    "--config",
                    str(tmp_path / "nope.cfg"),
                ]
            )
            == 1
        )

    def test_unknown_command_is_exit_1(self, tmp_path, capsys):
        assert main(["transmogrify", "--config", "x"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_seed_is_exit_1(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("cohort.n_students = 5\n", encoding="utf-8")
        assert run(config, tmp_path / "o", "generate") == 1
        assert "seed is mandatory" in capsys.readouterr().err

    def test_seed_override_changes_data_and_warns_downstream(
        self, tmp_path, capsys
    ):
        config = tmp_path / "run.cfg"
        config.write_text(CONFIG_TEXT, encoding="utf-8")
        out = tmp_path / "o"
        assert run(config, out, "generate") == 0
        first = (out / "clickstream.csv").read_bytes()
        assert (
            main(
                [
                    "generate",
                    "--config",
                    str(config),
                    "--out",
                    str(out),
                    "--seed",
                    "99",
                ]
            )
            == 0
        )
        assert (out / "clickstream.csv").read_bytes() != first
        manifest = json.loads((out / "manifest_generate.json").read_text())
        assert manifest["seed"] == 99
        capsys.readouterr()
        # train-kt under the original seed sees the seed-99 manifest
        assert run(config, out, "train-kt") == 0
        assert "stale" in capsys.readouterr().err
