import json
from pathlib import Path

from hrvadapt.cli import main
from hrvadapt.metrics import MetricsReport, ReportRow
from hrvadapt.report import (
    emit_report,
    ordered_rows,
    report_from_csv,
    report_from_json,
    report_to_csv,
    report_to_json,
)

TOY_CONFIG = """
seed = 5
out_dir = "{out}"

[data]
mode = "toy"

[data.toy_source]
n_subjects = 4
epochs_per_subject = 30

[data.toy_paired]
n_subjects = 6
epochs_per_subject = 30

[train]
teacher_epochs = 6
epochs = 3
batch_size = 8
lr = 0.003

[[variants]]
name = "teacher_student_domain_adaptation"
use_cnn = false

[[variants]]
name = "naive_transfer"
"""


def write_config(tmp_path: Path, text=TOY_CONFIG, name="exp.toml") -> Path:
    out = tmp_path / "out"
    cfg = tmp_path / name
    cfg.write_text(text.format(out=out))
    return cfg


def rows_dict(path: Path):
    return {r.variant: r for r in report_from_csv(path.read_text()).rows}


class TestRunVerb:
    def test_toy_run_produces_report_and_exit_zero(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["run", "--config", str(cfg)]) == 0
        out = tmp_path / "out"
        assert (out / "metrics.csv").exists()
        assert (out / "metrics.json").exists()
        assert (out / "metrics.png").exists()
        rows = rows_dict(out / "metrics.csv")
        assert set(rows) == {"teacher_student_domain_adaptation", "naive_transfer"}
        for r in rows.values():
            assert 0.0 <= r.roc_auc <= 1.0
            assert 0.0 <= r.pr_auc <= 1.0
            assert r.config_digest

    def test_same_config_and_seed_byte_identical_reports(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["run", "--config", str(cfg)])
        first_csv = (tmp_path / "out" / "metrics.csv").read_bytes()
        first_json = (tmp_path / "out" / "metrics.json").read_bytes()
        main(["run", "--config", str(cfg)])
        assert (tmp_path / "out" / "metrics.csv").read_bytes() == first_csv
        assert (tmp_path / "out" / "metrics.json").read_bytes() == first_json

    def test_unknown_variant_nonzero_exit_names_it(self, tmp_path, capsys):
        bad = TOY_CONFIG.replace('name = "naive_transfer"', 'name = "frobnicate"')
        cfg = write_config(tmp_path, bad)
        code = main(["run", "--config", str(cfg)])
        assert code != 0
        assert "frobnicate" in capsys.readouterr().err


class TestPipelineVerbs:
    def test_toy_shift_pretrain_evaluate_chain(self, tmp_path, capsys):
        records = tmp_path / "records"
        cfg = write_config(tmp_path)
        assert main(["toy", "--config", str(cfg), "--out", str(records)]) == 0
        files = sorted(records.glob("*.json"))
        assert len(files) == 6
        doc = json.loads(files[0].read_text())
        assert doc["source"]["peaks_s"]
        assert doc["target"] is None

        shifted = tmp_path / "shifted"
        assert main(["shift", "--config", str(cfg), "--records", str(records), "--out", str(shifted)]) == 0
        doc = json.loads(sorted(shifted.glob("*.json"))[0].read_text())
        assert doc["target"]["peaks_s"]

        model = tmp_path / "teacher.tsda"
        assert main(["pretrain", "--config", str(cfg), "--model", str(model)]) == 0
        assert model.exists()

        assert main([
            "evaluate", "--config", str(cfg), "--model", str(model),
            "--domain", "source", "--variant", "teacher_on_source",
        ]) == 0
        assert "teacher_on_source" in capsys.readouterr().out

    def test_adapt_saves_student(self, tmp_path):
        cfg = write_config(tmp_path)
        teacher = tmp_path / "teacher.tsda"
        main(["pretrain", "--config", str(cfg), "--model", str(teacher)])
        student = tmp_path / "student.tsda"
        code = main([
            "adapt", "--config", str(cfg), "--teacher", str(teacher),
            "--model", str(student), "--variant", "teacher_student_domain_adaptation",
        ])
        assert code == 0
        from hrvadapt.artifacts import load_model
        from hrvadapt.nn.models import StudentModel

        assert isinstance(load_model(student), StudentModel)

    def test_report_verb_re_emits(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["run", "--config", str(cfg)])
        redone = tmp_path / "redone"
        code = main([
            "report", "--input", str(tmp_path / "out" / "metrics.json"), "--out", str(redone),
        ])
        assert code == 0
        assert (redone / "metrics.csv").read_text() == (tmp_path / "out" / "metrics.csv").read_text()
        assert (redone / "metrics.png").exists()


def sample_report():
    return MetricsReport(
        [
            ReportRow("naive_transfer", 0.75, 0.34, 60, 540, 3e-5, 7, "abc123"),
            ReportRow("teacher_on_source", 0.83, 0.47, 60, 540, 2e-5, 7, "def456"),
            ReportRow("label_supervised_target_only", 0.61, 0.16, 60, 540, 4e-5, 7, "0a0a0a"),
            ReportRow("custom_row", 0.5, 0.5, 1, 1, 0.25, 7, "ffffff"),
        ]
    )


class TestReportFormats:
    def test_rows_follow_presentation_order(self):
        ordered = [r.variant for r in ordered_rows(sample_report())]
        assert ordered == [
            "label_supervised_target_only",
            "naive_transfer",
            "teacher_on_source",
            "custom_row",
        ]

    def test_csv_round_trip_exact(self):
        report = sample_report()
        back = report_from_csv(report_to_csv(report))
        assert [r.__dict__ for r in back.rows] == [r.__dict__ for r in ordered_rows(report)]

    def test_json_round_trip_exact(self):
        report = sample_report()
        back = report_from_json(report_to_json(report))
        assert [r.__dict__ for r in back.rows] == [r.__dict__ for r in ordered_rows(report)]

    def test_float_round_trip_preserves_bits(self):
        value = 0.1 + 0.2 + 1e-17
        report = MetricsReport([ReportRow("naive_transfer", value, value, 1, 1, value, 0, "x")])
        back = report_from_csv(report_to_csv(report))
        assert back.rows[0].roc_auc == value

    def test_emit_report_writes_requested_formats(self, tmp_path):
        paths = emit_report(sample_report(), tmp_path, formats=("csv", "json"))
        assert set(paths) == {"csv", "json"}
        assert paths["csv"].exists()
