"""Command-line interface.

Verbs: ``toy`` (generate a synthetic study), ``prepare`` (waveforms ->
peaks), ``shift`` (synthesize the corrupted target domain), ``pretrain``
(train the teacher), ``adapt`` (train a student against a saved teacher),
``evaluate`` (score a saved model), ``run`` (the full variant matrix), and
``report`` (re-emit tables and figures from saved metrics).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import load_model, save_model
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DataError, HrvAdaptError
from .experiment import assemble_study, run_experiment, train_teacher_for
from .metrics import MetricsReport, pooled_evaluate
from .records import (
    DomainData,
    SubjectRecord,
    detect_missing_peaks,
    load_record_dir,
    write_subject,
)
from .report import emit_report, report_from_csv, report_from_json, report_to_csv
from .shift import generate_toy_study, perturb_intervals
from .signals import intervals_to_peaks
from .training import train_student
from .variants import VariantSpec, derive_seed, predict_examples

log = logging.getLogger("hrvadapt")


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, train=replace(cfg.train, seed=args.seed))
    if args.out is not None:
        cfg = replace(cfg, out_dir=str(args.out))
    return cfg


def _cmd_toy(args) -> int:
    cfg = _load_cfg(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    subjects = generate_toy_study(cfg.data.toy_paired)
    for subject in subjects:
        rec = SubjectRecord(
            subject_id=subject.subject_id,
            source=DomainData(peaks=intervals_to_peaks(subject.intervals)),
            labels=subject.labels,
        )
        write_subject(rec, out / f"{subject.subject_id}.json")
    print(f"wrote {len(subjects)} toy subject records to {out}")
    return 0


def _cmd_prepare(args) -> int:
    cfg = _load_cfg(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = load_record_dir(args.records)
    for rec in records:
        detect_missing_peaks(rec)
        write_subject(rec, out / f"{rec.subject_id}.json")
    print(f"prepared {len(records)} records into {out}")
    return 0


def _cmd_shift(args) -> int:
    cfg = _load_cfg(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = load_record_dir(args.records)
    root = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(23,))
    for rec, seq in zip(records, root.spawn(len(records))):
        shifted = perturb_intervals(rec.source.intervals(), cfg.shift, np.random.default_rng(seq))
        rec.target = DomainData(peaks=intervals_to_peaks(shifted))
        write_subject(rec, out / f"{rec.subject_id}.json")
    print(f"shifted {len(records)} records into {out}")
    return 0


def _cmd_pretrain(args) -> int:
    cfg = _load_cfg(args)
    study = assemble_study(cfg)
    teacher = train_teacher_for(cfg, study)
    out = Path(args.model or Path(cfg.out_dir) / "teacher.tsda")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(teacher, out)
    print(f"teacher saved to {out} (platt a={teacher.platt_a:.4f} b={teacher.platt_b:.4f})")
    return 0


def _cmd_adapt(args) -> int:
    cfg = _load_cfg(args)
    spec = VariantSpec(args.variant)
    if spec.recipe.kind not in ("student_da", "full_finetune", "fresh_distill"):
        raise ConfigError(f"variant {args.variant!r} does not train a student")
    teacher = load_model(args.teacher)
    study = assemble_study(cfg)
    examples = [ex for exs in study.paired.values() for ex in exs]
    base = replace(cfg.train, seed=derive_seed(cfg.seed, 3))
    train_cfg = spec.train_config(base, base.seed)
    from .training import clone_student

    has_raw = all(ex.xBraw is not None for ex in examples)
    student = clone_student(
        teacher, use_cnn=spec.resolved_use_cnn(has_raw), dims=cfg.dims, seed=base.seed
    )
    student, curve = train_student(student, teacher, examples, train_cfg, spec.loss_config())
    out = Path(args.model or Path(cfg.out_dir) / "student.tsda")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(student, out)
    final = curve[-1] if curve else float("nan")
    print(f"student saved to {out} (final training loss {final:.6f})")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    model = load_model(args.model)
    study = assemble_study(cfg)
    examples = [ex for exs in study.paired.values() for ex in exs]
    preds = predict_examples(model, examples, domain=args.domain)
    row = pooled_evaluate([preds], variant=args.variant, seed=cfg.seed)
    report = MetricsReport([row])
    print(report_to_csv(report), end="")
    if args.out:
        paths = emit_report(report, args.out)
        print(f"report written to {', '.join(str(p) for p in paths.values())}")
    return 0


def _cmd_run(args) -> int:
    cfg = _load_cfg(args)
    report, paths = run_experiment(cfg)
    print(report_to_csv(report), end="")
    print(f"report written to {', '.join(str(p) for p in paths.values())}")
    return 0


def _cmd_report(args) -> int:
    cfg = _load_cfg(args)
    text = Path(args.input).read_text()
    if args.input.endswith(".csv"):
        report = report_from_csv(text)
    else:
        report = report_from_json(text)
    if not report.rows:
        raise DataError(f"{args.input} holds no report rows")
    paths = emit_report(report, cfg.out_dir)
    print(f"report written to {', '.join(str(p) for p in paths.values())}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (TOML)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="override the output directory")

    parser = argparse.ArgumentParser(
        prog="hrvadapt",
        description="Teacher-student domain adaptation for biosensor HRV time series.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy", parents=[common], help="generate a synthetic toy study")
    p.set_defaults(fn=_cmd_toy)

    p = sub.add_parser("prepare", parents=[common], help="detect peaks for raw-waveform records")
    p.add_argument("--records", required=True, help="directory of subject records")
    p.set_defaults(fn=_cmd_prepare)

    p = sub.add_parser("shift", parents=[common], help="synthesize the corrupted target domain")
    p.add_argument("--records", required=True, help="directory of subject records")
    p.set_defaults(fn=_cmd_shift)

    p = sub.add_parser("pretrain", parents=[common], help="pre-train and calibrate the teacher")
    p.add_argument("--model", default=None, help="output artifact path")
    p.set_defaults(fn=_cmd_pretrain)

    p = sub.add_parser("adapt", parents=[common], help="train a student against a saved teacher")
    p.add_argument("--teacher", required=True, help="teacher artifact path")
    p.add_argument("--variant", default="teacher_student_domain_adaptation")
    p.add_argument("--model", default=None, help="output artifact path")
    p.set_defaults(fn=_cmd_adapt)

    p = sub.add_parser("evaluate", parents=[common], help="score a saved model on a study")
    p.add_argument("--model", required=True, help="model artifact path")
    p.add_argument("--domain", choices=("source", "target"), default="target")
    p.add_argument("--variant", default="evaluate", help="row name for the report")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("run", parents=[common], help="run the full experiment matrix")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("report", parents=[common], help="re-emit tables and figures")
    p.add_argument("--input", required=True, help="metrics.json or metrics.csv")
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except HrvAdaptError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
