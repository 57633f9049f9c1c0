"""End-to-end experiment orchestration: data assembly, teacher preparation,
the variant loop under leave-one-subject-out folds, and report emission."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import DataError
from .features import PairedExample, build_subject_example, build_window_grid, chunk_example
from .metrics import MetricsReport, loso_folds, pooled_evaluate
from .nn.models import TeacherModel
from .records import SubjectRecord, load_record_dir
from .report import emit_report
from .shift import generate_toy_study, perturb_intervals
from .signals import IntervalSeries
from .variants import derive_seed, prepare_teacher, run_variant

log = logging.getLogger("hrvadapt")


@dataclass
class StudyData:
    """Chunked examples per subject: a source-only study for teacher
    pre-training and a paired study for the fold loop."""

    source: dict[str, list[PairedExample]]
    paired: dict[str, list[PairedExample]]


def _variant_entropy(name: str) -> int:
    import hashlib

    return int(hashlib.sha256(name.encode()).hexdigest()[:8], 16)


def _subject_examples(
    cfg: ExperimentConfig,
    subject_id: str,
    source_iv: IntervalSeries,
    target_iv: IntervalSeries | None,
    labels,
    target_waveform=None,
) -> list[PairedExample]:
    f = cfg.features
    if labels is not None and len(labels.ends_s):
        span_end = float(labels.ends_s[-1])
    elif len(source_iv):
        span_end = float(source_iv.end_times_s[-1])
    else:
        raise DataError(f"{subject_id}: no data to span a window grid")
    grid = build_window_grid(0.0, span_end, f.window_len_s, f.stride_s)
    ex = build_subject_example(
        subject_id,
        grid,
        source_iv,
        target_iv=target_iv,
        labels=labels,
        target_waveform=target_waveform,
        min_beats=f.min_beats,
        consensus=f.consensus,
    )
    kept = int(ex.mask.sum())
    labelled = int(ex.label_mask.sum())
    log.info(
        "%s: windows total=%d kept=%d masked=%d unlabelled-kept=%d",
        subject_id,
        grid.count,
        kept,
        grid.count - kept,
        kept - labelled,
    )
    return chunk_example(ex, f.chunk_len)


def _toy_paired_subjects(cfg: ExperimentConfig) -> dict[str, list[PairedExample]]:
    out: dict[str, list[PairedExample]] = {}
    shift_root = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(41,))
    subjects = generate_toy_study(cfg.data.toy_paired)
    for subject, seq in zip(subjects, shift_root.spawn(len(subjects))):
        rng = np.random.default_rng(seq)
        target = perturb_intervals(subject.intervals, cfg.shift, rng)
        out[subject.subject_id] = _subject_examples(
            cfg, subject.subject_id, subject.intervals, target, subject.labels
        )
    return out


def _toy_source_subjects(cfg: ExperimentConfig) -> dict[str, list[PairedExample]]:
    out: dict[str, list[PairedExample]] = {}
    for subject in generate_toy_study(cfg.data.toy_source):
        sid = f"src-{subject.subject_id}"
        out[sid] = _subject_examples(cfg, sid, subject.intervals, None, subject.labels)
    return out


def _record_examples(cfg: ExperimentConfig, rec: SubjectRecord, paired: bool) -> list[PairedExample]:
    source_iv = rec.source.intervals()
    target_iv = None
    target_waveform = None
    if paired:
        if rec.target is not None:
            target_iv = rec.target.intervals()
            target_waveform = rec.target.waveform
        else:
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=cfg.seed, spawn_key=(43, _variant_entropy(rec.subject_id)))
            )
            target_iv = perturb_intervals(source_iv, cfg.shift, rng)
    return _subject_examples(cfg, rec.subject_id, source_iv, target_iv, rec.labels, target_waveform)


def assemble_study(cfg: ExperimentConfig) -> StudyData:
    if cfg.data.mode == "toy":
        source = _toy_source_subjects(cfg)
        paired = _toy_paired_subjects(cfg)
    else:
        paired_records = load_record_dir(cfg.data.paired_dir)
        paired = {r.subject_id: _record_examples(cfg, r, paired=True) for r in paired_records}
        if cfg.data.source_dir:
            source_records = load_record_dir(cfg.data.source_dir)
            source = {r.subject_id: _record_examples(cfg, r, paired=False) for r in source_records}
        else:
            raise DataError("records mode needs data.source_dir for teacher pre-training")
    if not paired:
        raise DataError("no paired subjects")
    return StudyData(source=source, paired=paired)


def train_teacher_for(cfg: ExperimentConfig, study: StudyData) -> TeacherModel:
    teacher_cfg = replace(
        cfg.train, epochs=cfg.teacher_epochs, seed=derive_seed(cfg.seed, 1), loss_mode="bce_labels"
    )
    return prepare_teacher(study.source, teacher_cfg, cfg.dims, cfg.calib_fraction)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> tuple[MetricsReport, dict]:
    """Run every configured variant under LOSO folds, pool the predictions,
    and write the report files.  Fully reproducible from (config, seed)."""
    study = assemble_study(cfg)
    teacher = train_teacher_for(cfg, study)
    folds = loso_folds(list(study.paired))

    report = MetricsReport()
    for spec in cfg.variants:
        base = replace(cfg.train, seed=derive_seed(cfg.seed, 2, _variant_entropy(spec.name)))
        preds = run_variant(
            spec, teacher, study.paired, base, cfg.dims,
            folds=folds, holdout_fraction=cfg.holdout_fraction,
        )
        row = pooled_evaluate(
            preds,
            variant=spec.name,
            seed=cfg.seed,
            config_digest=spec.config_digest(base),
        )
        log.info(
            "%s: roc_auc=%.4f pr_auc=%.4f (n_pos=%d n_neg=%d)",
            spec.name, row.roc_auc, row.pr_auc, row.n_pos, row.n_neg,
        )
        report.rows.append(row)

    paths = emit_report(report, out_dir if out_dir is not None else cfg.out_dir)
    return report, paths
