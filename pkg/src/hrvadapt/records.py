"""Subject records: one JSON document per subject holding raw waveforms
and/or detected peaks for each sensor domain, plus the label stream.

Peaks are the canonical representation; ``ingest_subject`` fills them from
the waveform when absent (R-wave detection for the source domain, multiscale
pulse peaks for the target domain).
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .features import LabelStream
from .signals import (
    IntervalSeries,
    PeakSeries,
    Waveform,
    detect_peaks_ampd,
    detect_qrs,
    peaks_to_intervals,
)

log = logging.getLogger("hrvadapt")


@dataclass
class DomainData:
    waveform: Waveform | None = None
    peaks: PeakSeries | None = None

    def __post_init__(self):
        if self.waveform is None and self.peaks is None:
            raise ValidationError("a sensor domain needs a waveform or peaks")

    def intervals(self) -> IntervalSeries:
        if self.peaks is None:
            raise ValidationError("peaks not yet detected for this domain")
        return peaks_to_intervals(self.peaks)


@dataclass
class SubjectRecord:
    subject_id: str
    source: DomainData
    target: DomainData | None = None
    labels: LabelStream | None = None


def _parse_domain(obj, where: str) -> DomainData | None:
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise ParseError(f"{where} must be an object")
    rate = obj.get("sample_rate_hz")
    wave = obj.get("waveform")
    peaks = obj.get("peaks_s")
    waveform = None
    if wave is not None:
        if rate is None:
            raise ParseError(f"{where} has a waveform but no sample_rate_hz")
        try:
            waveform = Waveform(np.asarray(wave, dtype=np.float64), float(rate))
        except ValidationError as e:
            raise ValidationError(f"{where}: {e}") from e
    peak_series = None
    if peaks is not None:
        try:
            peak_series = PeakSeries(np.asarray(peaks, dtype=np.float64))
        except ValidationError as e:
            raise ValidationError(f"{where}: {e}") from e
    if waveform is None and peak_series is None:
        raise ParseError(f"{where} needs a waveform or peaks_s")
    return DomainData(waveform, peak_series)


def parse_subject(text: str, origin: str = "<memory>") -> SubjectRecord:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{origin}: invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ParseError(f"{origin}: top level must be an object")
    subject_id = doc.get("subject_id")
    if not isinstance(subject_id, str) or not subject_id:
        raise ParseError(f"{origin}: missing or empty subject_id")
    if "source" not in doc or doc["source"] is None:
        raise ParseError(f"{origin}: missing source domain")
    source = _parse_domain(doc["source"], f"{origin}: source")
    target = _parse_domain(doc.get("target"), f"{origin}: target")
    labels = None
    if doc.get("labels") is not None:
        segs = []
        for i, seg in enumerate(doc["labels"]):
            try:
                segs.append((float(seg["start_s"]), float(seg["end_s"]), int(seg["label"])))
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(f"{origin}: labels[{i}] malformed: {e}") from e
        labels = LabelStream.from_segments(segs)
    return SubjectRecord(subject_id, source, target, labels)


def _domain_doc(d: DomainData | None):
    if d is None:
        return None
    return {
        "sample_rate_hz": d.waveform.sample_rate_hz if d.waveform is not None else None,
        "waveform": d.waveform.samples.tolist() if d.waveform is not None else None,
        "peaks_s": d.peaks.times_s.tolist() if d.peaks is not None else None,
    }


def serialize_subject(rec: SubjectRecord) -> str:
    """Canonical JSON form: sorted keys, minimal separators, shortest
    round-trip float text; parse -> serialize is byte-stable."""
    labels = None
    if rec.labels is not None:
        labels = [
            {"start_s": float(s), "end_s": float(e), "label": int(l)}
            for s, e, l in zip(rec.labels.starts_s, rec.labels.ends_s, rec.labels.labels)
        ]
    doc = {
        "subject_id": rec.subject_id,
        "source": _domain_doc(rec.source),
        "target": _domain_doc(rec.target),
        "labels": labels,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def detect_missing_peaks(rec: SubjectRecord) -> SubjectRecord:
    """Fill in peaks from waveforms where absent: the source domain is treated
    as ECG-like (R-wave detector), the target domain as pulse-wave-like
    (multiscale detector)."""
    if rec.source.peaks is None:
        rec.source.peaks = detect_qrs(rec.source.waveform)
        log.info("%s: source peaks detected: %d", rec.subject_id, len(rec.source.peaks))
    if rec.target is not None and rec.target.peaks is None:
        rec.target.peaks = detect_peaks_ampd(rec.target.waveform)
        log.info("%s: target peaks detected: %d", rec.subject_id, len(rec.target.peaks))
    return rec


def ingest_subject(path: str | Path) -> SubjectRecord:
    """Parse and validate one subject record file, detecting peaks from the
    raw waveform for any domain that lacks them."""
    path = Path(path)
    rec = parse_subject(path.read_text(), origin=str(path))
    return detect_missing_peaks(rec)


def write_subject(rec: SubjectRecord, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(serialize_subject(rec))
    os.replace(tmp, path)


def load_record_dir(directory: str | Path) -> list[SubjectRecord]:
    directory = Path(directory)
    files = sorted(directory.glob("*.json"))
    if not files:
        raise ParseError(f"no subject records (*.json) found in {directory}")
    return [ingest_subject(f) for f in files]
