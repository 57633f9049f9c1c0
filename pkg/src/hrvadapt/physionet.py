"""Minimal adapter for PhysioNet-style WFDB record layouts.

Reads the plain-text ``.hea`` header and a format-16 (little-endian int16)
``.dat`` signal file, selects one channel, and wraps it as a subject record.
Labels come from an optional ``<record>.labels.csv`` sidecar with columns
start_s, end_s, label.  This covers desk-scale experimentation; bulk
ingestion of full sleep-study archives is out of scope.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError
from .features import LabelStream
from .records import DomainData, SubjectRecord
from .signals import Waveform


@dataclass
class WfdbChannel:
    name: str
    file_name: str
    fmt: int
    gain: float
    baseline: int
    units: str


@dataclass
class WfdbHeader:
    record: str
    n_channels: int
    sample_rate_hz: float
    n_samples: int
    channels: list[WfdbChannel]


def parse_header(path: str | Path) -> WfdbHeader:
    path = Path(path)
    lines = [
        ln.strip()
        for ln in path.read_text().splitlines()
        if ln.strip() and not ln.startswith("#")
    ]
    if not lines:
        raise ParseError(f"{path}: empty header")
    head = lines[0].split()
    if len(head) < 4:
        raise ParseError(f"{path}: header line needs 'name nsig fs nsamples'")
    record, n_channels = head[0], int(head[1])
    sample_rate = float(head[2].split("/")[0])
    n_samples = int(head[3])
    channels: list[WfdbChannel] = []
    for ln in lines[1 : 1 + n_channels]:
        parts = ln.split()
        if len(parts) < 3:
            raise ParseError(f"{path}: malformed channel line {ln!r}")
        fmt = int(parts[1].split("x")[0].split(":")[0].split("+")[0])
        gain_field = parts[2]
        units = "mV"
        if "/" in gain_field:
            gain_field, units = gain_field.split("/", 1)
        baseline = 0
        if "(" in gain_field:
            gain_field, rest = gain_field.split("(", 1)
            baseline = int(rest.rstrip(")"))
        gain = float(gain_field) if float(gain_field) != 0 else 200.0
        name = parts[-1] if len(parts) > 4 else f"ch{len(channels)}"
        channels.append(WfdbChannel(name, parts[0], fmt, gain, baseline, units))
    return WfdbHeader(record, n_channels, sample_rate, n_samples, channels)


def read_signal(header: WfdbHeader, directory: str | Path, channel: int) -> Waveform:
    if not 0 <= channel < header.n_channels:
        raise ParseError(f"channel {channel} out of range (record has {header.n_channels})")
    ch = header.channels[channel]
    if ch.fmt != 16:
        raise ParseError(f"unsupported WFDB signal format {ch.fmt}; only format 16 is read")
    raw = np.fromfile(Path(directory) / ch.file_name, dtype="<i2")
    expected = header.n_samples * header.n_channels
    if raw.size < expected:
        raise ParseError(
            f"{ch.file_name}: {raw.size} samples on disk, header promises {expected}"
        )
    digital = raw[:expected].reshape(header.n_samples, header.n_channels)[:, channel]
    physical = (digital.astype(np.float64) - ch.baseline) / ch.gain
    return Waveform(physical, header.sample_rate_hz)


def read_labels_csv(path: str | Path) -> LabelStream:
    segments = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"start_s", "end_s", "label"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ParseError(f"{path}: label CSV needs columns start_s, end_s, label")
        for row in reader:
            segments.append((float(row["start_s"]), float(row["end_s"]), int(row["label"])))
    return LabelStream.from_segments(segments)


def load_wfdb_subject(
    record_path: str | Path, channel: int = 0, channel_name: str | None = None
) -> SubjectRecord:
    """Read ``<record>.hea``/``<record>.dat`` (+ optional ``<record>.labels.csv``)
    into a source-domain subject record; peaks are detected later by ingest."""
    record_path = Path(record_path)
    header = parse_header(record_path.with_suffix(".hea"))
    if channel_name is not None:
        matches = [i for i, ch in enumerate(header.channels) if channel_name.lower() in ch.name.lower()]
        if not matches:
            raise ParseError(
                f"no channel matching {channel_name!r}; have "
                f"{[ch.name for ch in header.channels]}"
            )
        channel = matches[0]
    waveform = read_signal(header, record_path.parent, channel)
    labels = None
    sidecar = record_path.with_suffix(".labels.csv")
    if sidecar.exists():
        labels = read_labels_csv(sidecar)
    return SubjectRecord(
        subject_id=header.record,
        source=DomainData(waveform=waveform),
        labels=labels,
    )
