"""Windowed HRV feature sequences, consensus window labels, and paired
source/target example assembly.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .signals import IntervalSeries, Waveform

#: order of the per-window feature vector produced by this module
FEATURE_NAMES = ("mean_nn_s", "sdnn_s", "rmssd_s", "pnn50_frac", "nn_count")
N_FEATURES = len(FEATURE_NAMES)

PNN50_THRESHOLD_S = 0.050


@dataclass(frozen=True)
class WindowGrid:
    start_s: float
    window_len_s: float
    stride_s: float
    count: int

    def __post_init__(self):
        if self.window_len_s <= 0 or self.stride_s <= 0:
            raise ValidationError("window_len_s and stride_s must be positive")
        if self.count < 0:
            raise ValidationError("count must be >= 0")

    def edges(self, k: int) -> tuple[float, float]:
        ws = self.start_s + k * self.stride_s
        return ws, ws + self.window_len_s


def build_window_grid(
    span_start_s: float, span_end_s: float, window_len_s: float, stride_s: float
) -> WindowGrid:
    """Maximal grid of windows lying entirely inside the span; an incomplete
    tail window is dropped."""
    if window_len_s <= 0 or stride_s <= 0:
        raise ValidationError("window_len_s and stride_s must be positive")
    if span_end_s <= span_start_s:
        raise ValidationError("span_end_s must exceed span_start_s")
    span = span_end_s - span_start_s
    if span < window_len_s:
        count = 0
    else:
        # tiny epsilon so exact tilings are not lost to float round-off
        count = int(np.floor((span - window_len_s) / stride_s + 1e-9)) + 1
    return WindowGrid(span_start_s, window_len_s, stride_s, count)


@dataclass(frozen=True)
class HrvVector:
    """Time-domain HRV summary of the beat intervals inside one window."""

    mean_nn_s: float
    sdnn_s: float
    rmssd_s: float
    pnn50_frac: float
    nn_count: int
    valid: bool

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.mean_nn_s, self.sdnn_s, self.rmssd_s, self.pnn50_frac, float(self.nn_count)]
        )


_EMPTY_HRV = HrvVector(0.0, 0.0, 0.0, 0.0, 0, False)


def extract_hrv_sequence(
    iv: IntervalSeries, g: WindowGrid, min_beats: int = 10
) -> list[HrvVector]:
    """One HrvVector per grid window, computed over the intervals whose end
    time falls inside the window.  Windows holding fewer than ``min_beats``
    intervals are flagged invalid (their numbers are still reported when
    defined, zeros otherwise).

    sdnn uses the sample (n-1) standard deviation; rmssd and pnn50 are taken
    over successive differences within the window only.
    """
    ends = iv.end_times_s
    vals = iv.intervals_s
    out: list[HrvVector] = []
    for k in range(g.count):
        ws, we = g.edges(k)
        lo = int(np.searchsorted(ends, ws, side="left"))
        hi = int(np.searchsorted(ends, we, side="left"))
        x = vals[lo:hi]
        m = x.size
        if m == 0:
            out.append(_EMPTY_HRV)
            continue
        mean_nn = float(np.mean(x))
        sdnn = float(np.std(x, ddof=1)) if m >= 2 else 0.0
        if m >= 2:
            d = np.diff(x)
            rmssd = float(np.sqrt(np.mean(d * d)))
            pnn50 = float(np.mean(np.abs(d) > PNN50_THRESHOLD_S))
        else:
            rmssd = 0.0
            pnn50 = 0.0
        out.append(HrvVector(mean_nn, sdnn, rmssd, pnn50, m, m >= min_beats))
    return out


def hrv_to_arrays(seq: list[HrvVector]) -> tuple[np.ndarray, np.ndarray]:
    """Stack a window sequence into (features [n, 5], valid [n])."""
    if not seq:
        return np.zeros((0, N_FEATURES)), np.zeros(0, dtype=bool)
    feats = np.stack([h.to_array() for h in seq])
    valid = np.array([h.valid for h in seq], dtype=bool)
    return feats, valid


@dataclass(frozen=True)
class LabelStream:
    """Non-overlapping, sorted labelled time segments."""

    starts_s: np.ndarray
    ends_s: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.starts_s, dtype=np.float64)
        e = np.asarray(self.ends_s, dtype=np.float64)
        l = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "starts_s", s)
        object.__setattr__(self, "ends_s", e)
        object.__setattr__(self, "labels", l)
        if not (s.shape == e.shape == l.shape) or s.ndim != 1:
            raise ValidationError("label stream arrays must be 1-D with equal length")
        if np.any(e <= s):
            raise ValidationError("label segments must have end > start")
        if s.size > 1 and np.any(s[1:] < e[:-1]):
            raise ValidationError("label segments must be sorted and non-overlapping")
        if not np.all(np.isin(l, (0, 1))):
            raise ValidationError("labels must be 0 or 1")

    @classmethod
    def from_segments(cls, segments) -> "LabelStream":
        if not segments:
            return cls(np.empty(0), np.empty(0), np.empty(0, dtype=np.int64))
        arr = np.asarray(segments, dtype=np.float64)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2].astype(np.int64))


def consensus_window_labels(
    ls: LabelStream, g: WindowGrid, consensus: float = 0.75
) -> list[int | None]:
    """Per window: the label covering at least ``consensus`` of the window's
    duration, or None when no label reaches consensus (window ignored)."""
    if not (0.5 < consensus <= 1.0):
        raise ValidationError(f"consensus must be in (0.5, 1], got {consensus}")
    out: list[int | None] = []
    for k in range(g.count):
        ws, we = g.edges(k)
        overlap = np.minimum(ls.ends_s, we) - np.maximum(ls.starts_s, ws)
        overlap = np.clip(overlap, 0.0, None)
        cover = np.array([overlap[ls.labels == 0].sum(), overlap[ls.labels == 1].sum()])
        best = int(np.argmax(cover))
        # epsilon guards exact-consensus cases against float round-off
        if cover[best] >= consensus * g.window_len_s - 1e-9:
            out.append(best)
        else:
            out.append(None)
    return out


@dataclass(frozen=True)
class PairedExample:
    """Aligned per-window sequences for one subject (or one chunk of one).

    xA holds source-domain HRV features, xB target-domain HRV features (absent
    for source-only data), xBraw fixed-length raw target slices when a target
    waveform exists.  ``labels`` uses NaN for windows without a consensus
    label; ``mask`` is 1 where the window is usable by training and
    evaluation, 0 elsewhere (invalid HRV windows and chunk padding).
    """

    subject_id: str
    xA: np.ndarray
    xB: np.ndarray | None
    xBraw: np.ndarray | None
    labels: np.ndarray
    mask: np.ndarray
    window_indices: np.ndarray

    def __post_init__(self):
        n = self.xA.shape[0]
        for name in ("xB", "xBraw"):
            arr = getattr(self, name)
            if arr is not None and arr.shape[0] != n:
                raise ValidationError(f"{name} length {arr.shape[0]} != {n}")
        if self.labels.shape != (n,) or self.mask.shape != (n,) or self.window_indices.shape != (n,):
            raise ValidationError("labels, mask and window_indices must have length n")

    @property
    def n_steps(self) -> int:
        return int(self.xA.shape[0])

    @property
    def label_mask(self) -> np.ndarray:
        """1 where the window is usable and carries a label."""
        return self.mask * np.isfinite(self.labels).astype(np.float64)


def build_subject_example(
    subject_id: str,
    grid: WindowGrid,
    source_iv: IntervalSeries,
    target_iv: IntervalSeries | None = None,
    labels: LabelStream | None = None,
    target_waveform: Waveform | None = None,
    min_beats: int = 10,
    consensus: float = 0.75,
) -> PairedExample:
    """Assemble the full-length paired example for one subject.

    A window is masked out when the source features are invalid or, if a
    target domain is present, when the target features are invalid.
    """
    xA, valid_a = hrv_to_arrays(extract_hrv_sequence(source_iv, grid, min_beats))
    mask = valid_a.copy()
    xB = None
    if target_iv is not None:
        xB, valid_b = hrv_to_arrays(extract_hrv_sequence(target_iv, grid, min_beats))
        mask &= valid_b

    xBraw = None
    if target_waveform is not None:
        xBraw = slice_waveform_windows(target_waveform, grid)

    lab = np.full(grid.count, np.nan)
    if labels is not None:
        for k, v in enumerate(consensus_window_labels(labels, grid, consensus)):
            if v is not None:
                lab[k] = float(v)

    return PairedExample(
        subject_id=subject_id,
        xA=xA,
        xB=xB,
        xBraw=xBraw,
        labels=lab,
        mask=mask.astype(np.float64),
        window_indices=np.arange(grid.count, dtype=np.int64),
    )


def slice_waveform_windows(w: Waveform, g: WindowGrid) -> np.ndarray:
    """Fixed-length raw slices, one per window: window_len_s x sample rate
    samples starting at each window edge."""
    slice_len = int(round(g.window_len_s * w.sample_rate_hz))
    out = np.zeros((g.count, slice_len))
    for k in range(g.count):
        ws, _ = g.edges(k)
        i0 = int(round((ws - w.start_time_s) * w.sample_rate_hz))
        i1 = i0 + slice_len
        if i0 < 0 or i1 > w.samples.size:
            raise ValidationError(f"window {k} falls outside the recorded waveform")
        out[k] = w.samples[i0:i1]
    return out


def chunk_example(ex: PairedExample, chunk_len: int = 64) -> list[PairedExample]:
    """Split a subject's sequence into training examples of ``chunk_len``
    consecutive windows; the final partial chunk is kept, padded with masked
    zero steps."""
    if chunk_len < 1:
        raise ValidationError("chunk_len must be >= 1")
    n = ex.n_steps
    if n == 0:
        return []
    chunks = []
    for lo in range(0, n, chunk_len):
        hi = min(lo + chunk_len, n)
        pad = chunk_len - (hi - lo)

        def cut(arr):
            if arr is None:
                return None
            piece = arr[lo:hi]
            if pad:
                piece = np.concatenate([piece, np.zeros((pad,) + piece.shape[1:], piece.dtype)])
            return piece

        labels = ex.labels[lo:hi]
        mask = ex.mask[lo:hi]
        widx = ex.window_indices[lo:hi]
        if pad:
            labels = np.concatenate([labels, np.full(pad, np.nan)])
            mask = np.concatenate([mask, np.zeros(pad)])
            widx = np.concatenate([widx, np.full(pad, -1, dtype=np.int64)])
        chunks.append(
            replace(
                ex,
                xA=cut(ex.xA),
                xB=cut(ex.xB),
                xBraw=cut(ex.xBraw),
                labels=labels,
                mask=mask,
                window_indices=widx,
            )
        )
    return chunks
