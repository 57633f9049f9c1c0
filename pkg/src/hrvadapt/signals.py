"""Waveform-to-peaks front end: AMPD pulse peaks, Pan-Tompkins style R-waves,
and peak-to-interval conversion.

All functions are pure and safe to call concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .errors import ConfigError, ValidationError


@dataclass(frozen=True)
class Waveform:
    """A uniformly sampled sensor signal."""

    samples: np.ndarray
    sample_rate_hz: float
    start_time_s: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate_hz <= 0:
            raise ValidationError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        if samples.ndim != 1:
            raise ValidationError(f"samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("samples contain NaN or Inf")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def times_s(self) -> np.ndarray:
        return self.start_time_s + np.arange(self.samples.size) / self.sample_rate_hz


@dataclass(frozen=True)
class PeakSeries:
    """Detected event times, strictly increasing, in seconds."""

    times_s: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times_s, dtype=np.float64)
        object.__setattr__(self, "times_s", t)
        if t.ndim != 1:
            raise ValidationError("peak times must be 1-D")
        if not np.all(np.isfinite(t)):
            raise ValidationError("peak times contain NaN or Inf")
        if t.size and np.min(t) < 0:
            raise ValidationError("peak times must be >= 0")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValidationError("peak times must be strictly increasing")

    def __len__(self) -> int:
        return int(self.times_s.size)


@dataclass(frozen=True)
class IntervalSeries:
    """Beat-to-beat intervals, each tagged with the time of its closing beat."""

    end_times_s: np.ndarray
    intervals_s: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.end_times_s, dtype=np.float64)
        v = np.asarray(self.intervals_s, dtype=np.float64)
        object.__setattr__(self, "end_times_s", e)
        object.__setattr__(self, "intervals_s", v)
        if e.shape != v.shape or e.ndim != 1:
            raise ValidationError("end_times_s and intervals_s must be 1-D with equal length")
        if e.size > 1 and np.any(np.diff(e) <= 0):
            raise ValidationError("interval end times must be strictly increasing")
        if np.any(v <= 0):
            raise ValidationError("intervals must be positive")

    def __len__(self) -> int:
        return int(self.end_times_s.size)


def detect_peaks_ampd(w: Waveform, max_scale_s: float | None = None) -> PeakSeries:
    """Automatic multiscale peak detection.

    Builds a local-maxima scalogram over window scales k = 1 .. N//2, picks the
    scale whose row has the fewest misses (ties toward the smaller scale), and
    keeps the maxima that persist at every scale up to it.  Sub-scale (spurious)
    maxima are thereby rejected.  Peaks are compared left-strict / right-tolerant
    so a flat-topped crest yields its leftmost sample exactly once, and boundary
    comparisons that run off the signal are tolerated so crests near the edges
    are still found.

    ``max_scale_s`` optionally caps the scanned scale (in seconds); the full
    scalogram is quadratic in the signal length.
    """
    x = w.samples
    n = x.size
    if n < 3:
        raise ValidationError(f"AMPD needs at least 3 samples, got {n}")
    kmax = n // 2
    if max_scale_s is not None:
        kmax = min(kmax, max(1, int(round(max_scale_s * w.sample_rate_hz))))

    # pass 1: scale selection on in-range comparisons only
    gamma = np.empty(kmax, dtype=np.int64)
    for k in range(1, kmax + 1):
        if n > 2 * k:
            mid = (x[k:-k] > x[: n - 2 * k]) & (x[k:-k] >= x[2 * k :])
            gamma[k - 1] = n - int(mid.sum())
        else:
            gamma[k - 1] = n
    lam = int(np.argmin(gamma)) + 1  # argmin takes the first (smallest) scale on ties

    # pass 2: persistence up to lam, edge comparisons tolerated; a candidate
    # must additionally win at least one strict in-range comparison, which
    # rejects plateaus that merely touch a boundary (e.g. constant signals)
    persamp = np.ones(n, dtype=bool)
    strict_any = np.zeros(n, dtype=bool)
    for k in range(1, lam + 1):
        left = np.ones(n, dtype=bool)
        right = np.ones(n, dtype=bool)
        left[k:] = x[k:] > x[:-k]
        right[: n - k] = x[: n - k] >= x[k:]
        persamp &= left & right
        strict_any[k:] |= x[k:] > x[:-k]
        strict_any[: n - k] |= x[: n - k] > x[k:]
    idx = np.where(persamp & strict_any)[0]
    return PeakSeries(w.start_time_s + idx / w.sample_rate_hz)


@dataclass(frozen=True)
class QrsConfig:
    """Tunables for the R-wave detector; defaults are standard Pan-Tompkins
    choices (the exact thresholds are a documented choice, not canonical)."""

    band_hz: tuple[float, float] = (5.0, 15.0)
    mwi_window_s: float = 0.150
    refractory_s: float = 0.200
    threshold_fraction: float = 0.25
    level_decay: float = 0.125
    min_sample_rate_hz: float = 100.0
    min_duration_s: float = 2.0


def detect_qrs(w: Waveform, cfg: QrsConfig = QrsConfig()) -> PeakSeries:
    """R-wave detection: band-pass, derivative, squaring, moving-window average,
    then adaptive signal-vs-noise thresholding of the integrated envelope.

    All filters are zero-phase (forward-backward band-pass, centred derivative
    and window), so no group-delay correction is owed; each accepted envelope
    peak is refined to the raw-signal maximum within half a window.  Peaks
    within half a window of either boundary are discarded (filter transients).
    """
    if w.sample_rate_hz < cfg.min_sample_rate_hz:
        raise ConfigError(
            f"QRS detection needs sample_rate_hz >= {cfg.min_sample_rate_hz}, "
            f"got {w.sample_rate_hz}"
        )
    if w.duration_s < cfg.min_duration_s:
        raise ValidationError(
            f"QRS detection needs >= {cfg.min_duration_s} s of signal, got {w.duration_s:.3f} s"
        )
    x = w.samples
    fs = w.sample_rate_hz
    n = x.size

    sos = butter(2, cfg.band_hz, btype="band", fs=fs, output="sos")
    filtered = sosfiltfilt(sos, x)
    squared = (np.gradient(filtered) * fs) ** 2
    win = max(1, int(round(cfg.mwi_window_s * fs)))
    if win % 2 == 0:
        win += 1
    mwi = np.convolve(squared, np.ones(win) / win, mode="same")

    candidates = np.where((mwi[1:-1] > mwi[:-2]) & (mwi[1:-1] >= mwi[2:]))[0] + 1
    init = mwi[: int(cfg.min_duration_s * fs)]
    signal_level = 0.125 * float(np.max(init))
    noise_level = 0.5 * float(np.mean(init))
    refractory = int(round(cfg.refractory_s * fs))
    half = win // 2

    last = -n
    found: list[int] = []
    for i in candidates:
        if i - last < refractory:
            continue
        threshold = noise_level + cfg.threshold_fraction * (signal_level - noise_level)
        if mwi[i] > threshold and mwi[i] > 0:
            lo, hi = max(0, i - half), min(n, i + half + 1)
            found.append(lo + int(np.argmax(x[lo:hi])))
            last = i
            signal_level = cfg.level_decay * mwi[i] + (1 - cfg.level_decay) * signal_level
        else:
            noise_level = cfg.level_decay * mwi[i] + (1 - cfg.level_decay) * noise_level

    idx = np.unique(found)
    idx = idx[(idx >= half) & (idx < n - half)]
    return PeakSeries(w.start_time_s + idx / fs)


def peaks_to_intervals(p: PeakSeries) -> IntervalSeries:
    """Each interval ends at its later peak: entry k is
    (times[k+1], times[k+1] - times[k])."""
    t = p.times_s
    if t.size <= 1:
        return IntervalSeries(np.empty(0), np.empty(0))
    return IntervalSeries(t[1:], np.diff(t))


def intervals_to_peaks(iv: IntervalSeries) -> PeakSeries:
    """Inverse of peaks_to_intervals: the opening peak is the first end time
    minus the first interval, followed by every end time."""
    if len(iv) == 0:
        return PeakSeries(np.empty(0))
    anchor = iv.end_times_s[0] - iv.intervals_s[0]
    return PeakSeries(np.concatenate([[anchor], iv.end_times_s]))
