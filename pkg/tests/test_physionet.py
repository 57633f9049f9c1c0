import numpy as np
import pytest

from hrvadapt.errors import ParseError
from hrvadapt.physionet import load_wfdb_subject, parse_header, read_signal


def write_record(tmp_path, name="rec01", fs=200.0, n=2000, channels=("II", "PPG")):
    rng = np.random.default_rng(0)
    signals = rng.standard_normal((n, len(channels)))
    gain, baseline = 400.0, 12
    digital = np.clip(np.round(signals * gain + baseline), -32768, 32767).astype("<i2")
    (tmp_path / f"{name}.dat").write_bytes(digital.tobytes())
    lines = [f"{name} {len(channels)} {fs:g} {n}"]
    for ch in channels:
        lines.append(f"{name}.dat 16 {gain:g}({baseline})/mV 16 0 0 0 0 {ch}")
    (tmp_path / f"{name}.hea").write_text("\n".join(lines) + "\n")
    return digital, gain, baseline


def test_header_and_signal_round_trip(tmp_path):
    digital, gain, baseline = write_record(tmp_path)
    header = parse_header(tmp_path / "rec01.hea")
    assert header.n_channels == 2
    assert header.sample_rate_hz == 200.0
    wave = read_signal(header, tmp_path, 0)
    assert wave.samples.shape == (2000,)
    assert np.allclose(wave.samples, (digital[:, 0] - baseline) / gain)


def test_channel_selection_by_name(tmp_path):
    write_record(tmp_path)
    rec = load_wfdb_subject(tmp_path / "rec01", channel_name="ppg")
    assert rec.subject_id == "rec01"
    assert rec.source.waveform is not None


def test_missing_channel_name(tmp_path):
    write_record(tmp_path)
    with pytest.raises(ParseError, match="no channel matching"):
        load_wfdb_subject(tmp_path / "rec01", channel_name="EEG")


def test_labels_sidecar(tmp_path):
    write_record(tmp_path)
    (tmp_path / "rec01.labels.csv").write_text(
        "start_s,end_s,label\n0.0,5.0,0\n5.0,10.0,1\n"
    )
    rec = load_wfdb_subject(tmp_path / "rec01")
    assert rec.labels is not None
    assert rec.labels.labels.tolist() == [0, 1]


def test_truncated_signal_rejected(tmp_path):
    write_record(tmp_path)
    dat = tmp_path / "rec01.dat"
    dat.write_bytes(dat.read_bytes()[:-10])
    header = parse_header(tmp_path / "rec01.hea")
    with pytest.raises(ParseError, match="promises"):
        read_signal(header, tmp_path, 0)


def test_unsupported_format_rejected(tmp_path):
    write_record(tmp_path)
    hea = tmp_path / "rec01.hea"
    hea.write_text(hea.read_text().replace(".dat 16", ".dat 212"))
    header = parse_header(hea)
    with pytest.raises(ParseError, match="format"):
        read_signal(header, tmp_path, 0)
