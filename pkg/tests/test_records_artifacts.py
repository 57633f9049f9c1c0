import numpy as np
import pytest

from hrvadapt.artifacts import FORMAT_VERSION, load_model, save_model
from hrvadapt.errors import CorruptionError, ParseError, ValidationError, VersionError
from hrvadapt.nn import ModelDims, init_teacher, named_parameters
from hrvadapt.records import ingest_subject, parse_subject, serialize_subject, write_subject
from hrvadapt.training import clone_student

SMALL = ModelDims(
    feature_dim=4, tail_hidden=(6,), lstm_hidden=4, head_hidden=(8,),
    cnn_channels=(2, 3), cnn_kernel=5, cnn_stride=2,
)


def record_text(subject_id="s1", peaks=(0.0, 1.0, 2.0), labels=True):
    import json

    doc = {
        "subject_id": subject_id,
        "source": {"sample_rate_hz": None, "waveform": None, "peaks_s": list(peaks)},
        "target": {"sample_rate_hz": None, "waveform": None, "peaks_s": list(peaks)},
        "labels": [{"start_s": 0.0, "end_s": 2.0, "label": 1}] if labels else None,
    }
    return json.dumps(doc)


class TestRecords:
    def test_round_trip_is_canonical(self):
        rec = parse_subject(record_text())
        once = serialize_subject(rec)
        twice = serialize_subject(parse_subject(once))
        assert once == twice

    def test_missing_subject_id(self):
        with pytest.raises(ParseError, match="subject_id"):
            parse_subject('{"source": {"peaks_s": [1.0]}}')

    def test_non_monotonic_peaks_rejected(self):
        with pytest.raises(ValidationError):
            parse_subject(record_text(peaks=(2.0, 1.0)))

    def test_waveform_to_peaks_on_ingest(self, tmp_path):
        import json

        fs = 200.0
        t = np.arange(int(fs * 10)) / fs
        wave = np.zeros_like(t)
        for c in 0.5 + np.arange(10):
            wave += np.exp(-0.5 * ((t - c) / 0.01) ** 2)
        doc = {
            "subject_id": "w1",
            "source": {"sample_rate_hz": fs, "waveform": wave.tolist(), "peaks_s": None},
            "target": {"sample_rate_hz": 20.0, "waveform": None, "peaks_s": [0.1, 0.9, 1.8]},
            "labels": None,
        }
        p = tmp_path / "w1.json"
        p.write_text(json.dumps(doc))
        rec = ingest_subject(p)
        assert rec.source.peaks is not None
        assert len(rec.source.peaks) == 10

    def test_write_then_ingest(self, tmp_path):
        rec = parse_subject(record_text())
        path = tmp_path / "s1.json"
        write_subject(rec, path)
        back = ingest_subject(path)
        assert back.subject_id == "s1"
        assert np.array_equal(back.source.peaks.times_s, rec.source.peaks.times_s)


class TestArtifacts:
    def models(self):
        rng = np.random.default_rng(0)
        teacher = init_teacher(SMALL, rng)
        teacher.platt_a, teacher.platt_b = 1.25, -0.5
        teacher.norm.mean[:] = rng.standard_normal(4)
        teacher.norm.std[:] = np.abs(rng.standard_normal(4)) + 0.5
        student = clone_student(teacher, use_cnn=True, dims=SMALL, seed=1)
        return teacher, student

    @pytest.mark.parametrize("kind", ["teacher", "student"])
    def test_save_load_bit_exact(self, tmp_path, kind):
        teacher, student = self.models()
        model = teacher if kind == "teacher" else student
        path = tmp_path / f"{kind}.tsda"
        save_model(model, path)
        back = load_model(path)
        assert type(back) is type(model)
        a, b = named_parameters(model), named_parameters(back)
        assert a.keys() == b.keys()
        for k in a:
            assert np.array_equal(a[k], b[k]), k
        assert back.platt_a == model.platt_a
        assert back.platt_b == model.platt_b
        assert np.array_equal(back.norm.mean, model.norm.mean)
        assert np.array_equal(back.norm.std, model.norm.std)

    def test_student_without_aux_round_trips(self, tmp_path):
        teacher, _ = self.models()
        student = clone_student(teacher, use_cnn=False)
        path = tmp_path / "s.tsda"
        save_model(student, path)
        assert load_model(path).aux is None

    def test_truncated_payload_is_corruption(self, tmp_path):
        teacher, _ = self.models()
        path = tmp_path / "t.tsda"
        save_model(teacher, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-1])
        with pytest.raises(CorruptionError):
            load_model(path)

    def test_flipped_byte_is_corruption(self, tmp_path):
        teacher, _ = self.models()
        path = tmp_path / "t.tsda"
        save_model(teacher, path)
        blob = bytearray(path.read_bytes())
        blob[100] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CorruptionError):
            load_model(path)

    def test_future_version_names_versions(self, tmp_path):
        import hashlib
        import struct

        teacher, _ = self.models()
        path = tmp_path / "t.tsda"
        save_model(teacher, path)
        blob = bytearray(path.read_bytes()[:-8])
        blob[4:6] = struct.pack("<H", FORMAT_VERSION + 1)
        blob += hashlib.blake2b(bytes(blob), digest_size=8).digest()
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionError, match=str(FORMAT_VERSION)):
            load_model(path)

    def test_bad_magic(self, tmp_path):
        import hashlib

        body = b"NOPE" + bytes(20)
        path = tmp_path / "x.tsda"
        path.write_bytes(body + hashlib.blake2b(body, digest_size=8).digest())
        with pytest.raises(ParseError):
            load_model(path)
