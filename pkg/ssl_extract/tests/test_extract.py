"""Extractor tests: frame geometry, layer averaging, error paths, and the
byte-exact SSLF contract consumed by the acoustic-model package."""

import struct

import numpy as np
import pytest

from conftest import write_tone

from ssl_extract.audio import read_wav_mono
from ssl_extract.errors import AudioError, ModelLoadError
from ssl_extract.extract import ExtractJob, extract, load_model
from ssl_extract.sslf import write_sslf


def parse_sslf_bytes(blob: bytes):
    """Independent parse of the SSLF layout for byte-level validation."""
    magic, version, dim, n_frames, rate, win, hop = struct.unpack_from(
        "<4sHHIIff", blob, 0
    )
    payload = np.frombuffer(blob, dtype="<f4", offset=24)
    return magic, version, dim, n_frames, rate, win, hop, payload


class TestAudio:
    def test_reads_tone(self, tmp_path):
        path = write_tone(tmp_path / "tone.wav")
        samples = read_wav_mono(path)
        assert samples.shape == (16000,)
        assert np.abs(samples).max() <= 1.0

    def test_rejects_wrong_rate(self, tmp_path):
        path = write_tone(tmp_path / "slow.wav", rate=22050)
        with pytest.raises(AudioError, match="sample rate"):
            read_wav_mono(path)

    def test_rejects_stereo(self, tmp_path):
        path = write_tone(tmp_path / "stereo.wav", channels=2)
        with pytest.raises(AudioError, match="mono"):
            read_wav_mono(path)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "noise.wav"
        path.write_bytes(b"not a wav at all")
        with pytest.raises(AudioError):
            read_wav_mono(path)


class TestExtraction:
    def test_one_second_gives_expected_frames_and_dim(self, tmp_path, tiny_model_dir):
        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_tone(in_dir / "tone.wav")
        job = ExtractJob(audio_paths=[in_dir / "tone.wav"],
                         model_id=str(tiny_model_dir),
                         out_dir=tmp_path / "out", layers=(1, 2))
        result = extract(job)
        assert not result.failures
        rec = result.written[0]
        # 20 ms hop over 1 s of audio, conv receptive field 25 ms
        assert 48 <= rec["n_frames"] <= 50
        assert rec["ssl_dim"] == 768

    def test_sslf_bytes_validate_against_layout(self, tmp_path, tiny_model_dir):
        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_tone(in_dir / "tone.wav")
        extract(ExtractJob([in_dir / "tone.wav"], str(tiny_model_dir),
                           tmp_path / "out", layers=(1,)))
        blob = (tmp_path / "out" / "tone.sslf").read_bytes()
        magic, version, dim, n_frames, rate, win, hop, payload = parse_sslf_bytes(blob)
        assert magic == b"SSLF"
        assert version == 1
        assert dim == 768
        assert rate == 16000
        assert win == np.float32(25.0)
        assert hop == np.float32(20.0)
        assert payload.size == n_frames * dim
        assert len(blob) == 24 + 4 * n_frames * dim

    def test_layer_averaging_idempotent(self, tmp_path, tiny_model_dir):
        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_tone(in_dir / "tone.wav")
        extract(ExtractJob([in_dir / "tone.wav"], str(tiny_model_dir),
                           tmp_path / "single", layers=(2,)))
        extract(ExtractJob([in_dir / "tone.wav"], str(tiny_model_dir),
                           tmp_path / "tripled", layers=(2, 2, 2)))
        one = (tmp_path / "single" / "tone.sslf").read_bytes()
        three = (tmp_path / "tripled" / "tone.sslf").read_bytes()
        assert one == three

    def test_deterministic_across_runs(self, tmp_path, tiny_model_dir):
        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_tone(in_dir / "tone.wav")
        for sub in ("a", "b"):
            extract(ExtractJob([in_dir / "tone.wav"], str(tiny_model_dir),
                               tmp_path / sub, layers=(1, 2)))
        assert ((tmp_path / "a" / "tone.sslf").read_bytes()
                == (tmp_path / "b" / "tone.sslf").read_bytes())

    def test_bad_file_skipped_job_continues(self, tmp_path, tiny_model_dir):
        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_tone(in_dir / "good.wav")
        write_tone(in_dir / "wrong_rate.wav", rate=8000)
        (in_dir / "garbage.wav").write_bytes(b"XXXX")
        job = ExtractJob(sorted(in_dir.glob("*.wav")), str(tiny_model_dir),
                         tmp_path / "out", layers=(1,))
        result = extract(job)
        assert len(result.written) == 1
        assert result.written[0]["id"] == "good"
        assert len(result.failures) == 2

    def test_model_load_failure_aborts(self, tmp_path):
        with pytest.raises(ModelLoadError):
            load_model(str(tmp_path / "no_such_model"))

    def test_layer_out_of_range(self, tmp_path, tiny_model_dir):
        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_tone(in_dir / "tone.wav")
        job = ExtractJob([in_dir / "tone.wav"], str(tiny_model_dir),
                         tmp_path / "out", layers=(9, 10, 11))  # only 2 blocks
        with pytest.raises(ValueError, match="out of range"):
            extract(job)

    def test_manifest_fragment_schema(self, tmp_path, tiny_model_dir):
        import json

        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_tone(in_dir / "a.wav")
        write_tone(in_dir / "b.wav")
        extract(ExtractJob(sorted(in_dir.glob("*.wav")), str(tiny_model_dir),
                           tmp_path / "out", layers=(1,)))
        lines = (tmp_path / "out" / "ssl_manifest.jsonl").read_text().splitlines()
        assert len(lines) == 2
        for line in lines:
            rec = json.loads(line)
            assert rec["kind"] == "ssl"
            assert set(rec) == {"kind", "id", "ssl_path", "n_frames", "ssl_dim"}


class TestPrimaryIntegration:
    """The acceptance contract: files written here parse through the acoustic
    model package's loader with the canonical dim and frame spec."""

    def test_round_trip_through_primary_loader(self, tmp_path, tiny_model_dir):
        saltts_features = pytest.importorskip(
            "saltts.features",
            reason="primary package not installed in this environment",
        )
        from saltts.align import FrameSpec

        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_tone(in_dir / "tone.wav")
        result = extract(ExtractJob([in_dir / "tone.wav"], str(tiny_model_dir),
                                    tmp_path / "out", layers=(1, 2)))
        path = tmp_path / "out" / "tone.sslf"
        target = saltts_features.load_ssl_features(path, expect_dim=768)
        assert target.features.shape == (result.written[0]["n_frames"], 768)
        assert target.frame_spec == FrameSpec(16000, 25.0, 20.0)

    def test_primary_writer_and_extractor_agree_bytewise(self, tmp_path):
        saltts_features = pytest.importorskip(
            "saltts.features",
            reason="primary package not installed in this environment",
        )
        from saltts.align import SSL_SPEC
        from saltts.features import SSLTarget

        feats = np.random.default_rng(0).normal(size=(7, 768)).astype(np.float32)
        write_sslf(tmp_path / "ours.sslf", feats)
        saltts_features.write_ssl_features(
            tmp_path / "theirs.sslf", SSLTarget(feats, SSL_SPEC)
        )
        assert ((tmp_path / "ours.sslf").read_bytes()
                == (tmp_path / "theirs.sslf").read_bytes())


class TestCLI:
    def test_end_to_end(self, tmp_path, tiny_model_dir, capsys):
        from ssl_extract.cli import main

        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_tone(in_dir / "x.wav")
        rc = main(["--model", str(tiny_model_dir), "--layers", "1,2",
                   "--in", str(in_dir), "--out", str(tmp_path / "out")])
        assert rc == 0
        assert (tmp_path / "out" / "x.sslf").exists()
        assert (tmp_path / "out" / "ssl_manifest.jsonl").exists()
        assert "wrote 1 SSLF files" in capsys.readouterr().out

    def test_missing_input_dir(self, tmp_path):
        from ssl_extract.cli import main

        rc = main(["--model", "whatever", "--in", str(tmp_path / "none"),
                   "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_bad_model_exit_code(self, tmp_path):
        from ssl_extract.cli import main

        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_tone(in_dir / "x.wav")
        rc = main(["--model", str(tmp_path / "missing_model"),
                   "--in", str(in_dir), "--out", str(tmp_path / "out")])
        assert rc == 3

    def test_layers_out_of_range_exit_code(self, tmp_path, tiny_model_dir):
        from ssl_extract.cli import main

        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_tone(in_dir / "x.wav")
        rc = main(["--model", str(tiny_model_dir), "--layers", "9,10,11",
                   "--in", str(in_dir), "--out", str(tmp_path / "out")])
        assert rc == 2
