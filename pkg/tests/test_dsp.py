import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from augcap.audio import AudioClip
from augcap.dsp import (
    LOG_EPS,
    CombineKind,
    CombineSpec,
    TransformKind,
    TransformSpec,
    apply_gain,
    concat_with_silence,
    halve_duration,
    logmel,
    mel_filterbank,
    mix_at_snr,
    pitch_shift,
    rms,
    time_stretch,
)
from augcap.errors import ClipTooShort, RateMismatch, SilentInput

from conftest import SR, peak_hz, tone


def measured_snr(signal, noise_part, offset, noise_len):
    overlap = min(len(signal) - offset, noise_len)
    s = signal.samples[offset:offset + overlap]
    n = noise_part[offset:offset + overlap]
    return 20 * np.log10(rms(s) / rms(n))


def split_mix(signal, out):
    padded = np.zeros(len(out))
    padded[:len(signal)] = signal.samples
    return out.samples - padded


class TestGain:
    def test_zero_db_identity(self):
        clip = tone(440, 0.1)
        assert np.array_equal(apply_gain(clip, 0.0).samples, clip.samples)

    def test_plus_one_db(self):
        out = apply_gain(AudioClip(np.full(10, 0.5), SR), 1.0)
        # closed form: 0.5 * 10 ** (1 / 20)
        np.testing.assert_allclose(out.samples, 0.5610092271, atol=1e-9)

    def test_minus_half_db_rms_ratio(self):
        clip = tone(440, 0.5)
        ratio = rms(apply_gain(clip, -0.5).samples) / rms(clip.samples)
        assert ratio == pytest.approx(0.9440608763, abs=1e-6)

    @given(st.floats(-20, 20), st.floats(-20, 20))
    def test_additive(self, a, b):
        clip = tone(440, 0.01)
        np.testing.assert_allclose(apply_gain(apply_gain(clip, a), b).samples,
                                   apply_gain(clip, a + b).samples, atol=1e-6)


class TestPitchShift:
    def test_zero_is_identity(self):
        clip = tone(440, 1.0)
        assert abs(peak_hz(pitch_shift(clip, 0.0)) - 440) <= SR / len(clip)

    @pytest.mark.parametrize("octaves, expected", [(0.5, 622.25), (-0.5, 311.13), (0.25, 523.25)])
    def test_tone_shift(self, octaves, expected):
        clip = tone(440, 1.0)
        out = pitch_shift(clip, octaves)
        assert peak_hz(out) == pytest.approx(expected, rel=0.03)
        assert 0.99 <= len(out) / len(clip) <= 1.01

    def test_too_short(self):
        with pytest.raises(ClipTooShort):
            pitch_shift(AudioClip(np.zeros(500), SR), 0.2)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            pitch_shift(tone(440, 0.5), 0.7)


class TestTimeStretch:
    def test_unit_rate(self):
        clip = tone(440, 1.0)
        out = time_stretch(clip, 1.0)
        assert 0.99 <= len(out) / len(clip) <= 1.01
        assert peak_hz(out) == pytest.approx(440, rel=0.02)

    def test_slow_down(self):
        out = time_stretch(tone(440, 2.0), 0.8)
        assert out.duration_seconds == pytest.approx(2.5, rel=0.02)

    def test_speed_up_keeps_pitch(self):
        out = time_stretch(tone(440, 2.0), 1.2)
        assert out.duration_seconds == pytest.approx(2.0 / 1.2, rel=0.02)
        assert peak_hz(out) == pytest.approx(440, rel=0.02)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.8, 1.2))
    def test_reciprocal_restores_duration(self, rate):
        clip = tone(330, 1.0)
        back = time_stretch(time_stretch(clip, rate), 1 / rate)
        assert back.duration_seconds == pytest.approx(clip.duration_seconds, rel=0.04)

    def test_too_short(self):
        with pytest.raises(ClipTooShort):
            time_stretch(AudioClip(np.zeros(1000), SR), 1.1)


class TestHalveDuration:
    def test_contiguous_window(self, rng):
        x = np.arange(16000) / 16000.0
        out = halve_duration(AudioClip(x, SR), rng)
        assert len(out) == 8000
        start = int(round(out.samples[0] * 16000))
        np.testing.assert_array_equal(out.samples, x[start:start + 8000])

    def test_odd_length(self, rng):
        assert len(halve_duration(AudioClip(np.ones(7), SR), rng)) == 3

    def test_degenerate(self, rng):
        with pytest.raises(ValueError):
            halve_duration(AudioClip(np.ones(1), SR), rng)

    def test_deterministic(self):
        clip = AudioClip(np.random.default_rng(0).standard_normal(1000) * 0.1, SR)
        a = halve_duration(clip, np.random.default_rng(5))
        b = halve_duration(clip, np.random.default_rng(5))
        assert np.array_equal(a.samples, b.samples)

    def test_start_is_uniform(self):
        clip = AudioClip(np.arange(4) / 4.0, SR)
        rng = np.random.default_rng(0)
        starts = [int(halve_duration(clip, rng).samples[0] * 4) for _ in range(3000)]
        counts = np.bincount(starts, minlength=3)
        assert len(counts) == 3 and counts.min() > 900


class TestConcat:
    def test_length(self):
        assert len(concat_with_silence(tone(200, 2.0), tone(300, 3.0))) == 88000

    def test_silence(self):
        assert not concat_with_silence(AudioClip(np.zeros(10), SR), AudioClip(np.zeros(5), SR)).samples.any()

    def test_gap_placement(self):
        a, b = AudioClip(np.ones(100), SR), AudioClip(np.full(50, 2.0), SR)
        out = concat_with_silence(a, b).samples
        assert np.all(out[:100] == 1) and not out[100:8100].any() and np.all(out[8100:] == 2)

    def test_rate_mismatch(self):
        with pytest.raises(RateMismatch):
            concat_with_silence(tone(200, 0.1), tone(200, 0.1, sr=8000))

    @given(st.integers(0, 500), st.integers(0, 500))
    def test_length_identity(self, n1, n2):
        out = concat_with_silence(AudioClip(np.ones(n1), SR), AudioClip(np.ones(n2), SR))
        assert len(out) == n1 + 8000 + n2


class TestMix:
    def test_symmetric_case(self):
        s, n = tone(300, 1.0), tone(500, 1.0)
        out = mix_at_snr(s, n, 0.0, 0)
        np.testing.assert_allclose(out.samples, s.samples + n.samples, atol=1e-12)

    @pytest.mark.parametrize("snr", [-5.0, -2.5, 0.0, 3.0, 5.0])
    def test_realized_snr(self, snr):
        s, n = tone(300, 1.0, amp=0.3), tone(700, 0.6, amp=0.05)
        out = mix_at_snr(s, n, snr, 4000)
        assert measured_snr(s, split_mix(s, out), 4000, len(n)) == pytest.approx(snr, abs=0.1)

    def test_boundary_offset_is_concatenation(self):
        s, n = tone(300, 0.5), tone(500, 0.25)
        out = mix_at_snr(s, n, 0.0, len(s))
        assert len(out) == len(s) + len(n)
        np.testing.assert_array_equal(out.samples[:len(s)], s.samples)

    def test_length(self):
        s, n = tone(300, 1.0), tone(500, 1.0)
        assert len(mix_at_snr(s, n, 1.0, 12000)) == 12000 + 16000

    def test_silent_input(self):
        with pytest.raises(SilentInput):
            mix_at_snr(AudioClip(np.zeros(100), SR), tone(300, 0.01), 0.0, 0)

    def test_rate_mismatch(self):
        with pytest.raises(RateMismatch):
            mix_at_snr(tone(300, 0.1), tone(300, 0.1, sr=8000), 0.0, 0)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-5, 5), st.floats(0.0, 0.99), st.integers(0, 2**32 - 1))
    def test_snr_property(self, snr, frac, seed):
        r = np.random.default_rng(seed)
        s = AudioClip(r.uniform(-0.5, 0.5, 3000), SR)
        n = AudioClip(r.uniform(-0.5, 0.5, int(r.integers(200, 4000))), SR)
        offset = int(frac * len(s))
        noise_part = split_mix(s, mix_at_snr(s, n, snr, offset))
        overlap = min(len(s) - offset, len(n))
        if rms(s.samples[offset:offset + overlap]) > 1e-4 and rms(n.samples[:overlap]) > 1e-4:
            assert measured_snr(s, noise_part, offset, len(n)) == pytest.approx(snr, abs=0.1)


class TestSpecs:
    def test_transform_ranges(self):
        with pytest.raises(ValueError):
            TransformSpec(TransformKind.VOLUME, 0.2)
        with pytest.raises(ValueError):
            TransformSpec(TransformKind.SPEED, 1.5)
        with pytest.raises(ValueError):
            TransformSpec(TransformKind.DURATION, 0.4)
        assert TransformSpec(TransformKind.SPEED, 1.25).keywords == ("fast",)

    @pytest.mark.parametrize("kind, p, word", [
        (TransformKind.VOLUME, 0.7, "loud"), (TransformKind.VOLUME, -0.7, "quiet"),
        (TransformKind.PITCH, 0.2, "high-pitch"), (TransformKind.PITCH, -0.2, "low-pitch"),
        (TransformKind.SPEED, 1.1, "fast"), (TransformKind.SPEED, 0.9, "slow"),
        (TransformKind.DURATION, 0.5, "short")])
    def test_keyword_table(self, kind, p, word):
        assert TransformSpec(kind, p).keywords == (word,)

    def test_inconsistent_keyword(self):
        with pytest.raises(ValueError):
            TransformSpec(TransformKind.VOLUME, 0.7, ("quiet",))

    def test_combine_spec(self):
        assert CombineSpec(CombineKind.CONCATENATE).gap_s == 0.5
        with pytest.raises(ValueError):
            CombineSpec(CombineKind.MIX, snr_db=6.0, offset_fraction=0.1)
        with pytest.raises(ValueError):
            CombineSpec(CombineKind.CONCATENATE, gap_s=1.0)
        spec = CombineSpec(CombineKind.MIX, snr_db=-3.0, offset_fraction=0.5)
        assert CombineSpec.from_dict(spec.to_dict()) == spec
        assert spec.offset_samples(101) == 50


class TestLogmel:
    def test_frame_count(self):
        feats = logmel(tone(440, 10.0))
        assert feats.frames.shape == (1 + (160000 - 1024) // 160, 64) == (994, 64)

    def test_silence(self):
        feats = logmel(AudioClip(np.zeros(4000), SR))
        np.testing.assert_allclose(feats.frames, np.log(LOG_EPS))

    def test_one_khz_bin(self):
        # independent oracle: HTK mel edges, filter whose triangle peaks nearest 1 kHz
        mel = lambda f: 2595 * np.log10(1 + f / 700)  # noqa: E731
        spacing = mel(8000) / 65
        expected = int(round(mel(1000) / spacing)) - 1
        argmax = logmel(tone(1000, 1.0)).frames.argmax(axis=1)
        assert np.all(argmax == argmax[0])
        assert argmax[0] == expected

    def test_filterbank_shape(self):
        fb = mel_filterbank()
        assert fb.shape == (64, 513)
        assert np.all(fb.max(axis=1) > 0)

    def test_errors(self):
        with pytest.raises(ClipTooShort):
            logmel(AudioClip(np.zeros(1000), SR))
        with pytest.raises(RateMismatch):
            logmel(AudioClip(np.zeros(4000), 8000))
