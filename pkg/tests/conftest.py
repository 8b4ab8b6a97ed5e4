import numpy as np
import pytest

from augcap.audio import AudioClip
from augcap.synth import make_synthetic_corpus

SR = 16000


def tone(freq, seconds, sr=SR, amp=0.25, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t + phase), sr)


def peak_hz(clip):
    """Dominant frequency with parabolic interpolation between FFT bins."""
    x = clip.samples
    spec = np.abs(np.fft.rfft(x * np.hanning(len(x))))
    k = int(np.argmax(spec[1:-1])) + 1
    a, b, c = np.log(spec[k - 1:k + 2] + 1e-300)
    delta = 0.5 * (a - c) / (a - 2 * b + c)
    return (k + delta) * clip.sample_rate / len(x)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    return make_synthetic_corpus(tmp_path_factory.mktemp("corpus"), n_clips=120, seed=3)


# acceptance verdicts, filled by test_acceptance.py and echoed after the run
ACCEPTANCE: list[str] = []


def record_acceptance(name: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
