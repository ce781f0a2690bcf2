import numpy as np
import pytest

from wingbeat import dataset, species


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def write_tone(tmp_path):
    """Write a sine WAV and return its path."""

    def _write(name, freq, seconds, rate, channels=1, amp=0.5, sample_width=2):
        t = np.arange(int(round(seconds * rate))) / rate
        x = amp * np.sin(2 * np.pi * freq * t)
        if channels > 1:
            x = np.stack([x] * channels, axis=1)
        path = tmp_path / name
        dataset.write_wav(path, x, rate, sample_width=sample_width)
        return path

    return _write


def entry(path, name="Aedes_aegypti", segments=()):
    return dataset.ManifestEntry(str(path), species.label(name), tuple(segments))
