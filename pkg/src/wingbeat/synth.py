"""Synthetic wingbeat-like recordings: harmonic tone stacks in white noise."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import species
from .dataset import ManifestEntry, write_manifest, write_wav
from .errors import ConfigError


@dataclass(frozen=True)
class ToneClass:
    species: str
    fundamental_hz: float
    harmonics: int = 3
    snr_db: float = 20.0


def harmonic_stack(n, rate, fundamental, harmonics, rng, amplitude=0.5):
    """Sum of harmonics below Nyquist with 1/h amplitudes and random phases, peak-scaled."""
    t = np.arange(n) / rate
    x = np.zeros(n)
    for h in range(1, harmonics + 1):
        f = fundamental * h
        if f >= rate / 2:
            break
        x += np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)) / h
    peak = np.max(np.abs(x))
    return x * (amplitude / peak) if peak > 0 else x


def synth_signal(n, rate, tone, rng, amplitude_jitter=0.2):
    amp = 0.5 * rng.uniform(1 - amplitude_jitter, 1 + amplitude_jitter)
    x = harmonic_stack(n, rate, tone.fundamental_hz, tone.harmonics, rng, amplitude=amp)
    if np.isfinite(tone.snr_db):
        noise_power = np.mean(x**2) / 10 ** (tone.snr_db / 10)
        x = x + rng.normal(0, np.sqrt(noise_power), n)
    return np.clip(x, -1, 1)


def generate_synthetic(out_dir, classes, files_per_class=1, seconds=10.0, seed=0, sample_rate=8000, channels=1):
    """Write WAV files for every class plus ``manifest.csv``; returns the manifest path.

    ``classes`` is a sequence of ToneClass. Per-file random phases, amplitude jitter and
    noise come from one generator seeded with ``seed``.
    """
    classes = list(classes)
    if not classes:
        raise ConfigError("no classes to synthesise")
    if len(classes) > species.N_CLASSES:
        raise ConfigError(f"at most {species.N_CLASSES} classes")
    names = [c.species for c in classes]
    if len(set(names)) != len(names):
        raise ConfigError("synthetic classes must use distinct species")
    for c in classes:
        if not species.is_species(c.species):
            raise ConfigError(f"unknown species {c.species!r}")
        if not 0 < c.fundamental_hz < 4000 or c.fundamental_hz >= sample_rate / 2:
            raise ConfigError(f"{c.species}: fundamental {c.fundamental_hz} Hz must lie below the 4 kHz Nyquist limit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    entries = []
    for c in classes:
        for i in range(files_per_class):
            x = synth_signal(n, sample_rate, c, rng)
            if channels == 2:
                x = np.stack([x, x], axis=1)
            path = out_dir / f"{c.species}_{i:03d}.wav"
            write_wav(path, x, sample_rate)
            entries.append(ManifestEntry(str(path), species.label(c.species)))
    manifest = out_dir / "manifest.csv"
    write_manifest(manifest, entries)
    return manifest


def parse_class_list(text, harmonics=3, snr_db=20.0):
    """``"Aedes_aegypti:500,Anopheles_freeborni:700"`` -> list of ToneClass."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, sep, hz = part.partition(":")
        if not sep:
            raise ConfigError(f"expected species:hz, got {part!r}")
        out.append(ToneClass(name.strip(), float(hz), harmonics, snr_db))
    return out
