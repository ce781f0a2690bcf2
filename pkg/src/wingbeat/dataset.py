"""Manifest loading, WAV decoding and standardisation to the 8 kHz working rate."""
import csv
import logging
import wave
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import species
from .errors import DecodeError, ManifestError
from .resample import resample
from .species import SpeciesLabel

log = logging.getLogger(__name__)

TARGET_RATE = 8000
MANIFEST_COLUMNS = ("file_path", "species", "segments")


@dataclass(frozen=True)
class ManifestEntry:
    file_path: str
    species: SpeciesLabel
    keep_segments: tuple = ()

    @property
    def source_id(self):
        return self.file_path


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    species: SpeciesLabel
    source_id: str

    def __post_init__(self):
        if self.samples.ndim != 1:
            raise ValueError("AudioClip must be mono")
        if len(self.samples) < 1:
            raise ValueError("AudioClip must hold at least one sample")

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass
class SpeciesStats:
    file_count: int = 0
    total_duration_s: float = 0.0
    files: list = field(default_factory=list, repr=False)


def parse_segments(text, row=None):
    """Parse ``"0.0-1.5;2.0-3.25"`` into sorted, validated (start, end) pairs."""
    where = f"row {row}: " if row is not None else ""
    text = (text or "").strip()
    if not text:
        return ()
    segs = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            start_s, end_s = part.split("-")
            start, end = float(start_s), float(end_s)
        except ValueError:
            raise ManifestError(f"{where}malformed segment {part!r}") from None
        if start < 0:
            raise ManifestError(f"{where}segment {part!r} starts before 0")
        if end <= start:
            raise ManifestError(f"{where}segment {part!r} has end <= start")
        segs.append((start, end))
    for (s0, e0), (s1, e1) in zip(segs, segs[1:]):
        if s1 < s0:
            raise ManifestError(f"{where}segments not sorted by start")
        if s1 < e0:
            raise ManifestError(f"{where}segments ({s0}-{e0}) and ({s1}-{e1}) overlap")
    return tuple(segs)


def format_segments(segs):
    return ";".join(f"{s!r}-{e!r}" for s, e in segs)


def load_manifest(path):
    """Read a manifest CSV; relative file paths resolve against the manifest's folder."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_COLUMNS:
            raise ManifestError(f"{path}: header must be {','.join(MANIFEST_COLUMNS)}, got {reader.fieldnames}")
        for row_no, row in enumerate(reader, start=1):
            name = (row["species"] or "").strip()
            if not species.is_species(name):
                raise ManifestError(f"row {row_no}: unknown species {name!r}")
            file_path = Path(row["file_path"].strip())
            if not file_path.is_absolute():
                file_path = path.parent / file_path
            entries.append(ManifestEntry(str(file_path), species.label(name), parse_segments(row["segments"], row_no)))
    return entries


def write_manifest(path, entries):
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_COLUMNS)
        for e in entries:
            fp = Path(e.file_path)
            try:
                fp = fp.relative_to(path.parent)
            except ValueError:
                pass
            w.writerow([fp.as_posix(), e.species.name, format_segments(e.keep_segments)])


def read_wav(path):
    """Decode a PCM WAV (16/24-bit, 1-2 channels) to float64 (frames, channels) in [-1, 1]."""
    try:
        with wave.open(str(path), "rb") as wf:
            n_ch, width, rate, n = wf.getnchannels(), wf.getsampwidth(), wf.getframerate(), wf.getnframes()
            raw = wf.readframes(n)
    except FileNotFoundError:
        raise DecodeError(f"{path}: file not found") from None
    except (wave.Error, EOFError) as exc:
        raise DecodeError(f"{path}: unsupported or corrupt WAV ({exc})") from None
    if width not in (2, 3):
        raise DecodeError(f"{path}: unsupported sample width {8 * width} bits")
    if n_ch not in (1, 2):
        raise DecodeError(f"{path}: unsupported channel count {n_ch}")
    if width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    else:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        data = ints.astype(np.float64) / 8388608.0
    if data.size == 0:
        raise DecodeError(f"{path}: no audio frames")
    return data.reshape(-1, n_ch), rate


def write_wav(path, samples, rate, sample_width=2):
    """Write float samples in [-1, 1] (shape (n,) or (n, channels)) as integer PCM."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    x = np.clip(x, -1.0, 1.0)
    if sample_width == 2:
        raw = np.round(x * 32767).astype("<i2").tobytes()
    elif sample_width == 3:
        ints = np.round(x * 8388607).astype(np.int32).ravel()
        u = ints & 0xFFFFFF
        raw = np.stack([u & 0xFF, (u >> 8) & 0xFF, (u >> 16) & 0xFF], axis=1).astype(np.uint8).tobytes()
    else:
        raise ValueError("sample_width must be 2 or 3")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(x.shape[1])
        wf.setsampwidth(sample_width)
        wf.setframerate(int(rate))
        wf.writeframes(raw)


def _segment_bounds(segments, n, rate, path):
    bounds = []
    duration = n / rate
    for start, end in segments:
        # one-sample slack for end times written at the last sample boundary
        if end > duration + 1.0 / rate:
            raise ManifestError(f"{path}: segment end {end}s exceeds file duration {duration:.6f}s")
        bounds.append((int(round(start * rate)), min(n, int(round(end * rate)))))
    return bounds


def decode_segments(entry, target_rate=TARGET_RATE):
    """Standardised clips, one per kept segment (a single clip when keeping everything)."""
    data, rate = read_wav(entry.file_path)
    mono = data.mean(axis=1) if data.shape[1] > 1 else data[:, 0]
    # filter ringing can overshoot full scale by a hair
    x = np.clip(resample(mono, rate, target_rate), -1.0, 1.0)
    if not entry.keep_segments:
        return [AudioClip(x, target_rate, entry.species, entry.source_id)]
    out = []
    for i, (a, b) in enumerate(_segment_bounds(entry.keep_segments, len(x), target_rate, entry.file_path)):
        if b > a:
            out.append(AudioClip(x[a:b], target_rate, entry.species, f"{entry.source_id}#seg{i}"))
    if not out:
        raise DecodeError(f"{entry.file_path}: kept segments contain no samples")
    return out


def decode_and_standardize(entry, target_rate=TARGET_RATE):
    """Decode, downmix, resample and concatenate the kept regions into one clip."""
    parts = decode_segments(entry, target_rate)
    if len(parts) == 1:
        clip = parts[0]
        clip.source_id = entry.source_id
        return clip
    return AudioClip(np.concatenate([p.samples for p in parts]), target_rate, entry.species, entry.source_id)


def load_clips(entries, target_rate=TARGET_RATE, split_segments=False, workers=1):
    """Decode every entry, keeping manifest order."""
    fn = decode_segments if split_segments else decode_and_standardize

    def one(e):
        r = fn(e, target_rate)
        return r if split_segments else [r]

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            nested = list(pool.map(one, entries))
    else:
        nested = [one(e) for e in entries]
    return [c for group in nested for c in group]


def dataset_stats(entries, target_rate=TARGET_RATE):
    """Per-species file count and post-curation duration, in label-index order."""
    stats = {}
    for e in entries:
        try:
            clip = decode_and_standardize(e, target_rate)
        except DecodeError as exc:
            raise DecodeError(f"while computing stats for {e.file_path}: {exc}") from exc
        s = stats.setdefault(e.species, SpeciesStats())
        s.file_count += 1
        s.files.append((e.file_path, len(clip.samples)))
    # integer sample counts keep totals independent of manifest order
    for s in stats.values():
        s.total_duration_s = sum(n for _, n in s.files) / target_rate
    return OrderedDict(sorted(stats.items()))
