"""Mel-spectrogram patches in [0, 1]: STFT power, mel projection, dB scaling, patching."""
import json
import logging
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import species
from .errors import ClipTooShort, ConfigError, FilterbankError

log = logging.getLogger(__name__)

DB_FLOOR = -80.0


@dataclass(frozen=True)
class FeatureConfig:
    n_bands: int = 60
    n_frames: int = 40
    hop_length: int = 256
    window_size: int = 1024
    patch_overlap: float = 0.5
    sample_rate: int = 8000
    db_floor: float = DB_FLOOR
    config_id: int = None

    def __post_init__(self):
        if self.n_bands < 1 or self.n_frames < 1:
            raise ConfigError("n_bands and n_frames must be >= 1")
        if self.hop_length < 1 or self.window_size < self.hop_length:
            raise ConfigError(f"need window_size >= hop_length >= 1, got {self.window_size}/{self.hop_length}")
        if not 0 <= self.patch_overlap < 1:
            raise ConfigError(f"patch_overlap must be in [0, 1), got {self.patch_overlap}")
        if self.db_floor >= 0:
            raise ConfigError("db_floor must be negative")

    @property
    def n_bins(self):
        return self.window_size // 2 + 1

    @property
    def patch_stride(self):
        return max(1, int(np.floor(self.n_frames * (1 - self.patch_overlap) + 1e-9)))

    @property
    def input_shape(self):
        return (self.n_bands, self.n_frames, 1)

    def to_dict(self):
        return asdict(self)


# (bands, frames, hop, window) for configurations 1..11
_GRID = {
    1: (20, 40, 128, 1024),
    2: (40, 40, 128, 1024),
    3: (60, 40, 128, 1024),
    4: (80, 40, 128, 1024),
    5: (60, 20, 128, 1024),
    6: (60, 60, 128, 1024),
    7: (60, 40, 64, 1024),
    8: (60, 40, 256, 1024),
    9: (60, 40, 512, 1024),
    10: (60, 40, 256, 512),
    11: (60, 40, 256, 2048),
}
CONFIG_IDS = tuple(_GRID)


def feature_config(config_id):
    """The FeatureConfig for grid row ``config_id`` (1..11)."""
    try:
        b, f, h, w = _GRID[int(config_id)]
    except (KeyError, ValueError, TypeError):
        raise ConfigError(f"unknown feature configuration {config_id!r}; valid ids are 1..{len(_GRID)}") from None
    return FeatureConfig(n_bands=b, n_frames=f, hop_length=h, window_size=w, config_id=int(config_id))


def grid_id(n_bands, n_frames, hop_length, window_size):
    """Grid row with exactly these values, or None."""
    for i, row in _GRID.items():
        if row == (n_bands, n_frames, hop_length, window_size):
            return i
    return None


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def hann(n):
    """Periodic Hann window (the DFT-even variant used for spectral analysis)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def n_stft_frames(n_samples, cfg):
    if n_samples < cfg.window_size:
        return 0
    return (n_samples - cfg.window_size) // cfg.hop_length + 1


def stft_power(clip, cfg):
    """Power spectrogram of shape (window_size//2 + 1, T); no centring or padding."""
    if clip.sample_rate != cfg.sample_rate:
        raise ConfigError(f"clip at {clip.sample_rate} Hz, features expect {cfg.sample_rate} Hz")
    x = np.asarray(clip.samples, dtype=np.float64)
    if len(x) < cfg.window_size:
        raise ClipTooShort(f"{clip.source_id}: {len(x)} samples < window {cfg.window_size}")
    frames = sliding_window_view(x, cfg.window_size)[:: cfg.hop_length]
    spec = np.fft.rfft(frames * hann(cfg.window_size), axis=1)
    return (spec.real**2 + spec.imag**2).T


@dataclass
class MelFilterbank:
    weights: np.ndarray
    band_centers_hz: np.ndarray
    edges_hz: np.ndarray = field(repr=False, default=None)


def build_mel_filterbank(cfg):
    """Triangular HTK-mel filters, each normalised so sum(weights * bin_width_hz) == 1."""
    n_bins = cfg.n_bins
    if cfg.n_bands >= cfg.window_size // 2:
        raise FilterbankError(f"{cfg.n_bands} bands need window_size > {2 * cfg.n_bands}")
    nyquist = cfg.sample_rate / 2.0
    points = mel_to_hz(np.linspace(0.0, hz_to_mel(nyquist), cfg.n_bands + 2))
    freqs = np.arange(n_bins) * cfg.sample_rate / cfg.window_size
    lo, mid, hi = points[:-2, None], points[1:-1, None], points[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(weights.sum(axis=1) <= 0)
    if empty.size:
        raise FilterbankError(
            f"mel bands {empty.tolist()} fall between FFT bins; reduce n_bands or enlarge window_size"
        )
    bin_hz = cfg.sample_rate / cfg.window_size
    weights /= weights.sum(axis=1, keepdims=True) * bin_hz
    return MelFilterbank(weights, points[1:-1].copy(), points)


def db_to_unit(db, floor=DB_FLOOR):
    """Affine map of [floor, 0] dB onto [0, 1]."""
    return np.asarray(db) / -floor + 1.0


def mel_db_normalize(power, fb, db_floor=DB_FLOOR):
    """Project onto the filterbank, convert to dB relative to the global max, map to [0, 1]."""
    mel = fb.weights @ power
    ref = mel.max() if mel.size else 0.0
    if ref <= 0:
        return np.zeros_like(mel)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(mel / ref)
    db = np.maximum(db, db_floor)
    return np.clip(db_to_unit(db, db_floor), 0.0, 1.0)


@dataclass
class FeaturePatch:
    values: np.ndarray
    label: species.SpeciesLabel
    source_id: str
    patch_index: int


def patch_starts(n_total, cfg):
    if n_total < cfg.n_frames:
        return []
    stride = cfg.patch_stride
    return list(range(0, n_total - cfg.n_frames + 1, stride))


def patchify(spec, cfg, label, source_id):
    """Slice an (n_bands, T) spectrogram into overlapping (n_bands, n_frames) patches."""
    n_total = spec.shape[1]
    starts = patch_starts(n_total, cfg)
    if not starts:
        log.warning("%s: %d frames < %d frames per patch; no patches", source_id, n_total, cfg.n_frames)
    return [
        FeaturePatch(np.ascontiguousarray(spec[:, s : s + cfg.n_frames], dtype=np.float32), label, source_id, i)
        for i, s in enumerate(starts)
    ]


def extract_features(clips, cfg, warnings=None):
    """Patches for all clips, in clip order then patch order.

    Clips shorter than one STFT window are skipped; their messages are appended to
    ``warnings`` when a list is given.
    """
    fb = build_mel_filterbank(cfg)
    out = []
    for clip in clips:
        try:
            power = stft_power(clip, cfg)
        except ClipTooShort as exc:
            log.warning("skipping clip: %s", exc)
            if warnings is not None:
                warnings.append(str(exc))
            continue
        out.extend(patchify(mel_db_normalize(power, fb, cfg.db_floor), cfg, clip.species, clip.source_id))
    return out


def stack_patches(patches):
    """(N, n_bands, n_frames, 1) float32 array and int label indices."""
    if not patches:
        return np.zeros((0, 0, 0, 1), np.float32), np.zeros(0, np.int64)
    x = np.stack([p.values for p in patches]).astype(np.float32)[..., None]
    y = np.array([p.label.index for p in patches], dtype=np.int64)
    return x, y


# --- patch cache ---------------------------------------------------------

CACHE_MAGIC = b"WBPATCH\0"
CACHE_VERSION = 1


def save_patch_cache(path, patches, cfg, manifest=None):
    """Header JSON (config, count) + row-major float32 patches + label/source tables."""
    header = {
        "version": CACHE_VERSION,
        "config": cfg.to_dict(),
        "count": len(patches),
        "manifest": str(manifest) if manifest is not None else None,
    }
    tables = {
        "labels": [p.label.name for p in patches],
        "source_ids": [p.source_id for p in patches],
        "patch_index": [p.patch_index for p in patches],
    }
    hdr = json.dumps(header, sort_keys=True).encode()
    tab = json.dumps(tables).encode()
    data = np.stack([p.values for p in patches]).astype("<f4") if patches else np.zeros(0, "<f4")
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<HI", CACHE_VERSION, len(hdr)))
        fh.write(hdr)
        fh.write(data.tobytes())
        fh.write(struct.pack("<Q", len(tab)))
        fh.write(tab)


def load_patch_cache(path):
    with open(path, "rb") as fh:
        if fh.read(len(CACHE_MAGIC)) != CACHE_MAGIC:
            raise ValueError(f"{path}: not a patch cache")
        version, hlen = struct.unpack("<HI", fh.read(6))
        if version != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported patch cache version {version}")
        header = json.loads(fh.read(hlen))
        c = header["config"]
        cfg = FeatureConfig(**c)
        n = header["count"]
        data = np.frombuffer(fh.read(4 * n * cfg.n_bands * cfg.n_frames), dtype="<f4")
        (tlen,) = struct.unpack("<Q", fh.read(8))
        tables = json.loads(fh.read(tlen))
    data = data.reshape(n, cfg.n_bands, cfg.n_frames).astype(np.float32)
    patches = [
        FeaturePatch(data[i].copy(), species.label(name), sid, pi)
        for i, (name, sid, pi) in enumerate(zip(tables["labels"], tables["source_ids"], tables["patch_index"]))
    ]
    return patches, cfg
