"""Run configuration: ``key = value`` text files and the values recorded in every output."""
from dataclasses import asdict, dataclass, fields

from . import features, models, resample
from .errors import ConfigError
from .evaluation import TrainParams

STRATEGIES = ("binary", "multiclass", "ensemble")
DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95)


@dataclass
class RunConfig:
    manifest: str = None
    config_id: int = 8
    n_bands: int = None
    n_frames: int = None
    hop_length: int = None
    window_size: int = None
    strategy: str = "binary"
    thresholds: tuple = DEFAULT_THRESHOLDS
    epochs: int = 10
    batch_size: int = 32
    folds: int = 10
    seed: int = 0
    out: str = "runs/out"
    group_by_file: bool = False
    split_segments: bool = False
    binary_output: str = "sigmoid"
    dropout_rate: float = models.DROPOUT_RATE
    learning_rate: float = 0.001
    rho: float = 0.9
    epsilon: float = 1e-7
    negative: str = "Anopheles_freeborni"
    config_ids: tuple = features.CONFIG_IDS

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        self.thresholds = tuple(float(t) for t in self.thresholds)
        self.config_ids = tuple(int(c) for c in self.config_ids)

    def feature_config(self):
        explicit = {k: getattr(self, k) for k in ("n_bands", "n_frames", "hop_length", "window_size")}
        if all(v is None for v in explicit.values()):
            return features.feature_config(self.config_id)
        base = features.feature_config(self.config_id) if self.config_id else features.FeatureConfig()
        merged = {k: (v if v is not None else getattr(base, k)) for k, v in explicit.items()}
        return features.FeatureConfig(**merged, config_id=features.grid_id(**merged))

    def train_params(self):
        return TrainParams(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            rho=self.rho,
            epsilon=self.epsilon,
            dropout_rate=self.dropout_rate,
            binary_output=self.binary_output,
        )

    def as_dict(self):
        d = asdict(self)
        d["thresholds"] = list(self.thresholds)
        d["config_ids"] = list(self.config_ids)
        return d


def design_decisions(cfg=None):
    """Fixed pipeline choices written into every report for provenance."""
    cfg = cfg or RunConfig()
    return {
        "mel_scale": "htk: mel = 2595*log10(1 + f/700), triangles normalised to unit area over Hz",
        "stft_window": "hann (periodic), no centring",
        "db_reference": "per-spectrogram max, floor -80 dB, x/80 + 1",
        "patch_overlap": "0.5 between consecutive patches",
        "orientation": "mel bands on the first image axis, frames on the second",
        "resampler": f"kaiser-windowed sinc, beta={resample.KAISER_BETA}, {resample.TAPS_PER_BRANCH} taps per branch, rolloff {resample.ROLLOFF}",
        "segments": "split" if cfg.split_segments else "concatenated",
        "dropout": f"rate {cfg.dropout_rate} after the first dense layer (binary) / before the classifier (multiclass)",
        "binary_output": f"two {cfg.binary_output} units, categorical cross-entropy, ties -> negative",
        "loss": "categorical cross-entropy, predictions renormalised to sum 1 and clamped at 1e-12",
        "optimizer": {"name": "rmsprop", "learning_rate": cfg.learning_rate, "rho": cfg.rho, "epsilon": cfg.epsilon},
        "initialisation": "glorot uniform weights, zero biases",
        "fold_unit": "source file" if cfg.group_by_file else "patch",
        "std": "sample (n-1)",
        "empty_denominator": "precision/recall 0",
        "vote_rule": "positive iff votes >= ceil(threshold * n_voters)",
    }


def _coerce(name, text, typ):
    text = text.strip()
    try:
        if name in ("thresholds",):
            return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())
        if name in ("config_ids",):
            return tuple(int(t) for t in text.replace(";", ",").split(",") if t.strip())
        if text.lower() in ("", "none", "null") and name in ("n_bands", "n_frames", "hop_length", "window_size", "manifest"):
            return None
        if typ is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ in (int, float):
            return typ(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


_TYPES = {
    "config_id": int,
    "n_bands": int,
    "n_frames": int,
    "hop_length": int,
    "window_size": int,
    "epochs": int,
    "batch_size": int,
    "folds": int,
    "seed": int,
    "group_by_file": bool,
    "split_segments": bool,
    "dropout_rate": float,
    "learning_rate": float,
    "rho": float,
    "epsilon": float,
}


def parse_run_config(text):
    """Parse ``key = value`` lines (``#`` starts a comment) into keyword arguments."""
    names = {f.name for f in fields(RunConfig)}
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"line {n}: expected 'key = value'")
        if key not in names:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        values[key] = _coerce(key, value, _TYPES.get(key, str))
    return values


def load_run_config(path, **overrides):
    with open(path, encoding="utf-8") as fh:
        values = parse_run_config(fh.read())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def format_run_config(cfg):
    lines = []
    for k, v in cfg.as_dict().items():
        if isinstance(v, list):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k} = {'' if v is None else v}")
    return "\n".join(lines) + "\n"


__all__ = ["RunConfig", "design_decisions", "load_run_config", "parse_run_config", "format_run_config"]
