"""Binary, multiclass and one-vs-one voting-ensemble classifiers."""
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import species
from .errors import ConfigError, ShapeError
from .nn import Network, TrainedModel, load_checkpoint, save_checkpoint
from .nn.layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D

POSITIVE, NEGATIVE = "positive", "negative"
# output unit 0 scores the target species, unit 1 everything else
POSITIVE_UNIT, NEGATIVE_UNIT = 0, 1
DROPOUT_RATE = 0.5


def binary_layers(output_activation="sigmoid", dropout_rate=DROPOUT_RATE):
    return [
        Conv2D(32, 3, 3, "relu"),
        MaxPool2D(2, 2, 1),
        Conv2D(64, 3, 3, "relu"),
        MaxPool2D(2, 2, 1),
        Conv2D(64, 3, 3, "relu"),
        Flatten(),
        Dense(256, "relu"),
        Dropout(dropout_rate),
        Dense(2, output_activation),
    ]


def multiclass_layers(n_classes=species.N_CLASSES, dropout_rate=DROPOUT_RATE):
    return [
        Conv2D(32, 20, 5, "relu"),
        MaxPool2D(2, 2, 1),
        Conv2D(32, 8, 4, "relu"),
        MaxPool2D(2, 2, 1),
        Flatten(),
        Dropout(dropout_rate),
        Dense(n_classes, "softmax"),
    ]


def build_binary(input_shape, seed=0, output_activation="sigmoid", dropout_rate=DROPOUT_RATE, dtype=np.float32):
    """Bands run along the first image axis, frames along the second."""
    if output_activation not in ("sigmoid", "softmax"):
        raise ConfigError(f"binary output activation must be sigmoid or softmax, got {output_activation!r}")
    return Network(binary_layers(output_activation, dropout_rate), input_shape, seed, dtype)


def build_multiclass(input_shape, seed=0, dropout_rate=DROPOUT_RATE, dtype=np.float32):
    return Network(multiclass_layers(dropout_rate=dropout_rate), input_shape, seed, dtype)


def _as_batch(model, patch):
    x = np.asarray(patch.values if hasattr(patch, "values") else patch, dtype=np.float32)
    if x.ndim == 2:
        x = x[..., None]
    if x.shape != model.input_shape:
        raise ShapeError(f"patch shape {x.shape} does not match model input {model.input_shape}")
    return x[None]


def binary_decision(scores):
    """Label per row of (N, 2) scores; exact ties go to the negative class."""
    scores = np.asarray(scores)
    return scores[..., POSITIVE_UNIT] > scores[..., NEGATIVE_UNIT]


def predict_binary(model, patch):
    scores = model.predict(_as_batch(model, patch))[0]
    return (POSITIVE if binary_decision(scores) else NEGATIVE), tuple(float(s) for s in scores)


def predict_multiclass(model, patch):
    probs = model.predict(_as_batch(model, patch))[0].astype(np.float64)
    # argmax picks the lowest index among ties
    return species.label(int(np.argmax(probs))), probs


def vote_threshold_to_min_votes(threshold, n_voters):
    if not 0 < threshold <= 1:
        raise ConfigError(f"vote threshold must be in (0, 1], got {threshold}")
    if n_voters < 1:
        raise ConfigError("need at least one voter")
    # rounding guards against 0.7 * 10 = 7.000000000000001
    return math.ceil(round(threshold * n_voters, 9))


def ensemble_decision(positive_votes, threshold, n_voters):
    return np.asarray(positive_votes) >= vote_threshold_to_min_votes(threshold, n_voters)


@dataclass
class EnsembleModel:
    """One binary base model per negative species, combined by thresholded voting."""

    base_models: dict
    vote_threshold: float = 0.9
    negatives: tuple = field(default_factory=lambda: tuple(s.name for s in species.NON_TARGET))

    def __post_init__(self):
        self.negatives = tuple(species.label(n).name for n in self.negatives)
        if len(set(self.negatives)) != len(self.negatives):
            raise ConfigError("ensemble negative species must be distinct")
        if species.TARGET in self.negatives:
            raise ConfigError("the target species cannot be a negative class")
        vote_threshold_to_min_votes(self.vote_threshold, max(1, len(self.negatives)))

    @property
    def n_voters(self):
        return len(self.negatives)

    def check(self):
        missing = [n for n in self.negatives if n not in self.base_models]
        if missing:
            raise ConfigError(f"ensemble is missing base models for {missing}")
        extra = sorted(set(self.base_models) - set(self.negatives))
        if extra:
            raise ConfigError(f"ensemble has base models for undeclared species {extra}")

    def votes(self, x):
        """(N, n_voters) boolean matrix of positive votes, columns in ``negatives`` order."""
        self.check()
        x = np.asarray(x, dtype=np.float32)
        if x.ndim == 3:
            x = x[..., None]
        return np.stack([binary_decision(self.base_models[n].predict(x)) for n in self.negatives], axis=1)


def predict_ensemble(ensemble, patch):
    ensemble.check()
    first = ensemble.base_models[ensemble.negatives[0]]
    x = _as_batch(first, patch)
    positive_votes = int(ensemble.votes(x)[0].sum())
    label = ensemble_decision(positive_votes, ensemble.vote_threshold, ensemble.n_voters)
    return (POSITIVE if label else NEGATIVE), positive_votes


# --- ensemble manifest -----------------------------------------------------

ENSEMBLE_HEADER = "wingbeat-ensemble 1"


def save_ensemble(directory, ensemble):
    """Write one checkpoint per base model plus ``ensemble.txt`` listing them."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [ENSEMBLE_HEADER, f"threshold = {ensemble.vote_threshold!r}"]
    for neg in ensemble.negatives:
        name = f"base_{neg}.wbm"
        save_checkpoint(directory / name, ensemble.base_models[neg])
        lines.append(f"{neg} = {name}")
    path = directory / "ensemble.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_ensemble(path):
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or lines[0] != ENSEMBLE_HEADER:
        raise ConfigError(f"{path}: missing '{ENSEMBLE_HEADER}' header")
    threshold, models, order = None, {}, []
    for ln in lines[1:]:
        key, sep, value = (s.strip() for s in ln.partition("="))
        if not sep:
            raise ConfigError(f"{path}: malformed line {ln!r}")
        if key == "threshold":
            threshold = float(value)
        else:
            if not species.is_species(key):
                raise ConfigError(f"{path}: unknown species {key!r}")
            models[key] = load_checkpoint(path.parent / value)
            order.append(key)
    if threshold is None:
        raise ConfigError(f"{path}: no threshold given")
    return EnsembleModel(models, threshold, tuple(order))


def architecture_shapes(network):
    """Per-layer output shapes, input first."""
    return list(network.shapes)


__all__ = [
    "EnsembleModel",
    "TrainedModel",
    "build_binary",
    "build_multiclass",
    "predict_binary",
    "predict_ensemble",
    "predict_multiclass",
    "vote_threshold_to_min_votes",
]
