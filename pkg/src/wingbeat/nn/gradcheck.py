"""Central finite-difference checks of backprop gradients."""
from dataclasses import dataclass

import numpy as np

from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D
from .losses import categorical_cross_entropy
from .network import Network, backward, one_hot


def random_architecture(rng, max_params=1000, min_params=100):
    """A random float64 network using all five layer kinds, within the parameter budget."""
    while True:
        h, w, c = int(rng.integers(5, 10)), int(rng.integers(5, 10)), int(rng.integers(1, 3))
        acts = ("relu", "sigmoid", "none")
        layers = [Conv2D(int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 4)), acts[rng.integers(3)])]
        layers.append(MaxPool2D(2, 2, int(rng.integers(1, 3))))
        if rng.random() < 0.5:
            layers.append(Conv2D(int(rng.integers(1, 3)), 2, 2, acts[rng.integers(3)]))
        layers.append(Flatten())
        layers.append(Dropout(float(rng.choice([0.0, 0.25, 0.5]))))
        if rng.random() < 0.6:
            layers.append(Dense(int(rng.integers(2, 9)), acts[rng.integers(3)]))
            layers.append(Dropout(float(rng.choice([0.0, 0.3]))))
        n_out = int(rng.integers(2, 5))
        layers.append(Dense(n_out, "softmax" if rng.random() < 0.7 else "sigmoid"))
        try:
            net = Network(layers, (h, w, c), seed=int(rng.integers(2**31)), dtype=np.float64)
        except ValueError:
            continue
        if min_params <= net.n_parameters() <= max_params:
            return net


# Central differences carry an O(h**2) truncation term, up to about 1e-5 at h = 1e-3.
# Below this denominator the check is effectively absolute: |a - n| < 1e-4 * floor.
DENOMINATOR_FLOOR = 1e-3


def relative_error(analytic, numeric, floor=DENOMINATOR_FLOOR):
    """|a - n| / (|a| + |n|), with a floor on the denominator for gradients near zero."""
    a, n = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_skipped: int
    errors: np.ndarray
    analytic: np.ndarray = None
    numeric: np.ndarray = None


def _patterns_equal(a, b):
    for pa, pb in zip(a, b):
        if pa is None:
            continue
        if not np.array_equal(pa, pb):
            return False
    return True


def check_gradients(net, x, targets, rng, n_params=100, h=1e-3, floor=DENOMINATOR_FLOOR):
    """Compare backprop with central differences on ``n_params`` sampled parameters.

    Dropout masks drawn for the backprop pass are replayed for every perturbed
    evaluation. A sample is skipped (and another drawn) when the perturbation flips a
    ReLU or moves a max-pool argmax: the loss is not differentiable across that kink.
    """
    loss, grads = backward(net, x, targets, rng)
    base_pattern = [p.copy() if p is not None else None for p in net.activation_pattern()]
    flat = [(i, k, p, g) for (i, k, p), (_, _, g) in zip(net.parameters(), grads)]
    sizes = np.array([p.size for _, _, p, _ in flat])
    total = int(sizes.sum())
    want = min(n_params, total)
    order = rng.permutation(total)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    analytic, numeric, skipped = [], [], 0

    def replay_loss():
        out = net.forward(x, "replay")
        return categorical_cross_entropy(out, targets), net.activation_pattern()

    for flat_idx in order:
        if len(analytic) >= want:
            break
        j = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        _, _, p, g = flat[j]
        pos = np.unravel_index(flat_idx - offsets[j], p.shape)
        old = p[pos]
        p[pos] = old + h
        lp, pat_p = replay_loss()
        same = _patterns_equal(base_pattern, pat_p)
        p[pos] = old - h
        lm, pat_m = replay_loss()
        same = same and _patterns_equal(base_pattern, pat_m)
        p[pos] = old
        if not same:
            skipped += 1
            continue
        numeric.append((lp - lm) / (2 * h))
        analytic.append(float(g[pos]))
    analytic, numeric = np.array(analytic), np.array(numeric)
    errors = relative_error(analytic, numeric, floor)
    return GradCheckResult(float(errors.max()) if errors.size else 0.0, len(errors), skipped, errors, analytic, numeric)


def random_batch(net, rng, n=4):
    x = rng.normal(size=(n,) + net.input_shape)
    n_out = net.output_shape[0]
    return x, one_hot(rng.integers(0, n_out, n), n_out, dtype=np.float64)
