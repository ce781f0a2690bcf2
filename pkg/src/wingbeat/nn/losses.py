import numpy as np

PROB_FLOOR = 1e-12


def categorical_cross_entropy(predicted, target):
    """-sum(y * log(y_hat)) per row, mean over rows for a batch.

    Predictions are rescaled to sum to one (a no-op for softmax outputs; it makes
    independent sigmoid units usable with this loss) and clamped to [1e-12, 1].
    """
    p = np.asarray(predicted, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    s = p.sum(axis=-1, keepdims=True)
    p = p / np.where(s > 0, s, 1)
    per_row = -(y * np.log(np.clip(p, PROB_FLOOR, 1.0))).sum(axis=-1)
    return float(per_row.mean()) if per_row.ndim else float(per_row)


def cross_entropy_grad(predicted, target):
    """Gradient of the batch-mean loss above with respect to the raw predictions."""
    p = np.asarray(predicted)
    y = np.asarray(target, dtype=p.dtype)
    s = p.sum(axis=-1, keepdims=True)
    s = np.where(s > 0, s, 1)
    q = p / s
    live = q > PROB_FLOOR
    g = np.where(live, -y / np.where(live, p, 1), 0) + (y * live).sum(axis=-1, keepdims=True) / s
    return (g / p.shape[0]).astype(p.dtype, copy=False)
