"""Sequential network, training loop and checkpoint format."""
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError, TrainingAborted
from .layers import layer_from_spec
from .losses import categorical_cross_entropy, cross_entropy_grad
from .optim import OptimizerState, rmsprop_step


class Network:
    """An ordered stack of layers over a fixed per-example input shape."""

    def __init__(self, layers, input_shape, seed=0, dtype=np.float32):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.dtype = np.dtype(dtype)
        self.seed = seed
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        self.shapes = [shape]
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.build(shape, rng, self.dtype)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
            self.shapes.append(shape)

    @classmethod
    def from_specs(cls, specs, input_shape, seed=0, dtype=np.float32):
        return cls([layer_from_spec(s) for s in specs], input_shape, seed, dtype)

    @property
    def output_shape(self):
        return self.shapes[-1]

    def specs(self):
        return [layer.spec() for layer in self.layers]

    def parameters(self):
        """(layer index, name, array) for every parameter, in declaration order."""
        return [(i, k, layer.params[k]) for i, layer in enumerate(self.layers) for k in sorted(layer.params)]

    def n_parameters(self):
        return sum(p.size for _, _, p in self.parameters())

    def _check_input(self, x):
        x = np.asarray(x)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"input shape {x.shape[1:]} does not match model input {self.input_shape}")
        return np.ascontiguousarray(x, dtype=self.dtype)

    def forward(self, x, mode="eval", rng=None):
        """Run a batch through the stack. ``mode`` is "eval", "train" (fresh dropout masks) or "replay"."""
        a = self._check_input(x)
        for layer in self.layers:
            a = layer.forward(a, mode, rng)
        return a

    def predict(self, x, batch_size=256):
        x = np.asarray(x)
        if len(x) == 0:
            return np.zeros((0,) + self.output_shape, dtype=self.dtype)
        return np.concatenate([self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)])

    def backward_from(self, dout):
        """Backpropagate ``dout`` (gradient w.r.t. the output); fills each layer's ``grads``."""
        g = dout
        for i in range(len(self.layers) - 1, -1, -1):
            g = self.layers[i].backward(g, need_dx=i > 0)

    def gradients(self):
        return [(i, k, self.layers[i].grads[k]) for i, layer in enumerate(self.layers) for k in sorted(layer.params)]

    def first_nonfinite_layer(self, x, mode="replay"):
        a = self._check_input(x)
        for i, layer in enumerate(self.layers):
            a = layer.forward(a, mode)
            if not np.all(np.isfinite(a)):
                return i
        return None

    def activation_pattern(self):
        return [layer.pattern() for layer in self.layers]


def backward(model, inputs, targets, rng=None):
    """Mean batch loss and its gradient for every parameter.

    Dropout draws fresh masks from ``rng`` (eval-mode pass when ``rng`` is None); the
    same masks are used for the backward pass.
    """
    inputs = np.asarray(inputs)
    if len(inputs) == 0:
        raise ValueError("empty batch")
    mode = "train" if rng is not None else "eval"
    out = model.forward(inputs, mode, rng)
    loss = categorical_cross_entropy(out, targets)
    if not np.isfinite(loss):
        raise TrainingAborted("non-finite loss", layer=model.first_nonfinite_layer(inputs, "replay" if rng is not None else "eval"))
    model.backward_from(cross_entropy_grad(out, targets))
    return loss, model.gradients()


def one_hot(indices, n_classes, dtype=np.float32):
    y = np.zeros((len(indices), n_classes), dtype=dtype)
    y[np.arange(len(indices)), np.asarray(indices)] = 1
    return y


@dataclass
class TrainedModel:
    network: Network
    metadata: dict = field(default_factory=dict)

    def predict(self, x, batch_size=256):
        return self.network.predict(x, batch_size)

    @property
    def input_shape(self):
        return self.network.input_shape


def train(network, x, targets, epochs=10, batch_size=32, seed=0, optimizer=None, metadata=None):
    """Mini-batch RMSProp on categorical cross-entropy; shuffles every epoch.

    ``targets`` is a one-hot matrix. The final partial batch is kept. Returns a
    TrainedModel whose metadata carries the per-epoch mean loss curve.
    """
    x = np.asarray(x)
    targets = np.asarray(targets, dtype=network.dtype)
    if len(x) == 0:
        raise ValueError("no training examples")
    if len(x) != len(targets):
        raise ValueError("inputs and targets differ in length")
    state = optimizer if optimizer is not None else OptimizerState()
    rng = np.random.default_rng(seed)
    params = {(i, k): p for i, k, p in network.parameters()}
    curve = []
    for epoch in range(epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for b, start in enumerate(range(0, len(x), batch_size)):
            idx = order[start : start + batch_size]
            try:
                loss, grads = backward(network, x[idx], targets[idx], rng)
            except TrainingAborted as exc:
                raise TrainingAborted("non-finite loss", layer=exc.layer, epoch=epoch, batch=b) from None
            rmsprop_step(params, {(i, k): g for i, k, g in grads}, state)
            total += loss * len(idx)
        curve.append(total / len(x))
    meta = dict(metadata or {})
    meta.update(
        {
            "seed": seed,
            "epochs": epochs,
            "batch_size": batch_size,
            "loss_curve": curve,
            **state.hyperparameters(),
        }
    )
    return TrainedModel(network, meta)


# --- checkpoints ---------------------------------------------------------

CHECKPOINT_MAGIC = b"WBMODEL\0"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, model):
    """Header JSON (layers, input shape, metadata) then float32 LE parameters in declaration order."""
    net = model.network
    header = {
        "version": CHECKPOINT_VERSION,
        "layers": net.specs(),
        "input_shape": list(net.input_shape),
        "metadata": model.metadata,
        "parameters": [[i, k, list(p.shape)] for i, k, p in net.parameters()],
    }
    hdr = json.dumps(header, sort_keys=True, default=_jsonable).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(hdr)))
        fh.write(hdr)
        for _, _, p in net.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float32):
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        version, hlen = struct.unpack("<HI", fh.read(6))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen))
        net = Network.from_specs(header["layers"], header["input_shape"], dtype=dtype)
        for (i, k, p), (hi, hk, shape) in zip(net.parameters(), header["parameters"]):
            if (i, k, list(p.shape)) != (hi, hk, shape):
                raise ValueError(f"{path}: parameter layout mismatch at layer {i} {k}")
            raw = fh.read(4 * p.size)
            p[...] = np.frombuffer(raw, dtype="<f4").reshape(p.shape)
    return TrainedModel(net, header["metadata"])


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
