"""Feed-forward ReLU networks: NNet file I/O, evaluation, SGD training, accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RELU = "relu"
IDENTITY = "identity"


class NNetFormatError(ValueError):
    """Raised when an NNet file cannot be parsed; message carries the line number."""


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass(frozen=True)
class Layer:
    """One affine layer: y = W x + b followed by an elementwise activation."""

    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = RELU

    def __post_init__(self):
        if self.activation not in (RELU, IDENTITY):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weights must be 2-d and bias 1-d")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} does not match "
                f"weight rows {self.weights.shape[0]}"
            )


class Network:
    """A layered affine+ReLU function. Treat instances as immutable values.

    Hidden layers use ReLU; only the last layer may use the identity
    activation. Normalization constants (means/ranges per input, plus one
    trailing entry for the output) are carried along when loaded from an
    NNet file but applied only on request.
    """

    def __init__(self, layers, mins=None, maxes=None, means=None, ranges=None):
        layers = [
            ly if isinstance(ly, Layer) else Layer(np.asarray(ly[0], float), np.asarray(ly[1], float), ly[2])
            for ly in layers
        ]
        if not layers:
            raise ValueError("network needs at least one layer")
        for k, ly in enumerate(layers[:-1]):
            if ly.activation != RELU:
                raise ValueError(f"hidden layer {k} must use ReLU")
        for k in range(1, len(layers)):
            prev_out = layers[k - 1].weights.shape[0]
            cur_in = layers[k].weights.shape[1]
            if prev_out != cur_in:
                raise ValueError(
                    f"layer {k} expects {cur_in} inputs but layer {k - 1} produces {prev_out}"
                )
        self.layers = tuple(layers)
        self.input_dim = layers[0].weights.shape[1]
        self.output_dim = layers[-1].weights.shape[0]
        self.mins = None if mins is None else np.asarray(mins, float)
        self.maxes = None if maxes is None else np.asarray(maxes, float)
        self.means = None if means is None else np.asarray(means, float)
        self.ranges = None if ranges is None else np.asarray(ranges, float)

    @property
    def num_layers(self):
        return len(self.layers)

    def layer_sizes(self):
        return [self.input_dim] + [ly.weights.shape[0] for ly in self.layers]

    def parameter_count(self):
        return sum(ly.weights.size + ly.bias.size for ly in self.layers)

    def normalize(self, x):
        """Map raw inputs into the network's native (normalized) input space."""
        if self.means is None or self.ranges is None:
            raise ValueError("network carries no normalization constants")
        x = np.asarray(x, float)
        return (x - self.means[: self.input_dim]) / self.ranges[: self.input_dim]

    def with_layers(self, layers):
        """Same normalization constants, new weights (used by training)."""
        return Network(layers, self.mins, self.maxes, self.means, self.ranges)


@dataclass
class LabeledDataset:
    """Input/target pairs; the class label of a pair is argmax of its target."""

    inputs: np.ndarray  # (n, input_dim)
    targets: np.ndarray  # (n, output_dim)
    labels: np.ndarray | None = None  # (n,) ints

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, float)
        self.targets = np.asarray(self.targets, float)
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-d arrays")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must pair up row by row")
        if self.labels is None:
            self.labels = np.argmax(self.targets, axis=1)
        else:
            self.labels = np.asarray(self.labels, int)
            if self.labels.shape != (self.inputs.shape[0],):
                raise ValueError("labels must be one int per pair")

    def __len__(self):
        return self.inputs.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs_per_iteration: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs_per_iteration < 1:
            raise ValueError("epochs_per_iteration must be at least 1")


def _parse_numbers(line, lineno, kind=float):
    toks = [t for t in line.strip().split(",") if t.strip() != ""]
    try:
        return [kind(t) for t in toks]
    except ValueError:
        raise NNetFormatError(f"line {lineno}: non-numeric token in {line.strip()!r}") from None


def load_nnet(path):
    """Load a network from an NNet text file.

    Layout: '//' comment lines; a counts line (num_layers, input_dim,
    output_dim, max_layer_size); a layer-sizes line; a symmetric flag;
    input mins, maxes, means, ranges lines; then per layer the weight rows
    (row-major) followed by one bias value per row, all comma-separated.
    """
    with open(path) as f:
        raw = f.readlines()

    lineno = 0
    n = len(raw)

    def next_line():
        nonlocal lineno
        while lineno < n:
            lineno += 1
            text = raw[lineno - 1]
            if text.startswith("//") or text.strip() == "":
                continue
            return text
        raise NNetFormatError(f"line {n}: file ended early")

    counts = _parse_numbers(next_line(), lineno, int)
    if len(counts) < 3:
        raise NNetFormatError(f"line {lineno}: header needs at least 3 counts, got {len(counts)}")
    num_layers, input_dim, output_dim = counts[0], counts[1], counts[2]
    if num_layers < 1 or input_dim < 1 or output_dim < 1:
        raise NNetFormatError(f"line {lineno}: non-positive count in header")

    sizes = _parse_numbers(next_line(), lineno, int)
    if len(sizes) != num_layers + 1:
        raise NNetFormatError(
            f"line {lineno}: expected {num_layers + 1} layer sizes, got {len(sizes)}"
        )
    if sizes[0] != input_dim or sizes[-1] != output_dim:
        raise NNetFormatError(f"line {lineno}: layer sizes disagree with header counts")

    next_line()  # symmetric flag, unused
    mins = _parse_numbers(next_line(), lineno)
    maxes = _parse_numbers(next_line(), lineno)
    means = _parse_numbers(next_line(), lineno)
    ranges = _parse_numbers(next_line(), lineno)
    for name, vals, want in (
        ("mins", mins, input_dim),
        ("maxes", maxes, input_dim),
        ("means", means, input_dim + 1),
        ("ranges", ranges, input_dim + 1),
    ):
        if len(vals) != want:
            raise NNetFormatError(f"line {lineno}: expected {want} {name} values, got {len(vals)}")

    layers = []
    for k in range(num_layers):
        rows, cols = sizes[k + 1], sizes[k]
        w = np.empty((rows, cols))
        for r in range(rows):
            vals = _parse_numbers(next_line(), lineno)
            if len(vals) != cols:
                raise NNetFormatError(
                    f"line {lineno}: layer {k} weight row {r} has {len(vals)} values, expected {cols}"
                )
            w[r] = vals
        b = np.empty(rows)
        for r in range(rows):
            vals = _parse_numbers(next_line(), lineno)
            if len(vals) != 1:
                raise NNetFormatError(
                    f"line {lineno}: layer {k} bias row {r} has {len(vals)} values, expected 1"
                )
            b[r] = vals[0]
        act = IDENTITY if k == num_layers - 1 else RELU
        layers.append(Layer(w, b, act))

    return Network(layers, mins, maxes, means, ranges)


def save_nnet(net, path):
    """Write a network in NNet format with round-trip-exact decimals."""
    sizes = net.layer_sizes()
    input_dim = net.input_dim
    mins = net.mins if net.mins is not None else np.zeros(input_dim)
    maxes = net.maxes if net.maxes is not None else np.ones(input_dim)
    means = net.means if net.means is not None else np.zeros(input_dim + 1)
    ranges = net.ranges if net.ranges is not None else np.ones(input_dim + 1)

    def fmt(vals):
        return ",".join(repr(float(v)) for v in vals) + ","

    lines = ["// relurepair network"]
    lines.append(",".join(str(int(v)) for v in (net.num_layers, input_dim, net.output_dim, max(sizes))) + ",")
    lines.append(",".join(str(int(s)) for s in sizes) + ",")
    lines.append("0,")
    lines.append(fmt(mins))
    lines.append(fmt(maxes))
    lines.append(fmt(means))
    lines.append(fmt(ranges))
    for ly in net.layers:
        for row in ly.weights:
            lines.append(fmt(row))
        for v in ly.bias:
            lines.append(fmt([v]))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def forward(net, x, normalize=False):
    """Evaluate the network on one input vector."""
    x = np.asarray(x, float)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({net.input_dim},)")
    if normalize:
        x = net.normalize(x)
    for ly in net.layers:
        x = ly.weights @ x + ly.bias
        if ly.activation == RELU:
            x = np.maximum(x, 0.0)
    return x


def forward_batch(net, xs, normalize=False):
    """Evaluate the network on rows of a (n, input_dim) array."""
    xs = np.asarray(xs, float)
    if xs.ndim != 2 or xs.shape[1] != net.input_dim:
        raise ValueError(f"inputs have shape {xs.shape}, expected (n, {net.input_dim})")
    if normalize:
        xs = (xs - net.means[: net.input_dim]) / net.ranges[: net.input_dim]
    for ly in net.layers:
        xs = xs @ ly.weights.T + ly.bias
        if ly.activation == RELU:
            xs = np.maximum(xs, 0.0)
    return xs


def mse_loss(net, xs, ys):
    """Mean squared error over all output entries of a batch."""
    pred = forward_batch(net, xs)
    return float(np.mean((pred - ys) ** 2))


def _loss_gradients(layers, xs, ys):
    """Backprop the MSE loss; returns (loss, [(dW, db) per layer])."""
    acts = [xs]
    pre = []
    a = xs
    for ly in layers:
        z = a @ ly.weights.T + ly.bias
        pre.append(z)
        a = np.maximum(z, 0.0) if ly.activation == RELU else z
        acts.append(a)
    diff = acts[-1] - ys
    loss = float(np.mean(diff**2))
    # d loss / d pred for loss = mean over batch*out entries
    delta = 2.0 * diff / diff.size
    grads = [None] * len(layers)
    for k in range(len(layers) - 1, -1, -1):
        if layers[k].activation == RELU:
            delta = delta * (pre[k] > 0)
        grads[k] = (delta.T @ acts[k], delta.sum(axis=0))
        if k > 0:
            delta = delta @ layers[k].weights
    return loss, grads


def train(net, data, cfg):
    """Minibatch SGD on MSE loss; returns a new network, same architecture.

    With a fixed seed the shuffling and updates are bit-reproducible.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    layers = list(net.layers)
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    for _ in range(cfg.epochs_per_iteration):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = _loss_gradients(layers, data.inputs[idx], data.targets[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at batch starting index {start}"
                )
            layers = [
                Layer(
                    ly.weights - cfg.learning_rate * dw,
                    ly.bias - cfg.learning_rate * db,
                    ly.activation,
                )
                for ly, (dw, db) in zip(layers, grads)
            ]
    return net.with_layers(layers)


def accuracy(net, data):
    """Fraction of pairs whose predicted argmax equals the label (ties -> lowest index)."""
    if len(data) == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    pred = np.argmax(forward_batch(net, data.inputs), axis=1)
    return float(np.mean(pred == data.labels))
