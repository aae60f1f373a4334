"""Stacked LSTM regressor trained from scratch on windowed series.

Three recurrent layers feed a linear head. Each layer uses the standard
cell (sigmoid input/forget/output gates, tanh candidate and cell output);
a layer's output sequence passes through ReLU before the next layer, and
the last layer's final hidden state goes through inverted dropout
(training mode only) into the head. Training is mini-batch BPTT with the
Adam update rule; all randomness flows from the config seed, so runs are
reproducible.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

TARGETS = ("return", "realized-vol")

_CONTAINER_MAGIC = "vollab-lstm"
_CONTAINER_VERSION = 1


class LstmError(ValueError):
    """Raised for invalid configurations, shapes, or failed training."""


@dataclass(frozen=True)
class LstmConfig:
    window_len: int = 5
    layer_sizes: tuple = (512, 256, 128)
    dropout: float = 0.2
    batch_size: int = 64
    epochs: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    target: str = "return"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if self.window_len < 1:
            raise LstmError("window_len must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise LstmError("dropout must lie in [0, 1)")
        if any(s < 1 for s in self.layer_sizes) or not self.layer_sizes:
            raise LstmError("layer sizes must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise LstmError("batch_size must be >= 1 and epochs >= 0")
        if self.target not in TARGETS:
            raise LstmError(f"unknown target {self.target!r}")


@dataclass(frozen=True)
class WindowedDataset:
    """Sliding windows: inputs[i] = series[i..i+W-1], targets[i] = series[i+W]."""

    inputs: np.ndarray
    targets: np.ndarray
    window_len: int
    scale_min: float | None = None
    scale_max: float | None = None
    dates: tuple | None = None

    @property
    def num_samples(self) -> int:
        return self.inputs.shape[0]


@dataclass
class TrainedLstm:
    """Weights, config, scaler metadata, and the per-epoch loss history."""

    config: LstmConfig
    layers: list
    head_w: np.ndarray
    head_b: np.ndarray
    scale_min: float | None = None
    scale_max: float | None = None
    loss_history: list = field(default_factory=list)


def scale_fit_apply(train_values, other_values) -> tuple:
    """Min-max scale both partitions using the train min/max only."""
    train_values = np.asarray(train_values, dtype=float)
    other_values = np.asarray(other_values, dtype=float)
    if train_values.size == 0:
        raise LstmError("training values are empty")
    mn = float(np.min(train_values))
    mx = float(np.max(train_values))
    if mx <= mn:
        raise LstmError("training values are constant; min-max scaling undefined")
    span = mx - mn
    return (train_values - mn) / span, (other_values - mn) / span, (mn, mx)


def invert_scale(values, mn: float, mx: float):
    return np.asarray(values, dtype=float) * (mx - mn) + mn


def build_windows(series, window_len: int, scaling: tuple | None = None) -> WindowedDataset:
    """Slide a stride-1 window over a dated series (ReturnSeries or VolSeries).

    With `scaling` = (min, max), values are min-max transformed first and
    the pair is recorded on the dataset.
    """
    values = np.asarray(series.values, dtype=float)
    n = values.size
    if n <= window_len:
        raise LstmError(f"series length {n} must exceed window_len {window_len}")
    mn = mx = None
    if scaling is not None:
        mn, mx = float(scaling[0]), float(scaling[1])
        values = (values - mn) / (mx - mn)
    num = n - window_len
    inputs = np.empty((num, window_len))
    for i in range(num):
        inputs[i] = values[i : i + window_len]
    return WindowedDataset(
        inputs=inputs,
        targets=values[window_len:].copy(),
        window_len=window_len,
        scale_min=mn,
        scale_max=mx,
        dates=tuple(series.dates[window_len:]),
    )


def build_scaled_windows(train_series, test_series, window_len: int) -> tuple:
    """Window both partitions after min-max scaling fitted on the train values."""
    _, _, (mn, mx) = scale_fit_apply(train_series.values, test_series.values)
    train_ds = build_windows(train_series, window_len, scaling=(mn, mx))
    test_ds = build_windows(test_series, window_len, scaling=(mn, mx))
    return train_ds, test_ds


def _xavier_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init(config: LstmConfig, seed: int) -> TrainedLstm:
    """Fresh model: uniform Xavier gate weights, forget bias 1, other biases 0."""
    rng = np.random.default_rng(seed)
    layers = []
    n_in = 1
    for size in config.layer_sizes:
        bound = _xavier_bound(n_in, size)
        wx = rng.uniform(-bound, bound, size=(n_in, 4 * size))
        wh = rng.uniform(-bound, bound, size=(size, 4 * size))
        b = np.zeros(4 * size)
        b[size : 2 * size] = 1.0  # forget gate
        layers.append({"wx": wx, "wh": wh, "b": b})
        n_in = size
    bound = _xavier_bound(n_in, 1)
    head_w = rng.uniform(-bound, bound, size=(n_in, 1))
    head_b = np.zeros(1)
    return TrainedLstm(config=config, layers=layers, head_w=head_w, head_b=head_b)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def forward(
    model: TrainedLstm,
    inputs: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple:
    """Run the network over a batch of windows; returns (predictions, cache).

    Predictions are in the network's own (scaled) space; `predict` applies
    the inverse scaling. Training mode applies inverted dropout to the
    pre-head activation and requires an rng when dropout > 0.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != model.config.window_len:
        raise LstmError(
            f"inputs must have shape (n, {model.config.window_len}), got {inputs.shape}"
        )
    n, steps = inputs.shape
    seq = inputs[:, :, None]  # (n, steps, features=1)
    layer_caches = []
    for layer in model.layers:
        size = layer["b"].size // 4
        wx, wh, b = layer["wx"], layer["wh"], layer["b"]
        h = np.zeros((n, size))
        c = np.zeros((n, size))
        gate_i = np.empty((n, steps, size))
        gate_f = np.empty((n, steps, size))
        gate_g = np.empty((n, steps, size))
        gate_o = np.empty((n, steps, size))
        cells = np.empty((n, steps, size))
        hidden = np.empty((n, steps, size))
        for t in range(steps):
            a = seq[:, t] @ wx + h @ wh + b
            i_t = _sigmoid(a[:, :size])
            f_t = _sigmoid(a[:, size : 2 * size])
            g_t = np.tanh(a[:, 2 * size : 3 * size])
            o_t = _sigmoid(a[:, 3 * size :])
            c = f_t * c + i_t * g_t
            h = o_t * np.tanh(c)
            gate_i[:, t] = i_t
            gate_f[:, t] = f_t
            gate_g[:, t] = g_t
            gate_o[:, t] = o_t
            cells[:, t] = c
            hidden[:, t] = h
        layer_caches.append(
            {
                "x": seq,
                "i": gate_i,
                "f": gate_f,
                "g": gate_g,
                "o": gate_o,
                "c": cells,
                "h": hidden,
            }
        )
        seq = np.maximum(hidden, 0.0)  # ReLU into the next layer

    last_relu = seq[:, -1]  # ReLU of the final hidden state
    dropout = model.config.dropout
    if training and dropout > 0.0:
        if rng is None:
            raise LstmError("training-mode forward with dropout needs an rng")
        mask = (rng.random(last_relu.shape) >= dropout) / (1.0 - dropout)
    else:
        mask = np.ones_like(last_relu)
    pre_head = last_relu * mask
    preds = (pre_head @ model.head_w + model.head_b).ravel()
    cache = {
        "layers": layer_caches,
        "dropout_mask": mask,
        "pre_head": pre_head,
        "n": n,
        "steps": steps,
    }
    return preds, cache


def _zero_grads(model: TrainedLstm) -> dict:
    grads = {
        "layers": [
            {"wx": np.zeros_like(l["wx"]), "wh": np.zeros_like(l["wh"]), "b": np.zeros_like(l["b"])}
            for l in model.layers
        ],
        "head_w": np.zeros_like(model.head_w),
        "head_b": np.zeros_like(model.head_b),
    }
    return grads


def backward(model: TrainedLstm, cache: dict, dpreds: np.ndarray) -> dict:
    """BPTT gradient of the loss given d(loss)/d(predictions)."""
    grads = _zero_grads(model)
    dpred_col = np.asarray(dpreds, dtype=float)[:, None]
    grads["head_w"][:] = cache["pre_head"].T @ dpred_col
    grads["head_b"][:] = dpred_col.sum(axis=0)
    dlast = (dpred_col @ model.head_w.T) * cache["dropout_mask"]

    steps = cache["steps"]
    # gradient wrt each layer's post-ReLU output sequence, top-down
    dout_seq = None
    for li in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[li]
        lc = cache["layers"][li]
        size = layer["b"].size // 4
        hidden = lc["h"]
        if dout_seq is None:
            dout_seq = np.zeros_like(hidden)
            dout_seq[:, -1] = dlast
        draw = dout_seq * (hidden > 0.0)  # back through ReLU

        g = grads["layers"][li]
        dh_next = np.zeros((cache["n"], size))
        dc_next = np.zeros((cache["n"], size))
        dx_seq = np.empty_like(lc["x"])
        for t in range(steps - 1, -1, -1):
            i_t, f_t, g_t, o_t = lc["i"][:, t], lc["f"][:, t], lc["g"][:, t], lc["o"][:, t]
            c_t = lc["c"][:, t]
            c_prev = lc["c"][:, t - 1] if t > 0 else np.zeros_like(c_t)
            h_prev = hidden[:, t - 1] if t > 0 else np.zeros((cache["n"], size))
            tanh_c = np.tanh(c_t)

            dh = draw[:, t] + dh_next
            do = dh * tanh_c
            dc = dc_next + dh * o_t * (1.0 - tanh_c * tanh_c)
            df = dc * c_prev
            di = dc * g_t
            dg = dc * i_t
            dc_next = dc * f_t

            da = np.concatenate(
                [
                    di * i_t * (1.0 - i_t),
                    df * f_t * (1.0 - f_t),
                    dg * (1.0 - g_t * g_t),
                    do * o_t * (1.0 - o_t),
                ],
                axis=1,
            )
            g["wx"] += lc["x"][:, t].T @ da
            g["wh"] += h_prev.T @ da
            g["b"] += da.sum(axis=0)
            dh_next = da @ layer["wh"].T
            dx_seq[:, t] = da @ layer["wx"].T
        dout_seq = dx_seq
    return grads


def mse(preds: np.ndarray, targets: np.ndarray) -> float:
    err = np.asarray(preds) - np.asarray(targets)
    return float(np.mean(err * err))


def _param_pairs(model: TrainedLstm, grads: dict | None = None):
    """Yield (name, weights, grad) in a fixed order."""
    for li, layer in enumerate(model.layers):
        for key in ("wx", "wh", "b"):
            yield f"layer{li}.{key}", layer[key], None if grads is None else grads["layers"][li][key]
    yield "head.w", model.head_w, None if grads is None else grads["head_w"]
    yield "head.b", model.head_b, None if grads is None else grads["head_b"]


def train(
    model: TrainedLstm,
    data: WindowedDataset,
    validation: WindowedDataset | None = None,
) -> TrainedLstm:
    """Mini-batch Adam training with seeded shuffling; mutates and returns model.

    The shuffle/dropout generator is seeded at config.seed + 1. Each epoch
    records the batch-weighted training MSE and (when a validation set is
    given) the evaluation-mode validation MSE.
    """
    cfg = model.config
    n = data.num_samples
    if n == 0:
        raise LstmError("training dataset is empty")
    model.scale_min = data.scale_min
    model.scale_max = data.scale_max
    rng = np.random.default_rng(cfg.seed + 1)

    adam_m = {name: np.zeros_like(w) for name, w, _ in _param_pairs(model)}
    adam_v = {name: np.zeros_like(w) for name, w, _ in _param_pairs(model)}
    step = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            preds, cache = forward(model, data.inputs[idx], training=True, rng=rng)
            err = preds - data.targets[idx]
            batch_loss = float(np.mean(err * err))
            if not math.isfinite(batch_loss):
                raise LstmError(
                    f"non-finite loss at epoch {epoch + 1}, batch {start // cfg.batch_size + 1}"
                )
            grads = backward(model, cache, 2.0 * err / idx.size)
            step += 1
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            for name, w, grad in _param_pairs(model, grads):
                m = adam_m[name]
                v = adam_v[name]
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * grad
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * grad * grad
                w -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
            epoch_loss += batch_loss * idx.size
        train_loss = epoch_loss / n
        if validation is not None and validation.num_samples > 0:
            val_preds, _ = forward(model, validation.inputs)
            val_loss = mse(val_preds, validation.targets)
        else:
            val_loss = math.nan
        model.loss_history.append((train_loss, val_loss))
    return model


def gradient_check(
    model: TrainedLstm,
    inputs: np.ndarray,
    targets: np.ndarray,
    n_weights: int = 200,
    h: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error of BPTT gradients vs central finite differences.

    Samples n_weights coordinates across all weight tensors. Dropout must
    be disabled so the loss surface is deterministic.
    """
    if model.config.dropout != 0.0:
        raise LstmError("gradient_check requires dropout = 0")
    targets = np.asarray(targets, dtype=float)

    preds, cache = forward(model, inputs)
    err = preds - targets
    grads = backward(model, cache, 2.0 * err / targets.size)

    arrays = [(w, grad) for _, w, grad in _param_pairs(model, grads)]
    sizes = np.array([w.size for w, _ in arrays])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(n_weights, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    for flat in chosen:
        ai = int(np.searchsorted(offsets, flat, side="right") - 1)
        pos = int(flat - offsets[ai])
        w, grad = arrays[ai]
        view = w.reshape(-1)
        original = view[pos]
        view[pos] = original + h
        loss_plus = mse(forward(model, inputs)[0], targets)
        view[pos] = original - h
        loss_minus = mse(forward(model, inputs)[0], targets)
        view[pos] = original
        numeric = (loss_plus - loss_minus) / (2.0 * h)
        analytic = grad.reshape(-1)[pos]
        denom = max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def predict(model: TrainedLstm, dataset: WindowedDataset) -> np.ndarray:
    """Evaluation-mode predictions mapped back to original units."""
    preds = np.empty(dataset.num_samples)
    for start in range(0, dataset.num_samples, 512):
        chunk = dataset.inputs[start : start + 512]
        preds[start : start + chunk.shape[0]] = forward(model, chunk)[0]
    if dataset.scale_min is not None:
        return invert_scale(preds, dataset.scale_min, dataset.scale_max)
    if model.scale_min is not None:
        return invert_scale(preds, model.scale_min, model.scale_max)
    return preds


def loss_history_csv(model: TrainedLstm) -> str:
    lines = ["epoch,train_loss,val_loss"]
    for epoch, (train_loss, val_loss) in enumerate(model.loss_history, start=1):
        lines.append(f"{epoch},{train_loss!r},{val_loss!r}")
    return "\n".join(lines) + "\n"


def save_model(model: TrainedLstm, path) -> None:
    """Write the versioned container: header, JSON manifest, raw tensors."""
    cfg = model.config
    manifest = {
        "config": {
            "window_len": cfg.window_len,
            "layer_sizes": list(cfg.layer_sizes),
            "dropout": cfg.dropout,
            "batch_size": cfg.batch_size,
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "beta1": cfg.beta1,
            "beta2": cfg.beta2,
            "eps": cfg.eps,
            "seed": cfg.seed,
            "target": cfg.target,
        },
        "scale_min": model.scale_min,
        "scale_max": model.scale_max,
        "tensors": [[name, list(w.shape)] for name, w, _ in _param_pairs(model)],
    }
    with open(path, "wb") as fh:
        fh.write(f"{_CONTAINER_MAGIC} {_CONTAINER_VERSION}\n".encode())
        fh.write(json.dumps(manifest, sort_keys=True).encode())
        fh.write(b"\n")
        for _, w, _ in _param_pairs(model):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_model(path) -> TrainedLstm:
    with open(path, "rb") as fh:
        header = fh.readline().decode().strip()
        if header != f"{_CONTAINER_MAGIC} {_CONTAINER_VERSION}":
            raise LstmError(f"{path}: unrecognized model container header {header!r}")
        manifest = json.loads(fh.readline().decode())
        blob = fh.read()
    cfg_dict = dict(manifest["config"])
    cfg_dict["layer_sizes"] = tuple(cfg_dict["layer_sizes"])
    config = LstmConfig(**cfg_dict)
    tensors = {}
    offset = 0
    for name, shape in manifest["tensors"]:
        count = int(np.prod(shape))
        data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        tensors[name] = data.copy()
        offset += count * 8
    if offset != len(blob):
        raise LstmError(f"{path}: container payload size mismatch")
    layers = []
    for li in range(len(config.layer_sizes)):
        layers.append(
            {
                "wx": tensors[f"layer{li}.wx"],
                "wh": tensors[f"layer{li}.wh"],
                "b": tensors[f"layer{li}.b"],
            }
        )
    return TrainedLstm(
        config=config,
        layers=layers,
        head_w=tensors["head.w"],
        head_b=tensors["head.b"],
        scale_min=manifest["scale_min"],
        scale_max=manifest["scale_max"],
    )
