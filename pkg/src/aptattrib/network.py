"""Dense feedforward classifier built from scratch on numpy.

Node layers are ReLU-activated except the last, whose affine output goes
through a max-subtracted softmax. Training is plain mini-batch gradient
descent on softmax cross-entropy with inverted dropout on hidden layers,
zeroing noise on the input layer, and a geometric learning-rate decay.
Weights live in float32; gradient checking runs a float64 path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MODEL_MAGIC = b"APTM"
MODEL_VERSION = 1
PROB_FLOOR = 1e-12

# Hidden widths of the default architecture; attribution nets end in 2
# classes, family nets in 4.
DEFAULT_HIDDEN_SIZES = (2000, 1000, 1000, 1000, 1000, 1000, 1000, 500)


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class ArchSpec:
    """Node-layer widths, input first, class count last."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("architecture needs at least input and output layers")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be >= 1, got {self.layer_sizes}")

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]


def default_attribution_arch(input_size: int = 50_000, classes: int = 2) -> ArchSpec:
    return ArchSpec((input_size, *DEFAULT_HIDDEN_SIZES, classes))


def default_family_arch(input_size: int = 50_000, classes: int = 4) -> ArchSpec:
    return ArchSpec((input_size, *DEFAULT_HIDDEN_SIZES, classes))


@dataclass
class MlpModel:
    """Weight matrices (fan_in x fan_out), biases, and per-layer trainable flags."""

    arch: ArchSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    trainable: list[bool]

    def clone(self) -> "MlpModel":
        return MlpModel(
            arch=self.arch,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            trainable=list(self.trainable),
        )


@dataclass(frozen=True)
class TrainConfig:
    lr_init: float = 1e-2
    lr_final: float = 1e-5
    epochs: int = 1000
    dropout_rate: float = 0.5
    input_noise_rate: float = 0.2
    batch_size: int = 32
    seed: int = 0
    shuffle: bool = True

    def validate(self) -> None:
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0,1), got {self.dropout_rate}")
        if not 0.0 <= self.input_noise_rate < 1.0:
            raise ValueError(f"input_noise_rate must be in [0,1), got {self.input_noise_rate}")
        if not self.lr_init >= self.lr_final > 0.0:
            raise ValueError(
                f"need lr_init >= lr_final > 0, got {self.lr_init}, {self.lr_final}"
            )
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_acc: float | None


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)

    def to_json(self) -> list[dict]:
        return [
            {"epoch": r.epoch, "lr": r.lr, "train_loss": r.train_loss, "val_acc": r.val_acc}
            for r in self.records
        ]


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    predictions: np.ndarray
    probabilities: np.ndarray


def init_model(arch: ArchSpec, seed: int) -> MlpModel:
    """He-style init: weights ~ N(0, 2/fan_in), zero biases, all layers trainable."""
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(arch.layer_sizes, arch.layer_sizes[1:]):
        weights.append(
            rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)).astype(np.float32)
        )
        biases.append(np.zeros(fan_out, dtype=np.float32))
    return MlpModel(arch=arch, weights=weights, biases=biases, trainable=[True] * len(weights))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _forward_pass(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    a0: np.ndarray,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
    dropout_rate: float = 0.0,
    input_noise_rate: float = 0.0,
):
    """Batched forward pass; returns (activations per node-layer, hidden caches).

    Each cache entry is (pre-dropout ReLU output, dropout multiplier or None);
    the multipliers are what backprop needs to route gradients through
    inverted dropout.
    """
    a = a0
    if train and input_noise_rate > 0.0:
        a = a * (rng.random(a.shape) >= input_noise_rate)
    acts = [a]
    caches = []
    for l in range(len(weights) - 1):
        z = a @ weights[l] + biases[l]
        h = np.maximum(z, 0.0)
        mult = None
        if train and dropout_rate > 0.0:
            mult = (rng.random(h.shape) >= dropout_rate) / np.asarray(
                1.0 - dropout_rate, dtype=h.dtype
            )
            a = h * mult
        else:
            a = h
        caches.append((h, mult))
        acts.append(a)
    logits = a @ weights[-1] + biases[-1]
    acts.append(_softmax(logits))
    return acts, caches


def _backward_pass(
    weights: Sequence[np.ndarray],
    acts: Sequence[np.ndarray],
    caches: Sequence[tuple],
    labels: np.ndarray,
):
    """Gradients of mean cross-entropy wrt every weight matrix and bias."""
    probs = acts[-1]
    batch = probs.shape[0]
    dz = probs.copy()
    dz[np.arange(batch), labels] -= 1.0
    dz /= np.asarray(batch, dtype=dz.dtype)
    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    for l in range(len(weights) - 1, -1, -1):
        grads_w[l] = acts[l].T @ dz
        grads_b[l] = dz.sum(axis=0)
        if l > 0:
            da = dz @ weights[l].T
            h, mult = caches[l - 1]
            if mult is not None:
                da = da * mult
            dz = da * (h > 0)
    return grads_w, grads_b


def _as_batch(model: MlpModel, x: np.ndarray, dtype=np.float32) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=dtype)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.arch.input_size:
        raise ValueError(
            f"input width {x.shape[-1] if x.ndim else 0} does not match "
            f"model input size {model.arch.input_size}"
        )
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite values")
    return x, single


def forward(
    model: MlpModel,
    x: np.ndarray,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
    dropout_rate: float = 0.0,
    input_noise_rate: float = 0.0,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Run the network on a vector or batch; returns (node-layer activations, probabilities).

    Infer mode is deterministic: no noise, no dropout. Train mode zeroes input
    coordinates with probability input_noise_rate and applies inverted dropout
    after each hidden ReLU, so a seeded rng is required.
    """
    if mode not in ("infer", "train"):
        raise ValueError(f"mode must be 'infer' or 'train', got {mode!r}")
    if mode == "train" and rng is None:
        raise ValueError("train mode requires a seeded rng")
    batch, single = _as_batch(model, x)
    acts, _ = _forward_pass(
        model.weights,
        model.biases,
        batch,
        train=(mode == "train"),
        rng=rng,
        dropout_rate=dropout_rate,
        input_noise_rate=input_noise_rate,
    )
    if single:
        acts = [a[0] for a in acts]
    return acts, acts[-1]


def learning_rate(epoch: int, config: TrainConfig) -> float:
    """Geometric decay from lr_init to lr_final across the configured epochs."""
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    if config.epochs == 1:
        return config.lr_init
    ratio = config.lr_final / config.lr_init
    return config.lr_init * ratio ** (epoch / (config.epochs - 1))


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return labels


def train_step(
    model: MlpModel,
    batch_x: np.ndarray,
    batch_y: np.ndarray,
    lr: float,
    *,
    dropout_rate: float = 0.0,
    input_noise_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> float:
    """One gradient-descent step on a mini-batch; returns the mean batch loss.

    Only layers flagged trainable are updated (biases move with their layer).
    """
    x, _ = _as_batch(model, batch_x)
    if x.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    y = _check_labels(batch_y, model.arch.output_size)
    if y.shape[0] != x.shape[0]:
        raise ValueError("batch labels must align with rows")
    train = dropout_rate > 0.0 or input_noise_rate > 0.0
    if train and rng is None:
        raise ValueError("dropout or input noise requires a seeded rng")
    acts, caches = _forward_pass(
        model.weights,
        model.biases,
        x,
        train=train,
        rng=rng,
        dropout_rate=dropout_rate,
        input_noise_rate=input_noise_rate,
    )
    probs = acts[-1]
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(len(y)), y], PROB_FLOOR))))
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite training loss {loss}")
    grads_w, grads_b = _backward_pass(model.weights, acts, caches, y)
    if lr != 0.0:
        for l in range(len(model.weights)):
            if model.trainable[l]:
                model.weights[l] -= np.asarray(lr, dtype=np.float32) * grads_w[l]
                model.biases[l] -= np.asarray(lr, dtype=np.float32) * grads_b[l]
    return loss


def train(
    model: MlpModel,
    train_x: np.ndarray,
    train_y: np.ndarray,
    config: TrainConfig,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
) -> TrainReport:
    """Train in place for config.epochs; deterministic given config.seed.

    Shuffling, input noise, and dropout all draw from one generator seeded
    once at the start, so identical configs give byte-identical models.
    """
    config.validate()
    n = np.asarray(train_x).shape[0]
    if n == 0:
        raise ValueError("training set is empty")
    train_y = _check_labels(train_y, model.arch.output_size)
    rng = np.random.default_rng(config.seed)
    report = TrainReport()
    for epoch in range(config.epochs):
        lr = learning_rate(epoch, config)
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        total_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            try:
                loss = train_step(
                    model,
                    train_x[idx],
                    train_y[idx],
                    lr,
                    dropout_rate=config.dropout_rate,
                    input_noise_rate=config.input_noise_rate,
                    rng=rng,
                )
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, batch at {start}: {exc}") from exc
            total_loss += loss * len(idx)
        val_acc = None
        if validation is not None:
            val_acc = evaluate(model, validation[0], validation[1]).accuracy
        report.records.append(
            EpochRecord(epoch=epoch, lr=lr, train_loss=total_loss / n, val_acc=val_acc)
        )
    return report


def evaluate(model: MlpModel, data_x: np.ndarray, data_y: np.ndarray) -> EvalResult:
    """Infer-mode accuracy and confusion matrix; argmax ties go to the lowest class."""
    if data_y is None:
        raise ValueError("evaluation requires labels")
    x, _ = _as_batch(model, data_x)
    y = _check_labels(data_y, model.arch.output_size)
    if y.shape[0] != x.shape[0]:
        raise ValueError("labels must align with rows")
    acts, _ = _forward_pass(model.weights, model.biases, x)
    probs = acts[-1]
    preds = probs.argmax(axis=1)
    confusion = np.zeros((model.arch.output_size, model.arch.output_size), dtype=np.int64)
    np.add.at(confusion, (y, preds), 1)
    accuracy = float((preds == y).mean()) if len(y) else 0.0
    return EvalResult(
        accuracy=accuracy, confusion=confusion, predictions=preds, probabilities=probs
    )


def penultimate_activations(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Infer-mode activations of the last hidden node-layer (post-ReLU)."""
    acts, _ = forward(model, x)
    return acts[-2]


def gradient_check(
    arch: ArchSpec,
    seed: int,
    sample: tuple[np.ndarray, int],
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs a float64 path on a freshly initialized model with no dropout or
    noise. Guarded to small architectures; intended as a correctness harness
    for the backpropagation code.
    """
    if len(arch.layer_sizes) > 5 or max(arch.layer_sizes) > 16:
        raise ValueError("gradient_check is limited to <= 5 node-layers of <= 16 units")
    if not 0.0 < epsilon <= 1e-3:
        raise ValueError(f"epsilon must be in (0, 1e-3], got {epsilon}")
    x, label = sample
    x = np.asarray(x, dtype=np.float64)[None, :]
    if x.shape[1] != arch.input_size:
        raise ValueError("sample width does not match architecture input")
    y = np.array([label], dtype=np.int64)
    rng = np.random.default_rng(seed)
    weights = [
        rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        for fan_in, fan_out in zip(arch.layer_sizes, arch.layer_sizes[1:])
    ]
    biases = [rng.normal(0.0, 0.1, size=fan_out) for fan_out in arch.layer_sizes[1:]]

    def loss_at() -> float:
        acts, _ = _forward_pass(weights, biases, x)
        return float(-np.log(max(acts[-1][0, label], PROB_FLOOR)))

    acts, caches = _forward_pass(weights, biases, x)
    grads_w, grads_b = _backward_pass(weights, acts, caches, y)

    max_rel = 0.0
    for params, grads in ((weights, grads_w), (biases, grads_b)):
        for arr, grad in zip(params, grads):
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                plus = loss_at()
                flat[i] = orig - epsilon
                minus = loss_at()
                flat[i] = orig
                numeric = (plus - minus) / (2.0 * epsilon)
                analytic = gflat[i]
                denom = max(abs(analytic) + abs(numeric), 1e-12)
                max_rel = max(max_rel, abs(analytic - numeric) / denom)
    return max_rel


def save_model(model: MlpModel, path: str | Path) -> None:
    """Write the binary model file; round-trips bit-exactly through load_model."""
    sizes = model.arch.layer_sizes
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<IH", MODEL_VERSION, len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        fh.write(struct.pack(f"<{len(model.trainable)}B", *map(int, model.trainable)))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_model(path: str | Path) -> MlpModel:
    def read_exact(fh, count: int, what: str) -> bytes:
        raw = fh.read(count)
        if len(raw) != count:
            raise ValueError(f"model file {path}: truncated while reading {what}")
        return raw

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if len(magic) != 4:
            raise ValueError(f"model file {path}: truncated before magic")
        if magic != MODEL_MAGIC:
            raise ValueError(f"model file {path}: bad magic {magic!r}, expected {MODEL_MAGIC!r}")
        version, n_layers = struct.unpack("<IH", read_exact(fh, 6, "header"))
        if version != MODEL_VERSION:
            raise ValueError(f"model file {path}: version {version}, expected {MODEL_VERSION}")
        if n_layers < 2:
            raise ValueError(f"model file {path}: needs >= 2 node-layers, got {n_layers}")
        sizes = struct.unpack(f"<{n_layers}I", read_exact(fh, 4 * n_layers, "layer sizes"))
        flags = struct.unpack(
            f"<{n_layers - 1}B", read_exact(fh, n_layers - 1, "trainable flags")
        )
        weights = []
        biases = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            raw = read_exact(fh, 4 * fan_in * fan_out, "weights")
            weights.append(np.frombuffer(raw, dtype="<f4").reshape(fan_in, fan_out).copy())
            raw = read_exact(fh, 4 * fan_out, "biases")
            biases.append(np.frombuffer(raw, dtype="<f4").copy())
        if fh.read(1):
            raise ValueError(f"model file {path}: trailing bytes after model data")
    return MlpModel(
        arch=ArchSpec(tuple(int(s) for s in sizes)),
        weights=weights,
        biases=biases,
        trainable=[bool(f) for f in flags],
    )
