"""Multi-label BCE training, dataset splitting, and the gradient-check harness."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from . import nn
from .errors import NumericError, ShapeError, ValidationError
from .tensor import make_rng

# Probabilities are clipped to [EPS, 1-EPS] before taking logs.
EPS = 1e-7

DEFAULT_LEARNING_RATE = 1e-3
# Chosen so the default end-to-end pipeline stays desk-scale: with the
# 500-image synthetic set one epoch is ~300 forward+backward passes.
DEFAULT_EPOCHS = 4
DEFAULT_BATCH_SIZE = 16
DEFAULT_PATIENCE = 5

CONFIG_KEYS = (
    "learning_rate",
    "epochs",
    "batch_size",
    "optimizer",
    "seed",
    "early_stop_patience",
    "leaky_slope",
)


@dataclass
class TrainConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    optimizer: str = "adam"
    seed: int = 0
    early_stop_patience: int | None = DEFAULT_PATIENCE
    leaky_slope: float = nn.DEFAULT_LEAKY_SLOPE

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValidationError("early_stop_patience must be >= 1 or none")


def parse_config(path) -> TrainConfig:
    """Read a TrainConfig from a plain key=value file.

    Recognised keys: learning_rate, epochs, batch_size, optimizer, seed,
    early_stop_patience (integer or "none"), leaky_slope. Blank lines and
    lines starting with '#' are ignored. Unknown keys are rejected.
    """
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in CONFIG_KEYS:
            raise ValidationError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ValidationError(f"{path}:{lineno}: duplicate config key {key!r}")
        values[key] = raw
    kwargs = {}
    try:
        if "learning_rate" in values:
            kwargs["learning_rate"] = float(values["learning_rate"])
        if "epochs" in values:
            kwargs["epochs"] = int(values["epochs"])
        if "batch_size" in values:
            kwargs["batch_size"] = int(values["batch_size"])
        if "optimizer" in values:
            kwargs["optimizer"] = values["optimizer"]
        if "seed" in values:
            kwargs["seed"] = int(values["seed"])
        if "early_stop_patience" in values:
            raw = values["early_stop_patience"]
            kwargs["early_stop_patience"] = None if raw.lower() == "none" else int(raw)
        if "leaky_slope" in values:
            kwargs["leaky_slope"] = float(values["leaky_slope"])
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return TrainConfig(**kwargs)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)


@dataclass
class SplitSpec:
    """Train/val/test ratios plus the seed that fixes the shuffle.

    When group_key is given (one hashable per sample), whole groups are
    assigned to a single partition, so e.g. slices of one study can never
    leak between train and test.
    """

    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    group_key: Sequence[Hashable] | None = None

    def __post_init__(self):
        r = self.ratios
        if len(r) != 3 or any(x < 0 or x > 1 for x in r):
            raise ValidationError(f"ratios must be three floats in [0, 1], got {r}")
        if abs(sum(r) - 1.0) > 1e-9:
            raise ValidationError(f"ratios must sum to 1, got {r}")


def bce_loss(p: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy over all entries, p clipped to [eps, 1-eps]."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"probability shape {p.shape} != label shape {y.shape}")
    pc = np.clip(p, EPS, 1.0 - EPS)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)))


def bce_sigmoid_grad(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of mean BCE w.r.t. the head logits: (p - y) / p.size."""
    p = np.asarray(p)
    y = np.asarray(y)
    if p.shape != y.shape:
        raise ShapeError(f"probability shape {p.shape} != label shape {y.shape}")
    return (p - y.astype(p.dtype)) / p.dtype.type(p.size)


@dataclass
class OptimizerState:
    """Adam moments per parameter array; unused (empty) for plain SGD."""

    kind: str
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def init_optimizer(kind: str, params: list[np.ndarray]) -> OptimizerState:
    state = OptimizerState(kind=kind)
    if kind == "adam":
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    elif kind != "sgd":
        raise ValidationError(f"unknown optimizer {kind!r}")
    return state


def optimizer_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: OptimizerState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> OptimizerState:
    """Update parameter arrays in place from one gradient evaluation."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameter arrays vs {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient encountered; training aborted")
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            p -= learning_rate * g
        return state
    state.t += 1
    correct1 = 1.0 - beta1 ** state.t
    correct2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p -= learning_rate * (m / correct1) / (np.sqrt(v / correct2) + eps)
    return state


def _epoch_loss(params, images, labels) -> float:
    probs = np.stack([nn.model_forward(params, img)[0] for img in images])
    return bce_loss(probs, labels)


def train(
    params: nn.ModelParams,
    images: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    val_images: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
) -> tuple[nn.ModelParams, TrainHistory]:
    """Mini-batch BCE training of the model; updates `params` in place.

    Each epoch reshuffles with the seeded generator, accumulates per-sample
    gradients in a fixed order within every batch, and applies one
    optimizer step per batch. Validation loss (when a validation set is
    given) drives optional early stopping: training stops once the best
    validation loss has not improved for `early_stop_patience` epochs.
    """
    n = len(images)
    if n == 0:
        raise ValidationError("training set is empty")
    if len(labels) != n:
        raise ShapeError(f"{n} images but {len(labels)} label rows")
    has_val = val_images is not None and len(val_images) > 0
    if has_val and len(val_images) != len(val_labels):
        raise ShapeError(f"{len(val_images)} val images but {len(val_labels)} label rows")

    rng = make_rng(config.seed)
    arrays = nn.param_arrays(params)
    state = init_optimizer(config.optimizer, arrays)
    history = TrainHistory()
    best_val = np.inf
    stale = 0

    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            probs = []
            caches = []
            for idx in batch:
                p, cache = nn.model_forward(params, images[idx])
                probs.append(p)
                caches.append(cache)
            probs = np.stack(probs)
            batch_labels = labels[batch]
            loss = bce_loss(probs, batch_labels)
            if not np.isfinite(loss):
                raise NumericError(
                    f"training loss became non-finite ({loss}) at epoch "
                    f"{len(history.train_loss) + 1}"
                )
            epoch_loss += loss * len(batch)
            dlogits = bce_sigmoid_grad(probs, batch_labels)
            grads = None
            for row, cache in zip(dlogits, caches):
                sample_grads = nn.model_backward(params, cache, row)
                if grads is None:
                    grads = sample_grads
                else:
                    for g, sg in zip(grads, sample_grads):
                        g += sg
            state = optimizer_step(arrays, grads, state, config.learning_rate)
        history.train_loss.append(epoch_loss / n)
        if has_val:
            vloss = _epoch_loss(params, val_images, val_labels)
            history.val_loss.append(vloss)
            if config.early_stop_patience is not None:
                if vloss < best_val - 1e-12:
                    best_val = vloss
                    stale = 0
                else:
                    stale += 1
                    if stale >= config.early_stop_patience:
                        break
    return params, history


def split_dataset(items: Sequence, spec: SplitSpec) -> tuple[list[int], list[int], list[int]]:
    """Seeded shuffle then contiguous cut into train/val/test index lists.

    Sizes follow floor-and-remainder: test = floor(n * r_test),
    val = floor(n * r_val), train = the rest. With group_key set, whole
    groups are dealt to partitions in shuffled-group order until each
    partition reaches its target, so sizes are then approximate.
    """
    n = len(items)
    if n == 0:
        raise ValidationError("cannot split an empty dataset")
    r_train, r_val, r_test = spec.ratios
    n_test = int(np.floor(n * r_test))
    n_val = int(np.floor(n * r_val))
    n_train = n - n_val - n_test
    rng = make_rng(spec.seed)

    if spec.group_key is None:
        perm = rng.permutation(n)
        train = perm[:n_train]
        val = perm[n_train : n_train + n_val]
        test = perm[n_train + n_val :]
        return list(map(int, train)), list(map(int, val)), list(map(int, test))

    if len(spec.group_key) != n:
        raise ValidationError(f"group_key has {len(spec.group_key)} entries for {n} samples")
    by_group: dict = {}
    for idx, key in enumerate(spec.group_key):
        by_group.setdefault(key, []).append(idx)
    groups = list(by_group.values())
    rng.shuffle(groups)
    train, val, test = [], [], []
    for members in groups:
        if len(train) < n_train:
            train.extend(members)
        elif len(val) < n_val:
            val.extend(members)
        else:
            test.extend(members)
    return train, val, test


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    diff = np.abs(analytic - numeric)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(denom > 0, diff / denom, 0.0)
    return float(rel.max()) if rel.size else 0.0


def _fd_grad(fn, arr: np.ndarray, epsilon: float) -> np.ndarray:
    """Central finite differences of scalar fn w.r.t. every element of arr."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        hi = fn()
        flat[i] = orig - epsilon
        lo = fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * epsilon)
    return grad


def grad_check(layer_kind: str, rng: np.random.Generator, epsilon: float = 1e-3) -> float:
    """Compare analytic gradients of one random small instance to central
    finite differences; returns the max relative error over all inputs and
    parameters (0 where both gradients vanish).

    Kinds: 'conv', 'leaky_relu', 'maxpool', 'dense', 'bce_head'. Instances
    are built in float64; leaky_relu inputs are kept away from the kink and
    maxpool inputs are spaced to avoid ties, as finite differences are
    undefined across those boundaries.
    """
    if not 0 < epsilon <= 1e-2:
        raise ValidationError(f"epsilon must be in (0, 1e-2], got {epsilon}")

    if layer_kind == "conv":
        x = rng.normal(0, 1, (6, 6, 2))
        layer = nn.ConvLayer(kernels=rng.normal(0, 0.5, (3, 3, 2, 2)), bias=rng.normal(0, 0.5, 2))
        proj = rng.choice([-1.0, 1.0], (6, 6, 2)) * rng.uniform(0.3, 1.0, (6, 6, 2))
        objective = lambda: float(np.sum(nn.conv2d_forward(x, layer) * proj))
        dx, dk, db = nn.conv2d_backward(x, layer, proj)
        pairs = [(dx, x), (dk, layer.kernels), (db, layer.bias)]

    elif layer_kind == "leaky_relu":
        sign = rng.choice([-1.0, 1.0], (5, 4, 3))
        x = sign * rng.uniform(0.05, 1.0, (5, 4, 3))
        slope = 0.01
        proj = rng.choice([-1.0, 1.0], x.shape) * rng.uniform(0.3, 1.0, x.shape)
        objective = lambda: float(np.sum(nn.leaky_relu(x, slope) * proj))
        pairs = [(nn.leaky_relu_backward(x, proj, slope), x)]

    elif layer_kind == "maxpool":
        vals = rng.permutation(5 * 5 * 1).astype(np.float64) * 0.1
        x = vals.reshape(5, 5, 1)
        _, argmax = nn.maxpool2_forward(x)
        proj = rng.choice([-1.0, 1.0], (2, 2, 1)) * rng.uniform(0.3, 1.0, (2, 2, 1))
        objective = lambda: float(np.sum(nn.maxpool2_forward(x)[0] * proj))
        pairs = [(nn.maxpool2_backward(proj, argmax, x.shape), x)]

    elif layer_kind == "dense":
        f = rng.normal(0, 0.3, 10)
        head = nn.DenseLayer(weights=rng.normal(0, 0.3, (10, 3)), bias=rng.normal(0, 0.3, 3))
        proj = rng.choice([-1.0, 1.0], 3) * rng.uniform(0.3, 1.0, 3)

        def objective():
            return float(np.sum(nn.dense_sigmoid_head(f, head) * proj))

        p = nn.dense_sigmoid_head(f, head)
        dlogits = p * (1.0 - p) * proj
        pairs = [
            (np.outer(f, dlogits), head.weights),
            (dlogits, head.bias),
            (head.weights @ dlogits, f),
        ]

    elif layer_kind == "bce_head":
        logits = rng.normal(0, 1.0, (4, 3))
        y = (rng.uniform(size=(4, 3)) < 0.5).astype(np.float64)

        def objective():
            return bce_loss(nn.sigmoid(logits), y)

        pairs = [(bce_sigmoid_grad(nn.sigmoid(logits), y), logits)]

    else:
        raise ValidationError(f"unknown layer kind {layer_kind!r}")

    worst = 0.0
    for analytic, arr in pairs:
        numeric = _fd_grad(objective, arr, epsilon)
        worst = max(worst, _rel_err(np.asarray(analytic), numeric))
    return worst
