"""Desk-scale multilayer perceptron: forward pass and plain SGD training.

The trainer exists only to manufacture checkpoints for the ensembling
pipeline; it runs minibatch gradient descent on softmax cross-entropy with
hand-written backprop and is a pure function of (data, spec, config).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, TrainingDivergedError
from .metrics import Dataset
from .rng import stream
from .tensor import log_sum_exp, matmul, relu, softmax

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class ModelSpec:
    """Layer widths, activation, and which linear layers may be quantized.

    ``quantize_mask`` has one flag per linear layer; the default marks all
    hidden layers and leaves the final classifier layer untouched. Biases
    are never quantized or perturbed.
    """

    layer_dims: tuple[int, ...]
    activation: str = "relu"
    quantize_mask: tuple[bool, ...] | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2:
            raise ConfigError(f"need at least one linear layer, got dims {dims}")
        if any(d < 1 for d in dims):
            raise ConfigError(f"layer extents must be >= 1, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        mask = self.quantize_mask
        if mask is None:
            mask = (True,) * (len(dims) - 2) + (False,)
        mask = tuple(bool(m) for m in mask)
        if len(mask) != len(dims) - 1:
            raise ConfigError(
                f"quantize_mask needs {len(dims) - 1} entries, got {len(mask)}"
            )
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "quantize_mask", mask)

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    def layer_names(self) -> list[tuple[str, str]]:
        """(weight, bias) tensor names per linear layer, 1-based."""
        return [(f"layer_{i}/W", f"layer_{i}/b") for i in range(1, self.num_layers + 1)]

    def param_count(self) -> int:
        dims = self.layer_dims
        return sum(dims[i] * (dims[i - 1] + 1) for i in range(1, len(dims)))


@dataclass(frozen=True)
class Checkpoint:
    """A model spec plus its named weight tensors."""

    spec: ModelSpec
    weights: dict[str, np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    lr: float
    epochs: int
    batch: int = 64
    seed: int = 0


def check_checkpoint(ckpt: Checkpoint) -> None:
    """Validate that every layer has W and b tensors of the right shape."""
    dims = ckpt.spec.layer_dims
    for i, (w_name, b_name) in enumerate(ckpt.spec.layer_names(), start=1):
        for name, want in ((w_name, (dims[i], dims[i - 1])), (b_name, (dims[i],))):
            if name not in ckpt.weights:
                raise ShapeError(f"checkpoint is missing tensor {name}")
            got = ckpt.weights[name].shape
            if tuple(got) != want:
                raise ShapeError(f"{name} has shape {got}, expected {want}")


def init_checkpoint(spec: ModelSpec, rng: np.random.Generator) -> Checkpoint:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization per layer."""
    weights: dict[str, np.ndarray] = {}
    dims = spec.layer_dims
    for i, (w_name, b_name) in enumerate(spec.layer_names(), start=1):
        bound = 1.0 / np.sqrt(dims[i - 1])
        weights[w_name] = rng.uniform(-bound, bound, size=(dims[i], dims[i - 1])).astype(
            np.float32
        )
        weights[b_name] = rng.uniform(-bound, bound, size=dims[i]).astype(np.float32)
    return Checkpoint(spec=spec, weights=weights)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    return relu(z) if activation == "relu" else np.tanh(z)


def forward(ckpt: Checkpoint, x: np.ndarray) -> np.ndarray:
    """Logits for a batch of inputs [N, d0] -> [N, K]."""
    return forward_masked(ckpt, x, masks=None)


def forward_masked(
    ckpt: Checkpoint, x: np.ndarray, masks: dict[str, np.ndarray] | None
) -> np.ndarray:
    """Logits with selected weight matrices multiplied by binary masks.

    ``masks`` maps weight tensor names to {0,1} arrays of the same shape;
    layers not named pass through untouched, so an empty or None mapping
    reproduces ``forward`` exactly.
    """
    x = np.asarray(x, dtype=np.float32)
    d0 = ckpt.spec.layer_dims[0]
    if x.ndim != 2 or x.shape[1] != d0:
        raise ShapeError(f"input shape {x.shape} does not match model width {d0}")
    h = x
    last = ckpt.spec.num_layers
    for i, (w_name, b_name) in enumerate(ckpt.spec.layer_names(), start=1):
        w = ckpt.weights[w_name]
        if masks and w_name in masks:
            mask = np.asarray(masks[w_name], dtype=np.float32)
            if mask.shape != w.shape:
                raise ShapeError(
                    f"mask for {w_name} has shape {mask.shape}, expected {w.shape}"
                )
            w = w * mask
        z = matmul(h, w.T) + ckpt.weights[b_name]
        h = _activate(z, ckpt.spec.activation) if i < last else z
    return h


def training_nll(ckpt: Checkpoint, data: Dataset) -> float:
    """Mean cross-entropy of the model on a dataset."""
    logits = forward(ckpt, data.features)
    picked = logits[np.arange(data.n), data.labels]
    return float(np.mean(log_sum_exp(logits) - picked))


def train_sgd(data: Dataset, spec: ModelSpec, cfg: TrainConfig) -> Checkpoint:
    """Minibatch SGD on cross-entropy; deterministic given cfg.seed.

    Zero epochs return the seeded initialization unchanged. A non-finite
    batch loss aborts with a diverged error suggesting a lower rate.
    """
    if data.labels.max() >= spec.num_classes:
        raise ShapeError(
            f"labels reach {data.labels.max()} but the model has "
            f"{spec.num_classes} classes"
        )
    if data.features.shape[1] != spec.layer_dims[0]:
        raise ShapeError(
            f"data width {data.features.shape[1]} does not match model width "
            f"{spec.layer_dims[0]}"
        )
    if cfg.batch < 1 or cfg.epochs < 0:
        raise ConfigError(f"bad training config: batch={cfg.batch} epochs={cfg.epochs}")

    rng = stream(cfg.seed)
    ckpt = init_checkpoint(spec, rng)
    weights = {name: w.copy() for name, w in ckpt.weights.items()}
    names = spec.layer_names()
    last = spec.num_layers
    lr = np.float32(cfg.lr)

    for _ in range(cfg.epochs):
        order = rng.permutation(data.n)
        for start in range(0, data.n, cfg.batch):
            idx = order[start : start + cfg.batch]
            xb = data.features[idx]
            yb = data.labels[idx]
            nb = xb.shape[0]

            # forward, caching post-activation values per layer
            hs = [xb]
            for i, (w_name, b_name) in enumerate(names, start=1):
                z = matmul(hs[-1], weights[w_name].T) + weights[b_name]
                hs.append(_activate(z, spec.activation) if i < last else z)
            logits = hs[-1]
            picked = logits[np.arange(nb), yb]
            loss = float(np.mean(log_sum_exp(logits) - picked))
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"training loss became non-finite ({loss}); lower the learning "
                    f"rate (lr={cfg.lr})"
                )

            dz = softmax(logits)
            dz[np.arange(nb), yb] -= 1.0
            dz /= np.float32(nb)
            for i in range(last, 0, -1):
                w_name, b_name = names[i - 1]
                dw = matmul(dz.T, hs[i - 1])
                db = np.sum(dz, axis=0, dtype=np.float32)
                if i > 1:
                    dh = matmul(dz, weights[w_name])
                    h = hs[i - 1]
                    if spec.activation == "relu":
                        dz = dh * (h > 0)
                    else:
                        dz = dh * (1.0 - h * h)
                weights[w_name] = weights[w_name] - lr * dw
                weights[b_name] = weights[b_name] - lr * db

    return Checkpoint(spec=spec, weights=weights)
