"""Ensemble member generation and prediction combination.

Members are derived from a single checkpoint: independent stochastic
roundings of every quantizable layer (lpe_bsr), a single nearest-rounded
model (rtn), isotropic Gaussian weight noise (gaussian), or Bernoulli
weight dropping without rescaling (mcd). Layers excluded by the model's
quantize mask, and all biases, are shared untouched across members.

Predictions combine either as the arithmetic mean of member probabilities
(the default for reported metrics) or as softmax of the mean member logits
(used only for the ambiguity decomposition).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn import Checkpoint, ModelSpec, forward
from .quantize import (
    MAX_BITS,
    MIN_BITS,
    QuantGridSet,
    QuantizedTensor,
    bsr_sample,
    build_grids,
    dequantize,
    rtn,
)
from .rng import derive_member_seed, stream
from .tensor import mean_stack, softmax

METHODS = ("lpe_bsr", "rtn", "gaussian", "mcd")
MAX_MEMBERS = 64


@dataclass(frozen=True)
class EnsembleSpec:
    """How to derive S members from one checkpoint.

    Exactly the fields its method needs may be set: bits for lpe_bsr/rtn,
    sigma2 for gaussian, drop_p for mcd. rtn is deterministic and admits
    only a single member.
    """

    method: str
    size: int
    bits: int | None = None
    sigma2: float | None = None
    drop_p: float | None = None
    base_seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown ensemble method {self.method!r}")
        if not 1 <= self.size <= MAX_MEMBERS:
            raise ConfigError(f"ensemble size must be in [1, {MAX_MEMBERS}], got {self.size}")
        if self.method == "rtn" and self.size != 1:
            raise ConfigError("rtn is deterministic; size must be 1")
        needs_bits = self.method in ("lpe_bsr", "rtn")
        if needs_bits:
            if self.bits is None:
                raise ConfigError(f"{self.method} requires bits")
            if not MIN_BITS <= self.bits <= MAX_BITS:
                raise ConfigError(f"bits must be in [{MIN_BITS}, {MAX_BITS}], got {self.bits}")
        elif self.bits is not None:
            raise ConfigError(f"{self.method} does not take bits")
        if self.method == "gaussian":
            if self.sigma2 is None or self.sigma2 <= 0:
                raise ConfigError("gaussian requires sigma2 > 0")
        elif self.sigma2 is not None:
            raise ConfigError(f"{self.method} does not take sigma2")
        if self.method == "mcd":
            if self.drop_p is None or not 0 < self.drop_p < 1:
                raise ConfigError("mcd requires drop_p in (0, 1)")
        elif self.drop_p is not None:
            raise ConfigError(f"{self.method} does not take drop_p")


@dataclass(frozen=True)
class Member:
    """One model variant: per-layer payloads plus RNG provenance."""

    index: int
    seed: int
    layers: dict[str, QuantizedTensor | np.ndarray]


@dataclass(frozen=True)
class MemberSet:
    """S members over shared untouched layers."""

    spec: EnsembleSpec
    model_spec: ModelSpec
    shared: dict[str, np.ndarray]
    members: tuple[Member, ...]

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class PredictionBatch:
    probs: np.ndarray  # float32 [N, K], rows sum to 1
    member_logits: np.ndarray | None = None  # float32 [S, N, K]


def _masked_layer_names(ckpt: Checkpoint) -> list[tuple[int, str]]:
    names = []
    for i, (w_name, _) in enumerate(ckpt.spec.layer_names(), start=1):
        if ckpt.spec.quantize_mask[i - 1]:
            names.append((i, w_name))
    return names


def generate_members(ckpt: Checkpoint, spec: EnsembleSpec) -> MemberSet:
    """Derive S members from a checkpoint per the ensemble spec.

    Grids for the quantizing methods are built once from the base weights
    and shared by every member. Each (member, layer) pair samples from its
    own keyed stream, so generation is order- and thread-independent.
    """
    masked = _masked_layer_names(ckpt)
    shared = {
        name: w for name, w in ckpt.weights.items()
        if name not in {w_name for _, w_name in masked}
    }

    grids: dict[str, QuantGridSet] = {}
    if spec.method in ("lpe_bsr", "rtn"):
        grids = {w_name: build_grids(ckpt.weights[w_name], spec.bits) for _, w_name in masked}

    members = []
    for s in range(spec.size):
        seed = derive_member_seed(spec.base_seed, s)
        layers: dict[str, QuantizedTensor | np.ndarray] = {}
        for layer_idx, w_name in masked:
            w = ckpt.weights[w_name]
            if spec.method == "lpe_bsr":
                layers[w_name] = bsr_sample(w, grids[w_name], stream(seed, layer_idx))
            elif spec.method == "rtn":
                layers[w_name] = rtn(w, grids[w_name])
            elif spec.method == "gaussian":
                noise = stream(seed, layer_idx).standard_normal(w.shape, dtype=np.float32)
                layers[w_name] = w + np.float32(np.sqrt(spec.sigma2)) * noise
            else:  # mcd: drop individual weights, no 1/(1-p) rescaling
                keep = stream(seed, layer_idx).random(size=w.shape) >= spec.drop_p
                layers[w_name] = w * keep.astype(np.float32)
        members.append(Member(index=s, seed=seed, layers=layers))

    return MemberSet(spec=spec, model_spec=ckpt.spec, shared=shared, members=tuple(members))


def member_checkpoint(ms: MemberSet, index: int) -> Checkpoint:
    """Materialize one member as a full checkpoint."""
    member = ms.members[index]
    weights = dict(ms.shared)
    for name, payload in member.layers.items():
        weights[name] = dequantize(payload) if isinstance(payload, QuantizedTensor) else payload
    return Checkpoint(spec=ms.model_spec, weights=weights)


def member_logits(ms: MemberSet, x: np.ndarray) -> np.ndarray:
    """Stacked member logits [S, N, K], in member index order."""
    order = sorted(range(ms.size), key=lambda i: ms.members[i].index)
    return np.stack([forward(member_checkpoint(ms, i), x) for i in order])


def predict_prob_ensemble(
    ms: MemberSet, x: np.ndarray, keep_logits: bool = False
) -> PredictionBatch:
    """Arithmetic mean of member probabilities."""
    logits = member_logits(ms, x)
    probs = mean_stack(softmax(logits))
    return PredictionBatch(probs=probs, member_logits=logits if keep_logits else None)


def predict_logit_mean(
    ms: MemberSet, x: np.ndarray, keep_logits: bool = False
) -> PredictionBatch:
    """Softmax of the arithmetic mean of member logits."""
    logits = member_logits(ms, x)
    probs = softmax(mean_stack(logits))
    return PredictionBatch(probs=probs, member_logits=logits if keep_logits else None)


def memory_budget(ms: MemberSet) -> int:
    """Total logical bits to represent the ensemble.

    Quantized layers cost bits-per-code times entries plus 32 bits per
    channel scale; full-precision member layers cost 32 bits per entry;
    shared layers are counted once at 32 bits per entry.
    """
    bits = sum(32 * w.size for w in ms.shared.values())
    for member in ms.members:
        for payload in member.layers.values():
            if isinstance(payload, QuantizedTensor):
                bits += payload.codes.size * payload.grids.bits
                bits += payload.grids.channels * 32
            else:
                bits += 32 * payload.size
    return int(bits)


def checkpoint_bits(ckpt: Checkpoint) -> int:
    """Bits of a plain full-precision checkpoint."""
    return 32 * ckpt.spec.param_count()
