"""Classification metrics and the ambiguity decomposition.

NLL is the mean negative log-probability of the true label (probabilities
floored at 1e-12 before the log). ERR is the argmax 0-1 loss with ties
broken toward the smallest class index. ECE buckets confidences into
half-open bins ((j-1)/J, j/J] and weights per-bin |accuracy - confidence|
gaps by occupancy.

The decomposition splits the mean per-member loss (a) into the loss of the
logit-mean ensemble (c) plus a nonnegative ambiguity term (b = a - c).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError
from .tensor import mean_stack, softmax

PROB_FLOOR = 1e-12
ECE_BINS = 15


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus integer class labels."""

    features: np.ndarray  # float32 [N, d]
    labels: np.ndarray    # int [N]

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float32)
        labels = np.asarray(self.labels)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise DataError(f"features must be a nonempty 2-D array, got {feats.shape}")
        if labels.shape != (feats.shape[0],):
            raise DataError(
                f"labels shape {labels.shape} does not match {feats.shape[0]} rows"
            )
        if not np.issubdtype(labels.dtype, np.integer):
            raise DataError("labels must be integers")
        if labels.min() < 0:
            raise DataError("labels must be nonnegative")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def n(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class EvalReport:
    """Ensemble evaluation summary.

    ``ambiguity`` is None when the evaluation target is a single model
    rather than an ensemble; otherwise it equals avg_loss - ensemble_loss.
    """

    nll: float
    err: float
    ece: float
    avg_loss: float
    ensemble_loss: float
    ambiguity: float | None
    memory_bits: int
    per_member_nll: list[float] = field(default_factory=list)


def _checked(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels)
    if p.ndim != 2:
        raise ShapeError(f"probs must be [N, K], got shape {p.shape}")
    if y.shape != (p.shape[0],):
        raise ShapeError(f"labels shape {y.shape} does not match {p.shape[0]} rows")
    if y.min() < 0 or y.max() >= p.shape[1]:
        raise DataError(
            f"labels must lie in [0, {p.shape[1]}), got range [{y.min()}, {y.max()}]"
        )
    return p, y.astype(np.int64)


def nll(probs, labels) -> float:
    """Mean negative log-probability of the true labels."""
    p, y = _checked(probs, labels)
    picked = p[np.arange(p.shape[0]), y]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def err(probs, labels) -> float:
    """Fraction of rows whose argmax differs from the label."""
    p, y = _checked(probs, labels)
    preds = np.argmax(p, axis=1)  # np.argmax picks the smallest index on ties
    return float(np.mean(preds != y))


def ece(probs, labels, bins: int = ECE_BINS) -> float:
    """Binned expected calibration error with half-open confidence bins."""
    if bins < 1:
        raise DataError(f"bins must be >= 1, got {bins}")
    p, y = _checked(probs, labels)
    conf = np.max(p, axis=1)
    correct = np.argmax(p, axis=1) == y
    # conf in ((j-1)/J, j/J]  <=>  ceil(conf * J) == j
    which = np.clip(np.ceil(conf * bins).astype(np.int64), 1, bins)
    n = p.shape[0]
    total = 0.0
    for j in range(1, bins + 1):
        in_bin = which == j
        count = int(np.sum(in_bin))
        if count == 0:
            continue
        acc = float(np.mean(correct[in_bin]))
        avg_conf = float(np.mean(conf[in_bin]))
        total += (count / n) * abs(acc - avg_conf)
    return float(total)


def ambiguity_decomposition(member_logits, labels) -> tuple[float, float, float]:
    """(average loss, ambiguity, ensemble loss) under logit-mean ensembling.

    Average loss is the mean over members of the per-member NLL; ensemble
    loss is the NLL of softmax applied to the arithmetic mean of member
    logits; ambiguity is their difference and is nonnegative by convexity
    of log-sum-exp.
    """
    z = np.asarray(member_logits, dtype=np.float32)
    if z.ndim != 3:
        raise ShapeError(f"member logits must be [S, N, K], got shape {z.shape}")
    per_member = [nll(softmax(z[s]), labels) for s in range(z.shape[0])]
    a = float(sum(per_member) / len(per_member))
    c = nll(softmax(mean_stack(z)), labels)
    return a, a - c, c


def evaluate(
    member_logits,
    labels,
    memory_bits: int,
    include_ambiguity: bool = True,
) -> EvalReport:
    """Full report from stacked member logits [S, N, K].

    Headline metrics (NLL/ERR/ECE) use probability ensembling: the mean of
    member softmax outputs. The decomposition terms use logit ensembling.
    """
    z = np.asarray(member_logits, dtype=np.float32)
    if z.ndim != 3:
        raise ShapeError(f"member logits must be [S, N, K], got shape {z.shape}")
    member_probs = softmax(z)
    probs = mean_stack(member_probs)
    per_member = [nll(member_probs[s], labels) for s in range(z.shape[0])]
    a = float(sum(per_member) / len(per_member))
    c = nll(softmax(mean_stack(z)), labels)
    return EvalReport(
        nll=nll(probs, labels),
        err=err(probs, labels),
        ece=ece(probs, labels),
        avg_loss=a,
        ensemble_loss=c,
        ambiguity=(a - c) if include_ambiguity else None,
        memory_bits=int(memory_bits),
        per_member_nll=per_member,
    )
