"""Radial loss-landscape analysis over the plane through three checkpoints.

The plane is spanned by an orthonormal basis (u, v): u points from the
first anchor toward the second, v is the Gram-Schmidt remainder of the
third. Surfaces are evaluated on a uniform grid over the anchors' bounding
box (plus a margin): the cross-entropy of the reconstructed model at each
point, and the fraction of inputs whose argmax prediction differs from the
second and third anchors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GeometryError
from .metrics import Dataset, nll
from .nn import Checkpoint, ModelSpec, forward
from .tensor import softmax

COLLINEAR_RTOL = 1e-7
DEFAULT_RESOLUTION = 25
DEFAULT_MARGIN_FRACTION = 0.2
ANCHOR_NAMES = ("a", "b", "c")


@dataclass(frozen=True)
class PlaneBasis:
    """Origin plus orthonormal in-plane directions and anchor coordinates."""

    model_spec: ModelSpec
    origin: np.ndarray  # float64 [D]
    u: np.ndarray       # float64 [D], unit
    v: np.ndarray       # float64 [D], unit, orthogonal to u
    coords: np.ndarray  # float64 [3, 2]: anchors a, b, c in plane coordinates


@dataclass(frozen=True)
class LandscapeGrid:
    """Plot-ready surfaces over the plane."""

    alphas: np.ndarray      # float64 [R]
    betas: np.ndarray       # float64 [R]
    nll: np.ndarray         # float64 [R, R]
    disagree_1: np.ndarray  # float64 [R, R], vs anchor b
    disagree_2: np.ndarray  # float64 [R, R], vs anchor c
    anchor_coords: np.ndarray  # float64 [3, 2]


def flatten_checkpoint(ckpt: Checkpoint) -> np.ndarray:
    """All weights and biases as one float64 vector in layer order."""
    parts = []
    for w_name, b_name in ckpt.spec.layer_names():
        parts.append(ckpt.weights[w_name].astype(np.float64).ravel())
        parts.append(ckpt.weights[b_name].astype(np.float64).ravel())
    return np.concatenate(parts)


def unflatten_checkpoint(vec: np.ndarray, spec: ModelSpec) -> Checkpoint:
    """Inverse of flatten_checkpoint; values cast back to float32."""
    weights: dict[str, np.ndarray] = {}
    dims = spec.layer_dims
    offset = 0
    for i, (w_name, b_name) in enumerate(spec.layer_names(), start=1):
        w_size = dims[i] * dims[i - 1]
        weights[w_name] = (
            vec[offset : offset + w_size].astype(np.float32).reshape(dims[i], dims[i - 1])
        )
        offset += w_size
        weights[b_name] = vec[offset : offset + dims[i]].astype(np.float32)
        offset += dims[i]
    return Checkpoint(spec=spec, weights=weights)


def plane_basis(w0: Checkpoint, w1: Checkpoint, w2: Checkpoint) -> PlaneBasis:
    """Orthonormal basis of the plane through three checkpoints.

    Raises GeometryError when any pair coincides or when the third anchor
    lies on the line through the first two.
    """
    if not (w0.spec == w1.spec == w2.spec):
        raise ConfigError("anchors must share one model spec")
    origin = flatten_checkpoint(w0)
    d1 = flatten_checkpoint(w1) - origin
    d2 = flatten_checkpoint(w2) - origin
    n1 = float(np.linalg.norm(d1))
    n2_total = float(np.linalg.norm(d2))
    if n1 == 0.0:
        raise GeometryError("anchors a and b coincide")
    if n2_total == 0.0:
        raise GeometryError("anchors a and c coincide")
    u = d1 / n1
    proj = float(np.dot(d2, u))
    resid = d2 - proj * u
    n2 = float(np.linalg.norm(resid))
    if n2 <= COLLINEAR_RTOL * n2_total:
        raise GeometryError("anchor c is collinear with anchors a and b")
    v = resid / n2
    coords = np.array([[0.0, 0.0], [n1, 0.0], [proj, n2]], dtype=np.float64)
    return PlaneBasis(model_spec=w0.spec, origin=origin, u=u, v=v, coords=coords)


def checkpoint_at(basis: PlaneBasis, alpha: float, beta: float) -> Checkpoint:
    """Model reconstructed at plane coordinates (alpha, beta)."""
    vec = basis.origin + alpha * basis.u + beta * basis.v
    return unflatten_checkpoint(vec, basis.model_spec)


def predictions_at(
    basis: PlaneBasis, data: Dataset, alpha: float, beta: float
) -> tuple[float, np.ndarray]:
    """(cross-entropy, argmax predictions) of the model at (alpha, beta)."""
    logits = forward(checkpoint_at(basis, alpha, beta), data.features)
    probs = softmax(logits)
    return nll(probs, data.labels), np.argmax(probs, axis=1)


def eval_grid(
    basis: PlaneBasis,
    data: Dataset,
    resolution: int = DEFAULT_RESOLUTION,
    margin: float | None = None,
) -> LandscapeGrid:
    """Evaluate loss and disagreement surfaces over the plane.

    The grid covers the anchors' bounding box expanded by ``margin`` on
    every side (default: 20% of the box diagonal). Disagreement reference
    predictions come from the anchors reconstructed at their own plane
    coordinates, so self-disagreement is exactly zero there.
    """
    if resolution < 3:
        raise ConfigError(f"grid resolution must be >= 3, got {resolution}")
    xs, ys = basis.coords[:, 0], basis.coords[:, 1]
    if margin is None:
        margin = DEFAULT_MARGIN_FRACTION * float(
            np.hypot(xs.max() - xs.min(), ys.max() - ys.min())
        )
    if margin < 0:
        raise ConfigError(f"margin must be >= 0, got {margin}")
    alphas = np.linspace(xs.min() - margin, xs.max() + margin, resolution)
    betas = np.linspace(ys.min() - margin, ys.max() + margin, resolution)

    _, preds_b = predictions_at(basis, data, *basis.coords[1])
    _, preds_c = predictions_at(basis, data, *basis.coords[2])

    shape = (resolution, resolution)
    nll_surface = np.zeros(shape)
    disagree_1 = np.zeros(shape)
    disagree_2 = np.zeros(shape)
    for i, alpha in enumerate(alphas):
        for j, beta in enumerate(betas):
            value, preds = predictions_at(basis, data, alpha, beta)
            nll_surface[i, j] = value
            disagree_1[i, j] = float(np.mean(preds != preds_b))
            disagree_2[i, j] = float(np.mean(preds != preds_c))

    return LandscapeGrid(
        alphas=alphas,
        betas=betas,
        nll=nll_surface,
        disagree_1=disagree_1,
        disagree_2=disagree_2,
        anchor_coords=basis.coords.copy(),
    )


def write_grid_csv(grid: LandscapeGrid, path) -> None:
    """One row per grid point, row-major over (alpha, beta)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "beta", "nll", "disagree_1", "disagree_2"])
        for i, alpha in enumerate(grid.alphas):
            for j, beta in enumerate(grid.betas):
                writer.writerow([
                    f"{alpha:.10g}",
                    f"{beta:.10g}",
                    f"{grid.nll[i, j]:.10g}",
                    f"{grid.disagree_1[i, j]:.10g}",
                    f"{grid.disagree_2[i, j]:.10g}",
                ])


def write_anchors_csv(grid: LandscapeGrid, path, names=ANCHOR_NAMES) -> None:
    """Sidecar table of anchor names and plane coordinates."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "alpha", "beta"])
        for name, (alpha, beta) in zip(names, grid.anchor_coords):
            writer.writerow([name, f"{alpha:.10g}", f"{beta:.10g}"])
