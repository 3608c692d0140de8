"""Analytic reward functions over generated 2D points.

The default registry pairs two conflicting quadratic wells so the Pareto set
is a known segment; a scale multiplier lets configs reproduce the
mismatched-magnitude failure mode of early scalarization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simplex import PreferenceVector

KINDS = ("neg_sq_dist", "ring", "axis")


class RewardError(ValueError):
    pass


class OracleUnavailable(RewardError):
    """Raised when a closed-form optimum is requested for unsupported kinds."""


@dataclass(frozen=True)
class RewardSpec:
    """One reward channel.

    kinds:
      neg_sq_dist(anchor): -||x - anchor||^2
      ring(radius, sharpness): -sharpness * (||x|| - radius)^2
      axis(direction): <x, direction>
    scale multiplies the raw value (used by the mismatched-scale config).
    """

    name: str
    kind: str
    anchor: tuple[float, ...] | None = None
    radius: float | None = None
    sharpness: float | None = None
    direction: tuple[float, ...] | None = None
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise RewardError(f"unknown reward kind {self.kind!r}")
        if self.kind == "neg_sq_dist" and self.anchor is None:
            raise RewardError("neg_sq_dist requires an anchor")
        if self.kind == "ring" and (self.radius is None or self.sharpness is None):
            raise RewardError("ring requires radius and sharpness")
        if self.kind == "axis" and self.direction is None:
            raise RewardError("axis requires a direction")
        if not np.isfinite(self.scale):
            raise RewardError("scale must be finite")


def evaluate(spec: RewardSpec, x0: np.ndarray) -> float:
    x = np.asarray(x0, dtype=np.float64)
    if spec.kind == "neg_sq_dist":
        d = x - np.asarray(spec.anchor)
        val = -float(d @ d)
    elif spec.kind == "ring":
        r = float(np.linalg.norm(x))
        val = -spec.sharpness * (r - spec.radius) ** 2
    else:
        val = float(x @ np.asarray(spec.direction))
    return spec.scale * val


def evaluate_vector(registry: list[RewardSpec], x0: np.ndarray) -> np.ndarray:
    """Reward vector with channel order fixed by the registry."""
    if not registry:
        raise RewardError("empty reward registry")
    return np.asarray([evaluate(spec, x0) for spec in registry], dtype=np.float64)


def evaluate_batch(registry: list[RewardSpec], points: np.ndarray) -> np.ndarray:
    """(N, D) points -> (N, M) reward matrix."""
    pts = np.asarray(points, dtype=np.float64)
    cols = []
    for spec in registry:
        if spec.kind == "neg_sq_dist":
            d = pts - np.asarray(spec.anchor)
            col = -np.sum(d * d, axis=1)
        elif spec.kind == "ring":
            r = np.linalg.norm(pts, axis=1)
            col = -spec.sharpness * (r - spec.radius) ** 2
        else:
            col = pts @ np.asarray(spec.direction)
        cols.append(spec.scale * col)
    return np.stack(cols, axis=1)


def analytic_pareto_optimum(registry: list[RewardSpec], omega: PreferenceVector) -> np.ndarray:
    """Unique maximizer of the omega-weighted sum when every channel is a
    quadratic well: the (omega * scale)-weighted mean of the anchors."""
    if any(spec.kind != "neg_sq_dist" for spec in registry):
        raise OracleUnavailable("closed-form optimum only for neg_sq_dist registries")
    w = omega.as_array() * np.asarray([spec.scale for spec in registry])
    anchors = np.stack([np.asarray(spec.anchor, dtype=np.float64) for spec in registry])
    total = float(w.sum())
    if total <= 0:
        raise OracleUnavailable("weighted quadratic has no maximizer for zero total weight")
    return (w @ anchors) / total


def default_registry() -> list[RewardSpec]:
    """Two maximally conflicting wells; Pareto set is the segment between them."""
    return [
        RewardSpec(name="anchor_left", kind="neg_sq_dist", anchor=(-1.0, 0.0)),
        RewardSpec(name="anchor_right", kind="neg_sq_dist", anchor=(1.0, 0.0)),
    ]
