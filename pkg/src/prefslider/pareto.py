"""Multi-objective evaluation: Pareto dominance, non-dominated filtering,
pooled min-max normalization, and the hypervolume indicator (exact 2D
sweep, Monte Carlo fallback for higher dimensions).

Hypervolume protocol: rewards are min-max normalized over the pooled point
set, then measured against the origin; only non-dominated points contribute.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ParetoError(ValueError):
    pass


@dataclass(frozen=True)
class FrontPoint:
    """A reward-space point (per-channel mean rewards) with a display tag."""

    values: tuple[float, ...]
    label: str = ""

    def __post_init__(self) -> None:
        if not all(np.isfinite(self.values)):
            raise ParetoError(f"non-finite front point {self.values}")


def _as_matrix(points) -> np.ndarray:
    if len(points) == 0:
        raise ParetoError("empty point set")
    rows = [p.values if isinstance(p, FrontPoint) else p for p in points]
    mat = np.asarray(rows, dtype=np.float64)
    if mat.ndim != 2:
        raise ParetoError("points must share a dimension")
    return mat


def dominates(a, b) -> bool:
    """True iff a >= b componentwise with at least one strict inequality."""
    av = np.asarray(a.values if isinstance(a, FrontPoint) else a, dtype=np.float64)
    bv = np.asarray(b.values if isinstance(b, FrontPoint) else b, dtype=np.float64)
    if av.shape != bv.shape:
        raise ParetoError(f"dimension mismatch {av.shape} vs {bv.shape}")
    return bool(np.all(av >= bv) and np.any(av > bv))


def nondominated_filter(points) -> np.ndarray:
    """Boolean mask of points not dominated by any other; duplicates all survive."""
    mat = _as_matrix(points)
    if mat.shape[1] == 2:
        return _nondominated_2d(mat)
    return _nondominated_general(mat)


def _nondominated_2d(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[0]
    order = np.lexsort((-mat[:, 1], -mat[:, 0]))  # x desc, then y desc
    mask = np.ones(n, dtype=bool)
    best_y_strict = -np.inf  # max y among strictly larger x
    i = 0
    while i < n:
        j = i
        x = mat[order[i], 0]
        while j < n and mat[order[j], 0] == x:
            j += 1
        group = order[i:j]
        group_max_y = mat[group, 1].max()
        for idx in group:
            y = mat[idx, 1]
            if best_y_strict >= y or y < group_max_y:
                mask[idx] = False
        best_y_strict = max(best_y_strict, group_max_y)
        i = j
    return mask


def _nondominated_general(mat: np.ndarray) -> np.ndarray:
    ge = np.all(mat[:, None, :] >= mat[None, :, :], axis=2)
    gt = np.any(mat[:, None, :] > mat[None, :, :], axis=2)
    dominated = np.any(ge & gt, axis=0)  # dominated[j]: some i beats j
    return ~dominated


def minmax_normalize(points) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Affinely map each channel to [0, 1] using pooled min/max.

    Returns (normalized, mins, maxs, degenerate_mask); channels with
    max == min map to 0.5 and are flagged rather than erroring, since pooled
    evaluations can legitimately produce constant channels.
    """
    mat = _as_matrix(points)
    if mat.shape[0] < 2:
        raise ParetoError("min-max normalization needs at least 2 points")
    mins = mat.min(axis=0)
    maxs = mat.max(axis=0)
    degenerate = maxs <= mins
    span = np.where(degenerate, 1.0, maxs - mins)
    normed = (mat - mins) / span
    normed[:, degenerate] = 0.5
    return normed, mins, maxs, degenerate


def hypervolume_2d(points) -> float:
    """Exact area dominated by the point set in [0,1]^2 w.r.t. the origin.

    Sort-and-sweep over the internally filtered non-dominated set.
    """
    mat = _as_matrix(points)
    if mat.shape[1] != 2:
        est, _ = hypervolume_mc(points, n_samples=1_000_000, seed=0)
        return est
    if np.any(mat < -1e-12) or np.any(mat > 1.0 + 1e-12):
        raise ParetoError("hypervolume_2d expects points normalized into [0,1]^2")
    mat = mat[_nondominated_2d(mat)]
    order = np.lexsort((-mat[:, 1], -mat[:, 0]))
    mat = mat[order]
    hv = 0.0
    y_prev = 0.0
    for x, y in mat:
        if y > y_prev:
            hv += x * (y - y_prev)
            y_prev = y
    return float(hv)


def hypervolume_mc(points, n_samples: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo hypervolume for any M: fraction of uniform samples in
    [0,1]^M dominated by at least one point, with binomial standard error."""
    mat = _as_matrix(points)
    if np.any(mat < -1e-12) or np.any(mat > 1.0 + 1e-12):
        raise ParetoError("hypervolume_mc expects points normalized into [0,1]^M")
    rng = np.random.Generator(np.random.PCG64(seed))
    hits = 0
    chunk = 100_000
    done = 0
    while done < n_samples:
        b = min(chunk, n_samples - done)
        s = rng.random((b, mat.shape[1]))
        covered = np.any(np.all(s[:, None, :] <= mat[None, :, :], axis=2), axis=1)
        hits += int(covered.sum())
        done += b
    p = hits / n_samples
    return float(p), float(np.sqrt(p * (1.0 - p) / n_samples))


def hypervolume(points, n_samples: int = 1_000_000, seed: int = 0) -> float:
    """Exact sweep for M = 2, Monte Carlo estimate otherwise."""
    mat = _as_matrix(points)
    if mat.shape[1] == 2:
        return hypervolume_2d(mat)
    est, _ = hypervolume_mc(mat, n_samples=n_samples, seed=seed)
    return est


@dataclass
class FrontReport:
    """Evaluation summary for one method: raw points, dominance mask over the
    normalization pool, hypervolume, and the pooled normalization itself."""

    label: str
    channels: list[str]
    points: list[FrontPoint]
    nondominated_mask: list[bool]
    hypervolume: float
    norm_min: list[float]
    norm_max: list[float]
    degenerate_channels: list[bool] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "channels": list(self.channels),
            "points": [{"label": p.label, "values": list(p.values)} for p in self.points],
            "nondominated_mask": [bool(b) for b in self.nondominated_mask],
            "hypervolume": self.hypervolume,
            "normalization": {
                "min": list(self.norm_min),
                "max": list(self.norm_max),
                "degenerate": [bool(b) for b in self.degenerate_channels],
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @staticmethod
    def from_json_dict(d: dict) -> "FrontReport":
        try:
            return FrontReport(
                label=d["label"],
                channels=list(d["channels"]),
                points=[FrontPoint(values=tuple(p["values"]), label=p["label"]) for p in d["points"]],
                nondominated_mask=[bool(b) for b in d["nondominated_mask"]],
                hypervolume=float(d["hypervolume"]),
                norm_min=list(d["normalization"]["min"]),
                norm_max=list(d["normalization"]["max"]),
                degenerate_channels=[bool(b) for b in d["normalization"]["degenerate"]],
            )
        except (KeyError, TypeError) as exc:
            raise ParetoError(f"malformed front report: {exc}") from exc


def make_front_report(points: list[FrontPoint], channels: list[str], label: str) -> FrontReport:
    """Self-normalized report: pooled min-max over this report's own points."""
    normed, mins, maxs, degenerate = minmax_normalize(points)
    mask = nondominated_filter(points)
    hv = hypervolume(normed)
    return FrontReport(
        label=label,
        channels=channels,
        points=points,
        nondominated_mask=[bool(b) for b in mask],
        hypervolume=hv,
        norm_min=mins.tolist(),
        norm_max=maxs.tolist(),
        degenerate_channels=[bool(b) for b in degenerate],
    )


@dataclass
class CompareRow:
    label: str
    hypervolume: float
    nondominated: int
    n_points: int


def compare_fronts(reports: list[FrontReport]) -> list[CompareRow]:
    """Pooled comparison: one global min-max over every method's raw points,
    then per-method hypervolume and non-dominated count within the pool."""
    if len(reports) < 2:
        raise ParetoError("comparison needs at least 2 reports")
    channels = reports[0].channels
    for r in reports[1:]:
        if r.channels != channels:
            raise ParetoError(f"mismatched channel names: {r.channels} vs {channels}")
    all_points = [p for r in reports for p in r.points]
    normed, _, _, _ = minmax_normalize(all_points)
    pooled_mask = nondominated_filter(all_points)

    rows = []
    offset = 0
    for r in reports:
        n = len(r.points)
        own = normed[offset : offset + n]
        rows.append(
            CompareRow(
                label=r.label,
                hypervolume=hypervolume(own),
                nondominated=int(pooled_mask[offset : offset + n].sum()),
                n_points=n,
            )
        )
        offset += n
    return rows
