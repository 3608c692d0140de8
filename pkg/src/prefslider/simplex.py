"""Preference vectors on the probability simplex and the structured sampling
distribution used during training (interior Dirichlet draws with forced
vertex/edge overrides, deterministic per prompt and step)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import seeds

SUM_TOL = 1e-9


class SimplexError(ValueError):
    """Raised for vectors off the simplex or invalid sampling configs."""


@dataclass(frozen=True)
class PreferenceVector:
    """Nonnegative weights over the reward channels, summing to one."""

    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.weights) < 1:
            raise SimplexError("preference vector needs at least one weight")
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0):
            raise SimplexError(f"negative weight in {self.weights}")
        if abs(float(w.sum()) - 1.0) > SUM_TOL:
            raise SimplexError(f"weights sum to {w.sum()}, expected 1")

    @staticmethod
    def of(values) -> "PreferenceVector":
        return PreferenceVector(tuple(float(v) for v in values))

    @staticmethod
    def uniform(m: int) -> "PreferenceVector":
        return PreferenceVector.of(np.full(m, 1.0 / m))

    @staticmethod
    def vertex(m: int, index: int) -> "PreferenceVector":
        w = np.zeros(m)
        w[index] = 1.0
        return PreferenceVector.of(w)

    @property
    def m(self) -> int:
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


def project_to_simplex(raw, *, neg_tol: float = 1e-6, sum_tol: float = 1e-3) -> PreferenceVector:
    """Clamp tiny negatives and renormalize; reject anything further off.

    Accepts components down to -neg_tol and sums within sum_tol of one.
    """
    w = np.asarray(raw, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise SimplexError("expected a 1-D weight vector")
    if np.any(w < -neg_tol):
        raise SimplexError(f"component below -{neg_tol}: {w.tolist()}")
    s = float(w.sum())
    if abs(s - 1.0) > sum_tol or s <= 0:
        raise SimplexError(f"weights sum to {s}, outside 1 +/- {sum_tol}")
    w = np.clip(w, 0.0, None)
    return PreferenceVector.of(w / w.sum())


@dataclass(frozen=True)
class PrefSampleConfig:
    """Structured sampling over the simplex.

    With probability p_vertex the interior draw is overridden by a uniformly
    chosen one-hot vertex; with p_edge (only meaningful for m > 2) by a
    Dir(1,1) mixture over two distinct uniformly chosen objectives; otherwise
    the draw is interior Dir(1, ..., 1).
    """

    m: int
    p_vertex: float = 0.2
    p_edge: float = 0.2
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.m < 1:
            raise SimplexError("m must be >= 1")
        if self.m < 2 and self.p_edge > 0:
            raise SimplexError("edge overrides require m >= 2")
        if not (0 <= self.p_vertex <= 1 and 0 <= self.p_edge <= 1):
            raise SimplexError("override probabilities must lie in [0, 1]")
        if self.p_vertex + self.p_edge > 1:
            raise SimplexError("p_vertex + p_edge must be <= 1")


def _interior_draw(rng: np.random.Generator, m: int) -> np.ndarray:
    # Dir(1,...,1) via normalized unit-rate exponentials: -log U is exact for
    # concentration one, no gamma sampler needed.
    u = rng.random(m)
    e = -np.log1p(-u)
    return e / e.sum()


def sample_preference(
    cfg: PrefSampleConfig, prompt_id: int, step: int, subgroup: int = 0
) -> PreferenceVector:
    """Draw one preference vector, deterministic in (base_seed, prompt_id, step).

    subgroup extends the stream key when one prompt carries several
    independently sampled preferences in the same step.
    """
    rng = seeds.generator(cfg.base_seed, "pref", prompt_id, step, subgroup)
    u = rng.random()
    if u < cfg.p_vertex:
        return PreferenceVector.vertex(cfg.m, int(rng.integers(cfg.m)))
    if u < cfg.p_vertex + cfg.p_edge and cfg.m > 2:
        i, j = rng.choice(cfg.m, size=2, replace=False)
        t = rng.random()
        w = np.zeros(cfg.m)
        w[int(i)] = t
        w[int(j)] = 1.0 - t
        return PreferenceVector.of(w)
    return PreferenceVector.of(_interior_draw(rng, cfg.m))


def uniform_grid(m: int, k: int) -> list[PreferenceVector]:
    """Simplex lattice of granularity k (k >= 2), C(k+m-2, m-1) points.

    For m = 2 this is [(1,0), ((k-2)/(k-1), 1/(k-1)), ..., (0,1)], ordered by
    descending first weight so sweeps move monotonically across the trade-off.
    """
    if k < 2:
        raise SimplexError("grid granularity k must be >= 2")

    def compositions(total: int, parts: int):
        if parts == 1:
            yield (total,)
            return
        for head in range(total, -1, -1):
            for rest in compositions(total - head, parts - 1):
                yield (head,) + rest

    denom = k - 1
    return [PreferenceVector.of(np.asarray(c, dtype=np.float64) / denom) for c in compositions(denom, m)]
