"""Dense float64 numerics: fixed-topology MLPs with hand-derived reverse-mode
gradients, a clipping AdamW optimizer, and a finite-difference gradient checker.

The layer set is closed (affine, tanh/silu), so gradients are written per layer
instead of going through a taped autodiff graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Tensor = np.ndarray

ACTIVATIONS = ("tanh", "silu")


class ShapeError(ValueError):
    """Raised when tensor shapes do not chain."""


class NonFiniteError(FloatingPointError):
    """Raised when a NaN/inf enters an operation that requires finite values."""


def _sigmoid(z: Tensor) -> Tensor:
    # Split by sign to stay overflow-free in f64.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activation(z: Tensor, kind: str) -> Tensor:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "silu":
        return z * _sigmoid(z)
    raise ValueError(f"unknown activation {kind!r}")


def activation_deriv(z: Tensor, kind: str) -> Tensor:
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if kind == "silu":
        s = _sigmoid(z)
        return s * (1.0 + z * (1.0 - s))
    raise ValueError(f"unknown activation {kind!r}")


def affine_forward(weight: Tensor, bias: Tensor, x: Tensor) -> Tensor:
    """x (..., in) -> x @ W.T + b with W (out, in)."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"input dim {x.shape[-1]} != layer in-dim {weight.shape[1]}")
    return x @ weight.T + bias


def affine_backward(weight: Tensor, x: Tensor, dz: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients of an affine layer: returns (dW, db, dx) for upstream dz (..., out)."""
    x2 = x.reshape(-1, x.shape[-1])
    dz2 = dz.reshape(-1, dz.shape[-1])
    dw = dz2.T @ x2
    db = dz2.sum(axis=0)
    dx = dz @ weight
    return dw, db, dx


@dataclass
class MlpParams:
    """Stacked affine layers with a shared hidden activation; last layer linear.

    layers[i] = (weight (out, in), bias (out,)). An empty layer list is the
    identity map (used by conditioning modes that consume encodings raw).
    """

    layers: list[tuple[Tensor, Tensor]]
    activation: str = "tanh"

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        for i in range(1, len(self.layers)):
            if self.layers[i][0].shape[1] != self.layers[i - 1][0].shape[0]:
                raise ShapeError(f"layer {i} in-dim does not chain with layer {i - 1}")

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1] if self.layers else 0

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0] if self.layers else 0

    def parameters(self) -> list[Tensor]:
        """Flat parameter list [W0, b0, W1, b1, ...] (live views, fixed order)."""
        out: list[Tensor] = []
        for w, b in self.layers:
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([(w.copy(), b.copy()) for w, b in self.layers], self.activation)

    def with_parameters(self, flat: list[Tensor]) -> "MlpParams":
        """Rebuild from a flat list in parameters() order."""
        if len(flat) != 2 * len(self.layers):
            raise ShapeError("parameter list length mismatch")
        layers = []
        for i, (w, b) in enumerate(self.layers):
            nw, nb = flat[2 * i], flat[2 * i + 1]
            if nw.shape != w.shape or nb.shape != b.shape:
                raise ShapeError(f"layer {i} shape mismatch")
            layers.append((np.asarray(nw, dtype=np.float64), np.asarray(nb, dtype=np.float64)))
        return MlpParams(layers, self.activation)


def mlp_init(
    dims: list[int],
    activation: str = "tanh",
    rng: np.random.Generator | None = None,
    final_scale: float | None = None,
    hidden_scale: float = 1.0,
) -> MlpParams:
    """Xavier-initialized MLP with the given [in, h1, ..., out] dims.

    final_scale, when given, replaces Xavier on the last layer with
    N(0, final_scale^2) weights and zero bias (near-identity conditioning init);
    hidden_scale multiplies the Xavier std of the remaining layers.
    """
    rng = rng or np.random.default_rng(0)
    layers = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        last = i == len(dims) - 2
        if last and final_scale is not None:
            w = rng.normal(0.0, final_scale, size=(fan_out, fan_in))
        else:
            w = rng.normal(
                0.0, hidden_scale * np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_out, fan_in)
            )
        layers.append((w.astype(np.float64), np.zeros(fan_out)))
    return MlpParams(layers, activation)


def mlp_forward(params: MlpParams, x: Tensor) -> Tensor:
    x = np.asarray(x, dtype=np.float64)
    a = x
    n = len(params.layers)
    for i, (w, b) in enumerate(params.layers):
        z = affine_forward(w, b, a)
        a = z if i == n - 1 else activation(z, params.activation)
    return a


def mlp_forward_trace(params: MlpParams, x: Tensor) -> tuple[Tensor, list[tuple[Tensor, Tensor]]]:
    """Forward pass keeping (layer input, preactivation) per layer for backward."""
    x = np.asarray(x, dtype=np.float64)
    a = x
    trace: list[tuple[Tensor, Tensor]] = []
    n = len(params.layers)
    for i, (w, b) in enumerate(params.layers):
        z = affine_forward(w, b, a)
        trace.append((a, z))
        a = z if i == n - 1 else activation(z, params.activation)
    return a, trace


def mlp_backward_trace(
    params: MlpParams, trace: list[tuple[Tensor, Tensor]], upstream: Tensor
) -> tuple[list[Tensor], Tensor]:
    """Reverse pass from a saved trace. Returns (grads in parameters() order, dx)."""
    n = len(params.layers)
    grads: list[Tensor | None] = [None] * (2 * n)
    da = np.asarray(upstream, dtype=np.float64)
    for i in range(n - 1, -1, -1):
        w, _ = params.layers[i]
        a_in, z = trace[i]
        dz = da if i == n - 1 else da * activation_deriv(z, params.activation)
        dw, db, da = affine_backward(w, a_in, dz)
        grads[2 * i] = dw
        grads[2 * i + 1] = db
    return grads, da  # type: ignore[return-value]


def mlp_backward(params: MlpParams, x: Tensor, upstream: Tensor) -> tuple[list[Tensor], Tensor]:
    """Exact reverse-mode gradients of mlp_forward under the given upstream grad."""
    y, trace = mlp_forward_trace(params, x)
    if np.shape(upstream) != y.shape:
        raise ShapeError(f"upstream shape {np.shape(upstream)} != output shape {y.shape}")
    return mlp_backward_trace(params, trace, upstream)


@dataclass
class OptState:
    """AdamW state: first/second moments shaped like the parameter list."""

    m: list[Tensor]
    v: list[Tensor]
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    eps: float = 1e-8
    grad_clip: float = 1.0


def opt_init(
    params: list[Tensor],
    lr: float = 3e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    weight_decay: float = 1e-4,
    eps: float = 1e-8,
    grad_clip: float = 1.0,
) -> OptState:
    return OptState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        step=0,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        weight_decay=weight_decay,
        eps=eps,
        grad_clip=grad_clip,
    )


def global_norm(grads: list[Tensor]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def adamw_step(
    state: OptState, params: list[Tensor], grads: list[Tensor]
) -> tuple[list[Tensor], OptState]:
    """One AdamW update: global-norm clip, bias-corrected moments, decoupled decay.

    Returns fresh parameter arrays; state moments are updated in place.
    """
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ShapeError("params/grads shape mismatch")
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise NonFiniteError("non-finite gradient; step rejected")

    norm = global_norm(grads)
    if state.grad_clip > 0 and norm > state.grad_clip:
        scale = state.grad_clip / norm
        grads = [g * scale for g in grads]

    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    new_params = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        new_params.append(p - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p))
    return new_params, state


@dataclass
class GradCheckReport:
    max_rel_err: float
    n_checked: int
    tolerance: float
    worst_coord: tuple[int, int] = field(default=(-1, -1))  # (param index, flat coord)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def grad_check(
    loss_fn,
    params: list[Tensor],
    tolerance: float = 1e-4,
    n_probe: int = 64,
    h: float = 1e-5,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    loss_fn(params) must return (loss, grads) with grads in the params order
    and must be pure/deterministic. Probes a random coordinate subsample.
    """
    _, grads = loss_fn(params)
    rng = np.random.Generator(np.random.PCG64(seed))
    sizes = [p.size for p in params]
    total = sum(sizes)
    picks = rng.choice(total, size=min(n_probe, total), replace=False)

    offsets = np.cumsum([0] + sizes)
    max_err = 0.0
    worst = (-1, -1)
    for flat_idx in picks:
        pi = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        ci = int(flat_idx - offsets[pi])

        def shifted(delta: float) -> list[Tensor]:
            out = [p.copy() if j == pi else p for j, p in enumerate(params)]
            out[pi].flat[ci] += delta
            return out

        lp, _ = loss_fn(shifted(+h))
        lm, _ = loss_fn(shifted(-h))
        fd = (lp - lm) / (2.0 * h)
        an = float(grads[pi].flat[ci])
        err = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
        if err > max_err:
            max_err = err
            worst = (pi, ci)
    return GradCheckReport(max_rel_err=max_err, n_checked=len(picks), tolerance=tolerance, worst_coord=worst)
