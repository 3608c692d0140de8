"""Preference-conditioned velocity field over 2D points.

The policy is an MLP trunk over [x_t, enc(t)] whose preference conditioning is
injected per mode: appended to the input, added to the time encoding, applied
as a shared scale/shift after every hidden layer, or both of the latter.
Conditioning projections start near zero so a fresh net is effectively
preference-agnostic. Sampling integrates dx/dt = v backwards from t=1 noise
with a deterministic Euler scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore, seeds
from .numcore import (
    MlpParams,
    NonFiniteError,
    ShapeError,
    Tensor,
    activation,
    activation_deriv,
    affine_backward,
    affine_forward,
    mlp_backward_trace,
    mlp_forward_trace,
    mlp_init,
)
from .simplex import PreferenceVector

CONDITIONING_MODES = ("input_concat", "film_residual", "time_embed_add", "hybrid")

COND_INIT_SCALE = 1e-3  # N(0, 1e-3) weights, zero bias on the final conditioning layer


class SamplingError(RuntimeError):
    def __init__(self, step: int, msg: str = "non-finite state during sampling"):
        super().__init__(f"{msg} (solver step {step})")
        self.step = step


class TrainingDivergence(RuntimeError):
    pass


def sinusoidal_encode(values: Tensor, n_freqs: int) -> Tensor:
    """(B,) or (B, M) scalars -> (B, 2F) or (B, 2F*M) sin/cos features.

    Per scalar: [sin(2^k pi v), cos(2^k pi v)] for k = 0..F-1.
    """
    v = np.asarray(values, dtype=np.float64)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, None]
    freqs = (2.0 ** np.arange(n_freqs)) * np.pi  # (F,)
    ang = v[:, :, None] * freqs  # (B, M, F)
    enc = np.stack([np.sin(ang), np.cos(ang)], axis=-1)  # (B, M, F, 2)
    return enc.reshape(v.shape[0], -1)


@dataclass
class ConditionedVelocityNet:
    """v(x_t, t, omega) with a fixed conditioning mode.

    cond_projector maps enc(omega) to the modulation vector; its layout is
    [time-embedding correction (2F) | scale+shift (2H)] depending on which
    pathways the mode enables. In input_concat mode the projector is the
    identity (no parameters) and enc(omega) feeds the trunk directly.
    """

    trunk: MlpParams
    cond_projector: MlpParams
    mode: str
    data_dim: int
    omega_dim: int
    enc_freqs: int = 8
    omega_enc_freqs: int = 1

    def __post_init__(self) -> None:
        if self.mode not in CONDITIONING_MODES:
            raise ValueError(f"unknown conditioning mode {self.mode!r}")

    @property
    def _has_time(self) -> bool:
        return self.mode in ("time_embed_add", "hybrid")

    @property
    def _has_film(self) -> bool:
        return self.mode in ("film_residual", "hybrid")

    @property
    def hidden_width(self) -> int:
        return self.trunk.layers[0][0].shape[0]

    def parameters(self) -> list[Tensor]:
        return self.trunk.parameters() + self.cond_projector.parameters()

    def with_parameters(self, flat: list[Tensor]) -> "ConditionedVelocityNet":
        nt = 2 * len(self.trunk.layers)
        return ConditionedVelocityNet(
            trunk=self.trunk.with_parameters(flat[:nt]),
            cond_projector=self.cond_projector.with_parameters(flat[nt:]),
            mode=self.mode,
            data_dim=self.data_dim,
            omega_dim=self.omega_dim,
            enc_freqs=self.enc_freqs,
            omega_enc_freqs=self.omega_enc_freqs,
        )

    def copy(self) -> "ConditionedVelocityNet":
        return ConditionedVelocityNet(
            trunk=self.trunk.copy(),
            cond_projector=self.cond_projector.copy(),
            mode=self.mode,
            data_dim=self.data_dim,
            omega_dim=self.omega_dim,
            enc_freqs=self.enc_freqs,
            omega_enc_freqs=self.omega_enc_freqs,
        )


def make_velocity_net(
    data_dim: int = 2,
    omega_dim: int = 2,
    hidden_width: int = 128,
    hidden_layers: int = 3,
    activation: str = "tanh",
    mode: str = "hybrid",
    enc_freqs: int = 8,
    omega_enc_freqs: int = 1,
    projector_hidden: int = 32,
    seed: int = 0,
) -> ConditionedVelocityNet:
    # the low-frequency default for the preference encoding keeps the learned
    # response smooth in omega; the time encoding stays high-resolution
    rng = np.random.Generator(np.random.PCG64(seeds.derive_seed(seed, "net-init")))
    t_enc = 2 * enc_freqs
    o_enc = 2 * omega_enc_freqs * omega_dim

    in_dim = data_dim + t_enc + (o_enc if mode == "input_concat" else 0)
    trunk = mlp_init([in_dim] + [hidden_width] * hidden_layers + [data_dim], activation, rng)

    if mode == "input_concat":
        # Identity projector; near-identity start comes from near-zero init of
        # the trunk columns that read enc(omega). Scaled below the projector
        # convention because the whole encoding (not a learned feature) feeds in.
        trunk.layers[0][0][:, data_dim + t_enc :] = rng.normal(
            0.0, 0.25 * COND_INIT_SCALE, size=(hidden_width, o_enc)
        )
        projector = MlpParams([], activation)
    else:
        out = (t_enc if mode in ("time_embed_add", "hybrid") else 0) + (
            2 * hidden_width if mode in ("film_residual", "hybrid") else 0
        )
        # Small hidden gain keeps the initial modulation well inside the
        # preference-insensitivity budget; AdamW rescales it freely afterwards.
        projector = mlp_init(
            [o_enc, projector_hidden, out],
            activation,
            rng,
            final_scale=COND_INIT_SCALE,
            hidden_scale=0.125,
        )

    return ConditionedVelocityNet(
        trunk=trunk,
        cond_projector=projector,
        mode=mode,
        data_dim=data_dim,
        omega_dim=omega_dim,
        enc_freqs=enc_freqs,
        omega_enc_freqs=omega_enc_freqs,
    )


@dataclass
class _Trace:
    u: Tensor
    layer_inputs: list[Tensor]
    preacts: list[Tensor]
    acts: list[Tensor]  # post-activation, pre-modulation
    scale: Tensor | None
    proj_trace: list | None
    enc_omega: Tensor


def velocity_trace(
    net: ConditionedVelocityNet, x: Tensor, t: Tensor, omega: Tensor
) -> tuple[Tensor, _Trace]:
    """Batched forward keeping everything the backward pass needs.

    x (B, D), t (B,), omega (B, M) -> velocities (B, D).
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.data_dim:
        raise ShapeError(f"x shape {x.shape} incompatible with data_dim {net.data_dim}")
    if omega.shape != (x.shape[0], net.omega_dim):
        raise ShapeError(f"omega shape {omega.shape} != ({x.shape[0]}, {net.omega_dim})")

    t_enc = 2 * net.enc_freqs
    et = sinusoidal_encode(t, net.enc_freqs)
    eo = sinusoidal_encode(omega, net.omega_enc_freqs)

    proj_trace = None
    p_time = None
    scale = shift = None
    if net.mode != "input_concat":
        p, proj_trace = mlp_forward_trace(net.cond_projector, eo)
        off = 0
        if net._has_time:
            p_time = p[:, :t_enc]
            off = t_enc
        if net._has_film:
            h = net.hidden_width
            scale = p[:, off : off + h]
            shift = p[:, off + h : off + 2 * h]

    t_in = et + p_time if p_time is not None else et
    parts = [x, t_in]
    if net.mode == "input_concat":
        parts.append(eo)
    u = np.concatenate(parts, axis=1)

    n = len(net.trunk.layers)
    a = u
    layer_inputs, preacts, acts = [], [], []
    for i, (w, b) in enumerate(net.trunk.layers):
        layer_inputs.append(a)
        z = affine_forward(w, b, a)
        preacts.append(z)
        if i == n - 1:
            a = z
            acts.append(None)  # type: ignore[arg-type]
        else:
            h = activation(z, net.trunk.activation)
            acts.append(h)
            a = h * (1.0 + scale) + shift if scale is not None else h

    return a, _Trace(u, layer_inputs, preacts, acts, scale, proj_trace, eo)


def velocity_backward(net: ConditionedVelocityNet, trace: _Trace, upstream: Tensor) -> list[Tensor]:
    """Parameter gradients (trunk then projector, parameters() order)."""
    n = len(net.trunk.layers)
    grads: list[Tensor | None] = [None] * (2 * n)
    da = np.asarray(upstream, dtype=np.float64)
    h_w = net.hidden_width
    d_scale = d_shift = None
    if trace.scale is not None:
        d_scale = np.zeros_like(trace.scale)
        d_shift = np.zeros_like(trace.scale)

    for i in range(n - 1, -1, -1):
        w, _ = net.trunk.layers[i]
        if i == n - 1:
            dz = da
        else:
            if trace.scale is not None:
                d_scale += da * trace.acts[i]
                d_shift += da
                da = da * (1.0 + trace.scale)
            dz = da * activation_deriv(trace.preacts[i], net.trunk.activation)
        dw, db, da = affine_backward(w, trace.layer_inputs[i], dz)
        grads[2 * i] = dw
        grads[2 * i + 1] = db

    # da now holds the gradient w.r.t. the trunk input u.
    t_enc = 2 * net.enc_freqs
    proj_grads: list[Tensor] = []
    if net.mode != "input_concat":
        dp_parts = []
        if net._has_time:
            dp_parts.append(da[:, net.data_dim : net.data_dim + t_enc])
        if trace.scale is not None:
            dp_parts.append(np.concatenate([d_scale, d_shift], axis=1))
        dp = np.concatenate(dp_parts, axis=1)
        proj_grads, _ = mlp_backward_trace(net.cond_projector, trace.proj_trace, dp)
    return grads + proj_grads  # type: ignore[operator]


def velocity_batch(net: ConditionedVelocityNet, x: Tensor, t: Tensor, omega: Tensor) -> Tensor:
    y, _ = velocity_trace(net, x, t, omega)
    return y


def velocity(
    net: ConditionedVelocityNet, x_t: Tensor, t: float, omega: PreferenceVector
) -> Tensor:
    """Single-point velocity v(x_t, t, omega); t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    x = np.asarray(x_t, dtype=np.float64).reshape(1, -1)
    w = omega.as_array().reshape(1, -1)
    return velocity_batch(net, x, np.asarray([t]), w)[0]


def forward_noise(x0: Tensor, xi: Tensor, t: float) -> tuple[Tensor, Tensor]:
    """Linear-path noising: x_t = (1-t) x0 + t xi, target velocity xi - x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    if x0.shape != xi.shape:
        raise ShapeError(f"x0 {x0.shape} vs xi {xi.shape}")
    return (1.0 - t) * x0 + t * xi, xi - x0


def euler_sample_batch(
    net: ConditionedVelocityNet,
    omega: PreferenceVector,
    n: int,
    n_steps: int,
    seed: int,
    noise_level: float = 0.0,
) -> Tensor:
    """Integrate n trajectories from t=1 noise down to t=0 data.

    noise_level > 0 adds Euler-Maruyama exploration noise during training-time
    generation; inference keeps the deterministic ODE (noise_level = 0).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    x = rng.standard_normal((n, net.data_dim))
    w = np.tile(omega.as_array(), (n, 1))
    dt = 1.0 / n_steps
    for i in range(n_steps):
        t = 1.0 - i * dt
        v = velocity_batch(net, x, np.full(n, t), w)
        x = x - dt * v
        if noise_level > 0.0 and i < n_steps - 1:
            x = x + noise_level * np.sqrt(dt) * rng.standard_normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise SamplingError(i)
    return x


def euler_sample(
    net: ConditionedVelocityNet,
    omega: PreferenceVector,
    n_steps: int,
    seed: int,
    noise_level: float = 0.0,
) -> Tensor:
    """One sample x0; deterministic given the seed."""
    return euler_sample_batch(net, omega, 1, n_steps, seed, noise_level)[0]


def ema_update(
    old: ConditionedVelocityNet, current: ConditionedVelocityNet, decay: float
) -> ConditionedVelocityNet:
    """Per-parameter convex combination: decay * old + (1 - decay) * current."""
    op, cp = old.parameters(), current.parameters()
    if len(op) != len(cp) or any(a.shape != b.shape for a, b in zip(op, cp)):
        raise ShapeError("EMA nets have mismatched parameter shapes")
    mixed = [decay * a + (1.0 - decay) * b for a, b in zip(op, cp)]
    return old.with_parameters(mixed)


@dataclass
class PolicyTriple:
    """Trainable current policy, EMA old copy, and frozen reference copy."""

    current: ConditionedVelocityNet
    old: ConditionedVelocityNet
    reference: ConditionedVelocityNet

    @staticmethod
    def from_pretrained(net: ConditionedVelocityNet) -> "PolicyTriple":
        return PolicyTriple(current=net.copy(), old=net.copy(), reference=net.copy())


def reference_velocity(net: ConditionedVelocityNet, x: Tensor, t: Tensor) -> Tensor:
    """Reference velocities are preference-agnostic: evaluated at uniform omega."""
    w = np.tile(PreferenceVector.uniform(net.omega_dim).as_array(), (x.shape[0], 1))
    return velocity_batch(net, x, t, w)


def pretrain_flow_matching(
    net: ConditionedVelocityNet,
    dataset_sampler,
    steps: int,
    optstate: numcore.OptState,
    batch_size: int = 256,
    seed: int = 0,
) -> tuple[ConditionedVelocityNet, numcore.OptState, list[float]]:
    """Standard flow-matching pretraining at uniform (preference-free) omega.

    dataset_sampler(rng, n) must yield (n, data_dim) target points. Returns the
    trained net, optimizer state, and the per-step loss history.
    """
    omega = np.tile(PreferenceVector.uniform(net.omega_dim).as_array(), (batch_size, 1))
    losses: list[float] = []
    net = net.copy()
    for step in range(steps):
        rng = seeds.generator(seed, "pretrain", step)
        x0 = dataset_sampler(rng, batch_size)
        t = rng.random(batch_size)
        xi = rng.standard_normal((batch_size, net.data_dim))
        x_t = (1.0 - t)[:, None] * x0 + t[:, None] * xi
        v_target = xi - x0

        y, trace = velocity_trace(net, x_t, t, omega)
        diff = y - v_target
        loss = float(np.mean(np.sum(diff * diff, axis=1)))
        if not np.isfinite(loss) or loss > 1e6:
            raise TrainingDivergence(f"pretraining diverged at step {step}: loss={loss}")
        losses.append(loss)

        grads = velocity_backward(net, trace, 2.0 * diff / batch_size)
        new_params, optstate = numcore.adamw_step(optstate, net.parameters(), grads)
        net = net.with_parameters(new_params)
    return net, optstate, losses
