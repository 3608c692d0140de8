"""Multi-reward fine-tuning of the conditioned policy.

One outer step: sample a preference per prompt group, generate K samples under
it, score every reward channel, z-score advantages per channel (late
scalarization; the preference enters only when per-reward losses are
aggregated), then run inner epochs of implicit-velocity-steered flow-matching
updates with KL regularization toward the frozen reference, and finally EMA
the old policy. Early-scalarization and smooth-max (STCH) aggregation ship as
ablation modes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import numcore, seeds
from .flowpolicy import (
    ConditionedVelocityNet,
    PolicyTriple,
    ema_update,
    euler_sample_batch,
    velocity_backward,
    velocity_batch,
    velocity_trace,
)
from .rewards import RewardSpec, evaluate_batch
from .simplex import PrefSampleConfig, PreferenceVector, sample_preference

LOSS_MODES = ("late", "early", "stch")

logger = logging.getLogger("prefslider.morl")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossMode:
    kind: str = "late"
    mu: float = 0.1  # smooth-max temperature, stch only

    def __post_init__(self) -> None:
        if self.kind not in LOSS_MODES:
            raise ValueError(f"loss mode must be one of {LOSS_MODES}")
        if self.kind == "stch" and not self.mu > 0:
            raise ValueError("stch requires mu > 0")


@dataclass
class MorlConfig:
    pref: PrefSampleConfig
    group_size: int = 32
    eps_clip: float = 5.0
    beta_step: float = 0.1
    lambda_kl: float = 0.0075
    ema_decay: float = 0.9
    loss_mode: LossMode = field(default_factory=LossMode)
    inner_epochs: int = 1
    timesteps_per_sample: int = 4
    adv_eps: float = 1e-8
    train_solver_steps: int = 32
    base_seed: int = 0
    pref_subgroups: int = 1
    exploration_noise: float = 0.0
    condition_on_omega: bool = True
    fixed_omega: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2 (group statistics degenerate)")
        if not self.eps_clip > 0:
            raise ValueError("eps_clip must be > 0")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError("ema_decay must lie in [0, 1]")
        if not 0.0 < self.beta_step < 1.0:
            raise ValueError("beta_step must lie in (0, 1)")
        if self.inner_epochs < 1 or self.timesteps_per_sample < 1:
            raise ValueError("inner_epochs and timesteps_per_sample must be >= 1")


def per_channel_advantages(rewards: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Z-score each reward channel across the K samples of one group.

    Population std; the preference vector does not enter the normalization.
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] < 2:
        raise TrainingError("advantages need a (K, M) matrix with K >= 2")
    mu = r.mean(axis=0)
    sigma = r.std(axis=0)  # ddof=0
    return (r - mu) / (sigma + eps)


def early_scalarized_advantages(
    rewards: np.ndarray, omega: PreferenceVector, eps: float = 1e-8
) -> np.ndarray:
    """Ablation path: scalarize raw rewards first, then z-score the scalar."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] < 2:
        raise TrainingError("advantages need a (K, M) matrix with K >= 2")
    scalar = r @ omega.as_array()
    return (scalar - scalar.mean()) / (scalar.std() + eps)


def rho_map(advantage, eps_clip: float):
    """Clipped affine map of advantages into interpolation weights in [0, 1]."""
    if not eps_clip > 0:
        raise ValueError("eps_clip must be > 0")
    a = np.asarray(advantage, dtype=np.float64)
    out = 0.5 + 0.5 * np.clip(a / eps_clip, -1.0, 1.0)
    return float(out) if np.isscalar(advantage) else out


def implicit_velocities(v_old: np.ndarray, v_theta: np.ndarray, beta: float):
    """Positive/negative velocity targets extrapolated between old and current."""
    v_old = np.asarray(v_old, dtype=np.float64)
    v_theta = np.asarray(v_theta, dtype=np.float64)
    if v_old.shape != v_theta.shape:
        raise numcore.ShapeError(f"{v_old.shape} vs {v_theta.shape}")
    v_plus = (1.0 - beta) * v_old + beta * v_theta
    v_minus = (1.0 + beta) * v_old - beta * v_theta
    return v_plus, v_minus


def nft_loss_per_reward(rho_m: float, v_plus, v_minus, v_target) -> float:
    """rho-weighted mix of the positive- and negative-target matching losses."""
    dp = np.asarray(v_plus) - np.asarray(v_target)
    dm = np.asarray(v_minus) - np.asarray(v_target)
    return float(rho_m * np.sum(dp * dp) + (1.0 - rho_m) * np.sum(dm * dm))


def kl_loss(v_theta_out, v_ref_out) -> float:
    """Squared L2 distance between current and reference velocities."""
    a = np.asarray(v_theta_out, dtype=np.float64)
    b = np.asarray(v_ref_out, dtype=np.float64)
    if a.shape != b.shape:
        raise numcore.ShapeError(f"{a.shape} vs {b.shape}")
    d = a - b
    return float(np.sum(d * d))


def aggregate_losses(mode: LossMode, per_reward: np.ndarray, omega: np.ndarray) -> float:
    """Collapse per-reward losses to a scalar; the preference enters only here."""
    losses = np.asarray(per_reward, dtype=np.float64)
    w = np.asarray(omega, dtype=np.float64)
    if not np.all(np.isfinite(losses)):
        raise TrainingError(f"non-finite per-reward losses {losses}")
    if mode.kind == "stch":
        z = w * losses / mode.mu
        zmax = z.max()
        return float(mode.mu * (zmax + np.log(np.sum(np.exp(z - zmax)))))
    # "early" reaches this with a single pre-scalarized loss and omega = (1,).
    return float(w @ losses)


def _aggregation_weights(mode: LossMode, per_reward: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """d(aggregate)/d(L_m) for the gradient path."""
    w = np.asarray(omega, dtype=np.float64)
    if mode.kind == "stch":
        z = w * per_reward / mode.mu
        z = z - z.max()
        e = np.exp(z)
        return w * e / e.sum()
    return w


@dataclass
class UpdateBatch:
    """Everything one optimizer update needs, fixed w.r.t. the current params.

    Rows pool the timestep draws of the participating samples (one sample per
    group when prompts are batched): x_t (R, D), t (R,), omega_cond (R, M) fed
    to the nets, v_target (R, D), per-row per-reward rho (R, M') and
    aggregation weights (R, M') (M' = 1 in early mode).
    """

    x_t: np.ndarray
    t: np.ndarray
    omega_cond: np.ndarray
    v_target: np.ndarray
    rho: np.ndarray
    agg_omega: np.ndarray

    @staticmethod
    def concat(batches: list["UpdateBatch"]) -> "UpdateBatch":
        return UpdateBatch(
            x_t=np.concatenate([b.x_t for b in batches]),
            t=np.concatenate([b.t for b in batches]),
            omega_cond=np.concatenate([b.omega_cond for b in batches]),
            v_target=np.concatenate([b.v_target for b in batches]),
            rho=np.concatenate([b.rho for b in batches]),
            agg_omega=np.concatenate([b.agg_omega for b in batches]),
        )


def update_loss_and_grads(
    current: ConditionedVelocityNet,
    old: ConditionedVelocityNet,
    reference: ConditionedVelocityNet,
    batch: UpdateBatch,
    cfg: MorlConfig,
) -> tuple[float, list[np.ndarray], dict[str, float]]:
    """Loss of one update (mean over the batch rows) plus exact parameter grads.

    old and reference are constants; gradients flow through the current net via
    the implicit velocity targets and the KL term. parts carries the per-row
    NFT/KL terms so callers can attribute losses back to groups.
    """
    n_rows = batch.x_t.shape[0]
    beta = cfg.beta_step
    omega_null = np.tile(
        PreferenceVector.uniform(reference.omega_dim).as_array(), (n_rows, 1)
    )

    y, trace = velocity_trace(current, batch.x_t, batch.t, batch.omega_cond)
    y_old = velocity_batch(old, batch.x_t, batch.t, batch.omega_cond)
    y_ref = velocity_batch(reference, batch.x_t, batch.t, omega_null)

    v_plus, v_minus = implicit_velocities(y_old, y, beta)
    dp = v_plus - batch.v_target
    dm = v_minus - batch.v_target
    sq_p = np.sum(dp * dp, axis=1)  # (R,)
    sq_m = np.sum(dm * dm, axis=1)

    rho = batch.rho  # (R, M')
    per_reward = rho * sq_p[:, None] + (1.0 - rho) * sq_m[:, None]  # (R, M')

    nft_terms = np.empty(n_rows)
    dy = np.zeros_like(y)
    for r in range(n_rows):
        nft_terms[r] = aggregate_losses(cfg.loss_mode, per_reward[r], batch.agg_omega[r])
        wts = _aggregation_weights(cfg.loss_mode, per_reward[r], batch.agg_omega[r])
        rho_bar = float(wts @ rho[r])
        one_minus = float(wts @ (1.0 - rho[r]))
        dy[r] = 2.0 * beta * (rho_bar * dp[r] - one_minus * dm[r])

    d_ref = y - y_ref
    kl_terms = np.sum(d_ref * d_ref, axis=1)
    dy += 2.0 * cfg.lambda_kl * d_ref
    dy /= n_rows

    loss_nft = float(nft_terms.mean())
    loss_kl = float(kl_terms.mean())
    loss_total = loss_nft + cfg.lambda_kl * loss_kl
    grads = velocity_backward(current, trace, dy)
    parts = {
        "loss_nft": loss_nft,
        "loss_kl": loss_kl,
        "loss_total": loss_total,
        "nft_rows": nft_terms,
        "kl_rows": kl_terms,
    }
    return loss_total, grads, parts


def make_update_loss_fn(
    template: ConditionedVelocityNet,
    old: ConditionedVelocityNet,
    reference: ConditionedVelocityNet,
    batch: UpdateBatch,
    cfg: MorlConfig,
):
    """Pure params -> (loss, grads) closure for finite-difference checking."""

    def loss_fn(params: list[np.ndarray]) -> tuple[float, list[np.ndarray]]:
        net = template.with_parameters(params)
        loss, grads, _ = update_loss_and_grads(net, old, reference, batch, cfg)
        return loss, grads

    return loss_fn


@dataclass
class GroupMetrics:
    prompt_id: int
    subgroup: int
    omega: list[float]
    mean_reward: list[float]
    loss_nft: float
    loss_kl: float
    loss_total: float


@dataclass
class _Group:
    prompt_id: int
    subgroup: int
    omega: PreferenceVector
    cond_omega: PreferenceVector
    x0: np.ndarray
    rewards: np.ndarray
    rho: np.ndarray  # (K, M')
    agg_omega: np.ndarray


def _build_group(
    triple: PolicyTriple,
    cfg: MorlConfig,
    registry: list[RewardSpec],
    prompt_id: int,
    subgroup: int,
    step: int,
) -> _Group | None:
    m = len(registry)
    if cfg.fixed_omega is not None:
        omega = PreferenceVector.of(cfg.fixed_omega)
    else:
        omega = sample_preference(cfg.pref, prompt_id, step, subgroup)
    cond_omega = omega if cfg.condition_on_omega else PreferenceVector.uniform(m)

    gen_seed = seeds.derive_seed(cfg.base_seed, "gen", step, prompt_id, subgroup)
    x0 = euler_sample_batch(
        triple.current, cond_omega, cfg.group_size, cfg.train_solver_steps, gen_seed,
        cfg.exploration_noise,
    )
    r = evaluate_batch(registry, x0)
    if not np.all(np.isfinite(r)):
        logger.warning(
            "skipping group (step=%d prompt=%d subgroup=%d): non-finite rewards",
            step, prompt_id, subgroup,
        )
        return None

    if cfg.loss_mode.kind == "early":
        adv = early_scalarized_advantages(r, omega, cfg.adv_eps)
        rho = rho_map(adv, cfg.eps_clip)[:, None]  # (K, 1)
        agg_omega = np.ones(1)
    else:
        adv = per_channel_advantages(r, cfg.adv_eps)
        rho = rho_map(adv, cfg.eps_clip)
        agg_omega = omega.as_array()
    return _Group(prompt_id, subgroup, omega, cond_omega, x0, r, rho, agg_omega)


def train_step(
    triple: PolicyTriple,
    cfg: MorlConfig,
    prompts: list[int],
    registry: list[RewardSpec],
    optstate: numcore.OptState,
    step: int,
) -> list[GroupMetrics]:
    """One outer iteration; mutates triple.current/triple.old and optstate.

    Order per the training procedure: generate + score all groups, snapshot the
    old policy, run inner-epoch updates against that snapshot, then EMA the old
    policy toward the updated current one. Each optimizer update pools one
    sample from every group so preference pulls average within a step instead
    of thrashing the shared trunk.
    """
    built = [
        _build_group(triple, cfg, registry, prompt_id, sub, step)
        for prompt_id in prompts
        for sub in range(cfg.pref_subgroups)
    ]
    groups = [g for g in built if g is not None]
    if not groups:
        return []

    triple.old = triple.current.copy()  # snapshot used for implicit velocities
    old_snapshot = triple.old
    data_dim = triple.current.data_dim
    n_draws = cfg.timesteps_per_sample

    sums = [np.zeros(2) for _ in groups]
    counts = [0 for _ in groups]
    for epoch in range(cfg.inner_epochs):
        for i in range(cfg.group_size):
            batches = []
            for g in groups:
                rng = seeds.generator(
                    cfg.base_seed, "train", step, epoch, g.prompt_id, g.subgroup, i
                )
                t = rng.random(n_draws)
                xi = rng.standard_normal((n_draws, data_dim))
                batches.append(
                    UpdateBatch(
                        x_t=(1.0 - t)[:, None] * g.x0[i] + t[:, None] * xi,
                        t=t,
                        omega_cond=np.tile(g.cond_omega.as_array(), (n_draws, 1)),
                        v_target=xi - g.x0[i],
                        rho=np.tile(g.rho[i], (n_draws, 1)),
                        agg_omega=np.tile(g.agg_omega, (n_draws, 1)),
                    )
                )
            batch = UpdateBatch.concat(batches)
            loss, grads, parts = update_loss_and_grads(
                triple.current, old_snapshot, triple.reference, batch, cfg
            )
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at step={step} epoch={epoch} sample={i}: "
                    f"nft={parts['loss_nft']} kl={parts['loss_kl']}"
                )
            new_params, _ = numcore.adamw_step(optstate, triple.current.parameters(), grads)
            triple.current = triple.current.with_parameters(new_params)
            for gi in range(len(groups)):
                rows = slice(gi * n_draws, (gi + 1) * n_draws)
                sums[gi] += [parts["nft_rows"][rows].mean(), parts["kl_rows"][rows].mean()]
                counts[gi] += 1

    triple.old = ema_update(old_snapshot, triple.current, cfg.ema_decay)

    out = []
    for gi, g in enumerate(groups):
        nft = float(sums[gi][0] / counts[gi])
        kl = float(sums[gi][1] / counts[gi])
        out.append(
            GroupMetrics(
                prompt_id=g.prompt_id,
                subgroup=g.subgroup,
                omega=[float(w) for w in g.omega.weights],
                mean_reward=g.rewards.mean(axis=0).tolist(),
                loss_nft=nft,
                loss_kl=kl,
                loss_total=nft + cfg.lambda_kl * kl,
            )
        )
    return out
