"""Run-level orchestration: pretraining, fine-tuning, and front evaluation.

The CLI and the HTTP service are thin layers over these functions; everything
here is deterministic in (config, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import morl, numcore, seeds
from .checkpoint import Checkpoint
from .config import RunConfig
from .flowpolicy import (
    ConditionedVelocityNet,
    PolicyTriple,
    euler_sample_batch,
    make_velocity_net,
    pretrain_flow_matching,
)
from .morl import LossMode, MorlConfig
from .pareto import FrontPoint, FrontReport, make_front_report
from .rewards import RewardSpec, evaluate_batch
from .simplex import PrefSampleConfig, PreferenceVector, uniform_grid


class ArchitectureMismatch(RuntimeError):
    pass


def build_net(cfg: RunConfig, seed: int | None = None) -> ConditionedVelocityNet:
    return make_velocity_net(
        data_dim=cfg.model.data_dim,
        omega_dim=cfg.omega_dim,
        hidden_width=cfg.model.hidden_width,
        hidden_layers=cfg.model.hidden_layers,
        activation=cfg.model.activation,
        mode=cfg.model.conditioning,
        enc_freqs=cfg.model.enc_freqs,
        omega_enc_freqs=cfg.model.omega_enc_freqs,
        projector_hidden=cfg.model.projector_hidden,
        seed=cfg.run.seed if seed is None else seed,
    )


def build_opt_state(cfg: RunConfig, params: list[np.ndarray]) -> numcore.OptState:
    o = cfg.optimizer
    return numcore.opt_init(
        params,
        lr=o.lr,
        beta1=o.beta1,
        beta2=o.beta2,
        weight_decay=o.weight_decay,
        eps=o.eps,
        grad_clip=o.grad_clip,
    )


def dataset_sampler(cfg: RunConfig):
    mean = np.asarray(cfg.pretrain.mean, dtype=np.float64)
    std = cfg.pretrain.std
    if cfg.pretrain.target == "point":
        return lambda rng, n: np.tile(mean, (n, 1))
    return lambda rng, n: mean + std * rng.standard_normal((n, mean.size))


def morl_config(cfg: RunConfig) -> MorlConfig:
    m = cfg.morl
    return MorlConfig(
        pref=PrefSampleConfig(
            m=cfg.omega_dim,
            p_vertex=cfg.preference.p_vertex,
            p_edge=cfg.preference.p_edge,
            base_seed=cfg.run.seed,
        ),
        group_size=m.group_size,
        eps_clip=m.eps_clip,
        beta_step=m.beta_step,
        lambda_kl=m.lambda_kl,
        ema_decay=m.ema_decay,
        loss_mode=LossMode(m.loss_mode, m.stch_mu),
        inner_epochs=m.inner_epochs,
        timesteps_per_sample=m.timesteps_per_sample,
        adv_eps=m.adv_eps,
        train_solver_steps=m.train_solver_steps,
        base_seed=cfg.run.seed,
        pref_subgroups=m.pref_subgroups,
        exploration_noise=m.exploration_noise,
        condition_on_omega=m.condition_on_omega,
        fixed_omega=tuple(m.fixed_omega) if m.fixed_omega is not None else None,
    )


def run_pretrain(cfg: RunConfig) -> tuple[PolicyTriple, list[float]]:
    """Flow-matching warm start; the result seeds current, old, and reference."""
    net = build_net(cfg)
    opt = build_opt_state(cfg, net.parameters())
    net, _, losses = pretrain_flow_matching(
        net,
        dataset_sampler(cfg),
        steps=cfg.pretrain.steps,
        optstate=opt,
        batch_size=cfg.pretrain.batch_size,
        seed=seeds.derive_seed(cfg.run.seed, "pretrain-run"),
    )
    return PolicyTriple.from_pretrained(net), losses


def check_architecture(cfg: RunConfig, net: ConditionedVelocityNet) -> None:
    expected = build_net(cfg)
    got = [p.shape for p in net.parameters()]
    want = [p.shape for p in expected.parameters()]
    if (
        got != want
        or net.mode != expected.mode
        or net.enc_freqs != expected.enc_freqs
        or net.omega_enc_freqs != expected.omega_enc_freqs
    ):
        raise ArchitectureMismatch(
            f"checkpoint architecture {net.mode}/{got} does not match config "
            f"{expected.mode}/{want}"
        )


def log_line(step: int, g: morl.GroupMetrics) -> str:
    doc = {
        "step": step,
        "prompt_id": g.prompt_id,
        "omega": g.omega,
        "mean_reward": g.mean_reward,
        "loss_nft": g.loss_nft,
        "loss_kl": g.loss_kl,
        "loss_total": g.loss_total,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def run_finetune(
    cfg: RunConfig, base: Checkpoint, log_path: Path | None = None
) -> tuple[PolicyTriple, numcore.OptState, list[str]]:
    """Run the outer loop from the checkpoint's step to morl.finetune_steps.

    Writes one JSONL line per (prompt, preference) group when log_path is set.
    """
    check_architecture(cfg, base.triple.current)
    triple = PolicyTriple(
        current=base.triple.current.copy(),
        old=base.triple.old.copy(),
        reference=base.triple.reference.copy(),
    )
    mcfg = morl_config(cfg)
    opt = base.opt_state or build_opt_state(cfg, triple.current.parameters())
    registry = cfg.registry()

    base_lr = cfg.optimizer.lr
    total = max(cfg.morl.finetune_steps, 1)

    lines: list[str] = []
    fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for step in range(base.step, cfg.morl.finetune_steps):
            if cfg.morl.lr_schedule == "cosine":
                opt.lr = base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total))
            prompts = [
                (step * cfg.morl.prompts_per_step + j) % cfg.morl.num_prompts
                for j in range(cfg.morl.prompts_per_step)
            ]
            for g in morl.train_step(triple, mcfg, prompts, registry, opt, step):
                line = log_line(step, g)
                lines.append(line)
                if fh:
                    fh.write(line + "\n")
    finally:
        if fh:
            fh.close()
    return triple, opt, lines


@dataclass
class EvalResult:
    report: FrontReport
    samples: list[tuple[int, np.ndarray, np.ndarray]]  # (omega index, points, rewards)


def _omega_label(omega: PreferenceVector) -> str:
    return "omega=[" + ",".join(f"{w:.4f}" for w in omega.weights) + "]"


def evaluate_front(
    net: ConditionedVelocityNet,
    registry: list[RewardSpec],
    omegas: list[PreferenceVector],
    n_samples: int,
    solver_steps: int,
    seed: int,
    label: str,
) -> EvalResult:
    """Per-preference sampling sweep -> mean-reward front points + raw samples."""
    points = []
    samples = []
    for idx, omega in enumerate(omegas):
        pts = euler_sample_batch(
            net, omega, n_samples, solver_steps, seeds.derive_seed(seed, "eval", idx)
        )
        r = evaluate_batch(registry, pts)
        points.append(FrontPoint(values=tuple(r.mean(axis=0).tolist()), label=_omega_label(omega)))
        samples.append((idx, pts, r))
    report = make_front_report(points, [s.name for s in registry], label)
    return EvalResult(report=report, samples=samples)


def eval_grid(
    cfg: RunConfig,
    net: ConditionedVelocityNet,
    grid_k: int,
    n_samples: int,
    seed: int | None = None,
    label: str | None = None,
) -> EvalResult:
    omegas = uniform_grid(cfg.omega_dim, grid_k)
    return evaluate_front(
        net,
        cfg.registry(),
        omegas,
        n_samples=n_samples,
        solver_steps=cfg.morl.eval_solver_steps,
        seed=cfg.run.seed if seed is None else seed,
        label=label or cfg.run.name,
    )


def samples_csv(result: EvalResult) -> str:
    """Raw sample dump: omega_index,x,y,r_1..r_M."""
    m = result.samples[0][2].shape[1] if result.samples else 0
    header = "omega_index,x,y," + ",".join(f"r_{i + 1}" for i in range(m))
    rows = [header]
    for idx, pts, r in result.samples:
        for p, rv in zip(pts, r):
            rows.append(
                f"{idx}," + ",".join(repr(float(v)) for v in p) + "," + ",".join(repr(float(v)) for v in rv)
            )
    return "\n".join(rows) + "\n"
