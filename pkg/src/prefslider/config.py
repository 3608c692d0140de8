"""Run configuration: a sectioned TOML file validated into typed models.

Unknown keys are rejected everywhere so typos fail loudly; the full validated
snapshot is embedded in every checkpoint. See docs/config.md for the grammar.
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .flowpolicy import CONDITIONING_MODES
from .morl import LOSS_MODES
from .numcore import ACTIVATIONS
from .rewards import KINDS, RewardSpec


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RunSection(_Section):
    name: str = "run"
    seed: int = 0
    out_dir: str = "runs"


class ModelSection(_Section):
    data_dim: int = Field(default=2, ge=1)
    hidden_width: int = Field(default=128, ge=1)
    hidden_layers: int = Field(default=3, ge=1)
    activation: Literal[ACTIVATIONS] = "tanh"  # type: ignore[valid-type]
    conditioning: Literal[CONDITIONING_MODES] = "hybrid"  # type: ignore[valid-type]
    enc_freqs: int = Field(default=8, ge=1)
    omega_enc_freqs: int = Field(default=1, ge=1)
    projector_hidden: int = Field(default=32, ge=1)


class RewardChannel(_Section):
    name: str
    kind: Literal[KINDS]  # type: ignore[valid-type]
    anchor: Optional[list[float]] = None
    radius: Optional[float] = None
    sharpness: Optional[float] = None
    direction: Optional[list[float]] = None
    scale: float = 1.0

    def to_spec(self) -> RewardSpec:
        return RewardSpec(
            name=self.name,
            kind=self.kind,
            anchor=tuple(self.anchor) if self.anchor is not None else None,
            radius=self.radius,
            sharpness=self.sharpness,
            direction=tuple(self.direction) if self.direction is not None else None,
            scale=self.scale,
        )


class RewardsSection(_Section):
    channels: list[RewardChannel]

    @model_validator(mode="after")
    def _nonempty(self) -> "RewardsSection":
        if not self.channels:
            raise ValueError("at least one reward channel is required")
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate reward channel names: {names}")
        for c in self.channels:
            c.to_spec()  # per-kind parameter validation
        return self


class PretrainSection(_Section):
    steps: int = Field(default=2000, ge=0)
    batch_size: int = Field(default=256, ge=1)
    target: Literal["gaussian", "point"] = "gaussian"
    mean: list[float] = Field(default_factory=lambda: [0.0, 0.0])
    std: float = Field(default=1.0, ge=0.0)


class OptimizerSection(_Section):
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    eps: float = 1e-8
    grad_clip: float = 1.0


class PreferenceSection(_Section):
    p_vertex: float = Field(default=0.2, ge=0.0, le=1.0)
    p_edge: float = Field(default=0.2, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _mass(self) -> "PreferenceSection":
        if self.p_vertex + self.p_edge > 1.0:
            raise ValueError("p_vertex + p_edge must be <= 1")
        return self


class MorlSection(_Section):
    group_size: int = Field(default=32, ge=2)
    eps_clip: float = Field(default=5.0, gt=0.0)
    beta_step: float = Field(default=0.1, gt=0.0, lt=1.0)
    lambda_kl: float = Field(default=0.0075, ge=0.0)
    ema_decay: float = Field(default=0.9, ge=0.0, le=1.0)
    loss_mode: Literal[LOSS_MODES] = "late"  # type: ignore[valid-type]
    stch_mu: float = Field(default=0.1, gt=0.0)
    inner_epochs: int = Field(default=1, ge=1)
    timesteps_per_sample: int = Field(default=4, ge=1)
    adv_eps: float = 1e-8
    finetune_steps: int = Field(default=300, ge=0)
    prompts_per_step: int = Field(default=4, ge=1)
    num_prompts: int = Field(default=8, ge=1)
    pref_subgroups: int = Field(default=2, ge=1)
    train_solver_steps: int = Field(default=32, ge=1)
    eval_solver_steps: int = Field(default=64, ge=1)
    exploration_noise: float = Field(default=0.7, ge=0.0)
    lr_schedule: Literal["constant", "cosine"] = "cosine"
    condition_on_omega: bool = True
    fixed_omega: Optional[list[float]] = None


class RunConfig(_Section):
    run: RunSection = Field(default_factory=RunSection)
    model: ModelSection = Field(default_factory=ModelSection)
    rewards: RewardsSection
    pretrain: PretrainSection = Field(default_factory=PretrainSection)
    optimizer: OptimizerSection = Field(default_factory=OptimizerSection)
    preference: PreferenceSection = Field(default_factory=PreferenceSection)
    morl: MorlSection = Field(default_factory=MorlSection)

    @model_validator(mode="after")
    def _cross_checks(self) -> "RunConfig":
        m = len(self.rewards.channels)
        if self.morl.fixed_omega is not None and len(self.morl.fixed_omega) != m:
            raise ValueError("fixed_omega length must match the reward channel count")
        if m < 2 and self.preference.p_edge > 0:
            raise ValueError("edge overrides require at least 2 reward channels")
        if len(self.pretrain.mean) != self.model.data_dim:
            raise ValueError("pretrain mean dimension must match data_dim")
        return self

    def registry(self) -> list[RewardSpec]:
        return [c.to_spec() for c in self.rewards.channels]

    @property
    def omega_dim(self) -> int:
        return len(self.rewards.channels)


def _format_validation_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"])
        lines.append(f"  {loc}: {e['msg']}")
    return "\n".join(lines)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration:\n{_format_validation_error(exc)}") from exc


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: TOML parse error: {exc}") from exc
    return parse_config(data)
