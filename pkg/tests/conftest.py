import pytest

TINY_CONFIG = """\
[run]
name = "tiny"
seed = 3
out_dir = "runs/tiny"

[model]
hidden_width = 16
hidden_layers = 2
conditioning = "hybrid"
projector_hidden = 8

[[rewards.channels]]
name = "anchor_left"
kind = "neg_sq_dist"
anchor = [-1.0, 0.0]

[[rewards.channels]]
name = "anchor_right"
kind = "neg_sq_dist"
anchor = [1.0, 0.0]

[pretrain]
steps = 40
batch_size = 32

[morl]
group_size = 4
timesteps_per_sample = 2
finetune_steps = 3
prompts_per_step = 1
pref_subgroups = 1
train_solver_steps = 8
eval_solver_steps = 8
exploration_noise = 0.0
lr_schedule = "constant"
"""


@pytest.fixture()
def tiny_config_path(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY_CONFIG)
    return p


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """Small pretrained+finetuned checkpoint shared across CLI/service tests."""
    from prefslider.checkpoint import Checkpoint, save_checkpoint
    from prefslider.config import parse_config
    from prefslider.runs import run_finetune, run_pretrain

    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib

    cfg = parse_config(tomllib.loads(TINY_CONFIG))
    triple, _ = run_pretrain(cfg)
    base = Checkpoint(triple=triple, config=cfg, step=0, opt_state=None, checkpoint_id="")
    tuned, opt, _ = run_finetune(cfg, base)
    path = tmp_path_factory.mktemp("ckpt") / "tiny.json"
    save_checkpoint(path, tuned, cfg, step=cfg.morl.finetune_steps, opt_state=opt)
    return path


@pytest.fixture(scope="session")
def pretrained_only_checkpoint(tmp_path_factory):
    from prefslider.checkpoint import save_checkpoint
    from prefslider.config import parse_config
    from prefslider.runs import run_pretrain

    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib

    cfg = parse_config(tomllib.loads(TINY_CONFIG))
    triple, _ = run_pretrain(cfg)
    path = tmp_path_factory.mktemp("ckpt") / "base.json"
    save_checkpoint(path, triple, cfg, step=0)
    return path
