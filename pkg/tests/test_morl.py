import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefslider import numcore
from prefslider.flowpolicy import PolicyTriple, make_velocity_net, velocity_batch
from prefslider.morl import (
    LossMode,
    MorlConfig,
    TrainingError,
    UpdateBatch,
    aggregate_losses,
    early_scalarized_advantages,
    implicit_velocities,
    kl_loss,
    make_update_loss_fn,
    nft_loss_per_reward,
    per_channel_advantages,
    rho_map,
    train_step,
    update_loss_and_grads,
)
from prefslider.rewards import default_registry
from prefslider.simplex import PrefSampleConfig, PreferenceVector


def small_cfg(**overrides) -> MorlConfig:
    base = dict(
        pref=PrefSampleConfig(m=2, p_vertex=0.2, p_edge=0.0, base_seed=0),
        group_size=4,
        timesteps_per_sample=2,
        train_solver_steps=8,
        base_seed=0,
    )
    base.update(overrides)
    return MorlConfig(**base)


# --- per-channel advantages ------------------------------------------------


def test_advantages_hand_arithmetic():
    # mu=2, population sigma=sqrt(2/3)
    adv = per_channel_advantages(np.array([[1.0], [2.0], [3.0]]), eps=0.0)
    expected = (np.array([1.0, 2.0, 3.0]) - 2.0) / math.sqrt(2.0 / 3.0)
    np.testing.assert_allclose(adv[:, 0], expected, atol=1e-12)
    np.testing.assert_allclose(adv[:, 0], [-1.22474487, 0.0, 1.22474487], atol=1e-6)


def test_advantages_constant_channel_is_zero():
    adv = per_channel_advantages(np.array([[5.0], [5.0], [5.0]]), eps=1e-8)
    np.testing.assert_array_equal(adv, np.zeros((3, 1)))


def test_advantages_scale_invariance_across_channels():
    rng = np.random.default_rng(0)
    col = rng.standard_normal(8)
    rewards = np.stack([col, 100.0 * col], axis=1)
    adv = per_channel_advantages(rewards)
    np.testing.assert_allclose(adv[:, 0], adv[:, 1], atol=1e-6)


def test_advantages_group_statistics_invariants():
    rng = np.random.default_rng(1)
    rewards = rng.standard_normal((32, 3)) * np.array([1.0, 50.0, 0.01])
    adv = per_channel_advantages(rewards, eps=1e-8)
    sigma = rewards.std(axis=0)
    assert np.all(np.abs(adv.mean(axis=0)) < 1e-6)
    for m in range(3):
        if sigma[m] > 100 * 1e-8:
            assert abs(adv[:, m].std() - sigma[m] / (sigma[m] + 1e-8)) < 1e-6


def test_advantages_reject_degenerate_group():
    with pytest.raises(TrainingError):
        per_channel_advantages(np.array([[1.0, 2.0]]))


# --- interpolation weight --------------------------------------------------


def test_rho_neutral():
    assert rho_map(0.0, 5.0) == pytest.approx(0.5)


def test_rho_paper_value():
    assert rho_map(2.5, 5.0) == pytest.approx(0.75)


def test_rho_saturates():
    assert rho_map(-100.0, 5.0) == 0.0
    assert rho_map(float(1e9), 5.0) == 1.0


@given(st.floats(-50, 50, allow_nan=False), st.floats(0.1, 20))
@settings(max_examples=100, deadline=None)
def test_rho_always_in_unit_interval(a, clip):
    r = rho_map(a, clip)
    assert 0.0 <= r <= 1.0


# --- implicit velocities ---------------------------------------------------


def test_implicit_velocities_beta_zero():
    v_old = np.array([1.0, -2.0])
    v_theta = np.array([3.0, 4.0])
    vp, vm = implicit_velocities(v_old, v_theta, 0.0)
    np.testing.assert_array_equal(vp, v_old)
    np.testing.assert_array_equal(vm, v_old)


def test_implicit_velocities_scalar_case():
    vp, vm = implicit_velocities(np.array([1.0]), np.array([2.0]), 0.1)
    assert vp[0] == pytest.approx(1.1)
    assert vm[0] == pytest.approx(0.9)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=4), st.floats(0.01, 0.99))
@settings(max_examples=60, deadline=None)
def test_implicit_velocities_sum_identity(vals, beta):
    v_old = np.asarray(vals)
    v_theta = v_old[::-1].copy()
    vp, vm = implicit_velocities(v_old, v_theta, beta)
    np.testing.assert_allclose(vp + vm, 2.0 * v_old, atol=1e-12)


# --- per-reward loss and aggregation ---------------------------------------


def test_nft_loss_rho_extremes():
    vp = np.array([1.0, 0.0])
    vm = np.array([-1.0, 0.0])
    v = np.array([0.0, 0.0])
    assert nft_loss_per_reward(1.0, vp, vm, v) == pytest.approx(1.0)
    assert nft_loss_per_reward(0.0, vp, vm, v) == pytest.approx(1.0)
    assert nft_loss_per_reward(0.5, vp, vm, v) == pytest.approx(1.0)  # mean of branches


def test_nft_loss_zero_at_shared_target():
    v = np.array([0.3, -0.4])
    for rho in (0.0, 0.3, 1.0):
        assert nft_loss_per_reward(rho, v, v, v) == 0.0


def test_aggregate_late_weighted_mean():
    assert aggregate_losses(LossMode("late"), np.array([1.0, 3.0]), np.array([0.5, 0.5])) == 2.0


def test_aggregate_late_one_hot_selects_channel():
    losses = np.array([1.7, 0.4, 9.9])
    for m in range(3):
        w = np.zeros(3)
        w[m] = 1.0
        assert aggregate_losses(LossMode("late"), losses, w) == losses[m]


def test_aggregate_stch_log_sum_exp():
    got = aggregate_losses(LossMode("stch", mu=0.1), np.array([1.0, 3.0]), np.array([0.5, 0.5]))
    exact = 0.1 * math.log(math.exp(0.5 / 0.1) + math.exp(1.5 / 0.1))
    assert got == pytest.approx(exact, abs=1e-12)
    assert got == pytest.approx(1.500005, abs=1e-5)  # smooth max of (0.5, 1.5)


def test_aggregate_stch_requires_positive_mu():
    with pytest.raises(ValueError):
        LossMode("stch", mu=0.0)


def test_early_scalarized_coincides_at_m1():
    rng = np.random.default_rng(2)
    rewards = rng.standard_normal((6, 1))
    early = early_scalarized_advantages(rewards, PreferenceVector.of([1.0]))
    late = per_channel_advantages(rewards)[:, 0]
    np.testing.assert_allclose(early, late, atol=1e-12)


def test_early_scalarized_one_hot_is_single_channel_zscore():
    rng = np.random.default_rng(3)
    rewards = rng.standard_normal((8, 2))
    early = early_scalarized_advantages(rewards, PreferenceVector.of([1.0, 0.0]))
    np.testing.assert_allclose(early, per_channel_advantages(rewards)[:, 0], atol=1e-12)


def test_early_scalarized_hand_case():
    rewards = np.array([[0.0, 0.0], [1.0, 1.0]])
    adv = early_scalarized_advantages(rewards, PreferenceVector.of([0.5, 0.5]))
    np.testing.assert_allclose(adv, [-1.0, 1.0], atol=1e-6)  # population std


def test_kl_loss_basic():
    assert kl_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert kl_loss(np.array([1.0, 0.0]), np.array([0.0, 0.0])) == pytest.approx(1.0)


def test_kl_loss_quadratic_in_difference():
    d = np.array([0.3, -0.2])
    base = kl_loss(np.zeros(2), d)
    assert kl_loss(np.zeros(2), 2.0 * d) == pytest.approx(4.0 * base)


# --- scale invariance (anti-hijacking) --------------------------------------


def hijack_fixture():
    # comparable channel spreads, both large: scaling channel 2 by 100 then
    # rebalances the early-scalarized signal while the per-channel z-score
    # eps terms stay below the 1e-9 budget
    rng = np.random.default_rng(7)
    k = 32
    return np.stack(
        [150.0 * rng.standard_normal(k), 150.0 * rng.standard_normal(k)], axis=1
    )


def test_late_path_scale_invariant_below_1e9():
    rewards = hijack_fixture()
    scaled = rewards.copy()
    scaled[:, 1] *= 100.0
    omega = np.array([0.5, 0.5])
    mode = LossMode("late")

    adv_a = per_channel_advantages(rewards)
    adv_b = per_channel_advantages(scaled)
    assert np.max(np.abs(adv_a - adv_b)) < 1e-9

    rho_a = rho_map(adv_a, 5.0)
    rho_b = rho_map(adv_b, 5.0)
    assert np.max(np.abs(rho_a - rho_b)) < 1e-9

    rng = np.random.default_rng(8)
    vp = rng.standard_normal(2)
    vm = rng.standard_normal(2)
    v = rng.standard_normal(2)
    for i in range(len(rewards)):
        la = [nft_loss_per_reward(rho_a[i, m], vp, vm, v) for m in range(2)]
        lb = [nft_loss_per_reward(rho_b[i, m], vp, vm, v) for m in range(2)]
        agg_a = aggregate_losses(mode, np.asarray(la), omega)
        agg_b = aggregate_losses(mode, np.asarray(lb), omega)
        assert abs(agg_a - agg_b) < 1e-9


def test_early_path_not_scale_invariant():
    rewards = hijack_fixture()
    scaled = rewards.copy()
    scaled[:, 1] *= 100.0
    omega = PreferenceVector.of([0.5, 0.5])
    a = early_scalarized_advantages(rewards, omega)
    b = early_scalarized_advantages(scaled, omega)
    assert np.max(np.abs(a - b)) > 0.1


# --- update loss: consistency and gradients --------------------------------


def toy_batch(net, rng, rows=4, m_rho=2):
    # m_rho = 1 emulates the early-scalarized path; conditioning stays M-wide
    rho = np.clip(rng.random((rows, m_rho)), 0.05, 0.95)
    cond = rng.dirichlet(np.ones(net.omega_dim))
    agg = np.ones(1) if m_rho == 1 else rng.dirichlet(np.ones(m_rho))
    return UpdateBatch(
        x_t=rng.standard_normal((rows, net.data_dim)),
        t=rng.random(rows),
        omega_cond=np.tile(cond, (rows, 1)),
        v_target=rng.standard_normal((rows, net.data_dim)),
        rho=rho,
        agg_omega=np.tile(agg, (rows, 1)),
    )


def test_update_loss_matches_scalar_ops():
    # batched path equals composing the public single-sample operations
    rng = np.random.default_rng(9)
    net = make_velocity_net(2, 2, hidden_width=8, hidden_layers=2, mode="hybrid", seed=5)
    old = make_velocity_net(2, 2, hidden_width=8, hidden_layers=2, mode="hybrid", seed=6)
    ref = make_velocity_net(2, 2, hidden_width=8, hidden_layers=2, mode="hybrid", seed=7)
    cfg = small_cfg(lambda_kl=0.25, beta_step=0.1)
    batch = toy_batch(net, rng)
    loss, _, parts = update_loss_and_grads(net, old, ref, batch, cfg)

    y = velocity_batch(net, batch.x_t, batch.t, batch.omega_cond)
    y_old = velocity_batch(old, batch.x_t, batch.t, batch.omega_cond)
    omega_null = np.tile(PreferenceVector.uniform(2).as_array(), (len(batch.t), 1))
    y_ref = velocity_batch(ref, batch.x_t, batch.t, omega_null)

    expect_nft, expect_kl = [], []
    for r in range(len(batch.t)):
        vp, vm = implicit_velocities(y_old[r], y[r], cfg.beta_step)
        per = [
            nft_loss_per_reward(batch.rho[r, m], vp, vm, batch.v_target[r]) for m in range(2)
        ]
        expect_nft.append(aggregate_losses(cfg.loss_mode, np.asarray(per), batch.agg_omega[r]))
        expect_kl.append(kl_loss(y[r], y_ref[r]))
    expected = np.mean(expect_nft) + cfg.lambda_kl * np.mean(expect_kl)
    assert loss == pytest.approx(expected, rel=1e-12)
    assert parts["loss_nft"] == pytest.approx(np.mean(expect_nft), rel=1e-12)
    assert parts["loss_kl"] == pytest.approx(np.mean(expect_kl), rel=1e-12)


@pytest.mark.parametrize("mode_kind", ["late", "early", "stch"])
def test_update_gradients_match_finite_differences(mode_kind):
    rng = np.random.default_rng(10)
    net = make_velocity_net(2, 2, hidden_width=8, hidden_layers=2, mode="film_residual", seed=1)
    old = net.copy()
    ref = make_velocity_net(2, 2, hidden_width=8, hidden_layers=2, mode="film_residual", seed=2)
    m_rho = 1 if mode_kind == "early" else 2
    cfg = small_cfg(loss_mode=LossMode(mode_kind, mu=0.5), lambda_kl=0.05)
    batch = toy_batch(net, rng, rows=5, m_rho=m_rho)
    loss_fn = make_update_loss_fn(net, old, ref, batch, cfg)
    report = numcore.grad_check(loss_fn, net.parameters(), tolerance=1e-4, n_probe=64, seed=3)
    assert report.passed, f"{mode_kind}: max rel err {report.max_rel_err}"


def test_neutral_advantages_make_omega_irrelevant():
    # equal rewards -> rho 0.5 everywhere -> the aggregated loss and the update
    # are the flow-matching midpoint regardless of omega
    rng = np.random.default_rng(11)
    net = make_velocity_net(2, 2, hidden_width=8, hidden_layers=2, seed=8)
    old, ref = net.copy(), net.copy()
    cfg = small_cfg()
    rows = 3
    x_t = rng.standard_normal((rows, 2))
    t = rng.random(rows)
    v = rng.standard_normal((rows, 2))
    results = []
    for omega in ([1.0, 0.0], [0.25, 0.75], [0.5, 0.5]):
        batch = UpdateBatch(
            x_t=x_t,
            t=t,
            omega_cond=np.tile([0.5, 0.5], (rows, 1)),  # same conditioning input
            v_target=v,
            rho=np.full((rows, 2), 0.5),
            agg_omega=np.tile(omega, (rows, 1)),
        )
        loss, grads, _ = update_loss_and_grads(net, old, ref, batch, cfg)
        results.append((loss, grads))
    for loss, grads in results[1:]:
        assert loss == pytest.approx(results[0][0], rel=1e-12)
        for a, b in zip(grads, results[0][1]):
            np.testing.assert_allclose(a, b, atol=1e-14)


def test_train_step_runs_and_reports(tmp_path):
    net = make_velocity_net(2, 2, hidden_width=8, hidden_layers=2, seed=4)
    triple = PolicyTriple.from_pretrained(net)
    cfg = small_cfg()
    opt = numcore.opt_init(triple.current.parameters())
    metrics = train_step(triple, cfg, [0, 1], default_registry(), opt, step=0)
    assert len(metrics) == 2
    for g in metrics:
        assert len(g.mean_reward) == 2
        assert abs(sum(g.omega) - 1.0) < 1e-9
        assert np.isfinite(g.loss_total)
    # old policy moved toward current per the EMA schedule
    assert any(
        not np.array_equal(a, b)
        for a, b in zip(triple.old.parameters(), triple.reference.parameters())
    )


def test_train_step_kl_dominance():
    # with an enormous KL coefficient, one step must not push the policy
    # further from the reference on a probe batch
    rng = np.random.default_rng(12)
    net = make_velocity_net(2, 2, hidden_width=8, hidden_layers=2, seed=9)
    triple = PolicyTriple.from_pretrained(net)
    # perturb current away from the reference first
    params = [p + 0.2 * rng.standard_normal(p.shape) for p in triple.current.parameters()]
    triple.current = triple.current.with_parameters(params)

    probe_x = rng.standard_normal((64, 2))
    probe_t = rng.random(64)
    omega_null = np.tile([0.5, 0.5], (64, 1))

    def ref_distance():
        y = velocity_batch(triple.current, probe_x, probe_t, omega_null)
        y_ref = velocity_batch(triple.reference, probe_x, probe_t, omega_null)
        return float(np.mean(np.sum((y - y_ref) ** 2, axis=1)))

    before = ref_distance()
    cfg = small_cfg(lambda_kl=1e6, group_size=16, timesteps_per_sample=4)
    opt = numcore.opt_init(triple.current.parameters())
    train_step(triple, cfg, [0], default_registry(), opt, step=0)
    assert ref_distance() <= before


def test_train_step_determinism():
    cfg = small_cfg()
    registry = default_registry()
    finals = []
    for _ in range(2):
        net = make_velocity_net(2, 2, hidden_width=8, hidden_layers=2, seed=13)
        triple = PolicyTriple.from_pretrained(net)
        opt = numcore.opt_init(triple.current.parameters())
        for step in range(2):
            train_step(triple, cfg, [step], registry, opt, step)
        finals.append(triple.current.parameters())
    for a, b in zip(*finals):
        assert np.array_equal(a, b)


def test_train_step_skips_group_on_nonfinite_rewards(monkeypatch, caplog):
    import logging

    import prefslider.morl as morl_mod

    net = make_velocity_net(2, 2, hidden_width=8, hidden_layers=2, seed=14)
    triple = PolicyTriple.from_pretrained(net)
    cfg = small_cfg()
    opt = numcore.opt_init(triple.current.parameters())
    before = [p.copy() for p in triple.current.parameters()]

    monkeypatch.setattr(
        morl_mod, "evaluate_batch", lambda reg, pts: np.full((len(pts), 2), np.inf)
    )
    with caplog.at_level(logging.WARNING, logger="prefslider.morl"):
        metrics = morl_mod.train_step(triple, cfg, [0], default_registry(), opt, step=0)
    assert metrics == []
    assert any("skipping group" in r.message for r in caplog.records)
    for a, b in zip(triple.current.parameters(), before):
        np.testing.assert_array_equal(a, b)  # no update happened
