import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefslider.pareto import nondominated_filter
from prefslider.rewards import (
    OracleUnavailable,
    RewardError,
    RewardSpec,
    analytic_pareto_optimum,
    default_registry,
    evaluate,
    evaluate_batch,
    evaluate_vector,
)
from prefslider.simplex import PreferenceVector, uniform_grid


def test_neg_sq_dist_at_anchor_is_zero():
    spec = RewardSpec("left", "neg_sq_dist", anchor=(-1.0, 0.0))
    assert evaluate(spec, np.array([-1.0, 0.0])) == 0.0


def test_neg_sq_dist_direct_substitution():
    spec = RewardSpec("right", "neg_sq_dist", anchor=(1.0, 0.0))
    assert evaluate(spec, np.array([-1.0, 0.0])) == pytest.approx(-4.0)


def test_ring_on_radius_is_zero():
    spec = RewardSpec("ring", "ring", radius=1.0, sharpness=1.0)
    assert evaluate(spec, np.array([0.0, 1.0])) == pytest.approx(0.0)


def test_axis_is_inner_product():
    spec = RewardSpec("axis", "axis", direction=(2.0, -1.0))
    assert evaluate(spec, np.array([3.0, 4.0])) == pytest.approx(2.0)


def test_vector_examples():
    reg = default_registry()
    np.testing.assert_allclose(evaluate_vector(reg, np.array([0.0, 0.0])), [-1.0, -1.0])
    np.testing.assert_allclose(evaluate_vector(reg, np.array([-1.0, 0.0])), [0.0, -4.0])
    np.testing.assert_allclose(evaluate_vector(reg, np.array([0.5, 0.0])), [-2.25, -0.25])


def test_vector_channel_order_is_registry_order():
    reg = default_registry()
    v = evaluate_vector(reg, np.array([-1.0, 0.0]))
    assert v[0] == evaluate(reg[0], np.array([-1.0, 0.0]))
    assert v[1] == evaluate(reg[1], np.array([-1.0, 0.0]))


def test_batch_matches_pointwise():
    reg = default_registry() + [RewardSpec("ring", "ring", radius=1.0, sharpness=2.0)]
    rng = np.random.default_rng(0)
    pts = rng.standard_normal((20, 2))
    batch = evaluate_batch(reg, pts)
    for i, p in enumerate(pts):
        np.testing.assert_allclose(batch[i], evaluate_vector(reg, p), rtol=1e-14)


def test_scale_multiplier():
    spec = RewardSpec("x100", "neg_sq_dist", anchor=(1.0, 0.0), scale=100.0)
    assert evaluate(spec, np.array([-1.0, 0.0])) == pytest.approx(-400.0)


def test_analytic_optimum_vertex_and_midpoint():
    reg = default_registry()
    np.testing.assert_allclose(
        analytic_pareto_optimum(reg, PreferenceVector.of([1.0, 0.0])), [-1.0, 0.0]
    )
    np.testing.assert_allclose(
        analytic_pareto_optimum(reg, PreferenceVector.of([0.5, 0.5])), [0.0, 0.0]
    )


def test_analytic_optimum_derived_weighted():
    # stationary point of omega-weighted quadratic: 0.25*(-1) + 0.75*(+1) = 0.5
    reg = default_registry()
    np.testing.assert_allclose(
        analytic_pareto_optimum(reg, PreferenceVector.of([0.25, 0.75])), [0.5, 0.0]
    )


def test_analytic_optimum_unsupported_kind():
    reg = [RewardSpec("ring", "ring", radius=1.0, sharpness=1.0)]
    with pytest.raises(OracleUnavailable):
        analytic_pareto_optimum(reg, PreferenceVector.of([1.0]))


def test_default_pair_conflicts():
    # no single point maximizes both channels: the argmaxes differ
    reg = default_registry()
    opt0 = analytic_pareto_optimum(reg, PreferenceVector.of([1.0, 0.0]))
    opt1 = analytic_pareto_optimum(reg, PreferenceVector.of([0.0, 1.0]))
    assert np.linalg.norm(opt0 - opt1) > 1.0
    # and each argmax strictly hurts the other channel
    assert evaluate(reg[1], opt0) < evaluate(reg[1], opt1)
    assert evaluate(reg[0], opt1) < evaluate(reg[0], opt0)


@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    st.floats(0.0, 1.0),
)
@settings(max_examples=50, deadline=None)
def test_scalarization_linearity(point, w0):
    reg = default_registry()
    omega = np.array([w0, 1.0 - w0])
    x = np.asarray(point)
    combined = float(omega @ evaluate_vector(reg, x))
    by_hand = w0 * evaluate(reg[0], x) + (1.0 - w0) * evaluate(reg[1], x)
    assert combined == pytest.approx(by_hand, abs=1e-12)


def test_pareto_set_is_segment_between_anchors():
    # analytic optima across the grid are mutually non-dominated
    reg = default_registry()
    pts = [
        evaluate_vector(reg, analytic_pareto_optimum(reg, omega))
        for omega in uniform_grid(2, 11)
    ]
    mask = nondominated_filter(np.asarray(pts))
    assert mask.all()


def test_empty_registry_rejected():
    with pytest.raises(RewardError):
        evaluate_vector([], np.zeros(2))


def test_bad_spec_parameters():
    with pytest.raises(RewardError):
        RewardSpec("x", "neg_sq_dist")  # missing anchor
    with pytest.raises(RewardError):
        RewardSpec("x", "ring", radius=1.0)  # missing sharpness
    with pytest.raises(RewardError):
        RewardSpec("x", "unknown_kind")
