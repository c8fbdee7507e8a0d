import json
import math

import numpy as np
import pytest

from deeplinear import (
    DimChain,
    RegParams,
    RadiusSweepConfig,
    WeightStack,
    analyze_target,
    build_counterexample,
    check_balance_inequalities,
    check_first_order_conditions,
    construct_critical_point,
    counterexample_family,
    enumerate_sigma_profiles,
    fit_counterexample_scaling,
    optimal_profile,
    profile_from_choices,
    sample_random_params,
    verify_error_bound,
    verify_pl_qg,
    zero_profile,
)
from deeplinear.training import ModelSpec, TrainConfig, Trajectory, train
from deeplinear.verify import CenterNotCriticalError


def _generic_instance(seed=3, depth=2):
    rng = np.random.default_rng(seed)
    target = rng.standard_normal((4, 3))
    spectrum = analyze_target(target)
    dims = DimChain((3,) + (5,) * (depth - 1) + (4,))
    reg = RegParams(tuple(rng.uniform(0.3, 1.0, depth)))
    return spectrum, dims, reg


SMALL_SWEEP = RadiusSweepConfig(
    radii=tuple(np.geomspace(1e-4, 1e-1, 5)), samples_per_radius=6, seed=0
)


def _center(spectrum, dims, reg, depth, which="optimal", target="F", seed=1):
    if which == "optimal":
        profile = optimal_profile(spectrum, reg, depth)
    elif which == "zero":
        profile = zero_profile(spectrum, reg, depth)
    else:
        profile = which
    params = sample_random_params(dims, spectrum, seed=seed)
    return construct_critical_point(
        profile, params, spectrum, reg, depth, target=target, dims=dims
    )


def test_error_bound_passes_on_generic_instance():
    spectrum, dims, reg = _generic_instance()
    point = _center(spectrum, dims, reg, 2)
    report = verify_error_bound(point, spectrum, reg, SMALL_SWEEP)
    assert report.passed
    assert report.notes["assumption2"]
    assert math.isfinite(report.fitted["stability_ratio"])
    assert report.constants["kappa1"] > 0


def test_error_bound_zero_center():
    spectrum, dims, reg = _generic_instance(seed=8)
    point = _center(spectrum, dims, reg, 2, which="zero")
    report = verify_error_bound(point, spectrum, reg, SMALL_SWEEP)
    assert report.passed
    # around the zero component the distance equals the perturbation radius
    for s in report.samples:
        assert s.dist_upper <= s.radius * (1 + 1e-9)
        assert math.isfinite(s.ratio)


def test_error_bound_rejects_noncritical_center():
    spectrum, dims, reg = _generic_instance()
    point = _center(spectrum, dims, reg, 2)
    point.stack.layers[0][0, 0] += 0.5
    with pytest.raises(CenterNotCriticalError):
        verify_error_bound(point, spectrum, reg, SMALL_SWEEP)


def test_error_bound_fails_with_cubic_tag_on_degenerate_instance():
    family = counterexample_family("l2-lambda-eq-y2", y=2.0)
    cfg = RadiusSweepConfig(
        radii=tuple(np.geomspace(1e-3, 1e-1, 7)),
        samples_per_radius=1,
        seed=0,
        mode="singular-direction",
    )
    report = verify_error_bound(
        family.center,
        family.spectrum,
        family.reg,
        cfg,
        target="G",
        direction_index=0,
    )
    assert not report.passed
    assert "assumption2-violated" in report.tags
    assert "cubic-degeneracy" in report.tags
    assert abs(report.fitted["grad_vs_dist_slope"] - 3.0) <= 0.05


def test_error_bound_tangent_removed_mode():
    spectrum, dims, reg = _generic_instance(seed=5)
    point = _center(spectrum, dims, reg, 2)
    cfg = RadiusSweepConfig(
        radii=tuple(np.geomspace(1e-4, 1e-2, 4)),
        samples_per_radius=4,
        seed=2,
        mode="tangent-removed",
    )
    report = verify_error_bound(point, spectrum, reg, cfg)
    assert report.passed


def test_pl_qg_at_global_minimizer():
    spectrum, dims, reg = _generic_instance(seed=11)
    point = _center(spectrum, dims, reg, 2)
    report = verify_pl_qg(point, spectrum, reg, SMALL_SWEEP)
    assert report.passed
    assert report.notes["qg_applicable"]
    assert report.fitted["mu1"] > 0
    assert math.isfinite(report.fitted["mu2"])
    assert report.fitted["min_gap_sampled"] >= -1e-10


def test_pl_qg_saddle_reports_not_minimizer():
    spectrum, dims, reg = _generic_instance(seed=13)
    choices = [-1] * spectrum.rank
    choices[0] = 0  # drop the top singular value: a non-optimal component
    saddle = profile_from_choices(spectrum, reg, 2, choices)
    point = _center(spectrum, dims, reg, 2, which=saddle)
    report = verify_pl_qg(point, spectrum, reg, SMALL_SWEEP)
    assert "not-a-minimizer" in report.tags
    assert not report.notes["qg_applicable"]
    assert report.fitted["mu1"] > 0  # gradient dominance still measurable


def test_balance_holds_near_component(rng):
    spectrum, dims, reg = _generic_instance(seed=17)
    profile = optimal_profile(spectrum, reg, 2)
    point = _center(spectrum, dims, reg, 2, target="G")
    check = check_balance_inequalities(point.stack, profile, spectrum, reg, 2)
    assert check.passed
    assert max(check.residuals) <= 1e-10
    for _ in range(25):
        e = WeightStack.gaussian(dims, rng)
        e = e.scale(0.25 * profile.sigma_min_pos / e.norm())
        check = check_balance_inequalities(
            point.stack + e, profile, spectrum, reg, 2
        )
        assert check.precondition_ok
        assert check.passed


def test_balance_precondition_reported_not_raised():
    spectrum, dims, reg = _generic_instance(seed=19)
    profile = optimal_profile(spectrum, reg, 2)
    far = WeightStack.gaussian(dims, np.random.default_rng(0)).scale(50.0)
    check = check_balance_inequalities(far, profile, spectrum, reg, 2)
    assert not check.precondition_ok
    assert not check.passed


def test_counterexample_hand_value():
    # scalar two-layer family at the excluded weight: grad norm 2 sqrt(2) t^3
    family = counterexample_family("l2-lambda-eq-y2", y=2.0)
    t = 0.1
    expected = 2.0 * math.sqrt(2.0) * t**3
    assert family.grad_norm(t) == pytest.approx(expected, rel=1e-10)
    assert family.dist_lower(t) == pytest.approx(math.sqrt(2.0) * t, rel=1e-12)
    stack = build_counterexample("l2-lambda-eq-y2", t, y=2.0)
    assert stack.norm() == pytest.approx(math.sqrt(2.0) * t, rel=1e-12)


def test_counterexample_slopes():
    rep = fit_counterexample_scaling("l2-lambda-eq-y2")
    assert rep.passed
    assert abs(rep.fitted["slope"] - 3.0) <= 0.05
    assert "fail-by-design" in rep.tags

    rep = fit_counterexample_scaling("lge3-phi-prime-zero")
    assert rep.passed
    assert abs(rep.fitted["slope"] - 2.0) <= 0.05


def test_counterexample_kind_checks():
    with pytest.raises(ValueError):
        counterexample_family("nope")
    with pytest.raises(ValueError):
        counterexample_family("l2-lambda-eq-y2", depth=3)
    with pytest.raises(ValueError):
        build_counterexample("l2-lambda-eq-y2", t=0.0)


def test_first_order_conditions_on_descent_run():
    spectrum, dims, reg = _generic_instance(seed=23)
    point = _center(spectrum, dims, reg, 2)
    lr = 1e-3
    cfg = TrainConfig(
        learning_rate=lr, max_iters=20_000, seed=1, init="near-critical",
        init_scale=0.05, log_stride=25,
    )
    traj = train(ModelSpec(), spectrum.target, reg, cfg, dims, center=point.stack)
    assert traj.termination == "converged"
    rep = check_first_order_conditions(traj, spectrum, reg)
    assert abs(rep.safeguard_constant * lr - 1.0) <= 1e-12
    assert rep.sufficient_decrease_held
    assert rep.cost_to_go_held
    assert rep.cost_to_go_constant > 0


def test_first_order_conditions_flags_nondecreasing_tail():
    n = 40
    f = np.linspace(1.0, 0.5, n + 1)
    f[-2] = f[-3] + 0.1  # one increasing tail step
    traj = Trajectory(
        f_values=f,
        grad_sq=np.full(n, 1e-2),
        step_norm_sq=np.full(n, 1e-4),
        snapshots=[],
        final=WeightStack.zeros((2, 2, 2)),
        final_biases=None,
        termination="max-iters",
        wall_time=0.0,
    )
    spectrum = analyze_target(np.zeros((2, 2)))
    rep = check_first_order_conditions(
        trajectory=traj, spectrum=spectrum, reg=RegParams((1.0, 1.0))
    )
    assert not rep.sufficient_decrease_held


def test_sweeps_deterministic_given_seed():
    spectrum, dims, reg = _generic_instance(seed=31)
    point = _center(spectrum, dims, reg, 2)
    cfg = RadiusSweepConfig(radii=(1e-3, 1e-2), samples_per_radius=3, seed=9)
    a = verify_error_bound(point, spectrum, reg, cfg)
    b = verify_error_bound(point, spectrum, reg, cfg)
    assert a.to_json() == b.to_json()


def test_error_bound_small_weights_three_layer():
    # three layers with lambda_l = 1e-2 each: tiny product weight, so the
    # component separation (and with it the usable radius range) shrinks;
    # sweep radii follow the instance's own scale
    from deeplinear import build_root_value_set

    rng = np.random.default_rng(37)
    target = rng.standard_normal((3, 3))
    spectrum = analyze_target(target)
    dims = DimChain((3, 4, 4, 3))
    reg = RegParams.uniform(1e-2, 3)
    point = _center(spectrum, dims, reg, 3)
    delta_sigma = build_root_value_set(spectrum, reg, 3).delta_sigma
    cfg = RadiusSweepConfig(
        radii=tuple(np.geomspace(delta_sigma / 1000, delta_sigma / 4, 5)),
        samples_per_radius=4,
        seed=1,
    )
    report = verify_error_bound(point, spectrum, reg, cfg)
    assert report.passed


def test_descent_terminates_near_critical_set():
    # random initialization, joint stopping rule, then certified distance to
    # the enumerated critical set stays small
    rng = np.random.default_rng(41)
    target = rng.standard_normal((3, 3))
    spectrum = analyze_target(target)
    dims = DimChain((3, 4, 3))
    reg = RegParams((0.5, 0.8))
    cfg = TrainConfig(
        learning_rate=2e-3, max_iters=100_000, seed=6, init="gaussian",
        grad_sq_tol=1e-6, fval_change_tol=1e-7, log_stride=200,
    )
    traj = train(ModelSpec(), target, reg, cfg, dims)
    assert traj.termination == "converged"
    from deeplinear import distance_to_critical_set

    enum = enumerate_sigma_profiles(spectrum, reg, 2)
    sd = distance_to_critical_set(traj.final, enum, spectrum, reg, 2)
    assert sd.distance <= 1e-3


def test_report_serialization_roundtrip():
    spectrum, dims, reg = _generic_instance(seed=29)
    point = _center(spectrum, dims, reg, 2)
    cfg = RadiusSweepConfig(
        radii=(1e-3, 1e-2), samples_per_radius=2, seed=0
    )
    report = verify_error_bound(point, spectrum, reg, cfg)
    text = report.to_json()
    payload = json.loads(text)
    assert json.dumps(payload, indent=2, sort_keys=True) == text
    csv = report.to_csv()
    assert csv.splitlines()[0] == "radius,dist_lower,dist_upper,grad_norm,F,ratio"
    assert len(csv.splitlines()) == 1 + len(report.samples)
