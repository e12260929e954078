import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from graphexon.exceptions import DomainError, NoRealSolutionError, NoStabilizingSolutionError
from graphexon.mfg import (
    REFERENCE_PARAMETERS,
    Coupling,
    IntervalSet,
    MfgParameters,
    bifurcation_thresholds,
    classify_coupling,
    closed_loop_rate,
    coupling_gain,
    diagnose_coupling,
    existence_check,
    extreme_points,
    finite_turing_unstable,
    mean_stability_region,
    rate_indicator,
    representative_couplings,
    sare_discriminant,
    sare_residual,
    sare_solution,
    solve_riccati,
    stability_atlas,
    stability_check,
    turing_region,
)
from graphexon.spectral import KESTEN_RADIUS

RHO = KESTEN_RADIUS
C_PLUS = 0.02763458955158704
C_MINUS = -5.36096792288492


@pytest.fixture(scope="module")
def rd():
    return solve_riccati(REFERENCE_PARAMETERS)


def riccati_oracle(p):
    """Larger root of -k P^2 + (2a - gamma) P + q = 0 via numpy.roots."""
    k = p.b**2 / p.r
    return float(np.max(np.roots([-k, 2 * p.a - p.gamma, p.q]).real))


params_strategy = st.builds(
    MfgParameters,
    a=st.floats(-3, 1.5, allow_subnormal=False),
    b=st.floats(0.2, 2.5, allow_subnormal=False),
    q=st.one_of(st.just(0.0), st.floats(1e-6, 4.0, allow_subnormal=False)),
    r=st.floats(0.2, 3.0, allow_subnormal=False),
    gamma=st.floats(0.05, 3.0, allow_subnormal=False),
    eta=st.floats(-3, 3, allow_subnormal=False),
)


def test_reference_riccati(rd):
    assert rd.k == 1.0
    assert rd.Pi == pytest.approx(-1.25 + math.sqrt(3.5625), abs=1e-15)
    assert rd.Pi == pytest.approx(riccati_oracle(REFERENCE_PARAMETERS), abs=1e-14)
    assert rd.a_c == pytest.approx(-1.637458608817687, abs=1e-14)
    assert abs(rd.residual()) < 1e-15
    assert rd.theta == pytest.approx(3.5, abs=1e-14)


def test_zero_state_cost():
    rd = solve_riccati(REFERENCE_PARAMETERS.replace(q=0.0))
    assert rd.Pi == 0.0 and rd.a_c == -1.0


def test_linear_branch_without_control():
    p = REFERENCE_PARAMETERS.replace(b=0.0)
    rd = solve_riccati(p)
    assert rd.Pi == pytest.approx(2 / 2.5)
    assert abs(rd.residual()) < 1e-14
    assert sare_solution(rd, -1.0, 0.5) == pytest.approx(-0.5 * rd.psi_at(-1.0) / (2 * rd.a_gamma - 0.5))
    with pytest.raises(NoStabilizingSolutionError):
        solve_riccati(REFERENCE_PARAMETERS.replace(b=0.0, a=1.0))


@pytest.mark.parametrize("field,value", [("r", 0.0), ("gamma", -1.0), ("q", -0.1), ("sigma", -1.0), ("a", math.nan)])
def test_parameter_validation(field, value):
    with pytest.raises(DomainError):
        REFERENCE_PARAMETERS.replace(**{field: value})


@settings(max_examples=200, deadline=None)
@given(p=params_strategy)
def test_riccati_residual_and_sign(p):
    rd = solve_riccati(p)
    scale = max(1.0, abs(p.q), abs(rd.Pi) * abs(p.a - p.gamma / 2), rd.k * rd.Pi**2)
    assert abs(rd.residual()) < 1e-12 * scale
    assert rd.Pi == pytest.approx(riccati_oracle(p), rel=1e-10, abs=1e-12)
    assert rd.Pi >= 0
    if p.a <= p.gamma / 2:
        assert (rd.Pi > 0) == (p.q > 0)
    if rd.a_c < 0:
        assert rd.theta > 0 and rd.a_gamma < 0


@settings(max_examples=100, deadline=None)
@given(p=params_strategy, dq=st.floats(0.0, 2.0))
def test_riccati_monotone_in_q(p, dq):
    assert solve_riccati(p.replace(q=p.q + dq)).Pi >= solve_riccati(p).Pi - 1e-12


def test_discriminant_examples(rd):
    assert sare_discriminant(rd, 1.0, 0.0) == pytest.approx(4 * rd.a_gamma**2)
    # c = 0: linear in lambda
    lam = np.linspace(-1, 1, 5)
    vals = sare_discriminant(rd, 0.0, lam)
    assert np.allclose(np.diff(vals, 2), 0.0, atol=1e-12)
    c, lam = 1.0, 0.5
    alt = (REFERENCE_PARAMETERS.gamma + lam * c) ** 2 - 4 * rate_indicator(rd, c, lam)
    assert sare_discriminant(rd, c, lam) == pytest.approx(alt, abs=1e-12)


def test_existence_domain_errors(rd):
    with pytest.raises(DomainError):
        existence_check(rd, 0.0, RHO)
    with pytest.raises(DomainError):
        existence_check(rd, 1.0, 1.5)


def test_existence_perfect_square():
    c = -1.5
    base = solve_riccati(REFERENCE_PARAMETERS)
    p = REFERENCE_PARAMETERS.replace(eta=c * base.Pi / REFERENCE_PARAMETERS.q)
    rd = solve_riccati(p)
    assert rd.psi_at(c) == pytest.approx(0.0, abs=1e-15)
    assert existence_check(rd, c, RHO).ok
    lam = np.linspace(-1, 1, 41)
    expected = np.maximum(0.0, (2 * rd.a_gamma + lam * c) / rd.k)
    assert np.allclose(sare_solution(rd, c, lam), expected, atol=1e-12)


def test_existence_in_stable_region(rd):
    assert existence_check(rd, -1.28, RHO).ok


@settings(max_examples=150, deadline=None)
@given(p=params_strategy, c=st.floats(-8, 8), rho=st.floats(0.2, 1.0))
def test_existence_matches_grid(p, c, rho):
    assume(abs(c) > 1e-3)
    rd = solve_riccati(p)
    grid_min = float(np.min(sare_discriminant(rd, c, np.linspace(-rho, rho, 10_001))))
    assume(abs(grid_min) > 1e-6)
    assert existence_check(rd, c, rho).ok == (grid_min >= -1e-9)


def test_solution_at_zero(rd):
    for c in (-3.0, -1.0, 2.0):
        assert sare_solution(rd, c, 0.0) == 0.0


@settings(max_examples=150, deadline=None)
@given(p=params_strategy, c=st.floats(-8, 8), lam=st.floats(-1, 1))
def test_sare_residual_and_branch(p, c, lam):
    rd = solve_riccati(p)
    assume(sare_discriminant(rd, c, lam) >= 0)
    sol = sare_solution(rd, c, lam)
    scale = max(1.0, rd.k * sol**2, abs(lam * rd.psi_at(c)), abs(sol) * (abs(rd.a_c) + p.gamma + abs(c)))
    assert abs(sare_residual(rd, c, lam, sol)) < 1e-10 * scale
    rate = closed_loop_rate(rd, c, lam)
    assert rate == pytest.approx(rd.a_c + lam * c - rd.k * sol, abs=1e-10 * scale)


def test_no_real_solution_error(rd):
    with pytest.raises(NoRealSolutionError) as info:
        closed_loop_rate(rd, 0.05, 1.0)
    assert info.value.discriminant < 0


@settings(max_examples=100, deadline=None)
@given(p=params_strategy, c=st.floats(-8, 8))
def test_rate_at_zero_is_closed_loop_drift(p, c):
    rd = solve_riccati(p)
    assume(rd.a_gamma < 0)
    assert closed_loop_rate(rd, c, 0.0) == pytest.approx(rd.a_c, abs=1e-12 * max(1, abs(rd.a_c)))


@settings(max_examples=100, deadline=None)
@given(p=params_strategy, c=st.floats(-8, 8))
def test_sign_equivalence(p, c):
    rd = solve_riccati(p)
    lam = np.linspace(-1, 1, 201)
    ok = (p.gamma + lam * c > 1e-9) & (sare_discriminant(rd, c, lam) >= 0)
    lam = lam[ok]
    L = rate_indicator(rd, c, lam)
    keep = np.abs(L) > 1e-9 * max(1.0, abs(rd.theta), abs(coupling_gain(rd, c)))
    lam, L = lam[keep], L[keep]
    if lam.size:
        assert np.array_equal(np.sign(closed_loop_rate(rd, c, lam)), np.sign(L))


@settings(max_examples=100, deadline=None)
@given(p=params_strategy, c=st.floats(-8, 8), rho=st.floats(0.2, 0.99))
def test_rate_monotone_on_interval(p, c, rho):
    rd = solve_riccati(p)
    assume(abs(c) > 1e-3)
    ex = existence_check(rd, c, rho)
    # the parabola's minimum can dip between grid points, so use it directly
    critical = [-rho, rho] + ([ex.lambda_star] if ex.vertex_inside else [])
    assume(min(sare_discriminant(rd, c, np.array(critical))) > 1e-6)
    lam = np.linspace(-rho, rho, 401)
    d = np.diff(closed_loop_rate(rd, c, lam))
    tol = 1e-12 * max(1.0, np.max(np.abs(d)))
    assert np.all(d >= -tol) or np.all(d <= tol)


def test_extreme_points_and_stability_example(rd):
    assert rate_indicator(rd, -1.0, 1.0) == pytest.approx(-1.0, abs=1e-12)
    # c = -1 keeps only lambda <= gamma = 0.5
    assert extreme_points(rd, -1.0, RHO) == [-RHO, 0.5]
    assert extreme_points(rd, 1.0, RHO) == [1.0, RHO, -0.5]
    report = stability_check(rd, -1.0, RHO)
    grid = np.append(np.linspace(-RHO, RHO, 10_001), 1.0)
    assert report.stable == bool(np.max(closed_loop_rate(rd, -1.0, grid)) < 0)


def test_uncoupled_stability(rd):
    assert stability_check(rd, 0.0, RHO).stable
    assert classify_coupling(rd, 0.0) is Coupling.UNCOUPLED


def test_reference_thresholds(rd):
    c_plus, c_minus, c_star = bifurcation_thresholds(rd, RHO)
    assert c_plus == pytest.approx((3.5 / RHO - 4) / 1.5, abs=1e-12)
    assert c_minus == pytest.approx((-3.5 / RHO - 4) / 1.5, abs=1e-12)
    assert c_star == pytest.approx(-1 / 3, abs=1e-15)
    assert c_plus == pytest.approx(C_PLUS, abs=1e-12)
    assert c_minus == pytest.approx(C_MINUS, abs=1e-12)
    assert c_plus == pytest.approx(0.02767, abs=1e-4)
    assert c_minus == pytest.approx(-5.36101, abs=1e-4)


def test_reference_regions(rd):
    I0 = turing_region(rd, RHO)
    assert I0.intervals == ((-math.inf, C_MINUS), (C_PLUS, math.inf)) or np.allclose(
        [I0.intervals[0][1], I0.intervals[1][0]], [C_MINUS, C_PLUS], atol=1e-12)
    S1 = mean_stability_region(rd)
    assert len(S1) == 1 and S1.intervals[0][0] == -math.inf
    assert S1.intervals[0][1] == pytest.approx(-1 / 3, abs=1e-15)


def test_turing_region_against_sampled_rates(rd):
    I0 = turing_region(rd, RHO)
    for c in np.linspace(-12, 12, 1000):
        if c == 0 or min(abs(sare_discriminant(rd, c, np.array([-RHO, RHO])))) < 1e-9:
            continue
        if np.min(sare_discriminant(rd, c, np.array([-RHO, RHO]))) < 0:
            continue
        if I0.distance_to_boundary(c) < 1e-6:
            continue
        inside = max(closed_loop_rate(rd, c, np.array([-RHO, RHO]))) > 0
        assert inside == (c in I0)


def test_mean_region_against_sampled_rates(rd):
    S1 = mean_stability_region(rd)
    for c in np.linspace(-12, 12, 1000):
        if sare_discriminant(rd, c, 1.0) < 0 or S1.distance_to_boundary(c) < 1e-6:
            continue
        assert (closed_loop_rate(rd, c, 1.0) < 0) == (c in S1)


def test_threshold_is_a_rate_root(rd):
    assert max(closed_loop_rate(rd, C_MINUS, np.array([-RHO, RHO]))) == pytest.approx(0.0, abs=1e-8)
    assert closed_loop_rate(rd, -1 / 3, 1.0) == pytest.approx(0.0, abs=1e-8)


def test_degenerate_gamma_equals_a():
    p = MfgParameters(a=0.5, b=1.0, q=2.0, r=1.0, gamma=0.5, eta=0.1)
    rd = solve_riccati(p)
    assert bifurcation_thresholds(rd, RHO) == (None, None, None)
    assert RHO * rd.k * abs(p.q * p.eta) <= rd.theta
    assert turing_region(rd, RHO).is_empty
    assert mean_stability_region(rd).intervals == ((-math.inf, math.inf),)
    atlas = stability_atlas(rd, RHO)
    assert atlas.case == "gamma=a"
    json.loads(atlas.to_json())


def test_gamma_below_a_orders_thresholds():
    rd = solve_riccati(MfgParameters(a=1.0, b=1.0, q=2.0, r=1.0, gamma=0.5, eta=1.0))
    c_plus, c_minus, _ = bifurcation_thresholds(rd, RHO)
    assert c_plus < c_minus


def test_turing_region_rejects_bad_rho(rd):
    with pytest.raises(DomainError):
        turing_region(rd, 1.0)


def test_classification_examples(rd):
    assert classify_coupling(rd, -1.28) is Coupling.STABLE
    assert classify_coupling(rd, -6.0) is Coupling.TURING
    assert classify_coupling(rd, -7.0042267005351055) is Coupling.TURING
    assert classify_coupling(rd, 0.05) is Coupling.NO_REAL
    assert classify_coupling(rd, 2.0) is Coupling.NO_REAL
    assert classify_coupling(rd, 8.0) is Coupling.MEAN_UNSTABLE
    d = diagnose_coupling(rd, -1.28)
    assert d.rate_rho < 0 and d.rate_neg_rho < 0 and d.rate_one < 0 and not d.marginal
    assert str(Coupling.TURING) == "TuringUnstable"


def test_finite_turing(rd):
    lam = np.array([1.0, 0.79, -0.78, 0.1])
    assert finite_turing_unstable(rd, -7.0, lam)
    assert not finite_turing_unstable(rd, -1.28, lam)


def test_representative_couplings(rd):
    c_stable, c_turing = representative_couplings(rd, (RHO, 0.7945386517424157))
    assert c_stable == pytest.approx(-1.28, abs=1e-9)
    assert c_turing == pytest.approx(-7.0042267005351055, abs=1e-9)


def test_atlas_serialization(rd):
    d = json.loads(stability_atlas(rd, RHO).to_json())
    assert d["I0"][0][0] == "-inf" and d["I0"][1][1] == "inf"
    assert d["theta"] == pytest.approx(3.5)


def test_interval_set_merge_and_membership():
    s = IntervalSet.of((0, 2), (1, 3), (5, 4), (-math.inf, -1))
    assert s.intervals == ((-math.inf, -1.0), (0.0, 3.0))
    assert 2.5 in s and 3.0 not in s and -1.0 not in s
    assert s.distance_to_boundary(2.5) == 0.5


def grid_label(rd, c, rho, n=4001):
    """Brute-force label from A_cl sampled on [-rho, rho] and at 1."""
    lam = np.linspace(-rho, rho, n)
    vertex = -2 * (rd.a_gamma * c + rd.k * rd.psi_at(c)) / (c * c)
    if abs(vertex) < rho:
        lam = np.sort(np.append(lam, vertex))
    lam = np.append(lam, 1.0)
    delta = sare_discriminant(rd, c, lam)
    if np.min(delta) < 0:
        return Coupling.NO_REAL, float(np.min(np.abs(delta)))
    rates = closed_loop_rate(rd, c, lam)
    margin = float(np.min(np.abs(np.append(rates, delta))))
    if rd.a_c < 0 and rates[-1] < 0 and np.max(rates[:-1]) > 0:
        return Coupling.TURING, margin
    if rd.a_c < 0 and np.max(rates) < 0:
        return Coupling.STABLE, margin
    return Coupling.MEAN_UNSTABLE, margin


@settings(max_examples=150, deadline=None)
@given(p=params_strategy, c=st.floats(-8, 8), rho=st.floats(0.3, 0.95))
def test_classification_matches_grid_oracle(p, c, rho):
    assume(abs(c) > 1e-3)
    rd = solve_riccati(p)
    atlas = stability_atlas(rd, rho)
    assume(min(atlas.I0.distance_to_boundary(c), atlas.S1.distance_to_boundary(c)) > 1e-6)
    expected, margin = grid_label(rd, c, rho)
    assume(margin > 1e-6)
    assert classify_coupling(rd, c, rho, atlas) is expected
