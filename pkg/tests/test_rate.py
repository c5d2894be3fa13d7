import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import eig_logdet, general_deteq_bracket, general_fixed_point
from seltrain.config import RateUnit
from seltrain.csi import CsiState
from seltrain.errors import ContractError, ConvergenceError
from seltrain.rate import (DetEqProblem, EquivalentNoise, FixedPointResult, block_rate_sample,
                           det_eq_rate, equivalent_noise, logdet_full, normalized_variances,
                           solve_fixed_point)


def _csi(v_hat, v_tilde, n=1):
    v_hat = np.asarray(v_hat, float)
    return CsiState(np.zeros((n, v_hat.size), complex), v_hat, np.asarray(v_tilde, float),
                    np.ones(v_hat.size, bool), 0)


def _cn(g, shape, var=1.0):
    return np.sqrt(np.asarray(var) / 2) * (g.standard_normal(shape) + 1j * g.standard_normal(shape))


# -- equivalent noise ---------------------------------------------------------

def test_noise_without_csi_error():
    assert equivalent_noise(_csi([1.0, 2.0], [0.0, 0.0])).noise_power == 1.0


def test_noise_two_fresh_users():
    en = equivalent_noise(_csi([0.8, 0.8], [0.2, 0.2]))
    assert en.beta == pytest.approx(0.4) and en.noise_power == pytest.approx(1.4)


def test_noise_trained_plus_stale():
    assert equivalent_noise(_csi([0.8, 0.0], [0.2, 1.0])).beta == pytest.approx(1.2)


def test_noise_restricted_to_served_users():
    assert equivalent_noise(_csi([0.8, 0.0], [0.2, 1.0]), served=[0]).beta == pytest.approx(0.2)


# -- Monte Carlo log-det sample -------------------------------------------------

def test_zero_channel_zero_rate():
    assert block_rate_sample(np.zeros((4, 3)), EquivalentNoise(0.5), 2, 10, 3) == 0.0


def test_no_data_phase_zero_rate():
    h = np.ones((4, 3))
    assert block_rate_sample(h, EquivalentNoise(0.0), 10, 10, 3) == 0.0


def test_scalar_rate_by_hand():
    h = np.array([[1.0 + 0j]])
    nats = block_rate_sample(h, EquivalentNoise(0.0), 5, 10, 1)
    assert nats == pytest.approx(0.5 * math.log(2.0), rel=1e-15)
    bits = block_rate_sample(h, EquivalentNoise(0.0), 5, 10, 1, RateUnit.BITS)
    assert bits == pytest.approx(0.5, rel=1e-15)


def test_rate_rejects_nonfinite_and_bad_tau():
    with pytest.raises(ContractError):
        block_rate_sample(np.array([[np.nan]]), EquivalentNoise(0.0), 1, 10, 1)
    with pytest.raises(ContractError):
        block_rate_sample(np.ones((1, 1)), EquivalentNoise(0.0), 11, 10, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.floats(0.0, 5.0), st.integers(0, 2**32))
def test_sylvester_and_eig_agreement(n, k, beta, seed):
    g = np.random.default_rng(seed)
    h = _cn(g, (n, k), g.uniform(0.01, 20, k))
    sample = block_rate_sample(h, EquivalentNoise(beta), 0, 1, k)
    full = logdet_full(h, 1 + beta) / k
    ref = eig_logdet(h, 1 + beta) / k
    assert sample == pytest.approx(full, rel=1e-9, abs=1e-12)
    assert sample == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_unit_conversion_exact():
    g = np.random.default_rng(3)
    h = _cn(g, (6, 4))
    nats = block_rate_sample(h, EquivalentNoise(0.3), 2, 7, 4)
    bits = block_rate_sample(h, EquivalentNoise(0.3), 2, 7, 4, RateUnit.BITS)
    assert bits == nats / math.log(2.0)


# -- normalized variances ----------------------------------------------------------

def test_normalized_perfect_csi():
    p = normalized_variances(_csi([1.0, 3.0], [0.0, 0.0]), 4)
    np.testing.assert_array_equal(p.v_bar, [1.0, 3.0])


def test_normalized_single_user():
    p = normalized_variances(_csi([0.8], [0.2]), 4)
    assert p.v_bar[0] == pytest.approx(0.8 / 1.2, rel=1e-15)


def test_normalized_all_zero():
    p = normalized_variances(_csi([0.0, 0.0], [1.0, 2.0]), 4)
    np.testing.assert_array_equal(p.v_bar, [0.0, 0.0])


def test_normalized_zeroes_unserved():
    p = normalized_variances(_csi([0.8, 0.5], [0.2, 1.0]), 4, served=[0])
    np.testing.assert_allclose(p.v_bar, [0.8 / 1.2, 0.0], rtol=1e-15)


def test_problem_validation():
    with pytest.raises(ContractError):
        DetEqProblem(np.array([-1.0]), 2, 1)
    with pytest.raises(ContractError):
        DetEqProblem(np.array([1.0, 2.0]), 2, 3)


# -- fixed point -----------------------------------------------------------------

def test_fixed_point_zero_profile():
    fp = solve_fixed_point(DetEqProblem(np.zeros(7), 10, 7))
    assert fp.t == 7.0


def test_fixed_point_square_unit_profile():
    k = 12
    fp = solve_fixed_point(DetEqProblem(np.ones(k), k, k), tol=1e-12)
    lhs = fp.t
    rhs = 1.0 / (1.0 / (1.0 + fp.t) + 1.0 / k)
    assert abs(lhs - rhs) <= 1e-11
    assert fp.residual <= 1e-12 and fp.iterations >= 1


def test_fixed_point_matches_general_matrix_iteration():
    g = np.random.default_rng(8)
    for _ in range(10):
        n, k = int(g.integers(2, 20)), int(g.integers(2, 20))
        vbar = g.uniform(0, 10, k)
        fp = solve_fixed_point(DetEqProblem(vbar, n, k), tol=1e-13)
        t_mat = general_fixed_point([v * np.eye(n) for v in vbar], k)
        np.testing.assert_allclose(np.diag(t_mat), fp.t, atol=1e-8)
        assert np.max(np.abs(t_mat - np.diag(np.diag(t_mat)))) < 1e-10


def test_fixed_point_convergence_error_carries_last_iterate():
    with pytest.raises(ConvergenceError) as info:
        solve_fixed_point(DetEqProblem(np.full(5, 3.0), 4, 5), tol=1e-15, max_iter=2)
    assert info.value.last is not None and info.value.iterations == 2


def test_fixed_point_rejects_bad_tol():
    with pytest.raises(ContractError):
        solve_fixed_point(DetEqProblem(np.ones(2), 2, 2), tol=0.0)


def test_fixed_point_contraction_random_instances():
    g = np.random.default_rng(2024)
    for _ in range(2000):
        k = int(g.integers(1, 65))
        n = max(1, int(round(g.uniform(0.5, 8) * k)))
        vbar = g.uniform(0, 10, k)
        fp = solve_fixed_point(DetEqProblem(vbar, n, k), tol=1e-10, max_iter=1000)
        assert 0 < fp.t <= k


def test_fixed_point_extreme_profile():
    vbar = np.array([1e12, 1e-6, 3.0, 0.0])
    fp = solve_fixed_point(DetEqProblem(vbar, 8, 4))
    assert 0 < fp.t <= 4


# -- deterministic-equivalent rate ---------------------------------------------------

def test_deteq_zero_profile():
    p = DetEqProblem(np.zeros(5), 8, 5, 2, 10)
    assert det_eq_rate(p, solve_fixed_point(p)) == 0.0


def test_deteq_no_data_phase():
    p = DetEqProblem(np.ones(5), 8, 5, 10, 10)
    assert det_eq_rate(p, solve_fixed_point(p)) == 0.0


def test_deteq_rejects_unconverged():
    p = DetEqProblem(np.ones(2), 2, 2)
    with pytest.raises(ContractError):
        det_eq_rate(p, FixedPointResult(1.0, 3, 0.1, converged=False))


def test_deteq_matches_general_matrix_formula():
    g = np.random.default_rng(9)
    for _ in range(10):
        n, k = int(g.integers(2, 16)), int(g.integers(2, 16))
        vbar = g.uniform(0, 5, k)
        p = DetEqProblem(vbar, n, k, 3, 10)
        fp = solve_fixed_point(p, tol=1e-13)
        d = [v * np.eye(n) for v in vbar]
        ref = 0.7 * general_deteq_bracket(d, general_fixed_point(d, k), k) / k
        assert det_eq_rate(p, fp) == pytest.approx(ref, rel=1e-9)


def test_deteq_units():
    p = DetEqProblem(np.array([0.5, 2.0]), 4, 2, 1, 4)
    fp = solve_fixed_point(p)
    assert det_eq_rate(p, fp, RateUnit.BITS) == det_eq_rate(p, fp) / math.log(2.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.floats(0.5, 8.0), st.integers(0, 2**32), st.floats(0.0, 1.0))
def test_deteq_monotone_in_each_variance(k, ratio, seed, shrink):
    g = np.random.default_rng(seed)
    n = max(1, int(round(ratio * k)))
    vbar = g.uniform(0, 10, k)
    j = int(g.integers(k))
    lower = vbar.copy()
    lower[j] *= shrink
    p_hi, p_lo = DetEqProblem(vbar, n, k), DetEqProblem(lower, n, k)
    hi = det_eq_rate(p_hi, solve_fixed_point(p_hi, tol=1e-13))
    lo = det_eq_rate(p_lo, solve_fixed_point(p_lo, tol=1e-13))
    assert lo <= hi + 1e-10


def _mc_logdet(vbar, n, draws, g):
    k = vbar.size
    h = _cn(g, (draws, n, k), vbar)
    gram = np.conj(np.swapaxes(h, 1, 2)) @ h
    chol = np.linalg.cholesky(np.eye(k) + gram)
    return float(np.mean(2 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2).real), axis=1)))


def test_deteq_matches_monte_carlo_full_training():
    # N=64, K=24, users from a random drop, fresh training at tau=24
    g = np.random.default_rng(31)
    n, k, tau, t0 = 64, 24, 24, 60
    d = np.sqrt(1e-6 + g.random(k) * (1 - 1e-6))
    v = d ** -4.0
    v_tilde = v / (1 + tau * v)
    v_hat = v - v_tilde
    p = normalized_variances(_csi(v_hat, v_tilde, n), n, tau, t0)
    de = det_eq_rate(p, solve_fixed_point(p))
    beta = v_tilde.sum()
    samples = [block_rate_sample(_cn(g, (n, k), v_hat), EquivalentNoise(beta), tau, t0, k)
               for _ in range(2000)]
    assert abs(np.mean(samples) - de) / de <= 0.05


def test_deteq_accuracy_improves_with_size():
    g = np.random.default_rng(0)
    errs = {}
    for n, k in [(16, 8), (64, 24)]:
        e = []
        for _ in range(20):
            vbar = g.uniform(0.05, 3, k)
            p = DetEqProblem(vbar, n, k)
            de = det_eq_rate(p, solve_fixed_point(p))
            e.append(abs(_mc_logdet(vbar, n, 2000, g) / k - de) / de)
        errs[(n, k)] = np.mean(e)
    assert errs[(16, 8)] > errs[(64, 24)]
