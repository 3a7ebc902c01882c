"""Tests for quantum and classical Neyman-Pearson evaluators."""

import itertools
import json
import math

import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.stats import binom

from pptmc import hypothesis as hyp
from pptmc import operators as ops
from pptmc.hypothesis import ClassicalDist
from pptmc.operators import HermitianOp


def rand_state(rng, d, dims=None, rank=None):
    g = rng.standard_normal((d, rank or d)) + 1j * rng.standard_normal((d, rank or d))
    w = g @ g.conj().T
    return HermitianOp(w / np.trace(w).real, dims)


def np_lp(p, q, alpha):
    """Type-II error of the best randomized test, by a direct LP over test probabilities."""
    k = len(p)
    res = linprog(q, A_ub=[-np.asarray(p)], b_ub=[-alpha], bounds=[(0, 1)] * k, method="highs")
    assert res.status == 0
    return res.fun


def threshold_oracle(p, q, alpha):
    """Exhaustive scan over deterministic tests with one fractional outcome."""
    k = len(p)
    best = math.inf
    for mask in itertools.product((0, 1), repeat=k):
        acc = sum(pi for pi, m in zip(p, mask) if m)
        qb = sum(qi for qi, m in zip(q, mask) if m)
        if acc >= alpha - 1e-15:
            best = min(best, qb)
            continue
        for j in range(k):
            if mask[j] or p[j] == 0:
                continue
            g = (alpha - acc) / p[j]
            if g <= 1:
                best = min(best, qb + g * q[j])
    return best


def test_classical_dist_validation():
    with pytest.raises(ValueError):
        ClassicalDist([0.5, 0.6])
    with pytest.raises(ValueError):
        ClassicalDist([1.2, -0.2])
    d = ClassicalDist.from_json('{"outcomes": ["a", "b"], "probs": [0.25, 0.75]}')
    assert d.outcomes == ("a", "b")
    assert ClassicalDist.from_json(json.dumps(d.to_json())).probs.tolist() == [0.25, 0.75]


def test_beta_classical_examples():
    t = hyp.beta_classical(ClassicalDist([0.45, 0.45, 0.05, 0.05]), ClassicalDist([0.25] * 4), 0.9)
    np.testing.assert_allclose(t.beta, 0.5, atol=1e-12)
    np.testing.assert_allclose(t.tie_gamma, 1.0, atol=1e-12)
    assert t.achieved_alpha >= 0.9 - 1e-12
    np.testing.assert_allclose(threshold_oracle([0.45, 0.45, 0.05, 0.05], [0.25] * 4, 0.9), 0.5, atol=1e-12)
    p = ClassicalDist([0.2, 0.3, 0.5])
    np.testing.assert_allclose(hyp.beta_classical(p, p, 0.37).beta, 0.37, atol=1e-12)
    assert hyp.beta_classical(ClassicalDist([1, 0]), ClassicalDist([0, 1]), 0.7).beta == 0.0


def test_beta_classical_matches_lp_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        k = int(rng.integers(2, 7))
        p = rng.dirichlet(np.ones(k))
        q = rng.dirichlet(np.ones(k))
        if rng.uniform() < 0.3:
            q[rng.integers(k)] = 0
            q /= q.sum()
        alpha = rng.uniform()
        t = hyp.beta_classical(p, q, alpha)
        np.testing.assert_allclose(t.beta, np_lp(p, q, alpha), atol=1e-9)
        np.testing.assert_allclose(t.beta, threshold_oracle(p, q, alpha), atol=1e-12)
        assert t.achieved_alpha >= alpha - 1e-12
        assert 0 <= t.tie_gamma <= 1


def test_beta_classical_monotone_in_alpha():
    rng = np.random.default_rng(1)
    p, q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
    vals = [hyp.beta_classical(p, q, a).beta for a in np.linspace(0, 1, 41)]
    assert vals[0] == 0.0
    assert np.all(np.diff(vals) >= -1e-14)


def test_beta_quantum_examples():
    rng = np.random.default_rng(2)
    rho = rand_state(rng, 3)
    val, gam = hyp.beta_quantum(rho, rho, 0.3)
    np.testing.assert_allclose(val, 0.3, atol=1e-8)
    assert ops.is_psd(gam, 1e-7) and ops.is_psd(HermitianOp(np.eye(3) - gam.mat), 1e-7)
    phi = HermitianOp(ops.bell("phi+").mat, (2, 2))
    mixed = HermitianOp(np.eye(4) / 4, (2, 2))
    np.testing.assert_allclose(hyp.beta_quantum(phi, mixed, 1.0)[0], 0.25, atol=1e-8)
    np.testing.assert_allclose(hyp.beta_quantum(ops.diag([1, 0]), ops.diag([0, 1]), 0.6)[0], 0.0, atol=1e-8)
    assert hyp.beta_quantum(rho, rho, 0.0)[0] == 0.0


def test_beta_quantum_commuting_matches_classical():
    rng = np.random.default_rng(3)
    u = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))[0]
    for _ in range(5):
        p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
        rho = HermitianOp((u * p) @ u.conj().T)
        sigma = HermitianOp((u * q) @ u.conj().T)
        a = rng.uniform(0.1, 0.95)
        np.testing.assert_allclose(hyp.beta_quantum(rho, sigma, a)[0], hyp.beta_classical(p, q, a).beta, atol=1e-7)


def test_beta_quantum_alpha_one_support_projector():
    rng = np.random.default_rng(4)
    rho = rand_state(rng, 4, rank=2)
    sigma = rand_state(rng, 4)
    w, v = np.linalg.eigh(rho.mat)
    proj = v[:, w > 1e-9] @ v[:, w > 1e-9].conj().T
    expect = np.real(np.trace(sigma.mat @ proj))
    np.testing.assert_allclose(hyp.beta_quantum(rho, sigma, 1.0)[0], expect, atol=1e-9)
    # the interior SDP approaches the same value from below as alpha -> 1
    near = np.array([hyp.beta_quantum(rho, sigma, 1 - d)[0] for d in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)])
    gaps = expect - near
    assert np.all(gaps >= -1e-7)
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] < 1e-3


def test_beta_quantum_multiplicative_for_pure():
    rng = np.random.default_rng(5)
    rho = rand_state(rng, 2, rank=1)
    sigma = rand_state(rng, 2)
    b1 = hyp.beta_quantum(rho, sigma, 1.0)[0]
    b2 = hyp.beta_quantum(ops.tensor(rho, rho), ops.tensor(sigma, sigma), 1.0)[0]
    np.testing.assert_allclose(b2, b1 ** 2, atol=1e-6)


def test_beta_quantum_validation():
    with pytest.raises(ValueError):
        hyp.beta_quantum(ops.diag([1, 0]), ops.diag([0.5, 0.5]), 1.5)
    with pytest.raises(ValueError):
        hyp.beta_quantum(ops.diag([1, 0]), ops.diag([2, 0]), 0.5)


def test_bsc_examples():
    np.testing.assert_allclose(hyp.bsc_beta(1, 0.1, 0.9).beta, 0.5, atol=1e-12)
    np.testing.assert_allclose(hyp.bsc_beta(2, 0.1, 0.99).beta, 0.75, atol=1e-12)
    assert hyp.bsc_beta(7, 0.2, 0.0).beta == 0.0


def test_bsc_matches_explicit_joint():
    for n in range(1, 6):
        for p in (0.05, 0.2, 0.45):
            pj, qj = hyp.bsc_joint(n, p)
            for a in (0.1, 0.5, 0.9, 0.999):
                np.testing.assert_allclose(hyp.bsc_beta(n, p, a).beta, hyp.beta_classical(pj, qj, a).beta,
                                           rtol=1e-12, atol=0)


def test_bsc_classes_are_normalized():
    for n in (1, 10, 500, 5000):
        t = hyp.bsc_classes(n, 0.11)
        t.check()
        np.testing.assert_allclose(np.exp(t.log_p), binom.pmf(np.arange(n + 1), n, 0.11), rtol=1e-9, atol=1e-300)


def test_log_binomials_match_scipy():
    from scipy.special import gammaln

    for n in (5, 100, 4096, 5000):
        k = np.arange(n + 1)
        np.testing.assert_allclose(hyp.log_binomials(n), gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1),
                                   rtol=1e-10)


def test_bsc_large_n_finite():
    t = hyp.bsc_beta(10000, 0.11, 0.9)
    assert 0 < t.beta < 1 or np.isfinite(t.log_beta)
    assert np.isfinite(t.log_beta)


def test_bsc_parameter_checks():
    with pytest.raises(ValueError):
        hyp.bsc_beta(0, 0.1, 0.5)
    with pytest.raises(ValueError):
        hyp.bsc_beta(3, 1.5, 0.5)


def test_bec_examples():
    np.testing.assert_allclose(hyp.bec_bound(1, 0.0, 0.0), 0.5, atol=1e-12)
    for n in (1, 3, 7):
        for eps in (0.0, 0.2, 0.6):
            np.testing.assert_allclose(hyp.bec_bound(n, 1.0, eps), 1 - eps, atol=1e-12)


def test_bec_minimax_matches_lp():
    for n in (1, 2, 4, 8):
        for p in (0.1, 0.5, 0.8):
            for eps in (0.0, 0.1, 0.4):
                a = hyp.bec_minimax(n, p, eps).value
                b = hyp.bec_lp(n, p, eps).value
                np.testing.assert_allclose(a, b, rtol=1e-7, atol=1e-10)


def test_bec_fixed_law_is_weaker():
    for n in (2, 5, 20):
        for eps in (0.05, 0.3):
            opt = hyp.bec_bound(n, 0.3, eps)
            assert hyp.bec_bound(n, 0.3, eps, q_family="output") <= opt + 1e-12
            unif = np.full(n + 1, 1.0 / (n + 1))
            assert hyp.bec_bound(n, 0.3, eps, q_family=unif) <= opt + 1e-12


def test_bec_optimal_law_attains_value():
    res = hyp.bec_minimax(6, 0.4, 0.1)
    np.testing.assert_allclose(res.q.sum(), 1.0, atol=1e-12)
    np.testing.assert_allclose(hyp.bec_bound(6, 0.4, 0.1, q_family=res.q), res.value, rtol=1e-10)


def test_bec_explicit_joint():
    # one use: outcomes (x, y) with y in {0, 1, e}; Q_Y = (1-qe)/2, (1-qe)/2, qe
    p, eps = 0.3, 0.1
    best = 0.0
    for qe in np.linspace(0, 1, 2001):
        pj = [(1 - p) / 2, 0, p / 2, 0, (1 - p) / 2, p / 2]
        qj = [(1 - qe) / 4, (1 - qe) / 4, qe / 2, (1 - qe) / 4, (1 - qe) / 4, qe / 2]
        best = max(best, hyp.beta_classical(pj, qj, 1 - eps).beta)
    np.testing.assert_allclose(hyp.bec_bound(1, p, eps), best, atol=1e-6)


def test_bec_large_n_log_domain():
    lv = hyp.bec_bound(10000, 0.5, 0.1, log=True)
    assert np.isfinite(lv) and lv < 0


def test_np_on_classes_matches_joint():
    n, p = 4, 0.2
    t = hyp.np_on_classes(hyp.bsc_classes(n, p), 0.8)
    pj, qj = hyp.bsc_joint(n, p)
    np.testing.assert_allclose(t.beta, hyp.beta_classical(pj, qj, 0.8).beta, rtol=1e-12)
    np.testing.assert_allclose(math.exp(t.log_beta), t.beta, rtol=1e-12)


def test_equivalence_dephasing_example():
    p = 0.1
    w = HermitianOp((1 - p) * ops.bell("phi+").mat + p * ops.bell("phi-").mat, (2, 2))
    s = HermitianOp((ops.bell("phi+").mat + ops.bell("phi-").mat) / 2, (2, 2))
    bq, bc = hyp.quantum_classical_equivalence(w, s, "x", alpha=0.9)
    np.testing.assert_allclose([bq, bc], [0.5, 0.5], atol=1e-7)


def test_equivalence_identical_states():
    rho = HermitianOp(np.diag([0.1, 0.2, 0.3, 0.4]), (2, 2))
    bq, bc = hyp.quantum_classical_equivalence(rho, rho, "computational", alpha=0.6)
    np.testing.assert_allclose([bq, bc], [0.6, 0.6], atol=1e-7)


def test_equivalence_erasure_outputs():
    from pptmc import channels as chans

    p = 0.3
    w = HermitianOp(chans.erasure(p).choi.mat / 2, (2, 3))
    s = HermitianOp(np.kron(np.eye(2) / 2, np.diag([(1 - p) / 2, (1 - p) / 2, p])), (2, 3))
    bq, bc = hyp.quantum_classical_equivalence(w, s, alpha=0.8)
    np.testing.assert_allclose(bq, bc, atol=1e-7)


def test_measurement_never_lowers_beta():
    p = 0.1
    w = HermitianOp((1 - p) * ops.bell("phi+").mat + p * ops.bell("phi-").mat, (2, 2))
    s = HermitianOp((ops.bell("phi+").mat + ops.bell("phi-").mat) / 2, (2, 2))
    bq, bc = hyp.quantum_classical_equivalence(w, s, "computational", alpha=0.9)
    assert bc >= bq - 1e-9


def test_equivalence_rejects_noncommuting():
    plus = ops.projector(np.array([1, 1]) / np.sqrt(2))
    with pytest.raises(ValueError):
        hyp.quantum_classical_equivalence(ops.diag([1, 0]), plus)
