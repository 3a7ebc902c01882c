"""Tests for group twirls, invariant subspaces and the reduced bounds."""

import json

import numpy as np
import pytest

from pptmc import channels as chans
from pptmc import converse, hypothesis, symmetry
from pptmc import operators as ops
from pptmc.converse import FeasiblePoint, PptCandidate
from pptmc.operators import HermitianOp

H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
BELLS = ("phi+", "phi-", "psi+", "psi-")


def rand_herm(rng, d):
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return g + g.conj().T


def rand_state(rng, d):
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    w = g @ g.conj().T
    return w / np.trace(w).real


def rand_unitary(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def psd_sqrt(a):
    w, v = np.linalg.eigh(a)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def random_feasible_point(rng, ch):
    """phi random; Lambda = S R S with S = sqrt(phi^T (x) 1) and 0 <= R <= 1."""
    da, db = ch.in_dim, ch.out_dim
    phi = rand_state(rng, da)
    s = psd_sqrt(np.kron(phi.T, np.eye(db)))
    w, v = np.linalg.eigh(rand_herm(rng, da * db))
    r = (v * rng.uniform(0, 1, size=w.size)) @ v.conj().T
    lam = s @ r @ s
    lam = 0.5 * (lam + lam.conj().T)
    fid = np.real(np.vdot(lam, ch.choi.mat))
    eps = min(1.0, max(0.0, 1 - fid) + 0.01)
    return FeasiblePoint(HermitianOp(phi), HermitianOp(lam)), eps


def random_ppt_candidate(rng, dim):
    g = converse.sample_ppt_state(dim, rng)
    marg = np.trace(g.reshape(dim, dim, dim, dim), axis1=1, axis2=3)
    return PptCandidate(HermitianOp(g / np.linalg.eigvalsh(marg)[-1], (dim, dim)))


def test_group_validation():
    with pytest.raises(ValueError):
        symmetry.GroupRep([(np.eye(2) * 2, np.eye(2))])
    with pytest.raises(ValueError):
        symmetry.GroupRep([(np.eye(2), np.eye(2))], weights=[0.5])
    with pytest.raises(ValueError):
        symmetry.GroupRep([])


def test_group_json_round_trip():
    g = symmetry.clifford_group("same")
    back = symmetry.GroupRep.from_json(json.dumps(g.to_json()))
    assert len(back) == 24
    rng = np.random.default_rng(0)
    o = rand_herm(rng, 4)
    np.testing.assert_allclose(symmetry.twirl(o, back).mat, symmetry.twirl(o, g).mat, atol=1e-13)


def test_clifford_group_closed():
    us = symmetry.clifford_unitaries()
    assert len(us) == 24

    def index(u):
        hits = [k for k, w in enumerate(us) if abs(abs(np.trace(w.conj().T @ u)) - 2) < 1e-9]
        assert len(hits) == 1
        return hits[0]

    for a in us[:6]:
        for b in us:
            index(a @ b)


def test_twirl_input_pauli_gives_maximally_mixed():
    rng = np.random.default_rng(1)
    g = symmetry.pauli_group("input")
    for _ in range(5):
        out = symmetry.twirl(rand_state(rng, 2), g)
        np.testing.assert_allclose(out.mat, np.eye(2) / 2, atol=1e-14)


def test_twirl_idempotent_and_self_adjoint():
    rng = np.random.default_rng(2)
    for g in (symmetry.pauli_group("same"), symmetry.clifford_group("same"), symmetry.clifford_group("conj")):
        a, b = rand_herm(rng, 4), rand_herm(rng, 4)
        ta = symmetry.twirl(a, g).mat
        np.testing.assert_allclose(symmetry.twirl(ta, g).mat, ta, atol=1e-13)
        np.testing.assert_allclose(np.vdot(b, ta), np.vdot(symmetry.twirl(b, g).mat, a), atol=1e-12)


def test_twirl_preserves_trace_positivity_and_contracts_norm():
    rng = np.random.default_rng(3)
    g = symmetry.clifford_group("same")
    for _ in range(5):
        rho = rand_state(rng, 4)
        out = symmetry.twirl(rho, g)
        np.testing.assert_allclose(out.trace(), 1.0, atol=1e-12)
        assert ops.is_psd(out)
        o = rand_herm(rng, 4)
        assert ops.trace_norm(symmetry.twirl(o, g)) <= ops.trace_norm(o) + 1e-12


def test_twirl_fixes_covariant_choi():
    for ch, g in ((chans.dephasing(0.1), symmetry.pauli_group("same")),
                  (chans.depolarizing(0.3), symmetry.clifford_group("same")),
                  (chans.depolarizing(0.3), symmetry.pauli_group("conj"))):
        np.testing.assert_allclose(symmetry.twirl(ch.choi, g).mat, ch.choi.mat, atol=1e-13)


def test_twirl_product_group_on_tensor_power():
    ch2 = chans.tensor_power(chans.dephasing(0.2), 2)
    g = symmetry.product_group([symmetry.pauli_group("same")] * 2)
    np.testing.assert_allclose(symmetry.twirl(ch2.choi, g).mat, ch2.choi.mat, atol=1e-13)
    # the site-wise twirl agrees with the materialized 16-element twirl
    rng = np.random.default_rng(4)
    o = rand_herm(rng, 16)
    np.testing.assert_allclose(symmetry.twirl(o, g).mat, symmetry.twirl(o, g.materialize()).mat, atol=1e-12)


def test_twirl_permutation_group():
    ch2 = chans.tensor_power(chans.erasure(0.3), 2)
    g = symmetry.permutation_group(2, 2, 3)
    np.testing.assert_allclose(symmetry.twirl(ch2.choi, g).mat, ch2.choi.mat, atol=1e-13)


def test_twirl_dimension_mismatch():
    with pytest.raises(ValueError):
        symmetry.twirl(np.eye(6), symmetry.pauli_group("same"))


def test_partial_transpose_compatibility():
    rng = np.random.default_rng(5)
    for g in (symmetry.clifford_group("same"), symmetry.pauli_group("same")):
        alt = symmetry.alternate_rep(g)
        for _ in range(3):
            o = HermitianOp(rand_herm(rng, 4), (2, 2))
            lhs = ops.partial_transpose(symmetry.twirl(o, g), 0).mat
            rhs = symmetry.twirl(ops.partial_transpose(o, 0), alt).mat
            np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_twirl_keeps_ppt():
    rng = np.random.default_rng(6)
    g = symmetry.clifford_group("same")
    for _ in range(10):
        m = random_ppt_candidate(rng, 2)
        out = symmetry.twirl(m.m_choi, g)
        assert ops.is_psd(ops.partial_transpose(HermitianOp(out.mat, (2, 2)), 0))


def test_invariant_basis_pauli():
    b = symmetry.invariant_basis(symmetry.pauli_group("same"), (2, 2))
    assert len(b) == 4
    for name in BELLS:
        assert b.contains(ops.bell(name).mat)
    for e in b.elements:
        np.testing.assert_allclose(symmetry.twirl(e, symmetry.pauli_group("same")).mat, e, atol=1e-10)
    assert np.all(np.linalg.eigvalsh(b.gram) > 0)


def test_invariant_basis_trivial_and_clifford():
    assert len(symmetry.invariant_basis(symmetry.trivial_group(2, 2))) == 16
    b = symmetry.invariant_basis(symmetry.clifford_group("same"))
    assert len(b) == 2
    phi = ops.bell("phi+").mat
    assert b.contains(phi) and b.contains(np.eye(4) - phi)
    assert not b.contains(ops.bell("phi-").mat)


def test_invariant_basis_projection_is_twirl():
    rng = np.random.default_rng(7)
    g = symmetry.clifford_group("same")
    b = symmetry.invariant_basis(g)
    o = rand_herm(rng, 4)
    np.testing.assert_allclose(b.project(o), symmetry.twirl(o, g).mat, atol=1e-12)


def test_check_prop3_random_points():
    rng = np.random.default_rng(8)
    cases = ((chans.dephasing(0.1), symmetry.pauli_group("same")),
             (chans.depolarizing(0.25), symmetry.clifford_group("same")))
    for ch, g in cases:
        for _ in range(10):
            point, eps = random_feasible_point(rng, ch)
            assert symmetry.check_prop3(point, random_ppt_candidate(rng, 2), ch, g, eps)


def test_check_prop3_dephased_unitary_candidates():
    rng = np.random.default_rng(9)
    ch, g = chans.dephasing(0.2), symmetry.pauli_group("same")
    d = converse.fully_dephasing_choi(1)
    for _ in range(5):
        w = np.kron(np.eye(2), rand_unitary(rng, 2))
        m = PptCandidate(HermitianOp(w @ d @ w.conj().T, (2, 2)))
        point, eps = random_feasible_point(rng, ch)
        assert symmetry.check_prop3(point, m, ch, g, eps)


def test_check_prop3_rejections():
    rng = np.random.default_rng(10)
    ch = chans.dephasing(0.1)
    point, eps = random_feasible_point(rng, ch)
    m = random_ppt_candidate(rng, 2)
    with pytest.raises(ValueError):
        symmetry.check_prop3(point, m, ch, symmetry.GroupRep([(H, H)]), eps)
    upper = np.kron(point.phi.mat.T, np.eye(2))
    bad = FeasiblePoint(point.phi, HermitianOp(upper + 1e-3 * np.eye(4)))
    with pytest.raises(ValueError):
        symmetry.check_prop3(bad, m, ch, symmetry.pauli_group("same"), eps)
    with pytest.raises(ValueError):
        symmetry.check_prop3(point, PptCandidate(HermitianOp(ops.omega(2).mat, (2, 2))), ch,
                             symmetry.pauli_group("same"), eps)


def test_f0_constant_on_orbits():
    rng = np.random.default_rng(11)
    g = symmetry.clifford_group("same")
    for _ in range(3):
        w, v = np.linalg.eigh(rand_herm(rng, 4))
        o = (v * rng.uniform(0, 1, 4)) @ v.conj().T
        base = converse.f0(o, 2)
        for k in rng.choice(len(g), size=3, replace=False):
            np.testing.assert_allclose(converse.f0(symmetry.act(o, g, int(k)), 2), base, atol=1e-7)


def test_bell_types_kernel_matches_partial_transpose():
    # kernel row of Phi+ (x) Phi+ against an explicit partial transpose at n = 2
    bt = symmetry.bell_types(2)
    assert len(bt.types) == 10
    np.testing.assert_allclose(np.exp(bt.log_size).sum(), 16)
    kets = ops.bell_kets()
    proj = {k: np.outer(kets[k], kets[k].conj()) for k in BELLS}
    for a, name in enumerate(BELLS):
        for b, other in enumerate(BELLS):
            pt = ops.partial_transpose(HermitianOp(proj[other], (2, 2)), 0).mat
            np.testing.assert_allclose(np.real(np.vdot(proj[name], pt)), symmetry.BELL_PT[a, b] / 2, atol=1e-14)


def test_bell_types_budget():
    with pytest.raises(chans.BudgetExceeded):
        symmetry.bell_types(symmetry.MAX_TYPE_N + 1)


def test_type_lp_matches_classes_for_dephasing():
    for n in range(1, 9):
        for p, eps in ((0.1, 0.1), (0.2, 0.05)):
            spec = chans.ChannelSpec("dephasing", p)
            a = symmetry.reduced_bound(spec, n, eps, route="types").value
            b = symmetry.reduced_bound(spec, n, eps, route="classes").value
            c = symmetry.reduced_bound(spec, n, eps, route="lp").value
            np.testing.assert_allclose(a, b, atol=1e-7)
            np.testing.assert_allclose(c, b, atol=1e-7)


def test_depolarizing_types_vs_bsc():
    spec = chans.ChannelSpec("depolarizing", 0.1)
    for n in range(1, 6):
        v = symmetry.reduced_bound(spec, n, 0.1).value
        classical = hypothesis.bsc_beta(n, 0.1, 0.9).beta
        assert v >= classical - 1e-7
        if n <= 2:
            np.testing.assert_allclose(v, classical, atol=1e-7)


def test_reduced_matches_full_small_n():
    for kind, p in (("dephasing", 0.1), ("depolarizing", 0.2), ("erasure", 0.3)):
        spec = chans.ChannelSpec(kind, p)
        for n in (1, 2):
            full = converse.bound(chans.tensor_power(chans.build(spec), n), 0.1, audit=False).value
            red = symmetry.reduced_bound(spec, n, 0.1).value
            np.testing.assert_allclose(red, full, atol=1e-6)


def test_reduced_erasure_routes_agree():
    spec = chans.ChannelSpec("erasure", 0.4)
    for n in (1, 3, 6):
        a = symmetry.reduced_bound(spec, n, 0.2, route="classes").value
        b = symmetry.reduced_bound(spec, n, 0.2, route="lp").value
        np.testing.assert_allclose(a, b, rtol=1e-7)


def test_reduced_bound_corners_and_errors():
    spec = chans.ChannelSpec("dephasing", 0.1)
    r = symmetry.reduced_bound(spec, 5, 1.0)
    assert r.value == 0.0 and np.isinf(r.log2_M_upper)
    assert r.method == "reduced"
    with pytest.raises(ValueError):
        symmetry.reduced_bound(chans.ChannelSpec("identity"), 1, 0.1)
    with pytest.raises(ValueError):
        symmetry.reduced_bound(spec, 0, 0.1)
    with pytest.raises(ValueError):
        symmetry.reduced_bound(chans.ChannelSpec("depolarizing", 0.1), 2, 0.1, route="classes")
    with pytest.raises(chans.BudgetExceeded):
        symmetry.reduced_bound(chans.ChannelSpec("depolarizing", 0.1), 40, 0.1)


def test_reduced_large_n():
    spec = chans.ChannelSpec("dephasing", 0.11)
    v = symmetry.reduced_bound(spec, 1000, 0.1)
    np.testing.assert_allclose(v.value, hypothesis.bsc_beta(1000, 0.11, 0.9).beta, rtol=1e-12)
    assert v.log2_M_upper > 0
