"""Neyman-Pearson type-II errors, quantum (SDP) and classical (exact).

beta_alpha(rho, sigma) = min Tr[G sigma]  s.t.  Tr[G rho] >= alpha, 0 <= G <= 1.

Classical tests are randomized likelihood-ratio tests.  The product
distributions that arise from Pauli and erasure channels are evaluated on
type classes in the log domain, which keeps blocklengths up to 1e4 exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from . import operators as ops
from . import sdp
from .operators import HermitianOp
from .sdp import maps
from .sdp.problem import Block, Constraint, SdpProblem

# tight first; near alpha = 1 with low-rank rho the interior is thin and the
# tight run can stall, in which case the default tolerances are used
BETA_OPTS = sdp.Options(tol_gap=1e-10, tol_feas=1e-10)
BETA_FALLBACK = sdp.Options()
TIE_RTOL = 1e-12
SUPPORT_TOL = 1e-12
EXACT_BINOM_MAX = 4096


@dataclass(frozen=True)
class ClassicalDist:
    outcomes: tuple
    probs: np.ndarray

    def __init__(self, probs, outcomes: Sequence | None = None, tol: float = 1e-12):
        pr = np.asarray(probs, dtype=float).ravel()
        if np.any(pr < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(math.fsum(pr) - 1.0) > tol:
            raise ValueError(f"probabilities sum to {math.fsum(pr)!r}, not 1")
        out = tuple(outcomes) if outcomes is not None else tuple(range(pr.size))
        if len(out) != pr.size:
            raise ValueError("one label per probability is needed")
        pr.setflags(write=False)
        object.__setattr__(self, "outcomes", out)
        object.__setattr__(self, "probs", pr)

    def to_json(self) -> dict:
        return {"outcomes": list(self.outcomes), "probs": self.probs.tolist()}

    @classmethod
    def from_json(cls, data: dict | str) -> "ClassicalDist":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(data["probs"], data.get("outcomes"))


@dataclass(frozen=True)
class NPTest:
    beta: float
    threshold: float
    tie_gamma: float
    achieved_alpha: float
    log_beta: float = float("nan")


@dataclass(frozen=True)
class DistanceClassTable:
    """Type classes of a product test: statistic d with log masses under P and Q."""

    d: np.ndarray
    log_p: np.ndarray
    log_q: np.ndarray

    @property
    def log_lr(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.log_p - self.log_q

    def check(self, tol: float = 1e-10) -> None:
        for lm in (self.log_p, self.log_q):
            if abs(logsumexp(lm)) > tol:
                raise ValueError("class masses do not sum to one")


# quantum --------------------------------------------------------------------

def beta_problem(rho: np.ndarray, sigma: np.ndarray, alpha: float) -> SdpProblem:
    d = rho.shape[0]
    r = rho.real.copy() if not np.any(rho.imag) else rho
    s = sigma.real.copy() if not np.any(sigma.imag) else sigma
    cons = [
        Constraint("accept", {"G": -maps.trace_against(r)}, -float(alpha) * np.ones((1, 1))),
        Constraint("below_one", {"G": maps.identity(d)}, np.eye(d)),
    ]
    return SdpProblem([Block("G", d)], {"G": -s}, cons, name="beta")


def beta_quantum(rho: HermitianOp, sigma: HermitianOp, alpha: float,
                 opts: sdp.Options | None = None) -> tuple[float, HermitianOp]:
    if rho.dims != sigma.dims:
        raise ValueError("rho and sigma must share dims")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    for o in (rho, sigma):
        if not ops.is_psd(o) or abs(o.trace() - 1) > 1e-9:
            raise ValueError("inputs must be density operators")
    if alpha == 0.0:
        return 0.0, ops.zeros(rho.dims)
    if alpha == 1.0:
        # no interior: Tr[G rho] = 1 with G <= 1 pins G to the support projector
        # of rho, and the remaining block is best left at zero
        w, v = np.linalg.eigh(rho.mat)
        keep = v[:, w > SUPPORT_TOL * max(1.0, w.max())]
        proj = keep @ keep.conj().T
        value = float(np.real(np.vdot(proj, sigma.mat)))
        return min(1.0, max(0.0, value)), HermitianOp(proj, rho.dims, check=False)
    prob = beta_problem(rho.mat, sigma.mat, alpha)
    sol = sdp.solve(prob, opts or BETA_OPTS)
    if not sol.optimal and opts is None:
        sol = sdp.solve(prob, BETA_FALLBACK)
    if not sol.optimal:
        raise RuntimeError(f"beta SDP ended with status {sol.status}")
    value = min(1.0, max(0.0, -sol.value))
    return value, HermitianOp(sol.primal["G"], rho.dims, check=False)


# classical ------------------------------------------------------------------

def _compensated_cumsum(x: np.ndarray) -> np.ndarray:
    out = np.empty(x.size)
    s = 0.0
    c = 0.0
    for i, v in enumerate(x):
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
        out[i] = s + c
    return out


def _group_sorted(keys: np.ndarray, rtol: float) -> np.ndarray:
    """Group labels for keys sorted in decreasing order, merging near-ties."""
    if keys.size == 0:
        return np.zeros(0, dtype=np.int64)
    a, b = keys[:-1], keys[1:]
    fin = np.isfinite(a) & np.isfinite(b)
    with np.errstate(invalid="ignore"):
        near = fin & (a - b <= rtol * np.maximum(np.abs(a), np.abs(b)))
    same = (a == b) | near
    return np.concatenate([[0], np.cumsum(~same)]).astype(np.int64)


def _np_on_groups(pm: np.ndarray, qm: np.ndarray, lr: np.ndarray, alpha: float) -> NPTest:
    """pm, qm: class masses sorted by decreasing ratio lr."""
    if alpha <= 0 or pm.size == 0:
        thr = float(lr[0]) if lr.size else math.inf
        return NPTest(0.0, thr, 0.0, 0.0, -math.inf)
    if alpha >= 1.0:
        # accept the whole support of P; locating 1 in the cumulative sum would
        # let rounding of the masses pick a partial last class
        k = int(np.flatnonzero(pm > 0)[-1])
        beta = math.fsum(qm[pm > 0])
        lb = math.log(beta) if beta > 0 else -math.inf
        return NPTest(float(beta), float(lr[k]), 1.0, math.fsum(pm), lb)
    cum = _compensated_cumsum(pm)
    k = int(np.searchsorted(cum, alpha, side="left"))
    k = min(k, pm.size - 1)
    before = cum[k - 1] if k else 0.0
    gamma = 1.0 if pm[k] == 0 else min(1.0, max(0.0, (alpha - before) / pm[k]))
    beta = math.fsum(list(qm[:k]) + [gamma * qm[k]])
    achieved = before + gamma * pm[k]
    lb = math.log(beta) if beta > 0 else -math.inf
    return NPTest(float(beta), float(lr[k]), float(gamma), float(achieved), lb)


def beta_classical(p: ClassicalDist | np.ndarray, q: ClassicalDist | np.ndarray, alpha: float,
                   rtol: float = TIE_RTOL) -> NPTest:
    """Optimal randomized test accepting P with probability alpha."""
    if isinstance(p, ClassicalDist) and isinstance(q, ClassicalDist) and p.outcomes != q.outcomes:
        raise ValueError("distributions have different outcome sets")
    pv = np.asarray(p.probs if isinstance(p, ClassicalDist) else p, dtype=float)
    qv = np.asarray(q.probs if isinstance(q, ClassicalDist) else q, dtype=float)
    if pv.shape != qv.shape:
        raise ValueError("distributions have different sizes")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    keep = (pv > 0) | (qv > 0)
    pv, qv = pv[keep], qv[keep]
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(qv > 0, pv / np.where(qv > 0, qv, 1.0), np.inf)
    order = np.argsort(-lr, kind="stable")
    lr = lr[order]
    g = _group_sorted(lr, rtol)
    ng = int(g[-1]) + 1 if g.size else 0
    pm = np.array([math.fsum(x) for x in np.split(pv[order], np.flatnonzero(np.diff(g)) + 1)]) if ng else pv
    qm = np.array([math.fsum(x) for x in np.split(qv[order], np.flatnonzero(np.diff(g)) + 1)]) if ng else qv
    lr_g = lr[np.concatenate([[0], np.flatnonzero(np.diff(g)) + 1])] if ng else lr
    return _np_on_groups(pm, qm, lr_g, alpha)


def np_on_classes(table: DistanceClassTable, alpha: float) -> NPTest:
    """Randomized NP test on a class table, with beta kept in the log domain."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    lp, lq = table.log_p, table.log_q
    keep = np.isfinite(lp) | np.isfinite(lq)
    lp, lq = lp[keep], lq[keep]
    with np.errstate(invalid="ignore"):
        llr = np.where(np.isfinite(lq), lp - lq, np.inf)
    order = np.argsort(-llr, kind="stable")
    lp, lq, llr = lp[order], lq[order], llr[order]
    if alpha <= 0:
        with np.errstate(over="ignore"):
            thr = float(np.exp(llr[0])) if llr.size else math.inf
        return NPTest(0.0, thr, 0.0, 0.0, -math.inf)
    pm = np.exp(lp)
    if alpha >= 1.0:
        supp = np.isfinite(lp)
        k = int(np.flatnonzero(supp)[-1])
        lb = float(logsumexp(lq[supp]))
        with np.errstate(over="ignore"):
            thr = float(np.exp(llr[k]))
        return NPTest(float(math.exp(lb)), thr, 1.0, math.fsum(pm), lb)
    cum = _compensated_cumsum(pm)
    k = min(int(np.searchsorted(cum, alpha, side="left")), pm.size - 1)
    before = cum[k - 1] if k else 0.0
    gamma = 1.0 if pm[k] == 0 else min(1.0, max(0.0, (alpha - before) / pm[k]))
    terms = list(lq[:k])
    if gamma > 0:
        terms.append(math.log(gamma) + lq[k])
    lb = float(logsumexp(terms)) if terms else -math.inf
    with np.errstate(over="ignore"):
        thr = float(np.exp(llr[k]))
    return NPTest(float(math.exp(lb)) if np.isfinite(lb) else 0.0, thr, float(gamma),
                  float(before + gamma * pm[k]), lb)


@lru_cache(maxsize=64)
def _exact_log_binomials(n: int) -> np.ndarray:
    out = np.empty(n + 1)
    c = 1
    for d in range(n + 1):
        out[d] = math.log(c)
        c = c * (n - d) // (d + 1)
    out.setflags(write=False)
    return out


def log_binomials(n: int) -> np.ndarray:
    """log C(n, d), d = 0..n: exact integers up to a few thousand, log-gamma beyond."""
    if n <= EXACT_BINOM_MAX:
        return _exact_log_binomials(n)
    d = np.arange(n + 1)
    return gammaln(n + 1) - gammaln(d + 1) - gammaln(n - d + 1)


def _xlogy(k, lp):
    with np.errstate(invalid="ignore"):
        return np.where(k == 0, 0.0, k * lp)


def binomial_log_masses(n: int, p: float) -> np.ndarray:
    """log C(n,d) p^d (1-p)^(n-d) for d = 0..n."""
    d = np.arange(n + 1)
    with np.errstate(divide="ignore"):
        lp = math.log(p) if p > 0 else -np.inf
        lq = math.log1p(-p) if p < 1 else -np.inf
    return log_binomials(n) + _xlogy(d, lp) + _xlogy(n - d, lq)


def bsc_classes(n: int, p: float) -> DistanceClassTable:
    """Hamming-distance classes of P_XY^n against the uniform product."""
    lb = log_binomials(n)
    return DistanceClassTable(np.arange(n + 1), binomial_log_masses(n, p), lb - n * math.log(2.0))


def _check_n_p(n, p):
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")


def bsc_beta(n: int, p: float, alpha: float) -> NPTest:
    _check_n_p(n, p)
    return np_on_classes(bsc_classes(int(n), p), alpha)


def bsc_joint(n: int, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Explicit 4^n-outcome distributions P_XY^n and P_X^n x Q_Y^n (uniform)."""
    one = np.array([(1 - p) / 2, p / 2, p / 2, (1 - p) / 2])
    pj = one
    for _ in range(n - 1):
        pj = np.kron(pj, one)
    return pj, np.full(4 ** n, 0.25 ** n)


# erasure --------------------------------------------------------------------

@dataclass(frozen=True)
class BecResult:
    value: float
    log_value: float
    q: np.ndarray          # optimal distribution of the erasure count under Q
    method: str


def _bec_log_c(n: int) -> np.ndarray:
    return (np.arange(n + 1) - n) * math.log(2.0)


def bec_minimax(n: int, p: float, eps: float) -> BecResult:
    """min tau s.t. sum_k P_k min(1, tau / c_k) >= 1 - eps, with c_k = 2^(k-n).

    This is the value of max over erasure-count laws q of the type-II error
    of the best test, by the minimax theorem on the simplex.
    """
    alpha = 1.0 - eps
    logp = binomial_log_masses(n, p)
    logc = _bec_log_c(n)
    if alpha <= 0:
        return BecResult(0.0, -math.inf, np.eye(n + 1)[n], "minimax")
    if alpha >= 1.0:
        # every class with P_k > 0 must be accepted in full, so tau is the largest such c_k
        top = int(np.flatnonzero(np.isfinite(logp)).max())
        return BecResult(float(math.exp(logc[top])), float(logc[top]), np.eye(n + 1)[top], "minimax")
    # S_j = sum_{k>j} P_k 2^(j-k), computed backwards in the log domain
    log_s = np.full(n + 1, -np.inf)
    for j in range(n - 1, -1, -1):
        log_s[j] = math.log(0.5) + np.logaddexp(logp[j + 1], log_s[j + 1])
    pm = np.exp(logp)
    a = _compensated_cumsum(pm)
    ab = a + np.exp(log_s)      # g(c_j)
    if alpha <= ab[0]:
        # below the first breakpoint: g(tau) = tau * g(c_0) / c_0
        log_tau = logc[0] + math.log(alpha) - math.log(ab[0])
        j = -1
    else:
        j = int(np.searchsorted(ab, alpha, side="left")) - 1
        j = min(max(j, 0), n - 1)
        rest = alpha - a[j]
        if rest <= 0:
            log_tau = logc[j]
        else:
            log_tau = logc[j] + math.log(rest) - log_s[j]
    # optimal q is proportional to P_k / c_k on the classes with c_k > tau
    k = np.arange(n + 1)
    w = np.where(k > j, logp - logc, -np.inf)
    q = np.exp(w - logsumexp(w)) if np.any(np.isfinite(w)) else np.eye(n + 1)[n]
    return BecResult(float(math.exp(log_tau)), float(log_tau), q, "minimax")


def bec_lp(n: int, p: float, eps: float, opts: sdp.Options | None = None) -> BecResult:
    """Same value through an explicit LP (inner test dualized), for small n."""
    alpha = 1.0 - eps
    pm = np.exp(binomial_log_masses(n, p))
    c = np.exp(_bec_log_c(n))
    k = n + 1
    if alpha >= 1.0:
        # the multiplier lam is unbounded at alpha = 1 and the LP has no attained
        # optimum; the test must then accept every class with P_k > 0
        top = int(np.flatnonzero(pm > 0).max())
        return BecResult(float(c[top]), float(_bec_log_c(n)[top]), np.eye(k)[top], "lp")
    # row k reads lam P_k - s_k - q_k c_k <= 0; rows are equilibrated since the rhs is zero
    w = 1.0 / np.maximum(pm, c)
    blocks = [Block("lam", 1, "nonneg"), Block("s", k, "nonneg"), Block("q", k, "nonneg")]
    cons = [
        Constraint("test", {"lam": maps.diagonal((w * pm)[:, None]), "s": maps.diagonal(-np.diag(w)),
                            "q": maps.diagonal(-np.diag(w * c))},
                   np.zeros((k, k)), "diag<="),
        Constraint("simplex", {"q": maps.trace(k)}, np.ones((1, 1)), "=="),
    ]
    prob = SdpProblem(blocks, {"lam": np.array([[alpha]]), "s": -np.eye(k)}, cons, name="bec_lp")
    sol = sdp.solve(prob, opts or sdp.Options())
    if not sol.optimal:
        raise RuntimeError(f"BEC LP ended with status {sol.status}")
    v = max(0.0, sol.value)
    q = np.clip(np.real(np.diag(sol.primal["q"])), 0, None)
    return BecResult(v, math.log(v) if v > 0 else -math.inf, q / q.sum(), "lp")


def bec_classes(n: int, p: float, q: np.ndarray) -> DistanceClassTable:
    """Erasure-count classes of consistent outcomes for a given erasure-count law q."""
    with np.errstate(divide="ignore"):
        lq = np.log(np.asarray(q, dtype=float)) + _bec_log_c(n)
    return DistanceClassTable(np.arange(n + 1), binomial_log_masses(n, p), lq)


def bec_bound(n: int, p: float, eps: float, q_family: str | np.ndarray = "optimal",
              method: str = "minimax", log: bool = False) -> float:
    """Lower bound on 1/M for erasure-type channels.

    q_family: "optimal" maximizes over erasure-count laws; "output" uses
    the channel output law; an explicit vector fixes the law.  Any fixed
    law already gives a valid converse.
    """
    _check_n_p(n, p)
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    n = int(n)
    if isinstance(q_family, str) and q_family == "optimal":
        res = bec_minimax(n, p, eps) if method == "minimax" else bec_lp(n, p, eps)
        return res.log_value if log else res.value
    if isinstance(q_family, str):
        if q_family != "output":
            raise ValueError(f"unknown q_family {q_family!r}")
        q = np.exp(binomial_log_masses(n, p))
    else:
        q = np.asarray(q_family, dtype=float)
        if q.size != n + 1 or np.any(q < 0) or abs(q.sum() - 1) > 1e-12:
            raise ValueError("q must be a distribution over 0..n erasures")
    t = np_on_classes(bec_classes(n, p, q), 1.0 - eps)
    return t.log_beta if log else t.beta


# measured states --------------------------------------------------------------

def measurement_basis(spec, dims: Sequence[int]) -> np.ndarray:
    """Unitary whose columns are the measurement vectors.

    ``spec`` may be a unitary, a list of per-subsystem unitaries, or a name
    ("computational", "x") applied to every qubit.
    """
    if isinstance(spec, str):
        one = {"computational": None, "z": None, "x": np.array([[1, 1], [1, -1]]) / np.sqrt(2)}[spec]
        factors = [np.eye(d) if one is None or d != 2 else one for d in dims]
    elif isinstance(spec, (list, tuple)):
        factors = [np.asarray(u) for u in spec]
    else:
        return np.asarray(spec)
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def quantum_classical_equivalence(omega: HermitianOp, sigma: HermitianOp, basis=None,
                                  alpha: float = 0.9, tol: float = 1e-9) -> tuple[float, float]:
    """(quantum beta, classical beta of the measured distributions) for commuting states."""
    comm = omega.mat @ sigma.mat - sigma.mat @ omega.mat
    if np.abs(comm).max() > tol:
        raise ValueError(f"states do not commute (max |[omega, sigma]| = {np.abs(comm).max():.3g})")
    if basis is None:
        mix = omega.mat + math.pi * sigma.mat
        _, u = np.linalg.eigh(mix)
    else:
        u = measurement_basis(basis, omega.dims)
    if np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() > 1e-10:
        raise ValueError("measurement basis is not orthonormal")
    pd = np.clip(np.real(np.einsum("ij,ik,kj->j", u.conj(), omega.mat, u)), 0, None)
    qd = np.clip(np.real(np.einsum("ij,ik,kj->j", u.conj(), sigma.mat, u)), 0, None)
    bq, _ = beta_quantum(omega, sigma, alpha)
    bc = beta_classical(pd / pd.sum(), qd / qd.sum(), alpha).beta
    return bq, bc
