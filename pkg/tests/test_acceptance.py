"""Acceptance run: one test per criterion, each reporting a PASS/FAIL line.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

import functools
import subprocess
import sys
import time
import traceback

import numpy as np

from pptmc import channels as chans
from pptmc import converse, sdp, symmetry
from pptmc import hypothesis as hyp
from pptmc.operators import HermitianOp

RESULTS = {}

P_GRID = (0.05, 0.1, 0.25)
EPS_GRID = (0.01, 0.1, 0.3)
SEED = 20261014


def criterion(number, title):
    """Record PASS/FAIL for the wrapped check; detail comes from its return value."""

    def wrap(fn):
        @functools.wraps(fn)
        def run():
            t0 = time.perf_counter()
            try:
                detail = fn()
            except BaseException as exc:
                msg = str(exc).strip().splitlines()
                RESULTS[number] = (title, False, f"{type(exc).__name__}: {msg[0] if msg else ''}"[:300],
                                   time.perf_counter() - t0)
                raise
            RESULTS[number] = (title, True, detail or "", time.perf_counter() - t0)

        run.criterion = number
        return run

    return wrap


def summary_lines():
    lines = []
    for k in sorted(RESULTS):
        title, ok, detail, secs = RESULTS[k]
        lines.append(f"criterion {k} {'PASS' if ok else 'FAIL'}: {title} ({secs:.1f} s) {detail}".rstrip())
    return lines


@functools.lru_cache(maxsize=None)
def channel(kind, p, n=1):
    return chans.tensor_power(chans.build(chans.ChannelSpec(kind, p)), n)


@functools.lru_cache(maxsize=None)
def two_forms(kind, p, eps, n):
    """Optimal values of the min form and the max form, solved separately."""
    ch = channel(kind, p, n)
    opts = sdp.Options(form="primal")
    smin = sdp.solve(converse.min_form(ch, eps), opts)
    smax = sdp.solve(converse.max_form(ch, eps), opts)
    assert smin.optimal and smax.optimal, (smin.status, smax.status)
    return -smin.primal_value, smax.primal_value


@functools.lru_cache(maxsize=None)
def full_bound(kind, p, eps, n):
    return converse.bound(channel(kind, p, n), eps, audit=False).value


# 1 -------------------------------------------------------------------------------

@criterion(1, "saddle point: |min form - max form| <= 1e-6")
def test_criterion_1_saddle_point():
    worst, bad = 0.0, []
    for kind in ("dephasing", "depolarizing"):
        for p in P_GRID:
            for eps in EPS_GRID:
                for n in (1, 2):
                    vmin, vmax = two_forms(kind, p, eps, n)
                    gap = abs(vmin - vmax)
                    worst = max(worst, gap)
                    if gap > 1e-6:
                        bad.append((kind, p, eps, n, gap))
    assert not bad, bad
    return f"36 instances, max gap {worst:.2e}"


# 2 -------------------------------------------------------------------------------

@criterion(2, "classical consistency: f >= bsc_beta - 1e-7 for dephasing")
def test_criterion_2_classical_consistency():
    cases = [(p, eps, n) for p in P_GRID for eps in EPS_GRID for n in (1, 2)]
    # one n = 3 point; the full program there has a 64 x 64 block
    cases.append((0.1, 0.1, 3))
    gaps, bad = [], []
    for p, eps, n in cases:
        f = full_bound("dephasing", p, eps, n)
        b = hyp.bsc_beta(n, p, 1 - eps).beta
        gaps.append(f - b)
        if f < b - 1e-7:
            bad.append((p, eps, n, f, b))
    assert not bad, bad
    f = full_bound("dephasing", 0.1, 0.1, 1)
    b = hyp.bsc_beta(1, 0.1, 0.9).beta
    # four-outcome joint: outcomes (x, y) with P = (1-p)/2, p/2, p/2, (1-p)/2 and Q uniform
    pj, qj = hyp.bsc_joint(1, 0.1)
    oracle = hyp.beta_classical(pj, qj, 0.9).beta
    np.testing.assert_allclose([f, b, oracle], [0.5, 0.5, 0.5], atol=1e-6)
    n3 = gaps[-1]
    return f"{len(cases)} instances, observed gap f - bsc in [{min(gaps):.2e}, {max(gaps):.2e}], n=3 gap {n3:.3e}"


# 3 -------------------------------------------------------------------------------

def _log_close(a, b, rtol):
    if np.isneginf(a) and np.isneginf(b):
        return True
    return abs(a - b) <= rtol * max(1.0, abs(a), abs(b))


@criterion(3, "exhaustive NP oracle: bsc_beta = beta_classical on 4^n joints, 1e-12 in log domain")
def test_criterion_3_np_oracle():
    t0 = time.perf_counter()
    alphas = np.linspace(0.0, 1.0, 21)
    worst, bad, count = 0.0, [], 0
    for n in range(1, 9):
        for p in (0.05, 0.1, 0.3):
            pj, qj = hyp.bsc_joint(n, p)
            for a in alphas:
                la = hyp.bsc_beta(n, p, a).log_beta
                lb = hyp.beta_classical(pj, qj, a).log_beta
                count += 1
                if not (np.isneginf(la) and np.isneginf(lb)):
                    worst = max(worst, abs(la - lb) / max(1.0, abs(la)))
                if not _log_close(la, lb, 1e-12):
                    bad.append((n, p, a, la, lb))
    secs = time.perf_counter() - t0
    assert not bad, bad[:5]
    assert secs < 60, secs
    return f"{count} comparisons, max relative log difference {worst:.1e}, {secs:.1f} s"


# 4 -------------------------------------------------------------------------------

@criterion(4, "Rains property: Tr[Phi gamma] <= 1/M + 1e-9 for sampled PPT states")
def test_criterion_4_rains():
    rng = np.random.default_rng(SEED)
    worst = -np.inf
    violations = 0
    for dim in (2, 3, 4):
        for _ in range(1000):
            g = converse.sample_ppt_state(dim, rng)
            excess = converse.rains_overlap(g, dim) - 1 / dim
            worst = max(worst, excess)
            violations += excess > 1e-9
    assert violations == 0, violations
    return f"3000 samples, max Tr[Phi gamma] - 1/M = {worst:.3e}"


# 5 -------------------------------------------------------------------------------

def _rand_contraction(rng, dims):
    d = dims[0] * dims[1]
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    _, v = np.linalg.eigh(g @ g.conj().T)
    w = rng.uniform(0, 1, size=d)
    return HermitianOp((v * w) @ v.conj().T, dims)


@criterion(5, "Lipschitz: |f0(O') - f0(O)| <= |A| ||O' - O||_1 + 1e-7")
def test_criterion_5_lipschitz():
    rng = np.random.default_rng(SEED + 1)
    violations, ratio = 0, 0.0
    for dims in ((2, 2), (2, 3)):
        for i in range(200):
            o1 = _rand_contraction(rng, dims)
            # alternate far pairs with nearby perturbations
            o2 = _rand_contraction(rng, dims) if i % 2 else HermitianOp(
                o1.mat + 1e-3 * _rand_contraction(rng, dims).mat, dims)
            lhs, rhs = converse.f0_lipschitz_check(o1, o2)
            violations += lhs > rhs + 1e-7
            ratio = max(ratio, lhs / rhs)
    assert violations == 0, violations
    return f"400 pairs, max lhs/rhs {ratio:.3f}"


# 6 -------------------------------------------------------------------------------

@criterion(6, "slackness audit: all eight residuals <= 1e-5 at n=1")
def test_criterion_6_slackness():
    worst, bad = 0.0, []
    for kind in ("dephasing", "erasure", "depolarizing"):
        for p in P_GRID:
            for eps in EPS_GRID:
                r = converse.bound(channel(kind, p), eps, audit=True)
                assert set(r.residuals) == set(converse.SLACKNESS_NAMES)
                for name, v in r.residuals.items():
                    worst = max(worst, v)
                    if not v <= 1e-5:
                        bad.append((kind, p, eps, name, v))
    assert not bad, bad
    return f"27 instances x 8 residuals, max {worst:.2e}"


# 7 -------------------------------------------------------------------------------

@criterion(7, "symmetry reduction: reduced = full within 1e-6; 1000-point sweep < 10 s")
def test_criterion_7_reduction():
    cases = [("dephasing", p, eps, n) for p in P_GRID for eps in EPS_GRID for n in (1, 2)]
    cases.append(("dephasing", 0.1, 0.1, 3))
    cases += [("depolarizing", p, eps, n) for p in P_GRID for eps in EPS_GRID for n in (1, 2)]
    cases += [("erasure", p, 0.1, n) for p in P_GRID for n in (1, 2)]
    worst, bad = 0.0, []
    for kind, p, eps, n in cases:
        red = symmetry.reduced_bound(chans.ChannelSpec(kind, p), n, eps).value
        diff = abs(red - full_bound(kind, p, eps, n))
        worst = max(worst, diff)
        if diff > 1e-6:
            bad.append((kind, p, eps, n, diff))
    assert not bad, bad
    spec = chans.ChannelSpec("dephasing", 0.1)
    t0 = time.perf_counter()
    sweep = [symmetry.reduced_bound(spec, n, 0.1).value for n in range(1, 1001)]
    secs = time.perf_counter() - t0
    assert all(0 < v <= 1 for v in sweep)
    assert secs < 10, secs
    return f"{len(cases)} instances, max difference {worst:.2e}; sweep n=1..1000 in {secs:.2f} s"


# 8 -------------------------------------------------------------------------------

def _rand_state(rng, d, rank):
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    r = g @ g.conj().T
    return HermitianOp(r / np.trace(r).real)


@criterion(8, "corner cases: f(N,1)=0, beta(rho,rho)=alpha, bec(p=1)=1-eps, monotone in eps")
def test_criterion_8_corners():
    for kind in ("dephasing", "depolarizing", "erasure"):
        assert converse.bound(channel(kind, 0.1), 1.0).value == 0.0
        assert symmetry.reduced_bound(chans.ChannelSpec(kind, 0.1), 2, 1.0).value == 0.0
    assert converse.bound(channel("dephasing", 0.1, 2), 1.0, audit=False).value == 0.0

    rng = np.random.default_rng(SEED + 2)
    worst_beta = 0.0
    for d, rank in ((2, 2), (3, 1), (4, 2), (4, 4)):
        rho = _rand_state(rng, d, rank)
        for a in np.linspace(0, 1, 11):
            b, _ = hyp.beta_quantum(rho, rho, a)
            worst_beta = max(worst_beta, abs(b - a))
            p = np.real(np.diag(rho.mat))
            worst_beta = max(worst_beta, abs(hyp.beta_classical(p, p, a).beta - a))
    assert worst_beta <= 1e-9, worst_beta

    worst_bec = 0.0
    for n in (1, 2, 5, 50, 1000):
        for eps in (0.0, 0.01, 0.1, 0.3, 0.75, 1.0):
            worst_bec = max(worst_bec, abs(hyp.bec_bound(n, 1.0, eps) - (1 - eps)))
    assert worst_bec <= 1e-9, worst_bec

    eps_line = (0.0,) + EPS_GRID + (1.0,)
    bad = []
    for kind in ("dephasing", "depolarizing", "erasure"):
        for p in P_GRID:
            for n in ((1, 2) if kind != "erasure" else (1,)):
                vals = [0.0 if e == 1.0 else full_bound(kind, p, e, n) for e in eps_line]
                bad += [(kind, p, n, e) for e, a, b in zip(eps_line[1:], vals, vals[1:]) if b > a + 1e-8]
    assert not bad, bad
    return f"max |beta - alpha| {worst_beta:.1e}, max |bec - (1-eps)| {worst_bec:.1e}"


# 9 -------------------------------------------------------------------------------

CLI_COMMANDS = (
    ["bound", "--channel", "depolarizing", "--p", "0.1", "--eps", "0.1", "--n", "1"],
    ["sweep", "--channel", "dephasing", "--p", "0.1", "--eps", "0.1", "--eps", "0.3", "--n", "1..2"],
    ["sweep", "--channel", "erasure", "--p", "0.3", "--eps", "0.05", "--n", "1..200", "--method", "reduced"],
    ["sweep", "--channel", "dephasing", "--p", "0.11", "--eps", "0.001", "--n", "1..300", "--method", "classical",
     "--format", "json"],
    ["audit", "--channel", "erasure", "--p", "0.2", "--eps", "0.1", "--n", "1", "--seed", "7"],
)


@criterion(9, "determinism: repeated CLI runs give byte-identical output")
def test_criterion_9_determinism():
    diffs = []
    for args in CLI_COMMANDS:
        outs = [subprocess.run([sys.executable, "-m", "pptmc.cli", *args], capture_output=True, check=True).stdout
                for _ in range(2)]
        assert outs[0], args
        if outs[0] != outs[1]:
            diffs.append(args[0])
    assert not diffs, diffs
    return f"{len(CLI_COMMANDS)} commands run twice"


CRITERIA = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]


if __name__ == "__main__":
    for check in CRITERIA:
        try:
            check()
        except BaseException:
            traceback.print_exc()
    print("\n".join(summary_lines()))
    sys.exit(0 if all(ok for _, ok, _, _ in RESULTS.values()) and len(RESULTS) == 9 else 1)
