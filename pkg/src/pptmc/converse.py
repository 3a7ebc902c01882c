"""The PPT minimax converse f(N, eps) and its supporting quantities.

For a channel with Choi operator N on A (x) B,

    f(N, eps) = min Tr xi
        s.t.  xi (x) 1 >= Lambda + Gamma^{T_A},  0 <= Lambda <= phi^T (x) 1,
              phi >= 0, Tr phi <= 1, Tr[Lambda N] >= 1 - eps, Gamma >= 0,

and any PPT-assisted code with M messages and entanglement infidelity
at most eps has 1/M >= f(N, eps).  The dual program is

    f(N, eps) = max m (1 - eps) - n
        s.t.  M >= 0, M^{T_A} >= 0, Tr_B M <= 1,  m N <= M + R,
              Tr_B R <= n 1,  R >= 0,  m, n >= 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .channels import Channel
from .operators import HermitianOp
from . import sdp
from .sdp import maps
from .sdp.problem import Block, Constraint, SdpProblem, SdpSolution

log = logging.getLogger("pptmc.converse")

SADDLE_TOL = 1e-5
SLACKNESS_NAMES = ("trace_phi", "fidelity", "phi_R", "xi_M", "n_phi", "MT_Gamma", "marginal_xi", "mN_Lambda")


class SolverFailure(RuntimeError):
    pass


class InconsistentBound(RuntimeError):
    pass


@dataclass(frozen=True)
class FeasiblePoint:
    phi: HermitianOp
    lam: HermitianOp

    def violation(self, ch: Channel, eps: float) -> float:
        """Worst violation of the feasibility conditions (0 when feasible)."""
        da, db = ch.in_dim, ch.out_dim
        phi, lam = self.phi.mat, self.lam.mat
        upper = np.kron(phi.T, np.eye(db)) - lam
        v = [
            -ops.eigvalsh(phi)[0],
            phi.trace().real - 1.0,
            -ops.eigvalsh(lam)[0],
            -ops.eigvalsh(upper)[0],
            (1 - eps) - np.real(np.vdot(lam, ch.choi.mat)),
        ]
        return max(0.0, max(v))

    def is_feasible(self, ch: Channel, eps: float, tol: float = 1e-9) -> bool:
        return self.violation(ch, eps) <= tol * (1 + np.abs(self.lam.mat).max())


@dataclass(frozen=True)
class PptCandidate:
    m_choi: HermitianOp

    def violation(self, din: int, dout: int) -> float:
        m = self.m_choi.mat
        pt = maps.partial_transpose([din, dout], [0])(m)
        marg = np.trace(m.reshape(din, dout, din, dout), axis1=1, axis2=3)
        return max(0.0, -ops.eigvalsh(m)[0], -ops.eigvalsh(pt)[0], ops.eigvalsh(marg)[-1] - 1.0)

    def is_valid(self, din: int, dout: int, tol: float = 1e-9) -> bool:
        return self.violation(din, dout) <= tol * (1 + np.abs(self.m_choi.mat).max())


@dataclass
class MinFormVars:
    point: FeasiblePoint
    xi: np.ndarray
    gamma: np.ndarray


@dataclass
class MaxFormVars:
    m: float
    n: float
    r: np.ndarray
    ppt: PptCandidate


@dataclass
class BoundResult:
    value: float
    log2_M_upper: float
    eps: float
    channel: str = ""
    p: float | None = None
    n: int = 1
    gap: float = 0.0
    method: str = "sdp"
    status: str = "optimal"
    min_value: float | None = None
    max_value: float | None = None
    residuals: dict = field(default_factory=dict)
    min_solution: SdpSolution | None = field(default=None, repr=False)
    max_solution: SdpSolution | None = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def num(x):
            if x is None:
                return None
            x = float(x)
            if math.isinf(x):
                return "inf" if x > 0 else "-inf"
            return x

        out = {"channel": self.channel, "p": num(self.p), "eps": num(self.eps), "n": int(self.n),
               "value": num(self.value), "log2_M_upper": num(self.log2_M_upper), "gap": num(self.gap),
               "method": self.method, "status": self.status,
               "residuals": {k: num(v) for k, v in self.residuals.items()}}
        for k in ("min_value", "max_value"):
            if getattr(self, k) is not None:
                out[k] = num(getattr(self, k))
        if self.extra:
            out["extra"] = {k: num(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v
                            for k, v in self.extra.items()}
        return out


def log2_upper(value: float) -> float:
    return math.inf if value <= 0 else -math.log2(value)


# f0 and the PPT set -----------------------------------------------------------

def ppt_constraints(din: int, dout: int, block: str = "M") -> list[Constraint]:
    d = din * dout
    return [
        Constraint("ppt", {block: -maps.partial_transpose([din, dout], [0])}, np.zeros((d, d))),
        Constraint("subchannel", {block: maps.partial_trace([din, dout], [0])}, np.eye(din)),
    ]


def f0_problem(o: HermitianOp | np.ndarray, din: int | None = None) -> SdpProblem:
    """max Tr[o M] over PPT Choi candidates M; ``din`` defaults to dims[0]."""
    mat = o.mat if isinstance(o, HermitianOp) else np.asarray(o)
    if din is None:
        if not isinstance(o, HermitianOp) or len(o.dims) != 2:
            raise ValueError("pass din or a bipartite HermitianOp")
        din = o.dims[0]
    d = mat.shape[0]
    dout = d // din
    return SdpProblem([Block("M", d)], {"M": _realify(mat)}, ppt_constraints(din, dout), name="f0")


def _realify(a):
    a = np.asarray(a)
    return a.real.copy() if not np.any(np.imag(a)) else a


def f0(o: HermitianOp | np.ndarray, din: int | None = None, opts: sdp.Options | None = None) -> float:
    mat = o.mat if isinstance(o, HermitianOp) else np.asarray(o)
    if not np.any(mat):
        return 0.0
    sol = sdp.solve(f0_problem(o, din), opts)
    if not sol.optimal:
        raise SolverFailure(f"f0 solve ended with status {sol.status}")
    return max(0.0, sol.primal_value)


def f0_lipschitz_check(o1: HermitianOp, o2: HermitianOp, opts: sdp.Options | None = None) -> tuple[float, float]:
    din = o1.dims[0]
    lhs = abs(f0(o1, din, opts) - f0(o2, din, opts))
    rhs = din * ops.trace_norm(o1.mat - o2.mat)
    return lhs, rhs


# the two programs ---------------------------------------------------------------

def _choi(ch: Channel) -> np.ndarray:
    return _realify(ch.choi.mat)


def min_form(ch: Channel, eps: float) -> SdpProblem:
    _check_eps(eps)
    da, db = ch.in_dim, ch.out_dim
    d = da * db
    nmat = _choi(ch)
    phi_t = maps.kron_identity(da, db) @ maps.transpose(da)
    blocks = [Block("phi", da), Block("lam", d), Block("gam", d), Block("xi", da)]
    cons = [
        Constraint("trace_phi", {"phi": maps.trace(da)}, np.ones((1, 1))),
        Constraint("lam_le_phi", {"lam": maps.identity(d), "phi": -phi_t}, np.zeros((d, d))),
        Constraint("fidelity", {"lam": -maps.trace_against(nmat)}, -(1.0 - eps) * np.ones((1, 1))),
        Constraint("xi_dominates", {"lam": maps.identity(d), "gam": maps.partial_transpose([da, db], [0]),
                                    "xi": -maps.kron_identity(da, db)}, np.zeros((d, d))),
    ]
    return SdpProblem(blocks, {"xi": -np.eye(da)}, cons, name="min_form")


def max_form(ch: Channel, eps: float) -> SdpProblem:
    _check_eps(eps)
    da, db = ch.in_dim, ch.out_dim
    d = da * db
    nmat = _choi(ch)
    blocks = [Block("m", 1, "nonneg"), Block("n", 1, "nonneg"), Block("R", d), Block("M", d)]
    cons = ppt_constraints(da, db) + [
        Constraint("dominate", {"m": maps.embed(nmat), "M": -maps.identity(d), "R": -maps.identity(d)},
                   np.zeros((d, d))),
        Constraint("r_marginal", {"R": maps.partial_trace([da, db], [0]), "n": -maps.embed(np.eye(da))},
                   np.zeros((da, da))),
    ]
    return SdpProblem(blocks, {"m": np.array([[1.0 - eps]]), "n": -np.ones((1, 1))}, cons, name="max_form")


def _check_eps(eps):
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps={eps} is outside [0, 1]")


def min_form_vars(sol: SdpSolution) -> MinFormVars:
    x = sol.primal
    pt = FeasiblePoint(HermitianOp(x["phi"], check=False), HermitianOp(x["lam"], check=False))
    return MinFormVars(pt, x["xi"], x["gam"])


def max_form_vars(sol: SdpSolution) -> MaxFormVars:
    x = sol.primal
    return MaxFormVars(float(np.real(x["m"][0, 0])), float(np.real(x["n"][0, 0])), x["R"],
                       PptCandidate(HermitianOp(x["M"], check=False)))


# audit ---------------------------------------------------------------------------

def _rel(residual: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    r = float(np.abs(residual).max(initial=0.0))
    return r / (1.0 + ops.operator_norm(np.atleast_2d(a)) * ops.operator_norm(np.atleast_2d(b)))


def slackness_residuals(ch: Channel, eps: float, mn: MinFormVars, mx: MaxFormVars) -> dict:
    """The eight complementary-slackness identities, as relative max-entry residuals.

    The two scalar identities are weighted by their multipliers (n and m),
    which is how they arise from complementarity.
    """
    da, db = ch.in_dim, ch.out_dim
    nmat = ch.choi.mat
    phi, lam = mn.point.phi.mat, mn.point.lam.mat
    xi, gam = mn.xi, mn.gamma
    m, n, r, mm = mx.m, mx.n, mx.r, mx.ppt.m_choi.mat
    eye_b = np.eye(db)
    pt = maps.partial_transpose([da, db], [0])
    ptr = maps.partial_trace([da, db], [0])
    phi_t1 = np.kron(phi.T, eye_b)
    xi1 = np.kron(xi, eye_b)
    gam_t = pt(gam)
    out = {}
    out["trace_phi"] = abs(n * (1.0 - np.trace(phi).real)) / (1 + abs(n))
    out["fidelity"] = abs(m * (np.real(np.vdot(lam, nmat)) - (1.0 - eps))) / (1 + abs(m))
    out["phi_R"] = _rel((phi_t1 - lam) @ r, phi_t1 - lam, r)
    s4 = xi1 - lam - gam_t
    out["xi_M"] = _rel(s4 @ mm, s4, mm)
    s5 = n * np.eye(da) - ptr(pt(r))
    out["n_phi"] = _rel(s5 @ phi, s5, phi)
    mt = pt(mm)
    out["MT_Gamma"] = _rel(mt @ gam, mt, gam)
    s7 = np.eye(da) - ptr(mm)
    out["marginal_xi"] = _rel(s7 @ xi, s7, xi)
    s8 = m * nmat - mm - r
    out["mN_Lambda"] = _rel(s8 @ lam, s8, lam)
    return {k: float(out[k]) for k in SLACKNESS_NAMES}


def slackness_audit(ch: Channel, eps: float, solutions: tuple[SdpSolution, SdpSolution]) -> dict:
    smin, smax = solutions
    if not (smin.optimal and smax.optimal):
        raise SolverFailure("slackness audit needs two optimal solutions")
    return slackness_residuals(ch, eps, min_form_vars(smin), max_form_vars(smax))


# the bound -----------------------------------------------------------------

def bound(ch: Channel, eps: float, opts: sdp.Options | None = None, audit: bool = True) -> BoundResult:
    _check_eps(eps)
    # slack assembly for both: the LMI assembly of the max form would
    # reproduce the min form's core and make the comparison vacuous
    opts = sdp.Options(**{**(opts or sdp.Options()).__dict__, "form": "primal"})
    smin = sdp.solve(min_form(ch, eps), opts)
    smax = sdp.solve(max_form(ch, eps), opts)
    for s in (smin, smax):
        if not s.optimal:
            raise SolverFailure(f"{s.info.get('form', '')} solve ended with status {s.status}")
    vmin = -smin.primal_value
    vmax = smax.primal_value
    gap = abs(vmin - vmax)
    if gap > SADDLE_TOL:
        raise InconsistentBound(f"min form {vmin:.12g} and max form {vmax:.12g} disagree")
    # Lambda = 0 and m = n = 0 are optimal at eps = 1, so f vanishes there
    value = 0.0 if eps == 1.0 else max(0.0, 0.5 * (vmin + vmax))
    res = slackness_audit(ch, eps, (smin, smax)) if audit else {}
    return BoundResult(value=value, log2_M_upper=log2_upper(value), eps=float(eps),
                       channel=ch.label, p=ch.params.get("p"), n=ch.n_sites, gap=float(gap),
                       min_value=float(vmin), max_value=float(vmax), residuals=res,
                       min_solution=smin, max_solution=smax)


def maximin_value(ch: Channel, eps: float, m_choi: np.ndarray, opts: sdp.Options | None = None) -> float:
    """min over the feasible set of Tr[Lambda M] for one fixed PPT candidate M.

    The result never exceeds f(N, eps).
    """
    da, db = ch.in_dim, ch.out_dim
    d = da * db
    nmat = _choi(ch)
    phi_t = maps.kron_identity(da, db) @ maps.transpose(da)
    blocks = [Block("phi", da), Block("lam", d)]
    cons = [
        Constraint("trace_phi", {"phi": maps.trace(da)}, np.ones((1, 1))),
        Constraint("lam_le_phi", {"lam": maps.identity(d), "phi": -phi_t}, np.zeros((d, d))),
        Constraint("fidelity", {"lam": -maps.trace_against(nmat)}, -(1.0 - eps) * np.ones((1, 1))),
    ]
    p = SdpProblem(blocks, {"lam": -_realify(m_choi)}, cons, name="maximin")
    sol = sdp.solve(p, opts)
    if not sol.optimal:
        raise SolverFailure(f"maximin solve ended with status {sol.status}")
    return -sol.primal_value


def fully_dephasing_choi(n: int = 1) -> np.ndarray:
    """Choi operator of the n-fold qubit fully dephasing channel, on A^n (x) B^n."""
    one = np.diag([1.0, 0, 0, 1.0])
    out = one
    for _ in range(n - 1):
        out = np.kron(out, one)
    if n == 1:
        return out
    from .channels import site_permutation

    perm = site_permutation(n)
    t = out.reshape([2] * (4 * n)).transpose(perm + [2 * n + q for q in perm])
    return t.reshape(4 ** n, 4 ** n)


# random PPT states ---------------------------------------------------------------

def sample_ppt_state(dim: int, rng: np.random.Generator, rank: int | None = None,
                     max_tries: int = 100000) -> np.ndarray:
    """Subnormalized PPT state on dim (x) dim by Wishart rejection sampling."""
    d = dim * dim
    k = rank or 4 * d
    pt = maps.partial_transpose([dim, dim], [0])
    for _ in range(max_tries):
        g = rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))
        w = g @ g.conj().T
        w /= np.trace(w).real
        if ops.eigvalsh(pt(w))[0] >= 0:
            return w * rng.uniform(0.5, 1.0)
    raise RuntimeError("PPT rejection sampling did not accept a sample")


def rains_overlap(gamma: np.ndarray, dim: int) -> float:
    """Tr[Phi gamma] with Phi the normalized maximally entangled state."""
    phi = ops.max_entangled(dim).mat
    return float(np.real(np.vdot(phi, gamma)))
