"""Group twirls and the symmetry-reduced bound.

A group acts on A (x) B through pairs (U_g, V_g); the twirl is

    G(o) = sum_g w_g L_g o L_g^dagger,   L_g = U_g^T (x) V_g^dagger,

which fixes the Choi operator of every covariant channel.  For n-fold
Pauli-diagonal channels the fixed space of the Pauli and permutation
twirls is spanned by Bell-basis type classes, and the bound becomes a
linear program over those classes.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import channels as chans
from . import converse
from . import hypothesis as hyp
from . import operators as ops
from . import sdp
from .channels import Channel, ChannelSpec
from .converse import BoundResult, FeasiblePoint, PptCandidate
from .operators import HermitianOp
from .sdp import maps
from .sdp.problem import Block, Constraint, SdpProblem

UNITARY_TOL = 1e-10
NULL_TOL = 1e-9
MAX_TYPE_N = 16

PAULIS = (np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0]))


def _weights(k, weights):
    if weights is None:
        return np.full(k, 1.0 / k)
    w = np.asarray(weights, dtype=float)
    if w.size != k or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise ValueError("weights must be a probability vector, one per element")
    return w


@dataclass
class GroupRep:
    """Paired representation on A and B, optionally a product of site groups."""

    elements: list = field(default_factory=list)
    weights: np.ndarray | None = None
    factors: tuple = ()
    site_dims: tuple = ()

    def __post_init__(self):
        if self.factors:
            return
        if not self.elements:
            raise ValueError("a group needs at least one element")
        els = []
        for u, v in self.elements:
            u, v = np.atleast_2d(np.asarray(u)), np.atleast_2d(np.asarray(v))
            for x in (u, v):
                if np.abs(x.conj().T @ x - np.eye(x.shape[0])).max() > UNITARY_TOL:
                    raise ValueError("group elements must be unitary")
            els.append((u, v))
        if len({(u.shape, v.shape) for u, v in els}) != 1:
            raise ValueError("all elements must act on the same spaces")
        self.elements = els
        self.weights = _weights(len(els), self.weights)

    @property
    def dims(self) -> tuple[int, int]:
        if self.factors:
            return (int(np.prod([f.dims[0] for f in self.factors])),
                    int(np.prod([f.dims[1] for f in self.factors])))
        u, v = self.elements[0]
        return u.shape[0], v.shape[0]

    def __len__(self) -> int:
        if self.factors:
            return int(np.prod([len(f) for f in self.factors]))
        return len(self.elements)

    def materialize(self) -> "GroupRep":
        """Explicit element list (products of site elements for product groups)."""
        if not self.factors:
            return self
        els, ws = [(np.eye(1), np.eye(1))], [1.0]
        for f in self.factors:
            f = f.materialize()
            els = [(np.kron(u, a), np.kron(v, b)) for u, v in els for a, b in f.elements]
            ws = [w * x for w in ws for x in f.weights]
        return GroupRep(els, np.array(ws))

    def left(self, k: int) -> np.ndarray:
        u, v = self.elements[k]
        return np.kron(u.T, v.conj().T)

    def to_json(self) -> dict:
        g = self.materialize()

        def mat(a):
            return {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}

        return {"elements": [{"U": mat(u), "V": mat(v)} for u, v in g.elements],
                "weights": g.weights.tolist()}

    @classmethod
    def from_json(cls, data: dict | str) -> "GroupRep":
        if isinstance(data, str):
            data = json.loads(data)

        def mat(d):
            a = np.asarray(d["re"]) + 1j * np.asarray(d["im"])
            return a.real.copy() if not np.any(a.imag) else a

        els = [(mat(e["U"]), mat(e["V"])) for e in data["elements"]]
        return cls(els, data.get("weights"))


def trivial_group(da: int, db: int) -> GroupRep:
    return GroupRep([(np.eye(da), np.eye(db))])


def pauli_group(pair: str = "same") -> GroupRep:
    """Single-qubit Pauli group with V=U ("same"), V=conj(U) ("conj") or V=1 ("input")."""
    return GroupRep([(p, _partner(p, pair)) for p in PAULIS])


def _partner(u, pair):
    if pair == "same":
        return u
    if pair == "conj":
        return u.conj()
    if pair == "input":
        return np.eye(1)
    raise ValueError(f"unknown pairing {pair!r}")


def clifford_unitaries() -> list[np.ndarray]:
    """The 24 single-qubit Clifford unitaries modulo phase."""
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    s = np.diag([1, 1j])
    found: list[np.ndarray] = []
    frontier = [np.eye(2, dtype=complex)]

    def known(u):
        for w in found:
            ov = np.trace(w.conj().T @ u)
            if abs(abs(ov) - 2) < 1e-9:
                return True
        return False

    while frontier:
        nxt = []
        for u in frontier:
            if known(u):
                continue
            found.append(u)
            nxt.extend([h @ u, s @ u])
        frontier = nxt
    return found


def clifford_group(pair: str = "same") -> GroupRep:
    """2-design substitute for the full unitary group on a qubit."""
    return GroupRep([(u, _partner(u, pair)) for u in clifford_unitaries()])


def product_group(groups: Sequence[GroupRep]) -> GroupRep:
    """Site-wise product, acting on A_1..A_n (x) B_1..B_n."""
    return GroupRep(factors=tuple(groups), site_dims=tuple(g.dims for g in groups))


def permutation_group(n: int, da: int, db: int) -> GroupRep:
    """Simultaneous permutations of the n sites of A^n and B^n."""
    def perm_matrix(pi, d):
        k = d ** n
        idx = np.arange(k).reshape([d] * n).transpose(pi).ravel()
        m = np.zeros((k, k))
        m[np.arange(k), idx] = 1.0
        return m

    return GroupRep([(perm_matrix(pi, da), perm_matrix(pi, db)) for pi in itertools.permutations(range(n))])


# twirling --------------------------------------------------------------------

def _twirl_plain(mat: np.ndarray, g: GroupRep) -> np.ndarray:
    out = np.zeros(mat.shape, dtype=complex)
    for k, w in enumerate(g.weights):
        lk = g.left(k)
        out += w * (lk @ mat @ lk.conj().T)
    return out


def _twirl_site(mat: np.ndarray, g: GroupRep, site: int, adims: Sequence[int], bdims: Sequence[int]) -> np.ndarray:
    """Twirl by one site factor of a product group."""
    n = len(adims)
    dims = list(adims) + list(bdims)
    r = len(dims)
    t = mat.reshape(dims + dims)
    out = np.zeros_like(t, dtype=complex)
    ia, ib = site, n + site
    for k, w in enumerate(g.weights):
        u, v = g.elements[k]
        la, lb = u.T, v.conj().T
        x = t
        # left factors act on row indices, right factors on column indices
        x = np.moveaxis(np.tensordot(la, x, axes=([1], [ia])), 0, ia)
        x = np.moveaxis(np.tensordot(lb, x, axes=([1], [ib])), 0, ib)
        x = np.moveaxis(np.tensordot(x, la.conj(), axes=([r + ia], [1])), -1, r + ia)
        x = np.moveaxis(np.tensordot(x, lb.conj(), axes=([r + ib], [1])), -1, r + ib)
        out += w * x
    return out.reshape(mat.shape)


def twirl(o: HermitianOp | np.ndarray, g: GroupRep) -> HermitianOp:
    mat = o.mat if isinstance(o, HermitianOp) else np.asarray(o)
    da, db = g.dims
    if mat.shape != (da * db, da * db):
        raise ValueError(f"operator side {mat.shape[0]} does not match the representation ({da}x{db})")
    if g.factors:
        adims = [f.dims[0] for f in g.factors]
        bdims = [f.dims[1] for f in g.factors]
        out = mat.astype(complex)
        for i, f in enumerate(g.factors):
            out = _twirl_site(out, f.materialize(), i, adims, bdims)
    else:
        out = _twirl_plain(mat, g)
    out = 0.5 * (out + out.conj().T)
    if not np.any(np.abs(out.imag) > 1e-15):
        out = out.real
    dims = o.dims if isinstance(o, HermitianOp) else None
    return HermitianOp(out, dims, check=False)


def input_twirl(phi: np.ndarray, g: GroupRep) -> np.ndarray:
    """phi -> sum_g w_g U_g^dagger phi U_g, the action compatible with phi^T (x) 1."""
    gm = g.materialize()
    out = np.zeros(phi.shape, dtype=complex)
    for (u, _), w in zip(gm.elements, gm.weights):
        out += w * (u.conj().T @ phi @ u)
    out = 0.5 * (out + out.conj().T)
    return out.real if not np.any(np.abs(out.imag) > 1e-15) else out


def alternate_rep(g: GroupRep) -> GroupRep:
    """U -> conj(U): the representation seen after a partial transpose on A."""
    gm = g.materialize()
    return GroupRep([(u.conj(), v) for u, v in gm.elements], gm.weights)


def act(o: np.ndarray, g: GroupRep, k: int) -> np.ndarray:
    """Single group element acting on an operator."""
    gm = g.materialize()
    lk = gm.left(k)
    return lk @ o @ lk.conj().T


def check_prop3(point: FeasiblePoint, ppt: PptCandidate, ch: Channel, g: GroupRep, eps: float,
                tol: float = 1e-8) -> bool:
    """Twirled feasible point and twirled PPT candidate stay feasible."""
    if not chans.is_covariant(ch, g.materialize()):
        raise ValueError("channel is not covariant under the group")
    if not point.is_feasible(ch, eps, tol):
        raise ValueError("input point is not feasible")
    if not ppt.is_valid(ch.in_dim, ch.out_dim, tol):
        raise ValueError("input operator is not in the PPT set")
    phi_t = HermitianOp(input_twirl(point.phi.mat, g), check=False)
    lam_t = twirl(point.lam, g)
    m_t = twirl(ppt.m_choi, g)
    return (FeasiblePoint(phi_t, lam_t).is_feasible(ch, eps, tol)
            and PptCandidate(m_t).is_valid(ch.in_dim, ch.out_dim, tol))


# invariant subspace ------------------------------------------------------------

def hermitian_basis(d: int) -> list[np.ndarray]:
    """Orthonormal basis of d x d Hermitian matrices (real coordinates)."""
    out = []
    for i in range(d):
        e = np.zeros((d, d))
        e[i, i] = 1.0
        out.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = e[j, i] = 1 / np.sqrt(2)
            out.append(e)
            f = np.zeros((d, d), dtype=complex)
            f[i, j], f[j, i] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            out.append(f)
    return out


def _coords(h: np.ndarray) -> np.ndarray:
    d = h.shape[0]
    iu = np.triu_indices(d, 1)
    return np.concatenate([np.real(np.diag(h)), np.sqrt(2) * h.real[iu], np.sqrt(2) * h.imag[iu]])


def _from_coords(c: np.ndarray, d: int) -> np.ndarray:
    iu = np.triu_indices(d, 1)
    k = iu[0].size
    h = np.diag(c[:d]).astype(complex)
    h[iu] = (c[d:d + k] + 1j * c[d + k:]) / np.sqrt(2)
    h[iu[1], iu[0]] = h[iu].conj()
    return h.real.copy() if not np.any(c[d + k:]) else h


@dataclass
class InvariantBasis:
    elements: list
    gram: np.ndarray
    dims: tuple

    def __len__(self) -> int:
        return len(self.elements)

    def coefficients(self, o: HermitianOp | np.ndarray) -> np.ndarray:
        mat = o.mat if isinstance(o, HermitianOp) else np.asarray(o)
        ip = np.array([np.real(np.vdot(b, mat)) for b in self.elements])
        return np.linalg.solve(self.gram, ip)

    def project(self, o: HermitianOp | np.ndarray) -> np.ndarray:
        c = self.coefficients(o)
        return sum(ci * b for ci, b in zip(c, self.elements))

    def contains(self, o: np.ndarray, tol: float = 1e-10) -> bool:
        mat = o.mat if isinstance(o, HermitianOp) else np.asarray(o)
        return np.abs(self.project(mat) - mat).max() <= tol * (1 + np.abs(mat).max())


def invariant_basis(g: GroupRep, dims: Sequence[int] | None = None) -> InvariantBasis:
    da, db = g.dims
    d = da * db
    if dims is not None and int(np.prod(dims)) != d:
        raise ValueError("dims do not match the representation")
    cols = np.array([_coords(twirl(b, g).mat) for b in hermitian_basis(d)]).T
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    rank = int(np.sum(s > NULL_TOL))
    if rank == 0:
        raise RuntimeError("empty fixed space")
    elements = [_from_coords(u[:, k], d) for k in range(rank)]
    gram = np.array([[np.real(np.vdot(a, b)) for b in elements] for a in elements])
    return InvariantBasis(elements, gram, tuple(dims) if dims is not None else (da, db))


# type classes for Bell-diagonal products ------------------------------------------

# coefficient of B_a in the partial transpose of B_b, times 2
BELL_PT = np.array([[1, 1, 1, -1], [1, 1, -1, 1], [1, -1, 1, 1], [-1, 1, 1, 1]], dtype=float)


def compositions(n: int, parts: int = 4) -> list[tuple]:
    if parts == 1:
        return [(n,)]
    out = []
    for first in range(n, -1, -1):
        out.extend((first,) + rest for rest in compositions(n - first, parts - 1))
    return out


def _log_multinomial(t) -> float:
    return math.lgamma(sum(t) + 1) - sum(math.lgamma(x + 1) for x in t)


@dataclass(frozen=True)
class BellTypes:
    n: int
    types: list
    log_size: np.ndarray
    kernel: np.ndarray   # partial transpose on type-class totals, normalized per element


def bell_types(n: int) -> BellTypes:
    """Types of {phi+, phi-, psi+, psi-}^n and the partial-transpose kernel.

    kernel[T, T'] = (sum over y in T' of prod_i BELL_PT[x_i, y_i]) / |T'|
    for any fixed x of type T.
    """
    if n > MAX_TYPE_N:
        raise chans.BudgetExceeded(f"type-class LP limited to n <= {MAX_TYPE_N}")
    levels = [compositions(k) for k in range(n + 1)]
    index = [{t: i for i, t in enumerate(lv)} for lv in levels]
    shift = []
    for k in range(n):
        shift.append([np.array([index[k + 1][t[:b] + (t[b] + 1,) + t[b + 1:]] for t in levels[k]])
                      for b in range(4)])
    types = levels[n]
    log_size = np.array([_log_multinomial(t) for t in types])
    kernel = np.zeros((len(types), len(types)))
    for i, t in enumerate(types):
        seq = [a for a in range(4) for _ in range(t[a])]
        poly = np.ones(1)
        for k, a in enumerate(seq):
            nxt = np.zeros(len(levels[k + 1]))
            for b in range(4):
                np.add.at(nxt, shift[k][b], BELL_PT[a, b] * poly)
            poly = nxt
        kernel[i] = poly * np.exp(-log_size - n * math.log(2.0))
    return BellTypes(n, types, log_size, kernel)


def type_lp(weights: Sequence[float], n: int, eps: float) -> SdpProblem:
    """The bound restricted to Pauli- and permutation-invariant operators.

    lam[T] and h[T] are the (rescaled) Bell coefficients of Lambda and Gamma;
    s is the coefficient of xi.
    """
    bt = bell_types(n)
    w = np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore"):
        lw = np.log(w)
    logp = np.array([bt.log_size[i] + sum(x * lw[a] for a, x in enumerate(t) if x)
                     for i, t in enumerate(bt.types)])
    pm = np.exp(logp)
    k = len(bt.types)
    blocks = [Block("s", 1, "nonneg"), Block("lam", k, "nonneg"), Block("h", k, "nonneg")]
    cons = [
        Constraint("lam_le_one", {"lam": maps.diagonal(np.eye(k))}, np.eye(k), "diag<="),
        Constraint("dominate", {"lam": maps.diagonal(np.eye(k)), "h": maps.diagonal(bt.kernel),
                                "s": maps.diagonal(-np.ones((k, 1)))}, np.zeros((k, k)), "diag<="),
        Constraint("fidelity", {"lam": maps.diagonal(-pm[None, :])}, -(1.0 - eps) * np.ones((1, 1)), "<="),
    ]
    return SdpProblem(blocks, {"s": -np.ones((1, 1))}, cons, name=f"types(n={n})")


def distance_classes_lp(n: int, p: float, eps: float) -> SdpProblem:
    """Fixed fully dephasing candidate: min sum_d Q_d t_d s.t. sum_d P_d t_d >= 1-eps."""
    tab = hyp.bsc_classes(n, p)
    pm, qm = np.exp(tab.log_p), np.exp(tab.log_q)
    k = n + 1
    cons = [
        Constraint("t_le_one", {"t": maps.diagonal(np.eye(k))}, np.eye(k), "diag<="),
        Constraint("fidelity", {"t": maps.diagonal(-pm[None, :])}, -(1.0 - eps) * np.ones((1, 1)), "<="),
    ]
    return SdpProblem([Block("t", k, "nonneg")], {"t": -np.diag(qm)}, cons, name=f"classes(n={n})")


REDUCED_KINDS = ("dephasing", "depolarizing", "erasure")


def reduced_bound(spec: ChannelSpec, n: int, eps: float, route: str = "auto",
                  opts: sdp.Options | None = None) -> BoundResult:
    """f(N^{(x)n}, eps) on the symmetric subspace.

    Routes: "classes" (closed-form LP over n+1 distance or erasure-count
    classes; dephasing and erasure), "lp" (the same class LP through the SDP
    solver), "types" (Bell-type LP; dephasing and depolarizing, small n).
    """
    if spec.kind not in REDUCED_KINDS:
        raise ValueError(f"reduced bound does not support channel kind {spec.kind!r}")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    converse._check_eps(eps)
    n, p = int(n), float(spec.p)
    if route == "auto":
        route = "types" if spec.kind == "depolarizing" else "classes"
    if spec.kind == "depolarizing" and route != "types":
        raise ValueError("depolarizing channels use the type-class route")
    if spec.kind == "erasure" and route == "types":
        raise ValueError("erasure channels use the class routes")
    gap = 0.0
    vmin = vmax = None
    if eps == 1.0:
        value = 0.0
    elif route == "classes":
        if spec.kind == "dephasing":
            t = hyp.bsc_beta(n, p, 1.0 - eps)
            value = t.beta
        else:
            value = hyp.bec_minimax(n, p, eps).value
    elif route == "lp" and spec.kind == "erasure":
        value = hyp.bec_lp(n, p, eps, opts).value
    elif route in ("lp", "types"):
        weights = {"dephasing": [1 - p, p, 0, 0], "depolarizing": [1 - p, p / 3, p / 3, p / 3]}[spec.kind]
        prob = distance_classes_lp(n, p, eps) if route == "lp" else type_lp(weights, n, eps)
        sol = sdp.solve(prob, opts)
        if not sol.optimal:
            raise converse.SolverFailure(f"{route} solve ended with status {sol.status}")
        vmin, vmax = -sol.primal_value, -sol.dual_value
        gap = abs(vmin - vmax)
        value = max(0.0, -sol.value)
    else:
        raise ValueError(f"unknown route {route!r}")
    return BoundResult(value=float(value), log2_M_upper=converse.log2_upper(value), eps=float(eps),
                       channel=spec.kind, p=p, n=n, gap=float(gap), method="reduced",
                       min_value=vmin, max_value=vmax, extra={"route": route})
