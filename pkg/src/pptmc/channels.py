"""Channels held as Choi operators on A (x) B, plus the qubit families used here."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import operators as ops
from .operators import HermitianOp

TP_TOL = 1e-9
MAX_CHOI_SIDE = 4096
KINDS = ("identity", "dephasing", "depolarizing", "erasure", "custom")


class InvalidChannel(ValueError):
    pass


class BudgetExceeded(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Channel:
    """CPTP (or trace-non-increasing) map stored as its Choi operator N_{B|A}.

    ``choi.dims`` lists the input subsystems followed by the output ones;
    ``n_sites`` records how many copies a tensor power is made of.
    """

    in_dim: int
    out_dim: int
    choi: HermitianOp
    label: str = "custom"
    params: dict = field(default_factory=dict)
    trace_preserving: bool = True
    n_sites: int = 1
    site_perm: tuple = ()

    def __post_init__(self):
        if self.choi.side != self.in_dim * self.out_dim:
            raise InvalidChannel("Choi side must equal in_dim * out_dim")
        if not ops.is_psd(self.choi, TP_TOL):
            raise InvalidChannel("Choi operator is not positive semidefinite")
        marg = input_marginal(self.choi.mat, self.in_dim, self.out_dim)
        eye = np.eye(self.in_dim)
        if self.trace_preserving:
            if np.abs(marg - eye).max() > TP_TOL:
                raise InvalidChannel("Tr_B of the Choi operator differs from the identity")
        elif not ops.is_psd(eye - marg, TP_TOL):
            raise InvalidChannel("Tr_B of the Choi operator exceeds the identity")

    @property
    def bipartite(self) -> HermitianOp:
        """Choi operator viewed on the two-factor space A^n (x) B^n."""
        return HermitianOp(self.choi.mat, (self.in_dim, self.out_dim), check=False)

    def describe(self) -> str:
        if "p" in self.params:
            return f"{self.label}(p={self.params['p']:g})"
        return self.label


@dataclass(frozen=True)
class ChannelSpec:
    kind: str
    p: float = 0.0
    custom_choi: HermitianOp | None = None
    in_dim: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if not 0.0 <= float(self.p) <= 1.0:
            raise ValueError(f"p={self.p} is outside [0, 1]")
        if self.kind == "custom" and self.custom_choi is None:
            raise ValueError("custom channel needs a Choi operator")

    def to_json(self) -> dict:
        if self.kind == "custom":
            d = {"kind": "custom", "choi": self.custom_choi.to_json()}
            if self.in_dim is not None:
                d["in_dim"] = self.in_dim
            return d
        return {"kind": self.kind, "p": float(self.p)}

    @classmethod
    def from_json(cls, data: dict | str) -> "ChannelSpec":
        if isinstance(data, str):
            data = json.loads(data)
        kind = data["kind"]
        if kind == "custom":
            return cls("custom", custom_choi=HermitianOp.from_json(data["choi"]), in_dim=data.get("in_dim"))
        return cls(kind, float(data.get("p", 0.0)))


def input_marginal(choi: np.ndarray, din: int, dout: int) -> np.ndarray:
    return np.trace(choi.reshape(din, dout, din, dout), axis1=1, axis2=3)


def choi_from_kraus(kraus: Sequence[np.ndarray], label: str = "kraus", params: dict | None = None,
                    trace_preserving: bool = True) -> Channel:
    ks = [np.atleast_2d(np.asarray(k, dtype=complex)) for k in kraus]
    if not ks:
        raise InvalidChannel("no Kraus operators given")
    dout, din = ks[0].shape
    if any(k.shape != (dout, din) for k in ks):
        raise InvalidChannel("Kraus operators must share one shape")
    comp = sum(k.conj().T @ k for k in ks)
    if trace_preserving and np.abs(comp - np.eye(din)).max() > TP_TOL:
        raise InvalidChannel("Kraus operators are not complete (sum K*K != 1)")
    om = np.eye(din).ravel()
    choi = np.zeros((din * dout, din * dout), dtype=complex)
    for k in ks:
        v = np.kron(np.eye(din), k) @ om
        choi += np.outer(v, v.conj())
    return Channel(din, dout, HermitianOp(choi, (din, dout), check=False), label, dict(params or {}),
                   trace_preserving)


def _bell_diagonal(weights: Sequence[float]) -> np.ndarray:
    """2 * sum_k w_k |B_k><B_k| in the order phi+, phi-, psi+, psi-."""
    kets = ops.bell_kets()
    out = np.zeros((4, 4))
    for w, name in zip(weights, ("phi+", "phi-", "psi+", "psi-")):
        out += 2 * w * np.outer(kets[name], kets[name])
    return out


def bell_weights(choi: np.ndarray) -> np.ndarray:
    """Diagonal of a qubit Choi operator in the Bell basis, divided by |A|."""
    kets = ops.bell_kets()
    return np.array([np.real(kets[k] @ choi @ kets[k]) / 2 for k in ("phi+", "phi-", "psi+", "psi-")])


def dephasing(p: float) -> Channel:
    c = _bell_diagonal([1 - p, p, 0, 0])
    return Channel(2, 2, HermitianOp(c, (2, 2)), "dephasing", {"p": float(p)})


def depolarizing(p: float) -> Channel:
    c = _bell_diagonal([1 - p, p / 3, p / 3, p / 3])
    return Channel(2, 2, HermitianOp(c, (2, 2)), "depolarizing", {"p": float(p)})


def erasure(p: float) -> Channel:
    """Qubit erasure channel; the flag |e> is the last basis vector of B."""
    v = np.zeros(6)
    v[0] = v[4] = 1.0  # |00> + |11> with B of dimension 3
    flag = np.zeros((3, 3))
    flag[2, 2] = 1.0
    c = (1 - p) * np.outer(v, v) + p * np.kron(np.eye(2), flag)
    return Channel(2, 3, HermitianOp(c, (2, 3)), "erasure", {"p": float(p)})


def identity_channel(d: int = 2) -> Channel:
    return Channel(d, d, ops.omega(d), "identity", {})


def build(spec: ChannelSpec) -> Channel:
    if spec.kind == "identity":
        return identity_channel(2)
    if spec.kind == "dephasing":
        return dephasing(spec.p)
    if spec.kind == "depolarizing":
        return depolarizing(spec.p)
    if spec.kind == "erasure":
        return erasure(spec.p)
    choi = spec.custom_choi
    if spec.in_dim is not None:
        din = int(spec.in_dim)
    elif len(choi.dims) == 2:
        din = choi.dims[0]
    else:
        raise InvalidChannel("custom Choi needs dims [in, out] or an explicit in_dim")
    if choi.side % din:
        raise InvalidChannel("in_dim does not divide the Choi side")
    dout = choi.side // din
    return Channel(din, dout, HermitianOp(choi.mat, (din, dout)), "custom", {})


def apply(ch: Channel, rho: HermitianOp) -> HermitianOp:
    """rho -> Tr_A[N (rho^T (x) 1_B)]."""
    if rho.side != ch.in_dim:
        raise ValueError(f"input side {rho.side} does not match channel input {ch.in_dim}")
    if abs(rho.trace() - 1.0) > 1e-9:
        raise ValueError("input state must have unit trace")
    t = ch.choi.mat.reshape(ch.in_dim, ch.out_dim, ch.in_dim, ch.out_dim)
    out = np.einsum("aibj,ba->ij", t, rho.mat.T)
    out_dims = ch.choi.dims[ch.n_sites:] if len(ch.choi.dims) == 2 * ch.n_sites else (ch.out_dim,)
    return HermitianOp(out, out_dims, check=False)


def jamiolkowski(ch: Channel) -> HermitianOp:
    """Partial transpose of the Choi operator on the input factor."""
    return ops.partial_transpose(ch.bipartite, 0)


def site_permutation(n: int) -> list[int]:
    """Axis order taking A1 B1 A2 B2 ... to A1 ... An B1 ... Bn."""
    return [2 * k for k in range(n)] + [2 * k + 1 for k in range(n)]


def tensor_power(ch: Channel, n: int) -> Channel:
    if n < 1:
        raise ValueError("n must be a positive integer")
    if n == 1:
        return ch
    din, dout = ch.in_dim ** n, ch.out_dim ** n
    if din * dout > MAX_CHOI_SIDE:
        raise BudgetExceeded(f"Choi side {din * dout} exceeds the dense budget {MAX_CHOI_SIDE}")
    base = ch.bipartite.mat
    big = base
    for _ in range(n - 1):
        big = np.kron(big, base)
    site_dims = [ch.in_dim, ch.out_dim] * n
    perm = site_permutation(n)
    t = big.reshape(site_dims + site_dims)
    t = t.transpose(perm + [2 * n + q for q in perm])
    dims = [ch.in_dim] * n + [ch.out_dim] * n
    params = dict(ch.params, n=n)
    return Channel(din, dout, HermitianOp(t.reshape(din * dout, din * dout), dims, check=False),
                   ch.label, params, ch.trace_preserving, n, tuple(perm))


def is_covariant(ch: Channel, group, tol: float = 1e-9) -> bool:
    """Check (U^T (x) V^*) N (conj(U) (x) V) = N for every group element."""
    n = ch.bipartite.mat
    for u, v in group.elements:
        if u.shape[0] != ch.in_dim or v.shape[0] != ch.out_dim:
            raise ValueError("group representation does not match the channel dimensions")
        left = np.kron(u.T, v.conj().T)
        if np.abs(left @ n @ left.conj().T - n).max() > tol:
            return False
    return True
