"""Dense Hermitian operators on finite-dimensional composite systems.

Subsystem indices follow row-major (C) order: the leftmost subsystem in
``dims`` is the most significant tensor factor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

HERM_TOL = 1e-12
PSD_TOL = 1e-9


class NumericalFailure(RuntimeError):
    """Raised when a numerical kernel does not converge."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HermitianOp:
    """Immutable Hermitian matrix with subsystem bookkeeping."""

    dims: tuple
    mat: np.ndarray

    def __init__(self, mat, dims: Sequence[int] | None = None, check: bool = True):
        m = np.asarray(mat)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        if dims is None:
            dims = (m.shape[0],)
        dims = tuple(int(d) for d in dims)
        if any(d < 1 for d in dims) or int(np.prod(dims)) != m.shape[0]:
            raise ValueError(f"dims {dims} inconsistent with side {m.shape[0]}")
        if check:
            scale = 1.0 + (np.abs(m).max() if m.size else 0.0)
            if np.abs(m - m.conj().T).max(initial=0.0) > HERM_TOL * scale:
                raise ValueError("matrix is not Hermitian within tolerance")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "mat", _freeze(m))

    @property
    def side(self) -> int:
        return self.mat.shape[0]

    @property
    def is_real(self) -> bool:
        return not np.any(self.mat.imag)

    def trace(self) -> float:
        return float(np.trace(self.mat).real)

    def __add__(self, other: "HermitianOp") -> "HermitianOp":
        _same_dims(self, other)
        return HermitianOp(self.mat + other.mat, self.dims, check=False)

    def __sub__(self, other: "HermitianOp") -> "HermitianOp":
        _same_dims(self, other)
        return HermitianOp(self.mat - other.mat, self.dims, check=False)

    def __mul__(self, c: float) -> "HermitianOp":
        if np.iscomplexobj(c) and np.imag(c) != 0:
            raise TypeError("HermitianOp can only be scaled by a real number")
        return HermitianOp(self.mat * float(np.real(c)), self.dims, check=False)

    __rmul__ = __mul__

    def __neg__(self) -> "HermitianOp":
        return self * -1.0

    def __repr__(self) -> str:
        return f"HermitianOp(dims={list(self.dims)})"

    def allclose(self, other: "HermitianOp", atol: float = 1e-12) -> bool:
        return self.dims == other.dims and np.allclose(self.mat, other.mat, rtol=0, atol=atol)

    def to_json(self) -> dict:
        return {"dims": list(self.dims), "re": self.mat.real.tolist(), "im": self.mat.imag.tolist()}

    @classmethod
    def from_json(cls, data: dict | str) -> "HermitianOp":
        if isinstance(data, str):
            data = json.loads(data)
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
        return cls(re + 1j * im, data["dims"])


def _same_dims(a: HermitianOp, b: HermitianOp) -> None:
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch: {a.dims} vs {b.dims}")


def _check_subsystems(dims: Sequence[int], idx: Sequence[int]) -> list[int]:
    idx = [int(i) for i in idx]
    if len(set(idx)) != len(idx) or any(i < 0 or i >= len(dims) for i in idx):
        raise ValueError(f"invalid subsystem indices {idx} for dims {list(dims)}")
    return sorted(idx)


@dataclass(frozen=True)
class SpectralReport:
    min_eigenvalue: float
    max_eigenvalue: float
    trace: float
    trace_norm: float
    eigenvalues: np.ndarray


# constructors -------------------------------------------------------------

def identity(d: int, dims: Sequence[int] | None = None) -> HermitianOp:
    return HermitianOp(np.eye(d), dims or (d,))


def zeros(dims: Sequence[int]) -> HermitianOp:
    d = int(np.prod(dims))
    return HermitianOp(np.zeros((d, d)), dims)


def projector(ket, dims: Sequence[int] | None = None) -> HermitianOp:
    v = np.asarray(ket, dtype=complex).ravel()
    return HermitianOp(np.outer(v, v.conj()), dims or (v.size,), check=False)


def diag(values, dims: Sequence[int] | None = None) -> HermitianOp:
    v = np.asarray(values, dtype=float)
    return HermitianOp(np.diag(v), dims or (v.size,))


def omega(d: int) -> HermitianOp:
    """Unnormalized maximally entangled operator sum_jk |jj><kk| on d x d."""
    v = np.eye(d).ravel()
    return HermitianOp(np.outer(v, v), (d, d))


def max_entangled(d: int) -> HermitianOp:
    return omega(d) * (1.0 / d)


def maximally_mixed(d: int) -> HermitianOp:
    return HermitianOp(np.eye(d) / d, (d,))


def bell_kets() -> dict[str, np.ndarray]:
    s = 1 / np.sqrt(2)
    return {
        "phi+": np.array([s, 0, 0, s]),
        "phi-": np.array([s, 0, 0, -s]),
        "psi+": np.array([0, s, s, 0]),
        "psi-": np.array([0, s, -s, 0]),
    }


def bell(name: str) -> HermitianOp:
    """Bell projector: 'phi+', 'phi-', 'psi+' or 'psi-'."""
    return projector(bell_kets()[name], (2, 2))


def swap(d: int) -> HermitianOp:
    s = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            s[i * d + j, j * d + i] = 1.0
    return HermitianOp(s, (d, d))


# bipartite manipulations ---------------------------------------------------

def tensor(*ops: HermitianOp) -> HermitianOp:
    if not ops:
        raise ValueError("tensor needs at least one operand")
    mat = ops[0].mat
    dims = list(ops[0].dims)
    for o in ops[1:]:
        mat = np.kron(mat, o.mat)
        dims += list(o.dims)
    return HermitianOp(mat, dims, check=False)


def partial_trace(o: HermitianOp, keep: Sequence[int]) -> HermitianOp:
    """Trace out every subsystem not listed in ``keep``."""
    keep = _check_subsystems(o.dims, keep)
    r = len(o.dims)
    drop = [i for i in range(r) if i not in keep]
    t = o.mat.reshape(o.dims + o.dims)
    # contract each dropped row index against its column index
    for k, i in enumerate(drop):
        cur = r - k
        t = np.trace(t, axis1=i - k, axis2=i - k + cur)
    dk = [o.dims[i] for i in keep]
    side = int(np.prod(dk)) if dk else 1
    return HermitianOp(t.reshape(side, side), dk or [1], check=False)


def partial_transpose(o: HermitianOp, sub: int | Sequence[int]) -> HermitianOp:
    """Transpose the listed subsystem(s); an exact index permutation."""
    subs = _check_subsystems(o.dims, [sub] if np.isscalar(sub) else sub)
    r = len(o.dims)
    perm = list(range(2 * r))
    for i in subs:
        perm[i], perm[r + i] = r + i, i
    t = o.mat.reshape(o.dims + o.dims).transpose(perm)
    return HermitianOp(t.reshape(o.side, o.side), o.dims, check=False)


def transpose(o: HermitianOp) -> HermitianOp:
    return HermitianOp(o.mat.T, o.dims, check=False)


def real_embedding(h: np.ndarray) -> np.ndarray:
    """Real symmetric form [[Re H, -Im H], [Im H, Re H]] of a Hermitian H."""
    h = np.asarray(h)
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def eigvalsh(h: np.ndarray) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix, ascending.

    Complex input goes through the real embedding, whose spectrum repeats
    each eigenvalue twice; every second sorted value is kept.
    """
    h = np.asarray(h)
    try:
        if np.iscomplexobj(h) and np.any(h.imag):
            w = scipy.linalg.eigh(real_embedding(h), eigvals_only=True)
            return w[::2].copy()
        return scipy.linalg.eigh(np.real(h), eigvals_only=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalFailure(str(exc)) from exc


def spectral(o: HermitianOp) -> SpectralReport:
    w = eigvalsh(o.mat)
    return SpectralReport(
        min_eigenvalue=float(w[0]),
        max_eigenvalue=float(w[-1]),
        trace=float(np.sum(w)),
        trace_norm=float(np.sum(np.abs(w))),
        eigenvalues=w,
    )


def operator_norm(o: HermitianOp | np.ndarray) -> float:
    m = o.mat if isinstance(o, HermitianOp) else np.asarray(o)
    if m.size == 0:
        return 0.0
    w = eigvalsh(m)
    return float(max(abs(w[0]), abs(w[-1])))


def trace_norm(o: HermitianOp | np.ndarray) -> float:
    m = o.mat if isinstance(o, HermitianOp) else np.asarray(o)
    return float(np.sum(np.abs(eigvalsh(m))))


def is_psd(o: HermitianOp | np.ndarray, tol: float = PSD_TOL) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    m = o.mat if isinstance(o, HermitianOp) else np.asarray(o)
    w = eigvalsh(m)
    return bool(w[0] >= -tol * (1.0 + max(abs(w[0]), abs(w[-1]))))


def is_ppt(o: HermitianOp, sub: int = 0, tol: float = PSD_TOL) -> bool:
    return is_psd(o, tol) and is_psd(partial_transpose(o, sub), tol)
