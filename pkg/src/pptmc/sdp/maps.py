"""Hermiticity-preserving linear maps between square matrices.

A map is stored as a sparse matrix acting on row-major vectorizations, so
``vec(L(X)) = L.mat @ vec(X)`` and the adjoint under the trace inner product
is the conjugate transpose.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.sparse as sp


class LinearMap:
    __slots__ = ("mat", "n_in", "n_out")

    def __init__(self, mat, n_in: int, n_out: int):
        mat = sp.csr_matrix(mat)
        if mat.shape != (n_out * n_out, n_in * n_in):
            raise ValueError(f"map matrix shape {mat.shape} does not fit {n_in} -> {n_out}")
        if mat.dtype.kind == "c" and not np.any(mat.data.imag):
            mat = sp.csr_matrix(mat.real)
        self.mat = mat
        self.n_in = n_in
        self.n_out = n_out

    @property
    def is_real(self) -> bool:
        return self.mat.dtype.kind != "c"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.n_in, self.n_in):
            x = np.reshape(x, (self.n_in, self.n_in))
        return (self.mat @ x.ravel()).reshape(self.n_out, self.n_out)

    def adjoint(self) -> "LinearMap":
        return LinearMap(self.mat.conj().T, self.n_out, self.n_in)

    def __matmul__(self, other: "LinearMap") -> "LinearMap":
        if other.n_out != self.n_in:
            raise ValueError("composition dimension mismatch")
        return LinearMap(self.mat @ other.mat, other.n_in, self.n_out)

    def __add__(self, other: "LinearMap") -> "LinearMap":
        if (other.n_in, other.n_out) != (self.n_in, self.n_out):
            raise ValueError("sum of maps with different shapes")
        return LinearMap(self.mat + other.mat, self.n_in, self.n_out)

    def __sub__(self, other: "LinearMap") -> "LinearMap":
        return self + (-1.0) * other

    def __mul__(self, c: float) -> "LinearMap":
        return LinearMap(self.mat * float(c), self.n_in, self.n_out)

    __rmul__ = __mul__

    def __neg__(self) -> "LinearMap":
        return self * -1.0

    def __repr__(self) -> str:
        return f"LinearMap({self.n_in} -> {self.n_out}, nnz={self.mat.nnz})"


def _perm_map(src: np.ndarray, n: int) -> LinearMap:
    k = src.size
    return LinearMap(sp.csr_matrix((np.ones(k), (np.arange(k), src.ravel())), shape=(k, k)), n, n)


def identity(n: int) -> LinearMap:
    return LinearMap(sp.identity(n * n, format="csr"), n, n)


def transpose(n: int) -> LinearMap:
    return _perm_map(np.arange(n * n).reshape(n, n).T, n)


def partial_transpose(dims: Sequence[int], subs: Sequence[int]) -> LinearMap:
    dims = list(dims)
    r = len(dims)
    n = int(np.prod(dims))
    perm = list(range(2 * r))
    for i in subs:
        perm[i], perm[r + i] = r + i, i
    src = np.arange(n * n).reshape(dims + dims).transpose(perm)
    return _perm_map(src, n)


def partial_trace(dims: Sequence[int], keep: Sequence[int]) -> LinearMap:
    dims = list(dims)
    r = len(dims)
    n = int(np.prod(dims))
    keep = sorted(keep)
    drop = [i for i in range(r) if i not in keep]
    nk = int(np.prod([dims[i] for i in keep])) if keep else 1
    idx = np.indices(dims + dims).reshape(2 * r, -1)
    mask = np.all(idx[drop] == idx[[r + i for i in drop]], axis=0) if drop else np.ones(n * n, bool)
    cols = np.flatnonzero(mask)
    row_k = np.zeros(cols.size, dtype=np.int64)
    col_k = np.zeros(cols.size, dtype=np.int64)
    for i in keep:
        row_k = row_k * dims[i] + idx[i, cols]
        col_k = col_k * dims[i] + idx[r + i, cols]
    rows = row_k * nk + col_k
    return LinearMap(sp.csr_matrix((np.ones(cols.size), (rows, cols)), shape=(nk * nk, n * n)), n, nk)


def kron_identity(n: int, k: int, left: bool = False) -> LinearMap:
    """X -> X (x) 1_k, or 1_k (x) X when ``left``."""
    a, b, i = np.meshgrid(np.arange(n), np.arange(n), np.arange(k), indexing="ij")
    a, b, i = a.ravel(), b.ravel(), i.ravel()
    if left:
        row, col = i * n + a, i * n + b
    else:
        row, col = a * k + i, b * k + i
    nk = n * k
    rows = row * nk + col
    return LinearMap(sp.csr_matrix((np.ones(rows.size), (rows, a * n + b)), shape=(nk * nk, n * n)), n, nk)


def trace_against(h: np.ndarray) -> LinearMap:
    """X -> Tr[h X] as a map onto 1x1 matrices."""
    h = np.asarray(h)
    return LinearMap(sp.csr_matrix(h.T.reshape(1, -1)), h.shape[0], 1)


def trace(n: int) -> LinearMap:
    return trace_against(np.eye(n))


def embed(h: np.ndarray) -> LinearMap:
    """Scalar x (a 1x1 matrix) -> x h."""
    h = np.asarray(h)
    return LinearMap(sp.csr_matrix(h.reshape(-1, 1)), 1, h.shape[0])


def scalar(c: float = 1.0) -> LinearMap:
    return LinearMap(sp.csr_matrix(np.array([[float(c)]])), 1, 1)


def conjugation(k: np.ndarray) -> LinearMap:
    """X -> k X k^dagger."""
    k = np.asarray(k)
    m = sp.csr_matrix(np.kron(k, k.conj()))
    return LinearMap(m, k.shape[1], k.shape[0])


def diagonal(a: np.ndarray) -> LinearMap:
    """diag(x) -> diag(a @ x) for a dense (k_out, k_in) matrix a."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    ko, ki = a.shape
    r, c = np.nonzero(a)
    rows = r * ko + r
    cols = c * ki + c
    return LinearMap(sp.csr_matrix((a[r, c], (rows, cols)), shape=(ko * ko, ki * ki)), ki, ko)
