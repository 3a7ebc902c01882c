"""Primal-dual interior-point method for small dense SDPs.

Problems are reduced to the real standard form

    min <c, x>  s.t.  A x + B u = b,  x in K = (psd blocks) x (nonneg orthant)

with free variables u; the dual is max b.y s.t. A^T y + z = c, B^T y = f_u.
Nesterov-Todd scaling with a Mehrotra predictor-corrector drives both.

Complex Hermitian blocks are carried as real symmetric embeddings
[[Re X, -Im X], [Im X, Re X]]; every functional on X is halved on the
embedding so traces come out right.  Problems whose data are all real
skip the embedding altogether, since conjugation maps optimal points to
optimal points and averaging gives a real optimum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .problem import Block, Constraint, SdpProblem, SdpSolution, _dual_block

log = logging.getLogger("pptmc.sdp")

S2 = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class Options:
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    tol_cone: float = 1e-9
    max_iter: int = 200
    step: float = 0.98
    form: str = "auto"      # "primal" (slack form), "dual" (LMI form) or "auto"
    tol_infeas: float = 1e-8
    verify_infeas: float = 1e-6


# coordinates ---------------------------------------------------------------

def coord_rows(side: int, complex_field: bool, diag_only: bool = False) -> sp.csr_matrix:
    """Functionals t_k with t_k . vec(X) = <A_k, X> for an orthonormal Hermitian basis A_k."""
    d = np.arange(side)
    rows = [d]
    cols = [d * side + d]
    vals = [np.ones(side, dtype=complex)]
    nr = side
    if not diag_only and side > 1:
        p, q = np.triu_indices(side, 1)
        k = p.size
        r = nr + np.arange(k)
        rows += [r, r]
        cols += [p * side + q, q * side + p]
        vals += [np.full(k, S2, dtype=complex), np.full(k, S2, dtype=complex)]
        nr += k
        if complex_field:
            r = nr + np.arange(k)
            rows += [r, r]
            cols += [p * side + q, q * side + p]
            vals += [np.full(k, -1j * S2), np.full(k, 1j * S2)]
            nr += k
    m = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nr, side * side))
    if not complex_field:
        m = sp.csr_matrix(m.real)
    return m


def embed_rows(r: sp.spmatrix, side: int) -> sp.csr_matrix:
    """Rows acting on vec(X) turned into rows acting on the real embedding of X."""
    r = sp.coo_matrix(r)
    p, q = np.divmod(r.col, side)
    s = 2 * side
    re = np.real(r.data) / 2
    im = np.imag(r.data) / 2
    rows = np.tile(r.row, 4)
    cols = np.concatenate([p * s + q, (p + side) * s + q + side, (p + side) * s + q, p * s + q + side])
    vals = np.concatenate([re, re, -im, im])
    out = sp.csr_matrix((vals, (rows, cols)), shape=(r.shape[0], s * s))
    out.eliminate_zeros()
    return out


def unembed(xt: np.ndarray, side: int) -> np.ndarray:
    a, b = xt[:side, :side], xt[:side, side:]
    c, d = xt[side:, :side], xt[side:, side:]
    return 0.5 * (a + d) + 0.5j * (c - b)


# standard form assembly ------------------------------------------------------

class _Core:
    """Real cone program; see module docstring."""

    def __init__(self, m: int):
        self.m = m
        self.b = np.zeros(m)
        self.psd_C: list[np.ndarray] = []
        self.psd_A: list[sp.csr_matrix] = []
        self.psd_tag: list[tuple] = []
        self.lp_c: list[np.ndarray] = []
        self.lp_A: list[sp.csr_matrix] = []
        self.lp_tag: list[tuple] = []
        self.free_c: list[np.ndarray] = []
        self.free_B: list[sp.csr_matrix] = []
        self.free_tag: list[tuple] = []

    def finalize(self):
        m = self.m
        self.sides = [c.shape[0] for c in self.psd_C]
        self.lp_sizes = [c.size for c in self.lp_c]
        self.lp_off = np.concatenate([[0], np.cumsum(self.lp_sizes)]).astype(int)
        self.cl = np.concatenate(self.lp_c) if self.lp_c else np.zeros(0)
        self.Al = sp.hstack(self.lp_A, format="csr") if self.lp_A else sp.csr_matrix((m, 0))
        self.AlT = self.Al.T.tocsr()
        self.free_sizes = [c.size for c in self.free_c]
        self.free_off = np.concatenate([[0], np.cumsum(self.free_sizes)]).astype(int)
        self.cf = np.concatenate(self.free_c) if self.free_c else np.zeros(0)
        self.Bf = sp.hstack(self.free_B, format="csr") if self.free_B else sp.csr_matrix((m, 0))
        self.BfT = self.Bf.T.tocsr()
        self.psd_AT = [a.T.tocsr() for a in self.psd_A]
        self.psd_rows = []
        self.psd_sub = []
        self.psd_inv = []
        for a in self.psd_A:
            rows = np.unique(a.tocoo().row)
            sub = a[rows]
            uniq, inv = _unique_rows(sub)
            self.psd_rows.append(rows)
            self.psd_sub.append(sub[uniq] if inv is not None else sub)
            self.psd_inv.append(inv)
        self.nu = sum(self.sides) + self.cl.size

    def A(self, xs, xl, u) -> np.ndarray:
        out = np.zeros(self.m)
        for a, x in zip(self.psd_A, xs):
            out += a @ x.ravel()
        if xl.size:
            out += self.Al @ xl
        if u is not None and u.size:
            out += self.Bf @ u
        return out

    def AT(self, y):
        zs = []
        for at, s in zip(self.psd_AT, self.sides):
            t = (at @ y).reshape(s, s)
            zs.append(0.5 * (t + t.T))
        return zs, self.AlT @ y, self.BfT @ y


def _unique_rows(a: sp.csr_matrix):
    """Indices of distinct rows and the inverse map, or (None, None) when all are distinct."""
    a = a.tocsr()
    a.sort_indices()
    seen = {}
    uniq = []
    inv = np.empty(a.shape[0], dtype=np.int64)
    for i in range(a.shape[0]):
        lo, hi = a.indptr[i], a.indptr[i + 1]
        key = (a.indices[lo:hi].tobytes(), a.data[lo:hi].tobytes())
        k = seen.get(key)
        if k is None:
            k = seen[key] = len(uniq)
            uniq.append(i)
        inv[i] = k
    if len(uniq) == a.shape[0]:
        return None, None
    return np.array(uniq), inv


def _assemble(p: SdpProblem, form: str, complex_field: bool):
    """Map ``p`` onto a _Core.  Returns (core, recovery plan)."""
    if form == "primal":
        return _assemble_primal(p, complex_field)
    return _assemble_dual(p, complex_field)


def _var_kind(blk: Block) -> str:
    if blk.cone == "psd" and blk.side == 1:
        return "nonneg"
    return blk.cone


def _cons_kind(c: Constraint) -> str:
    if c.sense == "<=" and c.side == 1:
        return "diag<="
    return c.sense


def _block_columns(kind: str, side: int, rows: sp.spmatrix, complex_field: bool):
    """Turn rows acting on vec of a side x side Hermitian into rows on the core variable."""
    if kind == "psd":
        return embed_rows(rows, side) if complex_field else sp.csr_matrix(rows.real)
    if kind == "nonneg":
        d = np.arange(side)
        return sp.csr_matrix(rows[:, d * side + d].real)
    # free: coordinates of an orthonormal Hermitian basis
    t = coord_rows(side, complex_field)
    return sp.csr_matrix((rows @ t.conj().T).real)


def _cost(kind: str, side: int, k: np.ndarray, complex_field: bool):
    """Linear cost <k, X> on the core variable for block kind."""
    kt = np.asarray(k).T.reshape(1, -1)
    row = sp.csr_matrix(kt)
    if kind == "psd":
        if complex_field:
            s = 2 * side
            return embed_rows(row, side).toarray().reshape(s, s)
        return np.real(k).astype(float).copy()
    if kind == "nonneg":
        return np.real(np.diag(k)).astype(float)
    return np.asarray(_block_columns("free", side, row, complex_field).toarray()).ravel()


def _assemble_primal(p: SdpProblem, cf_: bool):
    rows_of = {}
    nrows = 0
    tmat = {}
    for c in p.constraints:
        t = coord_rows(c.side, cf_, diag_only=_cons_kind(c) == "diag<=")
        tmat[c.name] = t
        rows_of[c.name] = (nrows, nrows + t.shape[0])
        nrows += t.shape[0]
    core = _Core(nrows)
    for c in p.constraints:
        lo, hi = rows_of[c.name]
        core.b[lo:hi] = np.real(tmat[c.name] @ c.rhs.ravel())
    for blk in p.blocks:
        kind = _var_kind(blk)
        parts = []
        for c in p.constraints:
            lo, hi = rows_of[c.name]
            if blk.name in c.terms:
                r = tmat[c.name] @ c.terms[blk.name].mat
                cols = _block_columns(kind, blk.side, r, cf_)
            else:
                ncols = {"psd": (2 * blk.side if cf_ else blk.side) ** 2, "nonneg": blk.side,
                         "free": coord_rows(blk.side, cf_).shape[0]}[kind]
                cols = sp.csr_matrix((hi - lo, ncols))
            parts.append(cols)
        a = sp.vstack(parts, format="csr")
        cost = -_cost(kind, blk.side, p.objective_of(blk.name), cf_)
        _push(core, kind, a, cost, ("var", blk.name))
    for c in p.constraints:
        kind = _cons_kind(c)
        if kind == "==":
            continue
        lo, hi = rows_of[c.name]
        t = tmat[c.name]
        if kind == "<=":
            local = _block_columns("psd", c.side, t, cf_)
            ncols = local.shape[1]
            cost = np.zeros((2 * c.side if cf_ else c.side,) * 2)
        else:
            local = sp.identity(t.shape[0], format="csr")
            ncols = t.shape[0]
            cost = np.zeros(ncols)
        a = sp.vstack([sp.csr_matrix((lo, ncols)), local, sp.csr_matrix((nrows - hi, ncols))], format="csr")
        _push(core, "psd" if kind == "<=" else "nonneg", a, cost, ("slack", c.name))
    core.finalize()
    return core, {"form": "primal", "rows": rows_of, "tmat": tmat}


def _assemble_dual(p: SdpProblem, cf_: bool):
    """LMI form: core dual variables y are coordinates of the blocks of p."""
    if any(c.sense == "==" for c in p.constraints) or any(b.cone == "free" for b in p.blocks):
        raise ValueError("dual form needs inequality constraints and signed blocks only")
    rows_of = {}
    tmat = {}
    nrows = 0
    for blk in p.blocks:
        t = coord_rows(blk.side, cf_, diag_only=_var_kind(blk) == "nonneg")
        tmat[blk.name] = t
        rows_of[blk.name] = (nrows, nrows + t.shape[0])
        nrows += t.shape[0]
    core = _Core(nrows)
    for blk in p.blocks:
        lo, hi = rows_of[blk.name]
        core.b[lo:hi] = np.real(tmat[blk.name] @ p.objective_of(blk.name).ravel())
    # cone slot for each block: z_b = X_b
    for blk in p.blocks:
        kind = _var_kind(blk)
        lo, hi = rows_of[blk.name]
        t = tmat[blk.name]
        if kind == "psd":
            local = -_block_columns("psd", blk.side, t, cf_)
            cost = np.zeros((2 * blk.side if cf_ else blk.side,) * 2)
        else:
            local = -sp.identity(t.shape[0], format="csr")
            cost = np.zeros(t.shape[0])
        a = sp.vstack([sp.csr_matrix((lo, local.shape[1])), local,
                       sp.csr_matrix((nrows - hi, local.shape[1]))], format="csr")
        _push(core, kind, a, cost, ("var", blk.name))
    # cone slot for each constraint: z_c = C_c - sum_b L_cb(X_b)
    for c in p.constraints:
        kind = "psd" if _cons_kind(c) == "<=" else "nonneg"
        parts = []
        for blk in p.blocks:
            lo, hi = rows_of[blk.name]
            if blk.name in c.terms:
                r = tmat[blk.name] @ c.terms[blk.name].adjoint().mat
                cols = _block_columns(kind, c.side, r, cf_)
            else:
                ncols = (2 * c.side if cf_ else c.side) ** 2 if kind == "psd" else c.side
                cols = sp.csr_matrix((hi - lo, ncols))
            parts.append(cols)
        a = sp.vstack(parts, format="csr")
        cost = _cost(kind, c.side, c.rhs, cf_)
        _push(core, kind, a, cost, ("cons", c.name))
    core.finalize()
    return core, {"form": "dual", "rows": rows_of, "tmat": tmat}


def _push(core: _Core, kind: str, a: sp.csr_matrix, cost, tag):
    if kind == "psd":
        core.psd_A.append(a)
        core.psd_C.append(np.asarray(cost, dtype=float))
        core.psd_tag.append(tag)
    elif kind == "nonneg":
        core.lp_A.append(a)
        core.lp_c.append(np.asarray(cost, dtype=float).ravel())
        core.lp_tag.append(tag)
    else:
        core.free_B.append(a)
        core.free_c.append(np.asarray(cost, dtype=float).ravel())
        core.free_tag.append(tag)


def _row_count(p: SdpProblem, form: str, cf_: bool) -> int:
    if form == "primal":
        return sum(coord_rows(c.side, cf_, _cons_kind(c) == "diag<=").shape[0] for c in p.constraints)
    return sum(coord_rows(b.side, cf_, _var_kind(b) == "nonneg").shape[0] for b in p.blocks)


def choose_form(p: SdpProblem, cf_: bool) -> str:
    if any(c.sense == "==" for c in p.constraints) or any(b.cone == "free" for b in p.blocks):
        return "primal"
    return "dual" if _row_count(p, "dual", cf_) < _row_count(p, "primal", cf_) else "primal"


# interior point iterations --------------------------------------------------------

def _sqrt_factor(x):
    w, q = np.linalg.eigh(x)
    floor = max(w.max(), 1.0) * 1e-300
    w = np.maximum(w, floor)
    return q * np.sqrt(w), q, w


def _nt(x, z):
    lx, qx, wx = _sqrt_factor(x)
    lz, _, _ = _sqrt_factor(z)
    u, lam, vt = np.linalg.svd(lz.T @ lx)
    lam = np.maximum(lam, 1e-300)
    g = lx @ vt.T / np.sqrt(lam)
    lxinv = (qx / np.sqrt(wx)).T
    ginv = (np.sqrt(lam)[:, None] * vt) @ lxinv
    return g, ginv, lam


def _max_step_scaled(lam, d):
    """Largest a with diag(lam) + a d psd."""
    s = 1.0 / np.sqrt(lam)
    t = s[:, None] * d * s[None, :]
    t = 0.5 * (t + t.T)
    mn = np.linalg.eigvalsh(t)[0]
    return np.inf if mn >= 0 else -1.0 / mn


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def _vdot_blocks(a, b):
    return float(sum(np.vdot(x, y) for x, y in zip(a, b)))


def _norm_blocks(a):
    return float(np.sqrt(sum(np.vdot(x, x) for x in a)))


class _KKT:
    def __init__(self, m: np.ndarray, bf: np.ndarray):
        # only the lower triangle of m is read by the factorization
        self.reg = 0.0
        dg = np.diag(m).copy()
        scale = max(1.0, float(np.abs(dg).max())) if m.size else 1.0
        self.fac = None
        for attempt in range(4):
            try:
                work = m if attempt == 0 else m.copy()
                if self.reg:
                    work[np.diag_indices_from(work)] = dg + self.reg
                self.fac = sla.cho_factor(work, lower=True, check_finite=False, overwrite_a=False)
                break
            except np.linalg.LinAlgError:
                self.reg = scale * 10.0 ** (-14 + 2 * attempt)
        if self.fac is None:
            full = np.tril(m) + np.tril(m, -1).T
            self.pinv = np.linalg.pinv(full, rcond=1e-14, hermitian=True)
        self.full = np.tril(m) + np.tril(m, -1).T
        self.bf = bf
        if bf.shape[1]:
            mb = self._msolve(bf)
            s = bf.T @ mb
            self.s_fac = sla.lu_factor(s + 1e-14 * max(1.0, np.abs(s).max()) * np.eye(s.shape[0]))
            self.mb = mb

    def _msolve(self, r):
        if self.fac is not None:
            return sla.cho_solve(self.fac, r, check_finite=False)
        return self.pinv @ r

    def _solve_once(self, h, rf):
        mh = self._msolve(h)
        if not self.bf.shape[1]:
            return mh, np.zeros(0)
        du = sla.lu_solve(self.s_fac, self.bf.T @ mh - rf)
        dy = mh - self.mb @ du
        return dy, du

    def solve(self, h, rf, refine: int = 2):
        # iterative refinement: the Schur matrix is badly conditioned near the end
        dy, du = self._solve_once(h, rf)
        for _ in range(refine):
            r1 = h - self.full @ dy - (self.bf @ du if du.size else 0.0)
            r2 = rf - self.bf.T @ dy if du.size else rf
            if not np.all(np.isfinite(r1)):
                break
            cy, cu = self._solve_once(r1, r2)
            dy, du = dy + cy, du + cu
        return dy, du


def solve_core(core: _Core, opts: Options):
    m = core.m
    b = core.b
    sides = core.sides
    npsd = len(sides)
    nl = core.cl.size
    nf = core.cf.size
    # SDPT3-style starting point
    xs, zs = [], []
    for j, s in enumerate(sides):
        a = core.psd_A[j]
        rn = np.sqrt(np.asarray(a.multiply(a).sum(axis=1)).ravel())
        act = rn > 0
        cx = np.max((1 + np.abs(b[act])) / (1 + rn[act])) if np.any(act) else 1.0
        xi = max(10.0, np.sqrt(s), s * cx)
        eta = max(10.0, np.sqrt(s), rn.max(initial=0.0), np.linalg.norm(core.psd_C[j]))
        xs.append(xi * np.eye(s))
        zs.append(eta * np.eye(s))
    if nl:
        rn = np.sqrt(np.asarray(core.Al.multiply(core.Al).sum(axis=0)).ravel())
        xl = np.maximum(10.0, (1 + np.abs(b).max(initial=0)) / (1 + rn) * max(1.0, np.sqrt(nl))) * np.ones(nl)
        zl = np.maximum(10.0, 1 + np.maximum(rn, np.abs(core.cl))) * np.ones(nl)
    else:
        xl = np.zeros(0)
        zl = np.zeros(0)
    y = np.zeros(m)
    u = np.zeros(nf)
    normb = np.linalg.norm(b)
    normc = np.sqrt(_norm_blocks(core.psd_C) ** 2 + np.dot(core.cl, core.cl) + np.dot(core.cf, core.cf))
    nu = max(core.nu, 1)
    status = "numerical-failure"
    info = {}
    stall = 0
    cert = None
    it = 0
    best = None
    last_gain = 0
    for it in range(opts.max_iter + 1):
        zt, zlt, zft = core.AT(y)
        rp = b - core.A(xs, xl, u)
        rd = [core.psd_C[j] - zs[j] - zt[j] for j in range(npsd)]
        rdl = core.cl - zl - zlt
        rf = core.cf - zft
        pobj = _vdot_blocks(core.psd_C, xs) + float(core.cl @ xl) + float(core.cf @ u)
        dobj = float(b @ y)
        comp = _vdot_blocks(xs, zs) + float(xl @ zl)
        mu = comp / nu
        pinf = np.linalg.norm(rp) / (1 + normb)
        dinf = np.sqrt(_norm_blocks(rd) ** 2 + rdl @ rdl + rf @ rf) / (1 + normc)
        relgap = abs(pobj - dobj) / (1 + abs(pobj))
        compgap = comp / (1 + abs(pobj) + abs(dobj))
        info = {"pinf": pinf, "dinf": dinf, "relgap": relgap, "compgap": compgap, "pobj": pobj, "dobj": dobj}
        log.debug("it %3d pobj %+.10e dobj %+.10e pinf %.1e dinf %.1e gap %.1e mu %.1e",
                  it, pobj, dobj, pinf, dinf, relgap, mu)
        score = max(pinf, dinf, relgap, compgap)
        if not np.isfinite(score):
            log.debug("non-finite iterate; stopping")
            break
        if best is None or score < best[0]:
            last_gain = it
            best = (score, [x.copy() for x in xs], xl.copy(), u.copy(), y.copy(), [z.copy() for z in zs], zl.copy(), dict(info))
        if pinf <= opts.tol_feas and dinf <= opts.tol_feas and relgap <= opts.tol_gap and compgap <= opts.tol_gap:
            status = "optimal"
            break
        if it >= 3:
            cert = _infeasibility(core, xs, xl, u, y, dobj, pobj, opts)
            if cert is not None:
                status = cert["kind"]
                break
        if it == opts.max_iter:
            break
        if it - last_gain > 25:
            log.debug("no progress for 25 iterations; stopping")
            break
        # scaling
        nts = [_nt(xs[j], zs[j]) for j in range(npsd)]
        ws = [g @ g.T for g, _, _ in nts]
        with np.errstate(over="raise", divide="raise"):
            try:
                dl = xl / zl
            except FloatingPointError:
                log.debug("LP scaling overflow; stopping")
                break
        # Schur complement
        mat = np.zeros((m, m))
        for j in range(npsd):
            w = ws[j]
            rows = core.psd_rows[j]
            if rows.size == 0:
                continue
            sub = core.psd_sub[j]
            t = sub @ np.kron(w, w)
            mj = sub @ t.T
            inv = core.psd_inv[j]
            if inv is not None:
                mj = mj[np.ix_(inv, inv)]
            if rows[-1] - rows[0] + 1 == rows.size:
                mat[rows[0]:rows[-1] + 1, rows[0]:rows[-1] + 1] += mj
            else:
                mat[np.ix_(rows, rows)] += mj
        if nl:
            pl = (core.Al.multiply(dl[None, :]) @ core.AlT).tocoo()
            np.add.at(mat, (pl.row, pl.col), pl.data)
        try:
            kkt = _KKT(mat, core.Bf.toarray() if nf else np.zeros((m, 0)))
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.debug("KKT factorization failed: %s", exc)
            break

        def direction(rc, rcl):
            tmp = [rc[j] - ws[j] @ rd[j] @ ws[j] for j in range(npsd)]
            tmpl = rcl - dl * rdl
            h = rp - core.A(tmp, tmpl, None)
            dy, du = kkt.solve(h, rf)
            at, atl, _ = core.AT(dy)
            dz = [rd[j] - at[j] for j in range(npsd)]
            dzl = rdl - atl
            dx = [rc[j] - ws[j] @ dz[j] @ ws[j] for j in range(npsd)]
            dx = [0.5 * (d + d.T) for d in dx]
            dxl = rcl - dl * dzl
            return dx, dxl, dz, dzl, dy, du

        def steps(dx, dxl, dz, dzl):
            ap, ad = np.inf, np.inf
            for j in range(npsd):
                g, ginv, lam = nts[j]
                ap = min(ap, _max_step_scaled(lam, ginv @ dx[j] @ ginv.T))
                ad = min(ad, _max_step_scaled(lam, g.T @ dz[j] @ g))
            if nl:
                ap = min(ap, _max_step_lp(xl, dxl))
                ad = min(ad, _max_step_lp(zl, dzl))
            return ap, ad

        def newton_step():
            # predictor
            dx, dxl, dz, dzl, dy, du = direction([-x for x in xs], -xl)
            ap, ad = steps(dx, dxl, dz, dzl)
            ap, ad = min(1.0, ap), min(1.0, ad)
            comp_aff = sum(np.vdot(xs[j] + ap * dx[j], zs[j] + ad * dz[j]) for j in range(npsd))
            comp_aff += float((xl + ap * dxl) @ (zl + ad * dzl))
            sigma = min(1.0, max(0.0, comp_aff / comp)) ** 3 if comp > 0 else 0.0
            smu = sigma * mu
            # corrector
            rc = []
            for j in range(npsd):
                g, ginv, lam = nts[j]
                a = ginv @ dx[j] @ ginv.T
                bz = g.T @ dz[j] @ g
                t = -(a @ bz + bz @ a)
                t[np.diag_indices_from(t)] += 2 * smu - 2 * lam ** 2
                rt = t / (lam[:, None] + lam[None, :])
                rc.append(g @ rt @ g.T)
            rcl = (smu - xl * zl - dxl * dzl) / zl if nl else xl
            dx, dxl, dz, dzl, dy, du = direction(rc, rcl)
            ap, ad = steps(dx, dxl, dz, dzl)
            ap = min(1.0, opts.step * ap)
            ad = min(1.0, opts.step * ad)
            return dx, dxl, dz, dzl, dy, du, ap, ad

        try:
            with np.errstate(over="ignore", invalid="ignore"):
                dx, dxl, dz, dzl, dy, du, ap, ad = newton_step()
        except np.linalg.LinAlgError as exc:
            log.debug("search direction failed: %s", exc)
            break
        if not (np.isfinite(ap) and np.isfinite(ad)):
            log.debug("non-finite step length; stopping")
            break
        if min(ap, ad) < 1e-9:
            stall += 1
            if stall >= 3:
                log.debug("step lengths collapsed; stopping")
                break
        else:
            stall = 0
        xs = [0.5 * (x + ap * d + (x + ap * d).T) for x, d in zip(xs, dx)]
        zs = [0.5 * (z + ad * d + (z + ad * d).T) for z, d in zip(zs, dz)]
        xl = xl + ap * dxl
        zl = zl + ad * dzl
        u = u + ap * du
        y = y + ad * dy
    if status == "numerical-failure" and best is not None:
        _, xs, xl, u, y, zs, zl, info = best
    return {"status": status, "xs": xs, "xl": xl, "u": u, "y": y, "zs": zs, "zl": zl,
            "iterations": it, "info": info, "cert": cert}


def _infeasibility(core, xs, xl, u, y, dobj, pobj, opts):
    tol = opts.tol_infeas
    if dobj > 0:
        yb = y / dobj
        zt, zlt, zft = core.AT(yb)
        scale = 1.0 + max([np.abs(z).max(initial=0) for z in zt] + [np.abs(zlt).max(initial=0)])
        viol = 0.0
        for z in zt:
            viol = max(viol, np.linalg.eigvalsh(0.5 * (z + z.T))[-1])
        if zlt.size:
            viol = max(viol, zlt.max())
        if zft.size:
            viol = max(viol, np.abs(zft).max())
        if viol / scale < tol and np.linalg.norm(y) > 1e3:
            return {"kind": "core-dual-ray", "y": yb}
    if pobj < 0:
        s = -pobj
        xb = [x / s for x in xs]
        r = core.A(xb, xl / s, u / s)
        scale = 1.0 + max([np.abs(x).max(initial=0) for x in xb] + [np.abs(xl / s).max(initial=0)])
        if np.linalg.norm(r) / scale < tol and s > 1e3:
            return {"kind": "core-primal-ray", "xs": xb, "xl": xl / s, "u": u / s}
    return None


# public entry point -------------------------------------------------------------

def solve(p: SdpProblem, opts: Options | None = None, **kw) -> SdpSolution:
    """Solve ``p`` (maximization form) and return primal X and dual Y blocks."""
    opts = opts or Options()
    if kw:
        opts = Options(**{**opts.__dict__, **kw})
    cf_ = not p.is_real
    form = opts.form if opts.form != "auto" else choose_form(p, cf_)
    core, plan = _assemble(p, form, cf_)
    res = solve_core(core, opts)
    primal, dual = _recover(p, core, plan, res, cf_)
    info = dict(res["info"])
    info["form"] = form
    info["rows"] = core.m
    if form == "primal":
        pval, dval = -info["pobj"], -info["dobj"]
    else:
        pval, dval = info["dobj"], info["pobj"]
    status = res["status"]
    certificate = None
    if res["cert"] is not None:
        status, certificate = _map_certificate(p, core, plan, res["cert"], form, cf_, opts)
        if status == "numerical-failure":
            log.info("infeasibility ray failed verification")
    if status == "primal-infeasible":
        pval, dval = -np.inf, -np.inf
    elif status == "dual-infeasible":
        pval, dval = np.inf, np.inf
    sol = SdpSolution(status, primal, dual, float(pval), float(dval), res["iterations"], info, certificate)
    if status == "optimal":
        sol.info.update(kkt_residuals(p, primal, dual))
    return sol


def _recover(p, core, plan, res, cf_):
    """Problem-level X (blocks) and Y (constraints) from core iterates."""
    primal, dual = {}, {}
    form = plan["form"]
    xs, zs, xl, zl, y, u = res["xs"], res["zs"], res["xl"], res["zl"], res["y"], res["u"]

    def psd_value(mat, side):
        return unembed(mat, side) if cf_ else mat.copy()

    def lp_value(j, vec):
        lo, hi = core.lp_off[j], core.lp_off[j + 1]
        return vec[lo:hi].copy()

    blocks = {b.name: b for b in p.blocks}
    cons = {c.name: c for c in p.constraints}
    # in primal form X lives in x and Y in z (slacks) or y (equalities);
    # in dual form X lives in z (block slots) and Y in x (constraint slots)
    xsrc, xlsrc = (xs, xl) if form == "primal" else (zs, zl)
    ysrc, ylsrc = (zs, zl) if form == "primal" else (xs, xl)
    xkey = "var"
    ykey = "slack" if form == "primal" else "cons"
    # z-side matrices are embeddings of X/2 in the complex field
    xfac = 2.0 if (cf_ and form == "dual") else 1.0
    yfac = 2.0 if (cf_ and form == "primal") else 1.0
    for j, (kind, name) in enumerate(core.psd_tag):
        if kind == xkey:
            primal[name] = xfac * psd_value(xsrc[j], blocks[name].side)
        elif kind == ykey:
            dual[name] = yfac * psd_value(ysrc[j], cons[name].side)
    for j, (kind, name) in enumerate(core.lp_tag):
        v = lp_value(j, xlsrc if kind == xkey else ylsrc)
        if kind == xkey:
            blk = blocks[name]
            primal[name] = np.diag(v) if blk.side > 1 else v.reshape(1, 1)
        else:
            c = cons[name]
            dual[name] = np.diag(v) if c.side > 1 else v.reshape(1, 1)
    for j, (kind, name) in enumerate(core.free_tag):
        lo, hi = core.free_off[j], core.free_off[j + 1]
        t = coord_rows(blocks[name].side, cf_)
        primal[name] = (t.conj().T @ u[lo:hi]).reshape(blocks[name].side, blocks[name].side)
    if form == "primal":
        for c in p.constraints:
            if _cons_kind(c) == "==":
                lo, hi = plan["rows"][c.name]
                t = plan["tmat"][c.name]
                dual[c.name] = -(t.conj().T @ y[lo:hi]).reshape(c.side, c.side)
    for d in (primal, dual):
        for k, v in d.items():
            v = 0.5 * (v + v.conj().T)
            d[k] = v.real.copy() if not cf_ else v
    return primal, dual


def _map_certificate(p, core, plan, cert, form, cf_, opts):
    """Translate a core ray into a problem-level ray and verify it."""
    fake = {"xs": [], "xl": np.zeros(0), "zs": [], "zl": np.zeros(0), "y": np.zeros(core.m), "u": np.zeros(core.cf.size)}
    if cert["kind"] == "core-dual-ray":
        zt, zlt, _ = core.AT(cert["y"])
        res = dict(fake, zs=[-z for z in zt], zl=-zlt, y=cert["y"],
                   xs=[np.zeros_like(z) for z in zt], xl=np.zeros_like(zlt))
        _, ydual = _recover(p, core, plan, res, cf_)
        xprim, _ = _recover(p, core, plan, res, cf_)
        if form == "primal":
            ray = {"Y": ydual}
            ok = verify_dual_ray(p, ydual, opts.verify_infeas)
            status = "primal-infeasible"
        else:
            ray = {"X": xprim}
            ok = verify_primal_ray(p, xprim, opts.verify_infeas)
            status = "dual-infeasible"
    else:
        res = dict(fake, xs=cert["xs"], xl=cert["xl"], u=cert["u"],
                   zs=[np.zeros_like(x) for x in cert["xs"]], zl=np.zeros_like(cert["xl"]))
        xprim, ydual = _recover(p, core, plan, res, cf_)
        if form == "primal":
            ray = {"X": xprim}
            ok = verify_primal_ray(p, xprim, opts.verify_infeas)
            status = "dual-infeasible"
        else:
            ray = {"Y": ydual}
            ok = verify_dual_ray(p, ydual, opts.verify_infeas)
            status = "primal-infeasible"
    return (status if ok else "numerical-failure"), ray


def _min_eig(a):
    a = np.atleast_2d(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(0.5 * (a + a.conj().T))[0])


def _in_cone(a, cone, tol):
    a = np.atleast_2d(a)
    scale = 1.0 + np.abs(a).max(initial=0)
    if cone == "psd":
        return _min_eig(a) >= -tol * scale
    if cone == "nonneg":
        return np.real(np.diag(a)).min() >= -tol * scale
    return True


def verify_dual_ray(p: SdpProblem, ydual: dict, tol: float) -> bool:
    """Y in the dual cone with L^*(Y) in the block cone and Tr[CY] < 0: p is infeasible."""
    val = sum(np.real(np.vdot(c.rhs, ydual[c.name])) for c in p.constraints)
    if not val < 0:
        return False
    scale = abs(val)
    for c in p.constraints:
        if not _in_cone(ydual[c.name] / scale, _dual_block(c).cone, tol):
            return False
    for b in p.blocks:
        a = p.adjoint_value(b.name, ydual) / scale
        if b.cone == "free":
            if np.abs(a).max(initial=0) > tol:
                return False
        elif not _in_cone(a, b.cone, tol):
            return False
    return True


def verify_primal_ray(p: SdpProblem, xprim: dict, tol: float) -> bool:
    """X in the block cones with L(X) <= 0 and Tr[KX] > 0: the dual of p is infeasible."""
    val = p.evaluate(xprim)
    if not val > 0:
        return False
    for b in p.blocks:
        if not _in_cone(xprim[b.name] / val, b.cone, tol):
            return False
    for c in p.constraints:
        lx = -p.constraint_value(c, xprim) / val
        if c.sense == "==":
            if np.abs(lx).max(initial=0) > tol:
                return False
        elif not _in_cone(lx, "psd" if c.sense == "<=" else "nonneg", tol):
            return False
    return True


def kkt_residuals(p: SdpProblem, primal: dict, dual: dict) -> dict:
    """Problem-level feasibility and complementarity measures (relative)."""
    pfeas = 0.0
    comp = 0.0
    for c in p.constraints:
        s = c.rhs - p.constraint_value(c, primal)
        sc = 1.0 + np.abs(c.rhs).max(initial=0)
        if c.sense == "==":
            pfeas = max(pfeas, np.abs(s).max(initial=0) / sc)
        elif c.sense == "<=":
            pfeas = max(pfeas, max(0.0, -_min_eig(s)) / sc)
            comp = max(comp, np.abs(s @ dual[c.name]).max() / (1 + np.abs(s).max() * np.abs(dual[c.name]).max()))
        else:
            pfeas = max(pfeas, max(0.0, -np.real(np.diag(s)).min()) / sc)
    dfeas = 0.0
    for b in p.blocks:
        k = p.objective_of(b.name)
        s = p.adjoint_value(b.name, dual) - k
        sc = 1.0 + np.abs(k).max(initial=0)
        x = primal[b.name]
        if b.cone == "free":
            dfeas = max(dfeas, np.abs(s).max(initial=0) / sc)
        elif b.cone == "psd":
            dfeas = max(dfeas, max(0.0, -_min_eig(s)) / sc)
        else:
            dfeas = max(dfeas, max(0.0, -np.real(np.diag(s)).min()) / sc)
        if b.cone != "free":
            sx = s @ x if b.cone == "psd" else np.diag(np.diag(s)) @ x
            comp = max(comp, np.abs(sx).max() / (1 + np.abs(s).max() * np.abs(x).max()))
    return {"primal_feasibility": float(pfeas), "dual_feasibility": float(dfeas),
            "complementarity": float(comp)}
