"""Strict-feasibility diagnostics for SdpProblem instances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import maps
from .problem import Block, Constraint, SdpProblem
from .solver import Options, _min_eig, solve

STRICT_TOL = 1e-7


@dataclass
class SlaterReport:
    status: str            # "strictly-feasible", "boundary-only", "infeasible" or "unknown"
    margin: float
    witness: dict = field(default_factory=dict)
    equality_residual: float = 0.0

    @property
    def strict(self) -> bool:
        return self.status == "strictly-feasible"


def margins(p: SdpProblem, x: dict) -> tuple[float, float]:
    """Smallest cone margin over blocks and inequalities, and the worst equality residual."""
    margin = np.inf
    eq_res = 0.0
    for b in p.blocks:
        v = np.atleast_2d(x[b.name])
        if b.cone == "psd":
            margin = min(margin, _min_eig(v))
        elif b.cone == "nonneg":
            margin = min(margin, float(np.real(np.diag(v)).min()))
    for c in p.constraints:
        s = c.rhs - p.constraint_value(c, x)
        if c.sense == "<=":
            margin = min(margin, _min_eig(s))
        elif c.sense == "diag<=":
            margin = min(margin, float(np.real(np.diag(s)).min()))
        else:
            eq_res = max(eq_res, float(np.abs(s).max(initial=0)))
    return float(margin), eq_res


def slater_check(p: SdpProblem, witness: dict | None = None, opts: Options | None = None) -> SlaterReport:
    """Look for a point strictly inside every cone of ``p``.

    With ``witness`` the given point is checked.  Otherwise the largest
    uniform margin t (capped at 1) is found by solving an auxiliary SDP;
    the interior-point path returns a central point as the witness.
    """
    if witness is not None:
        m, e = margins(p, witness)
        ok = m > STRICT_TOL and e <= 1e-9
        return SlaterReport("strictly-feasible" if ok else ("boundary-only" if m > -STRICT_TOL else "infeasible"),
                            m, dict(witness), e)
    tname = "__margin"
    blocks = list(p.blocks) + [Block(tname, 1, "free")]
    cons = []
    for b in p.blocks:
        if b.cone == "free":
            continue
        terms = {b.name: -maps.identity(b.side), tname: maps.embed(np.eye(b.side))}
        cons.append(Constraint(f"__cone_{b.name}", terms, np.zeros((b.side, b.side)),
                               "<=" if b.cone == "psd" else "diag<="))
    for c in p.constraints:
        terms = dict(c.terms)
        if c.sense != "==":
            terms[tname] = maps.embed(np.eye(c.side))
        cons.append(Constraint(c.name, terms, c.rhs, c.sense))
    cons.append(Constraint("__cap", {tname: maps.scalar(1.0)}, np.ones((1, 1)), "<="))
    aux = SdpProblem(blocks, {tname: np.ones((1, 1))}, cons, name="slater")
    sol = solve(aux, opts)
    if sol.status != "optimal":
        if sol.status == "primal-infeasible":
            return SlaterReport("infeasible", -np.inf)
        return SlaterReport("unknown", np.nan)
    wit = {b.name: sol.primal[b.name] for b in p.blocks}
    m, e = margins(p, wit)
    t = float(np.real(sol.primal[tname][0, 0]))
    if t > STRICT_TOL and m > STRICT_TOL:
        status = "strictly-feasible"
    elif t > -1e-6:
        status = "boundary-only"
    else:
        status = "infeasible"
    return SlaterReport(status, max(t, m) if status != "strictly-feasible" else m, wit, e)
