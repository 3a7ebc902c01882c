"""Semidefinite programs in maximization form.

    maximize   sum_b Re Tr[K_b X_b]
    subject to sum_b L_cb(X_b)  (<= | == | diag<=)  C_c   for each constraint c
               X_b psd, nonneg diagonal, or free Hermitian

The dual is

    minimize   sum_c Tr[C_c Y_c]
    subject to sum_c L_cb^*(Y_c) - K_b  psd / nonneg diagonal / zero
               Y_c psd (<=), nonneg diagonal (diag<=) or free (==).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import maps
from .maps import LinearMap

CONES = ("psd", "nonneg", "free")
SENSES = ("<=", "==", "diag<=")
STATUSES = ("optimal", "primal-infeasible", "dual-infeasible", "numerical-failure")


@dataclass(frozen=True)
class Block:
    name: str
    side: int
    cone: str = "psd"

    def __post_init__(self):
        if self.cone not in CONES:
            raise ValueError(f"unknown cone {self.cone!r}")
        if self.side < 1:
            raise ValueError("block side must be positive")


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: Mapping[str, LinearMap]
    rhs: np.ndarray
    sense: str = "<="

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ValueError(f"unknown sense {self.sense!r}")
        rhs = np.atleast_2d(np.asarray(self.rhs))
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "terms", dict(self.terms))

    @property
    def side(self) -> int:
        return self.rhs.shape[0]


class SdpProblem:
    """Immutable container; see the module docstring for the convention."""

    def __init__(self, blocks: Sequence[Block], objective: Mapping[str, np.ndarray],
                 constraints: Sequence[Constraint], name: str = ""):
        self.blocks = tuple(blocks)
        self.constraints = tuple(constraints)
        self.name = name
        self._index = {b.name: b for b in self.blocks}
        if len(self._index) != len(self.blocks):
            raise ValueError("block names must be unique")
        if len({c.name for c in self.constraints}) != len(self.constraints):
            raise ValueError("constraint names must be unique")
        obj = {}
        for key, k in objective.items():
            blk = self.block(key)
            k = np.atleast_2d(np.asarray(k))
            if k.shape != (blk.side, blk.side):
                raise ValueError(f"objective for {key} has shape {k.shape}")
            obj[key] = k
        self.objective = obj
        for c in self.constraints:
            if not c.terms:
                raise ValueError(f"constraint {c.name} has no terms")
            for key, lm in c.terms.items():
                blk = self.block(key)
                if lm.n_in != blk.side or lm.n_out != c.side:
                    raise ValueError(f"map for {key} in {c.name} has shape {lm.n_in}->{lm.n_out}")
        for arr in list(obj.values()) + [c.rhs for c in self.constraints]:
            if np.abs(arr - arr.conj().T).max(initial=0) > 1e-12 * (1 + np.abs(arr).max(initial=0)):
                raise ValueError("objective and bound operators must be Hermitian")

    def block(self, name: str) -> Block:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"no block named {name!r}") from None

    @property
    def is_real(self) -> bool:
        arrays = list(self.objective.values()) + [c.rhs for c in self.constraints]
        if any(np.iscomplexobj(a) and np.any(a.imag) for a in arrays):
            return False
        return all(lm.is_real for c in self.constraints for lm in c.terms.values())

    def objective_of(self, name: str) -> np.ndarray:
        blk = self.block(name)
        return self.objective.get(name, np.zeros((blk.side, blk.side)))

    def evaluate(self, x: Mapping[str, np.ndarray]) -> float:
        return float(sum(np.real(np.vdot(self.objective_of(b.name), _as_mat(x[b.name], b)))
                         for b in self.blocks))

    def constraint_value(self, c: Constraint, x: Mapping[str, np.ndarray]) -> np.ndarray:
        out = np.zeros((c.side, c.side), dtype=complex)
        for key, lm in c.terms.items():
            out += lm(_as_mat(x[key], self.block(key)))
        return out

    def adjoint_value(self, name: str, y: Mapping[str, np.ndarray]) -> np.ndarray:
        blk = self.block(name)
        out = np.zeros((blk.side, blk.side), dtype=complex)
        for c in self.constraints:
            if name in c.terms:
                out += c.terms[name].adjoint()(_as_mat(y[c.name], _dual_block(c)))
        return out

    def __repr__(self) -> str:
        return (f"SdpProblem({self.name!r}, blocks={[(b.name, b.side, b.cone) for b in self.blocks]}, "
                f"constraints={[(c.name, c.side, c.sense) for c in self.constraints]})")

    def to_json(self) -> dict:
        def mat_json(a):
            a = np.asarray(a)
            return {"re": a.real.tolist(), "im": a.imag.tolist()}

        def map_json(lm):
            coo = lm.mat.tocoo()
            return {"n_in": lm.n_in, "n_out": lm.n_out, "row": coo.row.tolist(), "col": coo.col.tolist(),
                    "re": np.real(coo.data).tolist(), "im": np.imag(coo.data).tolist()}

        return {
            "name": self.name,
            "sense": "maximize",
            "blocks": [{"name": b.name, "side": b.side, "cone": b.cone} for b in self.blocks],
            "objective": {k: mat_json(v) for k, v in self.objective.items()},
            "constraints": [{"name": c.name, "sense": c.sense, "rhs": mat_json(c.rhs),
                             "terms": {k: map_json(v) for k, v in c.terms.items()}}
                            for c in self.constraints],
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def from_json(cls, data: dict | str) -> "SdpProblem":
        import scipy.sparse as sp

        if isinstance(data, str):
            data = json.loads(data)

        def mat(d):
            return np.asarray(d["re"]) + 1j * np.asarray(d["im"])

        def lmap(d):
            vals = np.asarray(d["re"]) + 1j * np.asarray(d["im"])
            shape = (d["n_out"] ** 2, d["n_in"] ** 2)
            return LinearMap(sp.csr_matrix((vals, (d["row"], d["col"])), shape=shape), d["n_in"], d["n_out"])

        blocks = [Block(b["name"], b["side"], b["cone"]) for b in data["blocks"]]
        objective = {k: _realify(mat(v)) for k, v in data["objective"].items()}
        cons = [Constraint(c["name"], {k: lmap(v) for k, v in c["terms"].items()}, _realify(mat(c["rhs"])),
                           c["sense"]) for c in data["constraints"]]
        return cls(blocks, objective, cons, data.get("name", ""))


def _realify(a: np.ndarray) -> np.ndarray:
    return a.real.copy() if not np.any(a.imag) else a


def _as_mat(v, blk: Block) -> np.ndarray:
    v = np.asarray(v)
    if blk.cone == "nonneg" and v.ndim == 1:
        return np.diag(v)
    return np.atleast_2d(v)


def _dual_block(c: Constraint) -> Block:
    cone = {"<=": "psd", "diag<=": "nonneg", "==": "free"}[c.sense]
    return Block(c.name, c.side, cone)


def dualize(p: SdpProblem) -> SdpProblem:
    """Dual program, written again in maximization form.

    Its optimal value is the negative of the optimal value of ``p``.
    """
    blocks = [_dual_block(c) for c in p.constraints]
    objective = {c.name: -c.rhs for c in p.constraints}
    cons = []
    sense = {"psd": "<=", "nonneg": "diag<=", "free": "=="}
    for b in p.blocks:
        terms = {c.name: -c.terms[b.name].adjoint() for c in p.constraints if b.name in c.terms}
        if not terms:
            # a block absent from every constraint: its dual condition is 0 >= K_b
            raise ValueError(f"block {b.name} appears in no constraint")
        cons.append(Constraint(b.name, terms, -p.objective_of(b.name), sense[b.cone]))
    return SdpProblem(blocks, objective, cons, name=f"dual({p.name})" if p.name else "dual")


@dataclass
class SdpSolution:
    status: str
    primal: dict
    dual: dict
    primal_value: float
    dual_value: float
    iterations: int
    info: dict = field(default_factory=dict)
    certificate: dict | None = None

    @property
    def gap(self) -> float:
        if not (np.isfinite(self.primal_value) and np.isfinite(self.dual_value)):
            return float("inf")
        return abs(self.primal_value - self.dual_value) / (1.0 + abs(self.primal_value))

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def value(self) -> float:
        return 0.5 * (self.primal_value + self.dual_value)

    def __repr__(self) -> str:
        return (f"SdpSolution(status={self.status!r}, primal={self.primal_value:.12g}, "
                f"dual={self.dual_value:.12g}, iterations={self.iterations})")


# convenience builders ----------------------------------------------------

def var(name: str, side: int, cone: str = "psd") -> Block:
    return Block(name, side, cone)


def leq(name: str, terms: Mapping[str, LinearMap], rhs) -> Constraint:
    return Constraint(name, terms, np.atleast_2d(np.asarray(rhs, dtype=complex if np.iscomplexobj(rhs) else float)), "<=")


def eq(name: str, terms: Mapping[str, LinearMap], rhs) -> Constraint:
    return Constraint(name, terms, np.atleast_2d(np.asarray(rhs)), "==")


__all__ = ["Block", "Constraint", "SdpProblem", "SdpSolution", "dualize", "maps", "var", "leq", "eq"]
