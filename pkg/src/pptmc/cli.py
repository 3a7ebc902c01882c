"""Command-line front end: bound, sweep and audit.

Exit codes: 0 success, 1 usage error, 2 solver failure (or any failed sweep row).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import channels as chans
from . import converse, hypothesis, sdp, symmetry
from .operators import HermitianOp

log = logging.getLogger("pptmc.cli")

CSV_COLUMNS = ("n", "p", "eps", "value", "log2_M_upper", "method", "status", "runtime_ms")
METHODS = ("sdp", "reduced", "classical")


CLASSICAL_KINDS = ("dephasing", "depolarizing", "erasure")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _json_num(x):
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


def parse_n(values: list[str] | None) -> list[int]:
    out: list[int] = []
    for v in values or []:
        try:
            if ".." in v:
                a, b = v.split("..", 1)
                a, b = int(a), int(b)
                if b < a:
                    raise ValueError
                out.extend(range(a, b + 1))
            else:
                out.append(int(v))
        except ValueError:
            raise UsageError(f"--n: cannot parse {v!r} (use an integer or a range a..b)") from None
    if any(k < 1 for k in out):
        raise UsageError("--n: blocklengths must be positive")
    return sorted(set(out))


def _spec(args) -> chans.ChannelSpec:
    if args.channel == "custom":
        if not args.choi:
            raise UsageError("--choi: a JSON file is required for the custom channel")
        try:
            with open(args.choi) as fh:
                data = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"--choi: cannot read {args.choi!r}: {exc}") from None
        try:
            if "kind" in data:
                return chans.ChannelSpec.from_json(data)
            return chans.ChannelSpec("custom", custom_choi=HermitianOp.from_json(data), in_dim=data.get("in_dim"))
        except (KeyError, ValueError) as exc:
            raise UsageError(f"--choi: invalid operator: {exc}") from None
    try:
        return chans.ChannelSpec(args.channel, args.p)
    except ValueError as exc:
        raise UsageError(f"--p: {exc}") from None


def _eps_list(args) -> list[float]:
    eps = args.eps or []
    if not eps:
        raise UsageError("--eps: at least one value is required")
    for e in eps:
        if not 0.0 <= e <= 1.0:
            raise UsageError(f"--eps: {e} is outside [0, 1]")
    return sorted(set(eps))


def _opts(args) -> sdp.Options:
    kw = {}
    if args.tol_gap is not None:
        kw["tol_gap"] = args.tol_gap
    if args.tol_cone is not None:
        kw["tol_cone"] = args.tol_cone
    return sdp.Options(**kw)


def compute(spec: chans.ChannelSpec, n: int, eps: float, method: str, opts: sdp.Options,
            audit: bool = False) -> converse.BoundResult:
    """One bound by the requested method."""
    if method == "sdp":
        ch = chans.tensor_power(chans.build(spec), n)
        res = converse.bound(ch, eps, opts, audit=audit)
        res.channel = spec.kind
        return res
    if method == "reduced":
        return symmetry.reduced_bound(spec, n, eps, opts=opts)
    if spec.kind in ("dephasing", "depolarizing"):
        # depolarizing inherits the same classical test through a classical-to-Bell map
        v = hypothesis.bsc_beta(n, spec.p, 1.0 - eps).beta if eps < 1 else 0.0
    elif spec.kind == "erasure":
        v = hypothesis.bec_bound(n, spec.p, eps) if eps < 1 else 0.0
    else:
        raise UsageError(f"--method: no classical bound for {spec.kind}")
    return converse.BoundResult(value=v, log2_M_upper=converse.log2_upper(v), eps=eps, channel=spec.kind,
                                p=spec.p, n=n, method="classical")


def _row(spec, n, eps, method, opts, timing):
    t0 = time.perf_counter()
    try:
        r = compute(spec, n, eps, method, opts)
        value, upper, status = r.value, r.log2_M_upper, r.status
    except chans.BudgetExceeded:
        value, upper, status = None, None, "budget-exceeded"
    except (converse.SolverFailure, converse.InconsistentBound) as exc:
        log.info("row n=%d eps=%g failed: %s", n, eps, exc)
        value, upper, status = None, None, "solver-failure"
    ms = (time.perf_counter() - t0) * 1e3 if timing else None
    return {"n": n, "p": spec.p if spec.kind != "custom" else None, "eps": eps, "value": value,
            "log2_M_upper": upper, "method": method, "status": status, "runtime_ms": ms}


def _row_star(a):
    return _row(*a)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def cmd_bound(args) -> int:
    spec = _spec(args)
    eps = _eps_list(args)
    ns = parse_n(args.n) or [1]
    if len(eps) != 1 or len(ns) != 1:
        raise UsageError("--eps/--n: bound takes a single value of each (use sweep for lists)")
    if args.method == "classical" and spec.kind not in CLASSICAL_KINDS:
        raise UsageError(f"--method: no classical bound for {spec.kind}")
    if args.method == "reduced" and spec.kind not in symmetry.REDUCED_KINDS:
        raise UsageError(f"--method: the reduced route does not support {spec.kind}")
    try:
        r = compute(spec, ns[0], eps[0], args.method, _opts(args), audit=True)
    except chans.BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 2
    except (converse.SolverFailure, converse.InconsistentBound) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    _emit(_dump(r.to_json()), args.out)
    return 0


def cmd_sweep(args) -> int:
    spec = _spec(args)
    eps = _eps_list(args)
    ns = parse_n(args.n)
    if not ns:
        raise UsageError("--n: at least one blocklength is required")
    if args.method == "classical" and spec.kind not in CLASSICAL_KINDS:
        raise UsageError(f"--method: no classical bound for {spec.kind}")
    if args.method == "reduced" and spec.kind not in symmetry.REDUCED_KINDS:
        raise UsageError(f"--method: the reduced route does not support {spec.kind}")
    opts = _opts(args)
    tasks = [(spec, n, e, args.method, opts, args.timing) for n in ns for e in eps]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(_row_star, tasks))
    else:
        rows = [_row(*t) for t in tasks]
    if args.format == "json":
        text = _dump([{k: (_json_num(v) if k in ("p", "eps", "value", "log2_M_upper", "runtime_ms") else v)
                       for k, v in r.items()} for r in rows])
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        text = buf.getvalue()
    _emit(text, args.out)
    return 0 if all(r["status"] == "optimal" for r in rows) else 2


def cmd_audit(args) -> int:
    spec = _spec(args)
    eps = _eps_list(args)
    ns = parse_n(args.n) or [1]
    if len(eps) != 1 or len(ns) != 1:
        raise UsageError("--eps/--n: audit takes a single value of each")
    e = eps[0]
    opts = _opts(args)
    try:
        ch = chans.tensor_power(chans.build(spec), ns[0])
        r = converse.bound(ch, e, opts, audit=True)
    except chans.BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 2
    except (converse.SolverFailure, converse.InconsistentBound) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    slater = {}
    for name, prob in (("min_form", converse.min_form(ch, e)), ("max_form", converse.max_form(ch, e))):
        rep = sdp.slater_check(prob, opts=opts)
        slater[name] = {"status": rep.status, "margin": _json_num(rep.margin)}
    degenerate = e == 1.0
    report = {
        "channel": spec.kind, "p": _json_num(spec.p) if spec.kind != "custom" else None,
        "n": ns[0], "eps": e, "seed": args.seed,
        "value": _json_num(r.value), "log2_M_upper": _json_num(r.log2_M_upper),
        "degenerate": degenerate,
        "gap": 0.0 if degenerate else _json_num(r.gap),
        "solver_gap": _json_num(r.gap),
        "min_value": _json_num(r.min_value), "max_value": _json_num(r.max_value),
        "slater": slater,
        "residuals": {k: _json_num(v) for k, v in r.residuals.items()},
    }
    _emit(_dump(report), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--channel", choices=chans.KINDS, default="dephasing")
    common.add_argument("--choi", help="JSON file with a Choi operator (custom channel)")
    common.add_argument("--p", type=float, default=0.0, help="channel parameter in [0, 1]")
    common.add_argument("--eps", type=float, action="append", help="infidelity (repeatable)")
    common.add_argument("--n", action="append", help="blocklength (repeatable, or a range a..b)")
    common.add_argument("--method", choices=METHODS, default="sdp")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--tol-gap", type=float, default=None)
    common.add_argument("--tol-cone", type=float, default=None)
    common.add_argument("--timing", action="store_true", help="fill the runtime_ms column")
    parser = _Parser(prog="pptmc", description="PPT minimax converse bounds for quantum channels")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    for name, fn, hlp in (("bound", cmd_bound, "compute one bound"),
                          ("sweep", cmd_sweep, "tabulate bounds over n and eps"),
                          ("audit", cmd_audit, "duality gap, Slater checks and slackness residuals")):
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.set_defaults(func=fn)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("PPTMC_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs: must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pptmc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
