"""Command-line interface.

Every command prints JSON on stdout (or writes ``--out``) and a one-line
summary on stderr. Exit status: 0 success, 1 invalid input, 2 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import continuity, io, render
from .measures import ProbVector, lambdas, t_of_p
from .model import (
    DegenerateRange,
    InfeasiblePerturbation,
    SpongeSpec,
    check_hip,
    dotted,
    fit_base,
    t_bounds,
    validate,
)
from .roots import NoBracket
from .symbolic import (
    BelowThreshold,
    CapExceeded,
    DegenerateScales,
    WordTooShort,
    ZeroMass,
    approximation_arrays,
    box_count_estimate,
    pointwise_dim_estimate,
    sample_word,
)
from .variational import CascadeError, TooManyWords, family_p, vp, vp_grid_oracle, witness_params

SOLVER_ERRORS = (
    NoBracket,
    CascadeError,
    DegenerateRange,
    InfeasiblePerturbation,
    BelowThreshold,
    WordTooShort,
    ZeroMass,
    CapExceeded,
    DegenerateScales,
    TooManyWords,
    ZeroDivisionError,
    continuity.NotSierpinski,
)


class InputError(Exception):
    def __init__(self, payload: dict):
        super().__init__(payload.get("message", "invalid input"))
        self.payload = payload


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError({"path": [], "constraint": "arguments", "message": message, "values": []})


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _load_valid(path: str) -> SpongeSpec:
    try:
        spec = io.load_spec(path)
    except io.SpecFormatError as exc:
        raise InputError(exc.to_dict())
    report = validate(spec)
    if not report.ok:
        first = report.violations[0].to_dict()
        first["violations"] = [v.to_dict() for v in report.violations]
        raise InputError(first)
    return spec


def _weights(spec: SpongeSpec, path: Optional[str]) -> ProbVector:
    if path is None:
        return ProbVector.uniform(spec)
    try:
        return io.probvector_from_json(spec, Path(path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise InputError({"path": [], "constraint": "weights", "message": str(exc), "values": []})


def _emit(args, payload, summary: str, text: Optional[str] = None):
    """Write ``text`` (or JSON of ``payload``) to ``--out`` or stdout."""
    out = text if text is not None else io.dumps(payload)
    if getattr(args, "out", None):
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)
    print(summary, file=sys.stderr)


# --- commands --------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        spec = io.load_spec(args.spec)
    except io.SpecFormatError as exc:
        raise InputError(exc.to_dict())
    report = validate(spec)
    _emit(args, report.to_dict(), "valid" if report.ok else f"{len(report.violations)} violation(s)")
    return 0 if report.ok else 1


def cmd_dim(args) -> int:
    spec = _load_valid(args.spec)
    p = _weights(spec, args.weights)
    lams = lambdas(spec, p)
    t = t_of_p(spec, p)
    value = math.fsum(lams) + t
    payload = {"dim": value, "lambdas": lams, "t": t, "p": p.to_mapping()}
    _emit(args, payload, f"dim = {value:.12g}")
    return 0


def cmd_vp(args) -> int:
    spec = _load_valid(args.spec)
    res = vp(spec, starts=args.starts, seed=args.seed, tol=args.tol)
    payload = res.to_dict()
    if args.resolution:
        value, arg = vp_grid_oracle(spec, args.resolution)
        payload["oracle"] = {"resolution": args.resolution, "value": value, "argmax": list(arg)}
    _emit(args, payload, f"VP = {res.value:.12g} (spread {res.spread:.2g}, converged {res.n_converged}/{res.starts})")
    return 0 if res.converged else 2


def cmd_family(args) -> int:
    spec = _load_valid(args.spec)
    fam = family_p(spec, args.t, args.rho)
    payload = fam.to_dict()
    worst = max(abs(v) for v in fam.residuals.values())
    _emit(args, payload, f"alpha = {fam.alpha:.12g}, max residual {worst:.2g}")
    return 0


def cmd_witness(args) -> int:
    spec = _load_valid(args.spec)
    base = fit_base(spec)
    w = witness_params(spec, base)
    payload = w.to_dict()
    payload["dim"] = math.fsum(lambdas(spec, w.family.p)) + t_of_p(spec, w.family.p)
    payload["base"] = base.to_dict()
    _emit(args, payload, f"witness rho = {w.rho:.12g}, t = {w.t:.12g}, dim = {payload['dim']:.12g}")
    return 0


def cmd_sample(args) -> int:
    spec = _load_valid(args.spec)
    p = _weights(spec, args.weights)
    w = sample_word(spec, p, args.n, args.seed)
    payload = {"n": args.n, "seed": args.seed, "word": [dotted(spec.leaves[s]) for s in w.symbols]}
    _emit(args, payload, f"sampled {args.n} symbols")
    return 0


def cmd_estimate(args) -> int:
    spec = _load_valid(args.spec)
    p = _weights(spec, args.weights)
    est = pointwise_dim_estimate(spec, p, args.n, args.trials, args.seed)
    payload = est.to_dict()
    _emit(args, payload, f"local dim ~ {est.mean:.6g} +- {est.stderr:.2g}")
    return 0


def cmd_approx(args) -> int:
    spec = _load_valid(args.spec)
    corners, edges = approximation_arrays(spec, args.n, args.cap)
    summary = f"{len(corners)} boxes at order {args.n}"
    if args.out:
        _emit(args, None, summary, text=io.boxes_csv(corners, edges))
    else:
        boxes = [{"corner": list(c), "edges": list(e)} for c, e in zip(corners, edges)]
        _emit(args, {"n": args.n, "count": len(boxes), "boxes": boxes}, summary)
    return 0


def cmd_boxcount(args) -> int:
    spec = _load_valid(args.spec)
    corners, edges = approximation_arrays(spec, args.n, args.cap)
    if args.scales:
        scales = args.scales
    else:
        r = float(np.exp(spec.level_log_ratios[1].max()))
        scales = [r**k for k in range(1, args.n + 1)]
    bc = box_count_estimate((corners, edges), scales)
    _emit(args, bc.to_dict(), f"box-counting slope {bc.slope:.6g} (r2 {bc.r2:.4f}; sanity indicator only)")
    return 0


def cmd_sweep(args) -> int:
    spec = _load_valid(args.spec)
    report = continuity.sweep(spec, args.eps, K=args.k, seed=args.seed, starts=args.starts)
    summary = report.summary()
    line = f"C_hat = {report.C_hat:.6g}, r2 = {report.linearity_r2:.4f}, excluded {report.excluded}"
    if args.out:
        _emit(args, None, line + f"; summary {json.dumps(io.jsonable(summary))}", text=io.sweep_csv(report))
    else:
        payload = dict(summary)
        payload["table"] = [r.to_dict() for r in report.rows]
        _emit(args, payload, line)
    return 0


def cmd_render(args) -> int:
    spec = _load_valid(args.spec)
    text = render.svg(spec, args.n, args.plane, args.cap)
    _emit(args, None, f"rendered order-{args.n} approximation on {args.plane}", text=text)
    return 0


def cmd_bounds(args) -> int:
    spec = _load_valid(args.spec)
    tb = t_bounds(spec)
    payload = tb.to_dict()
    if tb.t_low < tb.t_high:
        payload["hip"] = check_hip(spec).to_dict()
    _emit(args, payload, f"t in [{tb.t_low:.6g}, {tb.t_high:.6g}]")
    return 0


# --- parser ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spongedim", description="Dimension tools for self-affine sponges.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("spec", help="spec JSON file")
        p.add_argument("--out", help="write output here instead of stdout")
        p.set_defaults(fn=fn)
        return p

    add("validate", cmd_validate, "check the spec constraints")

    p = add("dim", cmd_dim, "dimension of a Bernoulli measure")
    p.add_argument("--weights", help="ProbVector JSON (default uniform)")

    p = add("vp", cmd_vp, "maximise the dimension over all Bernoulli measures")
    p.add_argument("--starts", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--resolution", type=int, default=0, help="also run the grid oracle at this resolution")

    p = add("family", cmd_family, "solve the two-parameter family at (t, rho)")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)

    add("witness", cmd_witness, "family member at the witness parameters")
    add("bounds", cmd_bounds, "fiber Moran roots and the genericity check")

    p = add("sample", cmd_sample, "draw a random word")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights")

    p = add("estimate", cmd_estimate, "Monte-Carlo local dimension")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights")

    p = add("approx", cmd_approx, "boxes of the order-n approximation")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--cap", type=int, default=1_000_000)

    p = add("boxcount", cmd_boxcount, "box-counting slope of an approximation")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--cap", type=int, default=1_000_000)
    p.add_argument("--scales", type=_float_list)

    p = add("sweep", cmd_sweep, "perturbation sweep around a Sierpinski spec")
    p.add_argument("--eps", type=_float_list, default=list(continuity.DEFAULT_GRID))
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--starts", type=int, default=4)

    p = add("render", cmd_render, "SVG of a projected approximation")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--plane", choices=sorted(render.PLANES), default="xy")
    p.add_argument("--cap", type=int, default=1_000_000)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except InputError as exc:
        sys.stdout.write(io.dumps(exc.payload))
        print(f"error: {exc.payload.get('message', exc)}", file=sys.stderr)
        return 1
    except SOLVER_ERRORS as exc:
        sys.stdout.write(io.dumps({"error": type(exc).__name__, "message": str(exc)}))
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
