"""Command-line entry point: ``concurrence-lab <subcommand> ...``.

Data goes to stdout (or ``--out``), diagnostics to stderr.  Exit codes:
0 success, 1 other errors, 2 invalid spec, 3 dimension mismatch, 4 a
monotonicity violation was found by ``check``.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys

import numpy as np

from .concurrence import ConcurrenceSpec, concurrence_pure
from .convexroof import MixedState, RoofConfig, convex_roof_upper, flags_equality_check
from .errors import (ConcurrenceLabError, DimensionMismatch, Inapplicable, InvalidSpec,
                     NotPSD, SpecNotSufficient)
from .monotonicity import (SearchConfig, analytic_counterexample, describe_positive,
                           kappa_scan, minimize_gap, sufficient_criterion, tripartite_region,
                           write_kappa_csv, write_region_csv)
from .qstate import PureState

EXIT_ERROR = 1
EXIT_SPEC = 2
EXIT_DIMS = 3
EXIT_WITNESS = 4


def _read_json(path: str):
    if path == "-":
        return json.load(sys.stdin)
    with open(path) as fh:
        return json.load(fh)


def load_spec(path: str) -> ConcurrenceSpec:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise InvalidSpec("spec file must hold a JSON object")
    try:
        return ConcurrenceSpec.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise InvalidSpec(f"malformed spec: {exc}") from exc


def load_state(path: str) -> PureState:
    return PureState.from_dict(_read_json(path))


def load_mixed(path: str) -> MixedState:
    """A density-matrix file, or a pure-state file turned into its projector."""
    data = _read_json(path)
    if np.ndim(data["re"]) == 1:
        return MixedState.from_pure(PureState.from_dict(data))
    return MixedState.from_dict(data)


@contextlib.contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _dims(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    return tuple(int(x) for x in text.replace("x", ",").split(",") if x.strip())


def _search_config(args) -> SearchConfig:
    flag = None if args.flag_party is None else args.flag_party - 1
    return SearchConfig(restarts=args.restarts, max_iters=args.iters, seed=args.seed,
                        flag_party=flag)


def _roof_config(args) -> RoofConfig:
    return RoofConfig(ensemble_size=args.ensemble_size, restarts=args.restarts,
                      iters=args.iters, seed=args.seed)


def cmd_eval(args) -> int:
    spec = load_spec(args.spec)
    psi = load_state(args.state)
    print(f"{concurrence_pure(spec, psi):.12f}")
    return 0


def cmd_convert(args) -> int:
    spec = load_spec(args.spec)
    if not spec.is_admissible:
        raise InvalidSpec("; ".join(spec.report.lines()))
    with _output(args.out) as fh:
        fh.write(json.dumps(spec.to_dict(args.to), indent=2) + "\n")
    return 0


def cmd_validate(args) -> int:
    spec = load_spec(args.spec)
    report = spec.validate()
    for line in report.lines():
        print(line)
    return 0 if report.admissible else EXIT_SPEC


def cmd_check(args) -> int:
    spec = load_spec(args.spec)
    if not spec.is_admissible:
        raise InvalidSpec("; ".join(spec.report.lines()))
    if sufficient_criterion(spec):
        print("monotone (sufficient criterion)")
        return 0
    print("sufficient criterion fails: positive alpha at " + describe_positive(spec))
    witness = None
    with contextlib.suppress(Inapplicable):
        witness = analytic_counterexample(spec)
        print("analytic witness found")
    if witness is None and args.search:
        dims = _dims(args.dims) or (2,) * spec.n
        result = minimize_gap(spec, dims, _search_config(args))
        print(f"search minimum gap: {result.min_gap:.12g}", file=sys.stderr)
        witness = result.witness
    if witness is None:
        if args.search:
            print("no violation found (evidence only)")
        else:
            print("no analytic witness; rerun with --search for a numerical search")
        return 0
    print(f"violation witness: gap = {witness.gap:.12f}, flag party {witness.flag_party + 1}")
    if args.out:
        with _output(args.out) as fh:
            fh.write(json.dumps(witness.to_dict(), indent=2) + "\n")
    return EXIT_WITNESS


def cmd_scan_kappa(args) -> int:
    grid = None
    if args.grid:
        grid = [float(x) for x in args.grid.split(",")]
    config = SearchConfig(restarts=args.restarts, max_iters=args.iters, seed=args.seed,
                          polish_iters=0)
    dims = _dims(args.dims) or (2, 2, 2, 2)

    def progress(pt):
        print(f"kappa1={pt.kappa1:.6g} min_gap={pt.min_gap:.6g}", file=sys.stderr)

    result = kappa_scan(grid, dims, config, refine_tol=args.refine_tol, progress=progress)
    with _output(args.out) as fh:
        write_kappa_csv(result, fh)
    print(f"boundary_estimate={result.boundary_estimate:.6g}", file=sys.stderr)
    return 0


def cmd_region(args) -> int:
    points = tripartite_region(args.resolution)
    with _output(args.out) as fh:
        write_region_csv(points, fh)
    return 0


def cmd_roof(args) -> int:
    spec = load_spec(args.spec)
    rho = load_mixed(args.state)
    est = convex_roof_upper(spec, rho, _roof_config(args))
    print(f"{est.value:.12f}")
    print(f"eigen-ensemble average: {est.eigen_average:.12f}", file=sys.stderr)
    return 0


def cmd_flags_check(args) -> int:
    spec = load_spec(args.spec)
    rho1, rho2 = load_mixed(args.rho1), load_mixed(args.rho2)
    p1 = args.p1
    res = flags_equality_check(spec, rho1, rho2, p1, 1 - p1, args.flag_party - 1,
                               _roof_config(args))
    print(f"lhs_estimate,{res.lhs_estimate:.12g}")
    print(f"rhs_value,{res.rhs_value:.12g}")
    print(f"residual,{res.residual:.12g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="concurrence-lab",
                                     description="Multipartite concurrences and LOCC monotonicity checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, restarts, iters):
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--restarts", type=int, default=restarts)
        p.add_argument("--iters", type=int, default=iters)
        p.add_argument("--out", default=None, help="output file (default stdout)")

    p = sub.add_parser("eval", help="concurrence of a pure state")
    p.add_argument("spec")
    p.add_argument("state")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("convert", help="rewrite a spec in the alpha or p form")
    p.add_argument("spec")
    p.add_argument("--to", choices=["alpha", "p", "both"], default="alpha")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("validate", help="report admissibility checks")
    p.add_argument("spec")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("check", help="monotonicity verdict, optionally with a search")
    p.add_argument("spec")
    p.add_argument("--search", action="store_true")
    p.add_argument("--dims", default=None, help="local dimensions, e.g. 2,2,2")
    p.add_argument("--flag-party", type=int, default=None, help="1-based; default all")
    common(p, 8, None)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("scan-kappa", help="four-party kappa family scan, CSV out")
    p.add_argument("--grid", default=None, help="comma separated kappa1 values")
    p.add_argument("--dims", default=None)
    p.add_argument("--refine-tol", type=float, default=0.05)
    common(p, 3, None)
    p.set_defaults(fn=cmd_scan_kappa)

    p = sub.add_parser("region", help="tripartite monotone region, CSV out")
    p.add_argument("--resolution", type=int, default=30)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_region)

    p = sub.add_parser("roof", help="convex-roof upper bound for a mixed state")
    p.add_argument("spec")
    p.add_argument("state", help="density matrix or pure state JSON")
    p.add_argument("--ensemble-size", type=int, default=None)
    common(p, 4, 400)
    p.set_defaults(fn=cmd_roof)

    p = sub.add_parser("flags-check", help="compare both sides of the flags equality")
    p.add_argument("spec")
    p.add_argument("rho1")
    p.add_argument("rho2")
    p.add_argument("--p1", type=float, default=0.5)
    p.add_argument("--flag-party", type=int, default=1, help="1-based")
    p.add_argument("--ensemble-size", type=int, default=None)
    common(p, 4, 400)
    p.set_defaults(fn=cmd_flags_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except DimensionMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMS
    except (InvalidSpec, SpecNotSufficient) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (ConcurrenceLabError, NotPSD, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
