"""Command-line front end.

Exit codes: 0 certified or valid, 1 usage or parse error, 2 not certified
or ill-posed, 3 solver inconclusive.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from .convert import IllPosedError, convert, verify_conversion
from .lpi import to_standard
from .pde import PDEValidationError, bundled_examples, check_wellposed, diffusion_channels, load_family
from .pi_operator import PIOperator, format_operator
from .sdp import export_sdpa
from .stability import (
    CERTIFIED,
    DEFAULT_DELTA,
    DEFAULT_EPSILON,
    INCONCLUSIVE,
    BracketError,
    StabilityQuery,
    _assemble,
    _working_system,
    bisect_margin,
    check_stability,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAIL = 2
EXIT_INCONCLUSIVE = 3


class UsageError(Exception):
    pass


def _status_code(status: str) -> int:
    if status == CERTIFIED:
        return EXIT_OK
    return EXIT_INCONCLUSIVE if status == INCONCLUSIVE else EXIT_FAIL


def _parse_sets(items) -> dict:
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise UsageError(f"--set expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--set {name}: {value!r} is not a number") from None
    return out


def _load(args):
    fam = load_family(args.file)
    params = {**fam.parameters, **_parse_sets(getattr(args, "set", None))}
    return fam, fam.instantiate(**params), params


def _clean(v):
    """JSON-safe copy with numpy scalars and non-finite floats normalized."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _emit_json(report: dict, stream):
    stream.write(json.dumps(_clean(report), indent=2, sort_keys=True) + "\n")


def _operator_entries(P: PIOperator) -> dict:
    """Entries in the description-file schema; kernel coefficients are ``coeffs[i][j]`` for s^i theta^j."""
    out = {}
    for name, par in zip(("N0", "N1", "N2"), P.params):
        entries = []
        if not par.is_zero:
            C = par.to_dense()
            for r in range(par.rows):
                for c in range(par.cols):
                    block = C[r, c]
                    if not np.any(block):
                        continue
                    i_max = int(np.flatnonzero(block.any(axis=1)).max())
                    j_max = int(np.flatnonzero(block.any(axis=0)).max())
                    if name == "N0":
                        coeffs = [float(v) for v in block[: i_max + 1, 0]]
                    else:
                        coeffs = [[float(v) for v in row[: j_max + 1]] for row in block[: i_max + 1]]
                    entries.append({"row": r, "col": c, "coeffs": coeffs})
        out[name] = entries
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(args, out) -> int:
    fam, sys_, params = _load(args)
    rep = check_wellposed(sys_)
    report = {
        "command": "validate",
        "system": fam.name,
        "parameters": params,
        "partition": {"n0": sys_.n0, "n1": sys_.n1, "n2": sys_.n2},
        "wellposed": rep.to_dict(),
    }
    if args.json:
        _emit_json(report, out)
    else:
        out.write(f"{fam.name}: n0={sys_.n0} n1={sys_.n1} n2={sys_.n2} on [{sys_.a:g}, {sys_.b:g}]\n")
        out.write(rep.summary() + "\n")
    return EXIT_OK if rep.invertible else EXIT_FAIL


def cmd_convert(args, out) -> int:
    fam, sys_, params = _load(args)
    rep = check_wellposed(sys_)
    if not rep.invertible:
        out.write(rep.summary() + "\n")
        return EXIT_FAIL
    pie = convert(sys_)
    check = verify_conversion(sys_, pie, trials=args.trials) if args.trials else None
    if args.emit == "machine":
        report = {
            "command": "convert",
            "system": fam.name,
            "parameters": params,
            "domain": list(sys_.domain),
            "T": _operator_entries(pie.T),
            "A": _operator_entries(pie.A),
            "H": _operator_entries(pie.H),
        }
        if check is not None:
            report["verification"] = check.to_dict()
        _emit_json(report, out)
    else:
        out.write(f"{fam.name}: {rep.summary()}\n\nT =\n{format_operator(pie.T)}\n\nA =\n{format_operator(pie.A)}\n")
        if check is not None:
            out.write(f"\nverification over {check.trials} random inputs: {'passed' if check.passed else 'FAILED'}\n")
    return EXIT_OK if check is None or check.passed else EXIT_FAIL


def _stability_report(cert, timing: bool) -> dict:
    d = cert.to_dict()
    if timing:
        d["assembly_time"] = cert.assembly_time
        d["solve_time"] = cert.solve_time
    return d


def _format_cert(label: str, cert) -> str:
    return (
        f"{label}: {cert.status} (d={cert.d}, eps={cert.epsilon:g}, delta={cert.delta:g}; "
        f"solver {cert.solver_status}, min Gram eigenvalue {cert.min_gram_eigenvalue:.2e}, "
        f"equality residual {cert.max_equality_residual:.2e})"
    )


def cmd_stability(args, out) -> int:
    fam, sys_, params = _load(args)
    rep = check_wellposed(sys_)
    if not rep.invertible:
        if args.json:
            _emit_json({"command": "stability", "system": fam.name, "wellposed": rep.to_dict()}, out)
        else:
            out.write(rep.summary() + "\n")
        return EXIT_FAIL
    pie = convert(sys_)
    delta = 0.0 if args.neutral else args.delta
    opts = dict(d=args.degree, epsilon=args.epsilon, q_degree=args.q_degree,
                split_components=not args.no_split, balance=not args.no_balance)
    cert = check_stability(StabilityQuery(pie, delta=delta, **opts), export_path=args.export_sdp)
    report = {
        "command": "stability",
        "system": fam.name,
        "parameters": params,
        "wellposed": rep.summary(),
        "certificate": _stability_report(cert, args.timing),
    }
    lines = [f"{fam.name}: {rep.summary()}", _format_cert("neutral test" if args.neutral else "test", cert)]
    if args.neutral:
        # also report the exponential test, which energy-conserving systems fail
        expo = check_stability(StabilityQuery(pie, delta=args.delta, **opts))
        report["exponential"] = _stability_report(expo, args.timing)
        lines.append(_format_cert("exponential test", expo))
    if cert.weights and any(w != 1.0 for w in cert.weights):
        lines.append(f"channel weights {cert.weights}; guaranteed eps={cert.effective_epsilon:.3g}, "
                     f"delta={cert.effective_delta:.3g} in the original variables")
    if args.export_sdp:
        lines.append(f"SDPA file written to {args.export_sdp}")
        report["sdpa_file"] = str(args.export_sdp)
    if args.json:
        _emit_json(report, out)
    else:
        out.write("\n".join(lines) + "\n")
    return _status_code(cert.status)


def cmd_bisect(args, out) -> int:
    fam, _, params = _load(args)
    if args.param not in fam.parameters:
        raise UsageError(f"{fam.name} has no parameter {args.param!r} (has: {', '.join(fam.parameters) or 'none'})")
    fixed = {k: v for k, v in params.items() if k != args.param}
    log = []

    def on_probe(v, cert):
        log.append((v, cert.status))
        if args.verbose:
            sys.stderr.write(f"  {args.param}={v:.10g}: {cert.status}\n")

    try:
        res = bisect_margin(fam, args.param, args.lo, args.hi, tol=args.tol, d=args.degree,
                            epsilon=args.epsilon, delta=args.delta, fixed=fixed,
                            on_probe=on_probe, q_degree=args.q_degree)
    except BracketError as exc:
        if args.json:
            _emit_json({"command": "bisect", "system": fam.name, "error": str(exc),
                        "probes": [{"value": v, "status": s} for v, s in log]}, out)
        else:
            out.write(f"bracket error: {exc}\n")
        return EXIT_USAGE
    report = {"command": "bisect", "system": fam.name, "fixed": fixed, "degree": args.degree,
              "epsilon": args.epsilon, "delta": args.delta, "tolerance": args.tol, **res.to_dict()}
    if args.json:
        _emit_json(report, out)
    else:
        out.write(f"{fam.name}: certified at {args.param} = {res.certified_at:.6g}, "
                  f"not certified at {res.not_certified_at:.6g} ({len(res.probes)} probes)\n")
        for v, s in res.probes:
            out.write(f"  {args.param} = {v:<14.8g} {s}\n")
    return EXIT_OK


def bench_sizes(max_n: int) -> list[int]:
    sizes = [n for n in (1, 2, 5, 10, 20, 40) if n <= max_n]
    if max_n not in sizes:
        sizes.append(max_n)
    return sizes


def cmd_bench(args, out) -> int:
    if args.max_n < 1:
        raise UsageError("--max-n must be at least 1")
    rows = []
    worst = EXIT_OK
    for n in bench_sizes(args.max_n):
        t0 = time.perf_counter()
        pie = convert(diffusion_channels(n, reaction=1.0))
        cert = check_stability(StabilityQuery(pie, d=args.degree, split_components=not args.no_split))
        elapsed = time.perf_counter() - t0
        rows.append({"n": n, "status": cert.status, "time": elapsed, "sdp": cert.sizes})
        worst = max(worst, _status_code(cert.status))
        if not args.json:
            out.write(f"n = {n:3d}  {cert.status:<14s} {elapsed:8.2f} s  "
                      f"({cert.sizes.get('variables', 0)} variables, {cert.sizes.get('equalities', 0)} equalities)\n")
            out.flush()
    if args.json:
        _emit_json({"command": "bench", "degree": args.degree, "runs": rows}, out)
    return worst


def cmd_export(args, out) -> int:
    fam, sys_, _ = _load(args)
    rep = check_wellposed(sys_)
    if not rep.invertible:
        out.write(rep.summary() + "\n")
        return EXIT_FAIL
    q = StabilityQuery(convert(sys_), d=args.degree, epsilon=args.epsilon, delta=args.delta,
                       q_degree=args.q_degree, balance=not args.no_balance)
    pie, _ = _working_system(q)
    std = to_standard(_assemble(q, pie)[0])
    export_sdpa(std, args.output)
    out.write(f"wrote {args.output}: {len(std.block_sizes)} blocks {list(std.block_sizes)}, "
              f"{std.neq} equalities\n")
    return EXIT_OK


def cmd_examples(args, out) -> int:
    for name in bundled_examples():
        fam = load_family(name)
        params = ", ".join(f"{k}={v:g}" for k, v in fam.parameters.items())
        out.write(f"{name:<24s} {fam.description}" + (f" [{params}]" if params else "") + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_file(p):
    p.add_argument("file", help="PDE description (JSON path or bundled example name)")
    p.add_argument("--set", action="append", metavar="NAME=VALUE", help="override a parameter (repeatable)")


def _add_lpi(p, delta=True):
    p.add_argument("--degree", "-d", type=int, default=1, help="polynomial degree of the Lyapunov operator (default 1)")
    p.add_argument("--q-degree", type=int, default=None, help="degree of the derivative cone (default degree+1)")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="coercivity level (default %(default)g)")
    if delta:
        p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="decay level (default %(default)g)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="piestab", description="Stability analysis of coupled linear PDEs via PIEs and SDP.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the boundary conditions for well-posedness")
    _add_file(p)
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("convert", help="print the PIE parameters T, A")
    _add_file(p)
    p.add_argument("--emit", choices=("human", "machine"), default="human")
    p.add_argument("--trials", type=int, default=0, help="also run the random-input conversion check")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("stability", help="run the Lyapunov test once")
    _add_file(p)
    _add_lpi(p)
    p.add_argument("--neutral", action="store_true", help="test with delta=0 and also report the exponential test")
    p.add_argument("--export-sdp", metavar="PATH", help="write the SDP in SDPA sparse format")
    p.add_argument("--no-split", action="store_true", help="do not split decoupled channels into separate blocks")
    p.add_argument("--no-balance", action="store_true", help="do not rescale cascaded channels")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.add_argument("--timing", action="store_true", help="include wall-clock times in the JSON report")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("bisect", help="bisect a parameter for the certification boundary")
    _add_file(p)
    p.add_argument("--param", required=True)
    p.add_argument("--lo", type=float, required=True, help="value expected to certify")
    p.add_argument("--hi", type=float, required=True, help="value expected not to certify")
    p.add_argument("--tol", type=float, default=1e-2)
    _add_lpi(p)
    p.add_argument("--json", action="store_true")
    p.add_argument("--verbose", "-v", action="store_true", help="log probes to stderr")
    p.set_defaults(func=cmd_bisect)

    p = sub.add_parser("bench", help="n-channel diffusion scalability run")
    p.add_argument("--max-n", type=int, default=10)
    p.add_argument("--degree", "-d", type=int, default=1)
    p.add_argument("--no-split", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export", help="write the stability SDP in SDPA sparse format")
    _add_file(p)
    p.add_argument("output")
    _add_lpi(p)
    p.add_argument("--no-balance", action="store_true")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("examples", help="list bundled examples")
    p.set_defaults(func=cmd_examples)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args, out)
    except PDEValidationError as exc:
        sys.stderr.write("invalid PDE description:\n")
        for fld, msg in exc.problems:
            sys.stderr.write(f"  {fld}: {msg}\n" if fld else f"  {msg}\n")
        return EXIT_USAGE
    except (UsageError, FileNotFoundError, IllPosedError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
