"""Command-line entry point: ``nodalfield <subcommand> [flags]``.

Every run writes its table (CSV with a ``#`` digest line, or JSON) to ``--out``
and a manifest next to it (``<out>.manifest.json``). The digest covers only
the inputs that determine the table, so identical inputs give byte-identical
tables whatever ``--threads`` is. Errors print one line ``error reason=<r>
message=<text>`` on stderr and exit with the code of their class.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NodalFieldError, ParameterError, RegimeError

EXIT_CHECK_FAILED = 1


# ------------------------------------------------------------------ parsing

def parse_L_grid(text: str) -> list[float]:
    """``a:b:steps`` (geometric, inclusive) or a comma list."""
    from .scaling_experiments import geometric_grid

    try:
        if ":" in text:
            a, b, steps = text.split(":")
            return geometric_grid(float(a), float(b), int(steps))
        return [float(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad L grid {text!r}: {exc}") from None


def parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def parse_matrix(text: str) -> np.ndarray:
    """Rows separated by ';', entries by ','."""
    try:
        return np.array([[float(v) for v in row.split(",")] for row in text.split(";")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad matrix {text!r}") from None


def parse_event(text: str):
    """``i[:t],j[:t],...``; thresholds default to 0."""
    from .gaussian_tools import ThresholdEvent

    idx, thr = [], []
    try:
        for part in text.split(","):
            i, _, t = part.partition(":")
            idx.append(int(i))
            thr.append(float(t) if t else 0.0)
        return ThresholdEvent(tuple(idx), tuple(thr))
    except (ValueError, ParameterError):
        raise argparse.ArgumentTypeError(f"bad event {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--out", default="-", help="output path, '-' for stdout (no manifest)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def _field(p: argparse.ArgumentParser, L: bool = True) -> None:
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--s", type=float, default=1.0)
    if L:
        p.add_argument("--L", type=float, default=400.0)
    p.add_argument("--oversample", type=float, default=8.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nodalfield", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="dump one realization")
    _field(p)
    p.add_argument("--seed", type=int, default=None, help="field seed (default: derived from --master-seed)")
    _common(p)

    p = sub.add_parser("count", help="nodal component counts per seed")
    _field(p)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--method", choices=("contour-trace", "sign-cluster"), default=None)
    p.add_argument("--input", default=None, help="count a dumped sample instead of sampling")
    _common(p)

    p = sub.add_parser("scaling", help="subcritical or critical count study")
    p.add_argument("--regime", choices=("subcritical", "critical"), required=True)
    _field(p, L=False)
    p.add_argument("--L-grid", type=parse_L_grid, default=None)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--rho", type=float, default=20.0)
    _common(p)

    p = sub.add_parser("kernel", help="critical log profile of the kernel")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--s", type=float, default=None, help="defaults to n/2")
    p.add_argument("--L-grid", type=parse_L_grid, default=[100.0, 1000.0, 10000.0])
    p.add_argument("--separations", type=parse_floats, default=[0.0, 0.01, 0.1, 1.0, math.pi])
    _common(p)

    p = sub.add_parser("constants", help="c_n, C_n and A_n^i")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--samples", type=int, default=1_000_000)
    _common(p)

    p = sub.add_parser("detcheck", help="E[det M] = 0: exact expansion and Monte Carlo")
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--a", type=float, default=3.0)
    p.add_argument("--samples", type=int, default=1_000_000)
    _common(p)

    p = sub.add_parser("kacrice", help="critical points of p on nodal curves, n = 2")
    p.add_argument("--L-grid", type=parse_L_grid, default=[400.0, 1600.0, 6400.0])
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--oversample", type=float, default=8.0)
    p.add_argument("--samples", type=int, default=1_000_000, help="Monte Carlo size for A_2^i")
    _common(p)

    p = sub.add_parser("barrier", help="nodal component inside a small ball")
    p.add_argument("--L-grid", type=parse_L_grid, default=[1e3, 1e4, 1e5])
    p.add_argument("--rho", type=float, default=12.0)
    p.add_argument("--seeds", type=int, default=4000)
    p.add_argument("--oversample", type=float, default=8.0)
    _common(p)

    p = sub.add_parser("fkg", help="positive association of increasing events")
    p.add_argument("--cov", type=parse_matrix, default=None, help="e.g. '1,0.5;0.5,1'")
    p.add_argument("--event-a", type=parse_event, default=None)
    p.add_argument("--event-b", type=parse_event, default=None)
    p.add_argument("--random", type=int, default=0, help="also test this many random instances")
    p.add_argument("--samples", type=int, default=1_000_000)
    _common(p)

    p = sub.add_parser("replay", help="rerun a manifest and compare output digests")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="where to write the replayed table")
    return parser


# ------------------------------------------------------------------ output

_VOLATILE = {"out", "format", "threads"}


def run_digest(args: argparse.Namespace) -> str:
    """sha256 over the inputs that determine the table."""
    params = {k: v for k, v in sorted(vars(args).items()) if k not in _VOLATILE}
    blob = json.dumps({"version": __version__, "params": params}, sort_keys=True, default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if hasattr(v, "__dataclass_fields__"):
        return {k: getattr(v, k) for k in v.__dataclass_fields__}
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialize {type(v)}")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render(rows: list[dict], digest: str, fmt: str) -> bytes:
    columns = list(rows[0]) if rows else []
    if fmt == "json":
        doc = {"manifest_digest": digest, "columns": columns, "rows": [[r[c] for c in columns] for r in rows]}
        return (json.dumps(doc, default=_jsonable, indent=1) + "\n").encode()
    buf = io.StringIO()
    buf.write(f"# manifest sha256={digest}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue().encode()


def emit(args, payload: bytes, argv: list[str], started: float, extra_outputs=()) -> None:
    if args.out == "-":
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()
        return
    path = Path(args.out)
    path.write_bytes(payload)
    outputs = {str(p): hashlib.sha256(Path(p).read_bytes()).hexdigest() for p in (path, *extra_outputs)}
    manifest = {
        "command_line": argv,
        "master_seed": getattr(args, "master_seed", None),
        "parameters": dict(sorted(vars(args).items())),
        "version": __version__,
        "manifest_digest": run_digest(args),
        "wall_time_s": round(time.perf_counter() - started, 3),
        "outputs": outputs,
    }
    Path(f"{path}.manifest.json").write_text(json.dumps(manifest, indent=1, default=_jsonable) + "\n")


def _params(args):
    from .torus_spectrum import FieldParams

    p = FieldParams(args.n, args.s, getattr(args, "L", 1.0))
    if p.regime == "supercritical":
        raise RegimeError(f"s={p.s} > n/2={p.n / 2}: supercritical fields are not supported")
    return p


def _workers(args) -> int | None:
    return args.threads if args.threads and args.threads > 1 else None


# -------------------------------------------------------------- subcommands

def cmd_sample(args):
    from .field_sampler import GridSpec, derive_seeds, sample_field, write_sample

    params = _params(args)
    seed = args.seed if args.seed is not None else derive_seeds(args.master_seed, params.L, 1)[0]
    sample = sample_field(params, GridSpec.for_params(params, args.oversample), seed, workers=_workers(args))
    if args.out == "-":
        raise ParameterError("sample needs --out for the binary dump")
    dump = Path(args.out).with_suffix(".bin")
    write_sample(sample, dump)
    row = {"n": params.n, "s": params.s, "L": params.L, "seed": seed,
           "points_per_axis": sample.grid.points_per_axis, "rms": sample.rms, "dump": dump.name}
    return [row], (dump,)


def cmd_count(args):
    from .field_sampler import GridSpec, derive_seeds, read_sample, sample_field
    from .nodal_topology import component_diameters, count_components_2d, count_components_nd

    if args.input:
        samples = [read_sample(args.input, args.oversample)]
        params = samples[0].params
        if params.regime == "supercritical":
            raise RegimeError("supercritical sample")
    else:
        params = _params(args)
        grid = GridSpec.for_params(params, args.oversample)
        samples = (sample_field(params, grid, s) for s in derive_seeds(args.master_seed, params.L, args.seeds))
    method = args.method or ("contour-trace" if params.n == 2 else "sign-cluster")
    if method == "contour-trace" and params.n != 2:
        raise ParameterError("contour tracing needs n = 2")
    rows = []
    for sample in samples:
        rep = count_components_2d(sample) if method == "contour-trace" else count_components_nd(sample)
        if args.rho is not None:
            rep = component_diameters(rep, params, args.rho)
        rows.append({"seed": sample.seed, "L": params.L, "s": params.s, "n": params.n, "method": method,
                     "N": rep.N, "N_rho": rep.N_rho, "resolution": sample.grid.points_per_axis})
    return rows, ()


def cmd_scaling(args):
    from .scaling_experiments import critical_study, subcritical_study

    if args.regime == "critical":
        args.s = args.n / 2
    params = _params(args)
    if params.regime != args.regime:
        raise RegimeError(f"--regime {args.regime} but s={args.s}, n={args.n} is {params.regime}")
    grid = args.L_grid or ([400.0, 900.0, 1600.0, 2500.0] if args.regime == "subcritical"
                           else [400.0, 1600.0, 6400.0, 25600.0])
    if args.regime == "critical":
        rows = critical_study(args.n, grid, args.seeds, args.rho, args.master_seed, args.oversample, _workers(args))
    else:
        rows = subcritical_study(args.n, args.s, grid, args.seeds, args.master_seed, args.oversample,
                                 args.rho, _workers(args))
    return [r.row() for r in rows], ()


def cmd_kernel(args):
    from .kernel_verify import critical_log_profile
    from .torus_spectrum import FieldParams

    s = args.n / 2 if args.s is None else args.s
    profile = critical_log_profile(FieldParams(args.n, s, 1.0), args.L_grid, args.separations)
    return profile.rows(), ()


def cmd_constants(args):
    from .constants import universal_constants

    uc = universal_constants(args.n, args.samples, args.master_seed, _workers(args))
    return [dict(r, c_n=uc.c_n) for r in uc.rows()], ()


def cmd_detcheck(args):
    from .constants import WICK_MAX_M, StructuredHessianLaw, expected_det, wick_expected_det

    law = StructuredHessianLaw(args.m, args.a)
    wick = wick_expected_det(law) if args.m <= WICK_MAX_M else None
    mc = expected_det(law, args.samples, args.master_seed, _workers(args))
    ok = (wick is None or wick == 0) and mc.within(0.0)
    row = {"m": args.m, "a": args.a, "wick": None if wick is None else str(wick),
           "mc_mean": mc.mean, "mc_stderr": mc.stderr, "samples": mc.samples, "pass": ok}
    return [row], (), ok


def cmd_kacrice(args):
    from .field_sampler import derive_seeds
    from .kac_rice_2d import morse_restriction_study

    rows = []
    for L in args.L_grid:
        rep = morse_restriction_study(L, derive_seeds(args.master_seed, L, args.seeds), args.oversample,
                                      workers=_workers(args), constant_samples=args.samples)
        rows.append(dict(rep.row(), euler_mean=rep.euler_mean))
    return rows, ()


def cmd_barrier(args):
    from .gaussian_tools import barrier_probability
    from .torus_spectrum import FieldParams

    rows = barrier_probability(FieldParams(2, 1.0, 1.0), args.L_grid, args.rho, args.seeds,
                               args.master_seed, args.oversample, _workers(args))
    return [r.row() for r in rows], ()


def cmd_fkg(args):
    from .gaussian_tools import ThresholdEvent, fkg_check, random_fkg_instance

    cases = []
    if args.cov is not None:
        a = args.event_a or ThresholdEvent.orthant([0])
        b = args.event_b or ThresholdEvent.orthant([min(1, args.cov.shape[0] - 1)])
        cases.append(("given", args.cov, a, b))
    rng = np.random.default_rng(args.master_seed)
    for k in range(args.random):
        cases.append((f"random-{k}", *random_fkg_instance(rng)))
    if not cases:
        raise ParameterError("give --cov or --random")
    rows = []
    for k, (name, cov, a, b) in enumerate(cases):
        r = fkg_check(cov, a, b, args.samples, seed=args.master_seed + k, workers=_workers(args))
        rows.append({"case": name, "dim": cov.shape[0], "p_ab": r.p_ab, "p_a": r.p_a, "p_b": r.p_b,
                     "gap": r.gap, "stderr": r.stderr, "verdict": r.verdict})
    return rows, (), all(r["verdict"] == "PASS" for r in rows)


def cmd_replay(args):
    manifest = json.loads(Path(args.manifest).read_text())
    argv = list(manifest["command_line"])[1:]
    original = manifest["parameters"]["out"]
    replay_out = args.out or f"{original}.replay"
    i = argv.index("--out") if "--out" in argv else None
    if i is None:
        argv += ["--out", replay_out]
    else:
        argv[i + 1] = replay_out
    code = main(argv)
    if code:
        return code
    expected = manifest["outputs"][original]
    got = hashlib.sha256(Path(replay_out).read_bytes()).hexdigest()
    print(f"replay {'identical' if got == expected else 'DIFFERS'} sha256={got}")
    return 0 if got == expected else EXIT_CHECK_FAILED


COMMANDS = {
    "sample": cmd_sample, "count": cmd_count, "scaling": cmd_scaling, "kernel": cmd_kernel,
    "constants": cmd_constants, "detcheck": cmd_detcheck, "kacrice": cmd_kacrice,
    "barrier": cmd_barrier, "fkg": cmd_fkg,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        if args.command == "replay":
            return cmd_replay(args)
        result = COMMANDS[args.command](args)
        rows, extra = result[0], result[1]
        ok = result[2] if len(result) > 2 else True
        emit(args, render(rows, run_digest(args), args.format), ["nodalfield", *argv], started, extra)
    except NodalFieldError as exc:
        print(f"error reason={exc.reason} message={exc}", file=sys.stderr)
        return exc.exit_code
    return 0 if ok else EXIT_CHECK_FAILED
