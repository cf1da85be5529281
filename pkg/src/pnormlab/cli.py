"""Command-line front end.

Every subcommand writes one report, ``{"config", "results", "violations",
"version"}`` (plus ``"timestamp"`` unless ``--no-timestamp``), as JSON or as
CSV with the fixed columns in ``CSV_COLUMNS``.

Exit status: 0 on success, 1 when an assertion-mode check finds a
violation, 2 on bad input, 3 on an unexpected internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .blockineq import (
    VIOLATION_TOL,
    Theorem2Instance,
    gaussian_sampler,
    mixed_sampler,
    p_sweep,
    psd_sampler,
    trial_rng,
    violation_record,
)
from .channels import (
    AffineQubitMap,
    MapError,
    QuantumMap,
    affine_from_map,
    amplitude_damping,
    depolarizing,
    diagonal_form,
    identity,
    image_radius,
    nu_p_qubit,
    random_cp,
    transpose,
    werner_holevo,
)
from .experiments import (
    RATIO_TOL,
    channel_block_sampler,
    instance_rng,
    lemma1_chain,
    multiplicativity_gap,
    random_pair,
    random_special_form,
    random_state,
    transpose_demo,
    wh_crossing,
    wh_gap,
)
from .extremes import DecompositionError, decompose_into_extremes
from .matcore import MatrixError, NormOrder, as_order
from .pnorm import OptimizerConfig, nu_p_estimate, product_lower_bound
from .serial import jsonable, matrix_from_json, order_to_json, real_matrix

SEED_ENV = "PNORMLAB_SEED"
EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

CSV_COLUMNS = {
    "nu-p": ["map", "p", "value", "method", "estimate"],
    "tensor-nu-p": ["map", "map2", "p", "value", "product_lower_bound", "ratio"],
    "check-thm2": ["p", "trials", "violations", "min_slack", "max_slack", "equalities"],
    "sweep-thm2": ["p", "trials", "direct_violations", "reverse_violations", "min_slack", "max_slack"],
    "multiplicativity": ["trial", "p", "nu_phi", "nu_omega", "product", "tensor_estimate", "ratio", "verdict"],
    "lemma1-chain": ["trial", "p", "step", "lhs", "rhs", "slack", "holds"],
    "decompose": ["atom", "weight", "kappa", "delta", "residual"],
    "wh-crossing": ["p_star", "p", "entangled", "product", "gap"],
    "transpose-demo": ["p", "ratio", "exact", "estimate"],
    "canonicalize": ["lambda1", "lambda2", "lambda3", "v1", "v2", "v3", "image_radius", "reconstruction_error"],
}


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# map grammar


def _int_arg(params: list[str], default: int) -> int:
    return int(params[0]) if params else default


def _float_arg(params: list[str], name: str) -> float:
    if not params:
        raise InputError(f"{name} needs a parameter, e.g. {name}:0.5")
    return float(params[0])


_BUILTINS = {
    "depolarizing": lambda a: depolarizing(_float_arg(a, "depolarizing")),
    "dep": lambda a: depolarizing(_float_arg(a, "dep")),
    "wh": lambda a: werner_holevo(_int_arg(a, 3)),
    "werner-holevo": lambda a: werner_holevo(_int_arg(a, 3)),
    "transpose": lambda a: transpose(_int_arg(a, 2)),
    "ad": lambda a: amplitude_damping(_float_arg(a, "ad")),
    "amplitude-damping": lambda a: amplitude_damping(_float_arg(a, "amplitude-damping")),
    "identity": lambda a: identity(_int_arg(a, 2)),
    "id": lambda a: identity(_int_arg(a, 2)),
}


def map_from_json(data: dict) -> QuantumMap | AffineQubitMap:
    """Build a map from ``{"kind": "kraus" | "superop" | "affine", ...}``."""
    if not isinstance(data, dict) or "kind" not in data:
        raise InputError('map JSON must be an object with a "kind" field')
    kind = data["kind"]
    try:
        if kind == "kraus":
            ops = [matrix_from_json(k) for k in data["ops"]]
            if "d" in data and any(k.shape[1] != int(data["d"]) for k in ops):
                raise InputError("Kraus operators do not match the declared dimension d")
            return QuantumMap.from_kraus(ops)
        if kind == "superop":
            return QuantumMap.from_superop(matrix_from_json(data["matrix"]), int(data["d_in"]), int(data["d_out"]))
        if kind == "affine":
            return AffineQubitMap(real_matrix(data["A"], (3, 3)), real_matrix(data["v"], (3,)))
    except KeyError as exc:
        raise InputError(f"map JSON of kind {kind!r} is missing field {exc}") from None
    raise InputError(f"unknown map kind {kind!r}")


def parse_map(spec: str) -> QuantumMap | AffineQubitMap:
    """``name:params`` for built-ins, ``@path.json`` for explicit forms."""
    if spec.startswith("@"):
        with open(spec[1:], encoding="utf-8") as fh:
            return map_from_json(json.load(fh))
    name, *params = spec.split(":")
    params = [x for part in params for x in part.split(",") if x]
    if name not in _BUILTINS:
        raise InputError(f"unknown map {name!r}; built-ins are {', '.join(sorted(_BUILTINS))}")
    return _BUILTINS[name](params)


def as_quantum(m) -> QuantumMap:
    return m.to_map() if isinstance(m, AffineQubitMap) else m


def as_affine(m) -> AffineQubitMap:
    if isinstance(m, AffineQubitMap):
        return m
    if m.d_in != 2 or m.d_out != 2:
        raise InputError("this command needs a qubit map (d_in = d_out = 2)")
    return affine_from_map(m)


def qubit_pp_tp(m) -> AffineQubitMap | None:
    """The affine form when ``m`` is a positivity-preserving trace-preserving qubit map."""
    try:
        a = as_affine(m)
    except (InputError, MapError):
        return None
    return a if image_radius(a)[0] <= 1.0 + 1e-10 else None


# ---------------------------------------------------------------------------
# parallel map with ordered results


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


# ---------------------------------------------------------------------------
# subcommands; each returns (results, violations)


def _cfg(args, restarts=None) -> OptimizerConfig:
    return OptimizerConfig(restarts=args.restarts or restarts or 64, seed=args.seed)


def _proven(p: NormOrder) -> bool:
    return p.p == 2.0 or p.p >= 4.0


def cmd_nu_p(args):
    m = parse_map(args.map)
    results = []
    for p in args.p:
        est = nu_p_estimate(as_quantum(m), p, _cfg(args))
        row = {"map": args.map, "p": order_to_json(p), "estimate": est.value,
               "restarts_agreeing": est.restarts_agreeing}
        qa = qubit_pp_tp(m)
        if qa is not None:
            qn = nu_p_qubit(qa, p)
            row.update(value=qn.value, method="closed-form", bloch=qn.bloch, radius=qn.radius)
        else:
            row.update(value=est.value, method="estimate", argmax=est.argmax)
        results.append(row)
    return results, []


def cmd_tensor_nu_p(args):
    m1, m2 = as_quantum(parse_map(args.map)), as_quantum(parse_map(args.map2))
    results = []
    for p in args.p:
        cfg = _cfg(args, 128)
        pb = product_lower_bound(m1, m2, p, cfg)
        est = nu_p_estimate(m1 @ m2, p, cfg, starts=[pb.argmax])
        results.append({"map": args.map, "map2": args.map2, "p": order_to_json(p), "value": est.value,
                        "product_lower_bound": pb.value, "ratio": est.value / pb.value,
                        "restarts_agreeing": est.restarts_agreeing})
    return results, []


def _block_sampler(name: str, dims):
    if name == "gaussian":
        return gaussian_sampler(dims)
    if name == "psd":
        return psd_sampler(dims)
    if name == "mixed":
        return mixed_sampler([gaussian_sampler(dims), psd_sampler(dims)])
    if name == "channel":
        return channel_block_sampler()
    raise InputError(f"unknown sampler {name!r}")


def cmd_check_thm2(args):
    for p in args.p:
        if not _proven(p):
            raise InputError(f"check-thm2 asserts the inequality, so p must be 2 or >= 4 (got {p}); "
                             "use sweep-thm2 to explore other p")
    sampler = _block_sampler(args.sampler, tuple(args.dims))
    rows = {p: {"p": order_to_json(p), "trials": 0, "violations": 0, "min_slack": None,
                "max_slack": None, "equalities": None} for p in args.p}
    violations = []
    for t in range(args.trials):
        b = sampler(trial_rng(args.seed, t))
        inst = Theorem2Instance(b)
        for p in args.p:
            rep = inst.report(p, args.tol)
            row = rows[p]
            row["trials"] += 1
            row["min_slack"] = rep.slack if row["min_slack"] is None else min(row["min_slack"], rep.slack)
            row["max_slack"] = rep.slack if row["max_slack"] is None else max(row["max_slack"], rep.slack)
            if p.p == 2.0:
                row["equalities"] = (row["equalities"] or 0) + int(abs(rep.slack) <= args.eq_tol)
            if not rep.holds:
                row["violations"] += 1
                violations.append(violation_record(b, rep, args.seed, t))
            elif p.p == 2.0 and abs(rep.slack) > args.eq_tol:
                violations.append(violation_record(b, rep, args.seed, t))
    return list(rows.values()), violations


def cmd_sweep_thm2(args):
    sampler = _block_sampler(args.sampler, tuple(args.dims))
    stats = p_sweep(sampler, args.p, args.trials, args.seed, args.tol, shrink=not args.no_shrink)
    return [s.to_dict() for s in stats], []


def _mult_task(job):
    seed, i, ps, dims, restarts, mode = job
    phi, omega = random_pair(instance_rng(seed, i), dims)
    out = []
    for p in ps:
        rep = multiplicativity_gap(phi, omega, p, OptimizerConfig(restarts=restarts, seed=seed), mode=mode)
        out.append({"trial": i, "d": omega.d_in, **rep.to_dict()})
    return out


def _replay_reports(path: str):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    rows = data.get("results", data) if isinstance(data, dict) else data
    if not isinstance(rows, list):
        raise InputError("report must be a list of records or an object with a 'results' list")
    results, violations = [], []
    for k, row in enumerate(rows):
        try:
            ratio = float(row["tensor_estimate"]) / float(row["product"])
        except (KeyError, TypeError, ZeroDivisionError):
            raise InputError(f"record {k} lacks numeric tensor_estimate/product") from None
        verdict = "violation" if ratio > 1 + RATIO_TOL else "consistent"
        rec = {**row, "ratio": ratio, "verdict": verdict}
        results.append(rec)
        if verdict == "violation":
            violations.append(rec)
    return results, violations


def cmd_multiplicativity(args):
    if args.from_report:
        return _replay_reports(args.from_report)
    mode = "explore" if args.explore else "assert"
    if mode == "assert":
        for p in args.p:
            if not _proven(p):
                raise InputError(f"assertion mode needs p = 2 or p >= 4 (got {p}); pass --explore")
    restarts = args.restarts or 128
    if args.map:
        phi = as_affine(parse_map(args.map))
        omega = as_quantum(parse_map(args.map2 or "identity:2"))
        results = [{"trial": 0, "d": omega.d_in,
                    **multiplicativity_gap(phi, omega, p, OptimizerConfig(restarts=restarts, seed=args.seed),
                                           mode=mode).to_dict()} for p in args.p]
    else:
        jobs = [(args.seed, i, tuple(args.p), tuple(args.dims), restarts, mode) for i in range(args.trials)]
        results = [r for chunk in _pmap(_mult_task, jobs, args.threads) for r in chunk]
    bad = [r for r in results if r["verdict"] == "violation" or r["ratio"] < 1 - RATIO_TOL]
    return results, bad if mode == "assert" else []


def _chain_task(job):
    seed, i, ps, tol = job
    rng = instance_rng(seed, i)
    phi = random_special_form(rng)
    d = int(rng.choice([2, 3]))
    omega = random_cp(d, int(rng.integers(1, d * d + 1)), rng)
    rho = random_state(2 * d, rng, rank=int(rng.integers(1, 2 * d + 1)))
    out = []
    for p in ps:
        nu_omega = nu_p_estimate(omega, p, OptimizerConfig(seed=seed)).value
        for s in lemma1_chain(phi, omega, rho, p, nu_omega=nu_omega, tol=tol):
            out.append({"trial": i, "p": order_to_json(p), "step": s.name, "lhs": s.lhs, "rhs": s.rhs,
                        "slack": s.slack, "holds": s.holds})
    return out


def cmd_lemma1_chain(args):
    for p in args.p:
        if not _proven(p):
            raise InputError(f"the chain is checked for p = 2 or p >= 4 (got {p})")
    jobs = [(args.seed, i, tuple(args.p), args.tol) for i in range(args.trials)]
    results = [r for chunk in _pmap(_chain_task, jobs, args.threads) for r in chunk]
    return results, [r for r in results if not r["holds"]]


def cmd_decompose(args):
    m = as_affine(parse_map(args.map))
    r = args.r if args.r is not None else image_radius(m)[0]
    try:
        dec = decompose_into_extremes(m, r, tol=args.tol, seed=args.seed)
    except DecompositionError as exc:
        raise InputError(str(exc)) from None
    results = [{"atom": k, "weight": float(w), "kappa": e.kappa, "delta": e.delta, "residual": dec.residual,
                "extreme": e.to_dict()} for k, (w, e) in enumerate(zip(dec.weights, dec.atoms))]
    return results, []


def cmd_wh_crossing(args):
    cr = wh_crossing(args.d, tuple(args.bracket), args.tol)
    results = [{"p_star": cr.p_star, "lo": cr.lo, "hi": cr.hi, "spectrum": cr.spectrum}]
    for p in (cr.lo, cr.hi, *args.bracket):
        gap = wh_gap(p, args.d, cr.spectrum)
        prod = 2.0 ** (2.0 * (1.0 - p) / p)
        results.append({"p": p, "entangled": gap + prod, "product": prod, "gap": gap})
    return results, []


def cmd_transpose_demo(args):
    return [transpose_demo(p, _cfg(args, 128)).to_dict() for p in args.p], []


def cmd_canonicalize(args):
    m = as_affine(parse_map(args.map))
    df = diagonal_form(m)
    rec = df.reconstruct()
    err = float(max(np.max(np.abs(rec.A - m.A)), np.max(np.abs(rec.v - m.v))))
    row = {f"lambda{k + 1}": float(df.lambdas[k]) for k in range(3)}
    row.update({f"v{k + 1}": float(df.v[k]) for k in range(3)})
    row.update(rot_domain=df.rot_domain, rot_range=df.rot_range, u_domain=df.u_domain, u_range=df.u_range,
               reconstruction_error=err, image_radius=image_radius(m)[0])
    results = [row]
    return results, []


COMMANDS = {
    "nu-p": cmd_nu_p,
    "tensor-nu-p": cmd_tensor_nu_p,
    "check-thm2": cmd_check_thm2,
    "sweep-thm2": cmd_sweep_thm2,
    "multiplicativity": cmd_multiplicativity,
    "lemma1-chain": cmd_lemma1_chain,
    "decompose": cmd_decompose,
    "wh-crossing": cmd_wh_crossing,
    "transpose-demo": cmd_transpose_demo,
    "canonicalize": cmd_canonicalize,
}


# ---------------------------------------------------------------------------
# argument parsing


def _order(text: str) -> NormOrder:
    try:
        return as_order(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=None, help=f"RNG seed (default: ${SEED_ENV} or 0)")
    common.add_argument("--threads", type=int, default=None, help="worker processes (default: CPU count)")
    common.add_argument("--format", choices=["json", "csv"], default="json")
    common.add_argument("--output", "-o", default=None, help="write the report here instead of stdout")
    common.add_argument("--no-timestamp", action="store_true")
    common.add_argument("--restarts", type=int, default=None, help="optimizer restarts")

    ap = argparse.ArgumentParser(prog="pnormlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help_, p_default=None):
        sp = sub.add_parser(name, parents=[common], help=help_)
        if p_default is not None:
            sp.add_argument("--p", type=_order, nargs="+", default=p_default)
        return sp

    sp = add("nu-p", "maximal output p-norm of one map", [as_order(2)])
    sp.add_argument("--map", required=True)

    sp = add("tensor-nu-p", "maximal output p-norm of a tensor product", [as_order(2)])
    sp.add_argument("--map", required=True)
    sp.add_argument("--map2", required=True)

    for name, help_ in (("check-thm2", "assert the block inequality on random instances"),
                        ("sweep-thm2", "violation statistics of the block inequality over p")):
        default = [as_order(p) for p in (2, 4, 5, 8, "inf")] if name == "check-thm2" else \
            [as_order(p) for p in (1, 1.25, 1.5, 1.75, 2, 2.5, 3, 3.5, 4, 6)]
        sp = add(name, help_, default)
        sp.add_argument("--trials", type=int, default=1000)
        sp.add_argument("--dims", type=int, nargs=2, default=[1, 8], metavar=("LO", "HI"))
        sp.add_argument("--sampler", choices=["gaussian", "psd", "mixed", "channel"], default="mixed")
        sp.add_argument("--tol", type=float, default=VIOLATION_TOL)
        if name == "check-thm2":
            sp.add_argument("--eq-tol", type=float, default=1e-10, help="equality tolerance at p = 2")
        else:
            sp.add_argument("--no-shrink", action="store_true")

    sp = add("multiplicativity", "compare nu_p of a tensor product with the product of nu_p",
             [as_order(p) for p in (2, 4, 6)])
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--dims", type=int, nargs="+", default=[2, 3])
    sp.add_argument("--map", help="qubit map (random pairs when omitted)")
    sp.add_argument("--map2", help="second factor (default identity:2)")
    sp.add_argument("--explore", action="store_true", help="allow any p >= 1 and never fail")
    sp.add_argument("--from-report", help="re-evaluate verdicts of a saved report")

    sp = add("lemma1-chain", "step-by-step bounds on random special-form instances",
             [as_order(p) for p in (2, 4, 6)])
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--tol", type=float, default=1e-9)

    sp = add("decompose", "convex decomposition into extreme maps")
    sp.add_argument("--map", required=True)
    sp.add_argument("--r", type=float, default=None, help="scale (default: the image radius)")
    sp.add_argument("--tol", type=float, default=1e-6)

    sp = add("wh-crossing", "p where the entangled witness beats the product value")
    sp.add_argument("--d", type=int, default=3)
    sp.add_argument("--bracket", type=float, nargs=2, default=[4.0, 5.5])
    sp.add_argument("--tol", type=float, default=0.005)

    add("transpose-demo", "multiplicativity ratio of transpose tensor identity",
        [as_order(p) for p in (1.5, 2, 4)])

    sp = add("canonicalize", "diagonal form of a qubit map")
    sp.add_argument("--map", required=True)
    return ap


def resolve_seed(args, environ=None) -> int:
    environ = os.environ if environ is None else environ
    if args.seed is not None:
        return args.seed
    if environ.get(SEED_ENV):
        return _seed(environ[SEED_ENV])
    return 0


def _config_echo(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in {"output", "format", "no_timestamp", "threads"}}
    if "p" in cfg:
        cfg["p"] = [order_to_json(p) for p in cfg["p"]]
    return jsonable(cfg)


def render(report: dict, fmt: str, command: str) -> str:
    if fmt == "json":
        return json.dumps(jsonable(report), sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS[command], extrasaction="ignore", restval="",
                       lineterminator="\n")
    w.writeheader()
    for row in report["results"]:
        w.writerow({k: (json.dumps(jsonable(v)) if isinstance(v, (list, dict, np.ndarray)) else jsonable(v))
                    for k, v in row.items()})
    return buf.getvalue()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.seed = resolve_seed(args)
    except argparse.ArgumentTypeError as exc:
        print(f"error: {SEED_ENV}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.threads is None:
        args.threads = os.cpu_count() or 1
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_INPUT

    try:
        results, violations = COMMANDS[args.command](args)
    except (InputError, MapError, MatrixError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # keep exit 1 reserved for violations
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    report = {"config": _config_echo(args), "results": results, "violations": violations,
              "version": __version__}
    if not args.no_timestamp:
        report["timestamp"] = datetime.now(timezone.utc).isoformat()
    text = render(report, args.format, args.command)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_VIOLATION if violations else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
