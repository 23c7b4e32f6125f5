"""Command-line front end.

Every command prints its table (CSV) or report (JSON) to stdout; with
``--out DIR`` the same bytes are also written to files inside ``DIR`` and
nowhere else.  Options can come from a ``key = value`` file passed with
``--config``; explicit flags override the file.  ``CIRCLEBREAK_PRECISION`` sets
the default number of significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
from mpmath.ctx_mp_python import _mpf

from .circle import make_break_map
from .conjugacy import ExperimentConfig, build_conjugacy, rigidity_experiment
from .constants import ledger_for
from .distortion import XI_CSV_HEADER, Interval, xi_orbit
from .errors import CircleBreakError, PrecisionExhausted, ValidationError
from .partition import PARTITION_CSV_HEADER, dynamical_partition, fit_decay, partition_stats
from .renorm import MobiusPairParams, fit_fractional_linear, mobius_conjugacy_probe, renormalize
from .rotation import RotationTarget, rotation_cf, tune_delta_report

SCHEMA_VERSION = 1
PRECISION_ENV = "CIRCLEBREAK_PRECISION"
COMMANDS = ("rotnum", "tune", "partition", "renorm", "xi", "conjugacy", "experiment", "mobius-probe")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, _mpf):
        # keep every digit of a high-precision value
        return str(x)
    return x


def _levels(text: str):
    try:
        lo, hi = (int(s) for s in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("levels must look like 8:16") from None
    if not 1 <= lo <= hi:
        raise argparse.ArgumentTypeError("need 1 <= lo <= hi")
    return lo, hi


def _default_precision() -> int:
    raw = os.environ.get(PRECISION_ENV)
    if raw is None:
        return 16
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"{PRECISION_ENV} must be an integer") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circlebreak", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("--config", help="key = value file with option defaults")
    sub = parser.add_subparsers(dest="command", required=True)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **k: _add(*a, allow_abbrev=False, **k)

    def common(p, map_args=True):
        p.add_argument("--out", help="output directory")
        p.add_argument("--precision", type=int, default=None, help="significant digits (>= 15)")
        if map_args:
            p.add_argument("--c", type=float, required=True, help="break size (> 0)")
            p.add_argument("--eps", type=float, default=0.0, help="nonlinearity of the smooth factor (0 gives fractional-linear pieces)")

    def target(p, required=False):
        g = p.add_mutually_exclusive_group(required=required)
        g.add_argument("--target", help="golden, silver, a quotient pattern or a decimal")
        g.add_argument("--quotients", help="repeating quotient pattern, e.g. 1,1,10")
        g.add_argument("--rho", type=float, help="rotation number in (0, 1)")

    p = sub.add_parser("rotnum", help="continued fraction of the rotation number")
    common(p)
    p.add_argument("--delta", type=float, required=True, help="translation parameter")
    p.add_argument("--depth", type=int, default=10, help="number of partial quotients")

    p = sub.add_parser("tune", help="translation parameter for a target rotation number")
    common(p)
    target(p, required=True)
    p.add_argument("--depth", type=int, default=12, help="quotients the tuned map must reproduce")

    for name, helptext in (("partition", "dynamical partition statistics"),
                           ("renorm", "renormalization pairs and their fractional-linear fits"),
                           ("xi", "distortion sums along the orbit of the interval at the break point")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--delta", type=float, help="translation parameter (instead of a target)")
        target(p)
        p.add_argument("--levels", type=_levels, default=(6, 16), help="level range lo:hi")

    p = sub.add_parser("conjugacy", help="orbit-matched conjugacy table")
    common(p)
    p.add_argument("--g-eps", type=float, default=0.0, help="eps of the comparison map")
    target(p)
    p.add_argument("--depth", type=int, default=14, help="continued-fraction depth of the matched orbits")

    p = sub.add_parser("experiment", help="full rigidity experiment")
    common(p)
    target(p)
    p.add_argument("--levels", type=_levels, default=(8, 16), help="level range lo:hi")
    p.add_argument("--g-eps", type=float, default=0.0, help="eps of the comparison map")
    p.add_argument("--alpha-gate", type=float, default=0.95, help="pass threshold for alphaHat")
    p.add_argument("--n0", type=int, default=6, help="first level treated as asymptotic")

    p = sub.add_parser("mobius-probe", help="conjugacy probe between two fractional-linear pairs")
    common(p, map_args=False)
    for k in ("alpha1", "v1", "alpha2", "v2"):
        p.add_argument(f"--{k}", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    return parser


def read_config_file(path) -> dict:
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"bad config line: {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("_", "-")] = v
    return out


def write_config_file(path, echo: dict):
    lines = [f"{k} = {v}" for k, v in echo.items() if v is not None]
    Path(path).write_text("\n".join(lines) + "\n")


def _expand_config(argv):
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return rest
    values = read_config_file(known.config)
    command = values.pop("command", None)
    if rest and rest[0] in COMMANDS:
        command, rest = rest[0], rest[1:]
    if command is None:
        raise ValidationError("no command given")
    tokens = [command]
    for k, v in values.items():
        if v.lower() == "true":
            tokens.append(f"--{k}")
        else:
            tokens += [f"--{k}", v]
    return tokens + rest


def config_echo(args) -> dict:
    """Options as ``key -> string`` pairs that re-parse to the same namespace."""
    echo = {"command": args.command}
    for k, v in sorted(vars(args).items()):
        if k in ("command", "config", "out") or v is None:
            continue
        key = k.replace("_", "-")
        if key == "levels":
            v = f"{v[0]}:{v[1]}"
        echo[key] = v if isinstance(v, str) else repr(v) if isinstance(v, float) else str(v)
    return echo


def _target(args) -> RotationTarget | None:
    if getattr(args, "quotients", None):
        return RotationTarget.from_quotients([int(s) for s in args.quotients.split(",")], name=args.quotients)
    if getattr(args, "rho", None) is not None:
        return RotationTarget.from_real(args.rho)
    if getattr(args, "target", None):
        return RotationTarget.parse(args.target)
    return None


def _validate(args):
    if args.precision is None:
        args.precision = _default_precision()
    if args.precision < 15:
        raise ValidationError("precision must be >= 15 digits")
    for k, v in vars(args).items():
        if isinstance(v, float) and not math.isfinite(v):
            raise ValidationError(f"{k} must be finite")
    if getattr(args, "c", None) is not None and not args.c > 0:
        raise ValidationError("c must be positive")
    if args.command == "experiment" and args.c == 1:
        raise ValidationError("experiment requires c != 1")
    for k in ("depth",):
        if getattr(args, k, None) is not None and getattr(args, k) < 1:
            raise ValidationError(f"{k} must be >= 1")


def _map_for(args, depth):
    """Break map from ``--delta`` or by tuning to the target; also the reference continued fraction."""
    target = _target(args)
    if args.delta is not None:
        fmap = make_break_map(args.c, args.eps, args.delta, precision_digits=args.precision)
        cf = rotation_cf(fmap, depth)
        return fmap, cf
    if target is None:
        raise ValidationError("give --delta or a rotation target")
    res = tune_delta_report(args.c, args.eps, target, depth)
    fmap = make_break_map(args.c, args.eps, res.delta, precision_digits=args.precision)
    cf = target.cf(depth + 8)
    return fmap, cf


def _ledger(c):
    try:
        return ledger_for(c).to_dict()
    except ValidationError:
        return None


def _report(args, result: dict, constants=None) -> str:
    doc = {
        "schemaVersion": SCHEMA_VERSION,
        "command": args.command,
        "config": config_echo(args),
        "constants": constants if constants is not None else _ledger(getattr(args, "c", 1.0)),
        "result": result,
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def cmd_rotnum(args):
    fmap = make_break_map(args.c, args.eps, args.delta, precision_digits=args.precision)
    cf = rotation_cf(fmap, args.depth)
    rows = [(n, cf.a(n), cf.p(n), cf.q(n), cf.mu(n)) for n in range(1, cf.depth + 1)]
    return {"rotnum.csv": to_csv(["n", "a_n", "p_n", "q_n", "mu_n"], rows)}


def cmd_tune(args):
    res = tune_delta_report(args.c, args.eps, _target(args), args.depth, precision_digits=args.precision)
    cf = rotation_cf(make_break_map(args.c, args.eps, res.delta, precision_digits=args.precision), args.depth)
    result = {"delta": res.delta, "depthReached": res.depth, "quotients": list(cf.quotients)}
    return {"tune.json": _report(args, result)}


def cmd_partition(args):
    lo, hi = args.levels
    fmap, cf = _map_for(args, hi + 1)
    stats = []
    for n in range(lo, hi + 1):
        part = dynamical_partition(fmap, cf, n)
        part.assert_valid()
        stats.append(partition_stats(part, cf))
    files = {"partition.csv": to_csv(PARTITION_CSV_HEADER, [s.csv_row() for s in stats])}
    if len(stats) >= 6:
        fit = fit_decay(stats)
        files["partition.json"] = _report(args, {"decayFit": fit.__dict__},
                                          constants=_ledger_or_none(args.c, fit))
    return files


def _ledger_or_none(c, fit=None):
    try:
        return ledger_for(c, fit).to_dict()
    except ValidationError:
        return None


def cmd_renorm(args):
    lo, hi = args.levels
    fmap, cf = _map_for(args, hi + 1)
    rows = []
    for n in range(lo, hi + 1):
        pair = renormalize(fmap, cf, n)
        fit = fit_fractional_linear(pair)
        rows.append((n, pair.alpha, fit.v, fit.dist_c0, fit.dist_c2, pair.checks()["breakProductResidual"], fit.in_uc))
    header = ["n", "alpha_n", "vHat", "distC0", "distC2", "breakProductResidual", "inUc"]
    return {"renorm.csv": to_csv(header, rows)}


def cmd_xi(args):
    # J is the level-(n-1) interval at the break point; its first q_n images are the old intervals of level n
    lo, hi = args.levels
    fmap, cf = _map_for(args, hi + 1)
    rows = []
    for n in range(lo, hi + 1):
        part = dynamical_partition(fmap, cf, n)
        a = part.old_left[0]
        J = Interval(a, a + part.old_len[0])
        rows.append([n, *xi_orbit(fmap, J, cf.q(n)).csv_row()])
    return {"xi.csv": to_csv(["level", *XI_CSV_HEADER], rows)}


def cmd_conjugacy(args):
    target = _target(args) or RotationTarget.golden()
    f_res = tune_delta_report(args.c, args.eps, target, args.depth + 1)
    g_res = tune_delta_report(args.c, args.g_eps, target, args.depth + 1)
    f = make_break_map(args.c, args.eps, f_res.delta, precision_digits=args.precision)
    g = make_break_map(args.c, args.g_eps, g_res.delta, precision_digits=args.precision)
    table = build_conjugacy(f, g, args.depth, cf=target.cf(args.depth + 8))
    rows = list(zip(np.asarray(table.f_points, dtype=float), np.asarray(table.g_points, dtype=float)))
    result = {"points": len(rows), "depth": table.depth, "orderIsomorphic": True,
              "fDelta": f.delta, "gDelta": g.delta, "maps": list(table.source_maps)}
    return {"conjugacy.csv": to_csv(["f_point", "g_point"], rows), "conjugacy.json": _report(args, result)}


def cmd_experiment(args):
    cfg = ExperimentConfig(
        c=args.c, eps=args.eps, target=_target(args) or RotationTarget.golden(),
        n_min=args.levels[0], n_max=args.levels[1], precision_digits=args.precision,
        alpha_gate=args.alpha_gate, n0=args.n0, g_eps=args.g_eps,
    )
    rep = rigidity_experiment(cfg)
    rows = [(r["n"], r["q"], r["qSumSquares"], r["lowerBound"], r["jnSumSquares"], r["jnOverSum"])
            for r in rep.lower_chain]
    header = ["n", "q_n", "qSumSquares", "lowerBound", "jnSumSquares", "jnOverSum"]
    result = {_camel(k): v for k, v in rep.to_dict().items()}
    constants = result.pop("constants")
    return {"experiment.json": _report(args, result, constants=constants), "experiment.csv": to_csv(header, rows)}


def _camel(name: str) -> str:
    head, *rest = name.split("_")
    return head + "".join(w.capitalize() for w in rest)


def cmd_mobius_probe(args):
    t1 = MobiusPairParams(args.alpha1, args.v1, args.c)
    t2 = MobiusPairParams(args.alpha2, args.v2, args.c)
    res = mobius_conjugacy_probe(t1, t2)
    result = {"conjugate": res.conjugate, "residual": res.residual, "u": res.u,
              "matrix": [list(r) for r in res.matrix.m] if res.matrix else None}
    return {"mobius-probe.json": _report(args, result, constants=_ledger_or_none(args.c))}


HANDLERS = {
    "rotnum": cmd_rotnum,
    "tune": cmd_tune,
    "partition": cmd_partition,
    "renorm": cmd_renorm,
    "xi": cmd_xi,
    "conjugacy": cmd_conjugacy,
    "experiment": cmd_experiment,
    "mobius-probe": cmd_mobius_probe,
}


def parse(argv) -> argparse.Namespace:
    return build_parser().parse_args(_expand_config(list(argv)))


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        try:
            args = parse(argv)
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from None
        _validate(args)
        files = HANDLERS[args.command](args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except ValidationError as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    except PrecisionExhausted as exc:
        level = f" at level {exc.level}" if exc.level is not None else ""
        print(f"precision exhausted{level}: {exc} (raise --precision)", file=stderr)
        return 3
    except CircleBreakError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=stderr)
        return 1
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text)
    for text in files.values():
        stdout.write(text)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
