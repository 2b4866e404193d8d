"""Command-line front end: grid sweeps to CSV, raw simulation dumps, MC cross-validation.

Every numeric flag accepts a single value, a comma list, or an inclusive
``start:stop:steps`` grid. Rows are the Cartesian product of the grids in
header order. A ``key=value`` file passed with ``--config`` supplies any flag
not given on the command line (keys as the long flag names, without dashes).

Exit codes: 0 success, 1 validation mismatch, 2 invalid input, 3 numerical
failure, 4 series truncation under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import sys
import warnings
from pathlib import Path

import numpy as np

from .errors import (ExcursionRiskError, InvalidParameterError, MaxEventsExceeded,
                     NumericalFailure, ResolutionTooCoarseError,
                     TruncationWarning)
from .kernels import deficit_scale_expectation
from .laws import (ExcursionLawContext, joint_cdf_inf, longest_cdf_at_first_passage,
                   longest_cdf_inf, parisian_ruin_prob, range_cdf, ruin_prob,
                   shortest_tail_inf)
from .model import ClParams, first_passage_laplace
from .montecarlo import SimConfig, simulate
from .parisian import (NearMaxSpec, near_max_mean, near_max_pgf, occupation_longest_joint_cdf,
                       peak_to_sum_ruin_prob)
from .poisson_obs import (PoissonObsContext, longest_cdf_at_poisson_passage,
                          poisson_passage_before_ruin, ruin_deficit_law_before_poisson_passage)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_TRUNCATED = 4

# one grid flag per domain symbol; dest -> (flag, help)
GRID_FLAGS = {
    "x": ("--x", "initial surplus"),
    "r": ("--r", "duration threshold"),
    "u": ("--u", "shortest-excursion threshold"),
    "v": ("--v", "longest-excursion threshold"),
    "l": ("--l", "occupation-time threshold"),
    "b": ("--b", "passage level"),
    "obs_rate": ("--obs-rate", "Poisson observation intensity"),
    "a": ("--a", "near-maximum window"),
    "s": ("--s", "p.g.f. argument in [0, 1)"),
    "ratio_alpha": ("--ratio-alpha", "peak-to-sum ratio in (0, 1]"),
}

# subcommand -> (grid axes in row order, required axes, value columns)
SCHEMAS = {
    "longest": (("x", "r"), ("r",), ("longest_cdf",)),
    "parisian": (("x", "r"), ("r",), ("parisian_ruin_prob",)),
    "shortest": (("x", "r"), ("r",), ("shortest_tail",)),
    "joint": (("x", "u", "v"), ("u", "v"), ("joint_cdf",)),
    "range": (("x", "r"), ("r",), ("range_cdf",)),
    "occupation-joint": (("x", "l", "r"), ("l", "r"), ("occupation_joint_cdf",)),
    "peak-to-sum": (("x", "ratio_alpha", "r"), ("ratio_alpha", "r"), ("peak_to_sum_prob",)),
    "near-max": (("x", "a"), ("a",), ("near_max_mean",)),
    "poisson": (("x", "b", "obs_rate", "r"), ("b", "obs_rate", "r"),
                ("passage_before_ruin", "ruin_before_passage", "longest_cdf")),
}
PASSAGE_COLUMNS = ("longest_cdf_at_passage",)
PGF_COLUMNS = ("near_max_pgf",)

DEFAULTS = {"x": "0", "precision": 10, "seed": 0, "n_paths": 100_000}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INVALID)


def parse_grid(text: str, name: str = "value") -> np.ndarray:
    """``1.5``, ``0.5,1,2`` or ``start:stop:steps`` (inclusive endpoints)."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError
            start, stop = float(parts[0]), float(parts[1])
            steps = int(parts[2])
            if steps < 1:
                raise InvalidParameterError(f"{name}: steps must be >= 1")
            if steps == 1:
                if start != stop:
                    raise InvalidParameterError(f"{name}: one step needs start == stop")
                return np.array([start])
            return np.linspace(start, stop, steps)
        vals = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise InvalidParameterError(f"cannot parse {name} grid {text!r}") from None
    if vals.size == 0:
        raise InvalidParameterError(f"{name} grid is empty")
    return vals


def read_config(path) -> dict:
    """key=value lines; blank lines and ``#`` comments ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameterError(f"{path}:{lineno}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="excursion-risk",
                     description="Negative-excursion laws of the Cramer-Lundberg model.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    commands = list(SCHEMAS) + ["simulate", "validate"]
    for name in commands:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value file; command-line flags win")
        for dest in ("c", "eta", "alpha"):
            p.add_argument(f"--{dest}", type=float)
        for dest, (flag, text) in GRID_FLAGS.items():
            p.add_argument(flag, dest=dest, help=text)
        p.add_argument("--n-max", dest="n_max", type=int, help="series terms (default: tail < 1e-10)")
        p.add_argument("--precision", type=int, help="significant digits, 4..17 (default 10)")
        p.add_argument("--strict", action="store_true", default=None,
                       help="treat series truncation warnings as errors (exit 4)")
        p.add_argument("--output", "-o", help="CSV path (default: standard output)")
        p.add_argument("--n-paths", dest="n_paths", type=int)
        p.add_argument("--seed", type=int)
    return parser


def _merge_config(args) -> None:
    if args.config:
        for key, value in read_config(args.config).items():
            if not hasattr(args, key) or key in ("command", "config"):
                raise InvalidParameterError(f"unknown config key {key!r}")
            if getattr(args, key) is None:
                setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if getattr(args, key) is None:
            setattr(args, key, value)
    for key in ("c", "eta", "alpha"):
        if getattr(args, key) is None:
            raise InvalidParameterError(f"--{key} is required")
        setattr(args, key, float(getattr(args, key)))
    args.precision = int(args.precision)
    if not 4 <= args.precision <= 17:
        raise InvalidParameterError("precision must lie in [4, 17]")
    args.seed = int(args.seed)
    args.n_paths = int(args.n_paths)
    if args.n_max is not None:
        args.n_max = int(args.n_max)
    args.strict = str(args.strict).lower() in ("1", "true", "yes", "on")


def _fmt(value, precision: int) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), f".{precision}g")


def _write(rows, header, args) -> None:
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v, args.precision) for v in row])
    finally:
        if args.output:
            fh.close()


def _grids(args, axes, required):
    out = []
    for name in axes:
        raw = getattr(args, name)
        if raw is None:
            if name in required:
                raise InvalidParameterError(f"{GRID_FLAGS[name][0]} is required")
            raw = DEFAULTS[name]
        out.append(parse_grid(raw, name))
    return out


def _evaluate(args, params):
    """Rows and header of a closed-form sweep."""
    cmd = args.command
    axes, required, columns = SCHEMAS[cmd]
    if cmd == "longest" and args.b is not None:
        axes, columns = ("x", "b", "r"), PASSAGE_COLUMNS
    if cmd == "near-max" and args.s is not None:
        axes, columns = ("x", "a", "s"), PGF_COLUMNS
    grids = _grids(args, axes, required)
    contexts = {}
    rows = []
    for point in itertools.product(*grids):
        kw = dict(zip(axes, point))
        x = kw["x"]
        ctx = contexts.get(x)
        if ctx is None:
            base = next(iter(contexts.values()), None)
            ctx = contexts[x] = base.at(x) if base else ExcursionLawContext(params, x)
        if cmd == "longest" and "b" in kw:
            vals = [longest_cdf_at_first_passage(ctx, kw["b"], kw["r"])]
        elif cmd == "longest":
            vals = [longest_cdf_inf(ctx, kw["r"])]
        elif cmd == "parisian":
            vals = [parisian_ruin_prob(ctx, kw["r"])]
        elif cmd == "shortest":
            vals = [shortest_tail_inf(ctx, kw["r"])]
        elif cmd == "joint":
            if kw["u"] > kw["v"]:
                continue
            vals = [joint_cdf_inf(ctx, kw["u"], kw["v"])]
        elif cmd == "range":
            vals = [range_cdf(ctx, kw["r"], args.n_max)]
        elif cmd == "occupation-joint":
            vals = [occupation_longest_joint_cdf(ctx, kw["l"], kw["r"], args.n_max)]
        elif cmd == "peak-to-sum":
            vals = [peak_to_sum_ruin_prob(ctx, kw["ratio_alpha"], kw["r"], args.n_max)]
        elif cmd == "near-max" and "s" in kw:
            vals = [near_max_pgf(ctx, NearMaxSpec(kw["a"], x), kw["s"])]
        elif cmd == "near-max":
            vals = [near_max_mean(ctx, NearMaxSpec(kw["a"], x))]
        else:
            pctx = PoissonObsContext(params, x, kw["b"], kw["obs_rate"])
            ruin_mass, _ = ruin_deficit_law_before_poisson_passage(pctx)
            vals = [poisson_passage_before_ruin(pctx), ruin_mass,
                    longest_cdf_at_poisson_passage(pctx, kw["r"], args.n_max)]
        rows.append(list(point) + [float(v) for v in vals])
    return rows, list(axes) + list(columns)


def _single(args, name):
    raw = getattr(args, name)
    if raw is None:
        return None
    vals = parse_grid(raw, name)
    if vals.size != 1:
        raise InvalidParameterError(f"{GRID_FLAGS[name][0]} takes a single value here")
    return float(vals[0])


def _simulate(args, params) -> int:
    x = _single(args, "x")
    b = _single(args, "b")
    rate = _single(args, "obs_rate")
    cfg = SimConfig(params, x, args.seed, args.n_paths, passage_level=b, poisson_obs_rate=rate)
    stats = simulate(cfg)
    stats.dump_csv(args.output or sys.stdout)
    if stats.n_failed:
        print(f"warning: {stats.n_failed} paths hit the event cap and were excluded",
              file=sys.stderr)
    return EXIT_OK


def validation_checks(params: ClParams, x: float, seed: int, n_paths: int):
    """(name, closed form, McEstimate) for every closed-form / MC pair at surplus x."""
    if x < 0:
        raise InvalidParameterError("validate needs x >= 0")
    ctx = ExcursionLawContext(params, x)
    b = x + 2.0
    windows = (0.25, 0.5, 1.0)
    stats = simulate(SimConfig(params, x, seed, n_paths, passage_level=b,
                               near_max_windows=windows))
    checks = [("ruin", ruin_prob(ctx), stats.estimate("ruin"))]
    for r in (0.5, 1.0, 2.0):
        checks.append((f"longest_cdf(r={r:g})", longest_cdf_inf(ctx, r),
                       stats.estimate("longest_cdf", r)))
    for r in (0.5, 1.0, 2.0):
        checks.append((f"shortest_tail(r={r:g})", shortest_tail_inf(ctx, r),
                       stats.estimate("shortest_tail", r)))
    checks.append(("joint(u=0.5;v=2)", joint_cdf_inf(ctx, 0.5, 2.0),
                   stats.estimate("joint", 0.5, 2.0)))
    for r in (0.5, 1.0, 2.0):
        checks.append((f"range_cdf(r={r:g})", range_cdf(ctx, r), stats.estimate("range_cdf", r)))
    checks.append(("longest_at_passage(b={:g};r=1)".format(b),
                   longest_cdf_at_first_passage(ctx, b, 1.0),
                   stats.estimate("longest_at_passage", 1.0)))
    checks.append(("laplace_tau_b(b={:g};q=0.5)".format(b),
                   first_passage_laplace(params, x, b, 0.5), stats.estimate("laplace_tau_b", 0.5)))
    checks.append(("id1(z=1)", deficit_scale_expectation(params, x, 1.0),
                   stats.estimate("id1", 1.0)))
    checks.append(("occupation_joint(l=3;r=1)", occupation_longest_joint_cdf(ctx, 3.0, 1.0),
                   stats.estimate("occupation_joint", 3.0, 1.0)))
    checks.append(("peak_to_sum(ratio=0.6;r=1)", peak_to_sum_ruin_prob(ctx, 0.6, 1.0),
                   stats.estimate("peak_to_sum", 0.6, 1.0)))
    for a in windows:
        checks.append((f"near_max_mean(a={a:g})", near_max_mean(ctx, NearMaxSpec(a, x)),
                       stats.estimate("near_max_mean", a)))
    pctx = PoissonObsContext(params, x, b, 1.0)
    pstats = simulate(SimConfig(params, x, seed + 1, n_paths, passage_level=b,
                                poisson_obs_rate=1.0))
    checks.append(("poisson_passage(b={:g};rate=1)".format(b), poisson_passage_before_ruin(pctx),
                   pstats.estimate("poisson_passage")))
    checks.append(("poisson_longest(b={:g};rate=1;r=1)".format(b),
                   longest_cdf_at_poisson_passage(pctx, 1.0), pstats.estimate("poisson_longest", 1.0)))
    return checks


def _validate(args, params) -> int:
    x = _single(args, "x")
    checks = validation_checks(params, x, args.seed, args.n_paths)
    rows = []
    ok = True
    for name, exact, est in checks:
        z = (est.value - exact) / est.std_error if est.std_error > 0 else 0.0
        passed = est.agrees(exact)
        ok &= passed
        rows.append([name, exact, est.value, est.std_error, z, "PASS" if passed else "FAIL"])
    header = ["check", "closed_form", "mc_estimate", "std_error", "z_score", "status"]
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([row[0]] + [_fmt(v, args.precision) for v in row[1:5]] + [row[5]])
    finally:
        if args.output:
            fh.close()
    return EXIT_OK if ok else EXIT_MISMATCH


def run(args) -> int:
    """Execute a parsed, config-merged command."""
    params = ClParams(args.c, args.eta, args.alpha)
    if args.command == "simulate":
        return _simulate(args, params)
    if args.command == "validate":
        return _validate(args, params)
    rows, header = _evaluate(args, params)
    _write(rows, header, args)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _merge_config(args)
        with warnings.catch_warnings():
            if args.strict:
                warnings.simplefilter("error", TruncationWarning)
            return run(args)
    except TruncationWarning as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRUNCATED
    except (NumericalFailure, ResolutionTooCoarseError, MaxEventsExceeded) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InvalidParameterError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ExcursionRiskError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
