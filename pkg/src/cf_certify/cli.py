"""Command-line front end.

Exit codes: 0 success, 2 usage or argument error, 3 level outside the
applicability window (or other applicability failure), 4 verification
failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import montecarlo as mc
from .bounds import CertifiedQuantile, theorem1_certify, theorem2_certify, theorem3_certify
from .distributions import LimitDistribution
from .edgeworth import (
    CORRELATION_BOUND,
    EdgeworthModel,
    build_correlation_model,
    build_hotelling_t0sq_model,
    build_transformed_model,
    correlation_N,
    first_order_model,
)
from .errors import (
    AlphaOutOfRange,
    CertifyError,
    DomainError,
    InfeasibleError,
    MonotonicityError,
    TransformDomainError,
)
from .transforms import (
    HOTELLING_READINGS,
    CorrelationCubic,
    IdentityTransform,
    MonotoneTransform,
    build_hotelling_transform,
    transform_from_dict,
)

EXIT_OK, EXIT_USAGE, EXIT_APPLICABILITY, EXIT_VERIFY = 0, 2, 3, 4

BOUND_COLUMNS = [
    ("alpha", "probability"),
    ("u_alpha", "statistic"),
    ("bracket_lo", "statistic"),
    ("bracket_hi", "statistic"),
    ("estimate", "statistic"),
    ("radius", "statistic"),
    ("interval_lo", "statistic"),
    ("interval_hi", "statistic"),
    ("window_lo", "probability"),
    ("window_hi", "probability"),
]


class UsageError(Exception):
    pass


@dataclass
class OutputTable:
    columns: list[tuple[str, str]]
    rows: list[tuple[float, ...]]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        width = len(self.columns)
        if any(len(r) != width for r in self.rows):
            raise ValueError("every row must have one value per column")

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([name for name, _ in self.columns])
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "metadata": self.metadata,
            "columns": [{"name": n, "unit": u} for n, u in self.columns],
            "rows": [[_json_num(v) for v in row] for row in self.rows],
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _json_num(v: float):
    v = float(v)
    return v if math.isfinite(v) else None


def _metadata(args, model_dict) -> dict:
    meta = {
        "tool": "cf-certify",
        "tool_version": __version__,
        "command_line": list(args._argv),
        "model": model_dict,
    }
    if not args.no_timestamp:
        meta["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return meta


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- model resolution ---------------------------------------------------------


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"--stat {args.stat} needs {', '.join(missing)}")


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _transform_for(args) -> MonotoneTransform:
    if getattr(args, "transform", None):
        return transform_from_dict(_load_json(args.transform))
    if args.stat == "corr":
        _require(args, "n")
        build_correlation_model(args.n)
        return CorrelationCubic(correlation_N(args.n))
    if args.stat == "t0sq":
        _require(args, "p", "q", "n")
        return build_hotelling_transform(args.p, args.q, args.n, args.reading)
    raise UsageError("--stat custom needs --transform FILE")


def resolve(args) -> tuple[EdgeworthModel, MonotoneTransform | None, dict]:
    """Return the model the chosen theorem consumes, its transform, and the source model JSON."""
    theorem = args.theorem
    if args.stat == "custom":
        if not args.model:
            raise UsageError("--stat custom needs --model FILE")
        source = EdgeworthModel.from_dict(_load_json(args.model))
        if theorem == 1:
            model = first_order_model(source) if source.correction is not None else source
        elif args.c_tilde is not None:
            model = build_transformed_model(source, args.c_tilde)
        else:
            model = source
        transform = _transform_for(args) if theorem == 3 else None
        return model, transform, source.to_dict()

    if args.stat == "corr":
        _require(args, "n")
        source = build_correlation_model(args.n)
        if args.model:
            source = EdgeworthModel.from_dict(_load_json(args.model))
            model = first_order_model(source) if theorem == 1 and source.correction is not None else source
        elif theorem == 1:
            model = first_order_model(source)
        else:
            c = CORRELATION_BOUND if args.c_tilde is None else args.c_tilde
            model = build_transformed_model(source, c)
        transform = _transform_for(args) if theorem == 3 else None
        return model, transform, source.to_dict()

    # t0sq
    _require(args, "p", "q", "n")
    if args.model:
        source = EdgeworthModel.from_dict(_load_json(args.model))
        model = first_order_model(source) if theorem == 1 and source.correction is not None else source
    elif theorem == 1:
        _require(args, "c")
        source = build_hotelling_t0sq_model(args.p, args.q, args.n, args.c)
        model = first_order_model(source)
    else:
        _require(args, "c_tilde")
        if args.n < args.p:
            raise DomainError(f"need n >= p (got n={args.n}, p={args.p})")
        model = EdgeworthModel(
            base=LimitDistribution.chi2(args.p * args.q),
            eps=1.0 / args.n,
            eps_order=2,
            correction=None,
            remainder_const=args.c_tilde,
            label=f"T(T0^2) p={args.p} q={args.q} n={args.n}",
        )
        source = model
    transform = _transform_for(args) if theorem == 3 else None
    return model, transform, source.to_dict()


def certify(model, transform, theorem: int, alpha: float) -> CertifiedQuantile:
    if theorem == 1:
        return theorem1_certify(model, alpha)
    if theorem == 2:
        return theorem2_certify(model, alpha)
    return theorem3_certify(model, transform, alpha)


def _alphas(args) -> list[float]:
    values = list(args.alpha or [])
    grid = getattr(args, "alpha_grid", None)
    if grid:
        start, stop, step = grid
        if step <= 0 or stop < start:
            raise UsageError("--alpha-grid needs START <= STOP and STEP > 0")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values.extend(round(start + i * step, 15) for i in range(count))
    if not values:
        raise UsageError("no alpha values given")
    if args.lower_tail:
        values = [1.0 - v for v in values]
    for v in values:
        if not 0.0 < v < 1.0:
            raise UsageError(f"alpha must lie in (0, 1), got {v}")
    return values


def _bound_table(args) -> OutputTable:
    model, transform, source = resolve(args)
    rows, flags = [], {}
    for alpha in _alphas(args):
        cert = certify(model, transform, args.theorem, alpha)
        rows.append(
            (
                alpha,
                cert.u_alpha,
                cert.bracket.lo,
                cert.bracket.hi,
                cert.estimate,
                cert.radius,
                cert.interval.lo,
                cert.interval.hi,
                cert.window[0],
                cert.window[1],
            )
        )
        if cert.flags:
            flags[_fmt(alpha)] = list(cert.flags)
    meta = _metadata(args, source)
    meta["theorem"] = f"T{args.theorem}"
    meta["certified_model"] = model.to_dict()
    if transform is not None:
        try:
            meta["transform"] = transform.to_dict()
        except TypeError:
            pass
    if flags:
        meta["flags"] = flags
    return OutputTable(list(BOUND_COLUMNS), rows, meta)


def cmd_bound(args) -> int:
    table = _bound_table(args)
    _emit(table.to_json() if args.format == "json" else table.to_csv(), args.out)
    return EXIT_OK


cmd_table = cmd_bound


def cmd_verify(args) -> int:
    if args.stat == "custom":
        raise UsageError("verify needs --stat corr or --stat t0sq to know what to simulate")
    model, transform, source = resolve(args)
    if args.stat == "corr":
        statistic = mc.Correlation(args.n)
    else:
        statistic = mc.HotellingT0sq(args.p, args.q, args.n)
    plan = mc.SimulationPlan(statistic, args.samples, args.seed, args.streams)
    samples = mc.sample(plan)
    verdicts = []
    for alpha in _alphas(args):
        cert = certify(model, transform, args.theorem, alpha)
        verdict = mc.verify_enclosure(cert, samples, args.confidence)
        entry = verdict.to_dict()
        entry["estimate"] = cert.estimate
        entry["radius"] = cert.radius
        verdicts.append(entry)
    report = {
        "metadata": _metadata(args, source),
        "plan": {
            "statistic": type(statistic).__name__,
            "params": statistic.__dict__,
            "sample_count": plan.sample_count,
            "seed": plan.seed,
            "stream_count": plan.stream_count,
        },
        "theorem": f"T{args.theorem}",
        "verdicts": verdicts,
    }
    failed = not all(v["inside"] for v in verdicts)
    if args.exact:
        if args.stat != "corr":
            raise UsageError("--exact is only available for --stat corr")
        base = build_correlation_model(args.n)
        gap = mc.sup_norm_gap(base, lambda x: mc.exact_correlation_cdf(args.n, x))
        bound = base.remainder_bound
        report["exact"] = {"gap": gap, "bound": bound, "ok": gap <= bound}
        failed = failed or gap > bound
    if args.dump:
        mc.write_samples(args.dump, samples)
    _emit(json.dumps(report, indent=2) + "\n", args.out)
    for v in verdicts:
        state = "inside" if v["inside"] else "OUTSIDE"
        print(f"alpha={v['alpha']:g}: {state} (slack {v['slack']:.3g}, dkw margin {v['dkw_margin']:.3g})", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_transform(args) -> int:
    t = _transform_for(args)
    values = np.asarray(args.values, dtype=float)
    if args.direction == "forward":
        out = t.forward(values)
        back = t.inverse(out) if args.check else None
    elif args.direction == "inverse":
        out = t.inverse(values)
        back = t.forward(out) if args.check else None
    else:
        out = t.inverse_derivative(values)
        back = None
    out = np.atleast_1d(np.asarray(out, dtype=float))
    columns = [("input", "statistic"), (args.direction, "statistic")]
    rows = [(float(v), float(o)) for v, o in zip(values, out)]
    if back is not None:
        columns.append(("roundtrip_error", "statistic"))
        err = np.abs(np.atleast_1d(back) - values)
        rows = [r + (float(e),) for r, e in zip(rows, err)]
    try:
        tdict = t.to_dict()
    except TypeError:
        tdict = {"kind": t.kind}
    table = OutputTable(columns, rows, _metadata(args, tdict))
    _emit(table.to_json() if args.format == "json" else table.to_csv(), args.out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_stat_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stat", choices=["corr", "t0sq", "custom"], required=True)
    p.add_argument("--n", type=int, help="sample size")
    p.add_argument("--p", type=int, help="dimension (T0^2)")
    p.add_argument("--q", type=int, help="hypothesis degrees of freedom (T0^2)")
    p.add_argument("--c", type=float, help="remainder constant c_pq of the T0^2 expansion")
    p.add_argument("--c-tilde", type=float, help="remainder constant of the transformed statistic")
    p.add_argument("--reading", choices=sorted(HOTELLING_READINGS), default="derived",
                   help="Hotelling correction coefficients (default: derived)")
    p.add_argument("--model", help="model JSON file")
    p.add_argument("--transform", help="transform JSON file")


def _add_output_args(p: argparse.ArgumentParser, fmt: bool = True) -> None:
    if fmt:
        p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", help="write to this path instead of stdout")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp for reproducible output")


def _add_alpha_args(p: argparse.ArgumentParser, grid: bool = False) -> None:
    p.add_argument("--alpha", type=float, nargs="+", help="upper-tail levels")
    if grid:
        p.add_argument("--alpha-grid", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    p.add_argument("--lower-tail", action="store_true", help="treat the levels as lower-tail probabilities")
    p.add_argument("--theorem", type=int, choices=[1, 2, 3], default=3)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cf-certify", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="certified quantiles for a list of levels")
    _add_stat_args(p)
    _add_alpha_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("table", help="certified quantiles over a level grid")
    _add_stat_args(p)
    _add_alpha_args(p, grid=True)
    _add_output_args(p)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("verify", help="check certificates against simulation")
    _add_stat_args(p)
    _add_alpha_args(p)
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--streams", type=int, default=1)
    p.add_argument("--confidence", type=float, default=0.99)
    p.add_argument("--exact", action="store_true", help="also check the sup-norm bound against the exact CDF")
    p.add_argument("--dump", help="write the samples to this binary file")
    _add_output_args(p, fmt=False)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("transform", help="tabulate a Bartlett-type correction")
    _add_stat_args(p)
    p.add_argument("--direction", choices=["forward", "inverse", "derivative"], default="forward")
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--check", action="store_true", help="append the round-trip error column")
    _add_output_args(p)
    p.set_defaults(func=cmd_transform)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    try:
        return args.func(args)
    except (AlphaOutOfRange, InfeasibleError, TransformDomainError, MonotonicityError) as exc:
        print(f"cf-certify: not applicable: {exc}", file=sys.stderr)
        return EXIT_APPLICABILITY
    except (UsageError, DomainError, CertifyError) as exc:
        print(f"cf-certify: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
