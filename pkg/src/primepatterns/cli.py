"""Command line entry point: ``primepatterns <subcommand> ...``.

Exit status: 0 success, 1 unexpected error, 2 usage error, 3 invalid
parameter, 4 I/O error, 5 budget / cache miss / missing window,
6 no convergence / singular fit. Failures print one line to stderr:
``error: <code>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import analysis, conjecture, prime_engine, sampler, singular_series
from .errors import InvalidParameterError, PrimePatternsError, TableIOError

ENV_PREFIX = "PRIMEPATTERNS_"
EPILOG = """exit status:
  0 success       1 unexpected error   2 usage error
  3 invalid parameter                  4 I/O error
  5 budget exceeded, cache miss or missing window
  6 quadrature non-convergence or singular fit
environment (overridden by flags):
  PRIMEPATTERNS_TABLE_DIR  singular-series table cache
  PRIMEPATTERNS_WORKERS    worker processes
"""


def _number(text: str) -> int:
    """Integer that may be written as 1e8 or 10**8."""
    try:
        if "**" in text:
            base, exp = text.split("**")
            return int(base) ** int(exp)
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v) or v != int(v):
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(text) if text.lstrip("-").isdigit() else int(v)


def _number_list(text: str) -> list[int]:
    return [_number(t) for t in text.split(",") if t]


def _fmt(v) -> str:
    return format(v, ".17g") if isinstance(v, float) else str(v)


@dataclass
class RunConfig:
    subcommand: str
    args: argparse.Namespace
    workers: int = 1
    table_dir: Path | None = None
    env: dict = field(default_factory=dict)


def _env(name: str, env: dict):
    return env.get(ENV_PREFIX + name)


def resolve(ns: argparse.Namespace, env: dict | None = None) -> RunConfig:
    """Apply flag > environment > default precedence and validate."""
    env = dict(os.environ if env is None else env)
    workers = getattr(ns, "workers", None)
    if workers is None:
        raw = _env("WORKERS", env)
        try:
            workers = int(raw) if raw else 1
        except ValueError:
            raise InvalidParameterError(f"{ENV_PREFIX}WORKERS={raw!r} is not an integer") from None
    if workers < 1:
        raise InvalidParameterError("worker count must be >= 1")
    tdir = getattr(ns, "table_dir", None) or _env("TABLE_DIR", env)
    tdir = singular_series.table_dir(tdir)
    return RunConfig(ns.command, ns, workers, tdir, env)


# ---------------------------------------------------------------------------
# output helpers


class _Out:
    def __init__(self, path):
        self.path = path
        self.buf = io.StringIO()
        self.writer = csv.writer(self.buf, lineterminator="\n")

    def row(self, values):
        self.writer.writerow([_fmt(v) for v in values])

    def close(self):
        text = self.buf.getvalue()
        if self.path in (None, "-"):
            sys.stdout.write(text)
            return
        try:
            Path(self.path).write_text(text)
        except OSError as exc:
            raise TableIOError(f"cannot write {self.path}: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_count(cfg: RunConfig) -> int:
    a = cfg.args
    if (a.x is None) == (a.first_primes is None):
        raise InvalidParameterError("give exactly one of --x or --first-primes")
    if a.x is not None:
        res = prime_engine.count_patterns_at(a.q, a.k, x=a.x, workers=cfg.workers)
    else:
        res = prime_engine.count_patterns_at(a.q, a.k, first=a.first_primes, workers=cfg.workers)
    out = _Out(a.out)
    out.row(prime_engine.COUNT_HEADER)
    for pc in res:
        for row in pc.to_rows():
            out.row(row)
    out.close()
    return 0


def _write_record_rows(out: _Out, records):
    out.row(["X", "C", "q", "k", "pattern", "frequency", "sigma"])
    for rec in records:
        w = rec.window
        for key in sorted(rec.frequencies):
            out.row([w.X, w.C, w.q, w.k, key.label, rec.frequencies[key], rec.sigma])


def cmd_sample(cfg: RunConfig) -> int:
    a = cfg.args
    if a.grid is not None:
        if a.out_dir is None:
            raise InvalidParameterError("--grid needs --out-dir")
        if a.coverage:
            grid = sampler.coverage_grid(a.grid, a.q, a.k, cfg.workers, a.raw_denominator)
        else:
            grid = sampler.sampled_grid(a.grid, a.c, a.q, a.k, cfg.workers, a.raw_denominator)
        d = Path(a.out_dir)
        try:
            d.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise TableIOError(f"cannot create {d}: {exc}") from exc
        for (al, be), rec in grid.items():
            out = _Out(d / f"window_{al}e{be}.csv")
            _write_record_rows(out, [rec])
            out.close()
        return 0
    if a.x is None:
        raise InvalidParameterError("give --x (single window) or --grid")
    rec = sampler.sample_window(sampler.SampleWindow(a.x, a.c, a.q, a.k), a.raw_denominator, cfg.workers)
    out = _Out(a.out)
    _write_record_rows(out, [rec])
    out.close()
    return 0


def cmd_stitch(cfg: RunConfig) -> int:
    a = cfg.args
    records = sampler.read_records(a.grid_dir)
    est = sampler.stitch(records, a.b1, a.denominator)
    out = _Out(a.out)
    out.row(["b1", "q", "pattern", "estimate"])
    for key in sorted(est.values):
        out.row([est.b1, est.q, key.label, est.values[key]])
    out.close()
    return 0


def cmd_series(cfg: RunConfig) -> int:
    a = cfg.args
    table = singular_series.build_table(
        a.q, a.max_size, a.max_elem, cfg.table_dir, a.cutoff_target, cfg.workers
    )
    out = _Out(a.out)
    out.row(["q", "set", "value", "prime_cutoff", "tail_bound"])
    for elems in sorted(table.entries, key=lambda t: (len(t), t)):
        sv = table.entries[elems]
        out.row([a.q, " ".join(map(str, elems)), sv.value, sv.prime_cutoff, sv.tail_bound])
    out.close()
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    a = cfg.args
    params = conjecture.ConjectureParams(
        a.q, a.a, a.b, n_max=a.nmax, c=a.c, rel_tol=a.rel_tol, normalization=a.normalization
    )
    out = _Out(a.out)
    out.row(["x", "q", "a", "b", "nmax", "predicted", "err_estimate"])
    for x in a.x:
        pr = conjecture.predict(params, x, cfg.workers, cfg.table_dir)
        out.row([x, pr.q, pr.a, pr.b, pr.n_max, pr.value, pr.err_estimate])
    out.close()
    return 0


def cmd_lemma4(cfg: RunConfig) -> int:
    a = cfg.args
    table = singular_series.build_table(
        a.q, max(a.ellmax, 1), max(a.hmax, 1), cfg.table_dir, workers=cfg.workers
    )
    residues = [a.a] if a.a is not None else prime_engine.reduced_residues(a.q)
    out = _Out(a.out)
    out.row(["q", "a", "h", "ell", "discrepancy"])
    for r in residues:
        for h in range(3, a.hmax + 1):
            for ell in range(1, a.ellmax + 1):
                d = conjecture.lemma4_check(h, ell, a.q, r, table, a.variant)
                out.row([a.q, r, h, ell, d])
    out.close()
    return 0


def _observed(counts_path, pattern: str, q: int, unit: str):
    results = [pc for pc in prime_engine.read_counts(counts_path) if pc.q == q and pc.k == 2]
    if not results:
        raise InvalidParameterError(f"{counts_path} has no k=2 rows for q={q}")
    results = [pc for pc in results if pc.limit_type == "x"]
    if not results:
        raise InvalidParameterError("residuals need x-limit counts")
    key = prime_engine.PatternKey.parse(q, pattern)
    xs = [pc.limit for pc in results]
    if unit == "count":
        vals = [pc[key] for pc in results]
    else:
        pis = prime_engine.prime_counts_at(xs)
        vals = [pc[key] / p for pc, p in zip(results, pis)]
    return analysis.Series(tuple(xs), tuple(vals), unit), key


def _model_from_file(path, series: analysis.Series, key):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    table = {
        float(r["x"]): float(r["predicted"])
        for r in rows
        if (int(r["a"]), int(r["b"])) == key.residues
    }
    missing = [x for x in series.x if x not in table]
    if missing:
        raise InvalidParameterError(f"model file lacks x = {missing[0]:.17g} for pattern {key.label}")
    return analysis.Series(series.x, tuple(table[x] for x in series.x), "count")


def cmd_residuals(cfg: RunConfig) -> int:
    a = cfg.args
    obs, key = _observed(a.counts, a.pattern, a.q, "count")
    if a.model in ("eq19", "conjecture"):
        model = a.model
    else:
        try:
            model = _model_from_file(a.model, obs, key)
        except OSError as exc:
            raise TableIOError(f"cannot read model file {a.model}: {exc}") from exc
    r = analysis.residuals(obs, model, a.q, *key.residues, mode=a.mode, n_max=a.nmax)
    out = _Out(a.out)
    out.row(["x", "observed", "model", "residual", "unit"])
    for row in r.rows:
        out.row(list(row) + [r.unit])
    out.close()
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    a = cfg.args
    r = analysis.read_residuals(a.residuals)
    fit = analysis.fit_lower_order(r, count_space=r.unit == "count")
    out = _Out(a.out)
    out.row(["coefficient", "basis", "rms_before", "rms_after", "stderr"])
    out.row([fit.coefficient, fit.basis, fit.rms_before, fit.rms_after, fit.stderr])
    out.close()
    return 0


def cmd_plotdata(cfg: RunConfig) -> int:
    a = cfg.args
    if a.residuals:
        source = analysis.read_residuals(a.residuals)
    elif a.counts:
        source, _ = _observed(a.counts, a.pattern, a.q, "ratio")
    else:
        raise InvalidParameterError("give --residuals or --counts")
    rows = analysis.plot_rows(source, a.kind)
    out = _Out(a.out)
    out.row(["x", "value"])
    for x, v in rows:
        out.row([float(x), float(v)])
    out.close()
    return 0


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: usage: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="primepatterns",
        description="Consecutive-prime residue patterns and the pair conjecture.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, table=False):
        sp.add_argument("--workers", type=int, default=None, help="worker processes")
        sp.add_argument("--out", default=None, help="output CSV (default stdout)")
        if table:
            sp.add_argument("--table-dir", default=None, help="table cache directory")
        return sp

    sp = common(sub.add_parser("count", help="count consecutive-prime patterns"))
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--x", type=_number_list, default=None, help="limit(s) on the starting prime")
    sp.add_argument("--first-primes", type=_number_list, default=None, help="count(s) of leading primes")
    sp.set_defaults(func=cmd_count)

    sp = common(sub.add_parser("sample", help="pattern frequencies in prime windows"))
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--x", type=_number, default=None, help="window start")
    sp.add_argument("--c", type=_number, default=10**6, help="primes per window")
    sp.add_argument("--grid", type=int, default=None, metavar="B1", help="all windows alpha*10^beta, beta<=B1")
    sp.add_argument("--coverage", action="store_true", help="grid windows cover every prime")
    sp.add_argument("--out-dir", default=None)
    sp.add_argument("--raw-denominator", action="store_true")
    sp.set_defaults(func=cmd_sample)

    sp = common(sub.add_parser("stitch", help="li-weighted stitch of a window grid"))
    sp.add_argument("--grid-dir", required=True)
    sp.add_argument("--b1", type=int, required=True)
    sp.add_argument("--denominator", choices=sampler.DENOMINATORS, default="printed")
    sp.set_defaults(func=cmd_stitch)

    sp = common(sub.add_parser("series", help="build the zeroed singular-series table"), table=True)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--max-size", type=int, default=5)
    sp.add_argument("--max-elem", type=int, default=singular_series.DEFAULT_MAX_ELEM)
    sp.add_argument("--cutoff-target", type=float, default=singular_series.DEFAULT_TARGET)
    sp.set_defaults(func=cmd_series)

    sp = common(sub.add_parser("predict", help="evaluate the pair conjecture integral"), table=True)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--a", type=int, required=True)
    sp.add_argument("--b", type=int, required=True)
    sp.add_argument("--x", type=_number_list, required=True)
    sp.add_argument("--nmax", type=int, default=5)
    sp.add_argument("--c", type=float, default=4.0)
    sp.add_argument("--rel-tol", type=float, default=1e-6)
    sp.add_argument("--normalization", choices=conjecture.NORMALIZATIONS, default="pnt")
    sp.set_defaults(func=cmd_predict)

    sp = common(sub.add_parser("lemma4", help="telescoping relations between subset sums"), table=True)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--a", type=int, default=None)
    sp.add_argument("--hmax", type=int, default=12)
    sp.add_argument("--ellmax", type=int, default=3)
    sp.add_argument("--variant", choices=("literal", "corrected"), default="literal")
    sp.set_defaults(func=cmd_lemma4)

    sp = common(sub.add_parser("residuals", help="observed minus model"))
    sp.add_argument("--counts", required=True)
    sp.add_argument("--model", default="eq19", help="eq19, conjecture, or a predict CSV")
    sp.add_argument("--q", type=int, default=3)
    sp.add_argument("--pattern", default="1-1")
    sp.add_argument("--mode", choices=analysis.UNITS, default="ratio")
    sp.add_argument("--nmax", type=int, default=5)
    sp.set_defaults(func=cmd_residuals)

    sp = common(sub.add_parser("fit", help="fit the lower-order term"))
    sp.add_argument("--residuals", required=True)
    sp.set_defaults(func=cmd_fit)

    sp = common(sub.add_parser("plotdata", help="two-column plot data"))
    sp.add_argument("--kind", choices=analysis.PLOT_KINDS, required=True)
    sp.add_argument("--residuals", default=None)
    sp.add_argument("--counts", default=None)
    sp.add_argument("--q", type=int, default=3)
    sp.add_argument("--pattern", default="1-1")
    sp.set_defaults(func=cmd_plotdata)
    return p


def run(argv: list[str] | None = None, env: dict | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(ns, env)
        return ns.func(cfg)
    except PrimePatternsError as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {exc.code}: {msg}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"error: io: {' '.join(str(exc).split())}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
