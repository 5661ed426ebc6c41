"""Residuals against the simplified asymptotic, a one-term lower-order fit, plot data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from collections.abc import Callable, Sequence

from .conjecture import ConjectureParams, simplified_factor, predict
from .errors import EmptyInputError, InvalidParameterError, SingularFitError, TableIOError, UnitError
from .prime_engine import li

UNITS = ("count", "ratio")
BASIS = "((loglog x)^2/(log x)^2)"
PLOT_KINDS = ("proportion", "residual", "residual-after-fit")


@dataclass(frozen=True)
class Series:
    """Observed values on an x grid; ``unit`` is ``count`` or ``ratio``."""

    x: tuple
    values: tuple
    unit: str = "ratio"

    def __post_init__(self):
        if self.unit not in UNITS:
            raise UnitError(f"unit must be one of {UNITS}")
        if len(self.x) != len(self.values):
            raise InvalidParameterError("x and values differ in length")
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class ResidualSeries:
    rows: tuple  # (x, observed, model, residual)
    unit: str = "ratio"

    def __post_init__(self):
        xs = [r[0] for r in self.rows]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise InvalidParameterError("x must be strictly increasing")
        if any(not math.isfinite(r[2]) for r in self.rows):
            raise InvalidParameterError("model values must be finite")

    @property
    def x(self) -> list[float]:
        return [r[0] for r in self.rows]

    @property
    def residual(self) -> list[float]:
        return [r[3] for r in self.rows]


@dataclass(frozen=True)
class FitResult:
    coefficient: float
    basis: str
    rms_before: float
    rms_after: float
    stderr: float
    count_space: bool = False


def basis(x: float) -> float:
    L = math.log(x)
    return (math.log(L) / L) ** 2


def _model_counts(model, xs, q, a, b, n_max) -> list[float]:
    if callable(model):
        return [float(model(x)) for x in xs]
    if model == "eq19":
        if q != 3:
            raise InvalidParameterError("the simplified asymptotic is stated for q = 3")
        return [li(x) / 4 * simplified_factor(x, a == b, q) for x in xs]
    if model == "conjecture":
        params = ConjectureParams(q, a, b, n_max=n_max)
        return [predict(params, x).value for x in xs]
    raise InvalidParameterError(f"unknown model {model!r}")


def residuals(
    observed: Series,
    model: str | Callable[[float], float] | Series = "eq19",
    q: int = 3,
    a: int = 1,
    b: int = 1,
    mode: str = "ratio",
    n_max: int = 5,
) -> ResidualSeries:
    """observed - model on the observed grid.

    Model values are counts (``eq19``, ``conjecture`` or a callable) unless a
    Series is passed, whose unit must match. In ``ratio`` mode counts are
    divided by li(x); ratio-unit data is used as is, against model / li(x).
    """
    if mode not in UNITS:
        raise UnitError(f"mode must be one of {UNITS}")
    xs = list(observed.x)
    if isinstance(model, Series):
        if model.unit != observed.unit:
            raise UnitError(f"observed data is in {observed.unit} units but the model is in {model.unit} units")
        if list(model.x) != xs:
            raise InvalidParameterError("model grid differs from the observed grid")
        mod = list(model.values)
        mod_unit = model.unit
    else:
        if min(xs, default=10) < 10:
            raise InvalidParameterError("x must be >= 10 for the model")
        mod = _model_counts(model, xs, q, a, b, n_max)
        mod_unit = "count"
    obs = list(observed.values)
    if mode == "count":
        if observed.unit != "count":
            raise UnitError("count-mode residuals need count data")
        if mod_unit != "count":
            raise UnitError("count-mode residuals need a count model")
    else:
        if observed.unit == "count":
            obs = [v / li(x) for v, x in zip(obs, xs)]
        if mod_unit == "count":
            mod = [v / li(x) for v, x in zip(mod, xs)]
    rows = tuple((x, o, m, o - m) for x, o, m in zip(xs, obs, mod))
    return ResidualSeries(rows, mode)


def fit_lower_order(r: ResidualSeries, count_space: bool = False, min_rows: int = 10) -> FitResult:
    """Least squares c for residual ~ c (loglog x)^2/(log x)^2, in closed form.

    With ``count_space`` the basis is multiplied by li(x) (count residuals).
    """
    if len(r.rows) < min_rows:
        raise InvalidParameterError(f"need at least {min_rows} rows, got {len(r.rows)}")
    if count_space != (r.unit == "count"):
        raise UnitError(f"{'count' if count_space else 'ratio'}-space fit given {r.unit} residuals")
    xs = r.x
    if max(xs) == min(xs):
        raise SingularFitError("all x equal; the basis is degenerate")
    B = [basis(x) * (li(x) if count_space else 1.0) for x in xs]
    y = r.residual
    bb = math.fsum(v * v for v in B)
    if bb == 0.0:
        raise SingularFitError("basis vanishes on the grid")
    c = math.fsum(u * v for u, v in zip(B, y)) / bb
    n = len(y)
    rms_before = math.sqrt(math.fsum(v * v for v in y) / n)
    sse = math.fsum((v - c * u) ** 2 for u, v in zip(B, y))
    rms_after = math.sqrt(sse / n)
    stderr = math.sqrt(sse / (n - 1) / bb) if n > 1 else float("inf")
    return FitResult(c, BASIS, rms_before, min(rms_after, rms_before), stderr, count_space)


def apply_fit(r: ResidualSeries, fit: FitResult) -> ResidualSeries:
    """Residuals with the fitted term moved into the model."""
    rows = []
    for x, o, m, _ in r.rows:
        t = fit.coefficient * basis(x) * (li(x) if fit.count_space else 1.0)
        rows.append((x, o, m + t, o - (m + t)))
    return ResidualSeries(tuple(rows), r.unit)


# ---------------------------------------------------------------------------
# extended series and plot data


@dataclass(frozen=True)
class ExtendedSeries:
    """Exact data up to a junction followed by stitched estimates."""

    x: tuple
    values: tuple
    junction: int  # index of the first stitched point

    @property
    def jump(self) -> float:
        return self.values[self.junction] - self.values[self.junction - 1]


def extend_series(raw: Series, stitched: Sequence[tuple[float, float]]) -> ExtendedSeries:
    if not raw.x or not stitched:
        raise EmptyInputError("both the raw and the stitched part must be non-empty")
    tail = sorted(stitched)
    if tail[0][0] <= raw.x[-1]:
        raise InvalidParameterError("stitched points must lie beyond the raw data")
    xs = tuple(raw.x) + tuple(float(x) for x, _ in tail)
    vs = tuple(raw.values) + tuple(float(v) for _, v in tail)
    return ExtendedSeries(xs, vs, len(raw.x))


def plot_rows(source, kind: str) -> list[tuple[float, float]]:
    if kind not in PLOT_KINDS:
        raise InvalidParameterError(f"kind must be one of {PLOT_KINDS}")
    if isinstance(source, ResidualSeries):
        if not source.rows:
            raise EmptyInputError("empty source series")
        if kind == "proportion":
            return [(x, o) for x, o, _, _ in source.rows]
        if kind == "residual":
            return [(x, res) for x, _, _, res in source.rows]
        fitted = apply_fit(source, fit_lower_order(source, source.unit == "count", min_rows=2))
        return [(x, res) for x, _, _, res in fitted.rows]
    if isinstance(source, (Series, ExtendedSeries)):
        if not source.x:
            raise EmptyInputError("empty source series")
        if kind != "proportion":
            raise InvalidParameterError(f"{kind} plots need a residual series")
        return list(zip(source.x, source.values))
    raise InvalidParameterError(f"cannot plot a {type(source).__name__}")


def emit_plot_data(source, kind: str, path) -> list[tuple[float, float]]:
    """Write a two-column ``x,value`` CSV and return the rows."""
    rows = plot_rows(source, kind)
    try:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["x", "value"])
            for x, v in rows:
                wr.writerow([format(x, ".17g"), format(v, ".17g")])
    except OSError as exc:
        raise TableIOError(f"cannot write {path}: {exc}") from exc
    return rows


def log_grid(lo: float, hi: float, per_decade: int = 4) -> list[int]:
    """Integer x values log-spaced from lo to hi inclusive."""
    if not 0 < lo < hi:
        raise InvalidParameterError("need 0 < lo < hi")
    n = max(1, round(math.log10(hi / lo) * per_decade))
    return sorted({int(round(lo * (hi / lo) ** (i / n))) for i in range(n + 1)})


# ---------------------------------------------------------------------------
# CSV


def write_residuals(r: ResidualSeries, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["x", "observed", "model", "residual", "unit"])
            for row in r.rows:
                wr.writerow([format(v, ".17g") for v in row] + [r.unit])
    except OSError as exc:
        raise TableIOError(f"cannot write {path}: {exc}") from exc


def read_residuals(path) -> ResidualSeries:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise TableIOError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise EmptyInputError(f"{path} has no rows")
    units = {row.get("unit", "ratio") for row in rows}
    if len(units) != 1:
        raise UnitError(f"mixed units in {path}")
    data = tuple(
        (float(r["x"]), float(r["observed"]), float(r["model"]), float(r["residual"])) for r in rows
    )
    return ResidualSeries(data, units.pop())
