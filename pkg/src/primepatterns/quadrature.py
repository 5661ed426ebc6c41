"""Adaptive Simpson quadrature.

The rule is applied panel by panel with Richardson extrapolation on each
accepted interval, so accepted pieces are effectively sixth order.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence

from .errors import ConvergenceError


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    abs_tol: float,
    max_depth: int = 48,
) -> tuple[float, float]:
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``abs_tol``.

    Returns ``(value, error_estimate)``. Raises ConvergenceError when some
    interval still fails the local test at ``max_depth``; the partial
    estimate is attached to the exception.
    """
    if a == b:
        return 0.0, 0.0
    if b < a:
        value, err = adaptive_simpson(f, b, a, abs_tol, max_depth)
        return -value, err

    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    # Explicit stack keeps the evaluation order (and so the float sum) fixed.
    stack = [(a, b, fa, fm, fb, whole, abs_tol, 0)]
    pieces: list[float] = []
    err_total = 0.0
    failed = False
    while stack:
        lo, hi, flo, fmid, fhi, s, tol, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        h = hi - lo
        left = h / 12.0 * (flo + 4.0 * flm + fmid)
        right = h / 12.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - s
        if abs(delta) <= 15.0 * tol or depth >= max_depth:
            if depth >= max_depth and abs(delta) > 15.0 * tol:
                failed = True
            pieces.append(left + right + delta / 15.0)
            err_total += abs(delta) / 15.0
            continue
        # Right half pushed first so the left half is processed first.
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * tol, depth + 1))
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * tol, depth + 1))

    value = math.fsum(pieces)
    if failed:
        raise ConvergenceError(
            f"adaptive Simpson hit depth {max_depth} on [{a}, {b}]; "
            f"achieved error estimate {err_total:.3e}",
            estimate=(value, err_total),
        )
    return value, err_total


def integrate_panels(
    f: Callable[[float], float] | Sequence[Callable[[float], float]],
    edges: Sequence[float],
    rel_tol: float,
    max_depth: int = 48,
    map_fn: Callable | None = None,
) -> tuple[float, float]:
    """Adaptive Simpson over consecutive panels ``edges[i]..edges[i+1]``.

    A coarse pass fixes an absolute tolerance from ``rel_tol``; each panel
    gets a share proportional to its coarse magnitude. ``f`` may also be a
    sequence with one integrand per panel. ``map_fn`` (an
    ordered ``map``) may run panels in parallel; panel results are summed
    in panel order so the result does not depend on it.
    """
    if len(edges) < 2:
        return 0.0, 0.0
    panels = list(zip(edges[:-1], edges[1:]))
    fs = list(f) if not callable(f) else [f] * len(panels)
    if len(fs) != len(panels):
        raise ValueError("need one integrand per panel")
    coarse = []
    for fi, (lo, hi) in zip(fs, panels):
        mid = 0.5 * (lo + hi)
        coarse.append(abs((hi - lo) / 6.0 * (fi(lo) + 4.0 * fi(mid) + fi(hi))))
    total = math.fsum(coarse)
    if total == 0.0:
        total = 1.0
    tols = [max(rel_tol * max(c, total * 1e-6), rel_tol * total * 1e-12) for c in coarse]
    # Each panel may use its whole share; shares sum to about rel_tol * total.
    jobs = [(fi, lo, hi, tol, max_depth) for fi, (lo, hi), tol in zip(fs, panels, tols)]
    runner = map_fn or map
    results = list(runner(_panel_job, jobs))
    value = math.fsum(r[0] for r in results)
    err = math.fsum(r[1] for r in results)
    return value, err


def _panel_job(job):
    f, lo, hi, tol, depth = job
    return adaptive_simpson(f, lo, hi, tol, depth)
