"""Hand-crafted piecewise power models and their least-squares fitters.

Two models are provided:

* the default-scheduler model, power as a function of airtime ``a`` and SNR
  ``c`` with a single SNR threshold below which the power changes linearly;
* the custom-scheduler model, power as a function of airtime, SNR and MCS
  ``m`` with MCS-dependent threshold and feasibility lines.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, stats

from .core import MCS_MAX, MCS_MIN, Dataset, VbsPowerError

GOLDEN_TOL_DB = 1e-6  # dB; a coarser 1e-3 leaves ~1e-5 W residual on noiseless data
THRESHOLD_STEP_DB = 0.25
CMIN_FALLBACK_MARGIN_DB = 0.5
MIN_SAMPLES_PER_MCS = 8
NM_MAX_EVALS = 2000


class FitError(VbsPowerError):
    """The dataset cannot support the requested fit."""


class InfeasibleError(VbsPowerError):
    """The (SNR, MCS) configuration lies on or below the feasibility line."""


class Variant(str, enum.Enum):
    VERBATIM = "verbatim"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class DefaultRegParams:
    """gamma = (threshold dB, base power W, airtime slope W, r0 W/dB, r1 W/dB per airtime)."""

    gamma: tuple[float, ...]

    def __post_init__(self):
        g = tuple(float(v) for v in self.gamma)
        if len(g) != 5:
            raise ValueError(f"gamma needs 5 values, got {len(g)}")
        if not all(math.isfinite(v) for v in g):
            raise ValueError("gamma values must be finite")
        if not g[1] > 0:
            raise ValueError(f"base power gamma1={g[1]} must be positive")
        object.__setattr__(self, "gamma", g)

    def to_dict(self) -> dict:
        return {"gamma": list(self.gamma)}

    @classmethod
    def from_dict(cls, d: dict) -> DefaultRegParams:
        if set(d) != {"gamma"}:
            raise ValueError(f"unexpected keys {sorted(d)}")
        return cls(tuple(d["gamma"]))


@dataclass(frozen=True)
class CustomRegParams:
    """beta[0:6] base-power polynomial, beta[6:9] slope, beta[9:11] feasibility
    line, beta[11:13] threshold line."""

    beta: tuple[float, ...]
    variant: Variant = Variant.CONTINUOUS

    def __post_init__(self):
        b = tuple(float(v) for v in self.beta)
        if len(b) != 13:
            raise ValueError(f"beta needs 13 values, got {len(b)}")
        if not all(math.isfinite(v) for v in b):
            raise ValueError("beta values must be finite")
        for m in (MCS_MIN, MCS_MAX):
            if not b[9] + b[10] * m < b[11] + b[12] * m:
                raise ValueError(f"feasibility line must lie below the threshold line (violated at mcs={m})")
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "variant", Variant(self.variant))

    def c_min(self, m):
        return self.beta[9] + self.beta[10] * np.asarray(m, dtype=np.float64)

    def c_th(self, m):
        return self.beta[11] + self.beta[12] * np.asarray(m, dtype=np.float64)

    def to_dict(self) -> dict:
        return {"beta": list(self.beta), "variant": self.variant.value}

    @classmethod
    def from_dict(cls, d: dict) -> CustomRegParams:
        if set(d) != {"beta", "variant"}:
            raise ValueError(f"unexpected keys {sorted(d)}")
        return cls(tuple(d["beta"]), Variant(d["variant"]))


@dataclass(frozen=True)
class FitReport:
    params: DefaultRegParams | CustomRegParams
    train_rmse: float
    n_samples: int
    solver_iters: int
    residual_sse: float
    unidentified: tuple[str, ...] = field(default=())


# --------------------------------------------------------------------------
# Predictors


def default_curve(gamma, a, c) -> np.ndarray:
    g0, g1, g2, g3, g4 = gamma
    a = np.asarray(a, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    p0 = g1 + g2 * a
    r = g3 + g4 * a
    return np.where(c < g0, p0 - r * (g0 - c), p0)


def predict_default(p: DefaultRegParams, a, c):
    """Default-scheduler power: flat above the threshold, linear in SNR below it."""
    out = default_curve(p.gamma, a, c)
    return float(out) if out.ndim == 0 else out


def custom_curve(beta, variant: Variant, a, c, m) -> np.ndarray:
    """Custom-scheduler power without the feasibility check.

    Samples on the flat side of the threshold (including ``c == c_th``) get the
    base power. Below it the verbatim variant adds ``r * c``; the continuous
    variant adds ``r * (c - c_th)`` so the curve is continuous at the threshold.
    """
    b = beta
    a = np.asarray(a, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    p0 = b[0] + b[1] * a + b[2] * m + b[3] * a * a + b[4] * m * m + b[5] * a * m
    r = b[6] + b[7] * a + b[8] * m
    cth = b[11] + b[12] * m
    if variant is Variant.VERBATIM:
        low = c
    else:
        low = c - cth
    return np.where(c < cth, p0 + r * low, p0)


def feasible_mask(p: CustomRegParams, c, m) -> np.ndarray:
    return np.asarray(c, dtype=np.float64) > p.c_min(m)


def predict_custom(p: CustomRegParams, a, c, m):
    """Custom-scheduler power; raises InfeasibleError when ``c <= c_min(m)``."""
    ok = feasible_mask(p, c, m)
    if not np.all(ok):
        cm = np.broadcast_to(np.asarray(c, dtype=np.float64), ok.shape)[~ok]
        mm = np.broadcast_to(np.asarray(m), ok.shape)[~ok]
        raise InfeasibleError(
            f"snr {float(cm.flat[0]):g} dB at mcs {int(mm.flat[0])} is at or below "
            f"c_min={float(p.c_min(mm.flat[0])):g} dB"
        )
    out = custom_curve(p.beta, p.variant, a, c, m)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Shared numerics


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = GOLDEN_TOL_DB):
    """Minimize a unimodal scalar function on [lo, hi]; returns (x, f(x), n_evals)."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    n = 2
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        n += 1
    if f1 <= f2:
        return x1, f1, n
    return x2, f2, n


def _lstsq(X: np.ndarray, y: np.ndarray):
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef, float(resid @ resid), int(rank)


def _candidate_grid(lo: float, hi: float, step: float = THRESHOLD_STEP_DB) -> np.ndarray:
    n = int(math.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(n + 1)


def _argmin_low_tie(values: np.ndarray, tol: float) -> int:
    """Index of the smallest value; near-ties within ``tol`` go to the lowest index."""
    best = float(np.min(values))
    return int(np.flatnonzero(values <= best + tol)[0])


def _tie_tol(y: np.ndarray) -> float:
    return 1e-12 * (1.0 + float(y @ y))


# --------------------------------------------------------------------------
# Default-scheduler fit


def default_design(a: np.ndarray, c: np.ndarray, g0: float) -> np.ndarray:
    low = np.where(c < g0, g0 - c, 0.0)
    return np.column_stack([np.ones_like(a), a, -low, -a * low])


def solve_default_at(a, c, y, g0: float):
    """Closed-form least squares for (gamma1..gamma4) at a fixed threshold."""
    coef, sse, rank = _lstsq(default_design(a, c, g0), y)
    return coef, sse, rank


def fit_default(ds: Dataset) -> FitReport:
    """Least-squares fit of the default-scheduler model.

    The threshold is located on a 0.25 dB grid over the observed SNR range and
    then refined by golden-section search; the remaining four parameters are
    linear given the threshold and are solved in closed form at each step.
    """
    a, c, y = np.asarray(ds.airtime), np.asarray(ds.snr_db), np.asarray(ds.power_w)
    n = len(y)
    if n < 10:
        raise FitError(f"default fit needs at least 10 samples, got {n}")
    if len(np.unique(a)) < 2:
        raise FitError("default fit needs at least 2 distinct airtime values")
    c_lo, c_hi = float(c.min()), float(c.max())
    if c_hi <= c_lo:
        raise FitError("under-determined fit: all samples share one SNR, no threshold separates them")

    grid = _candidate_grid(c_lo, c_hi)
    sses = np.array([solve_default_at(a, c, y, g)[1] for g in grid])
    iters = len(grid)
    tol = _tie_tol(y)
    k = _argmin_low_tie(sses, tol)
    g0, best_sse = float(grid[k]), float(sses[k])

    unidentified: tuple[str, ...] = ()
    if np.count_nonzero(c < g0) < 2:
        unidentified = ("gamma3", "gamma4")
    else:
        lo, hi = max(c_lo, g0 - THRESHOLD_STEP_DB), min(c_hi, g0 + THRESHOLD_STEP_DB)
        g_ref, sse_ref, nev = golden_section(lambda g: solve_default_at(a, c, y, g)[1], lo, hi)
        iters += nev
        if sse_ref < best_sse - tol:
            g0, best_sse = float(g_ref), float(sse_ref)

    coef, sse, rank = solve_default_at(a, c, y, g0)
    if rank < 2:
        raise FitError("under-determined fit: degenerate design matrix")
    if unidentified:
        coef[2:] = 0.0
        sse = float(np.sum((y - coef[0] - coef[1] * a) ** 2))
    params = DefaultRegParams((g0, *coef))
    return FitReport(params, math.sqrt(sse / n), n, iters, sse, unidentified)


# --------------------------------------------------------------------------
# Custom-scheduler fit


def _low_term(variant: Variant, c: np.ndarray, cth) -> np.ndarray:
    if variant is Variant.VERBATIM:
        return np.where(c < cth, c, 0.0)
    return np.where(c < cth, c - cth, 0.0)


def _per_mcs_design(variant, a, c, t, with_low=True):
    cols = [np.ones_like(a), a, a * a]
    if with_low:
        low = _low_term(variant, c, t)
        cols += [low, a * low]
    return np.column_stack(cols)


@dataclass(frozen=True)
class _ChangePoint:
    mcs: int
    threshold: float
    n_low: int
    detected: bool


def _mcs_change_point(variant, m, a, c, y) -> _ChangePoint:
    """Two-segment scan for one MCS; ties break toward the lower threshold."""
    sse_one = _lstsq(_per_mcs_design(variant, a, c, 0.0, with_low=False), y)[1]
    grid = _candidate_grid(float(c.min()), float(c.max()))
    sses = np.array([_lstsq(_per_mcs_design(variant, a, c, t), y)[1] for t in grid])
    tol = _tie_tol(y)
    k = _argmin_low_tie(sses, tol)
    t, sse_two = float(grid[k]), float(sses[k])
    lo, hi = max(float(c.min()), t - THRESHOLD_STEP_DB), min(float(c.max()), t + THRESHOLD_STEP_DB)
    if hi > lo:
        t_ref, s_ref, _ = golden_section(lambda u: _lstsq(_per_mcs_design(variant, a, c, u), y)[1], lo, hi)
        if s_ref < sse_two - tol:
            t, sse_two = float(t_ref), float(s_ref)
    if variant is Variant.VERBATIM:
        # SSE is flat between neighbouring SNRs here; take the gap midpoint
        below, above = c[c < t], c[c >= t]
        if below.size and above.size:
            t = 0.5 * (float(below.max()) + float(above.min()))

    n = len(y)
    n_low = int(np.count_nonzero(c < t))
    n_high = n - n_low
    detected = False
    if n_low >= 3 and n_high >= 3 and sse_one > tol:
        dof = n - 8
        if sse_two <= tol:
            detected = True
        elif dof > 0:
            fstat = ((sse_one - sse_two) / 3.0) / (sse_two / dof)
            detected = fstat > stats.f.ppf(0.99, 3, dof)
    return _ChangePoint(int(m), t, n_low, detected)


def _lower_hull(points):
    """Lower convex hull of points sorted by x (monotone chain)."""
    hull = []
    for p in points:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def _fit_feasibility_line(c: np.ndarray, m: np.ndarray) -> tuple[float, float]:
    """Estimate (beta9, beta10) from the lower edge of the (MCS, SNR) support.

    Within each MCS the SNR is modelled as uniform between
    ``max(floor, c_min(m))`` and the largest observed SNR, where ``floor`` is
    the smallest SNR in the data. The likelihood is concave in the line
    parameters and the line must stay below every sample, so the maximum sits
    on an edge of the lower convex hull of the per-MCS minima. The touching
    line is then lowered by 2 / sum(density), the expected gap of a
    two-parameter support estimate.
    """
    floor, top = float(c.min()), float(c.max())
    levels, counts = np.unique(m, return_counts=True)
    minima = np.array([c[m == lv].min() for lv in levels])
    if np.count_nonzero(minima > floor + 1.0) < 2:
        # no MCS level is cut by the line: flat line just under the SNR floor
        return floor - CMIN_FALLBACK_MARGIN_DB, 0.0

    hull = _lower_hull(list(zip(levels.tolist(), minima.tolist())))
    best = None
    for (m1, c1), (m2, c2) in zip(hull, hull[1:]):
        slope = (c2 - c1) / (m2 - m1)
        icpt = c1 - slope * m1
        edge = np.maximum(floor, icpt + slope * levels)
        nll = float(np.sum(counts * np.log(np.maximum(top - edge, 1e-12))))
        if best is None or nll < best[0]:
            best = (nll, icpt, slope)
    _, icpt, slope = best
    line = icpt + slope * levels
    active = (line > floor) & (line < top)
    density = float(np.sum(counts[active] / (top - line[active])))
    if density > 0:
        icpt -= 2.0 / density
    return float(icpt), float(slope)


def _repair_threshold_line(b9, b10, b11, b12, gap=0.01):
    """Lift the threshold line so it stays above the feasibility line on 0..28."""
    lo_th = max(b11, b9 + gap)
    hi_th = max(b11 + b12 * MCS_MAX, b9 + b10 * MCS_MAX + gap)
    slope = (hi_th - lo_th) / MCS_MAX
    return lo_th, slope


def custom_design(variant, a, c, m, b11, b12, with_low=True) -> np.ndarray:
    cols = [np.ones_like(a), a, m, a * a, m * m, a * m]
    if with_low:
        low = _low_term(variant, c, b11 + b12 * m)
        cols += [low, a * low, m * low]
    return np.column_stack(cols)


def fit_custom(ds: Dataset, variant: Variant = Variant.CONTINUOUS) -> FitReport:
    """Three-stage least-squares fit of the custom-scheduler model.

    1. Per-MCS change-point scans give threshold points; a line through them
       gives (beta11, beta12). The feasibility line (beta9, beta10) comes from
       the lower edge of each MCS's SNR support.
    2. With the threshold line fixed, beta0..beta8 are linear: closed-form LSM.
    3. Nelder-Mead refines beta0..beta8 together with the threshold line,
       followed by a final closed-form solve of the linear block.

    beta6..beta8 (and the threshold line) are reported as unidentified, and
    zeroed, when no MCS level shows a significant change point.
    """
    variant = Variant(variant)
    a, c, y = np.asarray(ds.airtime), np.asarray(ds.snr_db), np.asarray(ds.power_w)
    m = np.asarray(ds.mcs, dtype=np.float64)
    n = len(y)
    if n < 50:
        raise FitError(f"custom fit needs at least 50 samples, got {n}")
    levels, counts = np.unique(m, return_counts=True)
    if len(levels) < 5:
        raise FitError(f"custom fit needs at least 5 distinct MCS values, got {len(levels)}")

    # Stage 1
    points = []
    for mv, cnt in zip(levels, counts):
        if cnt < MIN_SAMPLES_PER_MCS:
            continue
        sel = m == mv
        if np.ptp(c[sel]) <= 0:
            continue
        cp = _mcs_change_point(variant, mv, a[sel], c[sel], y[sel])
        if cp.detected:
            points.append(cp)
    b9, b10 = _fit_feasibility_line(c, m)
    unidentified: tuple[str, ...] = ()
    if len({p.mcs for p in points}) >= 2:
        X = np.column_stack([np.ones(len(points)), [p.mcs for p in points]])
        b11, b12 = (float(v) for v in np.linalg.lstsq(X, [p.threshold for p in points], rcond=None)[0])
    else:
        unidentified = ("beta6", "beta7", "beta8", "beta11", "beta12")
        b11, b12 = b9 + 1.0, b10
    b11, b12 = _repair_threshold_line(b9, b10, b11, b12)

    # Stage 2
    with_low = not unidentified
    lin, sse, _ = _lstsq(custom_design(variant, a, c, m, b11, b12, with_low), y)
    if not with_low:
        lin = np.concatenate([lin, np.zeros(3)])
    iters = 0

    # Stage 3
    if with_low:

        def objective(theta):
            beta = (*theta[:9], b9, b10, theta[9], theta[10])
            r = y - custom_curve(beta, variant, a, c, m)
            return float(r @ r)

        x0 = np.concatenate([lin, [b11, b12]])
        res = optimize.minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={"maxfev": NM_MAX_EVALS, "xatol": 1e-10, "fatol": 1e-14},
        )
        iters = int(res.nfev)
        if res.fun < sse:
            r11, r12 = _repair_threshold_line(b9, b10, float(res.x[9]), float(res.x[10]))
            lin2, sse2, _ = _lstsq(custom_design(variant, a, c, m, r11, r12), y)
            cand = [(float(res.fun), res.x[:9], float(res.x[9]), float(res.x[10])), (sse2, lin2, r11, r12)]
            cand = [cd for cd in cand if _line_ok(b9, b10, cd[2], cd[3])]
            best = min(cand, key=lambda cd: cd[0])
            if best[0] < sse:
                sse, lin, b11, b12 = best

    beta = (*[float(v) for v in lin], b9, b10, b11, b12)
    params = CustomRegParams(beta, variant)
    resid = y - custom_curve(params.beta, variant, a, c, m)
    sse = float(resid @ resid)
    return FitReport(params, math.sqrt(sse / n), n, iters, sse, unidentified)


def _line_ok(b9, b10, b11, b12) -> bool:
    return all(b9 + b10 * mm < b11 + b12 * mm for mm in (MCS_MIN, MCS_MAX))
