"""Green measure machinery: escape-rate potential, sampler, and tail probes.

The sampler draws each cloud point as the endpoint of its own backward
random orbit: burn_in uniform branch choices starting from a fixed
generic point.  Per-orbit counter-based RNG streams make the cloud a pure
function of (map, n_samples, burn_in, seed) regardless of chunking or
worker count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ExceptionalStart,
    InsufficientTailData,
    InvalidParams,
    TooManySingularHits,
)
from .observables import Observable
from .rng import SALT_SAMPLER, uniform_block
from .sphere import (
    Chart,
    HPoints,
    RationalMap,
    SpherePoint,
    apply_homogeneous,
    backward_step,
    chordal_to_point,
    preimages,
)

CHUNK = 8192
DEFAULT_START = SpherePoint(2.0 + 1.0j, Chart.Z)


# ---------------------------------------------------------------------------
# Green function
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GreenValue:
    """Escape-rate partial sum for the affine lift (z, 1) of one point.

    `value` approximates the affine Green function: G of the lift (z, 1),
    which for a monomial z^d converges to log+ |z| (and to +inf at the
    point at infinity).  Internally the iteration runs on whichever chart
    the point is stored in; the chart lift differs from (z, 1) by a factor
    z, corrected exactly at the end.  `start_norm` is the log-norm of the
    raw chart lift, reported as the fixed normalization constant;
    increments are the per-step d^{-j} log terms.
    """

    value: float
    chart: Chart
    start_norm: float
    increments: tuple[float, ...]
    tail_bound: float


def green_function(fmap: RationalMap, p: SpherePoint, n_iter: int) -> GreenValue:
    """Normalized escape rate of the homogeneous lift, n_iter increments.

    Per-step renormalization keeps the pair on the unit sphere; the j-th
    increment d^{-j} log r_j sums to G up to a geometrically small tail.
    """
    if n_iter < 1:
        raise InvalidParams("n_iter must be >= 1")
    d = fmap.degree
    if p.chart is Chart.Z:
        X, Y = complex(p.coord), 1.0 + 0.0j
    else:
        X, Y = 1.0 + 0.0j, complex(p.coord)
    start_norm = 0.5 * math.log(abs(X) ** 2 + abs(Y) ** 2)
    norm = math.sqrt(abs(X) ** 2 + abs(Y) ** 2)
    pts = HPoints(np.array([X / norm]), np.array([Y / norm]))
    increments = []
    scale = 1.0
    for j in range(1, n_iter + 1):
        U, V = apply_homogeneous(fmap, pts.X, pts.Y)
        r = float(np.sqrt(np.abs(U) ** 2 + np.abs(V) ** 2)[0])
        if r == 0.0:
            raise InvalidParams("lift collapsed to zero; degenerate map slipped through")
        scale /= d
        increments.append(scale * math.log(r))
        pts = HPoints(U / r, V / r)
    tail_bound = abs(increments[-1]) / max(d - 1, 1)
    # chart correction: the w-chart lift (1, w) = (z, 1) / z, so the affine
    # value adds log|z| = -log|w|; at w = 0 the affine potential is +inf
    if p.chart is Chart.Z:
        correction = 0.0
    elif p.coord == 0:
        correction = math.inf
    else:
        correction = -math.log(abs(p.coord))
    return GreenValue(
        value=start_norm + sum(increments) + correction,
        chart=p.chart,
        start_norm=start_norm,
        increments=tuple(increments),
        tail_bound=tail_bound,
    )


# ---------------------------------------------------------------------------
# Empirical measure
# ---------------------------------------------------------------------------


@dataclass
class EmpiricalMeasure:
    hpoints: HPoints
    weights: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if len(self.weights) != len(self.hpoints.X):
            raise InvalidParams("weights length mismatch")
        if np.any(self.weights < 0):
            raise InvalidParams("weights must be nonnegative")
        total = float(self.weights.sum())
        if abs(total - 1.0) > 1e-12:
            raise InvalidParams(f"weights sum to {total}, expected 1")

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def points(self) -> list[SpherePoint]:
        return self.hpoints.to_points()

    def subsample(self, k: int) -> "EmpiricalMeasure":
        """Deterministic prefix of the cloud, reweighted uniformly."""
        k = min(k, self.n)
        sub = HPoints(self.hpoints.X[:k].copy(), self.hpoints.Y[:k].copy())
        w = np.full(k, 1.0 / k)
        return EmpiricalMeasure(sub, w, dict(self.meta, subsample_of=self.n))

    # -- persistence --------------------------------------------------------

    def to_csv(self, path: str) -> None:
        """Columns re, im, chart, weight; meta goes to a .meta.json sidecar."""
        coords, charts = self.hpoints.charted()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["re", "im", "chart", "weight"])
            for i in range(self.n):
                w.writerow(
                    [
                        "%.17g" % coords[i].real,
                        "%.17g" % coords[i].imag,
                        "z" if charts[i] == 0 else "w",
                        "%.17g" % self.weights[i],
                    ]
                )
        with open(path + ".meta.json", "w") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def from_csv(path: str) -> "EmpiricalMeasure":
        coords, charts, weights = [], [], []
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if header[:4] != ["re", "im", "chart", "weight"]:
                raise InvalidParams(f"unexpected CSV header {header}")
            for row in rd:
                coords.append(complex(float(row[0]), float(row[1])))
                charts.append(0 if row[2] == "z" else 1)
                weights.append(float(row[3]))
        try:
            with open(path + ".meta.json") as fh:
                meta = json.load(fh)
        except FileNotFoundError:
            meta = {}
        pts = HPoints.from_charted(
            np.asarray(coords, dtype=np.complex128), np.asarray(charts, dtype=np.uint8)
        )
        return EmpiricalMeasure(pts, np.asarray(weights), meta)


def _check_not_exceptional(fmap: RationalMap, start: SpherePoint) -> None:
    # a totally invariant finite set shows up as repeated singleton fibers
    p = start
    for _ in range(3):
        fiber = preimages(fmap, p)
        if len(fiber) > 1:
            return
        p = fiber[0][0]
    raise ExceptionalStart(
        f"start point {start} sits on a totally invariant finite set "
        "(three consecutive singleton fibers)"
    )


def sample_equilibrium(
    fmap: RationalMap,
    n_samples: int,
    burn_in: int = 50,
    seed: int = 0,
    start: SpherePoint | None = None,
    workers: int = 1,
) -> EmpiricalMeasure:
    """Backward-iteration sample cloud: n_samples independent orbits.

    Each orbit takes burn_in uniform branch choices from its own
    (seed, orbit index) stream, so the cloud is bit-identical for any
    worker count or chunk schedule.
    """
    if n_samples < 1:
        raise InvalidParams("n_samples must be >= 1")
    if burn_in < 30:
        raise InvalidParams("burn_in must be >= 30")
    start = start if start is not None else DEFAULT_START
    _check_not_exceptional(fmap, start)

    X = np.empty(n_samples, dtype=np.complex128)
    Y = np.empty(n_samples, dtype=np.complex128)

    def run_chunk(lo: int, hi: int) -> None:
        idx = np.arange(lo, hi, dtype=np.uint64)
        u = uniform_block(seed, SALT_SAMPLER, idx, burn_in)
        pts = HPoints.from_point(start, hi - lo)
        for t in range(burn_in):
            pts = backward_step(fmap, pts, u[:, t])
        X[lo:hi] = pts.X
        Y[lo:hi] = pts.Y

    spans = [(lo, min(lo + CHUNK, n_samples)) for lo in range(0, n_samples, CHUNK)]
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(lambda s: run_chunk(*s), spans))
    else:
        for s in spans:
            run_chunk(*s)

    weights = np.full(n_samples, 1.0 / n_samples)
    meta = {
        "seed": int(seed),
        "burn_in": int(burn_in),
        "n_samples": int(n_samples),
        "map_fingerprint": fmap.fingerprint,
        "start": {
            "re": start.coord.real,
            "im": start.coord.imag,
            "chart": "z" if start.chart is Chart.Z else "w",
        },
    }
    return EmpiricalMeasure(HPoints(X, Y), weights, meta)


# ---------------------------------------------------------------------------
# Integration and tail probes
# ---------------------------------------------------------------------------


def integrate(measure: EmpiricalMeasure, obs: Observable) -> tuple[float, float]:
    """Weighted mean and stderr; non-finite evaluations rejected and counted."""
    vals = obs.evaluate(measure.hpoints)
    finite = np.isfinite(vals)
    n_bad = int(measure.n - finite.sum())
    if n_bad > 0.001 * measure.n:
        raise TooManySingularHits(n_bad, measure.n)
    w = measure.weights[finite]
    v = vals[finite]
    wsum = w.sum()
    if wsum == 0:
        raise TooManySingularHits(n_bad, measure.n)
    w = w / wsum
    mean = float(np.dot(w, v))
    # reliability-weighted stderr of the mean
    stderr = float(np.sqrt(np.dot(w**2, (v - mean) ** 2)))
    return mean, stderr


def _tail_stderr(p: float, n_eff: float) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n_eff)


@dataclass
class ModerateReport:
    """Sublevel-mass decay fit: tail(M) ~ c_hat * exp(-alpha_hat M)."""

    m_grid: list
    tail: list
    tail_stderr: list
    alpha_hat: float | None
    alpha_halfwidth: float | None
    c_hat: float | None
    fit_window: list
    degenerate: bool = False

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "m_grid": self.m_grid,
            "tail": self.tail,
            "tail_stderr": self.tail_stderr,
            "alpha_hat": self.alpha_hat,
            "alpha_halfwidth": self.alpha_halfwidth,
            "c_hat": self.c_hat,
            "fit_window": self.fit_window,
            "degenerate": self.degenerate,
        }


def _exp_tail_fit(x: np.ndarray, tails: np.ndarray, stderrs: np.ndarray, passing: np.ndarray):
    """Weighted LS of log(tail) = log_c - alpha * x over the passing points.

    Returns (alpha, halfwidth, c, window). Weights are inverse delta-method
    variances of log(tail).
    """
    xs = x[passing]
    ys = np.log(tails[passing])
    wts = (tails[passing] / stderrs[passing]) ** 2  # 1 / Var[log tail]
    W = wts.sum()
    xbar = np.dot(wts, xs) / W
    ybar = np.dot(wts, ys) / W
    sxx = np.dot(wts, (xs - xbar) ** 2)
    if sxx == 0:
        raise InsufficientTailData("degenerate abscissa in tail fit")
    slope = np.dot(wts, (xs - xbar) * (ys - ybar)) / sxx
    intercept = ybar - slope * xbar
    # slope variance under the declared per-point variances
    var_slope = 1.0 / sxx
    half = 1.96 * math.sqrt(var_slope)
    idx = np.flatnonzero(passing)
    return float(-slope), float(half), float(math.exp(intercept)), [int(idx[0]), int(idx[-1])]


def psh_tail_exponent(
    measure: EmpiricalMeasure, obs: Observable, m_grid: Sequence[float]
) -> ModerateReport:
    """Fit mu{obs < -M} ~ c' e^{-alpha' M} over the grid.

    Grid points enter the fit only when their tail estimate exceeds 3
    standard errors; fewer than 3 such points raises InsufficientTailData
    unless the tail has died to exactly zero (bounded observable on this
    support), which is reported as a degenerate fit instead.
    """
    if obs.kind != "logsing":
        raise InvalidParams("psh tail probe expects a log-singular observable")
    if obs.beta is None or obs.beta <= 0:
        raise InvalidParams("psh tail probe needs beta > 0")
    m_arr = np.asarray(list(m_grid), dtype=np.float64)
    if m_arr.size < 3 or np.any(np.diff(m_arr) <= 0):
        raise InvalidParams("m_grid must be increasing with >= 3 points")
    vals = obs.evaluate(measure.hpoints)
    n_eff = 1.0 / float(np.sum(measure.weights**2))
    tails, errs = [], []
    for M in m_arr:
        p = float(np.dot(measure.weights, (vals < -M).astype(np.float64)))
        tails.append(p)
        errs.append(_tail_stderr(p, n_eff))
    tails = np.array(tails)
    errs = np.array(errs)
    passing = tails > 3.0 * errs
    n_pass = int(passing.sum())
    if n_pass < 3:
        if tails[-1] == 0.0:
            return ModerateReport(
                m_grid=[float(v) for v in m_arr],
                tail=[float(v) for v in tails],
                tail_stderr=[float(v) for v in errs],
                alpha_hat=None,
                alpha_halfwidth=None,
                c_hat=None,
                fit_window=[],
                degenerate=True,
            )
        raise InsufficientTailData(
            f"only {n_pass} grid points exceed 3 stderr; enlarge the sample or grid"
        )
    alpha, half, c, window = _exp_tail_fit(m_arr, tails, errs, passing)
    return ModerateReport(
        m_grid=[float(v) for v in m_arr],
        tail=[float(v) for v in tails],
        tail_stderr=[float(v) for v in errs],
        alpha_hat=alpha,
        alpha_halfwidth=half,
        c_hat=c,
        fit_window=window,
    )


@dataclass
class BallMassReport:
    """Mass-of-ball scaling fit: mass(r) ~ C r^alpha_hat."""

    r_grid: list
    mass: list
    mass_stderr: list
    hits: list
    alpha_hat: float | None
    alpha_halfwidth: float | None
    fit_window: list
    degenerate: bool = False

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "r_grid": self.r_grid,
            "mass": self.mass,
            "mass_stderr": self.mass_stderr,
            "hits": self.hits,
            "alpha_hat": self.alpha_hat,
            "alpha_halfwidth": self.alpha_halfwidth,
            "fit_window": self.fit_window,
            "degenerate": self.degenerate,
        }


def ball_mass_exponent(
    measure: EmpiricalMeasure, center: SpherePoint, radii: Sequence[float]
) -> BallMassReport:
    """Slope of log mu(B(center, r)) against log r.

    Radii must decrease; only radii catching >= 30 samples enter the fit.
    A center farther from the cloud than the largest radius (or all-zero
    masses) is a degenerate report, not an error.
    """
    r_arr = np.asarray(list(radii), dtype=np.float64)
    if r_arr.size < 3 or np.any(np.diff(r_arr) >= 0) or np.any(r_arr <= 0):
        raise InvalidParams("radii must be strictly decreasing positive, >= 3 points")
    dist = chordal_to_point(measure.hpoints, center)
    n_eff = 1.0 / float(np.sum(measure.weights**2))
    masses, errs, hits = [], [], []
    for r in r_arr:
        inside = dist < r
        m = float(np.dot(measure.weights, inside.astype(np.float64)))
        masses.append(m)
        errs.append(_tail_stderr(m, n_eff))
        hits.append(int(inside.sum()))
    masses_a = np.array(masses)
    errs_a = np.array(errs)
    usable = np.array(hits) >= 30
    if float(dist.min()) > r_arr[0] or masses_a[0] == 0.0:
        return BallMassReport(
            r_grid=[float(v) for v in r_arr],
            mass=masses,
            mass_stderr=[float(v) for v in errs_a],
            hits=hits,
            alpha_hat=None,
            alpha_halfwidth=None,
            fit_window=[],
            degenerate=True,
        )
    if int(usable.sum()) < 3:
        raise InsufficientTailData(
            f"only {int(usable.sum())} radii catch >= 30 samples"
        )
    # mass ~ C r^alpha: fit log mass against log r (slope alpha directly)
    alpha_neg, half, _, window = _exp_tail_fit(
        -np.log(r_arr), masses_a, errs_a, usable
    )
    return BallMassReport(
        r_grid=[float(v) for v in r_arr],
        mass=masses,
        mass_stderr=[float(v) for v in errs_a],
        hits=hits,
        alpha_hat=alpha_neg,
        alpha_halfwidth=half,
        fit_window=window,
    )


@dataclass
class ExpMomentReport:
    estimate: float
    stderr: float
    alpha: float
    top_contributors: list
    flagged: bool = False

    def __iter__(self):
        return iter((self.estimate, self.stderr))

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "alpha": self.alpha,
            "top_contributors": self.top_contributors,
            "flagged": self.flagged,
        }


def exp_moment(measure: EmpiricalMeasure, obs: Observable, alpha: float) -> ExpMomentReport:
    """Monte-Carlo <mu, e^{alpha |obs|}> with a heavy-tail diagnostic.

    Non-finite evaluations contribute +inf and flag the report; the top 5
    contributing samples are listed so a blow-up can be localized.
    """
    if alpha < 0:
        raise InvalidParams("alpha must be >= 0")
    if alpha == 0:
        return ExpMomentReport(1.0, 0.0, 0.0, [])
    vals = obs.evaluate(measure.hpoints)
    contrib = np.exp(alpha * np.abs(vals))
    flagged = bool(np.any(~np.isfinite(contrib)))
    order = np.argsort(contrib)[::-1][:5]
    coords, charts = measure.hpoints.charted()
    top = [
        {
            "value": float(contrib[i]),
            "re": float(coords[i].real),
            "im": float(coords[i].imag),
            "chart": "z" if charts[i] == 0 else "w",
        }
        for i in order
    ]
    if flagged:
        return ExpMomentReport(float("inf"), float("inf"), float(alpha), top, True)
    mean = float(np.dot(measure.weights, contrib))
    stderr = float(np.sqrt(np.dot(measure.weights**2, (contrib - mean) ** 2)))
    return ExpMomentReport(mean, stderr, float(alpha), top, False)
