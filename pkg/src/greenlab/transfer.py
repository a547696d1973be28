"""Perron-Frobenius operator, Gordin norms, and the martingale splitting.

Lambda psi (x) averages psi over the d preimages of x with multiplicity.
Iterates run on an exact preimage tree while d^n stays inside the budget
(estimate is then deterministic, stderr 0) and switch to Monte-Carlo
backward paths beyond it.  Trees expand branch-major, so the leaves of
point i sit at stride len(points); a reshape recovers per-point means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidParams, NoDecayDetected, TooManySingularHits
from .measure import EmpiricalMeasure, ExpMomentReport, integrate
from .observables import Observable, combine
from .rng import SALT_TRANSFER, uniform_block
from .sphere import (
    HPoints,
    RationalMap,
    SpherePoint,
    apply_batch,
    backward_step,
    children,
)


@dataclass(frozen=True)
class TransferBudget:
    exact_depth_max: int = 12
    mc_paths: int = 10_000

    def exact_ok(self, d: int, n: int) -> bool:
        return d**n <= d**self.exact_depth_max


DEFAULT_BUDGET = TransferBudget()


def _expand_tree(fmap: RationalMap, pts: HPoints, n: int) -> HPoints:
    """All d^n backward branches of each point, branch-major concatenation."""
    cur = pts
    for _ in range(n):
        kids = children(fmap, cur)
        cur = HPoints(
            np.concatenate([k.X for k in kids]), np.concatenate([k.Y for k in kids])
        )
    return cur


def _leaf_means(vals: np.ndarray, n_points: int) -> np.ndarray:
    """Per-point mean over leaves laid out branch-major at stride n_points."""
    return vals.reshape(-1, n_points).mean(axis=0)


def transfer_batch(
    fmap: RationalMap,
    obs: Observable,
    pts: HPoints,
    n: int,
    budget: TransferBudget = DEFAULT_BUDGET,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Lambda^n obs at every point of pts: (values, stderr-per-point).

    Exact tree within budget (stderr 0); otherwise budget.mc_paths random
    backward paths per point, each path with its own counter-based stream.
    """
    if n < 0:
        raise InvalidParams("n must be >= 0")
    m = len(pts.X)
    if n == 0:
        return obs.evaluate(pts), np.zeros(m)
    d = fmap.degree
    if budget.exact_ok(d, n):
        leaves = _expand_tree(fmap, pts, n)
        vals = obs.evaluate(leaves)
        bad = ~np.isfinite(vals)
        n_bad = int(bad.sum())
        if n_bad:
            if n_bad > 0.001 * vals.size:
                raise TooManySingularHits(n_bad, vals.size)
            # rare non-finite leaves: drop within each point's fiber mean
            vals = np.where(bad, 0.0, vals)
            counts = (~bad).reshape(-1, m).sum(axis=0)
            sums = vals.reshape(-1, m).sum(axis=0)
            return sums / np.maximum(counts, 1), np.zeros(m)
        return _leaf_means(vals, m), np.zeros(m)
    # Monte-Carlo: one backward path bundle per evaluation point
    paths = budget.mc_paths
    acc = np.zeros(m)
    acc2 = np.zeros(m)
    block = max(1, (1 << 18) // max(m, 1))
    done = 0
    while done < paths:
        take = min(block, paths - done)
        rep = HPoints(np.repeat(pts.X, take), np.repeat(pts.Y, take))
        idx = np.arange(done, done + take, dtype=np.uint64)
        u = uniform_block(seed, SALT_TRANSFER, idx, n)
        # path j of every point uses row j: tile to match repeat layout
        u_full = np.tile(u, (m, 1))
        cur = rep
        for t in range(n):
            cur = backward_step(fmap, cur, u_full[:, t])
        vals = obs.evaluate(cur).reshape(m, take)
        acc += vals.sum(axis=1)
        acc2 += (vals**2).sum(axis=1)
        done += take
    mean = acc / paths
    var = np.maximum(acc2 / paths - mean**2, 0.0)
    return mean, np.sqrt(var / paths)


def transfer(
    fmap: RationalMap,
    obs: Observable,
    p: SpherePoint,
    n: int,
    budget: TransferBudget = DEFAULT_BUDGET,
    seed: int = 0,
) -> tuple[float, float]:
    """Lambda^n obs at a single point; exact within budget, else Monte-Carlo."""
    vals, errs = transfer_batch(fmap, obs, HPoints.from_point(p, 1), n, budget, seed)
    return float(vals[0]), float(errs[0])


def _centered(obs: Observable, measure: EmpiricalMeasure) -> tuple[Observable, float, float]:
    """obs minus its mean: uses mean_hint when present, else the cloud mean.

    Returns (centered observable, mean used, stderr of that mean).
    """
    if obs.mean_hint is not None:
        mean, mean_se = float(obs.mean_hint), 0.0
    else:
        mean, mean_se = integrate(measure, obs)
    return obs.shifted(-mean), mean, mean_se


@dataclass
class GordinReport:
    norms: list
    norms_stderr: list
    partial_sum: float
    fitted_slope: float | None
    mean_used: float
    mean_stderr: float

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "norms": self.norms,
            "norms_stderr": self.norms_stderr,
            "partial_sum": self.partial_sum,
            "fitted_slope": self.fitted_slope,
            "mean_used": self.mean_used,
            "mean_stderr": self.mean_stderr,
        }


def gordin_sequence(
    fmap: RationalMap,
    measure: EmpiricalMeasure,
    obs: Observable,
    N: int,
    budget: TransferBudget = DEFAULT_BUDGET,
    seed: int = 0,
    n_eval: int = 1024,
) -> GordinReport:
    """L2(mu) norms of Lambda^n (obs - mean) for n = 0..N, plus their sum.

    The norms equal the conditional-expectation norms of the summability
    hypothesis behind the CLT; the fitted slope of log norm against n is a
    geometric-decay diagnostic (None when fewer than 3 norms are resolved).
    """
    if N < 1:
        raise InvalidParams("N must be >= 1")
    bar, mean, mean_se = _centered(obs, measure)
    sub = measure.subsample(n_eval)
    norms, errs = [], []
    for n in range(N + 1):
        vals, _ = transfer_batch(fmap, bar, sub.hpoints, n, budget, seed)
        sq = vals**2
        m2 = float(np.dot(sub.weights, sq))
        se_m2 = float(np.sqrt(np.dot(sub.weights**2, (sq - m2) ** 2)))
        norm = math.sqrt(max(m2, 0.0))
        norms.append(norm)
        # delta method: se(sqrt(x)) = se(x) / (2 sqrt(x))
        errs.append(se_m2 / (2 * norm) if norm > 0 else se_m2)
    # a norm is resolved only above its own stderr, the floor set by the
    # mean estimate (Lambda fixes constants, so centering error never
    # decays), and the float noise of the tree arithmetic
    noise = 1e-12 * max(norms[0], 1.0)
    resolved = [
        (n, v)
        for n, (v, e) in enumerate(zip(norms, errs))
        if v > max(3 * math.hypot(e, mean_se), noise)
    ]
    slope = None
    if len(resolved) >= 3:
        xs = np.array([n for n, _ in resolved], dtype=float)
        ys = np.log([v for _, v in resolved])
        slope = float(np.polyfit(xs, ys, 1)[0])
    return GordinReport(
        norms=norms,
        norms_stderr=errs,
        partial_sum=float(sum(norms)),
        fitted_slope=slope,
        mean_used=mean,
        mean_stderr=mean_se,
    )


def _transfer_observable(
    fmap: RationalMap, base: Observable, n: int, budget: TransferBudget, seed: int
) -> Observable:
    """Lambda^n base as an Observable (evaluates the tree on demand)."""

    def fn(pts: HPoints) -> np.ndarray:
        vals, _ = transfer_batch(fmap, base, pts, n, budget, seed)
        return vals

    return Observable(
        kind="composite", label=f"L^{n}({base.label})", fn=fn, mean_hint=base.mean_hint
    )


@dataclass
class MartingaleDecomposition:
    psi_prime: Observable
    psi_dblprime: Observable
    truncation_N: int
    tail_bound: float
    norms: list = field(default_factory=list)
    mean_used: float = 0.0
    mean_stderr: float = 0.0


def martingale_decompose(
    fmap: RationalMap,
    obs: Observable,
    measure: EmpiricalMeasure,
    tol: float = 1e-6,
    budget: TransferBudget = DEFAULT_BUDGET,
    seed: int = 0,
    n_eval: int = 1024,
) -> MartingaleDecomposition:
    """Split centered obs as psi' + psi'' - psi'' o f with Lambda psi' ~ 0.

    psi'' truncates -sum_{n=1..N} Lambda^n psibar at the smallest N whose
    L2 norm estimate drops below tol; the dropped tail is bounded by
    geometric extrapolation of the fitted decay factor.
    """
    bar, mean, mean_se = _centered(obs, measure)
    # centering error is a constant component and constants are fixed by
    # Lambda, so norms cannot be resolved below ~5 mean stderr
    floor = max(tol, 5 * mean_se)
    sub = measure.subsample(n_eval)
    norms = []
    N = None
    max_N = budget.exact_depth_max
    for n in range(1, max_N + 1):
        vals, _ = transfer_batch(fmap, bar, sub.hpoints, n, budget, seed)
        norm = math.sqrt(max(float(np.dot(sub.weights, vals**2)), 0.0))
        norms.append(norm)
        if norm < floor:
            N = n
            break
        # no-decay guard: five consecutive steps without a 0.9-factor drop
        if len(norms) >= 6:
            recent = norms[-6:]
            if all(recent[i + 1] > 0.9 * recent[i] for i in range(5)):
                raise NoDecayDetected(
                    f"L2 norms {recent} show no 0.9-factor decay over 5 steps"
                )
    if N is None:
        N = max_N
    # geometric tail bound from the observed decay factor
    if len(norms) >= 2 and norms[-2] > 0:
        ratio = min(max(norms[-1] / norms[-2], 1.0 / fmap.degree), 0.9)
    else:
        ratio = 1.0 / fmap.degree
    tail_bound = max(norms[-1], tol) * ratio / (1.0 - ratio)

    terms = [(-1.0, _transfer_observable(fmap, bar, n, budget, seed)) for n in range(1, N + 1)]
    dbl = combine(terms, label=f"psi''[N={N}]({obs.label})")

    def prime_fn(pts: HPoints) -> np.ndarray:
        fwd = apply_batch(fmap, pts)
        return bar.evaluate(pts) - dbl.evaluate(pts) + dbl.evaluate(fwd)

    prime = Observable(kind="composite", label=f"psi'({obs.label})", fn=prime_fn)
    return MartingaleDecomposition(
        psi_prime=prime,
        psi_dblprime=dbl,
        truncation_N=N,
        tail_bound=tail_bound,
        norms=norms,
        mean_used=mean,
        mean_stderr=mean_se,
    )


@dataclass
class MartingaleCheck:
    residual_norm: float
    residual_stderr: float
    residual_ok: bool
    orthogonality: list
    orthogonality_ok: bool
    threshold: float

    @property
    def ok(self) -> bool:
        return self.residual_ok and self.orthogonality_ok

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "residual_norm": self.residual_norm,
            "residual_stderr": self.residual_stderr,
            "residual_ok": self.residual_ok,
            "orthogonality": self.orthogonality,
            "orthogonality_ok": self.orthogonality_ok,
            "threshold": self.threshold,
        }


def check_martingale(
    fmap: RationalMap,
    measure: EmpiricalMeasure,
    dec: MartingaleDecomposition,
    budget: TransferBudget = DEFAULT_BUDGET,
    tol: float = 1e-6,
    seed: int = 0,
    n_eval: int = 512,
    grid: Sequence[tuple[int, int]] = ((0, 1), (0, 2), (1, 2)),
) -> MartingaleCheck:
    """Estimate ||Lambda psi'||_{L2(mu)} and the increment orthogonality.

    Both must fall below max(tol, 5 * stderr), the stderr folding in the
    mean-estimation error carried by the decomposition.
    """
    sub = measure.subsample(n_eval)
    lam_vals, _ = transfer_batch(fmap, dec.psi_prime, sub.hpoints, 1, budget, seed)
    m2 = float(np.dot(sub.weights, lam_vals**2))
    res = math.sqrt(max(m2, 0.0))
    se_m2 = float(np.sqrt(np.dot(sub.weights**2, (lam_vals**2 - m2) ** 2)))
    res_se = se_m2 / (2 * res) if res > 0 else se_m2
    res_se = math.hypot(res_se, dec.mean_stderr)
    threshold = max(tol, 5 * res_se)
    residual_ok = res <= threshold

    # forward iterates of the subsample once, reused across the grid
    iterates = {0: sub.hpoints}
    top = max(max(a, b) for a, b in grid)
    for k in range(1, top + 1):
        iterates[k] = apply_batch(fmap, iterates[k - 1])
    prime_vals = {k: dec.psi_prime.evaluate(v) for k, v in iterates.items()}
    ortho = []
    ortho_ok = True
    for a, b in grid:
        prod = prime_vals[a] * prime_vals[b]
        est = float(np.dot(sub.weights, prod))
        se = float(np.sqrt(np.dot(sub.weights**2, (prod - est) ** 2)))
        se = math.hypot(se, dec.mean_stderr)
        good = abs(est) <= max(tol, 5 * se)
        ortho.append({"n": a, "m": b, "value": est, "stderr": se, "ok": good})
        ortho_ok &= good
    return MartingaleCheck(
        residual_norm=res,
        residual_stderr=res_se,
        residual_ok=residual_ok,
        orthogonality=ortho,
        orthogonality_ok=ortho_ok,
        threshold=threshold,
    )


def exp_moment_transfer(
    fmap: RationalMap,
    measure: EmpiricalMeasure,
    obs: Observable,
    alpha: float,
    n: int,
    budget: TransferBudget = DEFAULT_BUDGET,
    seed: int = 0,
    n_eval: int = 2048,
) -> ExpMomentReport:
    """<mu, exp(alpha d^n |Lambda^n (obs - mean)|)> with heavy-tail diagnostic."""
    if alpha < 0:
        raise InvalidParams("alpha must be >= 0")
    bar, _, _ = _centered(obs, measure)
    if alpha == 0:
        return ExpMomentReport(1.0, 0.0, 0.0, [])
    sub = measure.subsample(n_eval)
    vals, _ = transfer_batch(fmap, bar, sub.hpoints, n, budget, seed)
    scale = alpha * float(fmap.degree) ** n
    contrib = np.exp(scale * np.abs(vals))
    flagged = bool(np.any(~np.isfinite(contrib)))
    order = np.argsort(contrib)[::-1][:5]
    coords, charts = sub.hpoints.charted()
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
    mean = float(np.dot(sub.weights, contrib))
    stderr = float(np.sqrt(np.dot(sub.weights**2, (contrib - mean) ** 2)))
    return ExpMomentReport(mean, stderr, float(alpha), top, False)
