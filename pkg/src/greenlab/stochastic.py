"""Statistics of Birkhoff sums under the equilibrium measure.

Sampling identity used throughout: the uniform-branch backward walk is the
reverse kernel of the measure, so after burn-in the walk y_0, y_1, ... is a
stationary chain and (psi(y_0) + ... + psi(y_{n-1})) has the law of the
Birkhoff sum S_n psi under mu.  One walk therefore yields S_n for every n
on a grid via prefix sums, and correlations <(phi o f^n) psi> via
phi(y_0) psi(y_n).

Orbit i always consumes stream (seed ^ SALT_BIRKHOFF, i), so results are
bit-identical for any worker count and any chunking.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.stats

from .errors import CoboundaryDetected, InvalidParams
from .measure import DEFAULT_START, EmpiricalMeasure, integrate
from .observables import Observable
from .rng import SALT_BIRKHOFF, uniform_block
from .sphere import HPoints, RationalMap, SpherePoint, apply, backward_step
from .transfer import DEFAULT_BUDGET, TransferBudget, transfer_batch

CHUNK = 8192

BOUNDED_KINDS = ("trigpoly", "holder", "cylinder")


def birkhoff_sum(fmap: RationalMap, obs: Observable, p: SpherePoint, n: int) -> float:
    """Forward-orbit sum obs(p) + obs(f p) + ... + obs(f^{n-1} p); S_0 = 0.

    A non-finite evaluation propagates into the returned value.
    """
    if n < 0:
        raise InvalidParams("n must be >= 0")
    total = 0.0
    cur = p
    for _ in range(n):
        total += obs.evaluate_point(cur)
        cur = apply(fmap, cur)
    return total


# -- backward-walk engine -----------------------------------------------------


def _walk(
    fmap: RationalMap,
    n_orbits: int,
    total_steps: int,
    burn_in: int,
    seed: int,
    start: SpherePoint,
    workers: int,
    record: Callable[[int, HPoints, int, int, dict], None],
) -> None:
    """Run n_orbits backward walks; record(j, pts, lo, hi, scratch) sees the
    stationary point y_j of orbits [lo, hi) for j = 0..total_steps.

    Chunks are fixed at CHUNK orbits and each orbit reads only its own
    stream, so output never depends on `workers`.
    """
    if n_orbits < 1:
        raise InvalidParams("n_orbits must be >= 1")
    if burn_in < 30:
        raise InvalidParams("burn_in must be >= 30")

    def run(lo: int) -> None:
        hi = min(lo + CHUNK, n_orbits)
        idx = np.arange(lo, hi, dtype=np.uint64)
        u = uniform_block(seed, SALT_BIRKHOFF, idx, burn_in + total_steps)
        pts = HPoints.from_point(start, hi - lo)
        for t in range(burn_in):
            pts = backward_step(fmap, pts, u[:, t])
        scratch: dict = {}
        for j in range(total_steps + 1):
            record(j, pts, lo, hi, scratch)
            if j < total_steps:
                pts = backward_step(fmap, pts, u[:, burn_in + j])

    starts = range(0, n_orbits, CHUNK)
    if workers <= 1:
        for lo in starts:
            run(lo)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(run, starts))


def birkhoff_samples(
    fmap: RationalMap,
    obs: Observable,
    n_grid: Sequence[int],
    n_orbits: int,
    burn_in: int = 50,
    seed: int = 0,
    start: SpherePoint | None = None,
    workers: int = 1,
) -> np.ndarray:
    """Samples of S_n obs for every n in n_grid: shape (n_orbits, len(n_grid)).

    Column order follows n_grid as given; all columns come from the same
    walks (prefix sums), so they are per-orbit consistent.
    """
    grid = [int(n) for n in n_grid]
    if not grid or any(n < 1 for n in grid):
        raise InvalidParams("n_grid entries must be >= 1")
    start = start or DEFAULT_START
    out = np.empty((n_orbits, len(grid)), dtype=np.float64)
    want = {}
    for col, n in enumerate(grid):
        want.setdefault(n - 1, []).append(col)

    def record(j: int, pts: HPoints, lo: int, hi: int, scratch: dict) -> None:
        acc = scratch.get("acc")
        vals = obs.evaluate(pts)
        acc = vals.copy() if acc is None else acc + vals
        scratch["acc"] = acc
        for col in want.get(j, ()):
            out[lo:hi, col] = acc

    _walk(fmap, n_orbits, max(grid) - 1, burn_in, seed, start, workers, record)
    return out


def _centered_pair(
    obs: Observable, measure: EmpiricalMeasure
) -> tuple[float, float]:
    """(mean, stderr) for centering: the hint when present, else cloud mean."""
    if obs.mean_hint is not None:
        return float(obs.mean_hint), 0.0
    return integrate(measure, obs)


# -- correlations -------------------------------------------------------------


@dataclass
class CorrelationReport:
    n_grid: list
    corr: list
    stderr: list
    corr_forward: list
    stderr_forward: list
    corr_adjoint: list
    stderr_adjoint: list
    discrepancy: list
    agree_ok: bool
    fitted_rate: float | None
    fitted_halfwidth: float | None
    class_expected_rate: float
    rate_conforms: bool | None
    no_claim: bool
    n_points_in_fit: int
    mean_phi: float
    mean_psi: float

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "n_grid": self.n_grid,
            "corr": self.corr,
            "stderr": self.stderr,
            "corr_forward": self.corr_forward,
            "stderr_forward": self.stderr_forward,
            "corr_adjoint": self.corr_adjoint,
            "stderr_adjoint": self.stderr_adjoint,
            "discrepancy": self.discrepancy,
            "agree_ok": self.agree_ok,
            "fitted_rate": self.fitted_rate,
            "fitted_halfwidth": self.fitted_halfwidth,
            "class_expected_rate": self.class_expected_rate,
            "rate_conforms": self.rate_conforms,
            "no_claim": self.no_claim,
            "n_points_in_fit": self.n_points_in_fit,
            "mean_phi": self.mean_phi,
            "mean_psi": self.mean_psi,
        }

    def csv_rows(self) -> tuple[list, list]:
        header = [
            "n",
            "corr",
            "stderr",
            "corr_forward",
            "stderr_forward",
            "corr_adjoint",
            "stderr_adjoint",
            "discrepancy",
        ]
        rows = []
        for i, n in enumerate(self.n_grid):
            rows.append(
                [
                    n,
                    self.corr[i],
                    self.stderr[i],
                    self.corr_forward[i],
                    self.stderr_forward[i],
                    self.corr_adjoint[i],
                    self.stderr_adjoint[i],
                    self.discrepancy[i],
                ]
            )
        return header, rows


def _rate_fit(
    ns: np.ndarray, corr: np.ndarray, err: np.ndarray
) -> tuple[float | None, float | None, int]:
    """Weighted LS slope of log|corr| against n over 3-stderr-significant points."""
    keep = (np.abs(corr) > 3 * err) & (np.abs(corr) > 0) & (ns >= 1)
    if keep.sum() < 3:
        return None, None, int(keep.sum())
    x = ns[keep].astype(float)
    y = np.log(np.abs(corr[keep]))
    w = (np.abs(corr[keep]) / np.maximum(err[keep], 1e-300)) ** 2
    w = np.minimum(w, 1e12)
    sw = w.sum()
    xb = float(np.dot(w, x) / sw)
    yb = float(np.dot(w, y) / sw)
    sxx = float(np.dot(w, (x - xb) ** 2))
    slope = float(np.dot(w, (x - xb) * (y - yb)) / sxx)
    half = 1.96 / math.sqrt(sxx)
    return slope, half, int(keep.sum())


def correlation_series(
    fmap: RationalMap,
    measure: EmpiricalMeasure,
    phi: Observable,
    psi: Observable,
    n_max: int,
    budget: TransferBudget = DEFAULT_BUDGET,
    seed: int = 0,
    n_orbits: int = 50_000,
    n_eval: int = 4096,
    burn_in: int = 50,
    workers: int = 1,
) -> CorrelationReport:
    """C_n(phi, psi) = <mu, (phi o f^n) psi> - <mu, phi><mu, psi> for n = 0..n_max.

    Two estimators: a forward one from backward walks (phi(y_0) psi(y_n))
    and the low-variance adjoint form <mu, phi Lambda^n psi> on the cloud,
    computed while the exact tree fits the budget.  The headline series
    takes the adjoint value where available and the forward one beyond.
    """
    if n_max < 1:
        raise InvalidParams("n_max must be >= 1")
    d = fmap.degree
    mean_phi, se_phi = _centered_pair(phi, measure)
    mean_psi, se_psi = _centered_pair(psi, measure)

    # forward estimator: one walk records psi at every step
    ns = np.arange(n_max + 1)
    prods = np.empty((n_orbits, n_max + 1), dtype=np.float64)
    phi0 = np.empty(n_orbits, dtype=np.float64)

    def record(j: int, pts: HPoints, lo: int, hi: int, scratch: dict) -> None:
        if j == 0:
            scratch["phi0"] = phi.evaluate(pts) - mean_phi
            phi0[lo:hi] = scratch["phi0"]
        prods[lo:hi, j] = scratch["phi0"] * (psi.evaluate(pts) - mean_psi)

    start = DEFAULT_START
    _walk(fmap, n_orbits, n_max, burn_in, seed, start, workers, record)
    corr_fwd = prods.mean(axis=0)
    se_fwd = prods.std(axis=0, ddof=1) / math.sqrt(n_orbits)
    # fold the centering error of each mean through the other factor
    fold = math.hypot(se_phi * (abs(mean_psi) + 1.0), se_psi * (abs(mean_phi) + 1.0))
    se_fwd = np.hypot(se_fwd, fold)

    # adjoint estimator on the cloud, exact tree while it fits
    sub = measure.subsample(n_eval)
    phi_c = phi.evaluate(sub.hpoints) - mean_phi
    corr_adj: list = []
    se_adj: list = []
    for n in range(n_max + 1):
        if not budget.exact_ok(d, n):
            corr_adj.append(None)
            se_adj.append(None)
            continue
        lam, _ = transfer_batch(fmap, psi.shifted(-mean_psi), sub.hpoints, n, budget, seed)
        q = phi_c * lam
        est = float(np.dot(sub.weights, q))
        se = float(np.sqrt(np.dot(sub.weights**2, (q - est) ** 2)))
        corr_adj.append(est)
        se_adj.append(math.hypot(se, fold))

    corr = np.array([a if a is not None else f for a, f in zip(corr_adj, corr_fwd)])
    err = np.array([a if a is not None else f for a, f in zip(se_adj, se_fwd)])
    disc = [
        abs(f - a) if a is not None else None for f, a in zip(corr_fwd, corr_adj)
    ]
    agree = all(
        dd <= 5 * math.hypot(ef, ea)
        for dd, ef, ea in zip(disc, se_fwd, se_adj)
        if dd is not None
    )

    slope, half, kept = _rate_fit(ns, corr, err)
    class_rate = psi.class_rate(d)
    conforms = None if slope is None else bool(slope <= class_rate + 0.2 * math.log(d))
    return CorrelationReport(
        n_grid=[int(n) for n in ns],
        corr=[float(v) for v in corr],
        stderr=[float(v) for v in err],
        corr_forward=[float(v) for v in corr_fwd],
        stderr_forward=[float(v) for v in se_fwd],
        corr_adjoint=[None if v is None else float(v) for v in corr_adj],
        stderr_adjoint=[None if v is None else float(v) for v in se_adj],
        discrepancy=[None if v is None else float(v) for v in disc],
        agree_ok=bool(agree),
        fitted_rate=slope,
        fitted_halfwidth=half,
        class_expected_rate=float(class_rate),
        rate_conforms=conforms,
        no_claim=slope is None,
        n_points_in_fit=kept,
        mean_phi=float(mean_phi),
        mean_psi=float(mean_psi),
    )


@dataclass
class HigherOrderReport:
    estimate: float
    stderr: float
    n1: int
    n2: int
    gap: int

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n1": self.n1,
            "n2": self.n2,
            "gap": self.gap,
        }


def higher_order_correlation(
    fmap: RationalMap,
    measure: EmpiricalMeasure,
    psi0: Observable,
    psi1: Observable,
    psi2: Observable,
    n1: int,
    n2: int,
    budget: TransferBudget = DEFAULT_BUDGET,
    seed: int = 0,
    n_orbits: int = 50_000,
    burn_in: int = 50,
    workers: int = 1,
) -> HigherOrderReport:
    """<mu, psi0 (psi1 o f^{n1}) (psi2 o f^{n2})> - prod of means, with stderr.

    The decay gap of the order-3 bound is min(n1, n2 - n1).  Time-reversed
    sampling evaluates psi0 at y_{n2}, psi1 at y_{n2-n1}, psi2 at y_0.
    """
    if not (0 <= n1 <= n2):
        raise InvalidParams("need 0 <= n1 <= n2")
    cols = {0: [], n2 - n1: [], n2: []}
    cols[n2].append((0, psi0))
    cols[n2 - n1].append((1, psi1))
    cols[0].append((2, psi2))
    vals = np.empty((n_orbits, 3), dtype=np.float64)

    def record(j: int, pts: HPoints, lo: int, hi: int, scratch: dict) -> None:
        for slot, ob in cols.get(j, ()):
            vals[lo:hi, slot] = ob.evaluate(pts)

    _walk(fmap, n_orbits, n2, burn_in, seed, DEFAULT_START, workers, record)
    prod = vals[:, 0] * vals[:, 1] * vals[:, 2]
    means = vals.mean(axis=0)
    if np.ptp(prod) == 0 and all(np.ptp(vals[:, k]) == 0 for k in range(3)):
        # constant observables: the connected correlation is identically 0
        return HigherOrderReport(0.0, 0.0, n1, n2, min(n1, n2 - n1))
    est = float(prod.mean() - means[0] * means[1] * means[2])
    se = float(prod.std(ddof=1) / math.sqrt(n_orbits))
    return HigherOrderReport(est, se, n1, n2, min(n1, n2 - n1))


# -- variance and CLT ---------------------------------------------------------


@dataclass
class VarianceReport:
    sigma2: float
    sigma2_raw: float
    gamma: float
    autocov: list
    autocov_stderr: list
    partial_sums: list
    truncation_bound: float
    birkhoff_n: list
    birkhoff_check: list
    birkhoff_stderr: list
    expansion_residual: list
    mean_used: float

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "sigma2": self.sigma2,
            "sigma2_raw": self.sigma2_raw,
            "gamma": self.gamma,
            "autocov": self.autocov,
            "autocov_stderr": self.autocov_stderr,
            "partial_sums": self.partial_sums,
            "truncation_bound": self.truncation_bound,
            "birkhoff_n": self.birkhoff_n,
            "birkhoff_check": self.birkhoff_check,
            "birkhoff_stderr": self.birkhoff_stderr,
            "expansion_residual": self.expansion_residual,
            "mean_used": self.mean_used,
        }

    def csv_rows(self) -> tuple[list, list]:
        header = ["n", "birkhoff_check", "birkhoff_stderr", "expansion_residual"]
        rows = [
            [n, self.birkhoff_check[i], self.birkhoff_stderr[i], self.expansion_residual[i]]
            for i, n in enumerate(self.birkhoff_n)
        ]
        return header, rows


def variance_sigma2(
    fmap: RationalMap,
    measure: EmpiricalMeasure,
    psi: Observable,
    n_max: int,
    budget: TransferBudget = DEFAULT_BUDGET,
    seed: int = 0,
    bk_grid: Sequence[int] = (8, 16, 32),
    n_orbits: int = 20_000,
    n_eval: int | None = None,
    burn_in: int = 50,
    workers: int = 1,
) -> VarianceReport:
    """sigma^2 = a_0 + 2 sum a_n and gamma = 2 sum n a_n from the Lambda tree.

    a_n = <mu, psibar Lambda^n psibar> on cloud points (exact tree while the
    budget allows); birkhoff_check holds the independent Monte-Carlo values
    of ||S_n psi||^2 / n on bk_grid, with the expansion residual
    |check - (sigma^2 - gamma/n)| per n.
    """
    if n_max < 1:
        raise InvalidParams("n_max must be >= 1")
    mean, _ = _centered_pair(psi, measure)
    bar = psi.shifted(-mean)
    # sigma^2 inherits the quadrature noise of every a_n, so default to a
    # large slice of the cloud; coboundary detection needs |error| << 0.01
    sub = measure.subsample(min(measure.n, 30_000) if n_eval is None else n_eval)
    base = bar.evaluate(sub.hpoints)
    autocov, acv_se = [], []
    for n in range(n_max + 1):
        if budget.exact_ok(fmap.degree, n):
            lam, _ = transfer_batch(fmap, bar, sub.hpoints, n, budget, seed)
            q = base * lam
            est = float(np.dot(sub.weights, q))
            se = float(np.sqrt(np.dot(sub.weights**2, (q - est) ** 2)))
        else:
            est, se = 0.0, 0.0
        autocov.append(est)
        acv_se.append(se)
    a = np.array(autocov)
    sigma2_raw = float(a[0] + 2 * a[1:].sum())
    gamma = float(2 * np.dot(np.arange(1, n_max + 1), a[1:]))
    partial = [float(a[0] + 2 * a[1 : k + 1].sum()) for k in range(n_max + 1)]
    # geometric extrapolation of the dropped tail
    tail_n = abs(a[-1])
    ratio = 1.0 / fmap.degree
    if n_max >= 2 and abs(a[-2]) > 0:
        ratio = min(max(abs(a[-1]) / abs(a[-2]), 0.05), 0.9)
    trunc = float(2 * tail_n * ratio / (1 - ratio))
    sigma2 = max(sigma2_raw, 0.0)

    grid = [int(n) for n in bk_grid]
    sums = birkhoff_samples(
        fmap, bar, grid, n_orbits, burn_in=burn_in, seed=seed, workers=workers
    )
    bk, bk_se, resid = [], [], []
    for i, n in enumerate(grid):
        q = sums[:, i] ** 2 / n
        est = float(q.mean())
        se = float(q.std(ddof=1) / math.sqrt(n_orbits))
        bk.append(est)
        bk_se.append(se)
        resid.append(abs(est - (sigma2_raw - gamma / n)))
    return VarianceReport(
        sigma2=sigma2,
        sigma2_raw=sigma2_raw,
        gamma=gamma,
        autocov=[float(v) for v in autocov],
        autocov_stderr=[float(v) for v in acv_se],
        partial_sums=partial,
        truncation_bound=trunc,
        birkhoff_n=grid,
        birkhoff_check=bk,
        birkhoff_stderr=bk_se,
        expansion_residual=resid,
        mean_used=float(mean),
    )


@dataclass
class CltReport:
    n: int
    n_orbits: int
    sigma: float
    sigma2: float
    ks_distance: float
    ks_pvalue: float
    quantile_probs: list
    quantiles_empirical: list
    quantiles_gaussian: list
    mean_used: float

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "n": self.n,
            "n_orbits": self.n_orbits,
            "sigma": self.sigma,
            "sigma2": self.sigma2,
            "ks_distance": self.ks_distance,
            "ks_pvalue": self.ks_pvalue,
            "quantile_probs": self.quantile_probs,
            "quantiles_empirical": self.quantiles_empirical,
            "quantiles_gaussian": self.quantiles_gaussian,
            "mean_used": self.mean_used,
        }

    def csv_rows(self) -> tuple[list, list]:
        header = ["prob", "empirical", "gaussian"]
        rows = [
            [p, self.quantiles_empirical[i], self.quantiles_gaussian[i]]
            for i, p in enumerate(self.quantile_probs)
        ]
        return header, rows


QUANTILE_PROBS = (0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)


def clt_test(
    fmap: RationalMap,
    measure: EmpiricalMeasure,
    psi: Observable,
    n: int,
    n_orbits: int,
    seed: int = 0,
    budget: TransferBudget = DEFAULT_BUDGET,
    sigma2: float | None = None,
    coboundary_tol: float = 0.01,
    burn_in: int = 50,
    workers: int = 1,
) -> CltReport:
    """KS distance of S_n psibar / sqrt(n) samples against N(0, sigma).

    sigma^2 comes from variance_sigma2 unless supplied; a value at or below
    coboundary_tol raises CoboundaryDetected (Birkhoff sums of a coboundary
    collapse instead of scaling).
    """
    if n_orbits < 1:
        raise InvalidParams("n_orbits must be >= 1")
    if n < 1:
        raise InvalidParams("n must be >= 1")
    mean, _ = _centered_pair(psi, measure)
    if sigma2 is None:
        rep = variance_sigma2(
            fmap, measure, psi, n_max=8, budget=budget, seed=seed,
            bk_grid=(8,), n_orbits=max(2000, n_orbits // 50), workers=workers,
        )
        sigma2 = rep.sigma2_raw
    if sigma2 <= coboundary_tol:
        raise CoboundaryDetected(sigma2)
    sigma = math.sqrt(sigma2)
    sums = birkhoff_samples(
        fmap, psi.shifted(-mean), [n], n_orbits,
        burn_in=burn_in, seed=seed, workers=workers,
    )[:, 0]
    z = sums / math.sqrt(n)
    ks = scipy.stats.kstest(z, "norm", args=(0.0, sigma))
    probs = list(QUANTILE_PROBS)
    emp = np.quantile(z, probs)
    gau = scipy.stats.norm.ppf(probs, loc=0.0, scale=sigma)
    return CltReport(
        n=int(n),
        n_orbits=int(n_orbits),
        sigma=float(sigma),
        sigma2=float(sigma2),
        ks_distance=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        quantile_probs=[float(p) for p in probs],
        quantiles_empirical=[float(v) for v in emp],
        quantiles_gaussian=[float(v) for v in gau],
        mean_used=float(mean),
    )


# -- large deviations ---------------------------------------------------------


@dataclass
class LdtReport:
    epsilon: float
    n_grid: list
    tail: list
    tail_stderr: list
    h_eps_hat: float | None
    envelope_ok: list
    control_epsilon: float
    control_tail: list
    mean_used: float
    n_orbits: int

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "epsilon": self.epsilon,
            "n_grid": self.n_grid,
            "tail": self.tail,
            "tail_stderr": self.tail_stderr,
            "h_eps_hat": self.h_eps_hat,
            "envelope_ok": self.envelope_ok,
            "control_epsilon": self.control_epsilon,
            "control_tail": self.control_tail,
            "mean_used": self.mean_used,
            "n_orbits": self.n_orbits,
        }

    def csv_rows(self) -> tuple[list, list]:
        header = ["n", "tail", "tail_stderr", "envelope_ok", "control_tail"]
        rows = [
            [n, self.tail[i], self.tail_stderr[i], int(self.envelope_ok[i]), self.control_tail[i]]
            for i, n in enumerate(self.n_grid)
        ]
        return header, rows


def fit_envelope_rate(
    n_grid: Sequence[int], tails: Sequence[float]
) -> tuple[float | None, list]:
    """Largest h with tail(n) <= exp(-n h / (log n)^2) across the grid.

    h is the minimum over usable points (n >= 2, tail > 0) of
    -log(tail) (log n)^2 / n; zero tails satisfy any envelope and n = 1 is
    outside the envelope's domain.  Returns (h or None, per-n flags).
    """
    hs = []
    for n, t in zip(n_grid, tails):
        if n < 2 or t <= 0:
            continue
        hs.append(-math.log(t) * math.log(n) ** 2 / n)
    if not hs:
        return None, [True for _ in n_grid]
    h = min(hs)
    flags = []
    for n, t in zip(n_grid, tails):
        if n < 2:
            flags.append(True)
        else:
            flags.append(bool(t <= math.exp(-n * h / math.log(n) ** 2) * (1 + 1e-9)))
    return h, flags


def ldt_tail(
    fmap: RationalMap,
    measure: EmpiricalMeasure,
    psi: Observable,
    epsilon: float,
    n_grid: Sequence[int],
    n_orbits: int,
    seed: int = 0,
    burn_in: int = 50,
    workers: int = 1,
) -> LdtReport:
    """Empirical tails mu{|S_n psi / n - mean| > epsilon} with envelope fit.

    Restricted to bounded observable classes; the negative-control column
    reruns the count at epsilon above sup|psi - mean| and must be exactly 0.
    """
    if psi.kind not in BOUNDED_KINDS:
        raise InvalidParams(
            f"ldt_tail needs a bounded observable class {BOUNDED_KINDS}, got {psi.kind!r}"
        )
    if epsilon <= 0:
        raise InvalidParams("epsilon must be > 0")
    grid = [int(n) for n in n_grid]
    if any(n < 1 for n in grid):
        raise InvalidParams("n_grid entries must be >= 1")
    mean, _ = _centered_pair(psi, measure)
    sums = birkhoff_samples(
        fmap, psi.shifted(-mean), grid, n_orbits,
        burn_in=burn_in, seed=seed, workers=workers,
    )
    if psi.sup_bound is not None:
        sup_c = psi.sup_bound + abs(mean)
    else:
        sup_c = float(np.abs(psi.evaluate(measure.hpoints) - mean).max())
    control_eps = 2.0 * sup_c

    tails, errs, controls = [], [], []
    for i, n in enumerate(grid):
        dev = np.abs(sums[:, i] / n)
        hit = dev > epsilon
        p = float(hit.mean())
        tails.append(p)
        errs.append(float(math.sqrt(max(p * (1 - p), 0.0) / n_orbits)))
        controls.append(float((dev > control_eps).mean()))
    h, flags = fit_envelope_rate(grid, tails)
    return LdtReport(
        epsilon=float(epsilon),
        n_grid=grid,
        tail=tails,
        tail_stderr=errs,
        h_eps_hat=h,
        envelope_ok=flags,
        control_epsilon=float(control_eps),
        control_tail=controls,
        mean_used=float(mean),
        n_orbits=int(n_orbits),
    )
