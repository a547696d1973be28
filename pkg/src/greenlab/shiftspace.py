"""Exact model system: the full one-sided shift on d symbols.

The uniform Bernoulli measure on d^N with the left shift is the symbolic
twin of z -> z^d on its invariant circle: digits of the angle are iid
uniform symbols.  Observables here are cylinder functions, i.e. functions
of the first m symbols, stored as d^m exact rationals in lexicographic
order (first symbol most significant).  Every Monte-Carlo estimator in
the sampling modules has an exact counterpart in this module, computed
with fractions.Fraction so agreement checks have a zero-error reference.

Transcendental comparisons (Bennett bounds, exponential series) cannot be
exact, so they are certified instead: both sides are enclosed in mpmath
interval arithmetic and the inequality is only reported as holding when
the upper end of the left side clears the lower end of the right side.
Genuine equality cases are recognized symbolically, by canonical form,
before any floating point happens.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from mpmath import iv

from .errors import DepthUnsupported, InvalidParams
from .rng import SALT_MISC, stream

# Hard cap on exact enumeration: d**depth cells.
ENUM_BUDGET = 1 << 20


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    return Fraction(x)


@dataclass(frozen=True)
class CylinderFunction:
    """Function of the first `depth` symbols on the d-shift, exact values.

    table[i] is the value on the cylinder whose word w1..wm has index
    i = sum w_k d^(m-k); the first symbol is the most significant digit.
    """

    d: int
    depth: int
    table: tuple[Fraction, ...]

    def __post_init__(self):
        if self.d < 2:
            raise InvalidParams(f"shift needs d >= 2, got {self.d}")
        if self.depth < 0:
            raise InvalidParams("depth must be >= 0")
        if self.d**self.depth > ENUM_BUDGET:
            raise DepthUnsupported(
                f"d^depth = {self.d}^{self.depth} exceeds enumeration budget {ENUM_BUDGET}"
            )
        if len(self.table) != self.d**self.depth:
            raise InvalidParams(
                f"table length {len(self.table)} != d^depth = {self.d ** self.depth}"
            )
        object.__setattr__(self, "table", tuple(_as_fraction(v) for v in self.table))

    # -- basic algebra ----------------------------------------------------

    @staticmethod
    def constant(d: int, value) -> "CylinderFunction":
        return CylinderFunction(d, 0, (_as_fraction(value),))

    def value(self, word: Sequence[int]) -> Fraction:
        if len(word) < self.depth:
            raise InvalidParams("word shorter than cylinder depth")
        idx = 0
        for k in range(self.depth):
            idx = idx * self.d + int(word[k])
        return self.table[idx]

    def mean(self) -> Fraction:
        return sum(self.table, Fraction(0)) / len(self.table)

    def lift(self, depth: int) -> "CylinderFunction":
        """Same function viewed at a larger depth."""
        if depth < self.depth:
            raise InvalidParams("cannot lift to a smaller depth")
        if depth == self.depth:
            return self
        reps = self.d ** (depth - self.depth)
        table = tuple(v for v in self.table for _ in range(reps))
        return CylinderFunction(self.d, depth, table)

    def _binary(self, other, op) -> "CylinderFunction":
        if isinstance(other, CylinderFunction):
            if other.d != self.d:
                raise InvalidParams("mixed alphabet sizes")
            m = max(self.depth, other.depth)
            a, b = self.lift(m), other.lift(m)
            return CylinderFunction(self.d, m, tuple(op(x, y) for x, y in zip(a.table, b.table)))
        c = _as_fraction(other)
        return CylinderFunction(self.d, self.depth, tuple(op(x, c) for x in self.table))

    def __add__(self, other):
        return self._binary(other, lambda x, y: x + y)

    def __sub__(self, other):
        return self._binary(other, lambda x, y: x - y)

    def __mul__(self, other):
        return self._binary(other, lambda x, y: x * y)

    def __neg__(self):
        return CylinderFunction(self.d, self.depth, tuple(-v for v in self.table))

    __radd__ = __add__
    __rmul__ = __mul__

    def centered(self) -> "CylinderFunction":
        return self - self.mean()

    def compose_shift(self, n: int = 1) -> "CylinderFunction":
        """c o f^n: ignores the first n symbols, so depth grows by n."""
        out = self
        for _ in range(int(n)):
            out = CylinderFunction(out.d, out.depth + 1, out.table * out.d)
        return out

    def l2_norm_sq(self) -> Fraction:
        return sum((v * v for v in self.table), Fraction(0)) / len(self.table)

    def sup_abs(self) -> Fraction:
        return max(abs(v) for v in self.table)

    def is_zero(self) -> bool:
        return all(v == 0 for v in self.table)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        """{d, depth, table: [[num, den], ...]} with lexicographic cylinders."""
        return {
            "d": self.d,
            "depth": self.depth,
            "table": [[v.numerator, v.denominator] for v in self.table],
        }

    @staticmethod
    def from_json(obj: dict) -> "CylinderFunction":
        table = tuple(Fraction(num, den) for num, den in obj["table"])
        return CylinderFunction(int(obj["d"]), int(obj["depth"]), table)


def shift_transfer(c: CylinderFunction, n: int = 1) -> CylinderFunction:
    """Perron-Frobenius iterate: averages over the prepended symbol.

    (L c)(y1..y_{m-1}) = (1/d) sum_a c(a, y1..y_{m-1}); depth drops by one
    per application and constants are fixed.
    """
    out = c
    for _ in range(int(n)):
        if out.depth == 0:
            continue
        block = out.d ** (out.depth - 1)
        table = tuple(
            sum((out.table[a * block + i] for a in range(out.d)), Fraction(0)) / out.d
            for i in range(block)
        )
        out = CylinderFunction(out.d, out.depth - 1, table)
    return out


def shift_correlation(phi: CylinderFunction, psi: CylinderFunction, n: int) -> Fraction:
    """Exact C_n(phi, psi) = <(phi o f^n) psi> - <phi><psi>."""
    prod = phi.compose_shift(n) * psi
    return prod.mean() - phi.mean() * psi.mean()


def shift_higher_correlation(
    psis: Sequence[CylinderFunction], gaps: Sequence[int]
) -> Fraction:
    """Exact <psi0 (psi1 o f^{n1}) (psi2 o f^{n2}) ...> - prod of means.

    gaps = (n1, n2, ...) must be nondecreasing composition times.
    """
    acc = psis[0]
    mean_prod = psis[0].mean()
    for c, n in zip(psis[1:], gaps):
        acc = acc * c.compose_shift(n)
        mean_prod *= c.mean()
    return acc.mean() - mean_prod


def shift_conditional(psi: CylinderFunction, n: int) -> CylinderFunction:
    """E(psi | F_n) where F_n = f^{-n}(Borel): equals (L^n psi) o f^n."""
    return shift_transfer(psi, n).compose_shift(n)


def shift_variance(psi: CylinderFunction, n_max: int | None = None):
    """Exact asymptotic variance and its first-moment correction.

    Returns (sigma2, gamma, autocov) with autocov[j] = <psibar (psibar o f^j)>.
    Cylinder functions have finitely many nonzero autocovariances (j < depth),
    so the series are finite sums.
    """
    bar = psi.centered()
    top = psi.depth if n_max is None else min(n_max, psi.depth)
    autocov = []
    for j in range(max(top, 1)):
        autocov.append((bar * bar.compose_shift(j)).mean())
    sigma2 = autocov[0] + 2 * sum(autocov[1:], Fraction(0))
    gamma = 2 * sum((Fraction(j) * a for j, a in enumerate(autocov)), Fraction(0))
    return sigma2, gamma, autocov


def shift_birkhoff_moment2(psi: CylinderFunction, n: int) -> Fraction:
    """Exact <(S_n psibar)^2> via stationarity: n a_0 + 2 sum (n-j) a_j."""
    _, _, autocov = shift_variance(psi)
    total = Fraction(n) * autocov[0]
    for j in range(1, min(len(autocov), n)):
        total += 2 * Fraction(n - j) * autocov[j]
    return total


def shift_martingale(psi: CylinderFunction):
    """Exact martingale-coboundary splitting of a centered cylinder function.

    psibar = psi' + psi'' - psi'' o f with psi'' = -sum_{n>=1} L^n psibar
    (a finite sum: L^depth psibar = 0).  Returns (psi_prime, psi_dblprime).
    """
    bar = psi.centered()
    parts = []
    cur = bar
    for _ in range(bar.depth):
        cur = shift_transfer(cur, 1)
        parts.append(cur)
    dbl = CylinderFunction.constant(psi.d, 0)
    for p in parts:
        dbl = dbl - p
    prime = bar - dbl + dbl.compose_shift(1)
    return prime, dbl


def shift_ldt_exact(psi: CylinderFunction, n: int, eps) -> Fraction:
    """Exact m{ |S_n psi / n - <psi>| > eps } by dynamic programming.

    Depth-1 observables see iid symbols, so this is an n-fold convolution.
    Deeper cylinders use a sliding-window DP whose state is the last
    depth-1 symbols; DepthUnsupported when that state space times n
    exceeds the enumeration budget.
    """
    if n < 1:
        raise InvalidParams("n must be >= 1")
    eps = _as_fraction(eps)
    d, m = psi.d, psi.depth
    if m == 0:
        return Fraction(0) if eps > 0 else Fraction(1)
    if m > 1 and d ** (m - 1) * n > ENUM_BUDGET:
        raise DepthUnsupported(
            f"window DP size d^(depth-1) * n = {d ** (m - 1) * n} exceeds budget"
        )

    if m == 1:
        dist: dict[Fraction, Fraction] = {Fraction(0): Fraction(1)}
        p = Fraction(1, d)
        for _ in range(n):
            nxt: dict[Fraction, Fraction] = {}
            for s, pr in dist.items():
                for v in psi.table:
                    key = s + v
                    nxt[key] = nxt.get(key, Fraction(0)) + pr * p
            dist = nxt
    else:
        # state: index of the window (x_{k+1} .. x_{k+m-1})
        block = d ** (m - 1)
        p0 = Fraction(1, d ** (m - 1))
        states: dict[int, dict[Fraction, Fraction]] = {
            s: {Fraction(0): p0} for s in range(block)
        }
        pstep = Fraction(1, d)
        for _ in range(n):
            nxt: dict[int, dict[Fraction, Fraction]] = {}
            for s, sums in states.items():
                for a in range(d):
                    widx = s * d + a  # full window index, depth m
                    val = psi.table[widx]
                    ns = widx % block  # drop the oldest symbol
                    bucket = nxt.setdefault(ns, {})
                    for acc, pr in sums.items():
                        key = acc + val
                        bucket[key] = bucket.get(key, Fraction(0)) + pr * pstep
            states = nxt
        dist = {}
        for sums in states.values():
            for acc, pr in sums.items():
                dist[acc] = dist.get(acc, Fraction(0)) + pr

    center = Fraction(n) * psi.mean()
    bound = Fraction(n) * eps
    tail = Fraction(0)
    for s, pr in dist.items():
        if abs(s - center) > bound:
            tail += pr
    return tail


# ---------------------------------------------------------------------------
# Certified transcendental comparisons.
# ---------------------------------------------------------------------------


def _canonical_exp_sum(terms):
    """Canonical form of sum_i mass_i * exp(e_i): merged, sorted, zero-free."""
    acc: dict[Fraction, Fraction] = {}
    for mass, e in terms:
        mass, e = _as_fraction(mass), _as_fraction(e)
        if mass != 0:
            acc[e] = acc.get(e, Fraction(0)) + mass
    return tuple(sorted((e, m) for e, m in acc.items() if m != 0))


def _iv_exp_sum(terms, prec: int):
    iv.prec = prec
    total = iv.mpf(0)
    for mass, e in terms:
        mass, e = _as_fraction(mass), _as_fraction(e)
        total += iv.mpf(mass.numerator) / iv.mpf(mass.denominator) * iv.exp(
            iv.mpf(e.numerator) / iv.mpf(e.denominator)
        )
    return total


def certified_exp_sum_le(lhs_terms, rhs_terms, precs=(80, 160, 320, 640)) -> str:
    """Decide sum(m_i e^{a_i}) <= sum(n_j e^{b_j}) with a rigorous verdict.

    Returns 'equal' when the canonical forms coincide (symbolic equality),
    'le' when interval arithmetic proves strict or non-strict inequality,
    'gt' when it proves the reverse, and 'unknown' if every precision level
    leaves the enclosures overlapping.
    """
    lc, rc = _canonical_exp_sum(lhs_terms), _canonical_exp_sum(rhs_terms)
    if lc == rc:
        return "equal"
    for prec in precs:
        left = _iv_exp_sum(lhs_terms, prec)
        right = _iv_exp_sum(rhs_terms, prec)
        if left.b <= right.a:
            return "le"
        if left.a > right.b:
            return "gt"
    return "unknown"


@dataclass
class BennettReport:
    b: Fraction
    n_cases: int = 0
    n_pass: int = 0
    n_equal: int = 0
    equality_witnessed: bool = False
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and self.n_pass + self.n_equal == self.n_cases


def bennett_constants(nu: Fraction) -> tuple[Fraction, Fraction]:
    """(s_minus, s_plus) = (max(1, (1-nu)/nu), max(1, nu/(1-nu)))."""
    nu = _as_fraction(nu)
    if not 0 < nu < 1:
        raise InvalidParams("nu must lie in (0, 1)")
    return max(Fraction(1), (1 - nu) / nu), max(Fraction(1), nu / (1 - nu))


def bennett_check(
    b,
    nu,
    lambda_grid: Sequence[Fraction],
    t_grid_size: int = 9,
) -> BennettReport:
    """Certify the two-point Bennett bound for one atom mass nu.

    Model: one atom of mass nu where psi = t_A, complement where
    psi = t_B = -nu t_A / (1 - nu), so E psi = 0; t_A ranges over a grid
    in [-b, b] and values with |t_B| > b are skipped.  Each admissible case
    must satisfy  nu e^{l t_A} + (1-nu) e^{l t_B}
                  <= nu e^{-s- l b} + (1-nu) e^{s+ l b}.
    The extremal observable with values (-s- b, s+ b) must achieve
    equality, recognized by canonical form (its values exceed b whenever
    nu != 1/2, so it is the tangency point of the majorant, not a grid row).
    """
    b = _as_fraction(b)
    nu = _as_fraction(nu)
    if b <= 0:
        raise InvalidParams("b must be positive")
    if t_grid_size < 2:
        raise InvalidParams("t_grid_size must be >= 2")
    report = BennettReport(b=b)
    sm, sp = bennett_constants(nu)
    for lam in lambda_grid:
        lam = _as_fraction(lam)
        if lam < 0:
            raise InvalidParams("lambda grid must be nonnegative")
        rhs = [(nu, -sm * lam * b), (1 - nu, sp * lam * b)]
        for j in range(t_grid_size):
            t_a = -b + 2 * b * Fraction(j, t_grid_size - 1)
            t_b = -nu * t_a / (1 - nu)
            if abs(t_b) > b:
                continue
            lhs = [(nu, lam * t_a), (1 - nu, lam * t_b)]
            verdict = certified_exp_sum_le(lhs, rhs)
            report.n_cases += 1
            if verdict == "le":
                report.n_pass += 1
            elif verdict == "equal":
                report.n_equal += 1
            else:
                report.failures.append(
                    {"nu": nu, "lambda": lam, "t_a": t_a, "verdict": verdict}
                )
        # extremal witness: values (-s- b, s+ b), exponents scaled by lambda
        extremal = [(nu, -sm * lam * b), (1 - nu, sp * lam * b)]
        if certified_exp_sum_le(extremal, rhs) == "equal":
            report.equality_witnessed = True
        else:
            report.failures.append(
                {"nu": nu, "lambda": lam, "case": "extremal", "verdict": "not-equal"}
            )
    return report


def bennett_grid_check(
    b, nu_grid: Sequence[Fraction], lambda_grid: Sequence[Fraction], t_grid_size: int = 9
) -> BennettReport:
    """bennett_check aggregated over a nu grid."""
    total = BennettReport(b=_as_fraction(b))
    total.equality_witnessed = True
    for nu in nu_grid:
        rep = bennett_check(b, nu, lambda_grid, t_grid_size)
        total.n_cases += rep.n_cases
        total.n_pass += rep.n_pass
        total.n_equal += rep.n_equal
        total.failures.extend(rep.failures)
        total.equality_witnessed &= rep.equality_witnessed
    return total


@dataclass
class FiberSetReport:
    d: int
    n_checked: int
    ok: bool
    ratio: Fraction


def fiber_set_check(d: int, max_depth: int = 3) -> FiberSetReport:
    """Verify m(A & B) = (1 - 1/d) m(B) for A = {x1 != 0}, B in F_1.

    B runs over all cylinders on coordinates 2..max_depth+1 (and the full
    space); everything is enumerated exactly at depth max_depth + 1.
    """
    total_depth = max_depth + 1
    if d**total_depth > ENUM_BUDGET:
        raise DepthUnsupported("fiber-set enumeration exceeds budget")
    ratio = Fraction(d - 1, d)
    n_checked = 0
    ok = True
    words = list(itertools.product(range(d), repeat=total_depth))
    unit = Fraction(1, d**total_depth)
    for bdepth in range(0, max_depth + 1):
        for bword in itertools.product(range(d), repeat=bdepth):
            mB = Fraction(0)
            mAB = Fraction(0)
            for w in words:
                if tuple(w[1 : 1 + bdepth]) == bword:
                    mB += unit
                    if w[0] != 0:
                        mAB += unit
            n_checked += 1
            if mAB != ratio * mB:
                ok = False
    return FiberSetReport(d=d, n_checked=n_checked, ok=ok, ratio=ratio)


@dataclass
class AbstractSystemReport:
    """Summary of the measure-theoretic scaffolding the shift provides."""

    d: int
    kappa: int
    invariance_ok: bool
    jacobian_ok: bool
    kappa_tight: bool
    delta: Fraction
    delta_ok: bool
    n_checked: int


def bounded_jacobian_check(depth: int = 4, d: int = 2) -> AbstractSystemReport:
    """Exact invariance f_* m = m and image bound m(f(A)) <= kappa m(A).

    For the shift, f(cylinder of depth m) is the depth-(m-1) cylinder, so
    kappa = d holds with equality on every cylinder of depth >= 1; that is
    recorded as tightness.  delta is a rational placed in (1, d^{1/5}),
    verified exactly via delta^5 < d.
    """
    if d**depth > ENUM_BUDGET:
        raise DepthUnsupported("jacobian enumeration exceeds budget")
    invariance_ok = True
    jacobian_ok = True
    kappa_tight = True
    n_checked = 0
    for m in range(1, depth + 1):
        mass = Fraction(1, d**m)
        image_mass = Fraction(1, d ** (m - 1))
        preimage_mass = mass  # f^{-1}{w} = {(a, w)} has d cells of depth m+1
        n_checked += d**m
        if preimage_mass != mass:
            invariance_ok = False
        if image_mass > d * mass:
            jacobian_ok = False
        if image_mass != d * mass:
            kappa_tight = False
    # rational midpoint of (1, d^(1/5)), certified by exact power comparison
    delta = Fraction((1.0 + float(d) ** 0.2) / 2.0).limit_denominator(10**6)
    delta_ok = delta > 1 and delta**5 < d
    return AbstractSystemReport(
        d=d,
        kappa=d,
        invariance_ok=invariance_ok,
        jacobian_ok=jacobian_ok,
        kappa_tight=kappa_tight,
        delta=delta,
        delta_ok=delta_ok,
        n_checked=n_checked,
    )


@dataclass
class ExpSeriesReport:
    mode: str
    theta: Fraction
    total_verdict: str
    holder_verdicts: list

    @property
    def ok(self) -> bool:
        good = {"le", "equal"}
        return self.total_verdict in good and all(v in good for v in self.holder_verdicts)


def exp_series_check(
    c,
    theta,
    depth: int = 3,
    n_terms: int = 6,
    d: int = 2,
    mode: str = "random",
    seed: int = 0,
) -> ExpSeriesReport:
    """Certify the geometric exponential-series bound on the shift.

    Builds eta_n = lam_n * log(c) with rational tables 0 <= lam_n <= 1, so
    <exp(eta_n)> <= c holds pointwise, forms
    xi_m = (1-theta) sum_{n>=m} theta^{n-m} eta_n (truncated at n_terms),
    and certifies  <exp(xi_0)> <= c  plus every Hoelder step
    <exp(xi_m)> <= c^{1-theta} <exp(xi_{m+1})>^theta.

    Modes: 'zero' (lam = 0), 'constant' (lam = 1: the equality family,
    collapsing to c^{1 - theta^N} <= c, decided exactly on exponents), and
    'random' (seeded rational tables).
    """
    c = _as_fraction(c)
    theta = _as_fraction(theta)
    if c < 1:
        raise InvalidParams("eta >= 0 forces <exp(eta)> >= 1, so need c >= 1")
    if not 0 < theta < 1:
        raise InvalidParams("theta must lie in (0, 1)")

    if mode == "zero":
        lams = [CylinderFunction.constant(d, 0).lift(depth) for _ in range(n_terms)]
    elif mode == "constant":
        lams = [CylinderFunction.constant(d, 1).lift(depth) for _ in range(n_terms)]
    elif mode == "random":
        gen = stream(seed, SALT_MISC, 0xE5)
        lams = []
        for _ in range(n_terms):
            table = tuple(
                Fraction(int(gen.integers(0, 65)), 64) for _ in range(d**depth)
            )
            lams.append(CylinderFunction(d, depth, table))
    else:
        raise InvalidParams(f"unknown mode {mode!r}")

    # xi_m as a rational multiple of log c, cell by cell.
    def xi(m: int) -> CylinderFunction:
        acc = CylinderFunction.constant(d, 0).lift(depth)
        for n in range(m, n_terms):
            acc = acc + lams[n] * ((1 - theta) * theta ** (n - m))
        return acc

    def mean_exp_terms(fn: CylinderFunction, power: Fraction = Fraction(1)):
        # terms of <exp(power * fn * log c)> = d^-M sum c^(power * cell)
        w = Fraction(1, len(fn.table))
        return [(w, power * cell) for cell in fn.table]

    def certified_le_in_c(lhs, rhs) -> str:
        """Compare sums of mass * c^q; exact when c = 1 or exponents match."""
        lc = _canonical_exp_sum(lhs)
        rc = _canonical_exp_sum(rhs)
        if lc == rc:
            return "equal"
        if c == 1:
            # every term is just its mass
            sl = sum((m for _, m in lc), Fraction(0))
            sr = sum((m for _, m in rc), Fraction(0))
            return "equal" if sl == sr else ("le" if sl < sr else "gt")
        # single-term vs single-term with equal masses: exact on exponents (c > 1)
        if len(lc) == 1 and len(rc) == 1 and lc[0][1] == rc[0][1]:
            ql, qr = lc[0][0], rc[0][0]
            return "le" if ql <= qr else "gt"
        for prec in (80, 160, 320, 640):
            iv.prec = prec
            logc = iv.log(iv.mpf(c.numerator) / iv.mpf(c.denominator))
            def ev(ts):
                tot = iv.mpf(0)
                for mass, q in ts:
                    mass, q = _as_fraction(mass), _as_fraction(q)
                    tot += (iv.mpf(mass.numerator) / iv.mpf(mass.denominator)) * iv.exp(
                        (iv.mpf(q.numerator) / iv.mpf(q.denominator)) * logc
                    )
                return tot
            left, right = ev(lhs), ev(rhs)
            if left.b <= right.a:
                return "le"
            if left.a > right.b:
                return "gt"
        return "unknown"

    total_verdict = certified_le_in_c(
        mean_exp_terms(xi(0)), [(Fraction(1), Fraction(1))]
    )

    holder_verdicts = []
    for m in range(n_terms - 1):
        # <e^{xi_m}> <= c^{1-theta} <e^{xi_{m+1}}>^theta is certified via
        # interval power: rhs = exp((1-theta) ln c) * exp(theta ln <e^{xi_{m+1}}>)
        lhs_terms = mean_exp_terms(xi(m))
        nxt_terms = mean_exp_terms(xi(m + 1))
        lc = _canonical_exp_sum(lhs_terms)
        verdict = None
        # symbolic shortcut: single-cell (constant) functions give exact exponents
        if len(lc) == 1 and len(_canonical_exp_sum(nxt_terms)) == 1:
            ql = lc[0][0]
            qn = _canonical_exp_sum(nxt_terms)[0][0]
            qr = (1 - theta) + theta * qn
            verdict = "equal" if ql == qr else ("le" if ql < qr else "gt")
        if verdict is None:
            for prec in (80, 160, 320, 640):
                iv.prec = prec
                logc = iv.log(iv.mpf(c.numerator) / iv.mpf(c.denominator))

                def ev(ts):
                    tot = iv.mpf(0)
                    for mass, q in ts:
                        mass, q = _as_fraction(mass), _as_fraction(q)
                        tot += (iv.mpf(mass.numerator) / iv.mpf(mass.denominator)) * iv.exp(
                            (iv.mpf(q.numerator) / iv.mpf(q.denominator)) * logc
                        )
                    return tot

                left = ev(lhs_terms)
                nxt = ev(nxt_terms)
                th = iv.mpf(theta.numerator) / iv.mpf(theta.denominator)
                right = iv.exp((1 - th) * logc) * iv.exp(th * iv.log(nxt))
                if left.b <= right.a:
                    verdict = "le"
                    break
                if left.a > right.b:
                    verdict = "gt"
                    break
            else:
                verdict = "unknown"
        holder_verdicts.append(verdict)

    return ExpSeriesReport(
        mode=mode, theta=theta, total_verdict=total_verdict, holder_verdicts=holder_verdicts
    )


def make_random_cylinder(d: int, depth: int, seed: int, denom: int = 16) -> CylinderFunction:
    """Deterministic pseudo-random rational table, for tests and mirrors."""
    gen = stream(seed, SALT_MISC, 0xC1)
    table = tuple(
        Fraction(int(gen.integers(-denom, denom + 1)), denom) for _ in range(d**depth)
    )
    return CylinderFunction(d, depth, table)


# ---------------------------------------------------------------------------
# The full exact-check suite, runnable as one unit.
# ---------------------------------------------------------------------------


@dataclass
class OracleCheck:
    name: str
    ok: bool
    detail: str


@dataclass
class OracleSuiteReport:
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def n_failed(self) -> int:
        return sum(0 if c.ok else 1 for c in self.checks)

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "ok": self.ok,
            "n_checks": len(self.checks),
            "n_failed": self.n_failed,
            "checks": [
                {"name": c.name, "ok": c.ok, "detail": c.detail} for c in self.checks
            ],
        }

    def csv_rows(self) -> tuple[list, list]:
        header = ["check", "ok", "detail"]
        return header, [[c.name, int(c.ok), c.detail] for c in self.checks]


def oracle_suite(d: int = 2, depth: int = 3, seed: int = 0) -> OracleSuiteReport:
    """Run every exact identity and certified inequality in this module.

    All comparisons are on Fractions, zero tolerance; the transcendental
    ones (Bennett, exp-series) go through the certified interval route.
    Any False entry means the oracle itself is broken, so downstream
    Monte-Carlo agreement checks would be meaningless.
    """
    if depth < 2:
        raise InvalidParams("suite needs depth >= 2 to exercise composition")
    checks: list[OracleCheck] = []

    def add(name: str, ok: bool, detail: str = "") -> None:
        checks.append(OracleCheck(name, bool(ok), detail))

    psi = make_random_cylinder(d, depth, seed)
    phi = make_random_cylinder(d, depth - 1, seed + 1)

    # transfer: averaging over the prepended symbol
    half = CylinderFunction(2, 1, (1, 0)) - Fraction(1, 2)
    add("transfer_centered_indicator", shift_transfer(half).is_zero(),
        "L(1{x1=0} - 1/2) = 0")
    c00 = CylinderFunction(2, 2, (1, 0, 0, 0)) - Fraction(1, 4)
    want = CylinderFunction(2, 1, (Fraction(1, 2), 0)) - Fraction(1, 4)
    add("transfer_depth2_cell", shift_transfer(c00).table == want.table,
        "L(1{x1=x2=0} - 1/4) = (1/2)1{x1=0} - 1/4")
    sm = shift_transfer(psi, depth)
    add("transfer_full_smoothing",
        sm.depth == 0 and sm.table[0] == psi.mean(),
        f"L^{depth} psi = mean = {psi.mean()}")
    const = CylinderFunction.constant(d, Fraction(3, 7))
    add("transfer_fixes_constants", shift_transfer(const, 2).table == const.table,
        "L c = c for constant c")

    # adjoint identity: forward-composition route vs transfer route
    adj_ok = True
    for n in range(depth + 1):
        lhs = shift_correlation(phi, psi, n)
        rhs = (phi * shift_transfer(psi, n)).mean() - phi.mean() * psi.mean()
        adj_ok &= lhs == rhs
    add("adjoint_identity", adj_ok,
        f"<(phi o f^n) psi> = <phi L^n psi>, n = 0..{depth}")

    # conditional expectations and the norm identity
    add("conditional_identity_n0",
        shift_conditional(psi, 0).table == psi.table, "E(psi|F_0) = psi")
    cond_big = shift_conditional(psi, depth + 1)
    add("conditional_full_smoothing",
        all(v == psi.mean() for v in cond_big.table),
        "E(psi|F_n) = <psi> for n >= depth")
    norm_ok = True
    for n in range(depth + 1):
        norm_ok &= shift_conditional(psi, n).l2_norm_sq() == shift_transfer(psi, n).l2_norm_sq()
    add("conditional_norm_identity", norm_ok,
        "||E(psi|F_n)||_2 = ||L^n psi||_2, n = 0..depth")

    # Gordin summability: centered cylinder has exactly depth nonzero terms
    bar = psi.centered()
    nz = [not shift_conditional(bar, n).is_zero() for n in range(depth + 2)]
    add("gordin_finiteness",
        all(nz[:depth]) and not any(nz[depth:]),
        f"E(psibar|F_n) != 0 iff n < depth = {depth}")

    # martingale-coboundary splitting, exact
    prime, dbl = shift_martingale(psi)
    recon = prime + dbl - dbl.compose_shift(1)
    lifted = bar.lift(recon.depth)
    add("martingale_reconstruction", recon.table == lifted.table,
        "psibar = psi' + psi'' - psi'' o f")
    add("martingale_transfer_kills", shift_transfer(prime).is_zero(),
        "L psi' = 0")

    # variance: for n >= depth the second moment is exactly linear in n
    sigma2, gamma, _ = shift_variance(psi)
    var_ok = True
    for n in (depth, depth + 3):
        var_ok &= shift_birkhoff_moment2(psi, n) == Fraction(n) * sigma2 - gamma
    add("variance_linearity", var_ok,
        f"<(S_n psibar)^2> = n sigma2 - gamma for n >= depth; sigma2 = {sigma2}")

    # higher-order correlation collapses to the pair correlation
    pair_ok = all(
        shift_higher_correlation([phi, psi], [n]) == shift_correlation(psi, phi, n)
        for n in range(3)
    )
    add("higher_order_pair_case", pair_ok,
        "<psi0 (psi1 o f^n)> - means matches the pair form")

    # large deviations: exact binomial tails under the (log n)^-2 envelope
    ind = CylinderFunction(2, 1, (1, 0))
    add("ldt_binomial_cell",
        shift_ldt_exact(ind, 4, Fraction(1, 4)) == Fraction(1, 8),
        "P(|Bin(4,1/2)/4 - 1/2| > 1/4) = 1/8")
    add("ldt_bounded_range",
        shift_ldt_exact(ind, 1, Fraction(3, 5)) == 0,
        "deviation beyond the range has mass 0")
    ldt_grid = (4, 8, 16, 32, 64)
    tails = [float(shift_ldt_exact(ind, n, Fraction(1, 4))) for n in ldt_grid]
    hs = [-math.log(t) * math.log(n) ** 2 / n for n, t in zip(ldt_grid, tails) if t > 0]
    h = min(hs) if hs else float("inf")
    add("ldt_envelope_rate", all(t < 1 for t in tails) and h > 0,
        f"h_eps = {h:.4f} > 0 over n in {ldt_grid}")

    # Bennett two-point bound, certified, with the extremal equality case
    nu_grid = (Fraction(1, 3), Fraction(1, 2), Fraction(2, 3))
    lam_grid = (Fraction(0), Fraction(1, 4), Fraction(1), Fraction(2))
    ben = bennett_grid_check(Fraction(1), nu_grid, lam_grid)
    add("bennett_grid", ben.ok and ben.equality_witnessed,
        f"{ben.n_cases} cases, {len(ben.failures)} failures, extremal equality seen")

    # fiber sets, invariance, bounded jacobian
    for dd in (2, 3):
        fs = fiber_set_check(dd)
        add(f"fiber_set_d{dd}", fs.ok,
            f"{fs.n_checked} cylinders at ratio {fs.ratio}")
        bj = bounded_jacobian_check(depth=4 if dd == 2 else 3, d=dd)
        add(f"jacobian_d{dd}",
            bj.invariance_ok and bj.jacobian_ok and bj.kappa_tight and bj.delta_ok,
            f"kappa = {bj.kappa} tight, delta = {bj.delta}, delta^5 < d")

    # exponential series: zero, equality family, random tables
    for mode in ("zero", "constant", "random"):
        es = exp_series_check(Fraction(3, 2), Fraction(1, 2), depth=depth,
                              d=d, mode=mode, seed=seed)
        add(f"exp_series_{mode}", es.ok,
            f"total {es.total_verdict}, holder {','.join(es.holder_verdicts)}")

    # serialization: exact roundtrip
    rt = CylinderFunction.from_json(psi.to_json())
    add("cylinder_json_roundtrip", rt == psi, "table of [num, den] pairs")

    return OracleSuiteReport(checks)
