"""Points on the Riemann sphere and rational-map dynamics.

Points carry a chart tag: coordinate z on the standard chart, w = 1/z on
the inverted one, re-charted whenever the coordinate grows past modulus 2,
so all stored coordinates stay bounded.  Internally everything reduces to
homogeneous pairs (X, Y) with |X|^2 + |Y|^2 = 1 representing [X : Y];
that form is total (infinity is (1, 0)) and numerically uniform.

A rational map f = P/Q of degree d acts through its homogeneous lift
F(X, Y) = (P^(X, Y), Q^(X, Y)) with both components degree-d forms.
Preimages of a target [A : B] are the d projective roots (with
multiplicity) of the binary form B*P^ - A*Q^.

The chordal metric is normalized so the sphere has diameter 1:
dist([X1:Y1], [X2:Y2]) = |X1 Y2 - X2 Y1| for unit-norm pairs.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DegenerateMap, DegreeTooLow, RootFindingFailed

# Re-chart once the coordinate leaves this disc.
CHART_LIMIT = 2.0
# Relative backward-residual tolerance for accepted polynomial roots.
RESIDUAL_TOL = 1e-10
# Leading coefficients below this relative size mean a root at infinity.
LEAD_TOL = 1e-13
# Relative threshold under which the resultant counts as zero.
RESULTANT_TOL = 1e-12


class Chart(enum.Enum):
    Z = "z"
    W = "w"


@dataclass(frozen=True)
class SpherePoint:
    """A point of P^1 as (coordinate, chart), |coord| <= 2 after normalization."""

    coord: complex
    chart: Chart = Chart.Z

    def __post_init__(self):
        c = complex(self.coord)
        if not (np.isfinite(c.real) and np.isfinite(c.imag)):
            raise ValueError("coordinate must be finite; use chart W for infinity")
        chart = self.chart
        if abs(c) > CHART_LIMIT:
            c = 1.0 / c
            chart = Chart.W if chart is Chart.Z else Chart.Z
        object.__setattr__(self, "coord", c)
        object.__setattr__(self, "chart", chart)

    @staticmethod
    def infinity() -> "SpherePoint":
        return SpherePoint(0.0, Chart.W)

    def is_infinity(self) -> bool:
        return self.chart is Chart.W and self.coord == 0

    def to_homogeneous(self) -> tuple[complex, complex]:
        """Unit-norm pair (X, Y) with z = X/Y."""
        s = 1.0 / np.sqrt(1.0 + abs(self.coord) ** 2)
        if self.chart is Chart.Z:
            return self.coord * s, 1.0 * s
        return 1.0 * s, self.coord * s

    @staticmethod
    def from_homogeneous(X: complex, Y: complex) -> "SpherePoint":
        if X == 0 and Y == 0:
            raise ValueError("(0, 0) is not a projective point")
        if abs(X) <= abs(Y):
            return SpherePoint(X / Y, Chart.Z)
        return SpherePoint(Y / X, Chart.W)

    def other_chart_coord(self) -> complex:
        """Coordinate in the opposite chart; infinite for 0 and infinity."""
        if self.coord == 0:
            return complex(np.inf)
        return 1.0 / self.coord


def chordal(p: SpherePoint, q: SpherePoint) -> float:
    """Chordal distance, normalized to sphere diameter 1."""
    x1, y1 = p.to_homogeneous()
    x2, y2 = q.to_homogeneous()
    return min(1.0, abs(x1 * y2 - x2 * y1))


@dataclass(frozen=True)
class RationalMap:
    """Validated rational map; construct through make_rational_map."""

    numer: tuple[complex, ...]
    denom: tuple[complex, ...]
    degree: int

    @cached_property
    def p_pad(self) -> np.ndarray:
        out = np.zeros(self.degree + 1, dtype=np.complex128)
        out[: len(self.numer)] = self.numer
        return out

    @cached_property
    def q_pad(self) -> np.ndarray:
        out = np.zeros(self.degree + 1, dtype=np.complex128)
        out[: len(self.denom)] = self.denom
        return out

    @cached_property
    def fingerprint(self) -> str:
        text = "n:" + ",".join(f"{c.real:.17g}_{c.imag:.17g}" for c in self.numer)
        text += ";d:" + ",".join(f"{c.real:.17g}_{c.imag:.17g}" for c in self.denom)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _trim(coeffs: Sequence[complex]) -> list[complex]:
    out = [complex(c) for c in coeffs]
    while out and out[-1] == 0:
        out.pop()
    return out


def _sylvester_resultant(p: np.ndarray, q: np.ndarray, d: int) -> complex:
    """Resultant of the two degree-d forms given by padded coefficient rows."""
    n = 2 * d
    mat = np.zeros((n, n), dtype=np.complex128)
    # Rows are shifted copies of the coefficient vectors in descending order.
    pd = p[::-1]
    qd = q[::-1]
    for i in range(d):
        mat[i, i : i + d + 1] = pd
        mat[d + i, i : i + d + 1] = qd
    return complex(np.linalg.det(mat))


def make_rational_map(numer_coeffs: Sequence[complex], denom_coeffs: Sequence[complex]) -> RationalMap:
    """Build a rational map from ascending coefficient lists.

    numer_coeffs[j] multiplies z^j.  Raises DegreeTooLow if the algebraic
    degree is below 2 and DegenerateMap when numerator and denominator
    share a root (detected by a near-zero resultant), which would silently
    drop the degree.
    """
    p = _trim(numer_coeffs)
    q = _trim(denom_coeffs)
    if not p or not q:
        raise DegenerateMap("numerator or denominator is identically zero")
    d = max(len(p), len(q)) - 1
    if d < 2:
        raise DegreeTooLow(f"degree {d} < 2")
    p_pad = np.zeros(d + 1, dtype=np.complex128)
    p_pad[: len(p)] = p
    q_pad = np.zeros(d + 1, dtype=np.complex128)
    q_pad[: len(q)] = q
    res = _sylvester_resultant(p_pad, q_pad, d)
    scale = (np.linalg.norm(p_pad) * np.linalg.norm(q_pad)) ** d
    if abs(res) <= RESULTANT_TOL * scale:
        raise DegenerateMap(
            f"resultant {abs(res):.3e} below {RESULTANT_TOL:.0e} * scale; shared root"
        )
    return RationalMap(numer=tuple(p), denom=tuple(q), degree=d)


# ---------------------------------------------------------------------------
# Vectorized engine on homogeneous pairs.
# ---------------------------------------------------------------------------


@dataclass
class HPoints:
    """A batch of sphere points as unit-norm homogeneous arrays."""

    X: np.ndarray
    Y: np.ndarray

    def __len__(self) -> int:
        return len(self.X)

    @staticmethod
    def from_point(p: SpherePoint, n: int = 1) -> "HPoints":
        x, y = p.to_homogeneous()
        return HPoints(np.full(n, x, dtype=np.complex128), np.full(n, y, dtype=np.complex128))

    @staticmethod
    def from_points(points: Sequence[SpherePoint]) -> "HPoints":
        pairs = [p.to_homogeneous() for p in points]
        X = np.array([a for a, _ in pairs], dtype=np.complex128)
        Y = np.array([b for _, b in pairs], dtype=np.complex128)
        return HPoints(X, Y)

    def point(self, i: int) -> SpherePoint:
        return SpherePoint.from_homogeneous(complex(self.X[i]), complex(self.Y[i]))

    def to_points(self) -> list[SpherePoint]:
        return [self.point(i) for i in range(len(self))]

    def charted(self) -> tuple[np.ndarray, np.ndarray]:
        """(coord, chart) with chart 0 for z and 1 for w, |coord| <= 1."""
        use_w = np.abs(self.X) > np.abs(self.Y)
        coord = np.empty_like(self.X)
        np.divide(self.X, self.Y, out=coord, where=~use_w)
        np.divide(self.Y, self.X, out=coord, where=use_w)
        return coord, use_w.astype(np.uint8)

    @staticmethod
    def from_charted(coord: np.ndarray, chart: np.ndarray) -> "HPoints":
        coord = np.asarray(coord, dtype=np.complex128)
        chart = np.asarray(chart)
        s = 1.0 / np.sqrt(1.0 + np.abs(coord) ** 2)
        X = np.where(chart == 0, coord * s, s)
        Y = np.where(chart == 0, s, coord * s)
        return HPoints(X.astype(np.complex128), Y.astype(np.complex128))

    def z_coord(self) -> np.ndarray:
        """Affine coordinate z = X/Y; infinite where Y = 0."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.X / self.Y

    def angles(self) -> np.ndarray:
        """arg z in (-pi, pi]; well-defined away from 0 and infinity."""
        return np.angle(self.X * np.conj(self.Y))

    def normalize(self) -> "HPoints":
        n = np.sqrt(np.abs(self.X) ** 2 + np.abs(self.Y) ** 2)
        return HPoints(self.X / n, self.Y / n)

    def copy(self) -> "HPoints":
        return HPoints(self.X.copy(), self.Y.copy())


def chordal_batch(a: HPoints, b: HPoints) -> np.ndarray:
    return np.minimum(1.0, np.abs(a.X * b.Y - b.X * a.Y))


def chordal_to_point(a: HPoints, p: SpherePoint) -> np.ndarray:
    x, y = p.to_homogeneous()
    return np.minimum(1.0, np.abs(a.X * y - x * a.Y))


def _form_eval(coeffs: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Evaluate the degree-d form sum_j c_j X^j Y^(d-j) on unit-norm pairs."""
    d = len(coeffs) - 1
    acc = np.zeros_like(X)
    px = np.ones_like(X)
    xs = [None] * (d + 1)
    for j in range(d + 1):
        xs[j] = px
        if j < d:
            px = px * X
    py = np.ones_like(Y)
    for j in range(d, -1, -1):
        if coeffs[j] != 0:
            acc = acc + coeffs[j] * xs[j] * py
        py = py * Y
    return acc


def apply_homogeneous(fmap: RationalMap, X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized image pair (U, V) of the homogeneous lift."""
    U = _form_eval(fmap.p_pad, X, Y)
    V = _form_eval(fmap.q_pad, X, Y)
    return U, V


def apply_batch(fmap: RationalMap, pts: HPoints) -> HPoints:
    U, V = apply_homogeneous(fmap, pts.X, pts.Y)
    n = np.sqrt(np.abs(U) ** 2 + np.abs(V) ** 2)
    if np.any(n == 0):
        raise RootFindingFailed("homogeneous image collapsed to (0, 0)")
    return HPoints(U / n, V / n)


def apply(fmap: RationalMap, p: SpherePoint) -> SpherePoint:
    """Total evaluation of the map at one point."""
    pts = apply_batch(fmap, HPoints.from_point(p))
    return pts.point(0)


def iterate(fmap: RationalMap, p: SpherePoint, k: int) -> SpherePoint:
    """k-fold composition applied to p; k = 0 returns p."""
    out = p
    for _ in range(int(k)):
        out = apply(fmap, out)
    return out


def iterate_batch(fmap: RationalMap, pts: HPoints, k: int) -> HPoints:
    out = pts
    for _ in range(int(k)):
        out = apply_batch(fmap, out)
    return out


# ---------------------------------------------------------------------------
# Preimages: the d projective roots of B*P^(X,Y) - A*Q^(X,Y).
# ---------------------------------------------------------------------------


def _sphere_vec(X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Phase-free unit 3-vector of a unit-norm pair; used as a sort key."""
    a = X * np.conj(Y)
    return 2.0 * a.real, 2.0 * a.imag, (np.abs(X) ** 2 - np.abs(Y) ** 2)


def _fiber_coeffs(fmap: RationalMap, A, B) -> np.ndarray:
    """Ascending coefficients of the fiber polynomial for target [A : B]."""
    return np.asarray(B)[..., None] * fmap.p_pad - np.asarray(A)[..., None] * fmap.q_pad


def _newton_polish(r: np.ndarray, root: complex, steps: int = 3) -> complex:
    """Newton iterations on r (ascending), done in the chart where |y| <= 1."""
    rr = r[::-1]
    y = root
    for _ in range(steps):
        if abs(y) <= 1.0:
            val = np.polyval(r[::-1], y)
            der = np.polyval(np.polyder(r[::-1]), y)
            if der == 0:
                break
            y = y - val / der
        else:
            w = 1.0 / y
            val = np.polyval(rr[::-1], w)
            der = np.polyval(np.polyder(rr[::-1]), w)
            if der == 0:
                break
            w = w - val / der
            if w == 0:
                return complex(np.inf)
            y = 1.0 / w
    return y


def _homog_residual(r: np.ndarray, X: complex, Y: complex) -> float:
    d = len(r) - 1
    acc = 0.0 + 0.0j
    for j in range(d + 1):
        acc += r[j] * (X**j) * (Y ** (d - j))
    return abs(acc)


def preimages(fmap: RationalMap, p: SpherePoint, tol: float = RESIDUAL_TOL):
    """All solutions of f(y) = p as ((SpherePoint, multiplicity), ...).

    Exactly d roots counted with multiplicity.  Roots closer than
    chordal distance tol**0.5 are clustered into one representative whose
    multiplicity is the cluster size, so fibers over critical values come
    back with the right multiplicities instead of as jittered near-twins.
    Raises RootFindingFailed if any root's backward residual exceeds
    tol * ||coefficients||.
    """
    d = fmap.degree
    A, B = p.to_homogeneous()
    r = _fiber_coeffs(fmap, A, B)
    scale = float(np.linalg.norm(r))
    if scale == 0:
        raise RootFindingFailed("fiber polynomial vanished identically")

    k_top = -1
    for j in range(d, -1, -1):
        if abs(r[j]) > LEAD_TOL * scale:
            k_top = j
            break
    pairs: list[tuple[complex, complex]] = []
    if k_top < 0:
        raise RootFindingFailed("fiber polynomial has no significant coefficients")
    n_inf = d - k_top
    if k_top >= 1:
        finite = np.roots(r[k_top::-1])
        for root in finite:
            y = _newton_polish(r[: k_top + 1], complex(root))
            if np.isinf(abs(y)):
                n_inf += 1
                continue
            sp = SpherePoint.from_homogeneous(y, 1.0) if abs(y) <= 1 else SpherePoint.from_homogeneous(1.0, 1.0 / y)
            X, Y = sp.to_homogeneous()
            if _homog_residual(r, X, Y) > tol * scale:
                raise RootFindingFailed(
                    f"residual {_homog_residual(r, X, Y):.3e} > {tol:.1e} * {scale:.3e}"
                )
            pairs.append((X, Y))
    pairs.extend([(1.0 + 0.0j, 0.0 + 0.0j)] * n_inf)

    # Cluster within chordal radius tol**0.5.
    radius = tol**0.5
    m = len(pairs)
    parent = list(range(m))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(m):
        for j in range(i + 1, m):
            dist = abs(pairs[i][0] * pairs[j][1] - pairs[j][0] * pairs[i][1])
            if dist <= radius:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri

    clusters: dict[int, list[int]] = {}
    for i in range(m):
        clusters.setdefault(find(i), []).append(i)

    out = []
    for members in clusters.values():
        # Phase-align members before averaging so double roots cancel jitter.
        x0, y0 = pairs[members[0]]
        sx, sy = 0.0 + 0.0j, 0.0 + 0.0j
        for i in members:
            xi, yi = pairs[i]
            ph = xi * np.conj(x0) + yi * np.conj(y0)
            ph = ph / abs(ph) if ph != 0 else 1.0
            sx += xi * np.conj(ph)
            sy += yi * np.conj(ph)
        norm = np.sqrt(abs(sx) ** 2 + abs(sy) ** 2)
        rep = SpherePoint.from_homogeneous(sx / norm, sy / norm)
        out.append((rep, len(members)))

    def sort_key(item):
        X, Y = item[0].to_homogeneous()
        v = _sphere_vec(np.array([X]), np.array([Y]))
        return (round(float(v[0][0]), 9), round(float(v[1][0]), 9), round(float(v[2][0]), 9))

    out.sort(key=sort_key)
    assert sum(mult for _, mult in out) == d
    return tuple(out)


# ---------------------------------------------------------------------------
# Batched fiber enumeration (repetition semantics: d children per point,
# multiplicities realized as repeats).  Used by trees and samplers.
# ---------------------------------------------------------------------------


def _children_quadratic(fmap: RationalMap, pts: HPoints) -> tuple[HPoints, HPoints]:
    """Both preimages of each point of a degree-2 map, as two aligned batches.

    Projective quadratic formula: with fiber coefficients (r0, r1, r2) the
    roots are [qq : r2] and [r0 : qq] where qq = -(r1 + s*sqrt(D))/2 picks
    the numerically large branch.  Roots at infinity come out of the same
    formula, no special cases.
    """
    r = _fiber_coeffs(fmap, pts.X, pts.Y)
    r0, r1, r2 = r[..., 0], r[..., 1], r[..., 2]
    D = r1 * r1 - 4.0 * r2 * r0
    sq = np.sqrt(D)
    s = np.where((np.conj(r1) * sq).real >= 0.0, 1.0, -1.0)
    qq = -(r1 + s * sq) / 2.0
    X1, Y1 = qq.copy(), r2.copy()
    X2, Y2 = r0.copy(), qq.copy()
    bad1 = (X1 == 0) & (Y1 == 0)
    if np.any(bad1):
        X1[bad1] = X2[bad1]
        Y1[bad1] = Y2[bad1]
    bad2 = (X2 == 0) & (Y2 == 0)
    if np.any(bad2):
        X2[bad2] = X1[bad2]
        Y2[bad2] = Y1[bad2]
    if np.any((X1 == 0) & (Y1 == 0)) or np.any((X2 == 0) & (Y2 == 0)):
        raise RootFindingFailed("quadratic fiber collapsed; map may be degenerate")
    n1 = np.sqrt(np.abs(X1) ** 2 + np.abs(Y1) ** 2)
    n2 = np.sqrt(np.abs(X2) ** 2 + np.abs(Y2) ** 2)
    return HPoints(X1 / n1, Y1 / n1), HPoints(X2 / n2, Y2 / n2)


def _children_generic(fmap: RationalMap, pts: HPoints) -> list[HPoints]:
    """All d preimages per point for arbitrary degree, deterministically ordered.

    Row-by-row companion solve; slower than the quadratic fast path and
    meant for modest batch sizes at degree >= 3.
    """
    d = fmap.degree
    n = len(pts)
    outX = np.empty((d, n), dtype=np.complex128)
    outY = np.empty((d, n), dtype=np.complex128)
    for i in range(n):
        p = pts.point(i)
        fiber = preimages(fmap, p)
        col = []
        for sp, mult in fiber:
            x, y = sp.to_homogeneous()
            col.extend([(x, y)] * mult)
        for k, (x, y) in enumerate(col):
            outX[k, i] = x
            outY[k, i] = y
    return [HPoints(outX[k], outY[k]) for k in range(d)]


def children(fmap: RationalMap, pts: HPoints) -> list[HPoints]:
    """List of d aligned batches; batch k holds the k-th preimage of each point."""
    if fmap.degree == 2:
        a, b = _children_quadratic(fmap, pts)
        return [a, b]
    return _children_generic(fmap, pts)


def backward_step(fmap: RationalMap, pts: HPoints, u: np.ndarray) -> HPoints:
    """One uniformly chosen preimage per point; u are uniforms in [0, 1)."""
    d = fmap.degree
    if d == 2:
        a, b = _children_quadratic(fmap, pts)
        take_b = u >= 0.5
        X = np.where(take_b, b.X, a.X)
        Y = np.where(take_b, b.Y, a.Y)
        return HPoints(X, Y)
    kids = _children_generic(fmap, pts)
    idx = np.minimum((u * d).astype(np.int64), d - 1)
    X = np.empty(len(pts), dtype=np.complex128)
    Y = np.empty(len(pts), dtype=np.complex128)
    for k in range(d):
        mask = idx == k
        if np.any(mask):
            X[mask] = kids[k].X[mask]
            Y[mask] = kids[k].Y[mask]
    return HPoints(X, Y)
