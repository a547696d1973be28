"""Observable classes: trig polynomials, Hoelder bumps, log singularities.

An Observable pairs a vectorized evaluator over HPoints with a class tag.
The tag, not a computed norm, decides which decay rate the statistics
modules expect: d^{-n} for trigpoly/logsing (treated as d.s.h.-type) and
d^{-n nu/2} for holder(nu).  The extra "cylinder" kind evaluates a shift
CylinderFunction through the binary-digit chart of the angle; it is the
bridge that lets sphere Monte-Carlo runs be compared against exact
rational values on z -> z^d.

Log-singular evaluators floor the chordal distance at 1e-12, so their
values are always finite; the floored count is exposed separately as a
diagnostic.  Trig polynomials genuinely diverge at the w-chart origin and
report non-finite values there; integrators reject and count those.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidParams
from .shiftspace import CylinderFunction
from .sphere import Chart, HPoints, SpherePoint, chordal_to_point

SINGULAR_FLOOR = 1e-12

KINDS = ("trigpoly", "holder", "logsing", "composite", "cylinder")


@dataclass(frozen=True)
class Observable:
    kind: str
    label: str
    fn: Callable[[HPoints], np.ndarray]
    mean_hint: float | None = None
    nu: float | None = None          # holder exponent
    beta: float | None = None        # logsing weight
    sup_bound: float | None = None   # sup |obs| on the relevant support, if known
    flag_fn: Callable[[HPoints], int] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParams(f"unknown observable kind {self.kind!r}")
        if self.kind == "holder" and not (self.nu and 0 < self.nu <= 2):
            raise InvalidParams("holder observables need nu in (0, 2]")

    def evaluate(self, pts: HPoints) -> np.ndarray:
        return self.fn(pts)

    def evaluate_point(self, p: SpherePoint) -> float:
        return float(self.fn(HPoints.from_point(p, 1))[0])

    def singular_count(self, pts: HPoints) -> int:
        """Floored (logsing) or non-finite (other kinds) evaluations."""
        if self.flag_fn is not None:
            return int(self.flag_fn(pts))
        return int(np.size(self.fn(pts)) - np.isfinite(self.fn(pts)).sum())

    def class_rate(self, d: int) -> float:
        """Expected log-correlation decay slope for this class under degree d."""
        if self.kind == "holder":
            return -0.5 * self.nu * math.log(d)
        return -math.log(d)

    def shifted(self, c: float) -> "Observable":
        return combine([(1.0, self)], shift=c, label=f"{self.label}{c:+g}")

    def __add__(self, other: "Observable") -> "Observable":
        return combine([(1.0, self), (1.0, other)], label=f"{self.label}+{other.label}")

    def __sub__(self, other: "Observable") -> "Observable":
        return combine([(1.0, self), (-1.0, other)], label=f"{self.label}-{other.label}")


def trig_poly(
    cos_coeffs: Sequence[float],
    sin_coeffs: Sequence[float] = (),
    label: str | None = None,
    mean_hint: float | None = None,
) -> Observable:
    """sum_k c_k Re(z^k) + s_k Im(z^k), k from 0; on |z|=1 a Fourier polynomial.

    Evaluated through the affine coordinate, so it diverges at the point at
    infinity; that is the documented extension off the circle.
    """
    c = np.asarray(cos_coeffs, dtype=np.float64)
    s = np.asarray(sin_coeffs, dtype=np.float64)
    if c.size == 0 and s.size == 0:
        raise InvalidParams("empty trig polynomial")
    kmax = max(c.size, s.size) - 1

    def fn(pts: HPoints) -> np.ndarray:
        z = pts.z_coord()
        out = np.zeros(z.shape, dtype=np.float64)
        if c.size:
            out += c[0]
        zk = np.ones_like(z)
        for k in range(1, kmax + 1):
            zk = zk * z
            if k < c.size and c[k] != 0.0:
                out += c[k] * zk.real
            if k < s.size and s[k] != 0.0:
                out += s[k] * zk.imag
        return out

    # sup on the unit circle; off-circle the polynomial is unbounded
    sup_circle = float(abs(c[0]) if c.size else 0.0) + float(
        np.abs(c[1:]).sum() + np.abs(s[1:]).sum()
    )
    if label is None:
        label = "trig[" + ",".join(f"{x:g}" for x in cos_coeffs) + "]"
    return Observable(
        kind="trigpoly",
        label=label,
        fn=fn,
        mean_hint=mean_hint,
        sup_bound=sup_circle,
    )


def re_power(m: int, weight: float = 1.0, mean_hint: float | None = None) -> Observable:
    coeffs = [0.0] * m + [weight]
    return trig_poly(coeffs, label=f"Re z^{m}" if m != 1 else "Re z", mean_hint=mean_hint)


def im_power(m: int, weight: float = 1.0, mean_hint: float | None = None) -> Observable:
    coeffs = [0.0] * m + [weight]
    return trig_poly((), coeffs, label=f"Im z^{m}" if m != 1 else "Im z", mean_hint=mean_hint)


def holder_dist_pow(nu: float, center: SpherePoint, label: str | None = None) -> Observable:
    """chordal(p, center)^nu: the canonical nu-Hoelder bump, bounded by 1."""

    def fn(pts: HPoints) -> np.ndarray:
        return chordal_to_point(pts, center) ** nu

    return Observable(
        kind="holder",
        label=label or f"dist^{nu:g}",
        fn=fn,
        nu=float(nu),
        sup_bound=1.0,
    )


def log_singular(beta: float, center: SpherePoint, label: str | None = None) -> Observable:
    """beta * log(chordal distance to center); floored at 1e-12, <= 0 always."""
    if beta == 0:
        raise InvalidParams("logsing needs beta != 0")

    def fn(pts: HPoints) -> np.ndarray:
        d = chordal_to_point(pts, center)
        return beta * np.log(np.maximum(d, SINGULAR_FLOOR))

    def flags(pts: HPoints) -> int:
        return int((chordal_to_point(pts, center) < SINGULAR_FLOOR).sum())

    return Observable(
        kind="logsing",
        label=label or f"{beta:g}*log d(., a)",
        fn=fn,
        beta=float(beta),
        flag_fn=flags,
    )


def combine(
    terms: Sequence[tuple[float, Observable]],
    shift: float = 0.0,
    label: str | None = None,
) -> Observable:
    """Affine combination shift + sum w_i obs_i, class tag 'composite'."""
    if not terms:
        raise InvalidParams("empty combination")
    frozen = [(float(w), o) for w, o in terms]

    def fn(pts: HPoints) -> np.ndarray:
        out = np.full(len(pts.X), shift, dtype=np.float64)
        for w, o in frozen:
            out += w * o.fn(pts)
        return out

    hint = None
    if all(o.mean_hint is not None for _, o in frozen):
        hint = shift + sum(w * o.mean_hint for w, o in frozen)
    sup = None
    if all(o.sup_bound is not None for _, o in frozen):
        sup = abs(shift) + sum(abs(w) * o.sup_bound for w, o in frozen)
    return Observable(
        kind="composite",
        label=label or "composite",
        fn=fn,
        mean_hint=hint,
        sup_bound=sup,
    )


def cylinder_observable(cyl: CylinderFunction, label: str | None = None) -> Observable:
    """The shift observable read through the angle's base-d digits.

    theta/2pi in [0,1) expands in base d = cyl.d; its first `depth` digits
    index the cylinder cell.  Under z -> z^d the angle map is the shift on
    digits and the circle measure is uniform Bernoulli, so statistics of
    this observable have exact rational mirrors.
    """
    table = np.array([float(v) for v in cyl.table], dtype=np.float64)
    cells = cyl.d**cyl.depth
    mean = float(cyl.mean())
    sup = float(cyl.sup_abs())

    def fn(pts: HPoints) -> np.ndarray:
        u = np.mod(pts.angles() / (2.0 * np.pi), 1.0)
        idx = np.minimum((u * cells).astype(np.int64), cells - 1)
        return table[idx]

    return Observable(
        kind="cylinder",
        label=label or f"cyl(d={cyl.d},m={cyl.depth})",
        fn=fn,
        mean_hint=mean,
        sup_bound=sup,
    )


def sign_halfplane(label: str = "sign(upper)") -> Observable:
    """+1 on angles in [0, pi), -1 below: the coin-flip observable."""
    return cylinder_observable(
        CylinderFunction(2, 1, (Fraction(1), Fraction(-1))), label=label
    )


def constant(value: float) -> Observable:
    return trig_poly((float(value),), label=f"const {value:g}", mean_hint=float(value))


def _parse_center(raw) -> SpherePoint:
    if isinstance(raw, str):
        if raw.lower() in ("inf", "infinity"):
            return SpherePoint.infinity()
        raise InvalidParams(f"bad center spec {raw!r}")
    if isinstance(raw, (int, float, complex)):
        return SpherePoint(complex(raw), Chart.Z)
    if isinstance(raw, (list, tuple)) and len(raw) == 2:
        return SpherePoint(complex(float(raw[0]), float(raw[1])), Chart.Z)
    raise InvalidParams(f"bad center spec {raw!r}")


def observable_from_config(spec: dict) -> Observable:
    """Build from the structured-config form, e.g. {class="trigpoly", coeffs=[...]}.

    Classes: trigpoly (coeffs = cosine series from k=0, optional sin),
    holder (nu, center, kind="dist_pow"), logsing (beta, center),
    cylinder (d, depth, table as [num, den] pairs or numbers).
    """
    if "class" not in spec:
        raise InvalidParams("observable spec missing 'class'")
    cls = str(spec["class"]).lower()
    if cls == "trigpoly":
        if "coeffs" not in spec:
            raise InvalidParams("trigpoly spec missing 'coeffs'")
        return trig_poly(
            spec["coeffs"], spec.get("sin", ()), label=spec.get("label"),
            mean_hint=spec.get("mean_hint"),
        )
    if cls == "holder":
        kind = spec.get("kind", "dist_pow")
        if kind != "dist_pow":
            raise InvalidParams(f"unknown holder kind {kind!r}")
        if "nu" not in spec or "center" not in spec:
            raise InvalidParams("holder spec needs 'nu' and 'center'")
        return holder_dist_pow(
            float(spec["nu"]), _parse_center(spec["center"]), label=spec.get("label")
        )
    if cls == "logsing":
        if "beta" not in spec or "center" not in spec:
            raise InvalidParams("logsing spec needs 'beta' and 'center'")
        return log_singular(
            float(spec["beta"]), _parse_center(spec["center"]), label=spec.get("label")
        )
    if cls == "cylinder":
        if not all(k in spec for k in ("d", "depth", "table")):
            raise InvalidParams("cylinder spec needs 'd', 'depth', 'table'")
        table = tuple(
            Fraction(int(v[0]), int(v[1])) if isinstance(v, (list, tuple)) else Fraction(v)
            for v in spec["table"]
        )
        return cylinder_observable(
            CylinderFunction(int(spec["d"]), int(spec["depth"]), table),
            label=spec.get("label"),
        )
    raise InvalidParams(f"unknown observable class {cls!r}")
