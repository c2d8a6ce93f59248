"""
Driving functions for deterministic surface growth.

Every driver here has the form phi(center, neighbors) = center + Phi(diffs),
with diffs = neighbors - center ordered (+e1, -e1, +e2, -e2, ...).  Arrays
carry the 2d neighbour axis first and broadcast over any trailing shape, so a
single call updates a whole lattice.
"""

from __future__ import annotations

import enum
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from growthlab.lattice import ScalingMode

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

TOL_ARGMIN = 1e-12
FLAT_TOL = 1e-13
H_FD = 1e-4
SYMMETRY_TOL = 1e-6
MONO_TOL = 1e-9


# --------------------------------------------------------------------------
# Potentials
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """
    Symmetric convex potential V with V(0) = 0.

    ``d_left``/``d_right`` are the one-sided derivatives; for kinked V they
    differ at the kinks and must be supplied, never differenced numerically.
    """

    kind: str
    V: Callable[[NDArray], NDArray]
    d_left: Callable[[NDArray], NDArray]
    d_right: Callable[[NDArray], NDArray]
    k: int | None = None
    delta: float | None = None
    a: float | None = None

    @classmethod
    def power(cls, k: int) -> Potential:
        if k < 2 or k % 2:
            raise ValueError("power potential needs an even k >= 2")
        dv = lambda y: k * np.asarray(y, float) ** (k - 1)  # noqa: E731
        return cls("power", lambda y: np.asarray(y, float) ** k, dv, dv, k=k)

    @classmethod
    def fractional(cls, delta: float) -> Potential:
        if not 0 < delta < 1:
            raise ValueError("fractional potential needs 0 < delta < 1")

        def dv(y):
            y = np.asarray(y, float)
            return (2 + delta) * np.sign(y) * np.abs(y) ** (1 + delta)

        return cls("fractional", lambda y: np.abs(np.asarray(y, float)) ** (2 + delta), dv, dv, delta=delta)

    @classmethod
    def absolute(cls) -> Potential:
        return cls(
            "abs",
            lambda y: np.abs(np.asarray(y, float)),
            lambda y: np.where(np.asarray(y) > 0, 1.0, -1.0),
            lambda y: np.where(np.asarray(y) >= 0, 1.0, -1.0),
        )

    @classmethod
    def flat_well(cls, a: float) -> Potential:
        """V(y) = (|y| - a)_+ : zero on [-a, a], positive outside."""
        if a <= 0:
            raise ValueError("flat-well half width must be positive")

        def left(y):
            y = np.asarray(y, float)
            return np.where(y > a, 1.0, np.where(y > -a, 0.0, -1.0))

        def right(y):
            y = np.asarray(y, float)
            return np.where(y >= a, 1.0, np.where(y >= -a, 0.0, -1.0))

        return cls("flatwell", lambda y: np.maximum(np.abs(np.asarray(y, float)) - a, 0.0), left, right, a=a)

    @classmethod
    def custom(cls, V, d_left, d_right=None) -> Potential:
        return cls("custom", V, d_left, d_right if d_right is not None else d_left)

    def check(self, radius: float = 3.0, n: int = 601) -> None:
        """Symmetry, convexity and V(0) = 0 <= V on a probe grid."""
        y = np.linspace(-radius, radius, n)
        v = np.asarray(self.V(y), float)
        if abs(float(self.V(np.array(0.0)))) > 1e-14 or np.any(v < -1e-14):
            raise ValueError("potential must satisfy V(0) = 0 and V >= 0")
        if np.max(np.abs(v - v[::-1])) > 1e-12 * max(1.0, np.max(np.abs(v))):
            raise ValueError("potential is not symmetric")
        dl, dr = np.asarray(self.d_left(y), float), np.asarray(self.d_right(y), float)
        if np.any(dl > dr + 1e-12) or np.any(np.diff(dr) < -1e-12) or np.any(np.diff(dl) < -1e-12):
            raise ValueError("potential is not convex (one-sided derivative decreases)")


# --------------------------------------------------------------------------
# Closed-form and bisection argmins
# --------------------------------------------------------------------------


def _bisect_increasing(g, lo, hi, tol=TOL_ARGMIN):
    """
    Root of a nondecreasing g on [lo, hi] (g(lo) <= 0 <= g(hi)), elementwise.

    Each element gets the halvings its own bracket needs, so the answer at a
    site never depends on what else is in the array.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    with np.errstate(divide="ignore"):
        need = np.ceil(np.log2(np.maximum(hi - lo, tol) / tol))
    # beyond ~1100 halvings the bracket is below float spacing and mid stays put
    need = np.minimum(need, 1100)
    for it in range(int(np.max(need, initial=0))):
        mid = 0.5 * (lo + hi)
        act = need > it
        neg = g(mid) < 0
        np.copyto(lo, mid, where=act & neg)
        np.copyto(hi, mid, where=act & ~neg)
    return 0.5 * (lo + hi)


def _bisect_predicate(pred, lo, hi, tol=TOL_ARGMIN, max_iter=2000):
    """Boundary between pred True (left) and pred False (right), elementwise."""
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        active = (hi - lo > tol) & (mid > lo) & (mid < hi)
        if not active.any():
            break
        left = pred(mid)
        lo = np.where(active & left, mid, lo)
        hi = np.where(active & ~left, mid, hi)
    return 0.5 * (lo + hi)


def _as_diffs(diffs: ArrayLike) -> NDArray[np.float64]:
    c = np.asarray(diffs, dtype=float)
    if c.ndim == 0 or c.shape[0] < 1:
        raise ValueError("need at least one value along the leading axis")
    return c


def argmin_power(k: int, diffs: ArrayLike, tol: float = TOL_ARGMIN) -> NDArray | float:
    """Unique minimiser of sum_j (y - c_j)^k for even k, by bisection on the derivative."""
    if k < 2 or k % 2:
        raise ValueError("k must be even and >= 2")
    c = _as_diffs(diffs)
    if k == 2:
        return c.mean(axis=0)

    def g(y):
        z = y - c
        zk = z * z
        for _ in range(k - 3):
            zk *= z
        return np.sum(zk, axis=0)

    return _bisect_increasing(g, c.min(axis=0), c.max(axis=0), tol)


def argmin_fracpower(delta: float, diffs: ArrayLike, tol: float = TOL_ARGMIN) -> NDArray | float:
    """Unique minimiser of sum_j |y - c_j|^(2 + delta)."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    c = _as_diffs(diffs)

    def g(y):
        z = y - c
        a = np.abs(z)
        frac = np.sqrt(a) if delta == 0.5 else a**delta
        return np.sum(z * frac, axis=0)

    return _bisect_increasing(g, c.min(axis=0), c.max(axis=0), tol)


def median_midpoint(diffs: ArrayLike) -> NDArray | float:
    """Midpoint of the median interval of an even number of values."""
    c = np.sort(_as_diffs(diffs), axis=0)
    n = c.shape[0]
    if n % 2:
        raise ValueError("median midpoint expects an even count")
    return 0.5 * (c[n // 2 - 1] + c[n // 2])


def rsos_midpoint(diffs: ArrayLike) -> NDArray | float:
    c = _as_diffs(diffs)
    return 0.5 * (c.min(axis=0) + c.max(axis=0))


def generic_convex_argmin(
    potential: Potential, diffs: ArrayLike, tol: float = TOL_ARGMIN, flat_tol: float = FLAT_TOL
) -> NDArray | float:
    """
    Midpoint of the minimising interval [alpha, beta] of y -> sum V(y - c_j).

    alpha is where the right derivative stops being negative, beta where the
    left derivative turns positive; |derivative| < flat_tol counts as zero.
    """
    c = _as_diffs(diffs)
    dl = lambda y: np.sum(potential.d_left(y - c), axis=0)  # noqa: E731
    dr = lambda y: np.sum(potential.d_right(y - c), axis=0)  # noqa: E731
    cmin, cmax = c.min(axis=0), c.max(axis=0)
    width = cmax - cmin + 1.0

    lo = cmin - width
    for _ in range(200):
        bad = ~(dr(lo) < -flat_tol)
        if not bad.any():
            break
        width = np.where(bad, 2 * width, width)
        lo = np.where(bad, cmin - width, lo)
    else:
        raise ValueError("objective has no finite minimiser (left bracket)")
    width = cmax - cmin + 1.0
    hi = cmax + width
    for _ in range(200):
        bad = ~(dl(hi) > flat_tol)
        if not bad.any():
            break
        width = np.where(bad, 2 * width, width)
        hi = np.where(bad, cmax + width, hi)
    else:
        raise ValueError("objective has no finite minimiser (right bracket)")

    alpha = _bisect_predicate(lambda y: dr(y) < -flat_tol, lo, hi, tol)
    beta = _bisect_predicate(lambda y: dl(y) <= flat_tol, lo, hi, tol)
    return 0.5 * (alpha + beta)


# --------------------------------------------------------------------------
# Smooth Phi
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothPhiSpec:
    """
    C^2 increment Phi(v_{+1}, v_{-1}, ..., v_{+d}, v_{-d}) with Phi(0) = 0.

    ``Phi`` maps an array with the 2d arguments on the leading axis.  When
    ``grad`` or ``hess0`` is missing it is replaced by central differences
    with step H_FD.
    """

    name: str
    d: int
    Phi: Callable[[NDArray], NDArray]
    grad: Callable[[NDArray], NDArray] | None = None
    hess0: NDArray | None = None
    lipschitz_only: bool = False

    def __post_init__(self) -> None:
        if abs(float(self.Phi(np.zeros(2 * self.d)))) > 1e-14:
            raise ValueError("Phi(0) must vanish")

    def gradient(self, v: ArrayLike) -> NDArray[np.float64]:
        v = np.asarray(v, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(v), float)
        out = []
        for j in range(2 * self.d):
            e = np.zeros((2 * self.d,) + (1,) * (v.ndim - 1))
            e[j] = H_FD
            out.append((self.Phi(v + e) - self.Phi(v - e)) / (2 * H_FD))
        return np.stack(out)

    def gradient_at_zero(self) -> NDArray[np.float64]:
        return self.gradient(np.zeros(2 * self.d))

    def hessian_at_zero(self) -> NDArray[np.float64]:
        if self.hess0 is not None:
            return np.asarray(self.hess0, float)
        n = 2 * self.d
        h = H_FD
        out = np.empty((n, n))
        eye = np.eye(n) * h
        for a in range(n):
            for b in range(n):
                out[a, b] = (
                    self.Phi(eye[a] + eye[b])
                    - self.Phi(eye[a] - eye[b])
                    - self.Phi(-eye[a] + eye[b])
                    + self.Phi(-eye[a] - eye[b])
                ) / (4 * h * h)
        return 0.5 * (out + out.T)

    def check_symmetry(self, tol: float = SYMMETRY_TOL) -> None:
        g = self.gradient_at_zero()
        gap = np.abs(g[0::2] - g[1::2])
        if np.any(gap > tol):
            i = int(np.argmax(gap))
            raise ValueError(
                f"Phi_v{i + 1}(0) = {g[2 * i]:.6g} differs from Phi_v-{i + 1}(0) = {g[2 * i + 1]:.6g}"
            )


def heat_phi(d: int) -> SmoothPhiSpec:
    """Phi = (1/2d) sum of all 2d differences: the discrete heat step."""
    w = 1.0 / (2 * d)
    return SmoothPhiSpec(
        "heat",
        d,
        lambda v: w * np.sum(v, axis=0),
        grad=lambda v: np.full_like(np.asarray(v, float), w),
        hess0=np.zeros((2 * d, 2 * d)),
    )


def kpz_phi(d: int = 1) -> SmoothPhiSpec:
    """
    Phi = (1/4d) sum_i (v_i + v_-i) + (1/8) sum_i (v_i - v_-i)^2.

    For d = 1 this is 1/4 (v1 + v-1) + 1/8 (v1 - v-1)^2, whose limit is the
    deterministic KPZ equation u_t = 1/4 u_xx + 1/2 u_x^2.  Monotone only
    near 0, so initial data must be Lipschitz.
    """
    w = 1.0 / (4 * d)

    def Phi(v):
        v = np.asarray(v, float)
        return w * np.sum(v, axis=0) + 0.125 * np.sum((v[0::2] - v[1::2]) ** 2, axis=0)

    def grad(v):
        v = np.asarray(v, float)
        diff = v[0::2] - v[1::2]
        g = np.empty_like(v)
        g[0::2] = w + 0.25 * diff
        g[1::2] = w - 0.25 * diff
        return g

    hess = np.zeros((2 * d, 2 * d))
    for i in range(d):
        hess[2 * i, 2 * i] = hess[2 * i + 1, 2 * i + 1] = 0.25
        hess[2 * i, 2 * i + 1] = hess[2 * i + 1, 2 * i] = -0.25
    return SmoothPhiSpec("kpz", d, Phi, grad=grad, hess0=hess, lipschitz_only=True)


class MonotonicityMode(enum.Enum):
    GLOBAL = "global"
    AT_ZERO = "at_zero"


@dataclass(frozen=True)
class MonotonicityCertificate:
    condition: MonotonicityMode | None
    margin: float
    violation: dict | None = None

    @property
    def holds(self) -> bool:
        return self.condition is not None


def _mono_margin(g: NDArray) -> tuple[NDArray, NDArray, NDArray]:
    div_margin = 1.0 - np.sum(g, axis=0)
    part_margin = np.min(g, axis=0)
    return np.minimum(div_margin, part_margin), div_margin, part_margin


def check_monotonicity(
    spec: SmoothPhiSpec, mode: MonotonicityMode | None = None, n: int = 5
) -> MonotonicityCertificate:
    """
    Check 1 - div Phi >= 0 and Phi_v >= 0 on [-1, 1]^{2d} (GLOBAL, ``n`` points
    per axis, non-exhaustive) or their strict versions at 0 (AT_ZERO).

    With ``mode=None`` GLOBAL is tried first, then AT_ZERO.  Violations are
    reported in the certificate, never raised.
    """
    modes = [mode] if mode is not None else [MonotonicityMode.GLOBAL, MonotonicityMode.AT_ZERO]
    violation = None
    margin = -np.inf
    for m in modes:
        if m is MonotonicityMode.GLOBAL:
            axes = [np.linspace(-1.0, 1.0, n)] * (2 * spec.d)
            pts = np.stack(np.meshgrid(*axes, indexing="ij")).reshape(2 * spec.d, -1)
            tot, div, part = _mono_margin(spec.gradient(pts))
            j = int(np.argmin(tot))
            margin = float(tot[j])
            if margin >= -MONO_TOL:
                return MonotonicityCertificate(m, margin)
            violation = {
                "mode": m.value,
                "at": pts[:, j].tolist(),
                "condition": "1 - div Phi >= 0" if div[j] <= part[j] else "Phi_v >= 0",
                "margin": margin,
            }
        else:
            tot, div, part = _mono_margin(spec.gradient_at_zero())
            margin = float(tot)
            if margin > MONO_TOL:
                return MonotonicityCertificate(m, margin)
            violation = {
                "mode": m.value,
                "at": [0.0] * (2 * spec.d),
                "condition": "1 - div Phi > 0" if div <= part else "Phi_v > 0",
                "margin": margin,
            }
    return MonotonicityCertificate(None, margin, violation)


# --------------------------------------------------------------------------
# Driver functions
# --------------------------------------------------------------------------


def max_driver(center: ArrayLike, neighbors: ArrayLike) -> NDArray | float:
    return np.maximum(np.asarray(center, float), np.max(np.asarray(neighbors, float), axis=0))


def pospart_driver(center: ArrayLike, neighbors: ArrayLike) -> NDArray | float:
    center = np.asarray(center, float)
    nb = np.asarray(neighbors, float)
    return center + np.sum(np.maximum(nb - center, 0.0), axis=0) / nb.shape[0]


def smooth_phi_driver(spec: SmoothPhiSpec, center: ArrayLike, neighbors: ArrayLike) -> NDArray | float:
    center = np.asarray(center, float)
    return center + spec.Phi(np.asarray(neighbors, float) - center)


class DriverKind(enum.Enum):
    MAX_NEIGHBOR = "max"
    POSPART_AVERAGE = "pospart"
    SMOOTH_PHI = "smooth_phi"
    ARGMIN_POTENTIAL = "argmin"
    MEDIAN_MIDPOINT = "median"
    RSOS_MIDPOINT = "rsos"


@dataclass(frozen=True, eq=False)
class Driver:
    """
    A growth rule.  ``increment`` maps diffs (2d, ...) to Phi(diffs) and
    ``phi`` is center + increment(neighbors - center).
    """

    kind: DriverKind
    name: str
    increment: Callable[[NDArray], NDArray]
    scaling: ScalingMode | None = None
    potential: Potential | None = None
    smooth_phi: SmoothPhiSpec | None = None
    params: dict = field(default_factory=dict)

    def phi(self, center: ArrayLike, neighbors: ArrayLike) -> NDArray | float:
        center = np.asarray(center, float)
        return center + self.increment(np.asarray(neighbors, float) - center)

    def __repr__(self) -> str:
        return f"Driver({self.name})"


def max_neighbor() -> Driver:
    return Driver(
        DriverKind.MAX_NEIGHBOR, "max", lambda c: np.maximum(np.max(c, axis=0), 0.0), ScalingMode.HYPERBOLIC
    )


def pospart_average() -> Driver:
    return Driver(
        DriverKind.POSPART_AVERAGE,
        "pospart",
        lambda c: np.sum(np.maximum(c, 0.0), axis=0) / c.shape[0],
        ScalingMode.HYPERBOLIC,
    )


def smooth_phi(spec: SmoothPhiSpec) -> Driver:
    spec.check_symmetry()
    return Driver(
        DriverKind.SMOOTH_PHI,
        f"smooth_phi:{spec.name}",
        spec.Phi,
        ScalingMode.PARABOLIC,
        smooth_phi=spec,
        params={"phi": spec.name, "d": spec.d},
    )


def argmin_potential(potential: Potential) -> Driver:
    if potential.kind == "power":
        k = potential.k
        inc, label = (lambda c: argmin_power(k, c)), f"argmin:power:{k}"
    elif potential.kind == "fractional":
        delta = potential.delta
        inc, label = (lambda c: argmin_fracpower(delta, c)), f"argmin:fractional:{delta:g}"
    elif potential.kind == "abs":
        inc, label = median_midpoint, "argmin:abs"
    elif potential.kind == "flatwell":
        inc, label = (lambda c: generic_convex_argmin(potential, c)), f"argmin:flatwell:{potential.a:g}"
    else:
        inc, label = (lambda c: generic_convex_argmin(potential, c)), "argmin:custom"
    params = {"potential": potential.kind, "k": potential.k, "delta": potential.delta, "a": potential.a}
    return Driver(
        DriverKind.ARGMIN_POTENTIAL,
        label,
        inc,
        ScalingMode.PARABOLIC,
        potential=potential,
        params={k: v for k, v in params.items() if v is not None},
    )


def median_driver() -> Driver:
    return Driver(DriverKind.MEDIAN_MIDPOINT, "median", median_midpoint, ScalingMode.PARABOLIC)


def rsos_driver() -> Driver:
    return Driver(DriverKind.RSOS_MIDPOINT, "rsos", rsos_midpoint, ScalingMode.PARABOLIC)


# --------------------------------------------------------------------------
# Scaling detection
# --------------------------------------------------------------------------

DEFAULT_PROBES = ((1.0, 0.0), (0.0, 1.0), (1.0, -2.0), (0.3, 0.7), (-1.5, 0.4))


def linear_increment(driver: Driver, p: ArrayLike) -> float:
    """Height gained at the origin by one step on the linear field p . x."""
    p = np.asarray(p, float)
    diffs = np.empty(2 * p.size)
    diffs[0::2] = p
    diffs[1::2] = -p
    return float(driver.increment(diffs))


def detect_scaling(
    driver: Driver, probes: Sequence[Sequence[float]] | None = None, tol: float = 1e-6
) -> ScalingMode:
    """
    Hyperbolic iff linear fields move at vanishing gradient scale.

    For each probe p the rate r(s) = increment(s p) / s is measured at
    s = 1e-2 and 1e-3 and extrapolated linearly to s = 0; a smooth Phi moves
    linear fields only at order s^2, which the extrapolation removes.
    """
    if probes is None:
        d = driver.smooth_phi.d if driver.smooth_phi is not None else 2
        probes = [p[:d] if d <= 2 else tuple(p) + (0.5,) * (d - 2) for p in DEFAULT_PROBES]
        probes = [p for p in probes if any(p)]
    s1, s2 = 1e-2, 1e-3
    for p in probes:
        p = np.asarray(p, float)
        r1 = linear_increment(driver, s1 * p) / s1
        r2 = linear_increment(driver, s2 * p) / s2
        r0 = (s1 * r2 - s2 * r1) / (s1 - s2)
        if abs(r0) > tol:
            return ScalingMode.HYPERBOLIC
    return ScalingMode.PARABOLIC
