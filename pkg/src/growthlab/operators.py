"""
Limit operators F(X, p), their semicontinuous envelopes, and exact oracles.

Operators with a singular gradient set return an envelope pair there;
``LimitOperator.envelopes`` always returns ``(upper, lower)`` and the two
agree off the singular set.
"""

from __future__ import annotations

import enum
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from growthlab.drivers import Driver, DriverKind, SmoothPhiSpec

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from growthlab.lattice import InitialData


class SingularGradientError(ValueError):
    """F is undefined at this gradient; use the envelopes."""


# --------------------------------------------------------------------------
# First-order Hamiltonians
# --------------------------------------------------------------------------


def H_max(p: ArrayLike) -> float:
    return float(np.max(np.abs(np.asarray(p, float))))


def H_pospart(p: ArrayLike) -> float:
    """
    (1/2d) sum_i |p_i|.

    The positive-part driver sums (p . a)_+ over both a = e_i and a = -e_i,
    so each axis contributes (p_i)_+ + (-p_i)_+ = |p_i|.
    """
    p = np.asarray(p, float)
    return float(np.sum(np.abs(p)) / (2 * p.size))


# --------------------------------------------------------------------------
# Smooth Phi limit
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothAH:
    """u_t = trace(A D^2u) + H(Du) with A diagonal and H(p) = p . M p."""

    A: NDArray[np.float64]
    M: NDArray[np.float64]

    @property
    def d(self) -> int:
        return self.A.shape[0]

    def H(self, p: ArrayLike) -> NDArray | float:
        p = np.asarray(p, float)
        return np.einsum("i...,ij,j...->...", p, self.M, p)

    def grad_H(self, p: ArrayLike) -> NDArray:
        p = np.asarray(p, float)
        return 2 * np.einsum("ij,j...->i...", self.M, p)

    def F(self, X: ArrayLike, p: ArrayLike) -> float:
        X = np.asarray(X, float)
        return float(np.sum(np.diag(self.A) * np.diag(X)) + self.H(p))


def smooth_limit_operator(spec: SmoothPhiSpec) -> SmoothAH:
    """A_ii = Phi_{v_i}(0); M_ij = 1/2 (Phi_{v_i v_j} + Phi_{v_-i v_-j} - 2 Phi_{v_i v_-j})(0), symmetrised."""
    spec.check_symmetry()
    g = spec.gradient_at_zero()
    hess = spec.hessian_at_zero()
    plus = np.arange(0, 2 * spec.d, 2)
    minus = plus + 1
    M = 0.5 * (hess[np.ix_(plus, plus)] + hess[np.ix_(minus, minus)] - 2 * hess[np.ix_(plus, minus)])
    return SmoothAH(np.diag(g[plus]), 0.5 * (M + M.T))


# --------------------------------------------------------------------------
# Weighted averages, partitions, median and crystalline operators
# --------------------------------------------------------------------------


def F_weighted(X: ArrayLike, p: ArrayLike, exponent: float) -> float:
    """sum |p_i|^e X_ii / (2 sum |p_i|^e), defined for p != 0."""
    X = np.asarray(X, float)
    p = np.asarray(p, float)
    if not np.any(p):
        raise SingularGradientError("weighted operator is singular at p = 0")
    # scale by max |p_i| first so tiny gradients do not underflow the weights
    a = np.abs(p)
    w = (a / a.max()) ** exponent
    return float(np.sum(w * np.diag(X)) / (2 * np.sum(w)))


def envelopes_weighted(X: ArrayLike) -> tuple[float, float]:
    x = np.diag(np.asarray(X, float))
    return 0.5 * float(x.max()), 0.5 * float(x.min())


class Orientation(enum.Enum):
    MIN_COORDINATES = "min"
    MAX_COORDINATES = "max"


@dataclass(frozen=True)
class PartitionLabel:
    """The cell V_A containing p; ``coords`` are 0-based axis indices."""

    coords: frozenset[int]
    orientation: Orientation

    @property
    def singleton(self) -> int | None:
        return next(iter(self.coords)) if len(self.coords) == 1 else None


def classify_partition(p: ArrayLike, orientation: Orientation) -> PartitionLabel:
    """Coordinates attaining the min (or max) of |p_i|, by exact comparison."""
    a = np.abs(np.asarray(p, float))
    target = a.min() if orientation is Orientation.MIN_COORDINATES else a.max()
    return PartitionLabel(frozenset(int(i) for i in np.flatnonzero(a == target)), orientation)


def _partition_operator(X, p, orientation):
    x = np.diag(np.asarray(X, float))
    label = classify_partition(p, orientation)
    if label.singleton is not None:
        return 0.5 * float(x[label.singleton])
    sel = x[sorted(label.coords)]
    return 0.5 * float(sel.max()), 0.5 * float(sel.min())


def F_median(X: ArrayLike, p: ArrayLike) -> float | tuple[float, float]:
    """1/2 X_ii on V_i with i the unique smallest |p_i|; else (upper, lower) envelopes."""
    return _partition_operator(X, p, Orientation.MIN_COORDINATES)


def F_crystalline(X: ArrayLike, p: ArrayLike) -> float | tuple[float, float]:
    """1/2 X_ii on V_i with i the unique largest |p_i|; else (upper, lower) envelopes."""
    return _partition_operator(X, p, Orientation.MAX_COORDINATES)


# --------------------------------------------------------------------------
# Operator objects
# --------------------------------------------------------------------------


class OperatorKind(enum.Enum):
    HJ_MAX = "hj_max"
    HJ_POSPART = "hj_pospart"
    SMOOTH_AH = "smooth_ah"
    WEIGHTED_POWER = "weighted_power"
    WEIGHTED_FRACTIONAL = "weighted_fractional"
    MEDIAN = "median"
    CRYSTALLINE = "crystalline"


@dataclass(frozen=True, eq=False)
class LimitOperator:
    kind: OperatorKind
    name: str
    _eval: Callable = field(repr=False)
    first_order: bool = False
    smooth: SmoothAH | None = None

    def envelopes(self, X: ArrayLike, p: ArrayLike) -> tuple[float, float]:
        v = self._eval(np.asarray(X, float), np.asarray(p, float))
        return v if isinstance(v, tuple) else (v, v)

    def is_singular(self, p: ArrayLike) -> bool:
        return isinstance(self._eval(np.zeros((np.size(p),) * 2), np.asarray(p, float)), tuple)

    def F(self, X: ArrayLike, p: ArrayLike) -> float:
        v = self._eval(np.asarray(X, float), np.asarray(p, float))
        if isinstance(v, tuple):
            raise SingularGradientError(f"{self.name} is singular at p = {np.asarray(p).tolist()}")
        return v

    def upper(self, X: ArrayLike, p: ArrayLike) -> float:
        return self.envelopes(X, p)[0]

    def lower(self, X: ArrayLike, p: ArrayLike) -> float:
        return self.envelopes(X, p)[1]


def _weighted(exponent):
    def ev(X, p):
        if not np.any(p):
            return envelopes_weighted(X)
        return F_weighted(X, p, exponent)

    return ev


def hj_max_operator() -> LimitOperator:
    return LimitOperator(OperatorKind.HJ_MAX, "hj_max", lambda X, p: H_max(p), first_order=True)


def hj_pospart_operator() -> LimitOperator:
    return LimitOperator(OperatorKind.HJ_POSPART, "hj_pospart", lambda X, p: H_pospart(p), first_order=True)


def smooth_operator(spec: SmoothPhiSpec) -> LimitOperator:
    op = smooth_limit_operator(spec)
    return LimitOperator(OperatorKind.SMOOTH_AH, f"smooth_ah:{spec.name}", lambda X, p: op.F(X, p), smooth=op)


def weighted_power_operator(k: int) -> LimitOperator:
    return LimitOperator(OperatorKind.WEIGHTED_POWER, f"weighted_power:{k}", _weighted(k - 2))


def weighted_fractional_operator(delta: float) -> LimitOperator:
    return LimitOperator(OperatorKind.WEIGHTED_FRACTIONAL, f"weighted_fractional:{delta:g}", _weighted(delta))


def median_operator() -> LimitOperator:
    return LimitOperator(OperatorKind.MEDIAN, "median", F_median)


def crystalline_operator() -> LimitOperator:
    return LimitOperator(OperatorKind.CRYSTALLINE, "crystalline", F_crystalline)


def limit_operator_for(driver: Driver) -> LimitOperator | None:
    """The operator a driver is consistent with, or None for custom potentials."""
    kind = driver.kind
    if kind is DriverKind.MAX_NEIGHBOR:
        return hj_max_operator()
    if kind is DriverKind.POSPART_AVERAGE:
        return hj_pospart_operator()
    if kind is DriverKind.SMOOTH_PHI:
        return smooth_operator(driver.smooth_phi)
    if kind is DriverKind.MEDIAN_MIDPOINT:
        return median_operator()
    if kind is DriverKind.RSOS_MIDPOINT:
        return crystalline_operator()
    pot = driver.potential
    if pot.kind == "power":
        return weighted_power_operator(pot.k)
    if pot.kind == "fractional":
        return weighted_fractional_operator(pot.delta)
    if pot.kind == "abs":
        return median_operator()
    if pot.kind == "flatwell":
        # small differences sit inside the flat well, where the argmin is the RSOS midpoint
        return crystalline_operator()
    return None


# --------------------------------------------------------------------------
# Exact oracles
# --------------------------------------------------------------------------


class Hamiltonian(enum.Enum):
    HJ_MAX = "hj_max"
    HJ_POSPART = "hj_pospart"


def _unit_set(hamiltonian: Hamiltonian, d: int):
    """Bounding half-width and membership test of the set K with u = sup u0(x + t K)."""
    if hamiltonian is Hamiltonian.HJ_MAX:
        return 1.0, lambda q: np.sum(np.abs(q), axis=-1) <= 1.0 + 1e-14
    r = 1.0 / (2 * d)
    return r, lambda q: np.all(np.abs(q) <= r + 1e-14, axis=-1)


def hopf_lax_oracle(
    hamiltonian: Hamiltonian | str,
    u0: InitialData,
    x: ArrayLike,
    t: float,
    resolution: float | None = None,
    coarse: int = 64,
    zoom: int = 8,
) -> NDArray | float:
    """
    Viscosity solution of u_t = H(Du) for the two positively homogeneous H.

    HJ_MAX: sup of u0 over the closed l1 ball of radius t about x.
    HJ_POSPART: sup of u0 over the cube of half-width t/(2d) about x.

    The sup is found by a grid search with ``coarse`` cells per axis over the
    set, followed by zoom passes: a (2 zoom + 1)^d grid around the incumbent,
    shrinking fourfold per pass until its spacing in x is below
    ``resolution`` (default 1e-14).  The zoom is local, so u0 should have one
    dominant basin per coarse cell; Lipschitz profiles built from a few
    bumps, tents and cosines qualify.
    """
    hamiltonian = Hamiltonian(hamiltonian)
    x = np.asarray(x, float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        out = u0(pts)
        return float(out[0]) if single else out
    d = pts.shape[-1]
    half, member = _unit_set(hamiltonian, d)
    resolution = 1e-14 if resolution is None else resolution

    g = np.linspace(-half, half, coarse + 1)
    qc = np.stack(np.meshgrid(*[g] * d, indexing="ij"), axis=-1).reshape(-1, d)
    qc = qc[member(qc)]
    unit = np.linspace(-1.0, 1.0, 2 * zoom + 1)
    offsets = np.stack(np.meshgrid(*[unit] * d, indexing="ij"), axis=-1).reshape(-1, d)

    out = np.empty(len(pts))
    chunk = max(1, 200_000 // max(len(qc), len(offsets)))
    for s in range(0, len(pts), chunk):
        xs = pts[s : s + chunk]
        vals = u0(xs[:, None, :] + t * qc[None, :, :])
        arg = np.argmax(vals, axis=1)
        best_q = qc[arg]
        best = vals[np.arange(len(xs)), arg]
        r = 2 * half / coarse
        while True:
            qf = best_q[:, None, :] + r * offsets[None, :, :]
            fv = np.where(member(qf), u0(xs[:, None, :] + t * qf), -np.inf)
            arg = np.argmax(fv, axis=1)
            cand = fv[np.arange(len(xs)), arg]
            better = cand > best
            best = np.where(better, cand, best)
            best_q = np.where(better[:, None], qf[np.arange(len(xs)), arg], best_q)
            if r * t / zoom < resolution:
                break
            r *= 0.25
        out[s : s + chunk] = best
    return float(out[0]) if single else out


def _cosine_modes(profile) -> tuple[tuple[int, float], ...]:
    modes = getattr(profile, "cosine_modes", profile)
    if modes is None:
        raise ValueError("separable heat oracle needs a cosine or finite cosine-sum profile")
    try:
        return tuple((int(m), float(c)) for m, c in modes)
    except TypeError:
        raise ValueError("separable heat oracle needs a cosine or finite cosine-sum profile") from None


def separable_heat_oracle(profile, diffusivity: float, x1: ArrayLike, t: float) -> NDArray | float:
    """sum_m c_m exp(-D m^2 t) cos(m x_1) for u0 = sum_m c_m cos(m x_1)."""
    modes = _cosine_modes(profile)
    x1 = np.asarray(x1, float)
    out = sum(c * np.exp(-diffusivity * m * m * t) * np.cos(m * x1) for m, c in modes)
    out = np.asarray(out, float) + np.zeros_like(x1)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Monotone finite-difference cross solver
# --------------------------------------------------------------------------


class CFLError(ValueError):
    pass


@dataclass
class FDSolution:
    """Snapshots of the finite-difference solution on the window grid."""

    axes: list[NDArray[np.float64]]
    times: list[float]
    snapshots: dict[float, NDArray[np.float64]]
    dt: float

    def __call__(self, x: ArrayLike, t: float) -> NDArray:
        from scipy.interpolate import RegularGridInterpolator

        key = min(self.snapshots, key=lambda s: abs(s - t))
        if abs(key - t) > 1e-12 * max(1.0, abs(t)):
            raise ValueError(f"no snapshot at t = {t}")
        u = self.snapshots[key]
        x = np.asarray(x, float)
        if len(self.axes) == 1:
            return np.interp(x[..., 0], self.axes[0], u)
        return RegularGridInterpolator(self.axes, u)(x)


def fd_cross_solver(
    op: SmoothAH,
    u0: InitialData,
    window: Sequence[tuple[float, float]],
    T: float,
    dx: float,
    dt: float | None = None,
    times: Sequence[float] | None = None,
    c_cfl: float = 0.4,
) -> FDSolution:
    """
    Explicit monotone scheme for u_t = trace(A D^2u) + H(Du).

    Centered second differences for the diffusion, local Lax-Friedrichs for
    H with dissipation theta_i = max |dH/dp_i| over |p_j| <= L_j, L the
    sampled Lipschitz bounds of u0.  The grid covers the window padded by one
    cell per time step, so the shrinking stencil never reads a boundary.

    Stability needs dt <= dx^2 / (2 sum A_ii + dx sum theta_i); the default
    step is c_cfl times that bound.  An explicit ``dt`` above the bound raises.
    """
    d = op.d
    window = [tuple(map(float, w)) for w in window]
    if len(window) != d:
        raise ValueError("window dimension does not match operator")
    times = sorted({0.0, float(T), *(times or [])})
    a = np.diag(op.A)
    if np.any(a < 0):
        raise ValueError("diffusion matrix must be nonnegative")

    # Lipschitz bounds of u0 on a generous sample (the flow does not increase them).
    probe_axes = [np.arange(lo - 4.0, hi + 4.0 + dx / 2, dx / 2) for lo, hi in window]
    probe = u0(np.stack(np.meshgrid(*probe_axes, indexing="ij"), axis=-1))
    L = np.array([np.max(np.abs(np.diff(probe, axis=i))) / (dx / 2) for i in range(d)])
    theta = 2 * np.abs(op.M) @ L
    denom = 2 * a.sum() + dx * theta.sum()
    bound = np.inf if denom == 0 else dx * dx / denom
    if dt is not None and dt > bound * (1 + 1e-12):
        raise CFLError(f"dt = {dt:g} exceeds the CFL bound {bound:g}")
    dt_max = dt if dt is not None else c_cfl * bound

    plan = []
    for t0, t1 in zip(times[:-1], times[1:]):
        n = 1 if not np.isfinite(dt_max) else max(1, int(np.ceil((t1 - t0) / dt_max - 1e-9)))
        plan.append((t1, n, (t1 - t0) / n))
    total = sum(n for _, n, _ in plan)

    axes, full_axes = [], []
    for lo, hi in window:
        i0 = int(np.floor(lo / dx + 1e-9))
        i1 = int(np.ceil(hi / dx - 1e-9))
        axes.append(np.arange(i0, i1 + 1) * dx)
        full_axes.append(np.arange(i0 - total, i1 + total + 1) * dx)
    u = u0(np.stack(np.meshgrid(*full_axes, indexing="ij"), axis=-1))

    snaps = {0.0: u[tuple(slice(total, u.shape[i] - total) for i in range(d))].copy()}
    done = 0
    for t1, n, h in plan:
        for _ in range(n):
            inner = tuple(slice(1, -1) for _ in range(d))
            center = u[inner]
            lap = np.zeros_like(center)
            pc, jump = [], []
            for i in range(d):
                hi_sl, lo_sl = list(inner), list(inner)
                hi_sl[i] = slice(2, None)
                lo_sl[i] = slice(None, -2)
                up, dn = u[tuple(hi_sl)], u[tuple(lo_sl)]
                lap += a[i] * (up - 2 * center + dn) / (dx * dx)
                pc.append((up - dn) / (2 * dx))
                jump.append((up - 2 * center + dn) / (2 * dx))
            ham = op.H(np.stack(pc)) + sum(theta[i] * jump[i] for i in range(d))
            u = center + h * (lap + ham)
            done += 1
        rem = total - done
        snaps[t1] = u[tuple(slice(rem, u.shape[i] - rem) for i in range(d))].copy()
    return FDSolution(axes, times, snaps, min(h for _, _, h in plan))
