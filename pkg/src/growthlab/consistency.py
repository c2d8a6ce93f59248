"""
Consistency lab: (S(eps) phi(y) - phi(y)) / eps against F(D^2 phi(x), D phi(x)).
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from growthlab.drivers import TOL_ARGMIN, Driver, DriverKind
from growthlab.lattice import ScalingMode
from growthlab.operators import LimitOperator, limit_operator_for

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

TOL_CONSISTENCY = 5e-3
ENVELOPE_TOL = 1e-6
# Errors at or below this are round-off and count as converged.
ROUNDOFF_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Smooth phi with analytic gradient and Hessian; points on the last axis."""

    __test__ = False

    name: str
    d: int
    f: Callable[[NDArray], NDArray]
    grad: Callable[[NDArray], NDArray]
    hess: Callable[[NDArray], NDArray]
    family: str
    exact_diffs: Callable[[NDArray, float], NDArray] | None = field(default=None, repr=False)
    center: NDArray[np.float64] | None = None

    def stencil_diffs(self, y: ArrayLike, h: float) -> NDArray[np.float64]:
        """phi(y +- h e_i) - phi(y), ordered (+e1, -e1, +e2, -e2, ...)."""
        y = np.asarray(y, float)
        if self.exact_diffs is not None:
            return self.exact_diffs(y, h)
        f0 = self.f(y)
        out = np.empty(2 * self.d)
        for i in range(self.d):
            e = np.zeros(self.d)
            e[i] = h
            out[2 * i] = self.f(y + e) - f0
            out[2 * i + 1] = self.f(y - e) - f0
        return out

    def self_check(self, points: ArrayLike, tol: float = 1e-5, h: float = 1e-4) -> None:
        """Compare analytic derivatives with central differences."""
        for y in np.atleast_2d(np.asarray(points, float)):
            eye = np.eye(self.d) * h
            g_fd = np.array([(self.f(y + e) - self.f(y - e)) / (2 * h) for e in eye])
            H_fd = np.array(
                [[(self.f(y + a + b) - self.f(y + a - b) - self.f(y - a + b) + self.f(y - a - b)) / (4 * h * h)
                  for b in eye] for a in eye]
            )
            if np.max(np.abs(g_fd - self.grad(y))) > tol or np.max(np.abs(H_fd - self.hess(y))) > tol:
                raise ValueError(f"analytic derivatives of {self.name} disagree with finite differences at {y}")


def quadratic(p: ArrayLike, X: ArrayLike, x0: ArrayLike | None = None, c: float = 0.0) -> TestFunction:
    """c + p.(z - x0) + 1/2 (z - x0)^T X (z - x0); stencil differences are exact."""
    p = np.asarray(p, float)
    X = np.asarray(X, float)
    X = 0.5 * (X + X.T)
    d = p.size
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, float)

    def f(z):
        w = np.asarray(z, float) - x0
        return c + w @ p + 0.5 * np.einsum("...i,ij,...j->...", w, X, w)

    def grad(z):
        return p + (np.asarray(z, float) - x0) @ X

    def diffs(y, h):
        g = grad(y)
        out = np.empty(2 * d)
        out[0::2] = h * g + 0.5 * h * h * np.diag(X)
        out[1::2] = -h * g + 0.5 * h * h * np.diag(X)
        return out

    return TestFunction(
        f"quadratic(p={np.round(p, 4).tolist()})", d, f, grad,
        lambda z: X.copy(), "quadratic", diffs, x0,
    )


def cosine_product(freqs: ArrayLike) -> TestFunction:
    k = np.asarray(freqs, float)
    d = k.size

    def f(z):
        return np.prod(np.cos(k * np.asarray(z, float)), axis=-1)

    def grad(z):
        z = np.asarray(z, float)
        c, s = np.cos(k * z), np.sin(k * z)
        return np.array([-k[i] * s[i] * np.prod(np.delete(c, i)) for i in range(d)])

    def hess(z):
        z = np.asarray(z, float)
        c, s = np.cos(k * z), np.sin(k * z)
        H = np.empty((d, d))
        for i in range(d):
            for j in range(d):
                if i == j:
                    H[i, i] = -k[i] ** 2 * np.prod(c)
                else:
                    H[i, j] = k[i] * k[j] * s[i] * s[j] * np.prod(np.delete(c, [i, j]))
        return H

    return TestFunction(f"cosine_product({k.tolist()})", d, f, grad, hess, "cosine")


def bump(d: int) -> TestFunction:
    """exp(-|z|^2)."""

    def f(z):
        return np.exp(-np.sum(np.asarray(z, float) ** 2, axis=-1))

    def grad(z):
        z = np.asarray(z, float)
        return -2 * z * f(z)

    def hess(z):
        z = np.asarray(z, float)
        return (4 * np.outer(z, z) - 2 * np.eye(d)) * f(z)

    return TestFunction(f"bump({d})", d, f, grad, hess, "bump")


def random_quadratic(rng: np.random.Generator, d: int, family: str = "weighted", singular: bool = False) -> TestFunction:
    """
    Random quadratic centred at a random x0 in [-1, 1]^d with X entries in [-1, 1].

    ``family`` shapes the gradient p = D phi(x0):
      "weighted"     |p_i| in [0.5, 2];           singular -> p = 0
      "median"       distinct |p_i| gaps >= 0.5;  singular -> two smallest tied
      "crystalline"  distinct |p_i| gaps >= 0.5;  singular -> two largest tied
      "free"         p_i in [-2, 2]
    """
    X = rng.uniform(-1, 1, (d, d))
    X = 0.5 * (X + X.T)
    x0 = rng.uniform(-1, 1, d)
    signs = rng.choice([-1.0, 1.0], d)
    if family == "weighted":
        mags = np.zeros(d) if singular else rng.uniform(0.5, 2.0, d)
    elif family in ("median", "crystalline"):
        mags = np.cumsum(np.concatenate([[rng.uniform(0.0, 0.5)], rng.uniform(0.5, 1.0, d - 1)]))
        if singular and d >= 2:
            if family == "median":
                mags[1] = mags[0]
            else:
                mags[-2] = mags[-1]
        mags = rng.permutation(mags)
    elif family == "free":
        return quadratic(rng.uniform(-2, 2, d), X, x0)
    else:
        raise ValueError(f"unknown quadratic family {family!r}")
    return quadratic(signs * mags, X, x0)


def family_for(driver: Driver) -> str:
    if driver.kind is DriverKind.MEDIAN_MIDPOINT:
        return "median"
    if driver.kind is DriverKind.RSOS_MIDPOINT:
        return "crystalline"
    if driver.kind is DriverKind.ARGMIN_POTENTIAL:
        return {"abs": "median", "flatwell": "crystalline"}.get(driver.potential.kind, "weighted")
    return "free"


def consistency_ratio(
    driver: Driver, phi: TestFunction, y: ArrayLike, eps: float, scaling: ScalingMode | None = None
) -> float:
    """Phi^eps(y) / eps on the stencil y, y +- eps^s e_i."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    scaling = scaling or driver.scaling
    diffs = phi.stencil_diffs(y, scaling.spacing(eps))
    return float(driver.increment(diffs)) / eps


def default_offset(d: int) -> NDArray[np.float64]:
    u = 1.0 / np.arange(1, d + 1)
    return u / np.linalg.norm(u)


def _decreasing(errs: Sequence[float], floors: Sequence[float]) -> bool:
    return all(b < a or b <= f for a, b, f in zip(errs[:-1], errs[1:], floors[1:]))


@dataclass
class ConsistencyReport:
    driver: str
    function: str
    x: list[float]
    epsilons: list[float]
    ratios: list[float]
    control_ratios: list[float]
    upper: float
    lower: float
    singular: bool
    verdict: bool
    tol: float
    errors: list[float] = field(default_factory=list)
    control_errors: list[float] = field(default_factory=list)

    @property
    def target(self) -> float | tuple[float, float]:
        return (self.upper, self.lower) if self.singular else self.upper

    def rows(self) -> list[dict]:
        out = []
        for sched, ratios in (("offset", self.ratios), ("control", self.control_ratios)):
            for e, r in zip(self.epsilons, ratios):
                out.append({
                    "driver": self.driver,
                    "function": self.function,
                    "x": " ".join(f"{v:.6g}" for v in self.x),
                    "schedule": sched,
                    "epsilon": e,
                    "ratio": r,
                    "upper": self.upper,
                    "lower": self.lower,
                    "verdict": "PASS" if self.verdict else "FAIL",
                })
        return out


def consistency_sweep(
    driver: Driver,
    phi: TestFunction,
    x: ArrayLike,
    eps_list: Sequence[float],
    offset: ArrayLike | None = None,
    operator: LimitOperator | None = None,
    tol: float = TOL_CONSISTENCY,
    envelope_tol: float = ENVELOPE_TOL,
    floor: float = ROUNDOFF_FLOOR,
) -> ConsistencyReport:
    """
    Ratios along y_eps = x + sqrt(eps) u and at y = x.

    Off the singular set: PASS iff both error sequences decrease and the last
    is <= ``tol``.  An error below floor + TOL_ARGMIN / eps is already at the
    resolution of the argmin solver and counts as converged.  On it:
    PASS iff every ratio lies in [lower - envelope_tol, upper + envelope_tol].
    """
    x = np.asarray(x, float)
    op = operator or limit_operator_for(driver)
    if op is None:
        raise ValueError(f"no limit operator known for {driver.name}")
    X, p = phi.hess(x), phi.grad(x)
    upper, lower = op.envelopes(X, p)
    singular = op.is_singular(p)
    u = default_offset(x.size) if offset is None else np.asarray(offset, float)
    ratios = [consistency_ratio(driver, phi, x + np.sqrt(e) * u, e) for e in eps_list]
    control = [consistency_ratio(driver, phi, x, e) for e in eps_list]
    if singular:
        errs = [max(lower - r, r - upper, 0.0) for r in ratios]
        cerrs = [max(lower - r, r - upper, 0.0) for r in control]
        verdict = max(errs + cerrs) <= envelope_tol
    else:
        errs = [abs(r - upper) for r in ratios]
        cerrs = [abs(r - upper) for r in control]
        floors = [floor + TOL_ARGMIN / e for e in eps_list]
        verdict = (
            _decreasing(errs, floors) and _decreasing(cerrs, floors)
            and errs[-1] <= tol and cerrs[-1] <= tol
        )
    return ConsistencyReport(
        driver.name, phi.name, x.tolist(), list(map(float, eps_list)), ratios, control,
        upper, lower, singular, bool(verdict), tol, errs, cerrs,
    )


def sandwich_check(driver: Driver, phi: TestFunction, y: ArrayLike, eps: float) -> bool:
    """
    Phi^eps(y) in [min_i D_i, max_i D_i], D_i = 1/2 (phi(y + h e_i) + phi(y - h e_i) - 2 phi(y)).

    Exact at every finite eps for strictly convex potentials and for the
    median midpoint; no tolerance is applied.
    """
    ok = driver.kind is DriverKind.MEDIAN_MIDPOINT or (
        driver.kind is DriverKind.ARGMIN_POTENTIAL and driver.potential.kind in ("power", "fractional", "abs")
    )
    if not ok:
        raise ValueError(f"sandwich bound does not apply to {driver.name}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    diffs = phi.stencil_diffs(y, np.sqrt(eps))
    half = 0.5 * (diffs[0::2] + diffs[1::2])
    val = float(driver.increment(diffs))
    return bool(half.min() <= val <= half.max())


def consistency_matrix(
    drivers: Sequence[Driver],
    d: int,
    eps_list: Sequence[float],
    functions: int = 20,
    singular: int = 5,
    seed: int = 0,
    tol: float = TOL_CONSISTENCY,
    envelope_tol: float = ENVELOPE_TOL,
    workers: int = 4,
) -> list[ConsistencyReport]:
    """
    Random quadratic sweeps for each driver, centred at the quadratic's base point.

    Each driver draws ``functions`` quadratics with gradient off the singular
    set and, where its operator has one, ``singular`` on it.  Draws use a
    per-driver stream so adding a driver does not reshuffle the others.
    Reports come back in driver order, regular probes first.
    """
    from concurrent.futures import ThreadPoolExecutor

    def run(job):
        k, drv = job
        rng = np.random.default_rng([seed, k])
        dim = drv.smooth_phi.d if drv.smooth_phi is not None else d
        fam = family_for(drv)
        out = []
        plan = [False] * functions + ([True] * singular if fam != "free" else [])
        for sing in plan:
            phi = random_quadratic(rng, dim, fam, sing)
            out.append(consistency_sweep(drv, phi, phi.center, eps_list, tol=tol, envelope_tol=envelope_tol))
        return out

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        chunks = list(pool.map(run, enumerate(drivers)))
    return [r for chunk in chunks for r in chunk]
