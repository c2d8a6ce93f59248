"""
Discrete height fields on finite lattice boxes.

A field lives on an integer box of Z^d and carries the step index, the scale
epsilon and the scaling mode needed to read it back as the rescaled surface
u^eps(x, t).  Boundaries are handled by the domain of dependence: a run of n
steps starts on the sampling window padded by n cells per face and every step
drops one cell per face, so no boundary value is ever invented.
"""

from __future__ import annotations

import enum
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from growthlab.drivers import Driver

# Relative slack used to snap near-integers before floor/ceil (t/eps = 2.9999999).
_SNAP = 1e-9


class LightConeError(ValueError):
    """Requested a site or step that the stored light cone does not cover."""


class ScalingMode(enum.Enum):
    HYPERBOLIC = "hyperbolic"
    PARABOLIC = "parabolic"

    @property
    def space_exponent(self) -> float:
        return 1.0 if self is ScalingMode.HYPERBOLIC else 0.5

    def spacing(self, epsilon: float) -> float:
        """Continuum length of one lattice cell at scale ``epsilon``."""
        return float(epsilon) ** self.space_exponent


def lattice_floor(v: ArrayLike) -> NDArray[np.int64]:
    """Floor toward -inf, snapping values within 1e-9 (relative) of an integer."""
    v = np.asarray(v, dtype=float)
    r = np.rint(v)
    snap = np.abs(v - r) <= _SNAP * np.maximum(1.0, np.abs(v))
    return np.where(snap, r, np.floor(v)).astype(np.int64)


def lattice_ceil(v: ArrayLike) -> NDArray[np.int64]:
    v = np.asarray(v, dtype=float)
    r = np.rint(v)
    snap = np.abs(v - r) <= _SNAP * np.maximum(1.0, np.abs(v))
    return np.where(snap, r, np.ceil(v)).astype(np.int64)


@dataclass(frozen=True)
class InitialData:
    """
    Continuum initial profile u0: R^d -> R.

    ``func`` is vectorised over points stacked on the last axis, shape (..., d).
    ``lipschitz`` is the declared modulus (u0 is Lipschitz with this constant),
    ``cosine_modes`` lists (m, c_m) when u0(x) = sum c_m cos(m x_1).
    """

    name: str
    func: Callable[[NDArray[np.float64]], NDArray[np.float64]]
    lipschitz: float
    modulus: str = ""
    grad: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None
    hess: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None
    cosine_modes: tuple[tuple[int, float], ...] | None = None

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def check(self, d: int, radius: float = 4.0, n: int = 41, delta: float = 1e-3) -> None:
        """Sampled boundedness and uniform-continuity check on a fixed probe grid."""
        axes = [np.linspace(-radius, radius, n)] * d
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        vals = self(pts)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"initial data {self.name!r} is not finite on the probe grid")
        for i in range(d):
            shift = np.zeros(d)
            shift[i] = delta
            osc = np.max(np.abs(self(pts + shift) - vals))
            if osc > self.lipschitz * delta * (1 + 1e-6) + 1e-12:
                raise ValueError(
                    f"initial data {self.name!r} oscillates by {osc:.3g} over {delta} "
                    f"on axis {i}, above its declared modulus {self.lipschitz}"
                )


@dataclass(frozen=True, eq=False)
class HeightField:
    """Heights on the integer box ``lower .. lower + shape - 1`` at step ``step``."""

    values: NDArray[np.float64]
    lower: tuple[int, ...]
    step: int
    epsilon: float
    scaling: ScalingMode

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim != len(self.lower):
            raise ValueError("values rank does not match box dimension")
        if vals.ndim == 0 or min(vals.shape) < 1:
            raise ValueError("box must be nonempty on every axis")
        if not np.all(np.isfinite(vals)):
            raise ValueError("heights must be finite")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lower", tuple(int(v) for v in self.lower))

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def upper(self) -> tuple[int, ...]:
        return tuple(lo + n - 1 for lo, n in zip(self.lower, self.values.shape))

    @property
    def spacing(self) -> float:
        return self.scaling.spacing(self.epsilon)

    def sites(self, axis: int) -> NDArray[np.int64]:
        return np.arange(self.lower[axis], self.upper[axis] + 1)

    def contains(self, sites: NDArray[np.int64]) -> NDArray[np.bool_]:
        sites = np.asarray(sites)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((sites >= lo) & (sites <= hi), axis=-1)

    def at(self, sites: ArrayLike) -> NDArray[np.float64]:
        """Values at integer sites, shape (..., d)."""
        sites = np.asarray(sites, dtype=np.int64)
        if not np.all(self.contains(sites)):
            raise LightConeError("site outside the stored box")
        idx = sites - np.asarray(self.lower)
        return self.values[tuple(np.moveaxis(idx, -1, 0))]

    def interior(self, cells: int) -> NDArray[np.float64]:
        """Values with ``cells`` sites stripped from every face."""
        sl = tuple(slice(cells, n - cells) for n in self.values.shape)
        return self.values[sl]


def init_field(
    u0: InitialData,
    window: Sequence[tuple[float, float]],
    steps: int,
    epsilon: float,
    scaling: ScalingMode,
) -> HeightField:
    """
    Step-0 field on the lattice image of ``window`` padded by ``steps`` cells.

    Each axis of the window [lo, hi] maps to sites floor(lo/h) .. ceil(hi/h)
    with h = epsilon**space_exponent, and site n gets u0(h * n).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    window = [tuple(map(float, w)) for w in window]
    if not window or any(hi < lo for lo, hi in window):
        raise ValueError("window must be a nonempty box")
    h = scaling.spacing(epsilon)
    lower, axes = [], []
    for lo, hi in window:
        a = int(lattice_floor(lo / h)) - steps
        b = int(lattice_ceil(hi / h)) + steps
        lower.append(a)
        axes.append(np.arange(a, b + 1) * h)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return HeightField(u0(pts), tuple(lower), 0, epsilon, scaling)


def neighbor_stack(values: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
    """
    Interior centers and their 2d neighbours ordered (+e1, -e1, +e2, -e2, ...).
    """
    d = values.ndim
    inner = tuple(slice(1, -1) for _ in range(d))
    nbrs = []
    for i in range(d):
        plus = list(inner)
        minus = list(inner)
        plus[i] = slice(2, None)
        minus[i] = slice(None, -2)
        nbrs.append(values[tuple(plus)])
        nbrs.append(values[tuple(minus)])
    return values[inner], np.stack(nbrs)


def step(fld: HeightField, driver: Driver) -> HeightField:
    """One synchronous update; the box loses one cell per face."""
    if min(fld.values.shape) < 3:
        raise ValueError("box too small to shrink: need at least 3 cells per axis")
    center, nbrs = neighbor_stack(fld.values)
    new = driver.phi(center, nbrs)
    return HeightField(
        new,
        tuple(lo + 1 for lo in fld.lower),
        fld.step + 1,
        fld.epsilon,
        fld.scaling,
    )


@dataclass
class Trajectory:
    """Fields of one run keyed by step; only the requested steps are retained."""

    epsilon: float
    scaling: ScalingMode
    fields: dict[int, HeightField] = field(default_factory=dict)

    def __getitem__(self, n: int) -> HeightField:
        try:
            return self.fields[n]
        except KeyError:
            raise LightConeError(f"step {n} was not retained") from None

    def __len__(self) -> int:
        return max(self.fields) + 1 if self.fields else 0

    @property
    def last(self) -> HeightField:
        return self.fields[max(self.fields)]


def simulate(
    fld: HeightField,
    driver: Driver,
    steps: int,
    keep: str | Iterable[int] = "all",
) -> Trajectory:
    """
    Run ``steps`` updates from ``fld``.

    ``keep`` is "all", "last" (streaming) or an iterable of step indices.
    """
    if keep == "all":
        wanted = None
    elif keep == "last":
        wanted = {fld.step + steps}
    else:
        wanted = {int(k) for k in keep}
    traj = Trajectory(fld.epsilon, fld.scaling)
    cur = fld
    for _ in range(steps + 1):
        if wanted is None or cur.step in wanted:
            traj.fields[cur.step] = cur
        if cur.step == fld.step + steps:
            break
        cur = step(cur, driver)
    return traj


def evaluate_scaled(
    trajectory: Trajectory | Sequence[HeightField],
    x: ArrayLike,
    t: float,
) -> NDArray[np.float64] | float:
    """
    u^eps(x, t) = u(floor(x / h), floor(t / eps)) with h = eps**space_exponent.

    ``x`` is one point of shape (d,) or a stack (..., d).
    """
    first = trajectory[0] if not isinstance(trajectory, Trajectory) else None
    if isinstance(trajectory, Trajectory):
        eps, scaling = trajectory.epsilon, trajectory.scaling
    else:
        eps, scaling = first.epsilon, first.scaling
    if t < 0:
        raise LightConeError("negative time")
    n = int(lattice_floor(t / eps))
    try:
        fld = trajectory[n]
    except (IndexError, KeyError):
        raise LightConeError(f"step {n} beyond trajectory") from None
    x = np.asarray(x, dtype=float)
    sites = lattice_floor(x / fld.spacing)
    if not np.all(fld.contains(sites)):
        raise LightConeError("point outside the light-cone guaranteed region")
    out = fld.at(sites)
    return float(out) if out.ndim == 0 else out
