"""
Epsilon sweeps of full growth simulations against exact or numerical references.

Each run starts on the light cone of the sampling window, so the sampled
values of u^eps are exact for the scheme and all error comes from the scheme
itself, from floor sampling, and from the reference.
"""

from __future__ import annotations

import csv
import json
import math
import time as _time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from growthlab.drivers import Driver, DriverKind, detect_scaling
from growthlab.lattice import (
    InitialData,
    ScalingMode,
    Trajectory,
    evaluate_scaled,
    init_field,
    lattice_ceil,
    lattice_floor,
    simulate,
)
from growthlab.operators import Hamiltonian, fd_cross_solver, hopf_lax_oracle, separable_heat_oracle, smooth_limit_operator

if TYPE_CHECKING:
    from numpy.typing import NDArray

MAX_SITE_UPDATES = 5e9
# Sup errors at or below this are round-off between two exact evaluations.
ROUNDOFF_FLOOR = 1e-12
ORACLES = ("hopf_lax", "separable_heat", "fd_cross", "self", "stationary")


class OracleMismatchError(ValueError):
    """The requested reference does not describe this driver's limit."""


class ResourceCapError(ValueError):
    """Projected work exceeds the configured site-update cap."""


@dataclass
class ExperimentConfig:
    """
    One epsilon sweep.

    ``sample_spacing`` places the sample grid on multiples of the spacing
    inside the window; when it is a multiple of every lattice spacing the
    floor in u^eps is exact at the samples.  Otherwise ``sample_points`` per
    axis are spread with linspace.  ``threshold`` is a calibration value, not
    a claimed rate.
    """

    id: str
    driver: Driver
    u0: InitialData
    d: int
    window: tuple[tuple[float, float], ...]
    T: float
    epsilons: tuple[float, ...]
    oracle: str
    sample_points: int = 33
    sample_spacing: float | None = None
    times: tuple[float, ...] | None = None
    threshold: float | None = None
    resolution: float | None = None
    diffusivity: float = 0.5
    fd_ratio: float = 0.5
    c_cfl: float = 0.4
    max_site_updates: float = MAX_SITE_UPDATES
    workers: int = 4
    csv_path: str | None = None
    json_path: str | None = None
    config_text: str | None = None

    def __post_init__(self) -> None:
        self.window = tuple((float(lo), float(hi)) for lo, hi in self.window)
        self.epsilons = tuple(float(e) for e in self.epsilons)
        if self.d < 1 or len(self.window) != self.d:
            raise ValueError(f"window has {len(self.window)} axes but d = {self.d}")
        if any(hi <= lo for lo, hi in self.window):
            raise ValueError("window must have positive extent on every axis")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ValueError("epsilons must be positive")
        if any(b >= a for a, b in zip(self.epsilons, self.epsilons[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        if self.oracle not in ORACLES:
            raise ValueError(f"unknown oracle {self.oracle!r}; known: {', '.join(ORACLES)}")
        if self.times is None:
            self.times = tuple(self.T * k / 4 for k in range(5))
        self.times = tuple(float(t) for t in self.times)
        if any(t < 0 or t > self.T * (1 + 1e-12) for t in self.times):
            raise ValueError("sample times must lie in [0, T]")


@dataclass
class ConvergenceReport:
    experiment_id: str
    oracle: str
    epsilons: list[float]
    times: list[float]
    errors: list[float]
    time_errors: list[list[float]]
    slope: float | None
    intercept: float | None
    verdict: bool
    threshold: float | None
    runtime: float
    notes: list[str] = field(default_factory=list)
    config_text: str | None = None

    def csv_rows(self) -> list[dict]:
        return [
            {"experiment_id": self.experiment_id, "epsilon": e, "time": t, "sup_error": err}
            for e, per in zip(self.epsilons, self.time_errors)
            for t, err in zip(self.times, per)
        ]

    def to_json(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "config": self.config_text,
            "oracle": self.oracle,
            "epsilons": self.epsilons,
            "times": self.times,
            "errors": self.errors,
            "time_errors": self.time_errors,
            "slope": self.slope,
            "intercept": self.intercept,
            "threshold": self.threshold,
            "threshold_note": "calibration threshold, not a proven rate",
            "verdict": "PASS" if self.verdict else "FAIL",
            "runtime_seconds": self.runtime,
            "notes": self.notes,
        }

    def write(self, csv_path: str | Path | None = None, json_path: str | Path | None = None) -> None:
        if csv_path is not None:
            Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
            with open(csv_path, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=["experiment_id", "epsilon", "time", "sup_error"])
                w.writeheader()
                w.writerows(self.csv_rows())
        if json_path is not None:
            Path(json_path).parent.mkdir(parents=True, exist_ok=True)
            with open(json_path, "w") as fh:
                json.dump(self.to_json(), fh, indent=2)
                fh.write("\n")


# --------------------------------------------------------------------------
# Pieces
# --------------------------------------------------------------------------


def sample_grid(
    window: Sequence[tuple[float, float]], points: int = 33, spacing: float | None = None
) -> NDArray[np.float64]:
    """Sample points stacked as (n, d)."""
    axes = []
    for lo, hi in window:
        if spacing is None:
            axes.append(np.linspace(lo, hi, points))
        else:
            k0 = math.ceil(lo / spacing - 1e-9)
            k1 = math.floor(hi / spacing + 1e-9)
            axes.append(np.arange(k0, k1 + 1) * spacing)
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


def sup_error(
    traj: Trajectory,
    oracle: Callable[[NDArray, float], NDArray],
    points: NDArray,
    times: Sequence[float],
) -> tuple[list[float], float]:
    """Per-time and overall max |u^eps - oracle| over the sample grid."""
    per = []
    for t in times:
        got = np.asarray(evaluate_scaled(traj, points, t))
        ref = np.asarray(oracle(points, t))
        per.append(float(np.max(np.abs(got - ref))))
    return per, max(per)


def rate_fit(epsilons: Sequence[float], errors: Sequence[float]) -> tuple[float | None, float | None, list[str]]:
    """Least-squares slope and intercept of log error against log eps; diagnostic only."""
    notes = []
    pairs = [(e, r) for e, r in zip(epsilons, errors) if r > ROUNDOFF_FLOOR]
    if len(pairs) < len(errors):
        notes.append(f"rate fit excluded {len(errors) - len(pairs)} error(s) at or below round-off {ROUNDOFF_FLOOR:g}")
    if len(pairs) < 3:
        notes.append("rate fit needs at least 3 positive errors; none reported")
        return None, None, notes
    x = np.log([e for e, _ in pairs])
    y = np.log([r for _, r in pairs])
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept), notes


def strictly_decreasing(errors: Sequence[float], floor: float = ROUNDOFF_FLOOR) -> bool:
    """Strict decrease; an error at or below ``floor`` counts as converged."""
    return all(b < a or b <= floor for a, b in zip(errors, errors[1:]))


def projected_site_updates(window: Sequence[tuple[float, float]], steps: int, h: float) -> int:
    """Exact count of site updates on the shrinking light-cone box."""
    widths = [int(lattice_ceil(hi / h) - lattice_floor(lo / h)) + 1 for lo, hi in window]
    total = 0
    for n in range(steps):
        total += math.prod(w + 2 * (steps - n) - 2 for w in widths)
    return total


def _steps(T: float, eps: float) -> int:
    return int(math.ceil(T / eps - 1e-9))


def _scaling(driver: Driver) -> ScalingMode:
    detected = detect_scaling(driver)
    if driver.scaling is not None and driver.scaling is not detected:
        raise OracleMismatchError(
            f"{driver.name} declares {driver.scaling.value} scaling but moves linear fields "
            f"like a {detected.value} driver"
        )
    return detected


def _check_oracle(cfg: ExperimentConfig, scaling: ScalingMode) -> None:
    kind = cfg.driver.kind
    if cfg.oracle == "hopf_lax":
        if scaling is not ScalingMode.HYPERBOLIC or kind not in (DriverKind.MAX_NEIGHBOR, DriverKind.POSPART_AVERAGE):
            raise OracleMismatchError(f"Hopf-Lax reference needs the max or pospart driver, not {cfg.driver.name}")
    elif cfg.oracle in ("separable_heat", "fd_cross"):
        if scaling is not ScalingMode.PARABOLIC:
            raise OracleMismatchError(f"{cfg.oracle} reference needs a parabolic driver, not {cfg.driver.name}")
        if cfg.oracle == "separable_heat" and cfg.u0.cosine_modes is None:
            raise OracleMismatchError(f"separable heat reference needs cosine initial data, not {cfg.u0.name}")
        if cfg.oracle == "fd_cross" and kind is not DriverKind.SMOOTH_PHI:
            raise OracleMismatchError(f"finite-difference reference needs a smooth increment driver, not {cfg.driver.name}")


def _oracle_for(cfg: ExperimentConfig, eps: float, h: float) -> Callable[[NDArray, float], NDArray]:
    if cfg.oracle == "hopf_lax":
        ham = Hamiltonian.HJ_MAX if cfg.driver.kind is DriverKind.MAX_NEIGHBOR else Hamiltonian.HJ_POSPART
        return lambda x, t: hopf_lax_oracle(ham, cfg.u0, x, t, resolution=cfg.resolution)
    if cfg.oracle == "separable_heat":
        return lambda x, t: separable_heat_oracle(cfg.u0, cfg.diffusivity, x[..., 0], t)
    if cfg.oracle == "stationary":
        # the floor-sampled initial profile: what an exactly frozen surface reports
        return lambda x, t: cfg.u0(h * lattice_floor(x / h))
    op = smooth_limit_operator(cfg.driver.smooth_phi)
    sol = fd_cross_solver(op, cfg.u0, cfg.window, cfg.T, cfg.fd_ratio * h, times=cfg.times, c_cfl=cfg.c_cfl)
    return lambda x, t: sol(x, t)


def _run_one(driver: Driver, cfg: ExperimentConfig, eps: float, scaling: ScalingMode) -> Trajectory:
    steps = _steps(cfg.T, eps)
    keep = sorted({int(lattice_floor(t / eps)) for t in cfg.times})
    fld = init_field(cfg.u0, cfg.window, steps, eps, scaling)
    return simulate(fld, driver, steps, keep=keep)


def _guard(cfg: ExperimentConfig, scaling: ScalingMode) -> None:
    total = sum(projected_site_updates(cfg.window, _steps(cfg.T, e), scaling.spacing(e)) for e in cfg.epsilons)
    if total > cfg.max_site_updates:
        raise ResourceCapError(
            f"experiment {cfg.id!r} needs {total:.3g} site updates, above the cap {cfg.max_site_updates:.3g}"
        )


# --------------------------------------------------------------------------
# Entry points
# --------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig) -> ConvergenceReport:
    """Simulate every epsilon concurrently and compare with the configured reference."""
    if cfg.oracle == "self":
        return self_convergence(
            cfg.driver, cfg.u0, cfg.epsilons, cfg.window, cfg.T,
            times=cfg.times, sample_points=cfg.sample_points, sample_spacing=cfg.sample_spacing,
            threshold=cfg.threshold, max_site_updates=cfg.max_site_updates, workers=cfg.workers,
            experiment_id=cfg.id, config_text=cfg.config_text,
        )
    t0 = _time.perf_counter()
    scaling = _scaling(cfg.driver)
    _check_oracle(cfg, scaling)
    _guard(cfg, scaling)
    points = sample_grid(cfg.window, cfg.sample_points, cfg.sample_spacing)
    shared = None
    if cfg.oracle in ("hopf_lax", "separable_heat"):
        # these references do not depend on eps: evaluate once
        ref = _oracle_for(cfg, cfg.epsilons[0], scaling.spacing(cfg.epsilons[0]))
        cache = {t: ref(points, t) for t in cfg.times}
        shared = lambda x, t: cache[t]  # noqa: E731

    def job(eps):
        h = scaling.spacing(eps)
        traj = _run_one(cfg.driver, cfg, eps, scaling)
        return sup_error(traj, shared or _oracle_for(cfg, eps, h), points, cfg.times)

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        results = list(pool.map(job, cfg.epsilons))
    per_time = [r[0] for r in results]
    errors = [r[1] for r in results]
    return _assemble(cfg.id, cfg.oracle, list(cfg.epsilons), list(cfg.times), errors, per_time,
                     cfg.threshold, t0, cfg.config_text)


def self_convergence(
    driver: Driver,
    u0: InitialData,
    epsilons: Sequence[float],
    window: Sequence[tuple[float, float]],
    T: float,
    times: Sequence[float] | None = None,
    sample_points: int = 33,
    sample_spacing: float | None = None,
    threshold: float | None = None,
    max_site_updates: float = MAX_SITE_UPDATES,
    workers: int = 4,
    experiment_id: str = "self",
    config_text: str | None = None,
) -> ConvergenceReport:
    """
    Sup differences between consecutive rescaled runs on a common sample grid.

    Entry k of the report compares epsilons[k] with epsilons[k + 1] and is
    listed under epsilons[k].  PASS iff the differences strictly decrease
    (and the last is below ``threshold`` when one is given).
    """
    if len(epsilons) < 3:
        raise ValueError("self-convergence needs at least 3 epsilons")
    cfg = ExperimentConfig(
        experiment_id, driver, u0, len(window), tuple(window), T, tuple(epsilons), "self",
        sample_points=sample_points, sample_spacing=sample_spacing, times=None if times is None else tuple(times),
        threshold=threshold, max_site_updates=max_site_updates, workers=workers, config_text=config_text,
    )
    t0 = _time.perf_counter()
    scaling = _scaling(driver)
    _guard(cfg, scaling)
    points = sample_grid(cfg.window, cfg.sample_points, cfg.sample_spacing)

    def job(eps):
        traj = _run_one(driver, cfg, eps, scaling)
        return [np.asarray(evaluate_scaled(traj, points, t)) for t in cfg.times]

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        samples = list(pool.map(job, cfg.epsilons))
    per_time = [
        [float(np.max(np.abs(a - b))) for a, b in zip(coarse, fine)]
        for coarse, fine in zip(samples[:-1], samples[1:])
    ]
    errors = [max(p) for p in per_time]
    ratios = {round(a / b, 9) for a, b in zip(cfg.epsilons, cfg.epsilons[1:])}
    report = _assemble(experiment_id, "self", list(cfg.epsilons[:-1]), list(cfg.times), errors, per_time,
                       threshold, t0, config_text)
    if ratios != {4.0}:
        report.notes.append(f"epsilon ratios {sorted(ratios)} differ from 4")
    return report


def _assemble(exp_id, oracle, epsilons, times, errors, per_time, threshold, t0, config_text) -> ConvergenceReport:
    slope, intercept, notes = rate_fit(epsilons, errors)
    verdict = strictly_decreasing(errors) and (threshold is None or errors[-1] <= threshold)
    return ConvergenceReport(
        exp_id, oracle, epsilons, times, errors, per_time, slope, intercept, bool(verdict), threshold,
        _time.perf_counter() - t0, notes, config_text,
    )
