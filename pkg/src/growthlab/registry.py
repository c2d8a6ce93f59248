"""Named drivers, limit operators, potentials, smooth increments and initial data."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from growthlab import drivers as drv
from growthlab import operators as ops
from growthlab.lattice import InitialData


def _norm(x):
    return np.sqrt(np.sum(np.asarray(x, float) ** 2, axis=-1))


def _zero():
    return InitialData(
        "zero", lambda x: np.zeros(np.shape(x)[:-1]), 0.0, "constant",
        grad=lambda x: np.zeros_like(np.asarray(x, float)),
    )


def _tent():
    return InitialData("tent", lambda x: np.maximum(0.0, 1.0 - _norm(x)), 1.0, "Lipschitz 1, compact support")


def _cos():
    return InitialData(
        "cos",
        lambda x: np.cos(np.asarray(x, float)[..., 0]),
        1.0,
        "cos(x_1); Lipschitz 1",
        grad=lambda x: np.stack([-np.sin(x[..., 0])] + [np.zeros(np.shape(x)[:-1])] * (np.shape(x)[-1] - 1), -1),
        cosine_modes=((1, 1.0),),
    )


def _bump():
    return InitialData(
        "bump",
        lambda x: np.exp(-np.sum(np.asarray(x, float) ** 2, axis=-1)),
        float(np.sqrt(2.0) * np.exp(-0.5)),
        "exp(-|x|^2); Lipschitz sqrt(2/e)",
        grad=lambda x: -2 * np.asarray(x, float) * np.exp(-np.sum(np.asarray(x, float) ** 2, axis=-1))[..., None],
    )


def _ramp():
    # arctan keeps strictly positive lattice differences far out; tanh saturates in floating point.
    return InitialData("ramp", lambda x: np.arctan(np.asarray(x, float)[..., 0]), 1.0, "arctan(x_1); strictly increasing")


def _linear_bump():
    def f(x):
        x = np.asarray(x, float)
        return x[..., 0] + np.exp(-np.sum(x * x, axis=-1))

    # slope 1 beats the bump's steepest slope sqrt(2/e), so the gradient never vanishes
    return InitialData("linear_bump", f, 1.0 + float(np.sqrt(2.0) * np.exp(-0.5)), "x_1 + exp(-|x|^2)")


INITIAL_DATA: dict[str, Callable[[], InitialData]] = {
    "zero": _zero,
    "tent": _tent,
    "cos": _cos,
    "bump": _bump,
    "ramp": _ramp,
    "linear_bump": _linear_bump,
}

POTENTIALS: dict[str, Callable[..., drv.Potential]] = {
    "power": lambda k=4, **_: drv.Potential.power(int(k)),
    "fractional": lambda delta=0.5, **_: drv.Potential.fractional(float(delta)),
    "abs": lambda **_: drv.Potential.absolute(),
    "flatwell": lambda a=1.0, **_: drv.Potential.flat_well(float(a)),
}

PHI_SPECS: dict[str, Callable[[int], drv.SmoothPhiSpec]] = {
    "kpz": drv.kpz_phi,
    "heat": drv.heat_phi,
}


def _smooth(d: int = 1, phi: str = "kpz", **_):
    return drv.smooth_phi(smooth_phi_spec(phi, d))


def _argmin(potential: str = "power", **kw):
    return drv.argmin_potential(potential_from(potential, **kw))


DRIVERS: dict[str, Callable[..., drv.Driver]] = {
    "max": lambda **_: drv.max_neighbor(),
    "pospart": lambda **_: drv.pospart_average(),
    "smooth_phi": _smooth,
    "argmin": _argmin,
    "median": lambda **_: drv.median_driver(),
    "rsos": lambda **_: drv.rsos_driver(),
}

OPERATORS: dict[str, Callable[..., ops.LimitOperator]] = {
    "hj_max": lambda **_: ops.hj_max_operator(),
    "hj_pospart": lambda **_: ops.hj_pospart_operator(),
    "smooth_ah": lambda d=1, phi="kpz", **_: ops.smooth_operator(smooth_phi_spec(phi, d)),
    "weighted_power": lambda k=4, **_: ops.weighted_power_operator(int(k)),
    "weighted_fractional": lambda delta=0.5, **_: ops.weighted_fractional_operator(float(delta)),
    "median": lambda **_: ops.median_operator(),
    "crystalline": lambda **_: ops.crystalline_operator(),
}


def _lookup(table: dict, kind: str, name: str):
    try:
        return table[name]
    except KeyError:
        raise KeyError(f"unknown {kind} {name!r}; known: {', '.join(sorted(table))}") from None


def initial_data(name: str) -> InitialData:
    return _lookup(INITIAL_DATA, "initial data", name)()


def potential_from(name: str, **params) -> drv.Potential:
    return _lookup(POTENTIALS, "potential", name)(**params)


def smooth_phi_spec(name: str, d: int) -> drv.SmoothPhiSpec:
    return _lookup(PHI_SPECS, "smooth increment", name)(int(d))


def driver(name: str, **params) -> drv.Driver:
    """Build a driver; ``params`` carries potential/k/delta/a or phi/d."""
    return _lookup(DRIVERS, "driver", name)(**params)


def operator(name: str, **params) -> ops.LimitOperator:
    return _lookup(OPERATORS, "operator", name)(**params)


def default_drivers(d: int = 2) -> list[drv.Driver]:
    """One representative per driver kind, with the d-dimensional KPZ increment."""
    return [
        drv.max_neighbor(),
        drv.pospart_average(),
        drv.smooth_phi(drv.kpz_phi(d)),
        drv.argmin_potential(drv.Potential.power(4)),
        drv.median_driver(),
        drv.rsos_driver(),
    ]
