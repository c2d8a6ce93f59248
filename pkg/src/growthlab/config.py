"""
INI-style experiment files.

Two layouts are accepted.  A convergence run::

    [experiment]
    id = max_tent_1d
    d = 1
    window = -2 2          # one "lo hi" pair for every axis, or pairs split by ';'
    T = 1
    epsilons = 1/8 1/16 1/32
    threshold = 0.05

    [driver]
    name = max

    [initial]
    name = tent

    [oracle]
    kind = hopf_lax

    [output]
    csv = max_tent_1d.csv
    json = max_tent_1d.json

A consistency sweep replaces [experiment]/[initial]/[oracle] by
[consistency] and names its drivers in ``drivers``, each described by a
[driver.<label>] section.  Unknown sections and keys are errors.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from growthlab import registry
from growthlab.drivers import Driver
from growthlab.harness import MAX_SITE_UPDATES, ExperimentConfig


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


_DRIVER_KEYS = {"name", "potential", "k", "delta", "a", "phi", "d"}
_RUN_SCHEMA = {
    "experiment": {
        "id", "d", "window", "T", "epsilons", "times", "sample_points", "sample_spacing",
        "threshold", "max_site_updates", "workers",
    },
    "driver": _DRIVER_KEYS,
    "initial": {"name"},
    "oracle": {"kind", "resolution", "diffusivity", "fd_ratio", "c_cfl"},
    "output": {"csv", "json"},
}
_CONSISTENCY_KEYS = {
    "id", "d", "epsilons", "drivers", "functions", "singular", "tol", "envelope_tol", "workers",
}


def parse_number(text: str, key: str) -> float:
    """Float or exact fraction such as ``1/128``."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"key {key!r}: cannot read {text!r} as a number") from None


def parse_list(text: str, key: str) -> list[float]:
    items = text.replace(",", " ").split()
    if not items:
        raise ConfigError(f"key {key!r}: empty list")
    return [parse_number(s, key) for s in items]


def parse_window(text: str, d: int) -> tuple[tuple[float, float], ...]:
    parts = [p for p in text.split(";") if p.strip()]
    pairs = [parse_list(p, "window") for p in parts]
    if any(len(p) != 2 for p in pairs):
        raise ConfigError("key 'window': each axis needs exactly 'lo hi'")
    if len(pairs) == 1:
        pairs = pairs * d
    if len(pairs) != d:
        raise ConfigError(f"key 'window': {len(pairs)} axes given for d = {d}")
    return tuple((lo, hi) for lo, hi in pairs)


def _int(text: str, key: str) -> int:
    v = parse_number(text, key)
    if v != int(v):
        raise ConfigError(f"key {key!r}: expected an integer, got {text!r}")
    return int(v)


def _read(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";;"))
    cp.optionxform = str  # keys are case sensitive: T is not t
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    return cp


def _check_keys(cp: configparser.ConfigParser, section: str, allowed: set[str]) -> None:
    for key in cp[section]:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")


def _require(cp, section: str, key: str) -> str:
    if not cp.has_section(section):
        raise ConfigError(f"missing section [{section}]")
    if key not in cp[section]:
        raise ConfigError(f"missing key {key!r} in section [{section}]")
    return cp[section][key]


def build_driver(section: configparser.SectionProxy, d: int) -> Driver:
    params = dict(section)
    name = params.pop("name", None)
    if name is None:
        raise ConfigError(f"missing key 'name' in section [{section.name}]")
    kw: dict = {}
    for key, val in params.items():
        if key in ("potential", "phi"):
            kw[key] = val.strip()
        elif key in ("k", "d"):
            kw[key] = _int(val, key)
        else:
            kw[key] = parse_number(val, key)
    if name == "smooth_phi":
        kw.setdefault("d", d)
    try:
        return registry.driver(name.strip(), **kw)
    except KeyError as exc:
        raise ConfigError(f"section [{section.name}]: {exc.args[0]}") from None
    except ValueError as exc:
        raise ConfigError(f"section [{section.name}]: {exc}") from None


def load_experiment(text: str, base: Path | None = None) -> ExperimentConfig:
    """Parse a convergence-run config; ``text`` is echoed verbatim into reports."""
    cp = _read(text)
    for section in cp.sections():
        if section not in _RUN_SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        _check_keys(cp, section, _RUN_SCHEMA[section])
    d = _int(_require(cp, "experiment", "d"), "d")
    ex = cp["experiment"]
    out = cp["output"] if cp.has_section("output") else {}
    orc = cp["oracle"] if cp.has_section("oracle") else {}
    base = base or Path(".")
    try:
        u0 = registry.initial_data(_require(cp, "initial", "name").strip())
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    if not cp.has_section("driver"):
        raise ConfigError("missing section [driver]")
    kw = {
        "id": _require(cp, "experiment", "id").strip(),
        "driver": build_driver(cp["driver"], d),
        "u0": u0,
        "d": d,
        "window": parse_window(_require(cp, "experiment", "window"), d),
        "T": parse_number(_require(cp, "experiment", "T"), "T"),
        "epsilons": tuple(parse_list(_require(cp, "experiment", "epsilons"), "epsilons")),
        "oracle": _require(cp, "oracle", "kind").strip(),
        "config_text": text,
        "max_site_updates": parse_number(ex.get("max_site_updates", str(MAX_SITE_UPDATES)), "max_site_updates"),
    }
    if "times" in ex:
        kw["times"] = tuple(parse_list(ex["times"], "times"))
    for key in ("sample_points", "workers"):
        if key in ex:
            kw[key] = _int(ex[key], key)
    for key in ("sample_spacing", "threshold"):
        if key in ex:
            kw[key] = parse_number(ex[key], key)
    for key in ("resolution", "diffusivity", "fd_ratio", "c_cfl"):
        if key in orc:
            kw[key] = parse_number(orc[key], key)
    if "csv" in out:
        kw["csv_path"] = str(base / out["csv"].strip())
    if "json" in out:
        kw["json_path"] = str(base / out["json"].strip())
    try:
        return ExperimentConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class ConsistencyConfig:
    id: str
    d: int
    epsilons: list[float]
    drivers: list[tuple[str, Driver]]
    functions: int = 20
    singular: int = 5
    tol: float = 5e-3
    envelope_tol: float = 1e-6
    workers: int = 4
    csv_path: str | None = None
    json_path: str | None = None
    config_text: str | None = field(default=None, repr=False)


def load_consistency(text: str, base: Path | None = None) -> ConsistencyConfig:
    cp = _read(text)
    if not cp.has_section("consistency"):
        raise ConfigError("missing section [consistency]")
    labels = _require(cp, "consistency", "drivers").split()
    for section in cp.sections():
        if section == "consistency":
            _check_keys(cp, section, _CONSISTENCY_KEYS)
        elif section == "output":
            _check_keys(cp, section, {"csv", "json"})
        elif section.startswith("driver.") and section[7:] in labels:
            _check_keys(cp, section, _DRIVER_KEYS)
        else:
            raise ConfigError(f"unknown section [{section}]")
    sec = cp["consistency"]
    d = _int(_require(cp, "consistency", "d"), "d")
    drivers = []
    for label in labels:
        if not cp.has_section(f"driver.{label}"):
            raise ConfigError(f"missing section [driver.{label}]")
        drivers.append((label, build_driver(cp[f"driver.{label}"], d)))
    base = base or Path(".")
    out = cp["output"] if cp.has_section("output") else {}
    cfg = ConsistencyConfig(
        id=_require(cp, "consistency", "id").strip(),
        d=d,
        epsilons=parse_list(_require(cp, "consistency", "epsilons"), "epsilons"),
        drivers=drivers,
        config_text=text,
    )
    for key in ("functions", "singular", "workers"):
        if key in sec:
            setattr(cfg, key, _int(sec[key], key))
    for key in ("tol", "envelope_tol"):
        if key in sec:
            setattr(cfg, key, parse_number(sec[key], key))
    if "csv" in out:
        cfg.csv_path = str(base / out["csv"].strip())
    if "json" in out:
        cfg.json_path = str(base / out["json"].strip())
    if any(b >= a for a, b in zip(cfg.epsilons, cfg.epsilons[1:])):
        raise ConfigError("key 'epsilons': must be strictly decreasing")
    return cfg


def config_kind(text: str) -> str:
    """'consistency' or 'experiment', by the sections present."""
    cp = _read(text)
    return "consistency" if cp.has_section("consistency") else "experiment"
