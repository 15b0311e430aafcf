"""Run configuration: TOML files resolved into a :class:`RunConfig`.

Schema (every key optional except where a scenario needs it)::

    scenario = "fig1d"         # see foerster.scenarios.SCENARIOS
    seed = 0                   # mandatory for certify
    threads = 1
    out = "runs/fig1d"
    tau_r_us = 150.0
    omega_mhz = 10.0           # Omega_max / 2 pi
    plots = true

    [grid]
    V_MHz = { start = 0.5, stop = 200.0, num = 25, spacing = "log" }   # or a list
    o1 = { start = 0.5, stop = 0.95, num = 19 }
    V_over_Omega = [0.001, 0.01, 0.05, 0.1]      # fig2 ratios
    fig2_V_MHz = [1.0, 10.0]
    V_eff_MHz = 50.0                              # smfig2 operating point
    V_ref_MHz = 100.0                             # ARP optimisation point

    [protocols]
    names = ["pi2pi", "arp", "to"]
    overlap_fraction = 1e-3
    arp_pulses = 2

    [optimizer]
    n_random = 32
    n_gaussian = 16
    sigma_rel = 0.1
    max_evals = 0              # 0 means no cap
    include_decay = false
    warm_start = true
    arp_n_random = 8
    arp_n_gaussian = 4

    [certify]
    n_samples = 100000
    s_values = [0.2, 0.5, 0.8]
    oracle_starts = 8

    [propagation]
    method = "adaptive"
    rtol = 1e-10
    atol = 1e-12
    max_phase_step = 0.05
"""

from __future__ import annotations

import dataclasses
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .propagate import METHODS, PropagationOptions

ENV_THREADS = "FOERSTER_THREADS"
PROTOCOLS = ("pi2pi", "arp", "to")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    n_random: int = 32
    n_gaussian: int = 16
    sigma_rel: float = 0.1
    max_evals: int = 0
    include_decay: bool = False
    warm_start: bool = True
    arp_n_random: int = 8
    arp_n_gaussian: int = 4


@dataclass(frozen=True)
class CertifyConfig:
    n_samples: int = 100_000
    s_values: tuple[float, ...] = (0.2, 0.5, 0.8)
    oracle_starts: int = 8


@dataclass(frozen=True)
class PropagationConfig:
    method: str = "adaptive"
    rtol: float = 1e-10
    atol: float = 1e-12
    max_phase_step: float = 0.05

    def options(self) -> PropagationOptions:
        return PropagationOptions(rtol=self.rtol, atol=self.atol, method=self.method, max_phase_step=self.max_phase_step)


def default_v_grid() -> tuple[float, ...]:
    return tuple(float(v) for v in np.logspace(math.log10(0.5), math.log10(200.0), 25))


def default_o1_grid() -> tuple[float, ...]:
    return tuple(float(v) for v in np.linspace(0.5, 0.95, 19))


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    seed: int | None = None
    threads: int = 1
    out: str = "runs"
    tau_r_us: float = 150.0
    omega_mhz: float = 10.0
    plots: bool = True
    V_MHz: tuple[float, ...] = field(default_factory=default_v_grid)
    o1: tuple[float, ...] = field(default_factory=default_o1_grid)
    V_over_Omega: tuple[float, ...] = (0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
    fig2_V_MHz: tuple[float, ...] = (1.0, 10.0)
    V_eff_MHz: float = 50.0
    V_ref_MHz: float = 100.0
    protocols: tuple[str, ...] = PROTOCOLS
    overlap_fraction: float = 1e-3
    arp_pulses: int = 2
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    certify: CertifyConfig = field(default_factory=CertifyConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        cfg = dataclasses.replace(self, **changes)
        validate(cfg)
        return cfg


_TOP = {"scenario", "seed", "threads", "out", "tau_r_us", "omega_mhz", "plots"}
_SECTIONS = {
    "grid": {"V_MHz", "o1", "V_over_Omega", "fig2_V_MHz", "V_eff_MHz", "V_ref_MHz"},
    "protocols": {"names", "overlap_fraction", "arp_pulses"},
    "optimizer": {f.name for f in dataclasses.fields(OptimizerConfig)},
    "certify": {f.name for f in dataclasses.fields(CertifyConfig)},
    "propagation": {f.name for f in dataclasses.fields(PropagationConfig)},
}


class _Locator:
    """Maps (section, key) to a line number in the source text for diagnostics."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines: dict[tuple[str, str], int] = {}
        section = ""
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            m = re.match(r"^\[([^\]]+)\]$", line)
            if m:
                section = m.group(1).strip()
                self.lines.setdefault((section, ""), n)
                continue
            m = re.match(r"^([A-Za-z0-9_\-]+)\s*=", line)
            if m:
                self.lines.setdefault((section, m.group(1)), n)

    def error(self, section: str, key: str, message: str) -> ConfigError:
        n = self.lines.get((section, key)) or self.lines.get((section, ""))
        where = f"{self.source}:{n}" if n else self.source
        name = f"{section}.{key}" if section else key
        return ConfigError(f"{where}: {name}: {message}")


def _grid(value, loc: _Locator, section: str, key: str) -> tuple[float, ...]:
    if isinstance(value, dict):
        unknown = set(value) - {"start", "stop", "num", "spacing"}
        if unknown:
            raise loc.error(section, key, f"unknown grid keys {sorted(unknown)}")
        try:
            start, stop, num = float(value["start"]), float(value["stop"]), int(value["num"])
        except KeyError as exc:
            raise loc.error(section, key, f"grid table needs {exc.args[0]!r}") from None
        spacing = value.get("spacing", "linear")
        if num < 1:
            raise loc.error(section, key, "grid must not be empty")
        if spacing == "log":
            if start <= 0 or stop <= 0:
                raise loc.error(section, key, "log grid needs positive end points")
            pts = np.logspace(math.log10(start), math.log10(stop), num)
        elif spacing == "linear":
            pts = np.linspace(start, stop, num)
        else:
            raise loc.error(section, key, f"spacing must be 'log' or 'linear', got {spacing!r}")
        return tuple(float(p) for p in pts)
    if isinstance(value, list):
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise loc.error(section, key, "grid entries must be numbers")
        return tuple(float(v) for v in value)
    raise loc.error(section, key, f"expected a list or a {{start, stop, num}} table, got {type(value).__name__}")


def _typed(value, kind, loc, section, key):
    if kind is bool:
        if not isinstance(value, bool):
            raise loc.error(section, key, f"expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise loc.error(section, key, f"expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise loc.error(section, key, f"expected a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise loc.error(section, key, f"expected a string, got {value!r}")
        return value
    raise AssertionError(kind)


def _field_kind(cls, name):
    hint = {f.name: f.type for f in dataclasses.fields(cls)}[name]
    hint = str(hint)
    for kind in (bool, int, float, str):
        if hint.startswith(kind.__name__):
            return kind
    return None


def _sub(cls, table: dict, loc: _Locator, section: str):
    kwargs = {}
    for key, value in table.items():
        kind = _field_kind(cls, key)
        if kind is None:  # tuple-valued
            kwargs[key] = _grid(value, loc, section, key)
        else:
            kwargs[key] = _typed(value, kind, loc, section, key)
    return cls(**kwargs)


def parse_config(text: str, source: str = "<config>", overrides: dict | None = None) -> RunConfig:
    """Parse TOML text; errors carry ``source:line`` prefixes."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    loc = _Locator(text, source)
    for key, value in data.items():
        if isinstance(value, dict) and key in _SECTIONS:
            unknown = set(value) - _SECTIONS[key]
            if unknown:
                raise loc.error(key, sorted(unknown)[0], f"unknown key (allowed: {sorted(_SECTIONS[key])})")
        elif key not in _TOP:
            raise loc.error("", key, f"unknown key (allowed: {sorted(_TOP | set(_SECTIONS))})")

    kw: dict = {}
    for key, kind in (("scenario", str), ("seed", int), ("threads", int), ("out", str), ("tau_r_us", float),
                      ("omega_mhz", float), ("plots", bool)):
        if key in data:
            kw[key] = _typed(data[key], kind, loc, "", key)
    grid = data.get("grid", {})
    for key in ("V_MHz", "o1", "V_over_Omega", "fig2_V_MHz"):
        if key in grid:
            kw[key] = _grid(grid[key], loc, "grid", key)
    for key in ("V_eff_MHz", "V_ref_MHz"):
        if key in grid:
            kw[key] = _typed(grid[key], float, loc, "grid", key)
    prot = data.get("protocols", {})
    if "names" in prot:
        names = prot["names"]
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            raise loc.error("protocols", "names", "expected a list of strings")
        kw["protocols"] = tuple(names)
    if "overlap_fraction" in prot:
        kw["overlap_fraction"] = _typed(prot["overlap_fraction"], float, loc, "protocols", "overlap_fraction")
    if "arp_pulses" in prot:
        kw["arp_pulses"] = _typed(prot["arp_pulses"], int, loc, "protocols", "arp_pulses")
    for section, cls in (("optimizer", OptimizerConfig), ("certify", CertifyConfig), ("propagation", PropagationConfig)):
        if section in data:
            kw[section] = _sub(cls, data[section], loc, section)
    kw.update(overrides or {})
    if "scenario" not in kw:
        raise loc.error("", "scenario", "missing required key")
    cfg = RunConfig(**kw)
    validate(cfg, loc)
    return cfg


def load_config(path: str | os.PathLike, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text, str(path), overrides)


def _check_grid(values, name, loc, section, key, positive=False):
    if len(values) == 0:
        raise loc.error(section, key, "grid must not be empty")
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise loc.error(section, key, "grid values must be finite")
    if arr.size > 1 and not (np.all(np.diff(arr) > 0) or np.all(np.diff(arr) < 0)):
        raise loc.error(section, key, "grid must be strictly monotone")
    if positive and np.any(arr <= 0):
        raise loc.error(section, key, f"{name} values must be positive")


def validate(cfg: RunConfig, loc: _Locator | None = None) -> None:
    from .scenarios import SCENARIOS

    loc = loc or _Locator("", "<config>")
    if cfg.scenario not in SCENARIOS:
        raise loc.error("", "scenario", f"unknown scenario {cfg.scenario!r}; choose from {sorted(SCENARIOS)}")
    if cfg.threads < 1:
        raise loc.error("", "threads", "must be at least 1")
    for key in ("tau_r_us", "omega_mhz"):
        value = getattr(cfg, key)
        if not (math.isfinite(value) and value > 0):
            raise loc.error("", key, "must be positive")
    for key in ("V_MHz", "V_over_Omega", "fig2_V_MHz"):
        _check_grid(getattr(cfg, key), key, loc, "grid", key, positive=True)
    _check_grid(cfg.o1, "o1", loc, "grid", "o1")
    if any(not 0.5 <= o < 1.0 for o in cfg.o1):
        raise loc.error("grid", "o1", "overlaps must lie in [0.5, 1)")
    for key in ("V_eff_MHz", "V_ref_MHz"):
        if not getattr(cfg, key) > 0:
            raise loc.error("grid", key, "must be positive")
    bad = [p for p in cfg.protocols if p not in PROTOCOLS]
    if bad or not cfg.protocols:
        raise loc.error("protocols", "names", f"protocols must be a non-empty subset of {PROTOCOLS}, got {list(cfg.protocols)}")
    if not 0 < cfg.overlap_fraction < 1:
        raise loc.error("protocols", "overlap_fraction", "must lie in (0, 1)")
    if cfg.arp_pulses < 1:
        raise loc.error("protocols", "arp_pulses", "must be at least 1")
    opt = cfg.optimizer
    if min(opt.n_random, opt.n_gaussian, opt.max_evals, opt.arp_n_gaussian) < 0 or opt.arp_n_random < 1:
        raise loc.error("optimizer", "", "restart counts and max_evals must be non-negative")
    if opt.n_random + opt.n_gaussian + int(opt.warm_start) < 1:
        raise loc.error("optimizer", "", "at least one restart is required")
    if not opt.sigma_rel > 0:
        raise loc.error("optimizer", "sigma_rel", "must be positive")
    cert = cfg.certify
    if cert.n_samples < 1:
        raise loc.error("certify", "n_samples", "must be at least 1")
    _check_grid(cert.s_values, "s_values", loc, "certify", "s_values")
    if any(not 0 < s < 1 for s in cert.s_values):
        raise loc.error("certify", "s_values", "entropies must lie in (0, 1)")
    if cert.oracle_starts < 1:
        raise loc.error("certify", "oracle_starts", "must be at least 1")
    if cfg.propagation.method not in METHODS:
        raise loc.error("propagation", "method", f"must be one of {METHODS}")
    if cfg.scenario == "certify" and cfg.seed is None:
        raise loc.error("", "seed", "certify runs require an explicit seed")


def resolve_threads(cfg_threads: int, cli_threads: int | None = None) -> int:
    """CLI flag beats the environment, which beats the config file."""
    if cli_threads is not None:
        return max(1, cli_threads)
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{ENV_THREADS}={env!r} is not an integer") from None
    return cfg_threads
