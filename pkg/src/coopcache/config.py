"""System parameters and the flat INI-style configuration format."""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Sequence

__all__ = [
    "ConfigError",
    "SystemConfig",
    "BaselineConfig",
    "SweepGrid",
    "SimSettings",
    "CacheOptSettings",
    "ParsedConfig",
    "reference_config",
    "parse_config",
    "load_default_config_text",
]


class ConfigError(ValueError):
    """Malformed configuration; ``key`` names the offending ``[section].key``."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of the radio network and its playback buffers, with prices.

    Units: ``bw`` Hz, ``tau`` s, ``alpha`` 1/bit, buffer thresholds and file
    sizes in bits, ``mu0`` bit/s.  ``beta``/``gamma`` hold one price per
    user (length ``2 * m``).  ``rho`` is only used to draw request
    profiles; the controllers never read it.
    """

    bw: float = 1e6
    tau: float = 5e-3
    alpha: float = 7.5e-5
    w_low: float = 2e4
    w_high: float = 2.5e5
    mu0: float = 2e6
    m: int = 2
    n_files: int = 6
    file_sizes: tuple[float, ...] = (4.8e9,) * 6
    beta: tuple[float, ...] = (15.0,) * 4
    gamma: tuple[float, ...] = (15.0,) * 4
    eta: float = 1e-9
    segment_bits: float = 1e6
    urp_hold_slots: int = 10_000
    rho: tuple[float, ...] = (0.6, 0.3, 0.08, 0.01, 0.005, 0.005)

    def __post_init__(self):
        for name in ("bw", "tau", "alpha", "w_low", "w_high", "mu0", "segment_bits"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.m < 1 or self.n_files < 1 or self.urp_hold_slots < 1:
            raise ValueError("m, n_files and urp_hold_slots must be >= 1")
        if self.w_high <= self.w_low:
            raise ValueError("w_high must exceed w_low")
        if len(self.file_sizes) != self.n_files or min(self.file_sizes) <= 0:
            raise ValueError("file_sizes must hold n_files positive sizes")
        if len(self.beta) != self.n_users or len(self.gamma) != self.n_users:
            raise ValueError("beta and gamma need one price per user (2*m)")
        if min(self.beta) <= 0 or min(self.gamma) <= 0:
            raise ValueError("beta and gamma must be positive")
        if len(self.rho) != self.n_files:
            raise ValueError("rho needs one popularity per file")

    @property
    def n_users(self) -> int:
        return 2 * self.m

    def replace(self, **changes: Any) -> "SystemConfig":
        """Copy with changes; scalar ``beta``/``gamma`` are broadcast to all users."""
        for name in ("beta", "gamma"):
            if name in changes and not isinstance(changes[name], (tuple, list)):
                m = changes.get("m", self.m)
                changes[name] = (float(changes[name]),) * (2 * m)
        if "file_sizes" in changes and not isinstance(changes["file_sizes"], (tuple, list)):
            n = changes.get("n_files", self.n_files)
            changes["file_sizes"] = (float(changes["file_sizes"]),) * n
        for name in ("beta", "gamma", "file_sizes", "rho"):
            if name in changes:
                changes[name] = tuple(float(v) for v in changes[name])
        return dataclasses.replace(self, **changes)


def reference_config(**changes: Any) -> SystemConfig:
    """The simulation setup of the reference system (M=2, L=6, 600 MB files)."""
    return SystemConfig().replace(**changes) if changes else SystemConfig()


@dataclass(frozen=True)
class BaselineConfig:
    kappa: float = 1e6
    relay_gain_db: float = 20.0
    baseline_id: int = 1

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.baseline_id not in (1, 2, 3):
            raise ValueError("baseline_id must be 1, 2 or 3")


@dataclass(frozen=True)
class SweepGrid:
    """Knob values for one policy; each point is run once per seed.

    For ``proposed`` a point is a ``(beta, eta)`` pair (``beta == gamma``
    for every user); for baselines it is a single ``kappa``.
    """

    policy: str
    points: tuple[tuple[float, ...], ...]
    seeds: tuple[int, ...] = (1, 2, 3)
    n_slots: int = 1_000_000
    burn_in_frac: float = 0.1

    def __post_init__(self):
        if self.policy not in ("proposed", "baseline1", "baseline2", "baseline3"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if not self.points:
            raise ValueError("sweep grid is empty")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ValueError("seeds must be distinct and nonempty")
        width = 2 if self.policy == "proposed" else 1
        if any(len(p) != width for p in self.points):
            raise ValueError(f"{self.policy} points need {width} value(s) each")


@dataclass(frozen=True)
class SimSettings:
    policy: str = "proposed"
    n_slots: int = 200_000
    seed: int = 1
    burn_in_frac: float = 0.1
    q: tuple[float, ...] | None = None


@dataclass(frozen=True)
class CacheOptSettings:
    n_urp: int = 2000
    sigma0: float | None = None
    q_init: float = 0.5
    window: int = 100
    seed: int = 1


@dataclass
class ParsedConfig:
    system: SystemConfig
    baseline: BaselineConfig
    sweeps: list[SweepGrid] = field(default_factory=list)
    sim: SimSettings = field(default_factory=SimSettings)
    cache: CacheOptSettings = field(default_factory=CacheOptSettings)


# (section, key) -> (type, required)
_FLOAT, _INT, _FLOATS, _INTS, _STR = "float", "int", "floats", "ints", "str"
_SCHEMA: dict[tuple[str, str], tuple[str, bool]] = {
    ("system", "bw"): (_FLOAT, True),
    ("system", "tau"): (_FLOAT, True),
    ("system", "alpha"): (_FLOAT, True),
    ("system", "w_low"): (_FLOAT, True),
    ("system", "w_high"): (_FLOAT, True),
    ("system", "mu0"): (_FLOAT, True),
    ("system", "m"): (_INT, True),
    ("system", "n_files"): (_INT, False),
    ("system", "file_size"): (_FLOATS, False),
    ("system", "segment_bits"): (_FLOAT, False),
    ("system", "urp_hold_slots"): (_INT, False),
    ("prices", "beta"): (_FLOATS, False),
    ("prices", "gamma"): (_FLOATS, False),
    ("prices", "eta"): (_FLOAT, False),
    ("prices", "kappa"): (_FLOAT, False),
    ("prices", "relay_gain_db"): (_FLOAT, False),
    ("cache", "rho"): (_FLOATS, False),
    ("cache", "n_urp"): (_INT, False),
    ("cache", "sigma0"): (_FLOAT, False),
    ("cache", "q_init"): (_FLOAT, False),
    ("cache", "window"): (_INT, False),
    ("cache", "seed"): (_INT, False),
    ("sweep", "policies"): (_STR, False),
    ("sweep", "betas"): (_FLOATS, False),
    ("sweep", "etas"): (_FLOATS, False),
    ("sweep", "kappas"): (_FLOATS, False),
    ("sweep", "kappas_baseline1"): (_FLOATS, False),
    ("sweep", "kappas_baseline2"): (_FLOATS, False),
    ("sweep", "kappas_baseline3"): (_FLOATS, False),
    ("sweep", "seeds"): (_INTS, False),
    ("sweep", "n_slots"): (_INT, False),
    ("sweep", "burn_in_frac"): (_FLOAT, False),
    ("sim", "policy"): (_STR, False),
    ("sim", "n_slots"): (_INT, False),
    ("sim", "seed"): (_INT, False),
    ("sim", "burn_in_frac"): (_FLOAT, False),
    ("sim", "q"): (_FLOATS, False),
}

_SECTION_OF = {key: section for section, key in _SCHEMA}


def _convert(raw: str, kind: str, key: str) -> Any:
    try:
        if kind == _FLOAT:
            return float(raw)
        if kind == _INT:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if kind == _FLOATS:
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if kind == _INTS:
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError:
        expected = {
            _FLOAT: "a number",
            _INT: "an integer",
            _FLOATS: "comma-separated numbers",
            _INTS: "comma-separated integers",
        }[kind]
        raise ConfigError(key, f"expected {expected}, got {raw!r}") from None


def load_default_config_text() -> str:
    return resources.files("coopcache").joinpath("default.ini").read_text()


def parse_config(text: str, overrides: Sequence[str] = ()) -> ParsedConfig:
    """Parse the INI document plus ``key=value`` overrides.

    Overrides may name ``section.key`` or a bare key when the key is unique
    across sections (``beta=20``).  Assumption checks are not performed
    here; see :func:`coopcache.queue.validate_assumptions`.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<document>", str(exc).splitlines()[0]) from None

    values: dict[tuple[str, str], Any] = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if (section, key) not in _SCHEMA:
                raise ConfigError(f"[{section}].{key}", "unknown key")
            kind, _ = _SCHEMA[(section, key)]
            values[(section, key)] = _convert(raw, kind, f"[{section}].{key}")

    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        name, raw = (s.strip() for s in item.split("=", 1))
        if "." in name:
            section, key = name.split(".", 1)
        else:
            section, key = _SECTION_OF.get(name, ""), name
        if (section, key) not in _SCHEMA:
            raise ConfigError(name, "unknown override key")
        kind, _ = _SCHEMA[(section, key)]
        values[(section, key)] = _convert(raw, kind, f"[{section}].{key}")

    for (section, key), (_, required) in _SCHEMA.items():
        if required and (section, key) not in values:
            raise ConfigError(f"[{section}].{key}", "required key is missing")

    def get(section: str, key: str, default: Any = None) -> Any:
        return values.get((section, key), default)

    m = get("system", "m")
    n_users = 2 * m
    n_files = get("system", "n_files", 6)

    def per_user(key: str) -> tuple[float, ...]:
        v = get("prices", key, (15.0,))
        if len(v) == 1:
            return v * n_users
        if len(v) != n_users:
            raise ConfigError(f"[prices].{key}", f"expected 1 or {n_users} values")
        return v

    sizes = get("system", "file_size", (4.8e9,))
    if len(sizes) == 1:
        sizes = sizes * n_files
    elif len(sizes) != n_files:
        raise ConfigError("[system].file_size", f"expected 1 or {n_files} values")
    rho = get("cache", "rho", (0.6, 0.3, 0.08, 0.01, 0.005, 0.005))
    if len(rho) != n_files or min(rho) < 0 or abs(sum(rho) - 1.0) > 1e-9:
        raise ConfigError("[cache].rho", f"expected {n_files} probabilities summing to 1")

    try:
        system = SystemConfig(
            bw=get("system", "bw"),
            tau=get("system", "tau"),
            alpha=get("system", "alpha"),
            w_low=get("system", "w_low"),
            w_high=get("system", "w_high"),
            mu0=get("system", "mu0"),
            m=m,
            n_files=n_files,
            file_sizes=sizes,
            beta=per_user("beta"),
            gamma=per_user("gamma"),
            eta=get("prices", "eta", 1e-9),
            segment_bits=get("system", "segment_bits", 1e6),
            urp_hold_slots=get("system", "urp_hold_slots", 10_000),
            rho=rho,
        )
        baseline = BaselineConfig(
            kappa=get("prices", "kappa", 1e6),
            relay_gain_db=get("prices", "relay_gain_db", 20.0),
        )
    except ValueError as exc:
        raise ConfigError("[system]", str(exc)) from None

    seeds = get("sweep", "seeds", (1, 2, 3))
    n_slots = get("sweep", "n_slots", 1_000_000)
    burn = get("sweep", "burn_in_frac", 0.1)
    sweeps: list[SweepGrid] = []
    policies = get("sweep", "policies", "proposed,baseline1,baseline2,baseline3")
    try:
        for policy in (p.strip() for p in policies.split(",") if p.strip()):
            if policy == "proposed":
                pts = tuple(
                    (b, e)
                    for e in get("sweep", "etas", (system.eta,))
                    for b in get("sweep", "betas", (15.0, 30.0, 60.0))
                )
            else:
                kappas = get("sweep", f"kappas_{policy}", get("sweep", "kappas", (1e6,)))
                pts = tuple((k,) for k in kappas)
            sweeps.append(SweepGrid(policy, pts, seeds, n_slots, burn))
    except ValueError as exc:
        raise ConfigError("[sweep]", str(exc)) from None

    q = get("sim", "q")
    if q is not None and (len(q) != n_files or min(q) < 0 or max(q) > 1):
        raise ConfigError("[sim].q", f"expected {n_files} values in [0, 1]")
    sim = SimSettings(
        policy=get("sim", "policy", "proposed"),
        n_slots=get("sim", "n_slots", 200_000),
        seed=get("sim", "seed", 1),
        burn_in_frac=get("sim", "burn_in_frac", 0.1),
        q=q,
    )
    cache = CacheOptSettings(
        n_urp=get("cache", "n_urp", 2000),
        sigma0=get("cache", "sigma0"),
        q_init=get("cache", "q_init", 0.5),
        window=get("cache", "window", 100),
        seed=get("cache", "seed", 1),
    )
    return ParsedConfig(system, baseline, sweeps, sim, cache)
