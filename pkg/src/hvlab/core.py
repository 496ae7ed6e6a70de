"""Grids, physical conventions, run configuration and the shared error types."""

from __future__ import annotations

import configparser
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Any, Mapping

import numpy as np


class HVLabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HVLabError):
    pass


class NumericError(HVLabError):
    pass


class GridIncompatibilityError(HVLabError):
    pass


class StateConstructionError(HVLabError):
    pass


class CapabilityError(HVLabError):
    pass


class AccuracyWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# Conventions and grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Convention:
    """Kinetic prefactor of ``-hbar^2 Laplacian`` and sign of the Vlasov force term.

    ``force_sign`` is the sign in front of ``grad(V*rho) . grad_v W`` on the
    left-hand side of the kinetic equation, so characteristics obey
    ``dv/dt = force_sign * grad(V*rho)``.  The default pair (1/2, -1) is
    Newtonian and makes the quantum and classical flows agree as hbar -> 0.
    """

    kinetic_factor: float = 0.5
    force_sign: int = -1
    dim: int = 1

    def __post_init__(self):
        if self.kinetic_factor not in (0.5, 1.0):
            raise ConfigurationError(f"kinetic_factor must be 1/2 or 1, got {self.kinetic_factor}")
        if self.force_sign not in (-1, 1):
            raise ConfigurationError(f"force_sign must be +1 or -1, got {self.force_sign}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigurationError(f"dimension must be a positive integer, got {self.dim}")

    @classmethod
    def unit_kinetic(cls, dim: int = 1) -> "Convention":
        return cls(kinetic_factor=1.0, force_sign=1, dim=dim)


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic cubic grid with nodes ``-L/2 + j*dx`` along every axis."""

    length: float
    points: int
    dim: int = 1

    def __post_init__(self):
        if self.length <= 0:
            raise ConfigurationError("grid length must be positive")
        if self.points < 2 or self.points % 2:
            raise ConfigurationError(f"grid points must be even and >= 2, got {self.points}")
        if self.dim < 1:
            raise ConfigurationError("grid dimension must be >= 1")

    @property
    def dx(self) -> float:
        return self.length / self.points

    @property
    def nodes(self) -> np.ndarray:
        return -0.5 * self.length + self.dx * np.arange(self.points)

    @property
    def size(self) -> int:
        return self.points ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dim

    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.points, d=self.dx)

    def coordinates(self) -> list[np.ndarray]:
        """Open-mesh coordinate arrays, one per axis, broadcastable to ``shape``."""
        out = []
        for ax in range(self.dim):
            sh = [1] * self.dim
            sh[ax] = self.points
            out.append(self.nodes.reshape(sh))
        return out

    def radius(self) -> np.ndarray:
        """Distance of every node to the origin (minimal image)."""
        r2 = sum(c ** 2 for c in self.coordinates())
        return np.sqrt(np.broadcast_to(r2, self.shape))

    def minimal_image(self, dx: np.ndarray) -> np.ndarray:
        return dx - self.length * np.round(dx / self.length)


@dataclass(frozen=True)
class PhaseGrid:
    """Phase-space grid: a spatial grid times a periodic velocity grid on ``[-vmax, vmax)``."""

    spatial: SpatialGrid
    vmax: float
    vpoints: int

    def __post_init__(self):
        if self.vmax <= 0:
            raise ConfigurationError("vmax must be positive")
        if self.vpoints < 2 or self.vpoints % 2:
            raise ConfigurationError(f"velocity points must be even and >= 2, got {self.vpoints}")

    @property
    def dim(self) -> int:
        return self.spatial.dim

    @property
    def dv(self) -> float:
        return 2 * self.vmax / self.vpoints

    @property
    def velocities(self) -> np.ndarray:
        return -self.vmax + self.dv * np.arange(self.vpoints)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.spatial.shape + (self.vpoints,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spatial.cell_volume * self.dv ** self.dim

    def velocity_wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.vpoints, d=self.dv)

    def axes_coordinates(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays for the 2d phase-space axes (x's then v's)."""
        d = self.dim
        out = []
        for ax in range(2 * d):
            sh = [1] * (2 * d)
            if ax < d:
                sh[ax] = self.spatial.points
                out.append(self.spatial.nodes.reshape(sh))
            else:
                sh[ax] = self.vpoints
                out.append(self.velocities.reshape(sh))
        return out

    def matches(self, other: "PhaseGrid", rtol: float = 1e-12) -> bool:
        return (
            self.spatial == other.spatial
            and self.vpoints == other.vpoints
            and math.isclose(self.vmax, other.vmax, rel_tol=rtol)
        )


def wigner_phase_grid(grid: SpatialGrid, hbar: float) -> PhaseGrid:
    """Phase grid induced by the discrete Wigner transform on ``grid`` at ``hbar``.

    Velocity spacing is ``2 pi hbar / L`` with as many nodes as the spatial
    grid, so the extent is ``pi hbar / dx``.
    """
    return PhaseGrid(grid, math.pi * hbar / grid.dx, grid.points)


def semiclassical_scaling(n: int, d: int) -> float:
    """Return hbar = N^(-1/d)."""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"particle number must be a positive integer, got {n!r}")
    if int(d) != d or d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d!r}")
    return float(n) ** (-1.0 / d)


def particle_number(hbar: float, d: int) -> int:
    return int(round(hbar ** (-d)))


def auto_points(length: float, vmax: float, hbar: float) -> int:
    """Smallest power of two whose Wigner velocity extent covers ``vmax``."""
    need = length * vmax / (math.pi * hbar)
    return max(16, 1 << max(0, math.ceil(math.log2(need))))


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    convention: Convention
    hbar: float
    T: float
    dt: float
    length: float
    points: int
    vmax: float
    vpoints: int
    potential: str = "soft_coulomb"
    potential_params: tuple = ()
    initial: str = "fermi_dirac"
    initial_params: tuple = ()
    cadence: int = 1
    with_exchange: bool = False

    @property
    def n_particles(self) -> int:
        return particle_number(self.hbar, self.convention.dim)


@dataclass(frozen=True)
class RunContext:
    """Validated, immutable bundle of everything a run needs."""

    config: RunConfig
    grid: SpatialGrid
    phase_grid: PhaseGrid
    wigner_grid: PhaseGrid
    potential: Any
    hbar: float
    n_particles: int
    n_steps: int
    warnings: tuple = ()

    @property
    def convention(self) -> Convention:
        return self.config.convention

    def metadata(self) -> dict:
        cfg = asdict(self.config)
        return {
            "config": cfg,
            "hbar": self.hbar,
            "n_particles": self.n_particles,
            "n_steps": self.n_steps,
            "grid": {"length": self.grid.length, "points": self.grid.points, "dim": self.grid.dim},
            "wigner_vmax": self.wigner_grid.vmax,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.metadata(), sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def build_run(config: RunConfig) -> RunContext:
    from .potentials import make_potential

    if config.hbar <= 0:
        raise ConfigurationError("hbar must be positive")
    if config.T <= 0 or config.dt <= 0:
        raise ConfigurationError("T and dt must be positive")
    if config.dt > config.T:
        raise ConfigurationError(f"dt={config.dt} exceeds the time horizon T={config.T}")
    if config.cadence < 1:
        raise ConfigurationError("output cadence must be >= 1")
    d = config.convention.dim
    grid = SpatialGrid(config.length, config.points, d)
    phase = PhaseGrid(grid, config.vmax, config.vpoints)
    wgrid = wigner_phase_grid(grid, config.hbar)
    notes = []
    if wgrid.vmax < config.vmax * (1 - 1e-12):
        notes.append(
            f"wigner velocity range pi*hbar/dx={wgrid.vmax:.6g} is below vmax={config.vmax:.6g}"
        )
    potential = make_potential(config.potential, **dict(config.potential_params))
    n_steps = int(round(config.T / config.dt))
    if not math.isclose(n_steps * config.dt, config.T, rel_tol=1e-9):
        raise ConfigurationError(f"T={config.T} is not an integer multiple of dt={config.dt}")
    return RunContext(
        config=config,
        grid=grid,
        phase_grid=phase,
        wigner_grid=wgrid,
        potential=potential,
        hbar=float(config.hbar),
        n_particles=config.n_particles,
        n_steps=n_steps,
        warnings=tuple(notes),
    )


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

CONFIG_SCHEMA: dict[str, dict[str, type]] = {
    "run": {
        "d": int,
        "hbar_list": list,
        "T": float,
        "dt": float,
        "kinetic_factor": float,
        "force_sign": int,
        "with_exchange": bool,
        "workers": int,
    },
    "grid": {"L": float, "nx": str, "vmax": float, "nv": int},
    "potential": {"name": str, "a": float, "mu": float, "eps": float, "strength": float, "width": float},
    "initial": {
        "profile": str,
        "beta": float,
        "mu": float,
        "sigma_x": float,
        "sigma_v": float,
        "x0": float,
        "v0": float,
    },
    "diagnostics": {
        "delta": float,
        "radii": list,
        "threshold": float,
        "duhamel_tol": float,
        "assumption_times": int,
        "dt_list": list,
    },
    "output": {"directory": str, "cadence": int},
}

ENV_PREFIX = "HVLAB_"


def _parse_number(text: str) -> float:
    text = text.strip()
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise ConfigurationError(f"cannot parse number {text!r}") from None


def _coerce(section: str, key: str, raw: str):
    kind = CONFIG_SCHEMA[section][key]
    try:
        if kind is list:
            return [_parse_number(p) for p in raw.replace(";", ",").split(",") if p.strip()]
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ConfigurationError(f"[{section}] {key}: not a boolean: {raw!r}")
        if kind is int:
            val = _parse_number(raw)
            if val != int(val):
                raise ConfigurationError(f"[{section}] {key}: expected integer, got {raw!r}")
            return int(val)
        if kind is float:
            return _parse_number(raw)
        return raw.strip()
    except ConfigurationError as exc:
        raise ConfigurationError(f"[{section}] {key}: {exc}") from None


def parse_config_text(text: str) -> dict[str, dict]:
    """Parse ``key = value`` sections; unknown sections or keys are rejected."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    out: dict[str, dict] = {}
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        out[section] = {}
        for key, raw in parser.items(section):
            if key not in CONFIG_SCHEMA[section]:
                raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
            out[section][key] = _coerce(section, key, raw)
    return out


def load_config(path: str | os.PathLike | None, environ: Mapping[str, str] | None = None) -> dict:
    text = ""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config_text(text)
    apply_env_overrides(cfg, os.environ if environ is None else environ)
    return cfg


def apply_env_overrides(cfg: dict, environ: Mapping[str, str]) -> dict:
    """Apply ``HVLAB_<SECTION>_<KEY>`` overrides (section and key matched case-insensitively)."""
    lookup = {}
    for section, keys in CONFIG_SCHEMA.items():
        for key in keys:
            lookup[f"{ENV_PREFIX}{section}_{key}".upper()] = (section, key)
    for name in sorted(environ):
        if not name.upper().startswith(ENV_PREFIX):
            continue
        if name.upper() not in lookup:
            raise ConfigurationError(f"unknown override variable {name}")
        section, key = lookup[name.upper()]
        cfg.setdefault(section, {})[key] = _coerce(section, key, environ[name])
    return cfg


def merge_config(base: Mapping, overlay: Mapping) -> dict:
    out = {s: dict(v) for s, v in base.items()}
    for section, values in overlay.items():
        out.setdefault(section, {}).update(values)
    return out


def warn_accuracy(message: str) -> None:
    warnings.warn(message, AccuracyWarning, stacklevel=3)


__all__ = [
    "AccuracyWarning",
    "CapabilityError",
    "ConfigurationError",
    "Convention",
    "GridIncompatibilityError",
    "HVLabError",
    "NumericError",
    "PhaseGrid",
    "RunConfig",
    "RunContext",
    "SpatialGrid",
    "StateConstructionError",
    "auto_points",
    "build_run",
    "load_config",
    "parse_config_text",
    "particle_number",
    "semiclassical_scaling",
    "wigner_phase_grid",
]
