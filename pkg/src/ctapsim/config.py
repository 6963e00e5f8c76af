"""Experiment configuration: flat key-value files with unit suffixes.

A config file line is `key = value [unit]`; `#` starts a comment.  Allowed
unit tokens are um, nm, A, T, Hz, s, us.  Every dimensioned key must carry a
unit of the right kind (a typo in either the key or the unit is an error);
counts, ratios and names are bare.  A config plus a thread count fully
determines a run: there are no stochastic elements anywhere in the pipeline.

Defaults reproduce the reference chip (see chipgeom.standard_layout); the
shipped configs/scaled.cfg overrides them with the desk-scale geometry.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import numpy as np

from . import chipgeom
from .constants import hbar, muB, species_mass
from .qgrid import SimGrid, make_grid

UNIT_SCALES = {
    "um": ("length", 1e-6),
    "nm": ("length", 1e-9),
    "A": ("current", 1.0),
    "T": ("field", 1.0),
    "Hz": ("frequency", 1.0),
    "s": ("time", 1.0),
    "us": ("time", 1e-6),
}

# key -> kind; kinds: length/current/field/frequency/time require a unit,
# int/float/str/bool are bare.
KEY_KINDS = {
    "ordering": "str",
    "species": "str",
    "g_f_m_f": "float",
    "i_left": "current",
    "i_middle": "current",
    "i_right": "current",
    "b_bias": "field",
    "b_ioffe": "field",
    "f_z": "frequency",
    "d0": "length",
    "d_min": "length",
    "straight_run": "length",
    "bump_half_width": "length",
    "xi": "length",
    "z_pad": "length",
    "segment_length": "length",
    "x_span": "length",
    "y_span": "length",
    "z_max": "length",
    "n_x": "int",
    "n_y": "int",
    "n_z": "int",
    "y_offset": "length",
    "dt": "time",
    "total_time": "time",
    "sigma_z": "length",
    "z_start": "length",
    "gs_tau": "time",
    "gs_tol": "float",
    "trace_stride": "int",
    "snapshot_count": "int",
    "progress_stride": "int",
    "edge_margin_cells": "int",
    "edge_threshold": "float",
    "edge_stride": "int",
    "threads": "int",
    "sweep_start": "current",
    "sweep_stop": "current",
    "sweep_step": "current",
    "bench_warm_steps": "int",
    "bench_timed_steps": "int",
    "tm_shape": "str",
    "tm_peak": "frequency",
    "tm_width": "time",
    "tm_center_lm": "time",
    "tm_center_mr": "time",
    "tm_total_time": "time",
    "tm_dt": "time",
}

FULL_SCALE_POINTS = 1 << 22   # grids at or above this need --full-scale


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # wire layout and fields (reference-chip defaults)
    ordering: str = "counter_intuitive"
    species: str = "li6"
    g_f_m_f: float = 0.5
    i_left: float = 0.1
    i_middle: float = 0.07
    i_right: float = 0.1
    b_bias: float = 140e-4
    b_ioffe: float = 300e-4
    f_z: float = 5.0
    d0: float = 7e-6
    d_min: float = 4.3e-6
    straight_run: float = 50e-6
    bump_half_width: float = 300e-6
    xi: float = 50e-6
    z_pad: float = 500e-6
    segment_length: float = 0.125e-6
    x_span: float = 20e-6
    y_span: float = 4e-6
    z_max: float = 1000e-6
    # grid
    n_x: int = 256
    n_y: int = 64
    n_z: int = 1024
    y_offset: float | None = None        # default: half a cell above the chip
    # evolution
    dt: float = 1e-6
    total_time: float = 0.1
    sigma_z: float | None = None         # default: longitudinal oscillator width
    z_start: float | None = None         # default: 4 sigma_z
    gs_tau: float = 1e-7
    gs_tol: float = 1e-10
    # observers
    trace_stride: int = 50
    snapshot_count: int = 50
    progress_stride: int = 1000
    edge_margin_cells: int = 2
    edge_threshold: float = 1e-6
    edge_stride: int = 50
    # execution
    threads: int | None = None
    # middle-current sweep
    sweep_start: float = 0.0672
    sweep_stop: float = 0.0761
    sweep_step: float = 0.001
    # benchmark
    bench_warm_steps: int = 100
    bench_timed_steps: int = 300
    # three-mode model (rates are cyclic in the file, angular internally)
    tm_shape: str = "gaussian"
    tm_peak: float = 50.0                # Hz
    tm_width: float | None = None        # default total/8
    tm_center_lm: float | None = None    # default (total + total/5)/2
    tm_center_mr: float | None = None
    tm_total_time: float = 1.0
    tm_dt: float | None = None           # default resolving peak at 1/50

    # ----- derived quantities -------------------------------------------

    @property
    def mass(self) -> float:
        return species_mass(self.species)

    @property
    def mu_eff(self) -> float:
        return self.g_f_m_f * muB

    @property
    def omega_z(self) -> float:
        return 2 * np.pi * self.f_z

    @property
    def sigma_z_eff(self) -> float:
        if self.sigma_z is not None:
            return self.sigma_z
        return float(np.sqrt(hbar / (self.mass * self.omega_z)))

    @property
    def z_start_eff(self) -> float:
        return self.z_start if self.z_start is not None else 4.0 * self.sigma_z_eff

    @property
    def n_steps(self) -> int:
        return int(round(self.total_time / self.dt))

    @property
    def grid_points(self) -> int:
        return self.n_x * self.n_y * self.n_z

    @property
    def is_full_scale(self) -> bool:
        return self.grid_points >= FULL_SCALE_POINTS

    def resolve_threads(self, cli_threads: int | None = None) -> int:
        if cli_threads is not None:
            return cli_threads
        env = os.environ.get("SIM_THREADS")
        if env:
            return int(env)
        if self.threads is not None:
            return self.threads
        return os.cpu_count() or 1

    def to_layout(self, i_middle: float | None = None) -> chipgeom.ChipLayout:
        return chipgeom.make_layout(
            d0=self.d0, d_min=self.d_min, z_max=self.z_max, x_span=self.x_span,
            y_span=self.y_span, straight_run=self.straight_run,
            i_left=self.i_left,
            i_middle=self.i_middle if i_middle is None else i_middle,
            i_right=self.i_right, b_bias=self.b_bias, b_ioffe=self.b_ioffe,
            omega_z=self.omega_z, ordering=self.ordering, mass=self.mass,
            mu_eff=self.mu_eff, bump_half_width=self.bump_half_width,
            xi=self.xi, z_pad=self.z_pad, segment_length=self.segment_length)

    def to_grid(self) -> SimGrid:
        dy = self.y_span / self.n_y
        y0 = self.y_offset if self.y_offset is not None else dy / 2
        return make_grid(self.n_x, self.n_y, self.n_z,
                         (self.x_span, self.y_span, self.z_max),
                         origin=(-self.x_span / 2, y0, 0.0))

    def tm_pulses(self, ordering: str | None = None):
        """PulsePair from the tm_* keys; file rates are cyclic (Hz)."""
        from . import threemode

        total = self.tm_total_time
        width = self.tm_width if self.tm_width is not None else total / 8
        c_lm = self.tm_center_lm if self.tm_center_lm is not None else total / 2 + total / 10
        c_mr = self.tm_center_mr if self.tm_center_mr is not None else total / 2 - total / 10
        if (ordering or self.ordering) == "intuitive":
            c_lm, c_mr = c_mr, c_lm
        return threemode.PulsePair(shape=self.tm_shape, peak=2 * np.pi * self.tm_peak,
                                   width=width, center_lm=c_lm, center_mr=c_mr,
                                   total_time=total)

    @property
    def tm_dt_eff(self) -> float:
        if self.tm_dt is not None:
            return self.tm_dt
        return 0.02 / (2 * np.pi * self.tm_peak)

    def sweep_values(self) -> np.ndarray:
        if self.sweep_step <= 0:
            raise ConfigError("sweep_step must be positive")
        n = int(np.floor((self.sweep_stop - self.sweep_start) / self.sweep_step + 1e-9)) + 1
        if n < 1:
            raise ConfigError("empty sweep range")
        return self.sweep_start + self.sweep_step * np.arange(n)

    def snapshot(self) -> dict:
        """Plain-value dict of every field (for the run manifest)."""
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v
        out["derived"] = {
            "mass_kg": self.mass,
            "mu_eff_J_per_T": self.mu_eff,
            "omega_z_rad_per_s": self.omega_z,
            "sigma_z_m": self.sigma_z_eff,
            "z_start_m": self.z_start_eff,
            "n_steps": self.n_steps,
        }
        return out


def _parse_value(key: str, tokens: list[str], path, lineno: int):
    kind = KEY_KINDS[key]
    where = f"{path}:{lineno}"
    if kind == "str":
        if len(tokens) != 1:
            raise ConfigError(f"{where}: key '{key}' takes a bare name")
        return tokens[0]
    if kind == "int":
        if len(tokens) != 1:
            raise ConfigError(f"{where}: key '{key}' takes a bare integer")
        try:
            return int(tokens[0])
        except ValueError:
            raise ConfigError(f"{where}: '{tokens[0]}' is not an integer") from None
    if kind == "float":
        if len(tokens) != 1:
            raise ConfigError(f"{where}: key '{key}' takes a bare number")
        try:
            return float(tokens[0])
        except ValueError:
            raise ConfigError(f"{where}: '{tokens[0]}' is not a number") from None
    # dimensioned
    if len(tokens) != 2:
        raise ConfigError(f"{where}: key '{key}' needs '<value> <unit>' with a "
                          f"{kind} unit ({_units_for(kind)})")
    try:
        mag = float(tokens[0])
    except ValueError:
        raise ConfigError(f"{where}: '{tokens[0]}' is not a number") from None
    unit = tokens[1]
    if unit not in UNIT_SCALES:
        raise ConfigError(f"{where}: unknown unit '{unit}' (allowed: {sorted(UNIT_SCALES)})")
    ukind, scale = UNIT_SCALES[unit]
    if ukind != kind:
        raise ConfigError(f"{where}: key '{key}' needs a {kind} unit, got '{unit}'")
    return mag * scale


def _units_for(kind: str) -> str:
    return ",".join(u for u, (k, _) in UNIT_SCALES.items() if k == kind)


def load_config(path) -> ExperimentConfig:
    """Parse a config file; unknown keys and wrong units are hard errors."""
    overrides = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value [unit]'")
            key, rhs = (part.strip() for part in line.split("=", 1))
            if key not in KEY_KINDS:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
            if key in overrides:
                raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
            overrides[key] = _parse_value(key, rhs.split(), path, lineno)
    cfg = ExperimentConfig(**overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    if cfg.ordering not in ("counter_intuitive", "intuitive"):
        raise ConfigError(f"ordering must be counter_intuitive or intuitive, got {cfg.ordering!r}")
    species_mass(cfg.species)
    if cfg.d_min >= cfg.d0:
        raise ConfigError("d_min must be smaller than d0")
    if cfg.dt <= 0 or cfg.total_time <= 0:
        raise ConfigError("dt and total_time must be positive")
    for name in ("trace_stride", "snapshot_count", "progress_stride",
                 "edge_margin_cells", "edge_stride"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be >= 1")
