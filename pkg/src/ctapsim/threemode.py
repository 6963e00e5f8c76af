"""Exact three-level model of adiabatic transport between waveguides.

Basis states |L>, |M>, |R> are the local transverse ground states of the
three guides; J_lm and J_mr are the (angular, rad/s) tunnelling rates of the
two adjacent pairs.  With the guide ground energy set to zero the Hamiltonian
is hbar * [[0, -J_lm, 0], [-J_lm, 0, -J_mr], [0, -J_mr, 0]]; its zero-energy
eigenstate carries no |M> component and rotates from |L> to -|R> as the rate
ratio sweeps, which is what makes the counter-intuitive pulse order (J_mr
ramped before J_lm) transfer population without ever occupying the middle
guide.  hbar = 1 throughout this module.

Everything here is pure functions over small value types; safe to call
concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

VANISH_TOL = 1e-12      # pulses must be below this fraction of peak at t=0, T
DT_PEAK_MAX = 0.05      # resolution guard for the RK4 integrator


class PulseShape(str, Enum):
    GAUSSIAN = "gaussian"
    SIN_SQUARED = "sin_squared"


class DegenerateAngleError(ValueError):
    """Both tunnelling rates zero: the mixing angle is undefined."""


@dataclass(frozen=True)
class ThreeModeHamiltonian:
    """Couplings of the instantaneous three-mode Hamiltonian (rad/s)."""

    j_lm: float
    j_mr: float

    def __post_init__(self):
        if self.j_lm < 0 or self.j_mr < 0:
            raise ValueError("tunnelling rates must be non-negative")

    def matrix(self) -> np.ndarray:
        a, b = self.j_lm, self.j_mr
        return np.array([[0.0, -a, 0.0],
                         [-a, 0.0, -b],
                         [0.0, -b, 0.0]])


@dataclass(frozen=True)
class PulsePair:
    """Time-dependent tunnelling-rate pulses for the two guide pairs.

    `width` is the FWHM for gaussian pulses and the half support width for
    sin_squared pulses.  Counter-intuitive ordering means center_mr <
    center_lm (the distal coupling ramps first).  Both pulses must be below
    VANISH_TOL * peak at t = 0 and t = total_time.
    """

    shape: PulseShape = PulseShape.GAUSSIAN
    peak: float = 1.0
    width: float = 0.125
    center_lm: float = 0.6
    center_mr: float = 0.4
    total_time: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "shape", PulseShape(self.shape))
        if self.peak < 0 or self.width <= 0 or self.total_time <= 0:
            raise ValueError("peak must be >= 0; width and total_time positive")
        if self.peak > 0:
            edge = max(self._eval(np.array([0.0, self.total_time]), self.center_lm).max(),
                       self._eval(np.array([0.0, self.total_time]), self.center_mr).max())
            if edge > VANISH_TOL * self.peak:
                raise ValueError(
                    f"pulses do not vanish at the window edges "
                    f"(edge/peak = {edge / self.peak:.2e} > {VANISH_TOL:.0e}); "
                    f"narrow the width or move the centers inward")

    @property
    def counter_intuitive(self) -> bool:
        return self.center_mr < self.center_lm

    def swapped(self) -> "PulsePair":
        """Same pulses with the two centers exchanged (intuitive ordering)."""
        return PulsePair(self.shape, self.peak, self.width,
                         self.center_mr, self.center_lm, self.total_time)

    def _eval(self, t: np.ndarray, center: float) -> np.ndarray:
        if self.shape is PulseShape.GAUSSIAN:
            sigma = self.width / (2.0 * np.sqrt(2.0 * np.log(2.0)))
            return self.peak * np.exp(-((t - center) ** 2) / (2 * sigma**2))
        u = (t - center) / self.width
        return np.where(np.abs(u) < 1.0, self.peak * np.cos(np.pi * u / 2) ** 2, 0.0)

    def j_lm(self, t):
        return self._eval(np.asarray(t, float), self.center_lm)

    def j_mr(self, t):
        return self._eval(np.asarray(t, float), self.center_mr)

    def hamiltonian(self, t: float) -> ThreeModeHamiltonian:
        return ThreeModeHamiltonian(float(self.j_lm(t)), float(self.j_mr(t)))


def default_pulses(peak: float, total_time: float,
                   counter_intuitive: bool = True) -> PulsePair:
    """Gaussian pulses with width total_time/8 and center separation
    total_time/5 (both configurable through PulsePair directly)."""
    sep = total_time / 5.0
    c_mr, c_lm = (total_time - sep) / 2, (total_time + sep) / 2
    if not counter_intuitive:
        c_mr, c_lm = c_lm, c_mr
    return PulsePair(PulseShape.GAUSSIAN, peak, total_time / 8.0, c_lm, c_mr, total_time)


def mixing_angle(j_lm: float, j_mr: float) -> float:
    """tan(theta) = j_lm / j_mr; theta in [0, pi/2]."""
    if j_lm == 0.0 and j_mr == 0.0:
        raise DegenerateAngleError("mixing angle undefined for j_lm = j_mr = 0")
    if j_lm < 0 or j_mr < 0:
        raise ValueError("rates must be non-negative")
    return float(np.arctan2(j_lm, j_mr))


def dark_state(j_lm: float, j_mr: float) -> np.ndarray:
    """Zero-energy eigenstate cos(theta)|L> - sin(theta)|R>; no |M> part."""
    theta = mixing_angle(j_lm, j_mr)
    return np.array([np.cos(theta), 0.0, -np.sin(theta)], dtype=complex)


def eigensystem(h: ThreeModeHamiltonian):
    """Eigenvalues (ascending) and eigenvectors (columns) of the three-mode
    Hamiltonian, from the closed-form diagonalization.

    The spectrum is {-E, 0, +E} with E = sqrt(j_lm^2 + j_mr^2); the null
    vector is the dark state.
    """
    a, b = h.j_lm, h.j_mr
    e = float(np.hypot(a, b))
    if e == 0.0:
        return np.zeros(3), np.eye(3, dtype=complex)
    sin_t, cos_t = a / e, b / e
    dark = np.array([cos_t, 0.0, -sin_t], dtype=complex)
    bright_minus = np.array([sin_t, 1.0, cos_t], dtype=complex) / np.sqrt(2.0)
    bright_plus = np.array([sin_t, -1.0, cos_t], dtype=complex) / np.sqrt(2.0)
    values = np.array([-e, 0.0, e])
    vectors = np.column_stack([bright_minus, dark, bright_plus])
    return values, vectors


@dataclass
class ThreeModeTrace:
    """Time series from evolve(): state amplitudes and derived populations."""

    times: np.ndarray        # (n,)
    amplitudes: np.ndarray   # (n, 3) complex

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norms(self) -> np.ndarray:
        return self.populations.sum(axis=1)

    def final_populations(self) -> np.ndarray:
        return self.populations[-1]

    def max_middle_population(self) -> float:
        return float(self.populations[:, 1].max())

    def to_csv(self, path):
        rows = np.column_stack([self.times, self.populations, self.norms])
        with open(path, "w") as fh:
            fh.write("t,p_l,p_m,p_r,norm\n")
            for r in rows:
                fh.write(",".join(format(v, ".17g") for v in r) + "\n")


def _deriv(t: float, y: np.ndarray, pulses: PulsePair) -> np.ndarray:
    a = pulses.j_lm(t)
    b = pulses.j_mr(t)
    # i dy/dt = H y with H/hbar = [[0,-a,0],[-a,0,-b],[0,-b,0]]
    return np.array([1j * a * y[1],
                     1j * (a * y[0] + b * y[2]),
                     1j * b * y[1]])


def evolve(pulses: PulsePair, initial, dt: float, record_stride: int = 1) -> ThreeModeTrace:
    """Integrate the three-mode Schrodinger equation with fixed-step RK4.

    dt may be negative (backward evolution).  Raises if the initial state is
    not normalized; warns if |dt| * peak exceeds the resolution guard.
    """
    y = np.asarray(initial, dtype=complex).copy()
    if y.shape != (3,):
        raise ValueError("initial state must have 3 amplitudes")
    n0 = float(np.sum(np.abs(y) ** 2))
    if abs(n0 - 1.0) > 1e-10:
        raise ValueError(f"initial state not normalized: |psi|^2 = {n0}")
    if abs(dt) * pulses.peak > DT_PEAK_MAX:
        warnings.warn(f"dt*peak = {abs(dt) * pulses.peak:.3g} exceeds {DT_PEAK_MAX}; "
                      "the integration may be under-resolved", stacklevel=2)
    n_steps = int(round(pulses.total_time / abs(dt))) if dt != 0 else 0
    t = 0.0 if dt >= 0 else pulses.total_time
    times = [t]
    states = [y.copy()]
    for i in range(n_steps):
        k1 = _deriv(t, y, pulses)
        k2 = _deriv(t + dt / 2, y + (dt / 2) * k1, pulses)
        k3 = _deriv(t + dt / 2, y + (dt / 2) * k2, pulses)
        k4 = _deriv(t + dt, y + dt * k3, pulses)
        y = y + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        if (i + 1) % record_stride == 0 or i == n_steps - 1:
            times.append(t)
            states.append(y.copy())
    return ThreeModeTrace(np.array(times), np.array(states))
