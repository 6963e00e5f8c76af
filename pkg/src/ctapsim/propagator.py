"""Symmetric split-operator evolution in real and imaginary time.

One step applies exp(-i V dt/2) in position space, the exact kinetic factor
in momentum space, and exp(-i V dt/2) again (Strang ordering, second order in
dt).  Runs between observation points telescope the adjacent potential
half-steps into full steps, so an interior step costs two transforms and two
pointwise multiplications while remaining mathematically identical to the
chained symmetric steps.  Imaginary time uses the same kernel with
dt -> -i tau and renormalization after every step.

Phase fields are built in the internal unit system (length 1 um, the species
mass, hbar = 1); wavefunctions and potentials stay SI at the interface.
"""

from __future__ import annotations

import sys
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .qgrid import SimGrid, UnitSystem, Wavefunction, write_snapshot

REAL_TIME = "real_time"
IMAGINARY_TIME = "imaginary_time"

_PARALLEL_MIN_SIZE = 1 << 18


class ConvergenceError(RuntimeError):
    """Imaginary-time relaxation failed to reach the tolerance."""


@dataclass
class StepPlan:
    """Precomputed phase fields for one (grid, potential, dt) triple."""

    grid: SimGrid
    dt: float                      # s (tau in imaginary mode)
    mode: str
    mass: float                    # kg
    exp_v_half: np.ndarray
    exp_v_full: np.ndarray
    exp_k: np.ndarray
    potential: np.ndarray          # SI values the plan was built from, J
    threads: int = 1

    def matches(self, psi: Wavefunction) -> bool:
        return psi.grid == self.grid


def make_plan(grid: SimGrid, potential: np.ndarray, mass: float, dt: float,
              mode: str = REAL_TIME, threads: int = 1) -> StepPlan:
    if mode not in (REAL_TIME, IMAGINARY_TIME):
        raise ValueError(f"unknown mode {mode!r}")
    if potential.shape != grid.n:
        raise ValueError("potential shape does not match the grid")
    units = UnitSystem(length=1e-6, mass=mass)
    dt_i = dt / units.time
    k2_i = grid.k_squared() * units.length**2
    if mode == REAL_TIME:
        v_i = potential / units.energy
        exp_v_half = np.exp(-0.5j * v_i * dt_i)
        exp_v_full = np.exp(-1.0j * v_i * dt_i)
        exp_k = np.exp(-0.5j * k2_i * dt_i)
        mod = np.abs(exp_v_half)
        if abs(float(mod.max()) - 1.0) > 1e-14 or abs(float(mod.min()) - 1.0) > 1e-14:
            raise AssertionError("real-time potential factor is not unit modulus")
    else:
        # shift the energy zero so the decay factors stay well scaled;
        # renormalization removes any constant factor anyway
        v_i = (potential - potential.min()) / units.energy
        exp_v_half = np.exp(-0.5 * v_i * dt_i)
        exp_v_full = np.exp(-1.0 * v_i * dt_i)
        exp_k = np.exp(-0.5 * k2_i * dt_i)
    return StepPlan(grid=grid, dt=dt, mode=mode, mass=mass,
                    exp_v_half=exp_v_half, exp_v_full=exp_v_full, exp_k=exp_k,
                    potential=potential, threads=threads)


def _mul_inplace(a: np.ndarray, b: np.ndarray, pool):
    """a *= b, chunked over the first axis when a pool is available (numpy
    releases the GIL on large array ops)."""
    if pool is None or a.size < _PARALLEL_MIN_SIZE:
        np.multiply(a, b, out=a)
        return
    nchunks = pool._max_workers
    bounds = np.linspace(0, a.shape[0], nchunks + 1).astype(int)
    futs = [pool.submit(np.multiply, a[lo:hi], b[lo:hi], a[lo:hi])
            for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    for f in futs:
        f.result()


def _advance(amps: np.ndarray, plan: StepPlan, n: int, pool) -> np.ndarray:
    """n merged Strang steps: half-V, n x (T, V) with the last V a half."""
    w = plan.threads
    _mul_inplace(amps, plan.exp_v_half, pool)
    for j in range(n):
        amps = sfft.fftn(amps, workers=w, overwrite_x=True)
        _mul_inplace(amps, plan.exp_k, pool)
        amps = sfft.ifftn(amps, workers=w, overwrite_x=True)
        _mul_inplace(amps, plan.exp_v_full if j < n - 1 else plan.exp_v_half, pool)
    return amps


def step(psi: Wavefunction, plan: StepPlan) -> Wavefunction:
    """Advance by one dt (or tau).  Real time conserves the norm to machine
    precision; imaginary time renormalizes."""
    if not plan.matches(psi):
        raise ValueError("plan was built for a different grid")
    psi.amplitudes = _advance(psi.amplitudes, plan, 1, None)
    psi.invalidate_norm()
    if plan.mode == IMAGINARY_TIME:
        psi.normalize()
    else:
        psi.time += plan.dt
    return psi


@dataclass
class EvolveStats:
    n_steps: int = 0
    wall_seconds: float = 0.0

    @property
    def steps_per_second(self) -> float:
        return self.n_steps / self.wall_seconds if self.wall_seconds > 0 else float("inf")


def evolve_real(psi: Wavefunction, plan: StepPlan, n_steps: int,
                observers=()) -> tuple[Wavefunction, EvolveStats]:
    """Propagate n_steps of real time, firing observers at their strides.

    Each observer needs `.stride` (int > 0) and `.notify(step, psi)`.
    Observers always fire at step 0 and at the final step; between
    observation points the potential half-steps are merged.  Observer
    callbacks run on the driver thread.
    """
    if plan.mode != REAL_TIME:
        raise ValueError("evolve_real requires a real-time plan")
    if not plan.matches(psi):
        raise ValueError("plan was built for a different grid")
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    stats = EvolveStats(n_steps=n_steps)
    events = {0, n_steps}
    for obs in observers:
        if obs.stride <= 0:
            raise ValueError("observer stride must be positive")
        events.update(range(0, n_steps + 1, obs.stride))
    schedule = sorted(e for e in events if e <= n_steps)
    pool = ThreadPoolExecutor(plan.threads) if plan.threads > 1 else None
    t0 = _time.perf_counter()
    try:
        current = 0
        for ev in schedule:
            if ev > current:
                psi.amplitudes = _advance(psi.amplitudes, plan, ev - current, pool)
                psi.time += (ev - current) * plan.dt
                psi.invalidate_norm()
                current = ev
            for obs in observers:
                if ev % obs.stride == 0 or ev == n_steps:
                    obs.notify(ev, psi)
    finally:
        if pool is not None:
            pool.shutdown()
        stats.wall_seconds = _time.perf_counter() - t0
    return psi, stats


def kinetic_expectation(psi: Wavefunction, mass: float, workers: int = 1) -> float:
    """<T> in joules (psi need not be normalized; value is per unit norm)."""
    from .constants import hbar

    amps = psi.amplitudes
    phi = sfft.fftn(amps, workers=workers)
    k2 = psi.grid.k_squared()
    w = float(np.sum(np.abs(phi) ** 2))
    t = float(np.sum((hbar**2 * k2 / (2 * mass)) * np.abs(phi) ** 2))
    return t / w


def potential_expectation(psi: Wavefunction, potential: np.ndarray) -> float:
    rho = psi.density()
    return float(np.sum(potential * rho) / np.sum(rho))


def energy_expectation(psi: Wavefunction, potential: np.ndarray, mass: float,
                       workers: int = 1) -> float:
    return kinetic_expectation(psi, mass, workers) + potential_expectation(psi, potential)


def ground_state_imaginary(grid: SimGrid, potential: np.ndarray, seed,
                           tol: float = 1e-10, tau: float = 1e-7,
                           mass: float | None = None, threads: int = 1,
                           check_every: int = 100,
                           max_steps: int = 400_000) -> Wavefunction:
    """Relax a seed to the ground state by imaginary-time evolution.

    Stops when the energy estimate changes by less than `tol` (relative)
    between successive checks.  A seed exactly orthogonal to the ground state
    (e.g. an odd function in a symmetric potential) relaxes to the lowest
    state of its symmetry sector instead; use generic seeds.
    """
    if mass is None:
        from .constants import species_mass

        mass = species_mass("li6")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not np.all(np.isfinite(potential)):
        raise ValueError("potential must be bounded")
    psi = seed if isinstance(seed, Wavefunction) else Wavefunction(
        np.asarray(seed, complex).copy(), grid)
    psi.normalize()
    plan = make_plan(grid, potential, mass, tau, mode=IMAGINARY_TIME, threads=threads)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        e_prev = energy_expectation(psi, potential, mass, workers=threads)
        done = 0
        while done < max_steps:
            n = min(check_every, max_steps - done)
            psi.amplitudes = _advance(psi.amplitudes, plan, n, pool)
            psi.invalidate_norm()
            psi.normalize()
            done += n
            e_now = energy_expectation(psi, potential, mass, workers=threads)
            if abs(e_now - e_prev) < tol * max(abs(e_now), 1e-300):
                return psi
            e_prev = e_now
    finally:
        if pool is not None:
            pool.shutdown()
    raise ConvergenceError(
        f"imaginary-time relaxation did not converge within {max_steps} steps "
        f"(last relative change {abs(e_now - e_prev) / max(abs(e_now), 1e-300):.3e})")


@dataclass
class SnapshotObserver:
    """Writes the wavefunction in the binary container every `stride` steps."""

    out_dir: object
    stride: int = 1
    written: list = field(default_factory=list)

    def notify(self, step_index: int, psi: Wavefunction):
        import os

        path = os.path.join(str(self.out_dir), f"psi_{step_index:07d}.qwf")
        write_snapshot(path, psi.amplitudes, psi.grid, time=psi.time)
        self.written.append(path)


@dataclass
class ProgressObserver:
    """Progress line (step, time, norm, steps/sec) on standard error."""

    stride: int = 1000
    stream: object = None
    _t0: float = field(default=None, repr=False)
    _last: tuple = field(default=None, repr=False)

    def notify(self, step_index: int, psi: Wavefunction):
        now = _time.perf_counter()
        stream = self.stream if self.stream is not None else sys.stderr
        if self._t0 is None:
            self._t0 = now
            self._last = (step_index, now)
            rate = 0.0
        else:
            s0, t0 = self._last
            rate = (step_index - s0) / (now - t0) if now > t0 else 0.0
            self._last = (step_index, now)
        print(f"step {step_index}  t = {psi.time:.6e} s  norm = {psi.norm():.12f}  "
              f"{rate:.2f} steps/s", file=stream, flush=True)

    @property
    def elapsed(self) -> float:
        return 0.0 if self._t0 is None else _time.perf_counter() - self._t0


def imaginary_step_count_estimate(gap_energy: float, tau: float, decades: float = 10) -> int:
    """Rough step count for an excited-state admixture to decay `decades`
    orders of magnitude; useful for choosing max_steps."""
    from .constants import hbar

    rate = gap_energy * tau / hbar
    return int(np.ceil(decades * np.log(10.0) / max(rate, 1e-300)))
