"""Split-operator stepping: dispersion, coherent motion, order, imaginary time."""

import numpy as np
import pytest

from ctapsim import propagator as prop
from ctapsim import qgrid
from ctapsim.constants import hbar, species_mass

M = species_mass("li6")


def ho_potential(grid, mass, omegas, center=(0.0, 0.0, 0.0)):
    x, y, z = grid.meshgrid()
    wx, wy, wz = omegas
    return 0.5 * mass * (wx**2 * (x - center[0]) ** 2
                         + wy**2 * (y - center[1]) ** 2
                         + wz**2 * (z - center[2]) ** 2)


@pytest.fixture(scope="module")
def free_grid():
    return qgrid.make_grid(32, 32, 64, (20e-6, 20e-6, 40e-6),
                           origin=(-10e-6, -10e-6, -20e-6))


def test_plan_unit_modulus(free_grid):
    v = np.random.default_rng(3).uniform(0, 1e-27, free_grid.n)
    plan = prop.make_plan(free_grid, v, M, 1e-6)
    assert np.abs(np.abs(plan.exp_v_half) - 1).max() < 1e-14
    assert np.abs(np.abs(plan.exp_k) - 1).max() < 1e-14


def test_plan_grid_mismatch(free_grid):
    other = qgrid.make_grid(16, 16, 16, (1e-5, 1e-5, 1e-5))
    psi = qgrid.gaussian_packet(other, (5e-6, 5e-6, 5e-6), (5e-7,) * 3)
    plan = prop.make_plan(free_grid, np.zeros(free_grid.n), M, 1e-6)
    with pytest.raises(ValueError, match="different grid"):
        prop.step(psi, plan)


def test_free_gaussian_dispersion(free_grid):
    # amplitude width sigma(t)^2 = sigma0^2 (1 + (hbar t / m sigma0^2)^2)
    s0 = 1.2e-6
    psi = qgrid.gaussian_packet(free_grid, (0, 0, 0), (s0, s0, s0))
    plan = prop.make_plan(free_grid, np.zeros(free_grid.n), M, 5e-6)
    psi, _ = prop.evolve_real(psi, plan, 40)
    t = 40 * 5e-6
    rho = psi.density().sum(axis=(0, 1))
    var = float((rho * free_grid.z**2).sum() / rho.sum())
    sigma = np.sqrt(2 * var)
    sigma_th = s0 * np.sqrt(1 + (hbar * t / (M * s0**2)) ** 2)
    assert abs(sigma - sigma_th) / sigma_th < 1e-6
    assert abs(psi.norm() - 1) < 1e-10
    assert psi.time == pytest.approx(t)


@pytest.fixture(scope="module")
def ho_setup():
    w = 2 * np.pi * 2e3
    a = np.sqrt(hbar / (M * w))
    L = 24 * a
    grid = qgrid.make_grid(64, 16, 16, (L, L, L), origin=(-L / 2, -L / 2, -L / 2))
    v = ho_potential(grid, M, (w, w, w))
    return grid, v, w, a


def test_coherent_state_tracks_classical(ho_setup):
    grid, v, w, a = ho_setup
    x0 = 3 * a
    psi = qgrid.gaussian_packet(grid, (x0, 0, 0), (a, a, a))
    period = 2 * np.pi / w
    n = 512
    plan = prop.make_plan(grid, v, M, period / n)
    worst = 0.0
    for k in range(8):
        psi, _ = prop.evolve_real(psi, plan, n // 8)
        x_t = qgrid.expectation_position(psi)[0]
        worst = max(worst, abs(x_t - x0 * np.cos(w * psi.time)) / x0)
    assert worst < 1e-4


def test_strang_order_in_dt(ho_setup):
    grid, v, w, a = ho_setup
    x0 = 3 * a
    t_final = 0.75 * (2 * np.pi / w)   # sin(w t) != 0 so the dt^2 term shows
    errors = []
    for n in (48, 96, 192):
        psi = qgrid.gaussian_packet(grid, (x0, 0, 0), (a, a, a))
        plan = prop.make_plan(grid, v, M, t_final / n)
        psi, _ = prop.evolve_real(psi, plan, n)
        errors.append(abs(qgrid.expectation_position(psi)[0]
                          - x0 * np.cos(w * t_final)))
    assert errors[0] / errors[1] == pytest.approx(4.0, abs=0.3)
    assert errors[1] / errors[2] == pytest.approx(4.0, abs=0.3)


def test_small_dt_step_is_near_identity(ho_setup):
    grid, v, w, a = ho_setup
    psi = qgrid.gaussian_packet(grid, (a, 0, 0), (a, a, a))
    before = psi.amplitudes.copy()
    deltas = []
    for dt in (1e-9, 5e-10, 2.5e-10):
        p = psi.copy()
        prop.step(p, prop.make_plan(grid, v, M, dt))
        deltas.append(np.linalg.norm(p.amplitudes - before)
                      / np.linalg.norm(before))
    assert deltas[0] < 1e-2
    assert deltas[0] / deltas[1] == pytest.approx(2.0, rel=0.05)
    assert deltas[1] / deltas[2] == pytest.approx(2.0, rel=0.05)


def test_unitarity_and_energy_over_many_steps(ho_setup):
    grid, v, w, a = ho_setup
    psi = qgrid.gaussian_packet(grid, (2 * a, 0.5 * a, 0), (a, a, a))
    plan = prop.make_plan(grid, v, M, (2 * np.pi / w) / 400)
    e0 = prop.energy_expectation(psi, v, M)
    psi, _ = prop.evolve_real(psi, plan, 10_000)
    assert abs(psi.norm() - 1) <= 1e-8
    e1 = prop.energy_expectation(psi, v, M)
    assert abs(e1 - e0) / e0 <= 1e-6


def test_merged_run_equals_chained_single_steps(ho_setup):
    grid, v, w, a = ho_setup
    psi_a = qgrid.gaussian_packet(grid, (a, -a, 0.5 * a), (a, a, a))
    psi_b = psi_a.copy()
    plan = prop.make_plan(grid, v, M, 3e-6)
    psi_a, _ = prop.evolve_real(psi_a, plan, 7)
    for _ in range(7):
        prop.step(psi_b, plan)
    # telescoped half steps are algebraically identical; allow roundoff
    scale = np.abs(psi_b.amplitudes).max()
    assert np.abs(psi_a.amplitudes - psi_b.amplitudes).max() < 1e-12 * scale


def test_evolve_zero_steps_returns_input(ho_setup):
    grid, v, w, a = ho_setup
    psi = qgrid.gaussian_packet(grid, (a, 0, 0), (a, a, a))
    before = psi.amplitudes.copy()
    psi, stats = prop.evolve_real(psi, plan=prop.make_plan(grid, v, M, 1e-6),
                                  n_steps=0)
    assert np.array_equal(psi.amplitudes, before)
    assert stats.n_steps == 0


def test_determinism_bitwise(ho_setup):
    grid, v, w, a = ho_setup
    def run():
        psi = qgrid.gaussian_packet(grid, (a, 0, 0), (a, a, a))
        plan = prop.make_plan(grid, v, M, 2e-6)
        psi, _ = prop.evolve_real(psi, plan, 50)
        return psi.amplitudes
    assert np.array_equal(run(), run())


# ------------------------------------------------------------ imaginary time

def test_imaginary_ground_state_anisotropic():
    omegas = 2 * np.pi * np.array([3e3, 4e3, 5e3])
    ax = np.sqrt(hbar / (M * omegas[0]))
    grid = qgrid.make_grid(32, 32, 32, (14 * ax,) * 3, origin=(-7 * ax,) * 3)
    v = ho_potential(grid, M, omegas)
    seed = qgrid.gaussian_packet(grid, (0.3 * ax, -0.2 * ax, 0.1 * ax),
                                 (0.9 * ax,) * 3)
    gs = prop.ground_state_imaginary(grid, v, seed, tol=1e-10, tau=1e-6, mass=M)
    e = prop.energy_expectation(gs, v, M)
    e_th = 0.5 * hbar * omegas.sum()
    assert abs(e - e_th) / e_th < 1e-4
    assert abs(gs.norm() - 1) < 1e-10


def test_imaginary_energy_monotone():
    omegas = 2 * np.pi * np.array([3e3, 3e3, 3e3])
    ax = np.sqrt(hbar / (M * omegas[0]))
    grid = qgrid.make_grid(16, 16, 16, (14 * ax,) * 3, origin=(-7 * ax,) * 3)
    v = ho_potential(grid, M, omegas)
    psi = qgrid.gaussian_packet(grid, (ax, ax, -ax), (0.7 * ax,) * 3)
    plan = prop.make_plan(grid, v, M, 1e-6, mode=prop.IMAGINARY_TIME)
    energies = []
    for _ in range(30):
        for _ in range(20):
            prop.step(psi, plan)
        energies.append(prop.energy_expectation(psi, v, M))
    diffs = np.diff(energies)
    assert np.all(diffs <= 1e-12 * np.abs(energies[0]))


def test_odd_seed_relaxes_to_first_excited():
    # parity is conserved by the split-operator map: a seed odd about the
    # trap center converges to the lowest odd state, at energy 3/2 hbar w
    w = 2 * np.pi * 3e3
    ax = np.sqrt(hbar / (M * w))
    grid = qgrid.make_grid(32, 16, 16, (16 * ax, 8 * ax, 8 * ax),
                           origin=(-8 * ax, -4 * ax, -4 * ax))
    v = ho_potential(grid, M, (w, w, w))
    x = grid.x[:, None, None]
    seed = x * np.exp(-(x**2) / (2 * ax**2)) * np.ones(grid.n)
    seed[0, :, :] = 0.0   # drop the unpaired periodic cell: seed exactly odd
    gs = prop.ground_state_imaginary(grid, v, seed.astype(complex),
                                     tol=1e-10, tau=1e-6, mass=M)
    e = prop.energy_expectation(gs, v, M)
    assert abs(e - 2.5 * hbar * w) / (hbar * w) < 1e-3


def test_imaginary_rejects_unbounded_potential(ho_setup):
    grid, v, w, a = ho_setup
    bad = v.copy()
    bad[0, 0, 0] = np.inf
    seed = qgrid.gaussian_packet(grid, (0, 0, 0), (a, a, a))
    with pytest.raises(ValueError, match="bounded"):
        prop.ground_state_imaginary(grid, bad, seed, mass=M)


def test_imaginary_nonconvergence_raises(ho_setup):
    grid, v, w, a = ho_setup
    seed = qgrid.gaussian_packet(grid, (3 * a, 0, 0), (a, a, a))
    with pytest.raises(prop.ConvergenceError):
        prop.ground_state_imaginary(grid, v, seed, tol=1e-14, tau=1e-9,
                                    mass=M, max_steps=200)


# ------------------------------------------------------------- observers

def test_observer_strides_and_final_call(ho_setup):
    grid, v, w, a = ho_setup
    calls = []

    class Spy:
        stride = 7

        def notify(self, step, psi):
            calls.append(step)

    psi = qgrid.gaussian_packet(grid, (a, 0, 0), (a, a, a))
    plan = prop.make_plan(grid, v, M, 1e-6)
    prop.evolve_real(psi, plan, 20, [Spy()])
    assert calls == [0, 7, 14, 20]


def test_snapshot_observer_roundtrip(tmp_path, ho_setup):
    grid, v, w, a = ho_setup
    psi = qgrid.gaussian_packet(grid, (a, 0, 0), (a, a, a))
    plan = prop.make_plan(grid, v, M, 1e-6)
    obs = prop.SnapshotObserver(tmp_path, stride=5)
    prop.evolve_real(psi, plan, 10, [obs])
    assert len(obs.written) == 3
    arr, g, t = qgrid.read_snapshot(obs.written[-1])
    assert t == pytest.approx(10e-6)
    assert np.array_equal(arr, psi.amplitudes)


def test_progress_observer_writes_lines(ho_setup, capsys):
    import io

    grid, v, w, a = ho_setup
    psi = qgrid.gaussian_packet(grid, (a, 0, 0), (a, a, a))
    plan = prop.make_plan(grid, v, M, 1e-6)
    buf = io.StringIO()
    prop.evolve_real(psi, plan, 4, [prop.ProgressObserver(stride=2, stream=buf)])
    lines = buf.getvalue().strip().splitlines()
    assert len(lines) == 3
    assert "steps/s" in lines[-1] and "norm" in lines[0]
