"""Run orchestration: the evolve pipeline, current sweeps, the thread-scaling
benchmark and the run manifest.

The evolve pipeline is

    assemble_potential -> transverse ground state of the occupied guide
    (imaginary time in a windowed potential) -> longitudinal Gaussian
    envelope near z = 0 -> real-time evolution with population / snapshot /
    edge observers -> trace CSV, snapshots, run.json manifest.

Every stage failure is re-raised as StageError naming the stage, which the
CLI turns into a nonzero exit.
"""

from __future__ import annotations

import getpass
import hashlib
import json
import os
import platform
import tempfile
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .constants import hbar
from .magfield import PotentialGrid, assemble_potential, transverse_spectrum
from .observables import (EdgeMonitor, GuidePartition, PopulationRecorder,
                          build_partition, transfer_fidelity)
from .propagator import (REAL_TIME, ProgressObserver, SnapshotObserver,
                         evolve_real, ground_state_imaginary, make_plan)
from .qgrid import SimGrid, Wavefunction, make_grid

MASK_POTENTIAL = 1e-18  # J; effectively infinite wall for the windowed relax


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    version: str = __version__
    started: str = ""
    finished: str = ""
    steps_per_second: float = 0.0
    results: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)   # relative path -> sha256

    def add_file(self, out_dir, path):
        rel = os.path.relpath(path, out_dir)
        self.files[rel] = _sha256(path)

    def write(self, out_dir):
        """Atomic write of run.json (write-then-rename)."""
        payload = {
            "config": self.config,
            "version": self.version,
            "host": platform.node(),
            "user": getpass.getuser(),
            "started": self.started,
            "finished": self.finished,
            "steps_per_second": self.steps_per_second,
            "results": self.results,
            "files": self.files,
        }
        target = os.path.join(out_dir, "run.json")
        fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(payload, fh, indent=2, default=repr)
                fh.write("\n")
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return target


def _now() -> str:
    return _time.strftime("%Y-%m-%dT%H:%M:%S%z")


def prepare_potential(cfg: ExperimentConfig, i_middle: float | None = None):
    """Layout, grid and the (cached-per-run) potential with its partition."""
    with _Stage("assemble_potential"):
        layout = cfg.to_layout(i_middle=i_middle)
        grid = cfg.to_grid()
        potential = assemble_potential(layout, grid)
    with _Stage("build_partition"):
        partition = build_partition(potential)
    return layout, grid, potential, partition


def transverse_ground_state(potential: PotentialGrid, partition: GuidePartition,
                            z_index: int, guide_index: int = 0,
                            tau: float = 1e-7, tol: float = 1e-10,
                            threads: int = 1) -> np.ndarray:
    """2D transverse ground state of one guide at a fixed z slice.

    The slice potential is masked to the guide's x window (neighboring wells
    walled off) and relaxed by imaginary time on a thin broadcast grid; the
    kinetic term along the dummy z axis only flattens that direction, so the
    converged state is the transverse ground state replicated along z.
    Returns phi(x, y) normalized to ∫|phi|^2 dx dy = 1.
    """
    grid = potential.grid
    v_slice = potential.values[:, :, z_index].copy()
    xs = grid.x
    if guide_index == 0:
        window = xs < partition.xb1[z_index]
    elif guide_index == 1:
        window = (xs >= partition.xb1[z_index]) & (xs < partition.xb2[z_index])
    else:
        window = xs >= partition.xb2[z_index]
    v_slice[~window, :] = MASK_POTENTIAL
    x0, y0, _vmin = potential.guide_minimum(z_index, guide_index)
    spec = transverse_spectrum(potential, z_index, guide_index)
    mass = potential.layout.mass
    sx = np.sqrt(hbar / (mass * spec.omega_x))
    sy = np.sqrt(hbar / (mass * spec.omega_y))
    nz_thin = 8
    thin = make_grid(grid.n[0], grid.n[1], nz_thin,
                     (grid.extents[0], grid.extents[1], nz_thin * grid.spacing[2]),
                     origin=(grid.origin[0], grid.origin[1], 0.0))
    seed2d = np.exp(-((xs[:, None] - x0) ** 2) / (2 * sx**2)
                    - ((grid.y[None, :] - y0) ** 2) / (2 * sy**2))
    seed = np.repeat(seed2d[:, :, None], nz_thin, axis=2).astype(complex)
    v_thin = np.repeat(v_slice[:, :, None], nz_thin, axis=2)
    gs = ground_state_imaginary(thin, v_thin, seed, tol=tol, tau=tau,
                                mass=mass, threads=threads)
    phi = gs.amplitudes[:, :, 0]
    dx, dy, _ = grid.spacing
    phi = phi / np.sqrt(np.sum(np.abs(phi) ** 2) * dx * dy)
    return phi


def initial_state(cfg: ExperimentConfig, potential: PotentialGrid,
                  partition: GuidePartition, threads: int = 1) -> Wavefunction:
    """Transverse ground state of the left guide, Gaussian along z."""
    grid = potential.grid
    z0 = cfg.z_start_eff
    iz0 = int(np.argmin(np.abs(grid.z - z0)))
    phi = transverse_ground_state(potential, partition, iz0, guide_index=0,
                                  tau=cfg.gs_tau, tol=cfg.gs_tol, threads=threads)
    envelope = np.exp(-((grid.z - z0) ** 2) / (2 * cfg.sigma_z_eff**2))
    amps = phi[:, :, None] * envelope[None, None, :]
    psi = Wavefunction(amps.astype(np.complex128), grid, time=0.0)
    return psi.normalize()


def run_evolve(cfg: ExperimentConfig, out_dir, threads: int | None = None,
               i_middle: float | None = None, write_snapshots: bool = True,
               progress: bool = True) -> RunManifest:
    os.makedirs(out_dir, exist_ok=True)
    nthreads = cfg.resolve_threads(threads)
    manifest = RunManifest(config=cfg.snapshot(), started=_now())
    layout, grid, potential, partition = prepare_potential(cfg, i_middle=i_middle)
    with _Stage("ground_state"):
        psi = initial_state(cfg, potential, partition, threads=nthreads)
    with _Stage("evolve"):
        plan = make_plan(grid, potential.values, cfg.mass, cfg.dt,
                         mode=REAL_TIME, threads=nthreads)
        recorder = PopulationRecorder(partition, stride=cfg.trace_stride,
                                      margin_cells=cfg.edge_margin_cells)
        monitor = EdgeMonitor(stride=cfg.edge_stride,
                              margin_cells=cfg.edge_margin_cells,
                              threshold=cfg.edge_threshold)
        observers = [recorder, monitor]
        snap_obs = None
        if write_snapshots and cfg.snapshot_count > 0:
            snap_dir = os.path.join(out_dir, "snapshots")
            os.makedirs(snap_dir, exist_ok=True)
            snap_obs = SnapshotObserver(
                snap_dir, stride=max(1, cfg.n_steps // cfg.snapshot_count))
            observers.append(snap_obs)
        if progress:
            observers.append(ProgressObserver(stride=cfg.progress_stride))
        psi, stats = evolve_real(psi, plan, cfg.n_steps, observers)
    with _Stage("persist"):
        trace_path = os.path.join(out_dir, "trace.csv")
        recorder.trace.to_csv(trace_path)
        manifest.add_file(out_dir, trace_path)
        if snap_obs is not None:
            for p in snap_obs.written:
                manifest.add_file(out_dir, p)
        manifest.steps_per_second = stats.steps_per_second
        manifest.results = {
            "i_middle_effective": cfg.i_middle if i_middle is None else i_middle,
            "final_p_l": recorder.trace.p_l[-1],
            "final_p_m": recorder.trace.p_m[-1],
            "final_p_r": transfer_fidelity(recorder.trace),
            "max_p_m": recorder.trace.max_middle(),
            "final_norm": recorder.trace.norm[-1],
            "max_edge": max(recorder.trace.edge),
        }
        manifest.finished = _now()
        manifest.write(out_dir)
    return manifest


def run_sweep(cfg: ExperimentConfig, out_dir, threads: int | None = None,
              write_snapshots: bool = False, progress: bool = False) -> list:
    """One run_evolve per sweep current per ordering; aggregated CSV."""
    values = cfg.sweep_values()
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for ordering in ("counter_intuitive", "intuitive"):
        for i_m in values:
            sub = os.path.join(out_dir, f"{ordering}_im_{i_m * 1e3:.4f}mA")
            cfg_point = ExperimentConfig(**{**_plain_fields(cfg),
                                            "ordering": ordering})
            man = run_evolve(cfg_point, sub, threads=threads, i_middle=float(i_m),
                             write_snapshots=write_snapshots, progress=progress)
            rows.append((float(i_m), ordering, man.results["final_p_r"]))
    agg = os.path.join(out_dir, "sweep.csv")
    with open(agg, "w") as fh:
        fh.write("i_m,ordering,final_p_r\n")
        for i_m, ordering, pr in rows:
            fh.write(f"{i_m:.17g},{ordering},{pr:.17g}\n")
    return rows


def _plain_fields(cfg: ExperimentConfig) -> dict:
    import dataclasses

    return {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}


def bench_thread_counts(max_threads: int | None = None) -> list[int]:
    hw = max_threads or (os.cpu_count() or 1)
    counts = []
    c = 1
    while c < hw:
        counts.append(c)
        c *= 2
    counts.append(hw)
    return sorted(set(counts))


def run_bench(cfg: ExperimentConfig, out_dir, thread_counts=None,
              warm_steps: int | None = None, timed_steps: int | None = None,
              chunks: int = 10) -> dict:
    """Split-operator kernel steps/sec on the configured grid per thread count.

    Warm steps are discarded; the timed steps are split into chunks and the
    reported rate is the median chunk rate (spread = min..max).  The kernel
    timing does not depend on the potential contents, so a synthetic harmonic
    potential stands in and no wire assembly is needed.
    """
    os.makedirs(out_dir, exist_ok=True)
    warm = cfg.bench_warm_steps if warm_steps is None else warm_steps
    timed = cfg.bench_timed_steps if timed_steps is None else timed_steps
    grid = cfg.to_grid()
    x, y, z = grid.meshgrid()
    center = [o + e / 2 for o, e in zip(grid.origin, grid.extents)]
    v = 0.5 * cfg.mass * cfg.omega_z**2 * ((x - center[0]) ** 2 + (y - center[1]) ** 2
                                           + (z - center[2]) ** 2)
    widths = [e / 16 for e in grid.extents]
    from .qgrid import gaussian_packet

    psi0 = gaussian_packet(grid, center, widths)
    report = {"grid": grid.n, "warm_steps": warm, "timed_steps": timed, "rates": {}}
    for nt in (thread_counts or bench_thread_counts()):
        plan = make_plan(grid, v, cfg.mass, cfg.dt, mode=REAL_TIME, threads=nt)
        psi = psi0.copy()
        evolve_real(psi, plan, warm)
        per_chunk = max(1, timed // chunks)
        rates = []
        for _ in range(chunks):
            psi, stats = evolve_real(psi, plan, per_chunk)
            rates.append(stats.steps_per_second)
        rates = np.array(rates)
        report["rates"][nt] = {
            "median": float(np.median(rates)),
            "min": float(rates.min()),
            "max": float(rates.max()),
        }
    csv_path = os.path.join(out_dir, "bench.csv")
    with open(csv_path, "w") as fh:
        fh.write("threads,steps_per_sec\n")
        for nt, r in report["rates"].items():
            fh.write(f"{nt},{r['median']:.17g}\n")
    ref_steps = 100_000  # reference-chip full run length at dt = 1 us
    txt_path = os.path.join(out_dir, "bench.txt")
    with open(txt_path, "w") as fh:
        fh.write(f"split-operator kernel benchmark, grid {grid.n}\n")
        fh.write(f"warm {warm} steps discarded, {timed} timed steps in {chunks} chunks\n")
        for nt, r in report["rates"].items():
            fh.write(f"threads={nt}: median {r['median']:.3f} steps/s "
                     f"(spread {r['min']:.3f}..{r['max']:.3f}); projected "
                     f"{ref_steps}-step run: {ref_steps / r['median'] / 3600:.2f} h\n")
    report["csv"] = csv_path
    report["txt"] = txt_path
    return report
