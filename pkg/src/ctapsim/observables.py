"""Diagnostics on wavefunction snapshots: per-guide populations, integrated
density maps, transfer fidelity and the periodic-boundary validity monitor.

"Population in a guide" needs a definition the moment the guides deform: we
partition the x axis per z slice at the transverse potential ridge (saddle)
between adjacent guide minima, falling back to midpoints between the wire
positions on slices where the wells have merged.  The three regions tile the
domain exactly, so the populations always sum to the norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .magfield import PotentialGrid
from .qgrid import Wavefunction


class EdgeDensityError(RuntimeError):
    """Probability reached the grid boundary; periodic images invalidate the run."""


@dataclass(frozen=True)
class GuidePartition:
    """Per-z-slice x boundaries separating the L/M/R regions."""

    xb1: np.ndarray          # (nz,) left/middle boundary, m
    xb2: np.ndarray          # (nz,) middle/right boundary, m
    merged: np.ndarray       # (nz,) bool, midpoint fallback engaged
    grid_ref: object = None


def build_partition(potential: PotentialGrid) -> GuidePartition:
    """Boundaries at the transverse saddle ridges between adjacent minima.

    The ridge is located on the valley-floor profile f(x) = min_y V(x, y) as
    the maximum between the two minima.  Slices with fewer than three
    distinct minima fall back to midpoints between the wire x positions and
    are flagged."""
    grid = potential.grid
    xs = grid.x
    nz = grid.n[2]
    xb1 = np.empty(nz)
    xb2 = np.empty(nz)
    merged = np.zeros(nz, dtype=bool)
    floor = potential.values.min(axis=1)  # (nx, nz)
    zs = grid.z
    layout = potential.layout
    for iz in range(nz):
        m = potential.minima[iz]
        if m.n_guides >= 3:
            xb1[iz] = _ridge_position(floor[:, iz], xs, m.x[0], m.x[1])
            xb2[iz] = _ridge_position(floor[:, iz], xs, m.x[1], m.x[2])
        else:
            merged[iz] = True
            pos = layout.wire_positions_at(float(zs[iz]))
            vals = sorted(pos.values())
            xb1[iz] = 0.5 * (vals[0] + vals[1])
            xb2[iz] = 0.5 * (vals[1] + vals[2])
    return GuidePartition(xb1=xb1, xb2=xb2, merged=merged, grid_ref=grid)


def _ridge_position(floor_profile, xs, x_lo, x_hi):
    i_lo = int(np.searchsorted(xs, x_lo))
    i_hi = int(np.searchsorted(xs, x_hi))
    if i_hi <= i_lo + 1:
        return 0.5 * (x_lo + x_hi)
    seg = floor_profile[i_lo:i_hi + 1]
    return float(xs[i_lo + int(np.argmax(seg))])


def populations(psi: Wavefunction, partition: GuidePartition):
    """(p_l, p_m, p_r): |psi|^2 integrated over the three x regions (full y
    and z extent).  The sum equals the norm."""
    grid = psi.grid
    if partition.grid_ref is not None and partition.grid_ref != grid:
        raise ValueError("partition was built for a different grid")
    dx, dy, dz = grid.spacing
    w = psi.density().sum(axis=1) * dy   # (nx, nz)
    xs = grid.x
    in_l = xs[:, None] < partition.xb1[None, :]
    in_r = xs[:, None] >= partition.xb2[None, :]
    p_l = float(np.sum(w, where=in_l) * dx * dz)
    p_r = float(np.sum(w, where=in_r) * dx * dz)
    p_m = float(np.sum(w, where=~(in_l | in_r)) * dx * dz)
    return p_l, p_m, p_r


def density_xz(psi: Wavefunction) -> np.ndarray:
    """Probability density integrated over y, shape (nx, nz); non-negative
    and it sums (x dx dz) to the norm."""
    return psi.density().sum(axis=1) * psi.grid.spacing[1]


def edge_density(psi: Wavefunction, margin_cells: int = 2) -> float:
    """|psi|^2 mass within margin_cells of any grid face."""
    if margin_cells < 1:
        raise ValueError("margin_cells must be >= 1")
    rho = psi.density()
    m = margin_cells
    mask = np.zeros(psi.grid.n, dtype=bool)
    mask[:m, :, :] = True
    mask[-m:, :, :] = True
    mask[:, :m, :] = True
    mask[:, -m:, :] = True
    mask[:, :, :m] = True
    mask[:, :, -m:] = True
    return float(np.sum(rho, where=mask) * psi.grid.dvol)


@dataclass
class PopulationTrace:
    """Rows of (t, p_l, p_m, p_r, norm, edge)."""

    times: list = field(default_factory=list)
    p_l: list = field(default_factory=list)
    p_m: list = field(default_factory=list)
    p_r: list = field(default_factory=list)
    norm: list = field(default_factory=list)
    edge: list = field(default_factory=list)

    def append(self, t, pl, pm, pr, norm, edge):
        self.times.append(t)
        self.p_l.append(pl)
        self.p_m.append(pm)
        self.p_r.append(pr)
        self.norm.append(norm)
        self.edge.append(edge)

    def __len__(self):
        return len(self.times)

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.times, self.p_l, self.p_m, self.p_r,
                                self.norm, self.edge])

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("t,p_l,p_m,p_r,norm,edge\n")
            for row in self.as_array():
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        tr = cls()
        for row in data:
            tr.append(*row)
        return tr

    def max_middle(self) -> float:
        return max(self.p_m)


def transfer_fidelity(trace: PopulationTrace) -> float:
    """Final population in the target (right) guide."""
    if len(trace) == 0:
        raise ValueError("empty population trace")
    return trace.p_r[-1]


@dataclass
class PopulationRecorder:
    """Observer recording populations, norm and edge mass at its stride."""

    partition: GuidePartition
    stride: int = 50
    margin_cells: int = 2
    trace: PopulationTrace = field(default_factory=PopulationTrace)

    def notify(self, step_index: int, psi: Wavefunction):
        pl, pm, pr = populations(psi, self.partition)
        self.trace.append(psi.time, pl, pm, pr, psi.norm(),
                          edge_density(psi, self.margin_cells))


@dataclass
class EdgeMonitor:
    """Observer aborting the evolution when boundary mass exceeds the
    threshold (default 1e-6)."""

    stride: int = 50
    margin_cells: int = 2
    threshold: float = 1e-6

    def notify(self, step_index: int, psi: Wavefunction):
        mass = edge_density(psi, self.margin_cells)
        if mass > self.threshold:
            raise EdgeDensityError(
                f"edge density {mass:.3e} exceeded threshold {self.threshold:.1e} "
                f"at step {step_index} (t = {psi.time:.6e} s); the box is too "
                f"small or the run too long for periodic boundaries")
