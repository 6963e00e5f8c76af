"""Wire magnetic fields, trapping potential assembly and guide metadata.

Fields of straight current segments are evaluated with the exact closed-form
finite-segment solution (not midpoint quadrature), so subdividing a straight
run never changes the summed field and the only convergence parameter left is
the chord approximation of curved sections.

The trapping potential is

    V(r) = mu_eff * |B_wires(r) + B_bias + B_ioffe z^| + m omega_z^2 (z - z_max/2)^2 / 2

evaluated once on the full simulation grid and cached by the caller (all
currents are static).  Per-z-slice transverse minima are located on the grid
and refined sub-cell; they drive the guide bookkeeping downstream.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
from numba import njit, prange

from .chipgeom import ChipLayout, Segments, discretize_merged
from .constants import hbar, mu0
from .qgrid import SimGrid, write_snapshot

MU0_4PI = mu0 / (4.0 * np.pi)


class ProximityError(ValueError):
    """Field requested too close to a wire segment."""


class MinimumAbsentError(LookupError):
    """No distinct transverse minimum for the requested guide (merged wells)."""


def trap_height(current: float, bias: float) -> float:
    """Height of the field zero above a straight wire under a bias field:
    r0 = mu0 I / (2 pi B_b)."""
    if bias <= 0:
        raise ValueError("bias field must be positive")
    return mu0 * current / (2.0 * np.pi * bias)


def _segment_field(a, b, points):
    """Closed-form field of segments a->b (unit current) at points.

    With u the segment direction, t_i the projections of the end-to-point
    vectors on u and d_vec the perpendicular from the segment line,

        B = mu0 I/(4 pi) * (t1/|r1| - t2/|r2|) / |d_vec|^2 * (u x d_vec).

    Exact for any segment length and, unlike forms built on
    (|r1|+|r2|)^2 - L^2, free of catastrophic cancellation for points close
    to a long segment.  Singular only on the segment itself.
    """
    seg = b - a
    length = np.linalg.norm(seg, axis=-1)
    u = seg / length[:, None]
    r1 = points[:, None, :] - a[None, :, :]
    n1 = np.linalg.norm(r1, axis=-1)
    t1 = np.einsum("psi,si->ps", r1, u)
    t2 = t1 - length[None, :]
    n2 = np.sqrt(np.maximum(n1**2 - t1**2 + t2**2, 0.0))
    d_vec = r1 - t1[..., None] * u[None, :, :]
    d2 = np.sum(d_vec**2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (t1 / n1 - t2 / n2) / d2
    cross = np.cross(np.broadcast_to(u[None, :, :], d_vec.shape), d_vec)
    return MU0_4PI * np.einsum("ps,psi->pi", np.nan_to_num(w), cross)


def _point_segment_distance(a, b, points):
    ab = b - a
    L2 = np.sum(ab**2, axis=-1)[None, :]
    ap = points[:, None, :] - a[None, :, :]
    t = np.clip(np.sum(ap * ab[None, :, :], axis=-1) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    closest = a[None, :, :] + t[..., None] * ab[None, :, :]
    return np.linalg.norm(points[:, None, :] - closest, axis=-1)


def biot_savart(segments: Segments, points, min_distance: float | None = None) -> np.ndarray:
    """Magnetic field (T) of the discretized wire at one or more points.

    min_distance guards against evaluation near the polyline; by default each
    segment rejects points closer than its own length.  Pass an explicit
    value (possibly 0) to relax, e.g. for merged long segments.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    single = np.asarray(points).ndim == 1
    if min_distance is None:
        guard = np.linalg.norm(segments.b - segments.a, axis=-1)[None, :]
    else:
        guard = min_distance
    dist = _point_segment_distance(segments.a, segments.b, pts)
    if np.any(dist <= guard):
        raise ProximityError("field point within the proximity guard of a segment")
    field = segments.current * _segment_field(segments.a, segments.b, pts)
    return field[0] if single else field


@njit(parallel=True, cache=True)
def _potential_kernel(xs, ys, zs, seg_a, seg_b, seg_cur, b0x, b0y, b0z,
                      mu_eff, mass, omega_z, z_center, pref):
    nx, ny, nz = xs.size, ys.size, zs.size
    ns = seg_cur.size
    out = np.empty((nx, ny, nz))
    for iz in prange(nz):
        z = zs[iz]
        vz = 0.5 * mass * omega_z * omega_z * (z - z_center) * (z - z_center)
        for ix in range(nx):
            x = xs[ix]
            for iy in range(ny):
                y = ys[iy]
                bx, by, bz = b0x, b0y, b0z
                for s in range(ns):
                    r1x = x - seg_a[s, 0]
                    r1y = y - seg_a[s, 1]
                    r1z = z - seg_a[s, 2]
                    ex = seg_b[s, 0] - seg_a[s, 0]
                    ey = seg_b[s, 1] - seg_a[s, 1]
                    ez = seg_b[s, 2] - seg_a[s, 2]
                    length = np.sqrt(ex * ex + ey * ey + ez * ez)
                    ux, uy, uz = ex / length, ey / length, ez / length
                    t1 = r1x * ux + r1y * uy + r1z * uz
                    t2 = t1 - length
                    dx = r1x - t1 * ux
                    dy = r1y - t1 * uy
                    dz = r1z - t1 * uz
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 > 0.0:
                        n1 = np.sqrt(d2 + t1 * t1)
                        n2 = np.sqrt(d2 + t2 * t2)
                        w = pref * seg_cur[s] * (t1 / n1 - t2 / n2) / d2
                        bx += w * (uy * dz - uz * dy)
                        by += w * (uz * dx - ux * dz)
                        bz += w * (ux * dy - uy * dx)
                out[ix, iy, iz] = mu_eff * np.sqrt(bx * bx + by * by + bz * bz) + vz
    return out


@dataclass(frozen=True)
class SliceMinima:
    """Transverse minima of one z slice, sorted by x.  NaN-padded to 3."""

    x: np.ndarray       # (3,)
    y: np.ndarray       # (3,)
    value: np.ndarray   # (3,) J
    n_guides: int


@dataclass(frozen=True)
class PotentialGrid:
    values: np.ndarray              # (nx, ny, nz), J
    grid: SimGrid
    layout: ChipLayout
    minima: tuple                   # nz SliceMinima entries

    def slice_minima(self, iz: int) -> SliceMinima:
        return self.minima[iz]

    def guide_minimum(self, iz: int, guide_index: int):
        """(x, y, V) of guide 0/1/2 (left/middle/right, by x order) in slice
        iz.  Raises MinimumAbsentError when the requested minimum does not
        exist as a distinct well (merged guides)."""
        m = self.minima[iz]
        if guide_index >= max(m.n_guides, 0):
            raise MinimumAbsentError(
                f"slice {iz} has {m.n_guides} transverse minima (guides merged); "
                f"guide {guide_index} absent")
        return float(m.x[guide_index]), float(m.y[guide_index]), float(m.value[guide_index])


def _parabolic_offset(vm, v0, vp):
    den = vm - 2.0 * v0 + vp
    if den <= 0:
        return 0.0, 0.0
    delta = 0.5 * (vm - vp) / den
    dv = -0.125 * (vm - vp) ** 2 / den
    return delta, dv


def _find_slice_minima(v_slice: np.ndarray, xs, ys, max_minima=3) -> SliceMinima:
    v = v_slice
    interior = v[1:-1, 1:-1]
    is_min = ((interior < v[:-2, 1:-1]) & (interior <= v[2:, 1:-1]) &
              (interior < v[1:-1, :-2]) & (interior <= v[1:-1, 2:]))
    ii, jj = np.nonzero(is_min)
    ii, jj = ii + 1, jj + 1
    if ii.size > max_minima:
        order = np.argsort(v[ii, jj])[:max_minima]
        ii, jj = ii[order], jj[order]
    xloc = np.full(3, np.nan)
    yloc = np.full(3, np.nan)
    vloc = np.full(3, np.nan)
    order = np.argsort(xs[ii]) if ii.size else []
    dx = xs[1] - xs[0]
    dy = ys[1] - ys[0]
    for k, m in enumerate(order):
        i, j = ii[m], jj[m]
        ox, dvx = _parabolic_offset(v[i - 1, j], v[i, j], v[i + 1, j])
        oy, dvy = _parabolic_offset(v[i, j - 1], v[i, j], v[i, j + 1])
        xloc[k] = xs[i] + ox * dx
        yloc[k] = ys[j] + oy * dy
        vloc[k] = v[i, j] + dvx + dvy
    return SliceMinima(xloc, yloc, vloc, int(ii.size))


def layout_segments(layout: ChipLayout) -> list[Segments]:
    return [discretize_merged(w) for w in layout.wires.values()]


def assemble_potential(layout: ChipLayout, grid: SimGrid) -> PotentialGrid:
    """Evaluate the full trapping potential on the grid, with per-slice
    transverse minima metadata."""
    ys = grid.y
    if np.any(np.abs(ys) < 1e-9):
        raise ValueError("grid intersects the wire plane y = 0; offset the y origin")
    if (grid.origin[0] < -layout.x_span / 2 - 1e-12
            or grid.origin[0] + grid.extents[0] > layout.x_span / 2 + 1e-12
            or grid.origin[2] < -1e-12
            or grid.origin[2] + grid.extents[2] > layout.z_max + 1e-12):
        raise ValueError("grid extends beyond the layout extents")
    segs = layout_segments(layout)
    seg_a = np.concatenate([s.a for s in segs])
    seg_b = np.concatenate([s.b for s in segs])
    seg_cur = np.concatenate([np.full(len(s), s.current) for s in segs])
    e = np.asarray(layout.bias_direction, float)
    e = e / np.linalg.norm(e)
    b0 = layout.b_bias * e + np.array([0.0, 0.0, layout.b_ioffe])
    values = _potential_kernel(grid.x, ys, grid.z, seg_a, seg_b, seg_cur,
                               b0[0], b0[1], b0[2], layout.mu_eff, layout.mass,
                               layout.omega_z, layout.z_max / 2.0, MU0_4PI)
    minima = tuple(_find_slice_minima(values[:, :, iz], grid.x, ys)
                   for iz in range(grid.n[2]))
    return PotentialGrid(values=values, grid=grid, layout=layout, minima=minima)


def wire_field(layout: ChipLayout, points) -> np.ndarray:
    """Summed wire field (no bias, no longitudinal trap) at arbitrary points,
    through the same merged segmentation the potential kernel uses."""
    pts = np.atleast_2d(np.asarray(points, float))
    total = np.zeros_like(pts)
    for s in layout_segments(layout):
        total += biot_savart(s, pts, min_distance=0.0)
    return total[0] if np.asarray(points).ndim == 1 else total


@dataclass(frozen=True)
class TransverseSpectrum:
    omega_x: float   # rad/s
    omega_y: float
    v_min: float     # refined potential at the minimum, J (not in energies)
    energies: tuple  # lowest two harmonic-ladder energies, J


def transverse_spectrum(potential: PotentialGrid, z_index: int,
                        guide_index: int) -> TransverseSpectrum:
    """Harmonic estimate of the lowest two transverse energies of one guide.

    Curvatures come from second-order finite differences on 3-point stencils
    at the grid node nearest the refined minimum; energies are the oscillator
    ladder hbar (omega_x (n_x + 1/2) + omega_y (n_y + 1/2)), which is the
    guide-shape resonance measure; the well floor is reported separately as
    v_min.
    """
    x0, y0, vmin = potential.guide_minimum(z_index, guide_index)
    grid = potential.grid
    i = int(np.clip(np.argmin(np.abs(grid.x - x0)), 1, grid.n[0] - 2))
    j = int(np.clip(np.argmin(np.abs(grid.y - y0)), 1, grid.n[1] - 2))
    v = potential.values[:, :, z_index]
    dx, dy, _ = grid.spacing
    vxx = (v[i + 1, j] - 2 * v[i, j] + v[i - 1, j]) / dx**2
    vyy = (v[i, j + 1] - 2 * v[i, j] + v[i, j - 1]) / dy**2
    if vxx <= 0 or vyy <= 0:
        raise MinimumAbsentError(f"non-positive curvature at slice {z_index}, guide {guide_index}")
    m = potential.layout.mass
    wx, wy = np.sqrt(vxx / m), np.sqrt(vyy / m)
    e0 = hbar * (wx / 2 + wy / 2)
    e1 = hbar * (1.5 * min(wx, wy) + 0.5 * max(wx, wy))
    return TransverseSpectrum(float(wx), float(wy), float(vmin), (float(e0), float(e1)))


def export_potential(potential: PotentialGrid, path):
    """Binary dump in the grid-snapshot container (real payload)."""
    write_snapshot(path, potential.values, potential.grid, time=0.0)


def export_minima_csv(potential: PotentialGrid, path):
    zs = potential.grid.z
    with open(path, "w") as fh:
        fh.write("z,x_L,y_L,V_L,x_M,y_M,V_M,x_R,y_R,V_R,n_guides\n")
        for iz, m in enumerate(potential.minima):
            cells = []
            for k in range(3):
                cells += [m.x[k], m.y[k], m.value[k]]
            fh.write(format(zs[iz], ".17g") + ","
                     + ",".join(format(c, ".17g") for c in cells)
                     + f",{m.n_guides}\n")
