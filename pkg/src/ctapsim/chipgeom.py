"""Three-wire atom-chip geometry and wire discretization.

Wires lie in the chip plane y = 0 and run along z.  The middle wire is
straight; the outer wires carry a raised-cosine bump that brings them from
the initial separation d0 down to d_min at the bump center and back, with
exactly flat tails elsewhere:

    x(z) = +-[d0 - (d0 - d_min) * (1 + cos(pi (z - z_c)/w)) / 2],  |z - z_c| <= w

The two bump centers sit at z_max/2 -+ xi/2.  For the counter-intuitive
arrangement the *right* wire approaches first (smaller z), so an atom
travelling in +z sees the distal M-R coupling ramp before the L-M one.
Wires continue straight for z_pad beyond both ends of the simulation box to
suppress end effects.

All objects are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .constants import muB, species_mass


class Ordering(str, Enum):
    COUNTER_INTUITIVE = "counter_intuitive"
    INTUITIVE = "intuitive"


class WireId(str, Enum):
    LEFT = "left"
    MIDDLE = "middle"
    RIGHT = "right"


@dataclass(frozen=True)
class RaisedCosineCenterline:
    """x(z) with a compact-support raised-cosine excursion toward x = 0."""

    base: float        # flat-tail lateral position (signed), m
    depth: float       # excursion depth toward zero (>= 0), m
    center: float      # bump center, m
    half_width: float  # bump half support, m

    def __call__(self, z):
        z = np.asarray(z, float)
        u = (z - self.center) / self.half_width
        bump = np.where(np.abs(u) < 1.0, 0.5 * (1.0 + np.cos(np.pi * u)), 0.0)
        return self.base - np.sign(self.base) * self.depth * bump

    @property
    def curved_spans(self):
        return ((self.center - self.half_width, self.center + self.half_width),)


@dataclass(frozen=True)
class StraightCenterline:
    x: float = 0.0

    def __call__(self, z):
        return np.full_like(np.asarray(z, float), self.x)

    @property
    def curved_spans(self):
        return ()


@dataclass(frozen=True)
class WirePath:
    """A current-carrying planar curve, discretizable for field integration."""

    current: float          # A, flowing toward +z
    centerline: object      # callable z -> x(z), with .curved_spans
    z_lo: float             # m, includes padding
    z_hi: float             # m
    segment_length: float   # m

    def x_of_z(self, z):
        return self.centerline(z)


@dataclass(frozen=True)
class Segments:
    """Directed straight segments (a -> b) sharing one current."""

    a: np.ndarray  # (n, 3) start points, m
    b: np.ndarray  # (n, 3) end points, m
    current: float

    def __len__(self):
        return self.a.shape[0]


def _sample(wire: WirePath, z_lo: float, z_hi: float, seg_len: float) -> np.ndarray:
    n = max(1, int(round((z_hi - z_lo) / seg_len)))
    return np.linspace(z_lo, z_hi, n + 1)


def discretize(wire: WirePath) -> Segments:
    """Chop the wire into uniform segments of ~segment_length.

    Consecutive segments share endpoints; the polyline chord deviation from
    the analytic centerline is bounded by segment_length^2 / (8 R_min) with
    R_min the minimum curvature radius.
    """
    if wire.segment_length <= 0:
        raise ValueError("segment_length must be positive")
    z = _sample(wire, wire.z_lo, wire.z_hi, wire.segment_length)
    x = np.asarray(wire.x_of_z(z), float)
    pts = np.column_stack([x, np.zeros_like(z), z])
    return Segments(pts[:-1], pts[1:], wire.current)


def discretize_merged(wire: WirePath) -> Segments:
    """Like discretize() but with exactly-straight spans collapsed to single
    segments.  The summed field is identical (the finite-segment field is
    additive over collinear subdivisions); this just removes redundant work.
    """
    if wire.segment_length <= 0:
        raise ValueError("segment_length must be positive")
    spans = [s for s in wire.centerline.curved_spans
             if s[1] > wire.z_lo and s[0] < wire.z_hi]
    zs = [np.array([wire.z_lo])]
    cursor = wire.z_lo
    for lo, hi in sorted(spans):
        lo, hi = max(lo, wire.z_lo), min(hi, wire.z_hi)
        if lo > cursor:
            zs.append(np.array([lo]))
        zs.append(_sample(wire, lo, hi, wire.segment_length)[1:])
        cursor = hi
    if cursor < wire.z_hi:
        zs.append(np.array([wire.z_hi]))
    z = np.concatenate(zs)
    x = np.asarray(wire.x_of_z(z), float)
    pts = np.column_stack([x, np.zeros_like(z), z])
    return Segments(pts[:-1], pts[1:], wire.current)


@dataclass(frozen=True)
class ChipLayout:
    """Full experiment geometry: wires, fields, trap and species."""

    wires: dict                      # WireId -> WirePath
    d0: float                        # initial wire separation, m
    d_min: float                     # closest-approach separation, m
    straight_run: float              # delayed wire's straight section, m
    ordering: Ordering
    x_span: float                    # m
    y_span: float                    # m
    z_max: float                     # m
    b_bias: float                    # T, in plane, orthogonal to the wires
    bias_direction: tuple = (1.0, 0.0, 0.0)
    b_ioffe: float = 0.0             # T, along z
    omega_z: float = 0.0             # rad/s, longitudinal trap frequency
    mass: float = species_mass("li6")
    mu_eff: float = muB / 2          # J/T
    bump_half_width: float = 300e-6  # m
    xi: float = 50e-6                # longitudinal bump-center offset, m
    z_pad: float = 500e-6            # straight continuation beyond the box, m
    segment_length: float = 0.125e-6  # m

    def wire(self, wire_id) -> WirePath:
        return self.wires[WireId(wire_id)]

    def wire_positions_at(self, z: float) -> dict:
        return {wid: float(w.x_of_z(z)) for wid, w in self.wires.items()}


def _build_wires(d0, d_min, z_max, bump_half_width, xi, z_pad, segment_length,
                 i_left, i_middle, i_right, ordering):
    depth = d0 - d_min
    zc_first = z_max / 2 - xi / 2   # encountered first by an atom moving +z
    zc_second = z_max / 2 + xi / 2
    if ordering is Ordering.COUNTER_INTUITIVE:
        zc_right, zc_left = zc_first, zc_second
    else:
        zc_right, zc_left = zc_second, zc_first
    z_lo, z_hi = -z_pad, z_max + z_pad
    mk = lambda cl, cur: WirePath(cur, cl, z_lo, z_hi, segment_length)
    return {
        WireId.LEFT: mk(RaisedCosineCenterline(-d0, depth, zc_left, bump_half_width), i_left),
        WireId.MIDDLE: mk(StraightCenterline(0.0), i_middle),
        WireId.RIGHT: mk(RaisedCosineCenterline(+d0, depth, zc_right, bump_half_width), i_right),
    }


def make_layout(*, d0, d_min, z_max, x_span, y_span, straight_run,
                i_left, i_middle, i_right, b_bias, b_ioffe, omega_z,
                ordering=Ordering.COUNTER_INTUITIVE, mass=species_mass("li6"),
                mu_eff=muB / 2, bump_half_width=300e-6, xi=50e-6,
                z_pad=500e-6, segment_length=0.125e-6,
                bias_direction=(1.0, 0.0, 0.0)) -> ChipLayout:
    if not d_min < d0:
        raise ValueError("d_min must be smaller than d0")
    if not straight_run < z_max / 2:
        raise ValueError("straight_run must be below z_max/2")
    ordering = Ordering(ordering)
    wires = _build_wires(d0, d_min, z_max, bump_half_width, xi, z_pad,
                         segment_length, i_left, i_middle, i_right, ordering)
    return ChipLayout(wires=wires, d0=d0, d_min=d_min, straight_run=straight_run,
                      ordering=ordering, x_span=x_span, y_span=y_span, z_max=z_max,
                      b_bias=b_bias, bias_direction=tuple(bias_direction),
                      b_ioffe=b_ioffe, omega_z=omega_z, mass=mass, mu_eff=mu_eff,
                      bump_half_width=bump_half_width, xi=xi, z_pad=z_pad,
                      segment_length=segment_length)


def standard_layout(ordering=Ordering.COUNTER_INTUITIVE) -> ChipLayout:
    """The reference chip: 20 um x 1000 um footprint simulated up to 4 um
    above the surface, wires 7 um apart approaching to 4.3 um, 0.1 A outer /
    0.07 A middle currents, 140 G bias, 300 G longitudinal field, 5 Hz
    longitudinal trap, a lithium-6 atom."""
    return make_layout(
        d0=7e-6, d_min=4.3e-6, z_max=1000e-6, x_span=20e-6, y_span=4e-6,
        straight_run=50e-6, i_left=0.1, i_middle=0.07, i_right=0.1,
        b_bias=140e-4, b_ioffe=300e-4, omega_z=2 * np.pi * 5.0,
        ordering=ordering)


def wire_offset(layout: ChipLayout, wire_id, z: float) -> float:
    """Lateral centerline position of one wire at height-plane coordinate z."""
    if not 0.0 <= z <= layout.z_max:
        raise ValueError(f"z = {z} outside [0, {layout.z_max}]")
    try:
        wire = layout.wire(wire_id)
    except (KeyError, ValueError):
        raise ValueError(f"unknown wire id {wire_id!r}") from None
    return float(wire.x_of_z(z))


def with_middle_current(layout: ChipLayout, i_middle: float) -> ChipLayout:
    """Copy of the layout with the middle-wire current replaced."""
    wires = dict(layout.wires)
    wires[WireId.MIDDLE] = replace(wires[WireId.MIDDLE], current=i_middle)
    return replace(layout, wires=wires)
