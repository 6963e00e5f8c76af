"""Position/momentum grids, unit system and wavefunction container.

Array layout contract: a field on the grid is a C-ordered complex array of
shape (n_x, n_y, n_z), i.e. flat index = (i_x * n_y + i_y) * n_z + i_z with
z fastest.  Axis samples are origin + i * spacing with spacing = span / n,
so the momentum grids are the standard FFT frequency sets scaled by 2*pi/L
and |k|_max = pi * n / L along each axis.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .constants import hbar

MAGIC = b"QWF1"
FORMAT_VERSION = 1
PAYLOAD_COMPLEX = 0
PAYLOAD_REAL = 1


@dataclass(frozen=True)
class UnitSystem:
    """Internal unit system: pick a length and a mass, time and energy follow.

    With t0 = m0 * L0**2 / hbar and e0 = hbar**2 / (m0 * L0**2), Planck's
    constant is exactly 1 in internal units.  All public interfaces stay SI;
    conversion happens where quantities enter a kernel.
    """

    length: float  # m
    mass: float    # kg

    @property
    def time(self) -> float:
        return self.mass * self.length**2 / hbar

    @property
    def energy(self) -> float:
        return hbar**2 / (self.mass * self.length**2)

    @property
    def wavenumber(self) -> float:
        return 1.0 / self.length

    def to_internal(self, value, unit: float):
        return np.asarray(value) / unit

    def from_internal(self, value, unit: float):
        return np.asarray(value) * unit


def li6_units() -> UnitSystem:
    from .constants import species_mass

    return UnitSystem(length=1e-6, mass=species_mass("li6"))


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SimGrid:
    """Uniform 3D grid with periodic (spectral) boundary conditions."""

    n: tuple[int, int, int]           # (n_x, n_y, n_z)
    extents: tuple[float, float, float]  # (x_span, y_span, z_max), m
    origin: tuple[float, float, float]   # m

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(L / n for L, n in zip(self.extents, self.n))

    @property
    def dvol(self) -> float:
        dx, dy, dz = self.spacing
        return dx * dy * dz

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + np.arange(self.n[i]) * self.spacing[i]

    @property
    def x(self) -> np.ndarray:
        return self.axis(0)

    @property
    def y(self) -> np.ndarray:
        return self.axis(1)

    @property
    def z(self) -> np.ndarray:
        return self.axis(2)

    def k_axis(self, i: int) -> np.ndarray:
        """FFT-ordered angular wavenumbers (rad/m) along axis i."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n[i], d=self.spacing[i])

    @property
    def kx(self) -> np.ndarray:
        return self.k_axis(0)

    @property
    def ky(self) -> np.ndarray:
        return self.k_axis(1)

    @property
    def kz(self) -> np.ndarray:
        return self.k_axis(2)

    def k_squared(self) -> np.ndarray:
        """|k|^2 on the full grid, shape (n_x, n_y, n_z)."""
        kx, ky, kz = self.kx, self.ky, self.kz
        return (kx[:, None, None] ** 2 + ky[None, :, None] ** 2 + kz[None, None, :] ** 2)

    def meshgrid(self):
        return np.meshgrid(self.x, self.y, self.z, indexing="ij")


def make_grid(n_x: int, n_y: int, n_z: int,
              extents: tuple[float, float, float],
              origin: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> SimGrid:
    """Build a SimGrid.  Point counts must be powers of two >= 8 (FFT plan
    contract); extents must be positive."""
    for n in (n_x, n_y, n_z):
        if n < 8 or not _is_pow2(n):
            raise ValueError(f"grid counts must be powers of two >= 8, got {n}")
    if any(L <= 0 for L in extents):
        raise ValueError(f"extents must be positive, got {extents}")
    return SimGrid(n=(n_x, n_y, n_z), extents=tuple(float(L) for L in extents),
                   origin=tuple(float(o) for o in origin))


@dataclass
class Wavefunction:
    """Complex amplitude field on a SimGrid with a physical time stamp."""

    amplitudes: np.ndarray
    grid: SimGrid
    time: float = 0.0
    _norm_cache: float | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.amplitudes.shape != self.grid.n:
            raise ValueError(f"amplitude shape {self.amplitudes.shape} != grid {self.grid.n}")

    def norm(self) -> float:
        """Discrete ∫|psi|^2 dV."""
        if self._norm_cache is None:
            self._norm_cache = float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dvol)
        return self._norm_cache

    def invalidate_norm(self):
        self._norm_cache = None

    def normalize(self) -> "Wavefunction":
        self.amplitudes /= np.sqrt(self.norm())
        self._norm_cache = 1.0
        return self

    def copy(self) -> "Wavefunction":
        return Wavefunction(self.amplitudes.copy(), self.grid, self.time)

    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def gaussian_packet(grid: SimGrid, center, widths, momentum=(0.0, 0.0, 0.0)) -> Wavefunction:
    """Normalized Gaussian wavepacket exp(-(r-c)^2/(2 w^2) + i k0.r).

    widths are the amplitude Gaussian widths per axis; the packet must sit at
    least 6 widths from every grid boundary.
    """
    center = np.asarray(center, float)
    widths = np.asarray(widths, float)
    momentum = np.asarray(momentum, float)
    if np.any(widths <= 0):
        raise ValueError("widths must be positive")
    for i in range(3):
        lo = grid.origin[i]
        hi = grid.origin[i] + grid.extents[i]
        if center[i] - 6 * widths[i] < lo or center[i] + 6 * widths[i] > hi:
            raise ValueError(
                f"packet too close to boundary along axis {i}: "
                f"center {center[i]:.3e}, width {widths[i]:.3e}, box [{lo:.3e}, {hi:.3e}]")
    x, y, z = grid.x, grid.y, grid.z
    # amplitude ~ exp(-(q-c)^2 / (2 w^2)), separable in the three axes
    fx = np.exp(-((x - center[0]) ** 2) / (2 * widths[0] ** 2) + 1j * momentum[0] * x)
    fy = np.exp(-((y - center[1]) ** 2) / (2 * widths[1] ** 2) + 1j * momentum[1] * y)
    fz = np.exp(-((z - center[2]) ** 2) / (2 * widths[2] ** 2) + 1j * momentum[2] * z)
    amp = fx[:, None, None] * fy[None, :, None] * fz[None, None, :]
    psi = Wavefunction(amp.astype(np.complex128), grid)
    return psi.normalize()


def overlap(a: Wavefunction, b: Wavefunction) -> complex:
    """Discrete inner product <a|b> with the grid volume element."""
    if a.grid != b.grid:
        raise ValueError("overlap requires wavefunctions on the same grid")
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.dvol)


def expectation_position(psi: Wavefunction) -> np.ndarray:
    """<r> per axis."""
    rho = psi.density()
    w = rho.sum()
    xs = psi.grid.x, psi.grid.y, psi.grid.z
    sums = (rho.sum(axis=(1, 2)), rho.sum(axis=(0, 2)), rho.sum(axis=(0, 1)))
    return np.array([float(np.dot(s, ax)) / w for s, ax in zip(sums, xs)])


def expectation_momentum(psi: Wavefunction) -> np.ndarray:
    """<p> per axis (kg m/s), via the momentum-space density."""
    phi = np.fft.fftn(psi.amplitudes)
    rho_k = np.abs(phi) ** 2
    w = rho_k.sum()
    ks = psi.grid.kx, psi.grid.ky, psi.grid.kz
    sums = (rho_k.sum(axis=(1, 2)), rho_k.sum(axis=(0, 2)), rho_k.sum(axis=(0, 1)))
    return np.array([hbar * float(np.dot(s, k)) / w for s, k in zip(sums, ks)])


# ---------------------------------------------------------------------------
# Binary grid-snapshot container
#
# magic 'QWF1' | u32 version | u32 payload flag (0 complex, 1 real)
# | u64 n_x n_y n_z | f64 x0 dx y0 dy z0 dz time | payload (little-endian f64,
# complex interleaved re,im), C order with z fastest.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<II QQQ ddddddd")


def write_snapshot(path, array: np.ndarray, grid: SimGrid, time: float = 0.0):
    """Write a real or complex field on `grid` to the binary container."""
    if array.shape != grid.n:
        raise ValueError(f"array shape {array.shape} != grid {grid.n}")
    if np.iscomplexobj(array):
        flag = PAYLOAD_COMPLEX
        payload = np.ascontiguousarray(array, dtype="<c16")
    else:
        flag = PAYLOAD_REAL
        payload = np.ascontiguousarray(array, dtype="<f8")
    dx, dy, dz = grid.spacing
    x0, y0, z0 = grid.origin
    header = MAGIC + _HEADER.pack(FORMAT_VERSION, flag, *grid.n,
                                  x0, dx, y0, dy, z0, dz, time)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def read_snapshot(path):
    """Read a container written by write_snapshot.

    Returns (array, grid, time); array dtype matches the payload flag.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, flag, nx, ny, nz, x0, dx, y0, dy, z0, dz, time = _HEADER.unpack(
            fh.read(_HEADER.size))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported format version {version}")
        count = nx * ny * nz
        dtype = "<c16" if flag == PAYLOAD_COMPLEX else "<f8"
        payload = np.frombuffer(fh.read(), dtype=dtype, count=count)
    grid = SimGrid(n=(nx, ny, nz),
                   extents=(nx * dx, ny * dy, nz * dz),
                   origin=(x0, y0, z0))
    return payload.reshape(nx, ny, nz).copy(), grid, time
