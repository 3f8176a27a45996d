"""Periodic cubic lattice, 4-spinor and scalar fields, transforms, Sobolev norms.

Conventions (natural units, hbar = c = electron mass = 1):

* position grid ``x_j = j*h`` with ``h = L/n``, indices in C order (x-major);
* frequency set ``xi = (2*pi/L) * m`` with integer ``m in {-n/2, ..., n/2-1}``
  per axis, laid out in FFT order;
* forward transform ``uhat(xi) = h^3 * sum_x u(x) exp(-i xi.x)`` and inverse
  ``u(x) = L^-3 * sum_xi uhat(xi) exp(+i xi.x)``, so that ``d_j -> i xi_j``
  and Parseval is exact on the discrete torus:
  ``h^3 sum |u|^2 = L^-3 sum |uhat|^2``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

N_COMPONENTS = 4

CHECKPOINT_MAGIC = b"DNS1"
CHECKPOINT_VERSION = 1

POSITION = "position"
MOMENTUM = "momentum"


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic cube: ``n`` points per axis, side length ``box_length``."""

    n: int
    box_length: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not _is_power_of_two(int(self.n)) or self.n < 8:
            raise ValueError(f"grid size must be a power of two >= 8, got n={self.n}")
        if not np.isfinite(self.box_length) or self.box_length <= 0:
            raise ValueError(f"box length must be positive, got L={self.box_length}")

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def volume(self) -> float:
        return self.box_length**3

    @cached_property
    def coords1d(self) -> np.ndarray:
        """Raw grid coordinates ``j*h`` along one axis."""
        return np.arange(self.n) * self.spacing

    @cached_property
    def freq1d(self) -> np.ndarray:
        """Angular frequencies ``(2*pi/L)*m`` in FFT layout."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    @cached_property
    def freq_mesh(self) -> tuple:
        return tuple(np.meshgrid(self.freq1d, self.freq1d, self.freq1d, indexing="ij"))

    @cached_property
    def freq_sq(self) -> np.ndarray:
        kx, ky, kz = self.freq_mesh
        return kx * kx + ky * ky + kz * kz

    @cached_property
    def mode_energy(self) -> np.ndarray:
        """Relativistic dispersion ``sqrt(1 + |xi|^2)`` per mode."""
        return np.sqrt(1.0 + self.freq_sq)

    def wrap(self, values) -> np.ndarray:
        """Map displacements into the minimum-image window [-L/2, L/2)."""
        L = self.box_length
        return (np.asarray(values, dtype=float) + 0.5 * L) % L - 0.5 * L

    def displacement_mesh(self, point) -> tuple:
        """Minimum-image displacement (x - point) per axis, broadcastable to (n,n,n)."""
        p = np.asarray(point, dtype=float)
        dx = self.wrap(self.coords1d - p[0])[:, None, None]
        dy = self.wrap(self.coords1d - p[1])[None, :, None]
        dz = self.wrap(self.coords1d - p[2])[None, None, :]
        return dx, dy, dz

    def radius_sq_from(self, point) -> np.ndarray:
        dx, dy, dz = self.displacement_mesh(point)
        return dx * dx + dy * dy + dz * dz

    def radius_from(self, point) -> np.ndarray:
        return np.sqrt(self.radius_sq_from(point))


def make_grid(n: int, box_length: float) -> GridSpec:
    """Build a grid, rejecting non-power-of-two ``n`` and nonpositive ``box_length``."""
    return GridSpec(int(n), float(box_length))


@dataclass
class SpinorField:
    """4-component complex field on a :class:`GridSpec`, in position or momentum space."""

    grid: GridSpec
    data: np.ndarray
    space: str = POSITION

    def __post_init__(self):
        expected = (self.grid.n, self.grid.n, self.grid.n, N_COMPONENTS)
        if self.data.shape != expected:
            raise ValueError(f"spinor data shape {self.data.shape} != {expected}")
        if self.data.dtype != np.complex128:
            self.data = self.data.astype(np.complex128)
        if self.space not in (POSITION, MOMENTUM):
            raise ValueError(f"unknown space tag {self.space!r}")

    def copy(self) -> "SpinorField":
        return SpinorField(self.grid, self.data.copy(), self.space)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data.view(np.float64))))


@dataclass
class ScalarField:
    """Real scalar field on a :class:`GridSpec` (potentials, densities)."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        expected = (self.grid.n, self.grid.n, self.grid.n)
        if self.data.shape != expected:
            raise ValueError(f"scalar data shape {self.data.shape} != {expected}")
        if self.data.dtype != np.float64:
            self.data = self.data.astype(np.float64)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))


# ---------------------------------------------------------------------------
# constructors


def zero_spinor(grid: GridSpec, space: str = POSITION) -> SpinorField:
    return SpinorField(grid, np.zeros((grid.n, grid.n, grid.n, N_COMPONENTS), dtype=np.complex128), space)


def constant_spinor(grid: GridSpec, weights) -> SpinorField:
    w = np.asarray(weights, dtype=np.complex128)
    data = np.broadcast_to(w, (grid.n, grid.n, grid.n, N_COMPONENTS)).copy()
    return SpinorField(grid, data, POSITION)


def plane_wave(grid: GridSpec, mode, weights) -> SpinorField:
    """``exp(i xi.x) w`` for an integer mode triple (xi = (2*pi/L)*mode)."""
    m = np.asarray(mode, dtype=int)
    xi = 2.0 * np.pi / grid.box_length * m
    c = grid.coords1d
    phase = (
        np.exp(1j * xi[0] * c)[:, None, None]
        * np.exp(1j * xi[1] * c)[None, :, None]
        * np.exp(1j * xi[2] * c)[None, None, :]
    )
    w = np.asarray(weights, dtype=np.complex128)
    return SpinorField(grid, phase[..., None] * w, POSITION)


def gaussian_spinor(grid: GridSpec, center, width: float, weights) -> SpinorField:
    """``exp(-|x-center|^2 / (2 width^2)) w`` with minimum-image distances."""
    r2 = grid.radius_sq_from(center)
    env = np.exp(-r2 / (2.0 * width**2))
    w = np.asarray(weights, dtype=np.complex128)
    return SpinorField(grid, env[..., None] * w, POSITION)


def random_smooth_field(grid: GridSpec, rng, kmax: int = 5, decay: float = 1.0,
                        amplitude: float = 1.0) -> SpinorField:
    """Seeded band-limited random field, resolution independent.

    Modes with ``max|m_i| <= kmax`` receive Gaussian coefficients drawn in a
    fixed (grid-independent) order, damped by ``exp(-|xi|^2 decay^2 / 2)``.
    The same seed therefore produces the same continuum field on any grid
    with ``n/2 > kmax``, which makes refinement studies meaningful.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    n = grid.n
    if kmax >= n // 2:
        raise ValueError("kmax must be below the Nyquist index n/2")
    uhat = np.zeros((n, n, n, N_COMPONENTS), dtype=np.complex128)
    scale = 2.0 * np.pi / grid.box_length
    for mx in range(-kmax, kmax + 1):
        for my in range(-kmax, kmax + 1):
            for mz in range(-kmax, kmax + 1):
                coeff = rng.normal(size=N_COMPONENTS) + 1j * rng.normal(size=N_COMPONENTS)
                xi2 = scale**2 * (mx * mx + my * my + mz * mz)
                damp = np.exp(-0.5 * xi2 * decay**2)
                uhat[mx % n, my % n, mz % n] = coeff * damp
    uhat *= amplitude * grid.volume / (2 * kmax + 1) ** 1.5
    return to_position(SpinorField(grid, uhat, MOMENTUM))


# ---------------------------------------------------------------------------
# transforms and norms


def to_momentum(u: SpinorField) -> SpinorField:
    if u.space != POSITION:
        raise ValueError("to_momentum expects a position-space field")
    data = np.fft.fftn(u.data, axes=(0, 1, 2)) * u.grid.spacing**3
    return SpinorField(u.grid, data, MOMENTUM)


def to_position(u: SpinorField) -> SpinorField:
    if u.space != MOMENTUM:
        raise ValueError("to_position expects a momentum-space field")
    data = np.fft.ifftn(u.data, axes=(0, 1, 2)) / u.grid.spacing**3
    return SpinorField(u.grid, data, POSITION)


def as_position(u: SpinorField) -> SpinorField:
    return u if u.space == POSITION else to_position(u)


def as_momentum(u: SpinorField) -> SpinorField:
    return u if u.space == MOMENTUM else to_momentum(u)


def density(u: SpinorField) -> np.ndarray:
    """Pointwise C^4 density <u,u> on the position grid."""
    up = as_position(u)
    return np.sum(np.abs(up.data) ** 2, axis=-1)


def charge(u: SpinorField) -> float:
    """Total charge ``h^3 sum <u,u>`` (computable in either space)."""
    if u.space == POSITION:
        return float(u.grid.spacing**3 * np.sum(np.abs(u.data) ** 2))
    return float(np.sum(np.abs(u.data) ** 2) / u.grid.volume)


def inner(u: SpinorField, v: SpinorField) -> complex:
    """L^2 inner product, conjugate-linear in the first argument."""
    if u.space != v.space:
        v = to_momentum(v) if u.space == MOMENTUM else to_position(v)
    w = np.vdot(u.data, v.data)
    if u.space == POSITION:
        return complex(w * u.grid.spacing**3)
    return complex(w / u.grid.volume)


def l2_norm(u: SpinorField) -> float:
    return np.sqrt(charge(u))


def l2_distance(u: SpinorField, v: SpinorField) -> float:
    if u.space != v.space:
        v = to_momentum(v) if u.space == MOMENTUM else to_position(v)
    diff = u.data - v.data
    if u.space == POSITION:
        return float(np.sqrt(u.grid.spacing**3 * np.sum(np.abs(diff) ** 2)))
    return float(np.sqrt(np.sum(np.abs(diff) ** 2) / u.grid.volume))


def sobolev_norm(u: SpinorField, sigma: float) -> float:
    """Inhomogeneous Sobolev norm with multiplier ``(1+|xi|^2)^(sigma/2)``.

    ``sigma`` must lie in [0, 2]; ``sobolev_norm(u, 0)`` equals ``sqrt(charge(u))``.
    """
    if not 0.0 <= sigma <= 2.0:
        raise ValueError(f"sigma must lie in [0, 2], got {sigma}")
    um = as_momentum(u)
    weight = (1.0 + um.grid.freq_sq) ** sigma
    total = np.sum(weight[..., None] * np.abs(um.data) ** 2)
    return float(np.sqrt(total / um.grid.volume))


def homogeneous_sobolev_norm(u: SpinorField, sigma: float) -> float:
    """Homogeneous norm with multiplier ``|xi|^sigma``; the xi=0 mode is dropped."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    um = as_momentum(u)
    k2 = um.grid.freq_sq
    weight = np.where(k2 > 0.0, k2, 1.0) ** sigma
    weight = np.where(k2 > 0.0, weight, 0.0)
    total = np.sum(weight[..., None] * np.abs(um.data) ** 2)
    return float(np.sqrt(total / um.grid.volume))


def translate(u: SpinorField, shift) -> SpinorField:
    """Exact spectral translation: returns v with ``v(x) = u(x + shift)``."""
    um = as_momentum(u)
    kx, ky, kz = um.grid.freq_mesh
    s = np.asarray(shift, dtype=float)
    phase = np.exp(1j * (kx * s[0] + ky * s[1] + kz * s[2]))
    out = SpinorField(um.grid, phase[..., None] * um.data, MOMENTUM)
    return to_position(out) if u.space == POSITION else out


def spectral_upsample(u: SpinorField, factor: int = 2) -> SpinorField:
    """Zero-padded Fourier interpolation onto a ``factor*n`` grid (exact)."""
    um = as_momentum(u)
    n = um.grid.n
    n2 = n * factor
    fine = GridSpec(n2, um.grid.box_length)
    out = np.zeros((n2, n2, n2, N_COMPONENTS), dtype=np.complex128)
    idx = np.fft.fftfreq(n, 1.0 / n).astype(int)  # integer modes in FFT order
    ix = idx % n2
    out[np.ix_(ix, ix, ix)] = um.data
    return to_position(SpinorField(fine, out, MOMENTUM))


# ---------------------------------------------------------------------------
# binary checkpoint ("DNS1")
#
# layout: magic "DNS1" | u32 version | u32 n | f64 L | f64 t | u32 n_nuclei |
#         per nucleus (Z, m, qx, qy, qz, vx, vy, vz) as f64 |
#         n^3 x 4 complex entries as little-endian (re, im) f64 pairs,
#         x-major, component-minor order.


def write_checkpoint(path, u: SpinorField, t: float, charges=(), masses=(),
                     positions=(), velocities=()) -> None:
    up = as_position(u)
    if not up.is_finite():
        raise ValueError("refusing to checkpoint non-finite field data")
    charges = np.atleast_1d(np.asarray(charges, dtype=float))
    masses = np.atleast_1d(np.asarray(masses, dtype=float))
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    velocities = np.asarray(velocities, dtype=float).reshape(-1, 3)
    n_nuc = len(charges)
    if not (len(masses) == n_nuc and len(positions) == n_nuc and len(velocities) == n_nuc):
        raise ValueError("inconsistent nucleus record lengths")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, up.grid.n))
        fh.write(struct.pack("<ddI", up.grid.box_length, float(t), n_nuc))
        for k in range(n_nuc):
            fh.write(struct.pack("<8d", charges[k], masses[k], *positions[k], *velocities[k]))
        fh.write(np.ascontiguousarray(up.data, dtype="<c16").tobytes())


def read_checkpoint(path):
    """Read a "DNS1" checkpoint; returns (field, t, charges, masses, positions, velocities)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        version, n = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        box_length, t, n_nuc = struct.unpack("<ddI", fh.read(20))
        recs = np.frombuffer(fh.read(8 * 8 * n_nuc), dtype="<f8").reshape(n_nuc, 8)
        raw = np.frombuffer(fh.read(16 * n**3 * N_COMPONENTS), dtype="<c16")
    grid = GridSpec(int(n), float(box_length))
    data = raw.reshape(n, n, n, N_COMPONENTS).astype(np.complex128)
    field = SpinorField(grid, data, POSITION)
    if not field.is_finite():
        raise ValueError("checkpoint contains non-finite field data")
    charges = recs[:, 0].copy()
    masses = recs[:, 1].copy()
    positions = recs[:, 2:5].copy()
    velocities = recs[:, 5:8].copy()
    return field, float(t), charges, masses, positions, velocities
