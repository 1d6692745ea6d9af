"""Periodic-box spectral fields.

Coefficients are stored on the real-to-complex half spectrum with the
``norm="forward"`` convention, so a field is ``u(x) = sum_k u_hat(k) e^{ik.x}``
and the L2 norm over the box is ``L**3 * sum_k |u_hat(k)|**2`` over the full
spectrum.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, GridMismatchError, NumericError

__all__ = [
    "Grid",
    "SpectralField",
    "StrainField",
    "fft",
    "ifft",
    "sym_gradient",
    "velocity_gradient",
    "strain_derivative",
    "leray_project",
    "dealias",
    "divergence_ratio",
    "resample",
    "sobolev_norm",
    "taylor_green",
    "random_solenoidal",
    "write_checkpoint",
    "read_checkpoint",
]

_AXES = (-3, -2, -1)


def _workers() -> int:
    env = os.environ.get("NNF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass(frozen=True)
class Grid:
    """Uniform ``n**3`` grid on the periodic box ``[0, box_length)**3``."""

    n: int
    box_length: float = 2 * np.pi

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise DomainError(f"grid size must be an even integer >= 8, got {self.n!r}")
        if not self.box_length > 0:
            raise DomainError("box_length must be positive")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "box_length", float(self.box_length))

    @property
    def dx(self) -> float:
        return self.box_length / self.n

    @property
    def volume(self) -> float:
        return self.box_length**3

    @property
    def spectral_shape(self):
        return (self.n, self.n, self.n // 2 + 1)

    @cached_property
    def index(self):
        """Integer wavenumber indices broadcastable to the half spectrum."""
        n = self.n
        kx = np.fft.fftfreq(n, 1.0 / n)
        kz = np.fft.rfftfreq(n, 1.0 / n)
        return (kx[:, None, None], kx[None, :, None], kz[None, None, :])

    @cached_property
    def k(self):
        """Physical wavenumbers ``2 pi/L * index`` (Nyquist kept)."""
        scale = 2 * np.pi / self.box_length
        return tuple(scale * ki for ki in self.index)

    @cached_property
    def k_deriv(self):
        """Wavenumbers for odd derivatives; the unpaired Nyquist mode is zeroed."""
        out = []
        for ki, idx in zip(self.k, self.index):
            out.append(np.where(np.abs(idx) == self.n // 2, 0.0, ki))
        return tuple(out)

    @cached_property
    def k2(self):
        kx, ky, kz = self.k
        return kx**2 + ky**2 + kz**2

    @cached_property
    def half_weights(self):
        """Multiplicity of each stored mode in the full spectrum."""
        n = self.n
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., n // 2] = 1.0
        return w

    @cached_property
    def dealias_mask(self):
        ix, iy, iz = self.index
        cut = self.n / 3.0
        return (np.abs(ix) <= cut) & (np.abs(iy) <= cut) & (np.abs(iz) <= cut)

    def coordinates(self):
        x = np.arange(self.n) * self.dx
        return np.meshgrid(x, x, x, indexing="ij")


def fft(values: np.ndarray) -> np.ndarray:
    """Physical values (..., n, n, n) to normalised half-spectrum coefficients."""
    return sfft.rfftn(values, axes=_AXES, norm="forward", workers=_workers())


def ifft(coeffs: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfftn(coeffs, s=(n, n, n), axes=_AXES, norm="forward", workers=_workers())


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real vector or tensor field.

    ``coeffs`` has shape ``(ncomp, n, n, n//2+1)`` and is made read-only.
    """

    grid: Grid
    coeffs: np.ndarray
    solenoidal: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == 3:
            c = c[None]
        if c.shape[1:] != self.grid.spectral_shape:
            raise GridMismatchError(
                f"coefficient shape {c.shape[1:]} does not match grid {self.grid.spectral_shape}"
            )
        if c is self.coeffs and c.flags.writeable:
            c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_physical(cls, grid: Grid, values, solenoidal: bool = False) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        if values.ndim == 3:
            values = values[None]
        return cls(grid, fft(values), solenoidal)

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int = 3) -> "SpectralField":
        return cls(grid, np.zeros((ncomp,) + grid.spectral_shape, complex), True)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    def to_physical(self) -> np.ndarray:
        return ifft(self.coeffs, self.grid.n)

    def with_coeffs(self, coeffs, solenoidal=None) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.solenoidal if solenoidal is None else solenoidal)

    def _check_same_grid(self, other):
        if other.grid != self.grid or other.ncomp != self.ncomp:
            raise GridMismatchError("fields live on different grids or have different ranks")

    def __add__(self, other):
        self._check_same_grid(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs, self.solenoidal and other.solenoidal)

    def __sub__(self, other):
        self._check_same_grid(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs, self.solenoidal and other.solenoidal)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * float(scalar), self.solenoidal)

    __rmul__ = __mul__

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))


@dataclass(frozen=True, eq=False)
class StrainField:
    """Symmetric strain rate ``Du`` on the physical grid, shape ``(3, 3, n, n, n)``."""

    grid: Grid
    D: np.ndarray

    @cached_property
    def mag2(self) -> np.ndarray:
        """Pointwise ``|Du|^2 = Du : Du``."""
        return np.einsum("ij...,ij...->...", self.D, self.D)

    def trace(self) -> np.ndarray:
        return self.D[0, 0] + self.D[1, 1] + self.D[2, 2]


_SYM_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def _sym_from_pairs(values: np.ndarray) -> np.ndarray:
    """Expand six stacked components (xx, yy, zz, xy, xz, yz) to a 3x3 array."""
    out = np.empty((3, 3) + values.shape[1:], dtype=values.dtype)
    for c, (i, j) in enumerate(_SYM_PAIRS):
        out[i, j] = values[c]
        out[j, i] = values[c]
    return out


def _strain_hat(u: SpectralField, dirs=()) -> np.ndarray:
    """Six spectral components of ``d_dirs Du``."""
    kd = u.grid.k_deriv
    mult = 1.0
    for d in dirs:
        mult = mult * (1j * kd[d])
    uh = u.coeffs
    comps = np.empty((6,) + u.grid.spectral_shape, complex)
    for c, (i, j) in enumerate(_SYM_PAIRS):
        comps[c] = 0.5j * (kd[j] * uh[i] + kd[i] * uh[j]) * mult
    return comps


def sym_gradient(u: SpectralField) -> StrainField:
    """``Du = (grad u + grad u^T)/2`` evaluated on the physical grid."""
    if u.ncomp != 3:
        raise DomainError("sym_gradient needs a 3-component velocity field")
    return StrainField(u.grid, _sym_from_pairs(ifft(_strain_hat(u), u.grid.n)))


def strain_derivative(u: SpectralField, dirs) -> np.ndarray:
    """Physical ``d_{dirs[0]} ... d_{dirs[-1]} Du`` as a (3, 3, n, n, n) array."""
    return _sym_from_pairs(ifft(_strain_hat(u, tuple(dirs)), u.grid.n))


def velocity_gradient(u: SpectralField) -> np.ndarray:
    """Physical ``G[i, j] = d_j u_i`` as a (3, 3, n, n, n) array."""
    kd = u.grid.k_deriv
    hat = np.stack([np.stack([1j * kd[j] * u.coeffs[i] for j in range(3)]) for i in range(3)])
    return ifft(hat, u.grid.n)


def leray_project(v: SpectralField) -> SpectralField:
    """Remove the gradient part: ``v_hat - k (k . v_hat)/|k|^2``; ``k = 0`` untouched."""
    g = v.grid
    k = g.k
    k2 = np.where(g.k2 == 0, 1.0, g.k2)
    vh = v.coeffs
    kdotv = (k[0] * vh[0] + k[1] * vh[1] + k[2] * vh[2]) / k2
    out = np.stack([vh[i] - k[i] * kdotv for i in range(3)])
    return SpectralField(g, out, solenoidal=True)


def dealias(v: SpectralField) -> SpectralField:
    """2/3 rule: zero every mode with some ``|k_i| > n/3``."""
    return v.with_coeffs(v.coeffs * v.grid.dealias_mask)


def divergence_ratio(v: SpectralField) -> float:
    """``max_k |k . v_hat| / max |v_hat|`` (0 for the zero field)."""
    k = v.grid.k
    vh = v.coeffs
    vmax = np.max(np.abs(vh))
    if vmax == 0:
        return 0.0
    return float(np.max(np.abs(k[0] * vh[0] + k[1] * vh[1] + k[2] * vh[2])) / vmax)


def resample(v: SpectralField, grid: Grid) -> SpectralField:
    """Spectral interpolation of ``v`` onto another resolution of the same box.

    Modes with ``|k_i| < min(n_old, n_new)/2`` are carried over; Nyquist
    modes are dropped, so a band-limited field is reproduced exactly.
    """
    if grid.box_length != v.grid.box_length:
        raise GridMismatchError("resample: box lengths differ")
    m = min(grid.n, v.grid.n) // 2
    keep = np.r_[0:m, -m + 1:0]  # signed wavenumbers |k| < m
    out = np.zeros((v.ncomp,) + grid.spectral_shape, dtype=complex)
    src = np.ix_(keep % v.grid.n, keep % v.grid.n, np.arange(m))
    dst = np.ix_(keep % grid.n, keep % grid.n, np.arange(m))
    out[(slice(None),) + dst] = v.coeffs[(slice(None),) + src]
    return SpectralField(grid, out, v.solenoidal)


def sobolev_norm(v: SpectralField, l: int = 0) -> float:
    """``sqrt(L^3 sum_k (1+|k|^2)^l |v_hat(k)|^2)``; ``l = 0`` is the L2 norm on the box."""
    if int(l) != l or not 0 <= l <= 6:
        raise DomainError(f"Sobolev order must be an integer in 0..6, got {l!r}")
    g = v.grid
    power = np.sum(np.abs(v.coeffs) ** 2, axis=0)
    weight = g.half_weights * (1.0 + g.k2) ** int(l)
    return float(np.sqrt(g.volume * np.sum(weight * power)))


def taylor_green(grid: Grid) -> SpectralField:
    """``u0 = (sin x cos y, -cos x sin y, 0)`` in box coordinates scaled to ``[0, 2pi)``."""
    x, y, _ = grid.coordinates()
    s = 2 * np.pi / grid.box_length
    u = np.stack([
        np.sin(s * x) * np.cos(s * y),
        -np.cos(s * x) * np.sin(s * y),
        np.zeros_like(x),
    ])
    return SpectralField.from_physical(grid, u, solenoidal=True)


def random_solenoidal(grid: Grid, seed: int, k_max: float, target_h3: float) -> SpectralField:
    """Reproducible solenoidal field on ``1 <= |k| <= k_max`` with ``||u||_{H^3} = target_h3``.

    ``|k|`` is measured in integer wavenumber units.
    """
    if not 1 <= k_max <= grid.n / 3:
        raise DomainError(f"k_max must lie in [1, n/3] = [1, {grid.n / 3:g}], got {k_max!r}")
    if not target_h3 > 0:
        raise DomainError("target_h3 must be positive")
    ix, iy, iz = grid.index
    kk = np.sqrt(ix**2 + iy**2 + iz**2)
    shell = (kk >= 1) & (kk <= k_max)
    for attempt in range(10):
        rng = np.random.default_rng([int(seed), attempt])
        noise = rng.standard_normal((3, grid.n, grid.n, grid.n))
        field = SpectralField(grid, fft(noise) * shell)
        field = leray_project(field)
        norm = sobolev_norm(field, 3)
        if norm > 0 and np.isfinite(norm):
            return field * (target_h3 / norm)
    raise NumericError(f"random_solenoidal: degenerate draw after 10 attempts (seed {seed})")


# checkpoints -----------------------------------------------------------

_MAGIC = b"NNF1"
_HEADER = struct.Struct("<4sIddQ")


def write_checkpoint(path, u: SpectralField, time: float = 0.0, step: int = 0) -> None:
    """Write the binary ``NNF1`` checkpoint (physical values, x fastest)."""
    n = u.grid.n
    phys = u.to_physical()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, n, u.grid.box_length, float(time), int(step)))
        for comp in phys:
            fh.write(np.asarray(comp, dtype="<f8").ravel(order="F").tobytes())


def read_checkpoint(path):
    """Return ``(field, time, step)`` from an ``NNF1`` checkpoint."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated checkpoint header")
        magic, n, box, time, step = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
        count = n**3
        raw = fh.read()
    if len(raw) != 3 * count * 8:
        raise ValueError(f"{path}: expected {3 * count * 8} data bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8").reshape(3, count)
    phys = np.stack([data[c].reshape((n, n, n), order="F") for c in range(3)])
    grid = Grid(n, box)
    return SpectralField.from_physical(grid, phys), time, step
