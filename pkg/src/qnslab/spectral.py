"""Periodic-torus spectral representation of scalar and vector fields.

Coefficients are normalized so that ``to_spectral`` of ``cos(2 pi x / L)``
puts ``1/2`` on the modes ``k = +-1``.  Wavenumbers satisfy
``-N/2 < k_i <= N/2``.  Odd-order derivative multipliers, and therefore the
Leray projector, treat the Nyquist component of a wavevector as zero so
that real fields stay real; even multipliers such as ``|xi|^(2s)`` use the
full wavevector.  Riesz transforms follow ``R_j -> i xi_j / |xi|``.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
import scipy.fft as sfft

MEAN_MODE_NOTE = (
    "k=0 coefficient zeroed by |xi|^(2s) for s != 0 and kept for s = 0; "
    "Leray projection keeps k=0"
)
NYQUIST_NOTE = "odd derivative multipliers vanish on the Nyquist component"


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on ``[0, L)^n`` with ``N`` points per axis."""

    dim: int
    points: int
    period: float = 2.0 * math.pi

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dim}")
        N = self.points
        if N < 8 or N & (N - 1):
            raise ValueError(f"points per axis must be a power of two >= 8, got {N}")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def spacing(self) -> float:
        return self.period / self.points

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def size(self) -> int:
        return self.points**self.dim

    @property
    def center(self) -> np.ndarray:
        return np.full(self.dim, self.period / 2)

    def _broadcast(self, vec: np.ndarray, axis: int) -> np.ndarray:
        shape = [1] * self.dim
        shape[axis] = self.points
        return vec.reshape(shape)

    @cached_property
    def integer_wavenumbers(self) -> tuple[np.ndarray, ...]:
        k = np.fft.fftfreq(self.points, 1.0 / self.points)
        k[self.points // 2] = self.points // 2
        return tuple(self._broadcast(k, a) for a in range(self.dim))

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        scale = 2.0 * math.pi / self.period
        return tuple(scale * k for k in self.integer_wavenumbers)

    @cached_property
    def xi_odd(self) -> tuple[np.ndarray, ...]:
        """Wavevector components with the Nyquist entry set to zero."""
        out = []
        for a, x in enumerate(self.xi):
            x = x.copy()
            x.reshape(-1)[self.points // 2] = 0.0
            out.append(x)
        return tuple(out)

    @cached_property
    def xi_norm_sq(self) -> np.ndarray:
        total = np.zeros(self.shape)
        for x in self.xi:
            total = total + x**2
        return total

    @cached_property
    def xi_norm(self) -> np.ndarray:
        return np.sqrt(self.xi_norm_sq)

    @cached_property
    def zero_mode(self) -> tuple[int, ...]:
        return (0,) * self.dim

    def coords(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.points) * self.spacing
        return tuple(self._broadcast(x, a) for a in range(self.dim))

    def mesh(self) -> np.ndarray:
        """Coordinates as an array of shape ``(n, N, ..., N)``."""
        return np.stack(np.broadcast_arrays(*self.coords()))

    def periodic_offset(self, origin) -> np.ndarray:
        """Minimal-image displacement of every grid point from ``origin``."""
        L = self.period
        d = self.mesh() - np.asarray(origin, dtype=float).reshape((-1,) + (1,) * self.dim)
        return d - L * np.round(d / L)


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of ``m`` field components, shape ``(m, N, ..., N)``."""

    grid: TorusGrid
    coeffs: np.ndarray
    is_real: bool = True

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape[1:] != self.grid.shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        if c.flags.writeable:
            c = c.copy()
            c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    def _new(self, coeffs, is_real=None) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.is_real if is_real is None else is_real)

    def component(self, i: int) -> "SpectralField":
        return self._new(self.coeffs[i : i + 1])

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self, other)
        return self._new(self.coeffs + other.coeffs, self.is_real and other.is_real)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self, other)
        return self._new(self.coeffs - other.coeffs, self.is_real and other.is_real)

    def __mul__(self, c: float) -> "SpectralField":
        return self._new(self.coeffs * c, self.is_real and np.isrealobj(c))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self._new(-self.coeffs)

    def l2_norm(self) -> float:
        """Continuum L^2 norm over the torus via Parseval."""
        return math.sqrt(self.grid.period**self.grid.dim * float(np.sum(np.abs(self.coeffs) ** 2)))

    def hermitian_defect(self) -> float:
        """Relative violation of ``c(-k) = conj(c(k))``."""
        c = self.coeffs
        flipped = c
        for ax in range(1, c.ndim):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        scale = max(float(np.max(np.abs(c))), 1e-300)
        return float(np.max(np.abs(flipped - np.conj(c)))) / scale


def _check_same(a: SpectralField, b: SpectralField):
    if a.grid != b.grid or a.components != b.components:
        raise ValueError("fields live on different grids or have different component counts")


def _axes(grid: TorusGrid) -> tuple[int, ...]:
    return tuple(range(-grid.dim, 0))


def to_spectral(samples, grid: TorusGrid) -> SpectralField:
    """Forward transform of physical samples, scalar ``(N,)*n`` or vector ``(m, N,...)``."""
    a = np.asarray(samples)
    if a.shape == grid.shape:
        a = a[None]
    elif a.shape[1:] != grid.shape or a.ndim != grid.dim + 1:
        raise ValueError(f"sample shape {np.shape(samples)} does not match grid {grid.shape}")
    is_real = not np.iscomplexobj(a)
    coeffs = sfft.fftn(a, axes=_axes(grid)) / grid.size
    return SpectralField(grid, coeffs, is_real)


def to_physical(f: SpectralField) -> np.ndarray:
    """Inverse transform; scalar fields come back with shape ``(N,)*n``."""
    out = sfft.ifftn(f.coeffs * f.grid.size, axes=_axes(f.grid))
    if f.is_real:
        out = out.real
    return out[0] if f.components == 1 else out


def apply_multiplier(f: SpectralField, mult: np.ndarray, is_real: bool | None = None) -> SpectralField:
    return f._new(f.coeffs * mult, is_real)


def _frac_multiplier(grid: TorusGrid, s: float) -> np.ndarray:
    if s == 0:
        return np.ones(grid.shape)
    out = np.zeros(grid.shape)
    nz = grid.xi_norm_sq > 0
    out[nz] = grid.xi_norm_sq[nz] ** s
    return out


def frac_laplacian(f: SpectralField, s: float) -> SpectralField:
    """Apply ``(-Delta)^s``, the multiplier ``|xi|^(2s)``."""
    return apply_multiplier(f, _frac_multiplier(f.grid, float(s)))


def heat_multiplier(grid: TorusGrid, t: float, beta: float) -> np.ndarray:
    if t < 0:
        raise ValueError("heat semigroup needs t >= 0")
    return np.exp(-t * grid.xi_norm_sq**beta)


def heat_semigroup(f: SpectralField, t: float, beta: float) -> SpectralField:
    """Apply ``exp(-t (-Delta)^beta)``."""
    return apply_multiplier(f, heat_multiplier(f.grid, t, beta))


def leray_project(u: SpectralField) -> SpectralField:
    """Project a vector field onto divergence-free fields, mode by mode."""
    grid = u.grid
    if u.components != grid.dim:
        raise ValueError("Leray projection needs a vector field with n components")
    xi = grid.xi_odd
    sq = sum(x**2 for x in xi)
    nz = sq > 0
    inv = np.zeros(grid.shape)
    inv[nz] = 1.0 / sq[nz]
    dot = sum(x * c for x, c in zip(xi, u.coeffs))
    out = np.stack([c - x * dot * inv for x, c in zip(xi, u.coeffs)])
    return u._new(out)


def derivative_multiplier(grid: TorusGrid, multi_index) -> np.ndarray:
    """Multiplier of ``d^gamma``; each odd per-axis order drops the Nyquist entry."""
    mult = np.ones(grid.shape, dtype=complex)
    for axis, order in enumerate(multi_index):
        if order == 0:
            continue
        x = grid.xi_odd[axis] if order % 2 else grid.xi[axis]
        mult = mult * (1j * x) ** order
    return mult


def partial_derivative(f: SpectralField, axis: int, order: int = 1) -> SpectralField:
    if not 0 <= axis < f.grid.dim:
        raise ValueError(f"axis {axis} out of range for dimension {f.grid.dim}")
    gamma = [0] * f.grid.dim
    gamma[axis] = order
    return apply_multiplier(f, derivative_multiplier(f.grid, gamma))


def divergence(u: SpectralField) -> SpectralField:
    grid = u.grid
    if u.components != grid.dim:
        raise ValueError("divergence needs a vector field with n components")
    total = sum(1j * x * c for x, c in zip(grid.xi_odd, u.coeffs))
    return SpectralField(grid, total[None], u.is_real)


def gradient(f: SpectralField) -> SpectralField:
    if f.components != 1:
        raise ValueError("gradient needs a scalar field")
    grid = f.grid
    return SpectralField(grid, np.stack([1j * x * f.coeffs[0] for x in grid.xi_odd]), f.is_real)


def multi_indices(dim: int, order: int):
    """All multi-indices of the given total order, in a fixed order."""
    for combo in itertools.combinations_with_replacement(range(dim), order):
        gamma = [0] * dim
        for a in combo:
            gamma[a] += 1
        yield tuple(gamma)


def grad_tensor_norms(f: SpectralField, k: int) -> float:
    """``max_{|gamma| = k} ||d^gamma f||_inf`` over all components."""
    best = 0.0
    for gamma in multi_indices(f.grid.dim, k):
        g = to_physical(apply_multiplier(f, derivative_multiplier(f.grid, gamma)))
        best = max(best, float(np.max(np.abs(g))))
    return best


def lp_norm(values: np.ndarray, grid: TorusGrid, p: float) -> float:
    """Rectangle-rule ``L^p`` norm of samples (vector samples use the pointwise modulus)."""
    v = np.abs(values)
    if v.ndim == grid.dim + 1:
        v = np.sqrt(np.sum(v**2, axis=0))
    if math.isinf(p):
        return float(np.max(v))
    return float(np.sum(v**p) * grid.cell_volume) ** (1.0 / p)


def _bump(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


class LittlewoodPaleyBank:
    """Dyadic annular windows normalized to a partition of unity on the grid."""

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        rho = grid.xi_norm
        nz = rho > 0
        rmin = float(np.min(rho[nz]))
        rmax = float(np.max(rho))
        self.j_min = math.floor(math.log2(rmin))
        self.j_max = math.ceil(math.log2(rmax))
        logr = np.full(grid.shape, -np.inf)
        logr[nz] = np.log2(rho[nz])
        raw = np.stack([_bump(logr - j) for j in self.levels])
        total = raw.sum(axis=0)
        windows = np.zeros_like(raw)
        windows[:, nz] = raw[:, nz] / total[nz]
        windows.setflags(write=False)
        self.windows = windows

    @property
    def levels(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def window(self, j: int) -> np.ndarray:
        if j not in self.levels:
            raise ValueError(f"level {j} outside {self.j_min}..{self.j_max}")
        return self.windows[j - self.j_min]


@lru_cache(maxsize=16)
def lp_bank(grid: TorusGrid) -> LittlewoodPaleyBank:
    return LittlewoodPaleyBank(grid)


def lp_block(f: SpectralField, j: int) -> SpectralField:
    return apply_multiplier(f, lp_bank(f.grid).window(j))


def _check_exponent(name: str, v: float):
    if not (v >= 1 or math.isinf(v)) or math.isnan(v):
        raise ValueError(f"{name} must lie in [1, inf], got {v}")


def besov_norm(f: SpectralField, s: float, p: float, q: float) -> float:
    """Homogeneous Besov norm from Littlewood-Paley blocks over the grid levels."""
    if not math.isfinite(s):
        raise ValueError("smoothness index must be finite")
    _check_exponent("p", p)
    _check_exponent("q", q)
    terms = []
    for j in lp_bank(f.grid).levels:
        block = to_physical(lp_block(f, j))
        terms.append(2.0 ** (j * s) * lp_norm(block, f.grid, p))
    terms = np.asarray(terms)
    if math.isinf(q):
        return float(terms.max())
    return math.fsum(terms**q) ** (1.0 / q)


def besov_difference_norm(f: SpectralField, s: float, p: float, q: float) -> float:
    """First-difference form of the Besov norm for ``0 < s < 1`` over lattice shifts.

    ``q = inf`` gives the supremum form.  Shifts range over the minimal-image
    box of the torus, each weighted by one lattice cell.
    """
    if not 0 < s < 1:
        raise ValueError("difference characterization needs 0 < s < 1")
    _check_exponent("p", p)
    _check_exponent("q", q)
    grid = f.grid
    values = to_physical(f)
    if values.ndim == grid.dim:
        values = values[None]
    N = grid.points
    half = range(-N // 2 + 1, N // 2 + 1)
    terms = []
    for shift in itertools.product(half, repeat=grid.dim):
        if not any(shift):
            continue
        y = grid.spacing * math.sqrt(sum(c * c for c in shift))
        diff = np.roll(values, [-c for c in shift], axis=tuple(range(1, grid.dim + 1))) - values
        size = lp_norm(diff, grid, p)
        if math.isinf(q):
            terms.append(size / y**s)
        else:
            terms.append(size**q / y ** (grid.dim + q * s) * grid.cell_volume)
    if math.isinf(q):
        return max(terms)
    return math.fsum(terms) ** (1.0 / q)


def _dyadic_factor(lam) -> int:
    if isinstance(lam, bool) or int(lam) != lam or lam < 1 or int(lam) & (int(lam) - 1):
        raise ValueError(f"scaling factor must be a power of two, got {lam}")
    return int(lam)


def scaling_transform(f: SpectralField, lam: int, gamma: float) -> SpectralField:
    """``x -> lam^gamma f(c + lam (x - c))`` with ``c`` the box center.

    Exact on grid samples.  Mode ``k`` moves to ``lam k`` with a sign
    ``(-1)^((lam-1) sum k)`` from the centering.
    """
    lam = _dyadic_factor(lam)
    grid = f.grid
    N = grid.points
    idx = (N // 2 + lam * (np.arange(N) - N // 2)) % N
    values = sfft.ifftn(f.coeffs * grid.size, axes=_axes(grid))
    for ax in range(1, grid.dim + 1):
        values = np.take(values, idx, axis=ax)
    coeffs = sfft.fftn(values, axes=_axes(grid)) / grid.size
    return f._new(coeffs * float(lam) ** gamma)


QNSF_MAGIC = b"QNSF"
QNSF_VERSION = 1
_HEADER = struct.Struct("<4sI4d")


def write_qnsf(path, f: SpectralField) -> None:
    """Write physical samples in the QNSF binary layout."""
    grid = f.grid
    values = to_physical(f)
    if np.iscomplexobj(values):
        raise ValueError("QNSF stores real samples only")
    values = np.asarray(values, dtype="<f8").reshape((f.components,) + grid.shape)
    header = _HEADER.pack(QNSF_MAGIC, QNSF_VERSION, grid.dim, grid.points, f.components, grid.period)
    Path(path).write_bytes(header + np.ascontiguousarray(values).tobytes(order="C"))


def read_qnsf(path) -> SpectralField:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("file too short for a QNSF header")
    magic, version, n, N, m, L = _HEADER.unpack_from(raw)
    if magic != QNSF_MAGIC:
        raise ValueError("bad magic bytes, not a QNSF file")
    if version != QNSF_VERSION:
        raise ValueError(f"unsupported QNSF version {version}")
    for name, v in (("n", n), ("N", N), ("m", m)):
        if v != int(v) or v < 1:
            raise ValueError(f"header field {name}={v} is not a positive integer")
    grid = TorusGrid(int(n), int(N), float(L))
    count = int(m) * grid.size
    body = raw[_HEADER.size :]
    if len(body) != 8 * count:
        raise ValueError(f"expected {count} samples, found {len(body) // 8}")
    values = np.frombuffer(body, dtype="<f8").reshape((int(m),) + grid.shape)
    return to_spectral(values if m > 1 else values[0], grid)
