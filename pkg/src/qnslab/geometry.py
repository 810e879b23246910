"""Discrete families of cubes and balls used to approximate suprema."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import TorusGrid


@dataclass(frozen=True)
class Cube:
    """Axis-parallel cube of ``size`` samples per side starting at grid index ``corner``."""

    corner: tuple[int, ...]
    size: int

    def side(self, grid: TorusGrid) -> float:
        return self.size * grid.spacing

    def center(self, grid: TorusGrid) -> np.ndarray:
        return (np.asarray(self.corner) + self.size / 2) * grid.spacing

    def index(self, grid: TorusGrid) -> tuple:
        """Open-mesh index selecting the cube's samples (periodic wrap)."""
        N = grid.points
        return np.ix_(*[(np.arange(self.size) + c) % N for c in self.corner])

    def concentric(self, size: int) -> "Cube":
        """Concentric cube with ``size`` samples per side (``size - self.size`` even)."""
        if (size - self.size) % 2:
            raise ValueError("concentric cubes need an even difference in size")
        d = (size - self.size) // 2
        return Cube(tuple(c - d for c in self.corner), size)

    def describe(self, grid: TorusGrid) -> dict:
        return {"center": self.center(grid).tolist(), "side": self.side(grid)}


class CubeFamily:
    """Dyadic cubes with corners on a half-side lattice around the box center."""

    def __init__(self, grid: TorusGrid, cubes):
        cubes = list(cubes)
        if not cubes:
            raise ValueError("cube family is empty")
        self.grid = grid
        self.cubes = cubes

    def __len__(self):
        return len(self.cubes)

    def __iter__(self):
        return iter(self.cubes)

    @classmethod
    def dyadic(cls, grid: TorusGrid, levels=None) -> "CubeFamily":
        N = grid.points
        top = int(math.log2(N))
        if levels is None:
            levels = range(2, top - 1)
        cubes = []
        for j in levels:
            m = N >> j
            if m < 2 or m > N // 4:
                continue
            step = m // 2
            pos = [N // 2 + i * step for i in range(-N // (2 * m), N // (2 * m) - 1)]
            pos = [p for p in pos if p >= N // 4 and p + m <= 3 * N // 4]
            for corner in np.ndindex(*(len(pos),) * grid.dim):
                cubes.append(Cube(tuple(pos[i] for i in corner), m))
        return cls(grid, cubes)

    def shifted(self, shift) -> "CubeFamily":
        N = self.grid.points
        return CubeFamily(self.grid, [Cube(tuple((c + s) % N for c, s in zip(q.corner, shift)), q.size) for q in self])

    def scale_image(self, cube: Cube, lam: int) -> Cube:
        """Image of ``cube`` under ``x -> c + lam (x - c)``."""
        N = self.grid.points
        return Cube(tuple(N // 2 + lam * (c - N // 2) for c in cube.corner), lam * cube.size)

    def fits(self, cube: Cube) -> bool:
        N = self.grid.points
        return all(c >= N // 4 and c + cube.size <= 3 * N // 4 for c in cube.corner)

    def scaling_pair(self, lam: int) -> tuple["CubeFamily", "CubeFamily"]:
        """Cubes whose image under dilation by ``lam`` stays in the family, with their images."""
        members = set(self.cubes)
        keep = [q for q in self if self.scale_image(q, lam) in members]
        return CubeFamily(self.grid, keep), CubeFamily(self.grid, [self.scale_image(q, lam) for q in keep])


def ball_indicator(grid: TorusGrid, radius: float, center=None) -> np.ndarray:
    """Samples strictly inside the periodic ball."""
    c = np.zeros(grid.dim) if center is None else center
    d = grid.periodic_offset(c)
    return np.sum(d**2, axis=0) < radius**2


def ball_coverage(grid: TorusGrid, radius: float, sub: int | None = None) -> np.ndarray:
    """Fraction of each sample cell (centered at the sample) inside the ball about the origin.

    Estimated with ``sub`` midpoints per axis; summing it times the cell volume
    approximates a ball integral far better than counting samples.
    """
    n, h, N = grid.dim, grid.spacing, grid.points
    sub = (8 if n < 3 else 4) if sub is None else sub
    reach = min(int(math.ceil(radius / h)) + 1, N // 2)
    offs = np.arange(-reach, reach + 1)
    fine = (np.arange(sub) + 0.5) / sub - 0.5
    pts = (offs[:, None] + fine[None, :]) * h  # (cells, sub)
    sq = None
    for axis in range(n):
        shape = [1] * (2 * n)
        shape[axis], shape[n + axis] = offs.size, sub
        term = (pts**2).reshape(shape)
        sq = term if sq is None else sq + term
    frac = (sq < radius**2).mean(axis=tuple(range(n, 2 * n)))
    out = np.zeros(grid.shape)
    idx = np.ix_(*[offs % N] * n)
    np.add.at(out, idx, frac)
    return out


@lru_cache(maxsize=64)
def _ball_fourier(grid: TorusGrid, radius: float) -> np.ndarray:
    import scipy.fft as sfft

    out = sfft.fftn(ball_coverage(grid, radius))
    out.setflags(write=False)
    return out


class BallFamily:
    """Balls with dyadic radii centered at grid points inside the central half."""

    def __init__(self, grid: TorusGrid, radii, stride: int = 1):
        radii = sorted({float(r) for r in radii}, reverse=True)
        if not radii:
            raise ValueError("ball family is empty")
        self.grid = grid
        self.radii = radii
        self.stride = stride

    @classmethod
    def dyadic(cls, grid: TorusGrid, max_radius=None, min_radius=None, stride: int = 1) -> "BallFamily":
        L, h = grid.period, grid.spacing
        r = L / 4 if max_radius is None else max_radius
        floor_r = 2 * h if min_radius is None else min_radius
        radii = []
        while r >= floor_r * (1 - 1e-12):
            radii.append(r)
            r /= 2
        return cls(grid, radii, stride)

    def restricted(self, predicate) -> "BallFamily":
        return BallFamily(self.grid, [r for r in self.radii if predicate(r)], self.stride)

    def center_mask(self, radius: float) -> np.ndarray:
        grid = self.grid
        d = np.abs(grid.periodic_offset(grid.center))
        room = grid.period / 4 - radius + 1e-9 * grid.spacing
        mask = np.all(d <= room, axis=0)
        if self.stride > 1:
            idx = np.indices(grid.shape)
            mask &= np.all((idx - grid.points // 2) % self.stride == 0, axis=0)
        return mask

    def fourier_indicator(self, radius: float) -> np.ndarray:
        return _ball_fourier(self.grid, radius)

    def volume(self, radius: float) -> float:
        n = self.grid.dim
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * radius**n
