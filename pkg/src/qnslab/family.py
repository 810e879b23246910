"""Reproducible families of random band-limited fields."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .spectral import SpectralField, TorusGrid, leray_project


@dataclass(frozen=True)
class TestFamily:
    """Seeded batch of real, zero-mean fields with spectrum inside ``|k| <= bandwidth``.

    Coefficients depend only on the seed, the field index and the integer
    wavevector, so the same family can be laid on a finer grid.
    """

    __test__ = False  # not a pytest class

    grid: TorusGrid
    size: int = 20
    seed: int = 0
    bandwidth: int = 6
    decay: float = 1.0
    amplitude: float = 1.0
    components: int = 1
    divergence_free: bool = False

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("family size must be positive")
        if not 1 <= self.bandwidth < self.grid.points // 2:
            raise ValueError("bandwidth must lie below the Nyquist wavenumber")
        if self.divergence_free and self.components != self.grid.dim:
            raise ValueError("divergence-free fields need one component per dimension")

    def _coefficients(self, index: int) -> np.ndarray:
        n, K = self.grid.dim, self.bandwidth
        rng = np.random.default_rng([self.seed, index])
        shape = (self.components,) + (2 * K + 1,) * n
        raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        k = np.indices((2 * K + 1,) * n) - K
        norm = np.sqrt(np.sum(k**2, axis=0))
        weight = np.where((norm <= K) & (norm > 0), (1 + norm) ** (-self.decay), 0.0)
        raw = raw * weight
        flipped = raw[(slice(None),) + (slice(None, None, -1),) * n]
        return (raw + np.conj(flipped)) / 2

    def field(self, index: int) -> SpectralField:
        grid = self.grid
        N, K, n = grid.points, self.bandwidth, grid.dim
        small = self._coefficients(index)
        coeffs = np.zeros((self.components,) + grid.shape, dtype=complex)
        idx = np.arange(-K, K + 1) % N
        coeffs[(slice(None),) + np.ix_(*[idx] * n)] = small
        f = SpectralField(grid, coeffs)
        if self.divergence_free:
            f = leray_project(f)
        scale = f.l2_norm() / grid.period ** (n / 2)
        return f * (self.amplitude / scale)

    def fields(self) -> list[SpectralField]:
        return [self.field(i) for i in range(self.size)]

    def __iter__(self):
        return iter(self.fields())

    def __len__(self):
        return self.size

    def refined(self, factor: int = 2) -> "TestFamily":
        g = self.grid
        return replace(self, grid=TorusGrid(g.dim, g.points * factor, g.period))
