"""Samples on the upper half-space and the time quadratures used on them.

Two rules integrate ``int_0^tau D(t) t^(-p) dt`` from node values of ``D``:

* ``LogCells`` treats ``D`` as constant on cells whose edges are the
  geometric midpoints between nodes, and integrates the power weight
  exactly on each (possibly partial) cell.
* ``GaussCells`` places Gauss-Legendre nodes on geometric cells and uses
  product integration against the power weight on the cell touching zero.

A ``vanishing`` order ``v`` tells a rule that ``D(t) ~ t^v`` near zero, so
the first cell integrates ``D(t) t^(-v)`` against ``t^(v-p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import TorusGrid


def power_integral(a, b, e):
    """``int_a^b t^e dt`` elementwise (``a`` may be 0 when ``e > -1``)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(e + 1) < 1e-14:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(b > a, np.log(b / np.where(a > 0, a, np.nan)), 0.0)
        return out
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (b ** (e + 1) - a ** (e + 1)) / (e + 1)
    return np.where(b > a, out, 0.0)


class TimeRule:
    nodes: np.ndarray

    def weights(self, upper: float, power: float, vanishing: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def cell_measure(self, power: float) -> np.ndarray:
        """Per-node measure of ``t^(-p) dt`` over the node's own cell."""
        raise NotImplementedError


class LogCells(TimeRule):
    """Piecewise-constant-in-log-t rule on arbitrary increasing nodes."""

    def __init__(self, nodes, lower: str = "zero"):
        t = np.asarray(nodes, dtype=float)
        if t.ndim != 1 or t.size < 2 or t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise ValueError("time nodes must be positive and strictly increasing (at least two)")
        if lower not in ("zero", "mirror"):
            raise ValueError("lower must be 'zero' or 'mirror'")
        self.nodes = t
        self.lower = lower
        mid = np.sqrt(t[1:] * t[:-1])
        first = 0.0 if lower == "zero" else t[0] * math.sqrt(t[0] / t[1])
        last = t[-1] * math.sqrt(t[-1] / t[-2])
        self.edges = np.concatenate([[first], mid, [last]])

    def weights(self, upper, power, vanishing=0.0):
        lo = self.edges[:-1]
        hi = np.minimum(self.edges[1:], upper)
        w = power_integral(lo, np.maximum(hi, lo), vanishing - power)
        return w * self.nodes ** (-vanishing)

    def cell_measure(self, power):
        return power_integral(self.edges[:-1], self.edges[1:], -power)


class GaussCells(TimeRule):
    """Gauss-Legendre nodes on cells ``[0, e_0], [e_0, e_1], ...``."""

    def __init__(self, edges, order: int = 8):
        e = np.asarray(edges, dtype=float)
        if e.ndim != 1 or e[0] <= 0 or np.any(np.diff(e) <= 0):
            raise ValueError("cell edges must be positive and increasing")
        self.edges = e
        self.order = order
        x, w = np.polynomial.legendre.leggauss(order)
        self._ref_nodes = (x + 1) / 2
        self._ref_weights = w / 2
        lo = np.concatenate([[0.0], e[:-1]])
        hi = e
        self.cell_lo = lo
        self.cell_hi = hi
        width = hi - lo
        self.nodes = (lo[:, None] + width[:, None] * self._ref_nodes[None, :]).ravel()
        self._plain = (width[:, None] * self._ref_weights[None, :]).ravel()
        self.cell_of_node = np.repeat(np.arange(e.size), order)

    @classmethod
    def geometric(cls, top: float, cells: int, ratio: float = 2.0, order: int = 8) -> "GaussCells":
        edges = top * ratio ** (np.arange(-cells + 1, 1, dtype=float))
        return cls(edges, order)

    def _first_cell_weights(self, c: float) -> np.ndarray:
        # product integration of the interpolant through the reference nodes against u^c on [0, 1]
        u = self._ref_nodes
        k = np.arange(self.order)
        vander = u[:, None] ** k[None, :]
        moments = 1.0 / (k + 1 + c)
        return np.linalg.solve(vander.T, moments)

    def edge_index(self, upper: float) -> int:
        j = int(np.argmin(np.abs(self.edges - upper)))
        if abs(self.edges[j] - upper) > 1e-9 * upper:
            raise ValueError(f"upper limit {upper} is not a cell edge of this rule")
        return j

    def weights(self, upper, power, vanishing=0.0):
        j = self.edge_index(upper)
        w = self._plain * self.nodes ** (-power)
        c = vanishing - power
        if c <= -1:
            raise ValueError("power weight not integrable at zero for this vanishing order")
        e0 = self.edges[0]
        first = e0 ** (1 + c) * self._first_cell_weights(c)
        w[: self.order] = first * self.nodes[: self.order] ** (-vanishing)
        w[(j + 1) * self.order :] = 0.0
        return w

    def cell_measure(self, power):
        return self._plain * self.nodes ** (-power)


@dataclass(frozen=True)
class HalfSpaceSample:
    """Values ``F(t_i, x_j)`` with shape ``(M, N, ..., N)`` or ``(M, m, N, ..., N)``."""

    grid: TorusGrid
    times: np.ndarray
    values: np.ndarray
    rule: TimeRule | None = field(default=None, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values)
        if t.ndim != 1 or t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be positive and strictly increasing")
        if v.shape[0] != t.size or v.shape[-self.grid.dim :] != self.grid.shape:
            raise ValueError(f"values of shape {v.shape} do not match {t.size} times on {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("half-space samples must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if self.rule is None:
            object.__setattr__(self, "rule", LogCells(t, "zero"))
        elif self.rule.nodes.size != t.size or not np.allclose(self.rule.nodes, t, rtol=1e-13):
            raise ValueError("time rule nodes differ from the sample times")

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == self.grid.dim + 2

    def modulus_sq(self) -> np.ndarray:
        """``|F|^2`` summed over components, shape ``(M, N, ..., N)``."""
        a = np.abs(self.values) ** 2
        return a.sum(axis=1) if self.is_vector else a

    def modulus(self) -> np.ndarray:
        return np.sqrt(self.modulus_sq())

    def tent_measure(self, power: float) -> np.ndarray:
        """Cell measure of ``t^(-p) dt`` per time node for tent integrals (bounded cells)."""
        if isinstance(self.rule, GaussCells):
            return self.rule.cell_measure(power)
        return LogCells(self.times, "mirror").cell_measure(power)

    def with_values(self, values) -> "HalfSpaceSample":
        return HalfSpaceSample(self.grid, self.times, values, self.rule)


@dataclass(frozen=True)
class FieldHistory:
    """Spectral coefficients at increasing times, shape ``(M, m, N, ..., N)``."""

    grid: TorusGrid
    times: np.ndarray
    coeffs: np.ndarray
    is_real: bool = True
    rule: TimeRule | None = field(default=None, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        c = np.asarray(self.coeffs)
        if t.ndim != 1 or t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be positive and strictly increasing")
        if c.ndim != self.grid.dim + 2 or c.shape[0] != t.size or c.shape[2:] != self.grid.shape:
            raise ValueError(f"coefficients of shape {c.shape} do not match {t.size} times on {self.grid.shape}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "coeffs", c)

    def at(self, i: int):
        from .spectral import SpectralField

        return SpectralField(self.grid, self.coeffs[i], self.is_real)

    def physical(self, multiplier=None) -> HalfSpaceSample:
        """Samples of the (optionally multiplied) field; scalar histories drop the component axis."""
        import scipy.fft as sfft

        c = self.coeffs if multiplier is None else self.coeffs * multiplier
        axes = tuple(range(2, 2 + self.grid.dim))
        v = sfft.ifftn(c * self.grid.size, axes=axes)
        if self.is_real:
            v = v.real
        if v.shape[1] == 1:
            v = v[:, 0]
        return HalfSpaceSample(self.grid, self.times, v, self.rule)
