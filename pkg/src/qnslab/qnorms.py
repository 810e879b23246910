"""Discrete estimators for Q-type, Carleson-type and related norms.

Every estimator takes a supremum over a finite family (dyadic cubes or
dyadic balls) and reports the member that attains it.  Quantities that are
squares in their natural definition are square-rooted so that all values
are absolutely homogeneous of degree one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.fft as sfft
from scipy import special

from .geometry import BallFamily, Cube, CubeFamily
from .halfspace import FieldHistory, GaussCells, HalfSpaceSample, TimeRule
from .params import FracParams, NormReport
from .spectral import (
    MEAN_MODE_NOTE,
    NYQUIST_NOTE,
    SpectralField,
    TorusGrid,
    apply_multiplier,
    besov_norm,
    derivative_multiplier,
    heat_multiplier,
    multi_indices,
    to_physical,
)

DIAGONAL_NOTE = "sample pairs with x == y are excluded"
R_RANGES = ("r2beta", "r")

# Above this many samples per cube the pair sum is evaluated by FFT correlation.
_DIRECT_PAIR_LIMIT = 256


def _samples(f: SpectralField) -> np.ndarray:
    v = to_physical(f)
    return v[None] if f.components == 1 else v


def _grid_note(grid: TorusGrid) -> dict:
    return {"dim": grid.dim, "points": grid.points, "period": grid.period}


def _block(values: np.ndarray, grid: TorusGrid, corner, size: int) -> np.ndarray:
    """Periodic block ``values[:, corner:corner+size, ...]`` for component-first arrays."""
    N = grid.points
    idx = np.ix_(*[(np.arange(size) + c) % N for c in corner])
    return values[(slice(None),) + idx]


# ---------------------------------------------------------------- pair sums


def _upper_gamma(a: float, x: float) -> float:
    if a > 0:
        return float(special.gammaincc(a, x) * special.gamma(a))
    if a == 0:
        return float(special.exp1(x))
    return (_upper_gamma(a + 1, x) - x**a * math.exp(-x)) / a


@lru_cache(maxsize=128)
def lattice_zeta(dim: int, sigma: float, reach: int = 6) -> float:
    """Analytic continuation of ``sum_{k in Z^n, k != 0} |k|^(-sigma)`` (theta-function splitting)."""
    if sigma == dim:
        raise ValueError("the lattice sum has a pole at sigma = n")
    if sigma == 0:
        return -1.0
    k = np.indices((2 * reach + 1,) * dim).reshape(dim, -1).T - reach
    q = np.pi * np.sum(k**2, axis=1)
    q = np.sort(q[q > 0])
    total = 2 / (sigma - dim) - 2 / sigma
    terms = [_upper_gamma(sigma / 2, x) * x ** (-sigma / 2) + _upper_gamma((dim - sigma) / 2, x) * x ** (-(dim - sigma) / 2) for x in q]
    total += math.fsum(terms)
    return total * math.pi ** (sigma / 2) / special.gamma(sigma / 2)


@dataclass(frozen=True)
class PairRule:
    """How a double integral over a cube becomes a sum over sample pairs.

    ``weights="rectangle"`` uses the ``m`` samples ``corner .. corner+m-1`` with
    unit weights; ``"trapezoid"`` uses the closed cube ``corner .. corner+m``
    with half weights on faces, so dyadic dilations map sample sets onto
    sample sets.  ``diagonal="corrected"`` adds the leading lattice-zeta term
    for the excluded near-diagonal mass, ``-Z(n+2s-2)/n h^(2-2s) |grad f|^2``
    per sample.  ``oversample`` evaluates the trigonometric interpolant on a
    grid that many times finer.
    """

    weights: str = "rectangle"
    diagonal: str = "exclude"
    oversample: int = 1

    def __post_init__(self):
        if self.weights not in ("rectangle", "trapezoid"):
            raise ValueError("weights must be 'rectangle' or 'trapezoid'")
        if self.diagonal not in ("exclude", "corrected"):
            raise ValueError("diagonal must be 'exclude' or 'corrected'")
        if self.oversample < 1 or self.oversample & (self.oversample - 1):
            raise ValueError("oversample must be a power of two")

    def axis_weights(self, samples: int) -> np.ndarray:
        if self.weights == "rectangle":
            return np.ones(samples)
        w = np.ones(samples + 1)
        w[[0, -1]] = 0.5
        return w

    def describe(self) -> dict:
        return {"weights": self.weights, "diagonal": self.diagonal, "oversample": self.oversample}


PLAIN = PairRule()
ACCURATE = PairRule("trapezoid", "corrected", 1)


def _refine_coeffs(f: SpectralField, factor: int) -> tuple[TorusGrid, np.ndarray]:
    """Coefficients of the trigonometric interpolant on a grid ``factor`` times finer."""
    grid = f.grid
    if factor == 1:
        return grid, f.coeffs
    N, n = grid.points, grid.dim
    fine = TorusGrid(n, N * factor, grid.period)
    k = np.fft.fftfreq(N, 1.0 / N).astype(int)
    k[N // 2] = N // 2
    out = np.zeros((f.components,) + fine.shape, dtype=complex)
    out[(slice(None),) + np.ix_(*[k % (N * factor)] * n)] = f.coeffs
    for ax in range(1, n + 1):
        src = [slice(None)] * (n + 1)
        dst = [slice(None)] * (n + 1)
        src[ax] = N // 2
        dst[ax] = N * factor - N // 2
        half = out[tuple(src)] / 2
        out[tuple(src)] = half
        out[tuple(dst)] = half
    return fine, out


class _CubeSampler:
    """Samples of a field (and its gradient energy) arranged for per-cube pair sums."""

    def __init__(self, f: SpectralField, rule: PairRule):
        self.rule = rule
        self.fine, coeffs = _refine_coeffs(f, rule.oversample)
        axes = tuple(range(1, self.fine.dim + 1))
        vals = sfft.ifftn(coeffs * self.fine.size, axes=axes)
        self.values = vals.real if f.is_real else vals
        self.grad_sq = None
        if rule.diagonal == "corrected":
            total = np.zeros(self.fine.shape)
            for x in self.fine.xi_odd:
                g = sfft.ifftn(1j * x * coeffs * self.fine.size, axes=axes)
                total += np.sum(np.abs(g.real if f.is_real else g) ** 2, axis=0)
            self.grad_sq = total[None]

    @property
    def spacing(self) -> float:
        return self.fine.spacing

    def span(self, cube: Cube) -> tuple[tuple[int, ...], int]:
        s = self.rule.oversample
        return tuple(c * s for c in cube.corner), cube.size * s

    def block(self, cube: Cube, source=None) -> tuple[np.ndarray, np.ndarray]:
        corner, m = self.span(cube)
        w1 = self.rule.axis_weights(m)
        src = self.values if source is None else source
        blk = _block(src, self.fine, corner, w1.size)
        weights = w1
        for _ in range(self.fine.dim - 1):
            weights = np.multiply.outer(weights, w1)
        return blk, weights

    def correction(self, cube: Cube, exponent: float) -> float:
        if self.grad_sq is None:
            return 0.0
        n, h = self.fine.dim, self.spacing
        s2 = exponent - n  # 2s
        blk, w = self.block(cube, self.grad_sq)
        coef = -lattice_zeta(n, exponent - 2) / n * h ** (2 - s2)
        return coef * float(np.sum(w * blk[0])) * h**n


@lru_cache(maxsize=64)
def _pair_kernel(dim: int, m: int, spacing: float, exponent: float) -> np.ndarray:
    pts = np.indices((m,) * dim).reshape(dim, -1).T * spacing
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    with np.errstate(divide="ignore"):
        w = np.where(d2 > 0, d2 ** (-exponent / 2), 0.0)
    w *= spacing ** (2 * dim)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=64)
def _offset_kernel_fft(dim: int, m: int, spacing: float, exponent: float) -> np.ndarray:
    size = 2 * m
    k = np.indices((size,) * dim)
    k = np.where(k >= m, k - size, k) * spacing
    d2 = np.sum(k**2, axis=0)
    with np.errstate(divide="ignore"):
        w = np.where(d2 > 0, d2 ** (-exponent / 2), 0.0)
    out = sfft.rfftn(w * spacing ** (2 * dim))
    out.setflags(write=False)
    return out


def _pair_energy(block: np.ndarray, weights: np.ndarray, spacing: float, exponent: float) -> float:
    """``sum_{x != y} w_x w_y |f(x) - f(y)|^2 |x - y|^(-exponent) h^(2n)`` over one block."""
    comps, *shape = block.shape
    dim, m = len(shape), shape[0]
    flat = block.reshape(comps, -1)
    flat = flat - flat.mean(axis=1, keepdims=True)
    wflat = weights.reshape(-1)
    if m**dim <= _DIRECT_PAIR_LIMIT:
        kern = _pair_kernel(dim, m, spacing, exponent) * np.multiply.outer(wflat, wflat)
        total = 0.0
        for v in flat:
            total += float(np.sum(kern * np.abs(v[:, None] - v[None, :]) ** 2))
        return total
    # sum w_x w_y K(x-y)|f_x - f_y|^2 = 2 sum_x w_x |f_x|^2 (K*w)(x) - 2 Re sum_x w_x conj(f_x) (K*(w f))(x)
    wk = _offset_kernel_fft(dim, m, spacing, exponent)
    pad = [(0, m)] * dim
    full = tuple(2 * m for _ in range(dim))
    inner = (slice(0, m),) * dim

    def conv(a):
        return sfft.irfftn(sfft.rfftn(np.pad(a, pad)) * wk, s=full)[inner]

    row = conv(weights)
    total = 0.0
    for v in flat.reshape((comps, *shape)):
        for part in (v.real, v.imag) if np.iscomplexobj(v) else (v,):
            total += 2 * float(np.sum(weights * part**2 * row)) - 2 * float(np.sum(weights * part * conv(weights * part)))
    return max(total, 0.0)


def _q_exponent(p: FracParams, dim: int) -> float:
    return dim + 2 * p.gap


def _q_scale(p: FracParams, dim: int, side: float) -> float:
    return side ** (2 * (p.alpha + p.beta - 1) - dim)


def _cube_energy(sampler: _CubeSampler, cube: Cube, exponent: float) -> float:
    blk, w = sampler.block(cube)
    return _pair_energy(blk, w, sampler.spacing, exponent) + sampler.correction(cube, exponent)


def cube_energy(f: SpectralField, p: FracParams, cube: Cube, rule: PairRule = PLAIN) -> float:
    """Unscaled double sum over one cube."""
    return _cube_energy(_CubeSampler(f, rule), cube, _q_exponent(p, f.grid.dim))


def _sup_over_cubes(cubes, score) -> tuple[float, Cube]:
    best, where = -1.0, None
    for cube in cubes:
        s = score(cube)
        if s > best:
            best, where = s, cube
    return best, where


def _pair_quadrature(grid: TorusGrid, p: FracParams, rule: PairRule) -> dict:
    order = 2 * (p.beta - p.alpha)
    if rule.diagonal == "corrected":
        order = min(2.0, order + 2)
    return {
        "grid": _grid_note(grid),
        "excluded_diagonal": True,
        "rule": rule.describe(),
        "rates": {"diagonal_error_order": order, "face_error_order": 1 if rule.weights == "rectangle" else 2},
    }


def q_norm(f: SpectralField, p: FracParams, cubes: CubeFamily, rule: PairRule = PLAIN) -> NormReport:
    """Diagonal-excluded double-sum estimate of the Q-norm over a cube family."""
    if len(cubes) == 0:
        raise ValueError("cube family is empty")
    grid = f.grid
    sampler = _CubeSampler(f, rule)
    e = _q_exponent(p, grid.dim)
    best, where = _sup_over_cubes(cubes, lambda c: _q_scale(p, grid.dim, c.side(grid)) * _cube_energy(sampler, c, e))
    return NormReport(
        norm="q",
        value=math.sqrt(max(best, 0.0)),
        witness={"cube": where.describe(grid), "squared": best},
        params=p.as_dict(),
        convention_notes=[DIAGONAL_NOTE, NYQUIST_NOTE],
        quadrature=_pair_quadrature(grid, p, rule),
    )


# ------------------------------------------------------ translated form


@lru_cache(maxsize=64)
def _ball_offsets(dim: int, m: int, spacing: float, exponent: float) -> tuple[np.ndarray, np.ndarray]:
    k = np.indices((2 * m + 1,) * dim).reshape(dim, -1).T - m
    r2 = np.sum(k**2, axis=1)
    keep = (r2 > 0) & (r2 <= m * m)
    k = k[keep]
    w = (np.sqrt(r2[keep]) * spacing) ** (-exponent) * spacing ** (2 * dim)
    k.setflags(write=False)
    w.setflags(write=False)
    return k, w


def _translated_energy(sampler: _CubeSampler, cube: Cube, exponent: float, reach: int | None = None) -> float:
    """``sum_{x in I} w_x sum_{0<|y|<=reach} |f(x+y) - f(x)|^2 |y|^(-exponent) h^(2n)``."""
    fine, h = sampler.fine, sampler.spacing
    dim = fine.dim
    corner, m = sampler.span(cube)
    reach = m if reach is None else reach * sampler.rule.oversample
    _, w = sampler.block(cube)
    k = w.shape[0]
    offsets, weights = _ball_offsets(dim, reach, h, exponent)
    side = k + 2 * reach
    big = _block(sampler.values, fine, tuple(c - reach for c in corner), side)
    flat = big.reshape(big.shape[0], -1)
    stride = np.array([side ** (dim - 1 - a) for a in range(dim)])
    base = (np.indices((k,) * dim).reshape(dim, -1).T + reach) @ stride
    shift = offsets @ stride
    wx = w.reshape(-1)
    total = 0.0
    chunk = max(1, 4_000_000 // max(base.size, 1))
    for s in range(0, shift.size, chunk):
        idx = base[None, :] + shift[s : s + chunk, None]
        for v in flat:
            d = np.abs(v[idx] - v[base][None, :]) ** 2
            total += float(weights[s : s + chunk] @ (d @ wx))
    return total + sampler.correction(cube, exponent)


def q_norm_translated(f: SpectralField, p: FracParams, cubes: CubeFamily, rule: PairRule = PLAIN) -> NormReport:
    """Q-norm estimate from translated differences ``f(x+y) - f(x)`` with ``|y| <= l(I)``."""
    if len(cubes) == 0:
        raise ValueError("cube family is empty")
    grid = f.grid
    sampler = _CubeSampler(f, rule)
    e = _q_exponent(p, grid.dim)
    best, where = _sup_over_cubes(cubes, lambda c: _q_scale(p, grid.dim, c.side(grid)) * _translated_energy(sampler, c, e))
    value = math.sqrt(max(best, 0.0))
    base = q_norm(f, p, cubes, rule).value
    quad = _pair_quadrature(grid, p, rule)
    quad["ratio_to_q_norm"] = value / base if base > 0 else None
    return NormReport(
        norm="q_translated",
        value=value,
        witness={"cube": where.describe(grid), "squared": best},
        params=p.as_dict(),
        convention_notes=[DIAGONAL_NOTE, "offsets satisfy 0 < |y| <= l(I) with periodic wrap"],
        quadrature=quad,
    )


def translated_comparison(f: SpectralField, p: FracParams, cube: Cube, rule: PairRule = PLAIN) -> dict:
    """Both sides of the two containment inequalities between the pair and translated forms.

    ``translated(I) <= pair(3I)`` and ``pair(I) <= translated(I')`` where ``I'``
    is concentric with side at least ``sqrt(n) l(I)``.
    """
    sampler = _CubeSampler(f, rule)
    e = _q_exponent(p, f.grid.dim)
    m, n = cube.size, f.grid.dim
    outer = cube.concentric(m + 2 * math.ceil((math.sqrt(n) - 1) * m / 2))
    out = {
        "translated": _translated_energy(sampler, cube, e),
        "pair_triple": _cube_energy(sampler, cube.concentric(3 * m), e),
        "pair": _cube_energy(sampler, cube, e),
        "translated_enlarged": _translated_energy(sampler, outer, e),
        "enlarged_size": outer.size,
    }
    out["translated_le_pair_triple"] = out["translated"] <= out["pair_triple"] * (1 + 1e-12)
    out["pair_le_translated_enlarged"] = out["pair"] <= out["translated_enlarged"] * (1 + 1e-12)
    return out


def monotone_in_alpha(
    f: SpectralField,
    beta: float,
    alpha_lo: float,
    alpha_hi: float,
    cubes: CubeFamily,
    rule: PairRule = PLAIN,
) -> list[dict]:
    """Per-cube comparison of scaled energies for two smoothness indices."""
    if alpha_lo > alpha_hi:
        raise ValueError("need alpha_lo <= alpha_hi")
    p1, p2 = FracParams(alpha_lo, beta, True), FracParams(alpha_hi, beta, True)
    grid = f.grid
    sampler = _CubeSampler(f, rule)
    e1, e2 = _q_exponent(p1, grid.dim), _q_exponent(p2, grid.dim)
    factor = math.sqrt(grid.dim) ** (2 * (alpha_hi - alpha_lo))
    out = []
    for cube in cubes:
        l = cube.side(grid)
        lhs = _q_scale(p1, grid.dim, l) * _cube_energy(sampler, cube, e1)
        rhs = factor * _q_scale(p2, grid.dim, l) * _cube_energy(sampler, cube, e2)
        out.append({"cube": cube, "lhs": lhs, "rhs": rhs, "holds": lhs <= rhs * (1 + 1e-12)})
    return out


def bmo_beta_norm(f: SpectralField, beta: float, cubes: CubeFamily) -> NormReport:
    """Mean-oscillation estimate ``sup |I|^(-1 + 4(beta-1)/n) int_I |f - f_I|^2``, square-rooted."""
    if not 0.5 < beta <= 1:
        raise ValueError("beta must lie in (1/2, 1]")
    if len(cubes) == 0:
        raise ValueError("cube family is empty")
    grid = f.grid
    n = grid.dim
    values = _samples(f)

    def score(cube):
        b = _block(values, grid, cube.corner, cube.size).reshape(values.shape[0], -1)
        osc = np.abs(b - b.mean(axis=1, keepdims=True)) ** 2
        vol = cube.side(grid) ** n
        return vol ** (-1 + 4 * (beta - 1) / n) * float(np.sum(osc)) * grid.cell_volume

    best, where = _sup_over_cubes(cubes, score)
    return NormReport(
        norm="bmo_beta",
        value=math.sqrt(max(best, 0.0)),
        witness={"cube": where.describe(grid), "squared": best},
        params={"beta": beta},
        convention_notes=["square root of the mean-oscillation supremum"],
        quadrature={"grid": _grid_note(grid), "excluded_diagonal": False, "rates": {}},
    )


# ------------------------------------------------------ Carleson engine


def _carleson_exponent(p: FracParams, dim: int) -> float:
    return 2 * p.alpha - dim + 2 * p.beta - 2


def default_balls(grid: TorusGrid, p: FracParams, T: float = math.inf, r_range: str = "r2beta") -> BallFamily:
    return restrict_balls(BallFamily.dyadic(grid), p, T, r_range)


def restrict_balls(balls: BallFamily, p: FracParams, T: float, r_range: str) -> BallFamily:
    if r_range not in R_RANGES:
        raise ValueError(f"r_range must be one of {R_RANGES}")
    if math.isinf(T):
        return balls
    if r_range == "r2beta":
        return balls.restricted(lambda r: r ** (2 * p.beta) <= T * (1 + 1e-12))
    return balls.restricted(lambda r: r < T)


def ball_time_sup(
    grid: TorusGrid,
    balls: BallFamily,
    weights: np.ndarray,
    density: Callable[[int], np.ndarray],
    scale_exponent: float,
) -> tuple[float, dict]:
    """``sup_{B(x,r)} r^e sum_i w[r, i] int_B density_i`` over the ball family.

    ``weights`` has one row per radius in ``balls.radii``.  Ball sums are
    circular convolutions, accumulated in Fourier space across time nodes.
    """
    radii = balls.radii
    R = len(radii)
    acc = np.zeros((R,) + grid.shape, dtype=complex)
    bshape = (R,) + (1,) * grid.dim
    for i in range(weights.shape[1]):
        col = weights[:, i]
        if not np.any(col):
            continue
        acc += col.reshape(bshape) * sfft.fftn(density(i))
    best, witness = 0.0, None
    for k, r in enumerate(radii):
        mask = balls.center_mask(r)
        if not mask.any():
            continue
        s = sfft.ifftn(acc[k] * balls.fourier_indicator(r)).real
        s = np.where(mask, s, -np.inf)
        flat = int(np.argmax(s))
        val = float(s.reshape(-1)[flat]) * grid.cell_volume * r**scale_exponent
        if witness is None or val > best:
            idx = np.unravel_index(flat, grid.shape)
            best = val
            witness = {"center": [float(i * grid.spacing) for i in idx], "radius": r}
    if witness is None:
        raise ValueError("no ball of the family fits in the central half")
    return max(best, 0.0), witness


def _ladder_edges(uppers, ratio: float, floor: float) -> np.ndarray:
    edges: list[float] = []
    for u in uppers:
        e = u
        while e > floor:
            edges.append(e)
            e /= ratio
    edges = np.array(sorted(edges))
    keep = np.concatenate([[True], np.diff(np.log(edges)) > 1e-9])
    return edges[keep]


def heat_time_rule(grid: TorusGrid, beta: float, uppers, order: int = 8) -> GaussCells:
    """Gauss cells whose edges include every upper limit, fine enough for ``exp(-t|xi|^(2 beta))``."""
    a_max = float(np.max(grid.xi_norm_sq)) ** beta
    floor = min(min(uppers) / 16, 1e-2 / a_max)
    return GaussCells(_ladder_edges(uppers, 2.0**beta, floor), order)


def _heat_density(f: SpectralField, beta: float, times) -> Callable[[int], np.ndarray]:
    grid = f.grid
    axes = tuple(range(1, grid.dim + 1))

    def density(i):
        c = f.coeffs * heat_multiplier(grid, float(times[i]), beta)
        v = sfft.ifftn(c * grid.size, axes=axes)
        return np.sum(np.abs(v.real if f.is_real else v) ** 2, axis=0)

    return density


def carleson_q_inverse_norm(
    f: SpectralField,
    p: FracParams,
    T: float = math.inf,
    balls: BallFamily | None = None,
    r_range: str = "r2beta",
    times=None,
) -> NormReport:
    """Carleson-type norm of the heat extension of ``f`` over a ball family.

    With ``times`` the extension is sampled on those nodes and integrated by
    ``LogCells`` (the convention used for half-space samples).  Without it the
    extension is evaluated on Gauss cells aligned with every ``r^(2 beta)``.
    """
    grid = f.grid
    balls = restrict_balls(BallFamily.dyadic(grid) if balls is None else balls, p, T, r_range)
    uppers = [r ** (2 * p.beta) for r in balls.radii]
    if times is None:
        rule: TimeRule = heat_time_rule(grid, p.beta, uppers)
        method = "gauss-legendre cells, product integration on the first cell"
    else:
        from .halfspace import LogCells

        rule = LogCells(times)
        method = "piecewise constant in log t, exact power weights"
    power = p.alpha / p.beta
    weights = np.stack([rule.weights(u, power) for u in uppers])
    sq, witness = ball_time_sup(grid, balls, weights, _heat_density(f, p.beta, rule.nodes), _carleson_exponent(p, grid.dim))
    witness["squared"] = sq
    return NormReport(
        norm="q_inverse",
        value=math.sqrt(sq),
        witness=witness,
        params={**p.as_dict(), "T": T, "r_range": r_range},
        convention_notes=[MEAN_MODE_NOTE, f"radii satisfy {'r^(2 beta) <= T' if r_range == 'r2beta' else 'r < T'}"],
        quadrature={"grid": _grid_note(grid), "excluded_diagonal": False, "time_nodes": int(rule.nodes.size), "time_rule": method, "rates": {}},
    )


def sample_carleson(
    g: HalfSpaceSample,
    p: FracParams,
    balls: BallFamily,
    extra_power: float = 0.0,
) -> tuple[float, dict]:
    """Squared Carleson supremum of a half-space sample with weight ``t^(-alpha/beta - extra_power)``."""
    grid = g.grid
    uppers = [r ** (2 * p.beta) for r in balls.radii]
    power = p.alpha / p.beta + extra_power
    try:
        weights = np.stack([g.rule.weights(u, power) for u in uppers])
    except ValueError as exc:
        raise ValueError(f"time grid does not match the ball family: {exc}") from None
    mod = g.modulus_sq()
    return ball_time_sup(grid, balls, weights, lambda i: mod[i], _carleson_exponent(p, grid.dim))


def _linf_part(g: HalfSpaceSample, T: float, power: float, mod: np.ndarray | None = None) -> tuple[float, dict]:
    mod = np.sqrt(g.modulus_sq()) if mod is None else mod
    peaks = mod.reshape(mod.shape[0], -1).max(axis=1)
    ok = g.times <= T * (1 + 1e-12)
    if not ok.any():
        raise ValueError("no time node lies in (0, T]")
    scores = np.where(ok, g.times**power * peaks, -np.inf)
    i = int(np.argmax(scores))
    return float(scores[i]), {"time": float(g.times[i]), "index": i}


def x_norm(
    g: HalfSpaceSample,
    p: FracParams,
    T: float = math.inf,
    balls: BallFamily | None = None,
    r_range: str = "r2beta",
) -> NormReport:
    """Weighted sup-in-time part plus Carleson part of a half-space sample."""
    grid = g.grid
    if T <= 0:
        raise ValueError("T must be positive")
    balls = restrict_balls(BallFamily.dyadic(grid) if balls is None else balls, p, T, r_range)
    sup_val, sup_w = _linf_part(g, T, 1 - 1 / (2 * p.beta))
    sq, car_w = sample_carleson(g, p, balls)
    car = math.sqrt(sq)
    return NormReport(
        norm="x",
        value=sup_val + car,
        witness={"sup_part": sup_val, "sup_witness": sup_w, "carleson_part": car, "carleson_witness": car_w},
        params={**p.as_dict(), "T": T, "r_range": r_range},
        convention_notes=["value is the sum of the two suprema"],
        quadrature={"grid": _grid_note(grid), "excluded_diagonal": False, "time_nodes": int(g.times.size), "rates": {}},
    )


NYQUIST_AMPLIFICATION_LIMIT = 1e6


def nk_norms(
    u: FieldHistory,
    p: FracParams,
    k: int,
    T: float = math.inf,
    balls: BallFamily | None = None,
    r_range: str = "r2beta",
) -> tuple[NormReport, NormReport]:
    """Sup-in-time and Carleson norms of all order-``k`` derivatives with their time weights."""
    if k < 0:
        raise ValueError("derivative order must be nonnegative")
    if 2.0**k > NYQUIST_AMPLIFICATION_LIMIT:
        raise ValueError(f"derivative order {k} exceeds the resolution guard (2^k > {NYQUIST_AMPLIFICATION_LIMIT:g})")
    grid = u.grid
    balls = restrict_balls(BallFamily.dyadic(grid) if balls is None else balls, p, T, r_range)
    sup_power = (2 * p.beta - 1 + k) / (2 * p.beta)
    best_inf, w_inf = -1.0, None
    best_c, w_c = -1.0, None
    for gamma in multi_indices(grid.dim, k):
        g = u.physical(derivative_multiplier(grid, gamma))
        val, wit = _linf_part(g, T, sup_power)
        if val > best_inf:
            best_inf, w_inf = val, {**wit, "multi_index": list(gamma)}
        sq, wit = sample_carleson(g, p, balls, extra_power=-k / p.beta)
        if sq > best_c:
            best_c, w_c = sq, {**wit, "multi_index": list(gamma), "squared": sq}
    common = {"params": {**p.as_dict(), "T": T, "k": k, "r_range": r_range}, "convention_notes": [NYQUIST_NOTE]}
    quad = {"grid": _grid_note(grid), "excluded_diagonal": False, "time_nodes": int(u.times.size), "rates": {}}
    return (
        NormReport(norm="n_inf", value=best_inf, witness=w_inf, quadrature=quad, **common),
        NormReport(norm="n_carleson", value=math.sqrt(best_c), witness=w_c, quadrature=dict(quad), **common),
    )


# ------------------------------------------------------ wavelet windows


@dataclass(frozen=True)
class Window:
    """A window given by its Fourier symbol ``symbol(xi, xi_odd)``.

    ``vanishing`` is the order ``v`` with ``|symbol(t xi)|^2 ~ t^v`` as ``t -> 0``.
    """

    symbol: Callable
    vanishing: float = 2.0
    name: str = "window"

    def multiplier(self, grid: TorusGrid, t: float) -> np.ndarray:
        return self.symbol(tuple(t * x for x in grid.xi), tuple(t * x for x in grid.xi_odd))

    def profile(self, grid: TorusGrid, t: float = 1.0) -> np.ndarray:
        """Periodized physical window ``t^(-n) phi(x / t)`` centered at the origin."""
        v = sfft.ifftn(self.multiplier(grid, t)) * grid.size / grid.period**grid.dim
        return v


def canonical_window(beta: float, axis: int = 0) -> Window:
    """Derivative along ``axis`` of the fractional heat kernel at time one."""

    def symbol(xi, xi_odd):
        sq = sum(x**2 for x in xi)
        return 1j * xi_odd[axis] * np.exp(-(sq**beta))

    return Window(symbol, 2.0, f"heat_kernel_derivative_{axis}")


def check_window(window: Window, dim: int = 2, points: int = 128, period: float = 64.0) -> dict:
    """Numerical admissibility: zero mean, integrability and ``(1+|x|)^(-(n+1))`` decay."""
    grid = TorusGrid(dim, points if dim < 3 else 64, period)
    sym = window.multiplier(grid, 1.0)
    peak = float(np.max(np.abs(sym)))
    mean = float(abs(sym.reshape(-1)[0]))
    phi = np.abs(window.profile(grid))
    r = np.sqrt(np.sum(grid.periodic_offset(np.zeros(dim)) ** 2, axis=0))
    weighted = phi * (1 + r) ** (dim + 1)
    inner = float(np.max(np.where(r <= period / 8, weighted, 0)))
    outer = float(np.max(np.where(r >= period / 4, weighted, 0)))
    l1 = float(np.sum(phi) * grid.cell_volume)
    report = {
        "zero_mean": mean <= 1e-12 * max(peak, 1e-300),
        "l1_norm": l1,
        "decay_inner": inner,
        "decay_outer": outer,
    }
    report["decays"] = outer <= 10 * inner
    report["admissible"] = report["zero_mean"] and report["decays"] and math.isfinite(l1)
    return report


def wavelet_time_rule(grid: TorusGrid, radii, order: int = 8) -> GaussCells:
    xi_max = float(np.sqrt(np.max(grid.xi_norm_sq)))
    floor = min(min(radii) / 16, 1e-2 / xi_max)
    return GaussCells(_ladder_edges(radii, math.sqrt(2.0), floor), order)


def wavelet_carleson_norm(
    f: SpectralField,
    window: Window,
    p: FracParams,
    balls: BallFamily | None = None,
    validate: bool = True,
) -> NormReport:
    """``sup r^(2a-n+2b-2) int_0^r int_B |f * phi_t|^2 t^(-1-2(a-b+1))``, square-rooted."""
    grid = f.grid
    if validate:
        chk = check_window(window, grid.dim)
        if not chk["admissible"]:
            raise ValueError(f"window {window.name} fails admissibility: {chk}")
    balls = BallFamily.dyadic(grid) if balls is None else balls
    rule = wavelet_time_rule(grid, balls.radii)
    power = 1 + 2 * p.gap
    if window.vanishing - power <= -1:
        raise ValueError("time weight is not integrable for this window")
    weights = np.stack([rule.weights(r, power, window.vanishing) for r in balls.radii])
    axes = tuple(range(1, grid.dim + 1))

    def density(i):
        c = f.coeffs * window.multiplier(grid, float(rule.nodes[i]))
        v = sfft.ifftn(c * grid.size, axes=axes)
        return np.sum(np.abs(v) ** 2, axis=0)

    sq, witness = ball_time_sup(grid, balls, weights, density, _carleson_exponent(p, grid.dim))
    witness["squared"] = sq
    return NormReport(
        norm="wavelet_carleson",
        value=math.sqrt(sq),
        witness=witness,
        params={**p.as_dict(), "window": window.name},
        convention_notes=[NYQUIST_NOTE],
        quadrature={"grid": _grid_note(grid), "excluded_diagonal": False, "time_nodes": int(rule.nodes.size), "rates": {}},
    )


def wavelet_measure(f: SpectralField, window: Window, times) -> HalfSpaceSample:
    """Density ``|f * phi_t|^2`` of the wavelet measure (the time weight is applied by the caller)."""
    grid = f.grid
    axes = tuple(range(1, grid.dim + 1))
    vals = []
    for t in times:
        v = sfft.ifftn(f.coeffs * window.multiplier(grid, float(t)) * grid.size, axes=axes)
        vals.append(np.sum(np.abs(v) ** 2, axis=0))
    return HalfSpaceSample(grid, np.asarray(times, dtype=float), np.stack(vals))


def p_carleson_norm(
    mu: HalfSpaceSample,
    p_exp: float,
    cubes: CubeFamily,
    time_power: float = 0.0,
) -> NormReport:
    """``sup mu(S(I)) / l(I)^(n p)`` with ``d mu = mu(t, x) t^(-time_power) dt dx``."""
    if len(cubes) == 0:
        raise ValueError("cube family is empty")
    if np.any(np.asarray(mu.values) < 0):
        raise ValueError("measure samples must be nonnegative")
    grid = mu.grid
    dens = mu.modulus_sq() if mu.is_vector else np.asarray(mu.values, dtype=float)
    n = grid.dim
    by_side: dict[int, np.ndarray] = {}
    best, where = -1.0, None
    for cube in cubes:
        l = cube.side(grid)
        if cube.size not in by_side:
            w = mu.rule.weights(l, time_power)
            by_side[cube.size] = np.tensordot(w, dens, axes=(0, 0))
        block = _block(by_side[cube.size][None], grid, cube.corner, cube.size)
        s = float(np.sum(block)) * grid.cell_volume / l ** (n * p_exp)
        if s > best:
            best, where = s, cube
    return NormReport(
        norm="p_carleson",
        value=max(best, 0.0),
        witness={"cube": where.describe(grid)},
        params={"p": p_exp, "time_power": time_power},
        convention_notes=["Carleson box S(I) = I x (0, l(I))"],
        quadrature={"grid": _grid_note(grid), "excluded_diagonal": False, "time_nodes": int(mu.times.size), "rates": {}},
    )


# ------------------------------------------------------ inequality checks


def poincare_check(psi: SpectralField, cube: Cube, beta: float, alpha1: float, alpha2: float) -> dict:
    """Evaluate the fractional Poincare chain on one cube.

    ``L = ||psi - psi_I||``, ``M_a = n^(n/4) diam^(a-b+1) U(I; a)^(1/2)`` for
    ``a = alpha1, alpha2``, and ``R = diam ||grad psi||_{L^2(I)}``.  The first two
    links are checked with their stated constants; ``M2 / R`` is reported so a
    caller can fit the last constant.
    """
    if not (0 <= alpha1 <= alpha2 < beta):
        raise ValueError("need 0 <= alpha1 <= alpha2 < beta")
    grid = psi.grid
    n = grid.dim
    values = _samples(psi)
    block = _block(values, grid, cube.corner, cube.size).reshape(values.shape[0], -1)
    diam = math.sqrt(n) * cube.side(grid)
    L = math.sqrt(float(np.sum(np.abs(block - block.mean(axis=1, keepdims=True)) ** 2)) * grid.cell_volume)

    sampler = _CubeSampler(psi, PLAIN)

    def middle(a):
        u = _cube_energy(sampler, cube, n + 2 * (a - beta + 1))
        return n ** (n / 4) * diam ** (a - beta + 1) * math.sqrt(u)

    M1, M2 = middle(alpha1), middle(alpha2)
    grads = []
    for axis in range(n):
        gamma = [0] * n
        gamma[axis] = 1
        grads.append(_samples(apply_multiplier(psi, derivative_multiplier(grid, gamma))))
    gsq = sum(float(np.sum(np.abs(_block(g, grid, cube.corner, cube.size)) ** 2)) for g in grads)
    R = diam * math.sqrt(gsq * grid.cell_volume)
    tol = 1 + 1e-12
    return {
        "oscillation": L,
        "fractional_low": M1,
        "fractional_high": M2,
        "gradient": R,
        "low_bounds_oscillation": L <= M1 * tol + 1e-300,
        "high_bounds_low": M1 <= M2 * tol + 1e-300,
        "gradient_ratio": M2 / R if R > 0 else None,
    }


def _zero_mean(f: SpectralField, what: str):
    c0 = np.abs(f.coeffs[(slice(None),) + f.grid.zero_mode])
    scale = max(float(np.max(np.abs(f.coeffs))), 1e-300)
    if np.any(c0 > 1e-12 * scale):
        raise ValueError(f"{what} needs a zero-mean field")


def _inverse_laplacian(grid: TorusGrid) -> np.ndarray:
    sq = grid.xi_norm_sq
    inv = np.zeros(grid.shape)
    inv[sq > 0] = 1.0 / sq[sq > 0]
    return inv


def riesz_stability_check(
    f: SpectralField,
    p: FracParams,
    T: float = math.inf,
    balls: BallFamily | None = None,
) -> dict:
    """Ratios of the Carleson-type norm of ``d_j d_k (-Delta)^(-1) f`` to that of ``f``."""
    _zero_mean(f, "riesz_stability_check")
    base = carleson_q_inverse_norm(f, p, T, balls).value
    if base == 0:
        raise ValueError("reference norm vanishes; ratio undefined")
    grid = f.grid
    inv = _inverse_laplacian(grid)
    ratios = {}
    for j in range(grid.dim):
        for k in range(j, grid.dim):
            gamma = [0] * grid.dim
            gamma[j] += 1
            gamma[k] += 1
            g = apply_multiplier(f, derivative_multiplier(grid, gamma) * inv)
            ratios[f"{j + 1}{k + 1}"] = carleson_q_inverse_norm(g, p, T, balls).value / base
    return {"base_norm": base, "ratios": ratios, "max_ratio": max(ratios.values())}


def divergence_representation_check(
    f: SpectralField,
    p: FracParams,
    cubes: CubeFamily,
    T: float = math.inf,
    balls: BallFamily | None = None,
) -> dict:
    """Write ``f = sum_k d_k f_k`` with ``f_k = -d_k (-Delta)^(-1) f`` and compare norms."""
    _zero_mean(f, "divergence_representation_check")
    grid = f.grid
    inv = _inverse_laplacian(grid)
    parts = []
    recon = np.zeros_like(f.coeffs, dtype=complex)
    for k in range(grid.dim):
        gamma = [0] * grid.dim
        gamma[k] = 1
        d = derivative_multiplier(grid, gamma)
        fk = apply_multiplier(f, -d * inv)
        parts.append(fk)
        recon = recon + fk.coeffs * d
    scale = max(float(np.max(np.abs(f.coeffs))), 1e-300)
    error = float(np.max(np.abs(recon - f.coeffs))) / scale
    lhs = carleson_q_inverse_norm(f, p, T, balls).value
    rhs = sum(q_norm(fk, p, cubes).value for fk in parts)
    return {
        "reconstruction_error": error,
        "q_inverse_norm": lhs,
        "component_q_norm_sum": rhs,
        "ratio": lhs / rhs if rhs > 0 else None,
        "components": parts,
    }


def semigroup_besov_norm(f: SpectralField, beta: float, radii=None) -> NormReport:
    """``sup_r r^(2 beta - 1) ||exp(-r^(2 beta) (-Delta)^beta) f||_inf`` over dyadic radii."""
    grid = f.grid
    if radii is None:
        radii = [grid.period / 4 / 2**j for j in range(int(math.log2(grid.points)) + 3)]
    best, where = -1.0, None
    for r in radii:
        v = _samples(apply_multiplier(f, heat_multiplier(grid, r ** (2 * beta), beta)))
        s = r ** (2 * beta - 1) * float(np.max(np.sqrt(np.sum(np.abs(v) ** 2, axis=0))))
        if s > best:
            best, where = s, r
    return NormReport(
        norm="semigroup_besov",
        value=best,
        witness={"radius": where},
        params={"beta": beta},
        quadrature={"grid": _grid_note(grid), "excluded_diagonal": False, "rates": {}},
    )


EMBEDDING_PAIRS = ("besov_to_q", "besov_to_q_shifted", "besov_to_q_inverse", "q_inverse_to_besov")


def embedding_check(
    f: SpectralField,
    pair_id: str,
    p: FracParams,
    cubes: CubeFamily | None = None,
    balls: BallFamily | None = None,
    q: float = 2.0,
    besov_p: float | None = None,
    shift: float | None = None,
    rule: PairRule = PLAIN,
) -> dict:
    """Both sides of one embedding inequality and their ratio ``target / source``.

    ``shift`` is the integrability index ``gamma_2`` of the shifted pair.
    """
    if pair_id not in EMBEDDING_PAIRS:
        raise ValueError(f"unknown pair {pair_id!r}; choose from {EMBEDDING_PAIRS}")
    grid = f.grid
    n = grid.dim
    a, b = p.alpha, p.beta
    cubes = CubeFamily.dyadic(grid) if cubes is None else cubes
    if pair_id == "besov_to_q":
        if n < 2 or a + b - 1 <= 0 or not 1 <= q <= 2 or b >= 1:
            raise ValueError("besov_to_q needs n >= 2, alpha + beta > 1, 1 <= q <= 2 and beta < 1")
        s, bp = p.gap, n / (a + b - 1)
        target = q_norm(f, p, cubes, rule).value
        source = besov_norm(f, s, bp, q)
        names = ("q", f"besov({s:g},{bp:g},{q:g})")
    elif pair_id == "besov_to_q_shifted":
        g2 = 0.5 if shift is None else shift
        g1 = g2 + 2 - 2 * b
        if n < 2 or g2 <= 0 or g1 <= p.gap or not q >= 1 or b >= 1 or n / g2 < 1:
            raise ValueError("besov_to_q_shifted needs n >= 2, gamma_2 in (0, n], gamma_1 > alpha - beta + 1, beta < 1")
        target = q_norm(f, p, cubes, rule).value
        source = besov_norm(f, g1, n / g2, q)
        names = ("q", f"besov({g1:g},{n / g2:g},{q:g})")
    elif pair_id == "besov_to_q_inverse":
        bp = 4.0 if besov_p is None else besov_p
        if not (a > 0 and b < 1 and a + b - 1 >= 0 and 2 < bp < math.inf and a + b < 1 + n / bp < 2 * b):
            raise ValueError("besov_to_q_inverse needs alpha > 0, alpha + beta >= 1, 2 < p and alpha + beta < 1 + n/p < 2 beta")
        s = 1 + n / bp - 2 * b
        target = carleson_q_inverse_norm(f, p, balls=balls).value
        source = besov_norm(f, s, bp, q)
        names = ("q_inverse", f"besov({s:g},{bp:g},{q:g})")
    else:
        target = semigroup_besov_norm(f, b).value
        source = carleson_q_inverse_norm(f, p, balls=balls).value
        names = ("semigroup_besov", "q_inverse")
    skipped = source == 0
    return {
        "pair": pair_id,
        "target": names[0],
        "source": names[1],
        "target_value": target,
        "source_value": source,
        "ratio": None if skipped else target / source,
        "skipped": skipped,
    }
