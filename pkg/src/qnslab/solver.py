"""Mild solutions of the fractionally dissipated Navier-Stokes system on the torus.

Time integrals against the semigroup are done mode by mode.  The Duhamel
term uses an exponential integrator: the integrand is interpolated linearly
between time steps and integrated exactly against ``exp(-(t - s) a)`` with
``a = |xi|^(2 beta)``, which gives a two-term recursion over the steps.
Step ``0`` is ``s = 0``; the remaining steps are the nodes of a ``TimeGrid``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .geometry import BallFamily
from .halfspace import FieldHistory, GaussCells, HalfSpaceSample, LogCells, TimeRule
from .params import FracParams, fit_constant, to_jsonable
from .qnorms import (
    ball_time_sup,
    carleson_q_inverse_norm,
    nk_norms,
    restrict_balls,
    x_norm,
)
from .spectral import SpectralField, TorusGrid, leray_project, scaling_transform

OUTSIDE_REGIME = "outside small-data regime"
CONTRACTING = "contracting"
TIME_POWER_NOTE = "the operator nabla^(r + 2 beta) is the radial multiplier |xi|^(r + 2 beta)"
EXTRAPOLATION_NOTE = "forcing on (0, t_1) is the constant value at t_1"


class SolverDivergence(RuntimeError):
    """Raised when an iterate stops being finite."""


# ------------------------------------------------------------------ time grid


@dataclass(frozen=True)
class TimeGrid:
    """Nodes in ``(0, T]`` with their rule for ``int_0^T . dt / t^p``."""

    horizon: float
    rule: TimeRule
    kind: str = "geometric"
    ratio: float = 2.0

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.rule.nodes.size < 8:
            raise ValueError("a time grid needs at least 8 nodes")
        if self.rule.nodes[-1] > self.horizon * (1 + 1e-12):
            raise ValueError("nodes exceed the horizon")

    @classmethod
    def geometric(cls, T: float, M: int, ratio: float) -> "TimeGrid":
        if M < 8:
            raise ValueError("a time grid needs at least 8 nodes")
        if not ratio > 1:
            raise ValueError("geometric ratio must exceed 1")
        nodes = T * ratio ** (-np.arange(M - 1, -1, -1, dtype=float))
        nodes[-1] = T
        return cls(T, LogCells(nodes), "geometric", ratio)

    @classmethod
    def spanning(cls, T: float, M: int, first: float) -> "TimeGrid":
        """Geometric grid of ``M`` nodes from ``first`` to ``T``."""
        return cls.geometric(T, M, (T / first) ** (1.0 / (M - 1)))

    @classmethod
    def gauss(cls, T: float, cells: int = 30, ratio: float = 2.0, order: int = 8) -> "TimeGrid":
        """Gauss-Legendre nodes on geometric cells ending at ``T`` (high-order rule)."""
        return cls(T, GaussCells.geometric(T, cells, ratio, order), "gauss", ratio)

    @property
    def nodes(self) -> np.ndarray:
        return self.rule.nodes

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def steps(self) -> np.ndarray:
        return np.concatenate([[0.0], self.nodes])

    def weights(self, power: float, vanishing: float = 0.0) -> np.ndarray:
        return self.rule.weights(self.horizon, power, vanishing)

    def refined(self) -> "TimeGrid":
        """Halve the log-spacing and keep the smallest node (and the Gauss floor)."""
        if self.kind == "geometric":
            return TimeGrid.geometric(self.horizon, 2 * self.size - 1, math.sqrt(self.ratio))
        r = self.rule
        cells = r.edges.size
        return TimeGrid.gauss(self.horizon, 2 * cells - 1, math.sqrt(self.ratio), r.order)

    def scaled(self, factor: float) -> "TimeGrid":
        """Same grid with every time multiplied by ``factor``."""
        if self.kind == "geometric":
            return TimeGrid(self.horizon * factor, LogCells(self.nodes * factor), "geometric", self.ratio)
        r = self.rule
        return TimeGrid(self.horizon * factor, GaussCells(r.edges * factor, r.order), "gauss", self.ratio)

    def describe(self) -> dict:
        return {"kind": self.kind, "horizon": self.horizon, "nodes": int(self.size), "ratio": self.ratio, "first": float(self.nodes[0])}


# ------------------------------------------------------------------ spectral helpers


def _rates(grid: TorusGrid, beta: float) -> np.ndarray:
    return grid.xi_norm_sq**beta


def _spatial_axes(grid: TorusGrid, lead: int) -> tuple[int, ...]:
    return tuple(range(lead, lead + grid.dim))


def dealias_mask(grid: TorusGrid) -> np.ndarray:
    """Two-thirds rule: keep modes with every ``|k_i| <= (N - 1) // 3``."""
    K = (grid.points - 1) // 3
    keep = np.ones(grid.shape, dtype=bool)
    for k in grid.integer_wavenumbers:
        keep &= np.abs(k) <= K
    return keep


def _leray(c: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Leray projection along the component axis ``-n-1`` of ``(..., n, N, ..., N)``."""
    xi = grid.xi_odd
    sq = sum(x**2 for x in xi)
    inv = np.divide(1.0, sq, out=np.zeros(grid.shape), where=sq > 0)
    ax = c.ndim - grid.dim - 1
    dot = sum(np.take(c, j, axis=ax) * xi[j] for j in range(grid.dim)) * inv
    return c - np.stack([dot * x for x in xi], axis=ax)


def _flux(pairs, grid: TorusGrid, project: bool = True) -> np.ndarray:
    """``P div(sum u (x) v)`` for arrays of coefficients ``(..., n, N, ..., N)``.

    ``(div(u (x) v))_k = sum_j d_j (u_j v_k)``; products are dealiased by the
    two-thirds rule before and after multiplication.
    """
    keep = dealias_mask(grid)
    total = None
    for u, v in pairs:
        lead = u.ndim - grid.dim - 1
        axes = _spatial_axes(grid, lead + 1)
        up = sfft.ifftn(u * keep * grid.size, axes=axes).real
        vp = up if v is u else sfft.ifftn(v * keep * grid.size, axes=axes).real
        comps = []
        for k in range(grid.dim):
            acc = 0
            for j in range(grid.dim):
                prod = sfft.fftn(np.take(up, j, axis=lead) * np.take(vp, k, axis=lead), axes=_spatial_axes(grid, lead)) / grid.size
                acc = acc + 1j * grid.xi_odd[j] * prod
            comps.append(acc * keep)
        out = np.stack(comps, axis=lead)
        total = out if total is None else total + out
    return _leray(total, grid) if project else total


def nonlinear_flux(u: SpectralField, v: SpectralField | None = None, project: bool = True) -> SpectralField:
    """``P div(u (x) v)`` with two-thirds dealiasing (``v = u`` when omitted)."""
    v = u if v is None else v
    grid = u.grid
    if v.grid != grid:
        raise ValueError("fields live on different grids")
    if u.components != grid.dim or v.components != grid.dim:
        raise ValueError("the nonlinear term needs vector fields with n components")
    uc = np.asarray(u.coeffs)
    vc = uc if v is u else np.asarray(v.coeffs)
    return SpectralField(grid, _flux([(uc, vc)], grid, project), True)


# ------------------------------------------------------------------ exponential integrator


def _phi1(z: np.ndarray) -> np.ndarray:
    small = np.abs(z) < 1e-3
    zs = np.where(small, 0.0, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = -np.expm1(-zs) / zs
    series = 1 - z / 2 + z**2 / 6 - z**3 / 24
    return np.where(small, series, direct)


def _psi(z: np.ndarray) -> np.ndarray:
    """``int_0^1 u exp(-z u) du``."""
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    direct = (-np.expm1(-zs) - zs * np.exp(-zs)) / zs**2
    series = 0.5 - z / 3 + z**2 / 8 - z**3 / 30
    return np.where(small, series, direct)


def exp_convolve(values: np.ndarray, steps: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """``Y(s_m) = int_0^{s_m} exp(-(s_m - s) a) f(s) ds`` for piecewise-linear ``f``.

    ``values`` has the step axis first and ends with the grid axes matched by
    ``rates``; the result has the same shape with ``Y(s_0) = 0``.
    """
    out = np.zeros_like(values, dtype=complex)
    for i in range(steps.size - 1):
        h = steps[i + 1] - steps[i]
        z = rates * h
        decay = np.exp(-z)
        p1, ps = _phi1(z), _psi(z)
        out[i + 1] = decay * out[i] + h * (ps * values[i] + (p1 - ps) * values[i + 1])
    return out


def _steps_array(history: FieldHistory, initial: SpectralField | None) -> np.ndarray:
    c = np.asarray(history.coeffs)
    first = c[:1] if initial is None else np.asarray(initial.coeffs)[None]
    return np.concatenate([first, c], axis=0)


def _check_history(h: FieldHistory, tg: TimeGrid):
    if h.times.shape != tg.nodes.shape or not np.allclose(h.times, tg.nodes, rtol=1e-12):
        raise ValueError("field history is not sampled on the time grid nodes")


def _duhamel(flux_steps: np.ndarray, tg: TimeGrid, beta: float, grid: TorusGrid) -> np.ndarray:
    return exp_convolve(flux_steps, tg.steps, _rates(grid, beta))


def bilinear_B(
    u: FieldHistory,
    v: FieldHistory,
    tg: TimeGrid,
    p: FracParams,
    u_initial: SpectralField | None = None,
    v_initial: SpectralField | None = None,
) -> FieldHistory:
    """``B(u, v)(t) = int_0^t exp(-(t - s)(-Delta)^beta) P div(u (x) v)(s) ds`` at every node.

    Values at ``s = 0`` come from the initial fields when given and are
    otherwise taken equal to the first node.
    """
    grid = u.grid
    _check_history(u, tg)
    _check_history(v, tg)
    U = _steps_array(u, u_initial)
    V = U if v is u and v_initial is u_initial else _steps_array(v, v_initial)
    out = _duhamel(_flux([(U, V)], grid), tg, p.beta, grid)
    return FieldHistory(grid, tg.nodes, _leray(out[1:], grid), True, tg.rule)


# ------------------------------------------------------------------ Picard iteration


@dataclass
class SolverState:
    grid: TorusGrid
    grid_t: TimeGrid
    initial: SpectralField
    steps: np.ndarray  # (S, n, N, ..., N) including s = 0
    iteration: int = 0
    increments: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    divergence: list = field(default_factory=list)
    regime: str = CONTRACTING
    converged: bool = False
    linear_norm: float = 0.0

    @property
    def history(self) -> FieldHistory:
        return FieldHistory(self.grid, self.grid_t.nodes, self.steps[1:], True, self.grid_t.rule)

    def at(self, m: int) -> SpectralField:
        """Field at node ``m`` (``0``-based over the positive nodes)."""
        return SpectralField(self.grid, self.steps[m + 1], True)

    def manifest(self, p: FracParams) -> dict:
        return to_jsonable(
            {
                "params": p.as_dict(),
                "grid": {"n": self.grid.dim, "N": self.grid.points, "L": self.grid.period},
                "time_grid": self.grid_t.describe(),
                "iterations": self.iteration,
                "increment_norms": self.increments,
                "contraction_ratios": self.ratios,
                "divergence_residuals": self.divergence,
                "regime": self.regime,
                "converged": self.converged,
                "linear_x_norm": self.linear_norm,
            }
        )


def _history_x_norm(steps: np.ndarray, grid: TorusGrid, tg: TimeGrid, p: FracParams, balls: BallFamily | None) -> float:
    h = FieldHistory(grid, tg.nodes, steps[1:], True, tg.rule)
    return x_norm(h.physical(), p, tg.horizon, balls).value


def _divergence_defect(steps: np.ndarray, grid: TorusGrid) -> float:
    div = sum(1j * grid.xi_odd[j] * steps[:, j] for j in range(grid.dim))
    scale = float(np.max(np.abs(steps)))
    return float(np.max(np.abs(div))) / scale if scale > 0 else 0.0


def linear_evolution(a: SpectralField, tg: TimeGrid, beta: float) -> np.ndarray:
    """``exp(-s (-Delta)^beta) a`` on every step, shape ``(S, m, N, ..., N)``."""
    rates = _rates(a.grid, beta)
    return np.stack([np.asarray(a.coeffs) * np.exp(-s * rates) for s in tg.steps])


def picard_solve(
    a: SpectralField,
    tg: TimeGrid,
    p: FracParams,
    J_max: int = 20,
    tol: float = 1e-12,
    balls: BallFamily | None = None,
    stop_ratio: float | None = None,
) -> SolverState:
    """Picard iteration ``u^{j+1} = u^0 - B(u^j, u^j)`` with ``u^0`` the linear evolution.

    Increments ``d^j = u^{j+1} - u^j`` are formed from the bilinear identity
    ``d^j = -B(d^{j-1}, u^j) - B(u^{j-1}, d^{j-1})`` so that they keep full
    relative precision however small they get.  The iteration stops once
    ``||d^j||_X < tol ||u^0||_X`` or after ``J_max`` increments; with
    ``stop_ratio`` it also stops at the first ratio above that value.
    """
    grid = a.grid
    if a.components != grid.dim:
        raise ValueError("initial data must be a vector field with n components")
    div = sum(1j * grid.xi_odd[j] * a.coeffs[j] for j in range(grid.dim))
    scale = float(np.max(np.abs(a.coeffs)))
    if scale > 0 and float(np.max(np.abs(div))) > 1e-10 * scale * max(1.0, float(np.max(grid.xi_norm))):
        warnings.warn("initial data is not divergence-free; projecting it", stacklevel=2)
        a = leray_project(a)
    u0 = linear_evolution(a, tg, p.beta)
    state = SolverState(grid, tg, a, u0.copy())
    lin = _history_x_norm(u0, grid, tg, p, balls) if scale > 0 else 0.0
    state.linear_norm = lin
    if scale == 0:
        state.iteration = 1
        state.increments = [0.0]
        state.converged = True
        state.divergence = [0.0]
        return state
    prev = None
    u = u0
    d = None
    for j in range(J_max):
        if j == 0:
            flux = _flux([(u0, u0)], grid)
        else:
            flux = _flux([(d, u), (prev, d)], grid)
        d_new = -_leray(_duhamel(flux, tg, p.beta, grid), grid)
        if not np.all(np.isfinite(d_new)):
            bad = int(np.argmax(~np.all(np.isfinite(d_new.reshape(d_new.shape[0], -1)), axis=1)))
            raise SolverDivergence(f"non-finite increment at iteration {j}, time step {bad}")
        prev, u, d = u, u + d_new, d_new
        inc = _history_x_norm(d, grid, tg, p, balls)
        state.increments.append(inc)
        state.iteration = j + 1
        if j >= 1 and state.increments[-2] > 0:
            state.ratios.append(inc / state.increments[-2])
            if state.ratios[-1] >= 1:
                state.regime = OUTSIDE_REGIME
        if not np.all(np.isfinite(u)):
            raise SolverDivergence(f"non-finite iterate at iteration {j}")
        if inc < tol * lin:
            state.converged = True
            break
        if stop_ratio is not None and state.ratios and state.ratios[-1] > stop_ratio:
            break
    state.steps = u
    state.divergence = [_divergence_defect(u[i : i + 1], grid) for i in range(1, u.shape[0])]
    return state


def smallness_threshold(
    a: SpectralField,
    tg: TimeGrid,
    p: FracParams,
    iterations: int = 6,
    limit: float = 2.0 / 3.0,
    lo: float = 1e-4,
    hi: float = 1e4,
    steps: int = 24,
    balls: BallFamily | None = None,
) -> dict:
    """Largest amplitude factor ``c`` (bisected in ``log c``) for which ``c a`` contracts.

    Contraction means all ratios for iterations ``1..iterations`` stay at or
    below ``limit``.  This is an empirical threshold for the given data shape.
    """

    def contracts(c):
        try:
            s = picard_solve(a * c, tg, p, J_max=iterations + 1, tol=0.0, balls=balls, stop_ratio=limit)
        except SolverDivergence:
            return False
        return len(s.ratios) >= iterations and max(s.ratios[:iterations]) <= limit

    if not contracts(lo):
        raise ValueError("data does not contract even at the smallest amplitude")
    if contracts(hi):
        return {"threshold": hi, "bracket": [hi, hi], "saturated": True}
    a_lo, a_hi = math.log(lo), math.log(hi)
    for _ in range(steps):
        mid = (a_lo + a_hi) / 2
        if contracts(math.exp(mid)):
            a_lo = mid
        else:
            a_hi = mid
    return {"threshold": math.exp(a_lo), "bracket": [math.exp(a_lo), math.exp(a_hi)], "saturated": False}


# ------------------------------------------------------------------ residual


def _gamma_minus(x):
    # 2 (x - 1 + e^-x) / x^2
    small = x < 1e-2
    xs = np.where(small, 1.0, x)
    direct = 2 * (xs + np.expm1(-xs)) / xs**2
    return np.where(small, 1 - x / 3 + x**2 / 12 - x**3 / 60, direct)


def _gamma_plus(x):
    # 2 (e^x - 1 - x) / x^2, capped to avoid overflow
    small = x < 1e-2
    xs = np.clip(np.where(small, 1.0, x), None, 700.0)
    direct = 2 * (np.expm1(xs) - xs) / xs**2
    return np.where(small, 1 + x / 3 + x**2 / 12 + x**3 / 60, direct)


def fitted_weights(h1: float, h2: float, rates: np.ndarray):
    """Three-point derivative weights exact for ``1``, ``t`` and ``exp(-a t)`` at the middle node."""
    g2 = _gamma_minus(rates * h2)
    G1 = _gamma_plus(rates * h1)
    cm = -h2 * g2 / (h1 * (h1 * G1 + h2 * g2))
    cp = (1 + h1 * cm) / h2
    return cm, -cm - cp, cp


def residual(state: SolverState, p: FracParams, nonlinear: bool = True) -> dict:
    """Relative residual of ``u_t + (-Delta)^beta u + P div(u (x) u)`` at interior nodes.

    The time derivative is an exponentially fitted centered difference; the
    scale at each node is ``||(-Delta)^beta u|| + ||P div(u (x) u)||``.
    """
    grid, U, s = state.grid, state.steps, state.grid_t.steps
    if s.size < 3:
        raise ValueError("need at least three time steps")
    rates = _rates(grid, p.beta)
    flux = _flux([(U, U)], grid) if nonlinear else np.zeros_like(U)
    out = []
    for m in range(1, s.size - 1):
        cm, c0, cp = fitted_weights(s[m] - s[m - 1], s[m + 1] - s[m], rates)
        lin = rates * U[m]
        r = cm * U[m - 1] + c0 * U[m] + cp * U[m + 1] + lin + flux[m]
        scale = math.sqrt(float(np.sum(np.abs(lin) ** 2))) + math.sqrt(float(np.sum(np.abs(flux[m]) ** 2)))
        num = math.sqrt(float(np.sum(np.abs(r) ** 2)))
        out.append(num / scale if scale > 0 else 0.0)
    return {"times": s[1:-1].tolist(), "relative": out, "max": max(out) if out else 0.0}


# ------------------------------------------------------------------ scaling covariance


def scaling_covariance_check(a: SpectralField, tg: TimeGrid, p: FracParams, lam: int = 2, J_max: int = 30, tol: float = 1e-13) -> dict:
    """Solve with ``lam^(2 beta - 1) a(lam .)`` on the shrunk horizon and compare with the rescaled solution."""
    gamma = 2 * p.beta - 1
    factor = float(lam) ** (-2 * p.beta)
    base = picard_solve(a, tg, p, J_max=J_max, tol=tol)
    scaled = picard_solve(scaling_transform(a, lam, gamma), tg.scaled(factor), p, J_max=J_max, tol=tol)
    errors = []
    for m in range(tg.size):
        want = scaling_transform(base.at(m), lam, gamma)
        got = scaled.at(m)
        ref = want.l2_norm()
        errors.append((got - want).l2_norm() / ref if ref > 0 else 0.0)
    return {"relative_errors": errors, "max": max(errors), "lam": lam, "iterations": [base.iteration, scaled.iteration]}


# ------------------------------------------------------------------ quadrature lemmas


def _history_steps(f: FieldHistory, tg: TimeGrid) -> np.ndarray:
    _check_history(f, tg)
    return _steps_array(f, None)


def _weighted_l2(values: np.ndarray, tg: TimeGrid, power: float, grid: TorusGrid) -> float:
    """``int_0^T ||g(t)||_2^2 t^(-power) dt`` from coefficients at the positive nodes."""
    energy = np.sum(np.abs(values.reshape(values.shape[0], -1)) ** 2, axis=1) * grid.period**grid.dim
    return float(np.dot(tg.weights(power), energy))


def maximal_regularity_check(f: FieldHistory, tg: TimeGrid, p: FracParams) -> dict:
    """Both sides of the weighted maximal-regularity estimate for ``int_0^t e^{-(t-s)L} L f ds``."""
    grid = f.grid
    rates = _rates(grid, p.beta)
    F = _history_steps(f, tg)
    power = p.alpha / p.beta
    rhs = _weighted_l2(F[1:], tg, power, grid)
    if rhs == 0:
        return {"skipped": True, "lhs": 0.0, "rhs": 0.0, "ratio": None}
    A = exp_convolve(F * rates, tg.steps, rates)
    lhs = _weighted_l2(A[1:], tg, power, grid)
    return {"skipped": False, "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs, "notes": [EXTRAPOLATION_NOTE]}


def duhamel_carleson_check(
    N_field: HalfSpaceSample,
    tg: TimeGrid,
    p: FracParams,
    k: int,
    balls: BallFamily | None = None,
) -> dict:
    """Left side, the local Carleson quantity ``A`` and the right side of the order-``k`` estimate.

    The time horizon of the grid plays the role of the unit interval.
    """
    grid = N_field.grid
    vals = np.asarray(N_field.values, dtype=float)
    if vals.shape != (tg.size,) + grid.shape:
        raise ValueError("N must be a scalar sample on the time grid")
    if np.any(vals < 0):
        raise ValueError("N must be nonnegative")
    T = tg.horizon
    power = p.alpha / p.beta
    total = float(np.dot(tg.weights(power), vals.reshape(tg.size, -1).sum(axis=1))) * grid.cell_volume
    if total == 0:
        return {"skipped": True, "k": k}
    balls = BallFamily.dyadic(grid) if balls is None else balls
    balls = restrict_balls(balls, p, T, "r2beta")
    uppers = [r ** (2 * p.beta) for r in balls.radii]
    # ball-time truncations need cell boundaries at every r^(2 beta)
    cells = LogCells(tg.nodes)
    weights = np.stack([cells.weights(u, power) for u in uppers])
    A, witness = ball_time_sup(grid, balls, weights, lambda i: vals[i], 2 * p.alpha - grid.dim + 2 * p.beta - 2)

    axes = _spatial_axes(grid, 1)
    coeffs = sfft.fftn(vals, axes=axes) / grid.size
    steps = np.concatenate([coeffs[:1], coeffs])
    s = tg.steps
    # running integral of the piecewise-linear interpolant
    cum = np.concatenate([np.zeros((1,) + grid.shape), np.cumsum((steps[1:] + steps[:-1]) / 2 * np.diff(s).reshape((-1,) + (1,) * grid.dim), axis=0)])
    rates = _rates(grid, p.beta)
    t = tg.nodes.reshape((-1,) + (1,) * grid.dim)
    mult = (t * rates) ** (k / 2) * np.sqrt(grid.xi_norm_sq) * np.exp(-t / 2 * rates)
    lhs = _weighted_l2(mult * cum[1:], tg, power, grid)
    rhs = A * total
    return {"skipped": False, "k": k, "lhs": lhs, "A": A, "integral": total, "rhs": rhs, "ratio": lhs / rhs, "witness": witness}


_TIME_POWER_CACHE: dict = {}


def _time_power_weights(steps: np.ndarray, rates: np.ndarray, beta: float, r: int, order: int = 16, grading: int = 24) -> np.ndarray:
    """Hat-function weights of ``int_0^{s_m} e^{-(s_m - s) a}(s_m^q - s^q)^r f(s) ds``.

    Returns ``(S, S, R)``: entry ``[m, i]`` weights the step value ``f(s_i)``.
    Gauss-Legendre per cell; the first cell is graded geometrically toward 0.
    """
    key = (steps.tobytes(), rates.tobytes(), beta, r, order, grading)
    if key in _TIME_POWER_CACHE:
        return _TIME_POWER_CACHE[key]
    q = 1 / (2 * beta)
    x, w = np.polynomial.legendre.leggauss(order)
    x, w = (x + 1) / 2, w / 2
    S = steps.size
    W = np.zeros((S, S, rates.size))
    first = np.concatenate([[0.0], steps[1] * 2.0 ** (-np.arange(grading, -1, -1, dtype=float))])
    f_pts = (first[:-1, None] + np.diff(first)[:, None] * x).ravel()
    f_wts = (np.diff(first)[:, None] * w).ravel()
    for m in range(1, S):
        t = steps[m]

        def kernel(sp):
            return np.exp(-(t - sp)[..., None] * rates) * ((t**q - sp**q) ** r)[..., None]

        k0 = kernel(f_pts)
        right = f_pts / steps[1]
        W[m, 0] += ((1 - right) * f_wts) @ k0
        W[m, 1] += (right * f_wts) @ k0
        if m > 1:
            lo, hi = steps[1:m], steps[2 : m + 1]
            width = hi - lo
            sp = lo[:, None] + width[:, None] * x
            kern = kernel(sp)  # (cells, order, R)
            W[m, 1:m] += np.einsum("co,cor->cr", width[:, None] * w * (1 - x), kern)
            W[m, 2 : m + 1] += np.einsum("co,cor->cr", width[:, None] * w * x, kern)
    if len(_TIME_POWER_CACHE) > 32:
        _TIME_POWER_CACHE.clear()
    _TIME_POWER_CACHE[key] = W
    return W


def time_power_operator_check(f: FieldHistory, tg: TimeGrid, p: FracParams, r: int) -> dict:
    """Weighted ``L^2`` ratio for ``int_0^t e^{-(t-s)L}(t^q - s^q)^r |xi|^(r + 2 beta) f(s) ds``."""
    if r not in (0, 1, 2, 3):
        raise ValueError("r must be 0, 1, 2 or 3")
    grid = f.grid
    F = _history_steps(f, tg)
    power = p.alpha / p.beta
    rhs = _weighted_l2(F[1:], tg, power, grid)
    if rhs == 0:
        return {"skipped": True, "r": r}
    norm_sq = grid.xi_norm_sq
    active = np.any(np.abs(F.reshape(F.shape[0], -1, *grid.shape)) > 0, axis=(0, 1)) & (norm_sq > 0)
    uniq, inverse = np.unique(norm_sq[active], return_inverse=True)
    rates = uniq**p.beta
    W = _time_power_weights(tg.steps, rates, p.beta, r)
    lead = F.shape[1:-grid.dim]
    Fa = F.reshape((F.shape[0],) + lead + (-1,))[..., active.ravel()]
    per = W[:, :, inverse]  # (S, S, modes)
    out = np.einsum("msk,s...k->m...k", per, Fa)
    out = out * (uniq[inverse] ** ((r + 2 * p.beta) / 2))
    lhs = float(np.dot(tg.weights(power), np.sum(np.abs(out[1:].reshape(out.shape[0] - 1, -1)) ** 2, axis=1))) * grid.period**grid.dim
    return {"skipped": False, "r": r, "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs, "notes": [TIME_POWER_NOTE, EXTRAPOLATION_NOTE]}


def linear_part_regularity(
    a: SpectralField,
    tg: TimeGrid,
    p: FracParams,
    k_max: int = 2,
    state: SolverState | None = None,
    balls: BallFamily | None = None,
) -> list[dict]:
    """Derivative norms of the linear evolution (and of a solution) against the data's Carleson norm."""
    if k_max > 4:
        raise ValueError("k_max must be at most 4")
    grid = a.grid
    q_inv = carleson_q_inverse_norm(a, p, math.inf, balls).value
    sources = [("linear", FieldHistory(grid, tg.nodes, linear_evolution(a, tg, p.beta)[1:], True, tg.rule))]
    if state is not None:
        sources.append(("solution", state.history))
    rows = []
    for name, hist in sources:
        for k in range(k_max + 1):
            n_inf, n_car = nk_norms(hist, p, k, tg.horizon, balls)
            rows.append(
                {
                    "source": name,
                    "k": k,
                    "n_inf": n_inf.value,
                    "n_carleson": n_car.value,
                    "ratio_inf": n_inf.value / q_inv if q_inv > 0 else 0.0,
                    "ratio_carleson": n_car.value / q_inv if q_inv > 0 else 0.0,
                }
            )
    return rows


def fitted_order_constants(ratios_by_k: dict) -> dict:
    """Per-order fitted constants for the order-``k`` Carleson estimate."""
    return {k: fit_constant(v) for k, v in ratios_by_k.items()}


def manifest_json(state: SolverState, p: FracParams, extra: dict | None = None) -> str:
    doc = state.manifest(p)
    if extra:
        doc.update(to_jsonable(extra))
    return json.dumps(doc, sort_keys=True, indent=2)
