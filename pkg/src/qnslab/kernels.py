"""Radial profiles of the fractional heat kernel and the Oseen-type kernel.

All profiles come from one engine, ``bessel_transform``, which evaluates

    I(r) = int_0^inf g(rho) (rho r)^(-mu) J_q(rho r) drho

for many radii at once on shared Gauss-Legendre panels no wider than
``pi / r_max``, comparing 20-point and 10-point rules per panel and bisecting
until the estimate meets the tolerance.  The weight ``g`` is truncated where
it drops below ``1e-18`` of its peak, so no series acceleration is needed.
"""

from __future__ import annotations

import csv
import itertools
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special

from .spectral import multi_indices


class QuadratureError(RuntimeError):
    """The adaptive radial quadrature did not reach its tolerance."""


_GL_HI = np.polynomial.legendre.leggauss(20)
_GL_LO = np.polynomial.legendre.leggauss(10)


def bessel_factor(z: np.ndarray, mu: float, q: int | float) -> np.ndarray:
    """``z^(-mu) J_q(z)`` with a series near ``z = 0``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < 1e-3
    big = ~small
    zb = z[big]
    out[big] = zb ** (-mu) * special.jv(q, zb)
    if np.any(small):
        zs = z[small]
        total = np.zeros_like(zs)
        for m in range(4):
            e = 2 * m + q - mu
            coef = (-1) ** m / (math.factorial(m) * special.gamma(m + q + 1) * 2 ** (2 * m + q))
            if not np.isfinite(coef) or coef == 0:
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                term = coef * np.where(zs > 0, zs**e, 1.0 if e == 0 else 0.0)
            total += term
        out[small] = total
    return out


def _truncation(g: Callable, peak_hint: float = 1.0) -> float:
    """Smallest ``rho`` beyond which ``|g|`` stays below ``1e-18`` of its running peak."""
    rho = np.geomspace(1e-3, 1e4, 4000) * peak_hint
    vals = np.abs(g(rho))
    peak = float(np.max(vals))
    if peak == 0:
        return float(rho[0])
    above = np.nonzero(vals > 1e-18 * peak)[0]
    if above.size == 0:
        return float(rho[0])
    if above[-1] == rho.size - 1:
        raise QuadratureError("radial weight does not decay within the search range")
    return float(rho[above[-1] + 1])


def bessel_transform(
    g: Callable[[np.ndarray], np.ndarray],
    mu: float,
    q: float,
    radii,
    tol: float = 1e-13,
    max_rounds: int = 12,
    chunk_nodes: int = 4_000_000,
) -> tuple[np.ndarray, np.ndarray]:
    """``int_0^inf g(rho) (rho r)^(-mu) J_q(rho r) drho`` for each radius, with error estimates."""
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or np.any(r < 0):
        raise ValueError("radii must be a one-dimensional array of nonnegative numbers")
    rho_max = _truncation(g)
    values = np.zeros(r.size)
    errors = np.zeros(r.size)
    order = np.argsort(r)
    # radii of similar size share panels
    groups = np.array_split(order, max(1, int(math.ceil(r.size / 64))))
    for idx in groups:
        rr = r[idx]
        width = min(math.pi / max(float(rr.max()), 1e-300), rho_max / 32)
        edges = np.linspace(0.0, rho_max, int(math.ceil(rho_max / width)) + 1)
        # geometric grading toward rho = 0 where g may be non-smooth
        head = edges[1] * 2.0 ** (-np.arange(40, 0, -1, dtype=float))
        edges = np.concatenate([[0.0], head, edges[1:]])
        for _ in range(max_rounds):
            hi, lo = _panel_sums(g, mu, q, rr, edges, chunk_nodes)
            est = np.abs(hi - lo)  # (panels, radii)
            total_err = est.sum(axis=0)
            # roundoff scales with the absolute panel sums, not the (possibly cancelled) total
            if np.all(total_err <= tol * np.maximum(1.0, np.abs(hi).sum(axis=0))):
                break
            bad = np.any(est > tol / est.shape[0], axis=1)
            mids = (edges[:-1][bad] + edges[1:][bad]) / 2
            edges = np.sort(np.concatenate([edges, mids]))
        else:
            raise QuadratureError(f"radial quadrature did not converge (error {float(total_err.max()):.3g})")
        values[idx] = hi.sum(axis=0)
        errors[idx] = total_err
    return values, errors


def _panel_sums(g, mu, q, radii, edges, chunk_nodes):
    a, b = edges[:-1], edges[1:]
    half, mid = (b - a) / 2, (b + a) / 2
    out = []
    for x, w in (_GL_HI, _GL_LO):
        nodes = mid[:, None] + half[:, None] * x[None, :]
        weights = half[:, None] * w[None, :] * g(nodes)
        res = np.zeros((a.size, radii.size))
        step = max(1, chunk_nodes // max(nodes.size, 1))
        for s in range(0, radii.size, step):
            rs = radii[s : s + step]
            z = nodes[:, :, None] * rs[None, None, :]
            res[:, s : s + step] = np.einsum("pk,pkr->pr", weights, bessel_factor(z, mu, q))
        out.append(res)
    return out[0], out[1]


def derivative_terms(mu: float, q: float, k: int) -> list[tuple[float, float, float]]:
    """Expand ``d^k/dz^k [z^(-mu) J_q(z)]`` as ``sum c z^(-m) J_p(z)``, returned as ``(c, m, p)``."""
    terms = [(1.0, mu, q)]
    for _ in range(k):
        nxt: dict[tuple[float, float], float] = {}
        for c, m, p in terms:
            nxt[(m, p + 1)] = nxt.get((m, p + 1), 0.0) - c
            if p - m != 0:
                nxt[(m + 1, p)] = nxt.get((m + 1, p), 0.0) + c * (p - m)
        terms = [(c, m, p) for (m, p), c in nxt.items() if c != 0]
    return terms


@dataclass(frozen=True)
class RadialProfile:
    radii: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if r.ndim != 1 or np.any(r < 0) or np.any(np.diff(r) <= 0):
            raise ValueError("radii must be nonnegative and strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("profile values must be finite")

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "value", "abs_error_estimate"])
            for row in zip(self.radii, self.values, self.errors):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, params=None) -> "RadialProfile":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2], params or {})


_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def _cached(key, compute):
    with _CACHE_LOCK:
        hit = _CACHE.get(key)
    if hit is not None:
        return hit
    value = compute()
    with _CACHE_LOCK:
        return _CACHE.setdefault(key, value)


def clear_cache() -> None:
    with _CACHE_LOCK:
        _CACHE.clear()


def _check(n: int, beta: float, t: float):
    if n not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2 or 3")
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if not t > 0:
        raise ValueError("t must be positive")


def _radial_integral(n, beta, t, radii, extra_power, mu, q, k, tol):
    """``(2 pi)^(-n/2) d^k/dr^k int e^{-t rho^(2b)} rho^(n-1+extra) (rho r)^(-mu) J_q(rho r) drho``."""
    radii = np.asarray(radii, dtype=float)
    key = ("radial", n, beta, t, extra_power, mu, q, k, tol, radii.tobytes())

    def compute():
        total = np.zeros(radii.size)
        err = np.zeros(radii.size)
        for c, m, p in derivative_terms(mu, q, k):
            power = n - 1 + extra_power + k

            def g(rho, power=power):
                with np.errstate(under="ignore"):
                    return np.exp(-t * rho ** (2 * beta)) * rho**power

            v, e = bessel_transform(g, m, p, radii, tol)
            total += c * v
            err += abs(c) * e
        scale = (2 * math.pi) ** (-n / 2)
        return scale * total, scale * err

    return _cached(key, compute)


def heat_kernel_profile(n: int, beta: float, t: float, radii, deriv_order: int = 0, tol: float = 1e-13) -> RadialProfile:
    """Radial profile of the fractional heat kernel (or its ``deriv_order``-th radial derivative)."""
    _check(n, beta, t)
    nu = n / 2 - 1
    vals, errs = _radial_integral(n, beta, t, radii, 0, nu, nu, deriv_order, tol)
    return RadialProfile(np.asarray(radii, float), vals, errs, {"kernel": "heat", "n": n, "beta": beta, "t": t, "k": deriv_order})


@dataclass(frozen=True)
class OseenProfile:
    """``K_jl(x) = delta_jl A(r) + w_j w_l B(r)`` with ``w = x / r``; radial derivatives of order ``k``."""

    isotropic: RadialProfile
    directional: RadialProfile

    def component(self, j: int, l: int, direction) -> np.ndarray:
        w = np.asarray(direction, dtype=float)
        w = w / np.linalg.norm(w)
        return (j == l) * self.isotropic.values + w[j] * w[l] * self.directional.values

    def frobenius(self) -> np.ndarray:
        n = self.isotropic.params["n"]
        a, b = self.isotropic.values, self.directional.values
        return np.sqrt(n * a**2 + 2 * a * b + b**2)

    def trace(self) -> np.ndarray:
        n = self.isotropic.params["n"]
        return n * self.isotropic.values + self.directional.values


def oseen_kernel_profile(n: int, beta: float, t: float, radii, deriv_order: int = 0, tol: float = 1e-13) -> OseenProfile:
    """Kernel of the multiplier ``xi_j xi_l |xi|^(-2) exp(-t |xi|^(2 beta))`` split into radial parts."""
    _check(n, beta, t)
    nu = n / 2 - 1
    a_vals, a_err = _radial_integral(n, beta, t, radii, 0, nu + 1, nu + 1, deriv_order, tol)
    b_vals, b_err = _radial_integral(n, beta, t, radii, 0, nu, nu + 2, deriv_order, tol)
    r = np.asarray(radii, float)
    base = {"kernel": "oseen", "n": n, "beta": beta, "t": t, "k": deriv_order}
    return OseenProfile(
        RadialProfile(r, a_vals, a_err, {**base, "part": "isotropic"}),
        RadialProfile(r, -b_vals, b_err, {**base, "part": "directional"}),
    )


def oseen_component_profile(n, beta, t, j, l, radii, deriv_order=0, direction=None) -> RadialProfile:
    """One tensor component along a fixed ray (default: the first axis)."""
    prof = oseen_kernel_profile(n, beta, t, radii, deriv_order)
    d = np.eye(n)[0] if direction is None else direction
    vals = prof.component(j, l, d)
    errs = prof.isotropic.errors + prof.directional.errors
    return RadialProfile(np.asarray(radii, float), vals, errs, {**prof.isotropic.params, "part": f"component_{j}{l}"})


def gaussian_kernel(n: int, t: float, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return (4 * math.pi * t) ** (-n / 2) * np.exp(-(r**2) / (4 * t))


def tail_series(n: int, beta: float, t: float, r, terms: int = 4) -> np.ndarray:
    """Large-``r`` expansion ``sum_j (-t)^j / j! F^{-1}[|xi|^(2 beta j)](r)`` (asymptotic for beta < 1)."""
    r = np.asarray(r, dtype=float)
    total = np.zeros_like(r)
    for j in range(1, terms + 1):
        a = beta * j
        if a == int(a):
            continue  # |xi|^(2a) is a polynomial symbol: no tail contribution
        c = 4**a * special.gamma(a + n / 2) / (math.pi ** (n / 2) * special.gamma(-a))
        total += (-t) ** j / math.factorial(j) * c * r ** (-n - 2 * a)
    return total


def kernel_mass(n: int, beta: float, t: float, radius: float = 40.0, tail_terms: int = 4) -> dict:
    """``int K`` as the mass inside a ball (Parseval with the ball's Fourier transform) plus the series tail."""
    _check(n, beta, t)
    # int_{|x|<R} K = (2 pi)^(-n) |S^{n-1}| int e(rho) (2 pi R / rho)^(n/2) J_{n/2}(R rho) rho^(n-1) drho
    sphere = 2 * math.pi ** (n / 2) / special.gamma(n / 2)
    const = (2 * math.pi) ** (-n) * sphere * (2 * math.pi) ** (n / 2) * radius**n

    def g(rho):
        with np.errstate(under="ignore"):
            return np.exp(-t * rho ** (2 * beta)) * rho ** (n - 1)

    inner, err = bessel_transform(g, n / 2, n / 2, [radius])
    inside = const * float(inner[0])
    tail = 0.0
    for j in range(1, tail_terms + 1):
        a = beta * j
        if a == int(a):
            continue
        c = 4**a * special.gamma(a + n / 2) / (math.pi ** (n / 2) * special.gamma(-a))
        tail += (-t) ** j / math.factorial(j) * c * sphere * radius ** (-2 * a) / (2 * a)
    return {"inside": inside, "tail": tail, "mass": inside + tail, "abs_error_estimate": const * float(err[0])}


# ------------------------------------------------------ decay envelope (n = 2)


def _projected_gradient_symbol(j: int, m: int, l: int, gamma, phi: np.ndarray) -> np.ndarray:
    """Angular part of ``i xi_l (delta_jm - w_j w_m) (i xi)^gamma`` on the unit circle."""
    w = (np.cos(phi), np.sin(phi))
    k = sum(gamma)
    val = (1j) ** (1 + k) * w[l] * ((j == m) - w[j] * w[m])
    for axis, order in enumerate(gamma):
        val = val * w[axis] ** order
    return val


def projected_gradient_kernel(beta: float, gamma, radii, angles: int = 64, t: float = 1.0) -> np.ndarray:
    """All components of ``d^gamma`` of the kernel of ``P div`` composed with the heat semigroup, n = 2.

    Returns shape ``(2, 2, 2, len(radii), angles)`` indexed ``(j, m, l, r, theta)``.
    """
    k = sum(gamma)
    top = k + 3
    phi = 2 * math.pi * np.arange(64) / 64
    radii = np.asarray(radii, dtype=float)
    theta = 2 * math.pi * np.arange(angles) / angles
    radial = {}
    for order in range(top + 1):
        def g(rho, order=order):
            with np.errstate(under="ignore"):
                return np.exp(-t * rho ** (2 * beta)) * rho ** (2 + k)

        key = ("pgrad", beta, t, k, order, radii.tobytes())
        radial[order] = _cached(key, lambda g=g, order=order: bessel_transform(g, 0, order, radii)[0])
    out = np.zeros((2, 2, 2, radii.size, angles))
    for j, m, l in itertools.product(range(2), repeat=3):
        coeffs = np.fft.fft(_projected_gradient_symbol(j, m, l, gamma, phi)) / 64
        field = np.zeros((radii.size, angles), dtype=complex)
        for order in range(-top, top + 1):
            c = coeffs[order % 64]
            if abs(c) < 1e-14:
                continue
            rad = radial[abs(order)] * (-1) ** order if order < 0 else radial[order]
            field += c * (1j) ** order * rad[:, None] * np.exp(1j * order * theta)[None, :]
        out[j, m, l] = field.real / (2 * math.pi)
    return out


def decay_envelope_check(k_max: int, beta: float, radii=None, angles: int = 64) -> dict:
    """Envelope constants ``M_k`` of the derivatives of ``P div K_1`` in the plane.

    ``M_k = sup |d^k P div K_1(x)| (k^(-1/2b) + |x|)^3 / k^(k/2b)`` over all components,
    multi-indices with ``|gamma| = k``, sampled radii and angles.  For ``k = 0`` both
    ``k``-dependent factors are replaced by one.
    """
    if not 0 <= k_max <= 6:
        raise ValueError("k_max must lie in 0..6")
    if radii is None:
        radii = np.concatenate([np.linspace(0, 2, 41), np.geomspace(2.1, 40, 60)])
    radii = np.asarray(radii, dtype=float)
    n = 2
    rows = []
    for k in range(k_max + 1):
        shift = 1.0 if k == 0 else k ** (-1 / (2 * beta))
        norm = 1.0 if k == 0 else k ** (k / (2 * beta))
        best, where = 0.0, None
        for gamma in multi_indices(n, k):
            ker = np.abs(projected_gradient_kernel(beta, gamma, radii, angles))
            env = ker * (shift + radii[None, None, None, :, None]) ** (n + 1) / norm
            i = int(np.argmax(env))
            if env.reshape(-1)[i] > best:
                best = float(env.reshape(-1)[i])
                idx = np.unravel_index(i, env.shape)
                where = {"multi_index": list(gamma), "component": list(map(int, idx[:3])), "radius": float(radii[idx[3]])}
        rows.append({"k": k, "M": best, "root": best ** (1 / k) if k > 0 else None, "witness": where})
    roots = [r["root"] for r in rows if r["root"] is not None]
    report = {
        "beta": beta,
        "rows": rows,
        "fitted_C": max(roots) if roots else None,
        "root_spread": max(roots) / min(roots) if roots else None,
        "finite": all(math.isfinite(r["M"]) for r in rows),
    }
    report["bounded"] = report["finite"] and (report["root_spread"] is None or report["root_spread"] < 10)
    return report
