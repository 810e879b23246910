"""Tent spaces over the sampled upper half-space.

Geometry is decided by sample inclusion on the torus (minimal-image
distances): the tent over ``B(c, r)`` holds ``(t_i, x)`` with
``|x - c| <= r - t_i`` and the cone at ``x`` holds ``(t_i, y)`` with
``|y - x| < t_i``.  Time integrals over tents use bounded log cells (or
the Gauss cells of the sample's rule), so a tent integral is a finite sum.

Capacities are dyadic: cubes are the nodes of the ``2^n``-ary tree whose
root is the whole torus and whose leaves are single grid cells.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .geometry import BallFamily, CubeFamily, ball_indicator
from .halfspace import HalfSpaceSample, TimeRule
from .params import FracParams, NormReport, to_jsonable
from .qnorms import p_carleson_norm
from .spectral import TorusGrid

OMEGA_FLOOR = 1e-300
ATOM_SLACK = 1e-10
_EDGE = 1e-9  # relative tolerance on closed tent boundaries

TENT_NOTE = "tent T(B(c, r)) holds samples with |x - c| <= r - t (minimal-image distance)"
CONE_NOTE = "cone at x holds samples with |y - x| < t"


def capacity_dimension(p: FracParams, dim: int) -> float:
    """``n - 2(alpha + beta - 1)``, the capacity dimension attached to the tent spaces."""
    p.require_tent(dim)
    return dim - 2 * (p.alpha + p.beta - 1)


def _ball_volume(dim: int, radius: float) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * radius**dim


def _distance(grid: TorusGrid, center) -> np.ndarray:
    return np.sqrt(np.sum(grid.periodic_offset(center) ** 2, axis=0))


def tent_mask(grid: TorusGrid, times, center, radius: float) -> np.ndarray:
    """Boolean array ``(M, N, ..., N)`` of samples inside the closed tent."""
    d = _distance(grid, center)
    room = radius - np.asarray(times, dtype=float)
    tol = _EDGE * grid.spacing
    return d[None] <= room.reshape((-1,) + (1,) * grid.dim) + tol


@lru_cache(maxsize=256)
def _closed_ball_fourier(grid: TorusGrid, radius: float) -> np.ndarray:
    d = _distance(grid, np.zeros(grid.dim))
    out = sfft.fftn((d <= radius + _EDGE * grid.spacing).astype(float))
    out.setflags(write=False)
    return out


def _density(F: HalfSpaceSample) -> np.ndarray:
    return F.modulus_sq()


# ------------------------------------------------------------------ T-infinity


def t_infty_norm(F: HalfSpaceSample, p: FracParams, balls: BallFamily | None = None) -> NormReport:
    """Sup over balls of the scaled tent integral of ``|F|^2 t^(-1 - 2 gap)``, square-rooted."""
    grid = F.grid
    d = capacity_dimension(p, grid.dim)
    balls = BallFamily.dyadic(grid) if balls is None else balls
    weight = F.tent_measure(1 + 2 * p.gap)
    dens = _density(F)
    spectra: dict[int, np.ndarray] = {}
    best, witness = 0.0, None
    for r in balls.radii:
        mask = balls.center_mask(r)
        if not mask.any():
            continue
        acc = np.zeros(grid.shape, dtype=complex)
        for i, t in enumerate(F.times):
            if t > r * (1 + 1e-12) or weight[i] == 0:
                continue
            if i not in spectra:
                spectra[i] = sfft.fftn(dens[i])
            acc += weight[i] * spectra[i] * _closed_ball_fourier(grid, max(r - t, 0.0))
        s = sfft.ifftn(acc).real * grid.cell_volume
        s = np.where(mask, s, -np.inf)
        flat = int(np.argmax(s))
        val = float(s.reshape(-1)[flat]) * _ball_volume(grid.dim, r) ** (-d / grid.dim)
        if witness is None or val > best:
            idx = np.unravel_index(flat, grid.shape)
            best = val
            witness = {"center": [float(i * grid.spacing) for i in idx], "radius": r}
    if witness is None:
        raise ValueError("no ball of the family fits in the central half")
    best = max(best, 0.0)
    witness["squared"] = best
    return NormReport(
        norm="t_infty",
        value=math.sqrt(best),
        witness=witness,
        params=p.as_dict(),
        convention_notes=[TENT_NOTE, "ball volume from the Euclidean formula"],
        quadrature={"time_nodes": int(F.times.size), "time_rule": "bounded log cells"},
    )


# ------------------------------------------------------------------ cones


def _offsets_by_distance(grid: TorusGrid, reach: float):
    N, n = grid.points, grid.dim
    k = np.indices(grid.shape).reshape(n, -1).T
    k = np.where(k > N // 2, k - N, k)
    dist = np.sqrt(np.sum(k.astype(float) ** 2, axis=1)) * grid.spacing
    keep = dist < reach
    order = np.argsort(dist[keep], kind="stable")
    return k[keep][order], dist[keep][order]


def nontangential_max(F: HalfSpaceSample) -> np.ndarray:
    """``N(F)(x)``: largest ``|F(t_i, y)|`` over sampled cone points ``|y - x| < t_i``."""
    grid = F.grid
    mod = F.modulus()
    # suffix maxima over time: offsets at distance rho see every t_i > rho
    suffix = np.maximum.accumulate(mod[::-1], axis=0)[::-1]
    offsets, dist = _offsets_by_distance(grid, float(F.times[-1]))
    out = np.zeros(grid.shape)
    axes = tuple(range(grid.dim))
    first = np.searchsorted(F.times, dist, side="right")
    for k, j in zip(offsets, first):
        if j >= F.times.size:
            continue
        # value at x comes from y = x + k
        np.maximum(out, np.roll(suffix[j], tuple(-k), axis=axes), out=out)
    return out


def tent_over_set(grid: TorusGrid, times, E: np.ndarray) -> np.ndarray:
    """Samples ``(t_i, x)`` whose open ball ``B(x, t_i)`` lies inside ``E``."""
    outside = sfft.fftn((~E).astype(float))
    res = []
    for t in times:
        hits = sfft.ifftn(outside * sfft.fftn(ball_indicator(grid, float(t)).astype(float))).real
        res.append(hits < 0.5)
    return np.stack(res)


# ------------------------------------------------------------------ capacity


def _tree_depth(grid: TorusGrid) -> int:
    return int(round(math.log2(grid.points)))


def _block_sum(a: np.ndarray, dim: int) -> np.ndarray:
    """Sum over the ``2^n`` children of every parent cube (leading axes are kept)."""
    lead = a.shape[: a.ndim - dim]
    side = a.shape[-1] // 2
    b = a.reshape(lead + (side, 2) * dim)
    return b.sum(axis=tuple(len(lead) + 2 * i + 1 for i in range(dim)))


def _block_any(a: np.ndarray, dim: int) -> np.ndarray:
    return _block_sum(a.astype(np.int64), dim) > 0


def _block_all(a: np.ndarray, dim: int) -> np.ndarray:
    return _block_sum(a.astype(np.int64), dim) == 2**dim


def _upsample(a: np.ndarray, dim: int) -> np.ndarray:
    for ax in range(dim):
        a = np.repeat(a, 2, axis=ax)
    return a


def _tree_costs(E: np.ndarray, grid: TorusGrid, d: float):
    """Optimal dyadic cover costs level by level; index 0 is the root."""
    n, J, L = grid.dim, _tree_depth(grid), grid.period
    occupied = [None] * (J + 1)
    cost = [None] * (J + 1)
    own = [None] * (J + 1)
    occupied[J] = E
    own[J] = grid.spacing**d
    cost[J] = np.where(E, own[J], 0.0)
    choose = [None] * (J + 1)
    choose[J] = E.copy()
    for j in range(J - 1, -1, -1):
        occupied[j] = _block_any(occupied[j + 1], n)
        children = _block_sum(cost[j + 1], n)
        side_cost = (L / 2**j) ** d
        choose[j] = occupied[j] & (side_cost <= children * (1 + 1e-13))
        cost[j] = np.where(choose[j], side_cost, children)
    return cost, choose


def _dyadic_cost_batch(masks: np.ndarray, grid: TorusGrid, d: float) -> np.ndarray:
    """Optimal cover costs of a stack of sample sets ``(K, N, ..., N)``."""
    n, J, L = grid.dim, _tree_depth(grid), grid.period
    cost = np.where(masks, grid.spacing**d, 0.0)
    occ = masks
    for j in range(J - 1, -1, -1):
        occ = _block_any(occ, n)
        cost = np.where(occ, np.minimum(_block_sum(cost, n), (L / 2**j) ** d), 0.0)
    return cost.reshape(masks.shape[0])


@dataclass(frozen=True)
class DyadicCover:
    """Disjoint dyadic cubes ``(level, index)``; level ``j`` cubes have side ``L / 2^j``."""

    grid: TorusGrid
    d: float
    cubes: tuple
    value: float
    label: str = "E"

    def side(self, level: int) -> float:
        return self.grid.period / 2**level

    def level_map(self) -> np.ndarray:
        """Level of the cube covering each sample, ``-1`` where uncovered."""
        J = _tree_depth(self.grid)
        lvl = np.full(self.grid.shape, -1, dtype=int)
        for j, idx in self.cubes:
            s = 2 ** (J - j)
            lvl[tuple(slice(i * s, (i + 1) * s) for i in idx)] = j
        return lvl

    def covers(self, E: np.ndarray) -> bool:
        return bool(np.all(self.level_map()[E] >= 0))

    def rows(self) -> list[dict]:
        J = _tree_depth(self.grid)
        out = []
        for j, idx in self.cubes:
            s = 2 ** (J - j)
            out.append({"level": j, "corner": [i * s for i in idx], "side": self.side(j), "cost": self.side(j) ** self.d})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["set", "d", "level", "corner", "side", "cost"])
        for row in self.rows():
            w.writerow([self.label, repr(self.d), row["level"], " ".join(map(str, row["corner"])), repr(row["side"]), repr(row["cost"])])
        w.writerow([self.label, repr(self.d), "total", "", "", repr(self.value)])
        return buf.getvalue()


def _cover_from_choice(E: np.ndarray, grid: TorusGrid, d: float, choose, label: str) -> DyadicCover:
    n, J = grid.dim, _tree_depth(grid)
    taken = np.zeros((1,) * n, dtype=bool)
    cubes = []
    for j in range(J + 1):
        if j > 0:
            taken = _upsample(taken, n)
        sel = choose[j] & ~taken
        cubes.extend((j, tuple(int(v) for v in idx)) for idx in np.argwhere(sel))
        taken = taken | sel
    value = math.fsum((grid.period / 2**j) ** d for j, _ in cubes)
    return DyadicCover(grid, d, tuple(cubes), value, label)


def _check_capacity_args(E, grid: TorusGrid, d: float) -> np.ndarray:
    E = np.asarray(E, dtype=bool)
    if E.shape != grid.shape:
        raise ValueError(f"set mask of shape {E.shape} does not match the grid {grid.shape}")
    if not 0 < d <= grid.dim:
        raise ValueError(f"capacity dimension must lie in (0, {grid.dim}], got {d}")
    return E


def hausdorff_capacity(E, grid: TorusGrid, d: float, label: str = "E") -> tuple[DyadicCover, float]:
    """Dyadic capacity of a sample set: an optimal cover and an inscribed-cube lower bound.

    The cover minimizes ``sum l(I)^d`` over all covers of the samples of
    ``E`` by cubes of the dyadic tree (exact tree recursion).  The lower bound
    is ``l(Q)^d`` for the largest dyadic cube ``Q`` all of whose samples lie in ``E``.
    """
    E = _check_capacity_args(E, grid, d)
    if not E.any():
        raise ValueError("capacity of the empty set is not reported")
    _, choose = _tree_costs(E, grid, d)
    cover = _cover_from_choice(E, grid, d, choose, label)
    n, J = grid.dim, _tree_depth(grid)
    full, lower = E, grid.spacing**d
    for j in range(J - 1, -1, -1):
        full = _block_all(full, n)
        if full.any():
            lower = (grid.period / 2**j) ** d
    return cover, lower


def capacity_value(E, grid: TorusGrid, d: float) -> float:
    E = _check_capacity_args(E, grid, d)
    return float(_dyadic_cost_batch(E[None], grid, d)[0])


def choquet_integral(f: np.ndarray, grid: TorusGrid, d: float, chunk: int = 128) -> float:
    """Layer-cake integral ``int_0^inf cap({f > s}) ds`` of a nonnegative sampled function.

    The superlevel sets only change at sample values, so the layer cake is a
    finite sum over the distinct values.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError("function does not match the grid")
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ValueError("Choquet integrals need finite nonnegative values")
    if not 0 < d <= grid.dim:
        raise ValueError(f"capacity dimension must lie in (0, {grid.dim}], got {d}")
    levels = np.unique(f[f > 0])
    if levels.size == 0:
        return 0.0
    below = np.concatenate([[0.0], levels[:-1]])
    terms = []
    for s in range(0, levels.size, chunk):
        thr = below[s : s + chunk]
        masks = f[None] > thr.reshape((-1,) + (1,) * grid.dim)
        caps = _dyadic_cost_batch(masks, grid, d)
        terms.extend((levels[s : s + chunk] - thr) * caps)
    return math.fsum(terms)


# ------------------------------------------------------------------ capacitary embedding


def _cell_measure(F: HalfSpaceSample, power: float) -> np.ndarray:
    return F.rule.cell_measure(power)


def carleson_embedding_check(mu: HalfSpaceSample, f: HalfSpaceSample, d: float, cubes: CubeFamily | None = None) -> dict:
    """Both sides of the capacitary Carleson embedding for one pair.

    ``lhs = int |f| dmu`` with ``dmu = mu(t, x) dt dx``; ``rhs = int N(f) dcap_d``;
    ``A`` is the ``d/n``-Carleson norm of ``mu`` over the cube family.
    """
    grid = mu.grid
    if f.grid != grid or f.times.shape != mu.times.shape or not np.allclose(f.times, mu.times):
        raise ValueError("measure and function must share grids")
    dens = np.asarray(mu.values, dtype=float)
    if dens.ndim != grid.dim + 1 or np.any(dens < 0):
        raise ValueError("the measure must be a nonnegative scalar sample")
    cubes = CubeFamily.dyadic(grid) if cubes is None else cubes
    cells = _cell_measure(mu, 0.0).reshape((-1,) + (1,) * grid.dim)
    lhs = float(np.sum(f.modulus() * dens * cells)) * grid.cell_volume
    rhs = choquet_integral(nontangential_max(f), grid, d)
    A = p_carleson_norm(mu, d / grid.dim, cubes).value
    bound = A * rhs
    ratio = lhs / bound if bound > 0 else (0.0 if lhs == 0 else math.inf)
    return {"lhs": lhs, "rhs": rhs, "carleson_norm": A, "ratio": ratio, "d": d}


# ------------------------------------------------------------------ atoms


@dataclass(frozen=True)
class TentAtom:
    """Samples supported in a tent, stored sparsely by flat index into ``(M, [m,] N, ..., N)``."""

    grid: TorusGrid
    times: np.ndarray
    rule: TimeRule
    center: tuple
    radius: float
    shape: tuple
    flat: np.ndarray
    values: np.ndarray

    @classmethod
    def from_sample(cls, F: HalfSpaceSample, center, radius: float) -> "TentAtom":
        v = np.asarray(F.values)
        flat = np.flatnonzero(v)
        return cls(F.grid, F.times, F.rule, tuple(float(c) for c in center), float(radius), v.shape, flat, v.reshape(-1)[flat])

    def dense(self) -> HalfSpaceSample:
        out = np.zeros(self.shape, dtype=self.values.dtype if self.values.size else float)
        out.reshape(-1)[self.flat] = self.values
        return HalfSpaceSample(self.grid, self.times, out, self.rule)

    def scaled(self, c: float) -> "TentAtom":
        return TentAtom(self.grid, self.times, self.rule, self.center, self.radius, self.shape, self.flat, self.values * c)

    def _positions(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.unravel_index(self.flat, self.shape)
        spatial = np.ravel_multi_index(idx[-self.grid.dim :], self.grid.shape)
        return idx[0], spatial


def tent_bound(grid: TorusGrid, p: FracParams, radius: float) -> float:
    """Normalization ceiling ``|B|^(-1 + 2(alpha + beta - 1)/n)`` for an atom on ``B(., radius)``."""
    d = capacity_dimension(p, grid.dim)
    return _ball_volume(grid.dim, radius) ** (-d / grid.dim)


def atom_energy(a: TentAtom, p: FracParams) -> float:
    """``int |a|^2 t^(-1 + 2 gap) dt dy`` by the tent quadrature."""
    ti, _ = a._positions()
    cells = _tent_cells(a.times, a.rule, 1 - 2 * p.gap)
    return float(np.sum(np.abs(a.values) ** 2 * cells[ti])) * a.grid.cell_volume


def _tent_cells(times, rule, power: float) -> np.ndarray:
    shell = HalfSpaceSample(TorusGrid(1, 8), times, np.zeros((len(times), 8)), rule)
    return shell.tent_measure(power)


def validate_atom(a: TentAtom, p: FracParams) -> dict:
    """Support and normalization certificate; ``margin`` is energy over its ceiling."""
    grid = a.grid
    ti, sp = a._positions()
    d = _distance(grid, np.asarray(a.center)).reshape(-1)
    room = a.radius - a.times[ti] + _EDGE * grid.spacing
    outside = d[sp] > room
    leak = float(np.max(np.abs(a.values[outside]))) if outside.any() else 0.0
    energy = atom_energy(a, p)
    ceiling = tent_bound(grid, p, a.radius)
    margin = energy / ceiling
    supported = not outside.any()
    normalized = margin <= 1 + ATOM_SLACK
    return {
        "passed": bool(supported and normalized),
        "supported": bool(supported),
        "normalized": bool(normalized),
        "energy": energy,
        "ceiling": ceiling,
        "margin": margin,
        "outside_samples": int(outside.sum()),
        "largest_leak": leak,
    }


def indicator_atom(grid: TorusGrid, times, p: FracParams, center, radius: float, rule: TimeRule | None = None) -> TentAtom:
    """Constant multiple of the tent indicator with energy equal to its ceiling."""
    mask = tent_mask(grid, times, center, radius).astype(float)
    sample = HalfSpaceSample(grid, times, mask, rule)
    cells = sample.tent_measure(1 - 2 * p.gap).reshape((-1,) + (1,) * grid.dim)
    energy = float(np.sum(mask * cells)) * grid.cell_volume
    if energy == 0:
        raise ValueError("the tent contains no samples")
    scale = math.sqrt(tent_bound(grid, p, radius) / energy)
    return TentAtom.from_sample(sample.with_values(mask * scale), center, radius)


# ------------------------------------------------------------------ decomposition


@dataclass
class AtomicDecomposition:
    coefficients: list
    atoms: list
    regions: np.ndarray
    residual: float
    levels: list = field(default_factory=list)

    @property
    def l1(self) -> float:
        return math.fsum(abs(c) for c in self.coefficients)

    def __len__(self):
        return len(self.atoms)

    def reconstruct(self, like: HalfSpaceSample) -> np.ndarray:
        out = np.zeros(like.values.shape, dtype=np.result_type(like.values.dtype, float))
        flat = out.reshape(-1)
        for c, a in zip(self.coefficients, self.atoms):
            flat[a.flat] += c * a.values
        return out

    def certificates(self, p: FracParams) -> list[dict]:
        return [validate_atom(a, p) for a in self.atoms]

    def dump(self, p: FracParams) -> list[dict]:
        rows = []
        for c, a in zip(self.coefficients, self.atoms):
            cert = validate_atom(a, p)
            rows.append({"center": list(a.center), "radius": a.radius, "lambda": c, "V": cert["energy"], "margin": cert["margin"]})
        return rows

    def to_json(self, p: FracParams) -> str:
        return json.dumps(to_jsonable(self.dump(p)), sort_keys=True, indent=2)


def _cover_levels(E: np.ndarray, grid: TorusGrid, d: float) -> tuple[np.ndarray, float]:
    _, choose = _tree_costs(E, grid, d)
    cover = _cover_from_choice(E, grid, d, choose, "E_k")
    return cover.level_map(), cover.value


def _promote(lvl: np.ndarray, tents: np.ndarray, times, grid: TorusGrid) -> np.ndarray:
    """Coarsen cover cubes until every tent sample lies in the box ``I x (0, 2 diam I)``."""
    n, J, L = grid.dim, _tree_depth(grid), grid.period
    diam2 = 2 * math.sqrt(n) * L
    lvl = lvl.copy()
    for i, t in enumerate(times):
        need = tents[i]
        if not need.any():
            continue
        # deepest level whose boxes reach above t
        j_req = min(J, math.ceil(math.log2(diam2 / t)) - 1)
        while j_req >= 0 and diam2 / 2**j_req <= t:
            j_req -= 1
        if j_req < 0:
            raise ValueError("time samples exceed the tallest Carleson box")
        bad = need & (lvl > j_req)
        if not bad.any():
            continue
        s = 2 ** (J - j_req)
        for corner in {tuple(int(v) // s for v in x) for x in np.argwhere(bad)}:
            lvl[tuple(slice(c * s, (c + 1) * s) for c in corner)] = j_req
    return lvl


def _level_cost(lvl: np.ndarray, grid: TorusGrid, d: float) -> float:
    J = _tree_depth(grid)
    counts = np.bincount(lvl[lvl >= 0].ravel(), minlength=J + 1)
    return math.fsum(counts[j] / (2 ** (J - j)) ** grid.dim * (grid.period / 2**j) ** d for j in range(J + 1))


def atomic_decompose(F: HalfSpaceSample, omega: HalfSpaceSample, p: FracParams) -> AtomicDecomposition:
    """Split ``F`` into tent atoms along the level sets ``{N omega > 2^k}``.

    Each level is covered by an optimal dyadic cover, coarsened until the
    boxes ``I x (0, 2 diam I)`` contain the discrete tent over the level set.
    A sample belongs to the box of the highest level containing it.
    """
    grid = F.grid
    if omega.grid != grid or omega.times.shape != F.times.shape or not np.allclose(omega.times, F.times):
        raise ValueError("F and omega must share grids")
    w = np.asarray(omega.values, dtype=float)
    if w.shape != (F.times.size,) + grid.shape:
        raise ValueError("omega must be a scalar sample")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("omega must be finite and nonnegative")
    dens = F.modulus_sq()
    support = dens > 0
    if np.any(support & (w == 0)):
        raise ValueError("omega vanishes where F does not")
    d = capacity_dimension(p, grid.dim)
    n, J = grid.dim, _tree_depth(grid)
    if not support.any():
        return AtomicDecomposition([], [], np.full(dens.shape, -1), 0.0)

    Nw = nontangential_max(omega)
    k_lo = math.floor(math.log2(float(w[support].min()))) - 1
    k_hi = math.ceil(math.log2(float(Nw.max()))) - 1
    region_level = np.full(dens.shape, -1, dtype=int)  # cube level of the owning box
    region_k = np.full(dens.shape, k_lo - 1, dtype=int)
    assigned = np.zeros(dens.shape, dtype=bool)
    levels = []
    previous = None
    diam2 = 2 * math.sqrt(n) * grid.period
    shaped_t = F.times.reshape((-1,) + (1,) * n)
    for k in range(k_hi, k_lo - 1, -1):
        E = Nw > 2.0**k
        if previous is not None and np.array_equal(E, previous):
            continue  # same set as a higher level, whose boxes take precedence
        previous = E
        if not E.any():
            continue
        base, optimal = _cover_levels(E, grid, d)
        tents = tent_over_set(grid, F.times, E)
        lvl = _promote(base, tents, F.times, grid)
        boxes = (lvl[None] >= 0) & (shaped_t < diam2 / 2.0 ** np.maximum(lvl, 0)[None])
        fresh = boxes & ~assigned
        region_level[fresh] = np.broadcast_to(lvl[None], dens.shape)[fresh]
        region_k[fresh] = k
        assigned |= fresh
        levels.append({"k": k, "optimal_cost": optimal, "cover_cost": _level_cost(lvl, grid, d)})
    if np.any(support & ~assigned):
        raise RuntimeError("level-set boxes failed to cover the support of F")

    cells = F.tent_measure(1 - 2 * p.gap).reshape((-1,) + (1,) * n)
    mass = dens * cells * grid.cell_volume
    vals = np.asarray(F.values)
    vector = F.is_vector
    coefficients, atoms = [], []
    regions = np.full(dens.shape, -1, dtype=int)
    idx = np.indices(grid.shape)
    for k in sorted(set(region_k[support].tolist()), reverse=True):
        for j in sorted(set(region_level[support & (region_k == k)].tolist())):
            s = 2 ** (J - j)
            sel = support & (region_k == k) & (region_level == j)
            owners = np.argwhere(sel)[:, 1:] // s
            for cube in np.unique(owners, axis=0):
                inside = np.all(idx // s == cube.reshape((-1,) + (1,) * n), axis=0)
                part = sel & inside[None]
                energy = math.fsum(mass[part].tolist())
                if energy == 0:
                    continue
                side = grid.period / 2**j
                star = 5 * math.sqrt(n) * side
                lam = math.sqrt(star**d * energy)
                center = (cube + 0.5) * side
                regions[part] = len(atoms)
                mask = part[:, None] if vector else part
                a = np.where(np.broadcast_to(mask, vals.shape), vals / lam, 0)
                atoms.append(TentAtom.from_sample(F.with_values(a), center, star / 2))
                coefficients.append(lam)
    dec = AtomicDecomposition(coefficients, atoms, regions, 0.0, levels)
    scale = float(np.sqrt(np.sum(np.abs(vals) ** 2)))
    diff = dec.reconstruct(F) - vals
    dec.residual = float(np.sqrt(np.sum(np.abs(diff) ** 2))) / scale
    return dec


# ------------------------------------------------------------------ T1 bracket


def proof_weight(F: HalfSpaceSample, p: FracParams, center, radius: float, eps: float = 1.0) -> HalfSpaceSample:
    """Weight equal to ``r^(-d)`` on the tent and decaying like ``dist^(-d - eps)`` away from it."""
    grid = F.grid
    d = capacity_dimension(p, grid.dim)
    x = _distance(grid, center)
    t = F.times.reshape((-1,) + (1,) * grid.dim)
    rho = np.sqrt(x[None] ** 2 + t**2)
    w = radius ** (-d) * np.minimum(1.0, (radius / rho) ** (d + eps))
    return HalfSpaceSample(grid, F.times, w, F.rule)


def _support_ball(F: HalfSpaceSample) -> tuple[np.ndarray, float]:
    grid = F.grid
    dens = F.modulus_sq()
    flat = int(np.argmax(dens.sum(axis=0)))
    center = np.array(np.unravel_index(flat, grid.shape), dtype=float) * grid.spacing
    x = _distance(grid, center)
    reach = x[None] + F.times.reshape((-1,) + (1,) * grid.dim)
    return center, float(np.max(np.where(dens > 0, reach, 0.0)))


def default_weights(F: HalfSpaceSample, p: FracParams) -> list[tuple[str, HalfSpaceSample]]:
    """Candidate weights: the decaying tent weight on the support ball and powers of ``N(F)`` and ``|F|``."""
    center, radius = _support_ball(F)
    out = [(f"tent_eps_{eps}", proof_weight(F, p, center, radius, eps)) for eps in (0.5, 1.0)]
    NF = nontangential_max(F)
    mod = F.modulus()
    for s in (0.5, 1.0):
        out.append((f"nontangential_pow_{s}", F.with_values(np.broadcast_to(NF**s, mod.shape).copy())))
    out.append(("modulus", F.with_values(mod.copy())))
    return out


def weight_budget(omega: HalfSpaceSample, p: FracParams) -> float:
    return choquet_integral(nontangential_max(omega), omega.grid, capacity_dimension(p, omega.grid.dim))


def weighted_energy(F: HalfSpaceSample, omega: HalfSpaceSample, p: FracParams) -> float:
    """``int |F|^2 / omega  t^(-1 + 2 gap) dt dx`` with omega floored on the support of ``F``."""
    dens = F.modulus_sq()
    w = np.asarray(omega.values, dtype=float)
    support = dens > 0
    if np.any(support & (w <= 0)):
        w = np.where(support, np.maximum(w, OMEGA_FLOOR), w)
    cells = F.tent_measure(1 - 2 * p.gap).reshape((-1,) + (1,) * F.grid.dim)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(support, dens / w, 0.0)
    return float(np.sum(q * cells)) * F.grid.cell_volume


def pairing(F: HalfSpaceSample, g: HalfSpaceSample) -> float:
    """``|int F g dt dx / t|`` (componentwise product for vector samples)."""
    cells = F.tent_measure(1.0).reshape((-1,) + ((1,) if F.is_vector else ()) + (1,) * F.grid.dim)
    return abs(complex(np.sum(np.asarray(F.values) * np.asarray(g.values) * cells))) * F.grid.cell_volume


def dual_tests(F: HalfSpaceSample, p: FracParams, weights=None) -> list[tuple[str, HalfSpaceSample]]:
    """Test functions ``conj(F) t^(2 gap) / omega`` that nearly saturate the pairing."""
    weights = default_weights(F, p) if weights is None else weights
    t = F.times.reshape((-1,) + ((1,) if F.is_vector else ()) + (1,) * F.grid.dim)
    base = np.conj(np.asarray(F.values)) * t ** (2 * p.gap)
    out = [("plain", F.with_values(base))]
    for name, w in weights:
        wv = np.maximum(np.asarray(w.values, dtype=float), OMEGA_FLOOR)
        if F.is_vector:
            wv = wv[:, None]
        out.append((f"dual_{name}", F.with_values(base / wv)))
    return out


def t1_norm_bracket(
    F: HalfSpaceSample,
    p: FracParams,
    omega_candidates=None,
    g_tests=None,
    balls: BallFamily | None = None,
) -> dict:
    """Certified upper bound from weight candidates and a duality lower bound.

    Each weight is rescaled so that the Choquet integral of its nontangential
    maximum equals one; the upper bound is the best resulting weighted energy.
    The lower bound is the best ``|<F, g>| / ||g||_{T^inf}`` over the tests.
    """
    capacity_dimension(p, F.grid.dim)
    if np.all(F.modulus_sq() == 0):
        return {"upper": 0.0, "lower": 0.0, "upper_witness": None, "lower_witness": None}
    weights = default_weights(F, p) if omega_candidates is None else list(omega_candidates)
    tests = dual_tests(F, p, weights) if g_tests is None else list(g_tests)
    if not weights or not tests:
        raise ValueError("need at least one weight candidate and one test function")
    upper, up_w = math.inf, None
    for name, w in weights:
        budget = weight_budget(w, p)
        if budget <= 0:
            continue
        val = math.sqrt(weighted_energy(F, w, p) * budget)
        if val < upper:
            upper, up_w = val, {"weight": name, "budget": budget}
    lower, lo_w = 0.0, None
    for name, g in tests:
        gn = t_infty_norm(g, p, balls).value
        if gn == 0:
            continue
        val = pairing(F, g) / gn
        if val > lower:
            lower, lo_w = val, {"test": name, "t_infty": gn}
    return {"upper": upper, "lower": lower, "upper_witness": up_w, "lower_witness": lo_w}
