from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np


@dataclass(frozen=True)
class FracParams:
    """Smoothness ``alpha`` and dissipation order ``beta`` with their admissibility checks."""

    alpha: float
    beta: float
    allow_beta_one: bool = False

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not (0.5 < b < 1 or (b == 1 and self.allow_beta_one)):
            raise ValueError(f"beta must lie in (1/2, 1) (or equal 1 with allow_beta_one), got {b}")
        if not a < b:
            raise ValueError(f"need alpha < beta, got alpha={a}, beta={b}")

    @property
    def tent_admissible(self) -> bool:
        return self.alpha + self.beta - 1 >= 0

    @property
    def gap(self) -> float:
        """``alpha - beta + 1``, the smoothness carried by Q-type differences."""
        return self.alpha - self.beta + 1

    def require_tent(self, n: int):
        if not self.tent_admissible:
            raise ValueError("this operation needs alpha + beta - 1 >= 0")
        if 2 * (self.alpha + self.beta - 1) >= n:
            raise ValueError("this operation needs alpha + beta - 1 < n/2")

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


@dataclass
class NormReport:
    """A computed norm, where its discrete supremum was attained, and how it was computed."""

    norm: str
    value: float
    witness: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    convention_notes: list = field(default_factory=list)
    quadrature: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"norm value must be nonnegative, got {self.value}")

    def to_dict(self) -> dict[str, Any]:
        return _clean(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


to_jsonable = _clean


def fit_constant(ratios, margin: float = 2.0) -> dict:
    """Fit one constant on the first half of a batch and count violations over all of it.

    The constant is ``margin`` times the largest ratio of the fitting half, so
    the second half acts as a held-out check of uniformity.
    """
    r = np.asarray(list(ratios), dtype=float)
    if r.size == 0:
        raise ValueError("no ratios to fit")
    if not np.all(np.isfinite(r)):
        raise ValueError("ratios must be finite")
    half = max(1, r.size // 2)
    constant = margin * float(np.max(r[:half]))
    return {
        "constant": constant,
        "violations": int(np.sum(r > constant * (1 + 1e-12))),
        "max_ratio": float(np.max(r)),
        "fit_size": half,
        "count": int(r.size),
    }
