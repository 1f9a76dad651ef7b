"""Local asymptotic power under Pitman drifts and optimal directional weights.

With ``eta_{s,z}(w, delta) = sum_j int delta_j^s rho_j^z w_j dx`` and
``sigma^2 = 1' Sigma 1``, the limiting rejection probability is
``1 - Phi(z_{1-alpha} - drift)`` where the drift depends on ``p``, on the
test mode and on the rate of the local alternative:

=========  ===  ==========  ==================================
mode       p    rate        drift
=========  ===  ==========  ==================================
one-sided  1    root_n      eta_{1,0} / (2 sigma)
one-sided  2    root_n      eta_{1,1} / (sigma sqrt(pi/2))
one-sided  1    root_n_h    eta_{2,-1} / (sqrt(8 pi) sigma)
one-sided  2    root_n_h    eta_{2,0} / (2 sigma)
two-sided  1    root_n_h    eta_{2,-1} / (sqrt(2 pi) sigma)
two-sided  2    root_n_h    eta_{2,0} / sigma
=========  ===  ==========  ==================================

The ``root_n_h`` one-sided rows require the first-order drift to vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .distributions import norm_ppf, norm_sf
from .estimators import EvalGrid, make_grid
from .kernels import get_kernel
from .normal import ONE_SIDED, TWO_SIDED, LambdaSpec, McSettings, q_constant
from .statistic import MODE_ALIASES

FunctionLike = Union[Callable, float, Sequence[float], np.ndarray]
ROOT_N = "root_n"
ROOT_N_H = "root_n_h"
FIRST_ORDER_TOL = 1e-8


def _as_list(v, J: int | None = None) -> list:
    if callable(v) or np.isscalar(v):
        return [v] if J is None else [v] * J
    if isinstance(v, np.ndarray) and v.ndim == 1 and J in (None, 1) and v.dtype != object:
        return [v]
    return list(v)


def on_grid(f: FunctionLike, grid: EvalGrid) -> np.ndarray:
    """Evaluate a callable, a constant or a grid table at the grid points."""
    if callable(f):
        pts = grid.points if grid.d > 1 else grid.points[:, 0]
        vals = np.asarray(f(pts), dtype=float)
        vals = np.broadcast_to(vals, (grid.size,)) if vals.ndim == 0 else vals
    else:
        vals = np.asarray(f, dtype=float)
        if vals.ndim == 0:
            vals = np.full(grid.size, float(vals))
    if vals.shape != (grid.size,):
        raise ValueError(f"function table has shape {vals.shape}, grid has {grid.size} points")
    return vals


@dataclass
class PowerQuery:
    """Inputs of the local-power formulas.

    ``delta``, ``rho`` and ``weights`` hold one entry per outcome; each entry
    is a callable of ``x``, a constant or a table on the grid.
    """

    delta: Sequence[FunctionLike]
    rho: Sequence[FunctionLike]
    weights: Sequence[FunctionLike]
    sigma: float
    alpha: float = 0.05
    p: int = 1
    rate: str = ROOT_N
    mode: str = ONE_SIDED
    domain: tuple = ((0.05, 0.95),)
    grid_size: int | None = None
    grid: EvalGrid = field(init=False, repr=False)

    def __post_init__(self):
        self.delta = _as_list(self.delta)
        J = len(self.delta)
        self.rho = _as_list(self.rho, J)
        self.weights = _as_list(self.weights, J)
        if not len(self.rho) == len(self.weights) == J:
            raise ValueError("delta, rho and weights need one entry per outcome")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.p not in (1, 2):
            raise ValueError("local power formulas cover p = 1 and p = 2 only")
        self.p = int(self.p)
        if self.rate not in (ROOT_N, ROOT_N_H):
            raise ValueError(f"rate must be {ROOT_N!r} or {ROOT_N_H!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        self.mode = MODE_ALIASES[self.mode]
        self.grid = make_grid(self.domain, self.grid_size)

    @property
    def J(self) -> int:
        return len(self.delta)


def eta(s: int, z: int, q: PowerQuery) -> float:
    """``sum_j int delta_j^s rho_j^z w_j dx`` on the query grid."""
    if s not in (1, 2) or z not in (-1, 0, 1):
        raise ValueError("need s in {1, 2} and z in {-1, 0, 1}")
    total = 0.0
    for dj, rj, wj in zip(q.delta, q.rho, q.weights):
        d = on_grid(dj, q.grid)
        w = on_grid(wj, q.grid)
        r = on_grid(rj, q.grid)
        if z == -1:
            bad = (r <= 0) & (w > 0)
            if np.any(bad):
                raise ValueError("rho vanishes where the weight is positive; eta_{s,-1} undefined")
            r = np.where(w > 0, r, 1.0)
        total += q.grid.integrate(d ** s * r ** float(z) * w)
    return total


def _abs_eta(s: int, z: int, q: PowerQuery) -> float:
    total = 0.0
    for dj, rj, wj in zip(q.delta, q.rho, q.weights):
        d, r, w = on_grid(dj, q.grid), on_grid(rj, q.grid), on_grid(wj, q.grid)
        total += q.grid.integrate(np.abs(d ** s * r ** float(z) * w))
    return total


def power_from_drift(drift: float, alpha: float) -> float:
    return float(norm_sf(float(norm_ppf(1.0 - alpha)) - drift))


def inequality_drift(q: PowerQuery) -> float:
    if q.rate == ROOT_N:
        if q.p == 1:
            return eta(1, 0, q) / (2.0 * q.sigma)
        return eta(1, 1, q) / (q.sigma * math.sqrt(math.pi / 2.0))
    z_first = 0 if q.p == 1 else 1
    first = eta(1, z_first, q)
    scale = _abs_eta(1, z_first, q)
    if abs(first) > FIRST_ORDER_TOL * max(scale, 1.0):
        raise ValueError(
            f"the slower-rate power formula needs eta_(1,{z_first}) = 0, got {first:.3g}; "
            "use rate='root_n' for this direction")
    if q.p == 1:
        return eta(2, -1, q) / (math.sqrt(8.0 * math.pi) * q.sigma)
    return eta(2, 0, q) / (2.0 * q.sigma)


def local_power_inequality(q: PowerQuery) -> float:
    """Limiting rejection probability of the one-sided test."""
    return power_from_drift(inequality_drift(q), q.alpha)


def equality_drift(q: PowerQuery) -> float:
    if q.p == 1:
        return eta(2, -1, q) / (math.sqrt(2.0 * math.pi) * q.sigma)
    return eta(2, 0, q) / q.sigma


def local_power_equality(q: PowerQuery) -> float:
    """Limiting rejection probability of the two-sided test at rate n^-1/2 h^-d/4."""
    return power_from_drift(equality_drift(q), q.alpha)


def power_summary(q: PowerQuery) -> dict:
    """Drift, power and every defined eta value, as emitted by the CLI."""
    if q.mode == TWO_SIDED:
        drift = equality_drift(q)
    else:
        drift = inequality_drift(q)
    etas = {}
    for s in (1, 2):
        for z in (-1, 0, 1):
            try:
                etas[f"eta_{s}_{z}"] = eta(s, z, q)
            except ValueError:
                continue
    return {"drift": drift, "power": power_from_drift(drift, q.alpha), "eta_values": etas,
            "sigma": q.sigma, "p": q.p, "mode": q.mode, "rate": q.rate, "alpha": q.alpha}


@dataclass
class OptimalWeight:
    grid: EvalGrid
    weights: np.ndarray        # as displayed: Cauchy-Schwarz maximiser
    normalized: np.ndarray     # rescaled so that int w rho^(2p) dx = 1
    constraint_residual: float # int weights * rho^(2p) dx - 1
    drift: float
    power: float
    q: float


def optimal_weight(delta: FunctionLike, rho: FunctionLike, p: int, mode: str = ONE_SIDED,
                   alpha: float = 0.05, domain=((0.05, 0.95),), grid_size: int | None = None,
                   q: float | None = None, kernel: str = "quartic2u",
                   mc: McSettings | None = None) -> OptimalWeight:
    """Power-maximising weight for one outcome and the resulting local power.

    One-sided: ``w ~ delta+ rho^-2`` (p = 1) or ``delta+ rho^-3`` (p = 2),
    scaled by ``(int delta+^2 rho^-2)^(-1/2)``.  Two-sided: ``w ~ delta^2
    rho^-3`` or ``delta^2 rho^-4``, scaled by ``(int delta^4 rho^-4)^(-1/2)``.
    ``q`` defaults to the one- or two-sided constant of ``kernel``.
    """
    if p not in (1, 2):
        raise ValueError("optimal weights are available for p = 1 and p = 2")
    mode = MODE_ALIASES[mode]
    grid = make_grid(domain, grid_size)
    d = on_grid(delta, grid)
    r = on_grid(rho, grid)
    if np.any(r <= 0):
        raise ValueError("rho must be positive on the domain")
    if q is None:
        q = q_constant(LambdaSpec(p, mode), get_kernel(kernel, grid.d), 1.0, mc)

    if mode == ONE_SIDED:
        dp = np.maximum(d, 0.0)
        if not np.any(dp > 0):
            raise ValueError("no direction: delta has no positive part on the domain")
        total = grid.integrate(dp ** 2 * r ** -2.0)
        w = dp * r ** (-2.0 if p == 1 else -3.0) / math.sqrt(total)
        drift = (math.sqrt(total) / (2.0 * math.sqrt(q)) if p == 1
                 else math.sqrt(total) / math.sqrt(q * math.pi / 2.0))
    else:
        if not np.any(d != 0):
            raise ValueError("no direction: delta vanishes on the domain")
        total = grid.integrate(d ** 4 * r ** -4.0)
        w = d ** 2 * r ** (-3.0 if p == 1 else -4.0) / math.sqrt(total)
        drift = (math.sqrt(total) / math.sqrt(2.0 * math.pi * q) if p == 1
                 else math.sqrt(total) / math.sqrt(q))

    constraint = grid.integrate(w * r ** (2.0 * p))
    return OptimalWeight(grid, w, w / constraint, constraint - 1.0, drift,
                         power_from_drift(drift, alpha), q)
