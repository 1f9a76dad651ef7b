"""Moments of one- and two-sided powers of (correlated) standard normals.

``Lambda_p(v) = max(v, 0)**p`` in the one-sided mode and ``|v|**p`` in the
two-sided mode.  The pair covariance

    c_p(t) = Cov(Lambda_p(sqrt(1 - t^2) Z1 + t Z2), Lambda_p(Z2))

has a closed form for the one-sided ``p = 1`` case and for two-sided even
integer ``p``.  Everything else goes through a randomised quasi-Monte Carlo
estimator with common random numbers, tabulated on a ``t`` grid and
interpolated with a monotone cubic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.stats import qmc

from .distributions import norm_ppf
from .kernels import ProductKernel, gauss_legendre

ONE_SIDED = "one_sided"
TWO_SIDED = "two_sided"
T_CLAMP_TOL = 1e-9


@dataclass(frozen=True)
class LambdaSpec:
    p: float = 1.0
    mode: str = ONE_SIDED

    def __post_init__(self):
        if self.mode not in (ONE_SIDED, TWO_SIDED):
            raise ValueError(f"mode must be {ONE_SIDED!r} or {TWO_SIDED!r}, got {self.mode!r}")
        if not (np.isfinite(self.p) and self.p >= 1):
            raise ValueError(f"p must be a finite number >= 1, got {self.p!r}")
        object.__setattr__(self, "p", float(self.p))

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        base = np.maximum(v, 0.0) if self.mode == ONE_SIDED else np.abs(v)
        return base if self.p == 1.0 else base ** self.p

    @property
    def has_closed_form(self) -> bool:
        if self.mode == ONE_SIDED:
            return self.p == 1.0
        return self.p.is_integer() and int(self.p) % 2 == 0


@dataclass(frozen=True)
class McSettings:
    """Randomised QMC settings for the covariance estimator.

    ``draws`` base points are split over ``replicates`` independently
    scrambled Sobol blocks (each rounded up to a power of two).  With
    ``antithetic`` each point is expanded into its four sign flips.
    """

    draws: int = 1_048_576
    seed: int = 20110617
    antithetic: bool = True
    replicates: int = 32

    def __post_init__(self):
        if int(self.draws) < 10_000:
            raise ValueError("mc draws must be at least 10_000")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("mc seed must be a 64-bit unsigned integer")
        if int(self.replicates) < 2:
            raise ValueError("need at least two replicates for a standard error")

    @property
    def block(self) -> int:
        per = -(-int(self.draws) // int(self.replicates))
        return 1 << (per - 1).bit_length()


def _check_t(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(np.isnan(t)) or np.any(np.abs(t) > 1.0 + T_CLAMP_TOL):
        raise ValueError("correlation t must lie in [-1, 1]")
    return np.clip(t, -1.0, 1.0)


def _abs_moment(p: float) -> float:
    """E|Z|^p."""
    return 2.0 ** (p / 2.0) * math.gamma((p + 1.0) / 2.0) / math.sqrt(math.pi)


def mean_lambda(spec: LambdaSpec) -> float:
    """E Lambda_p(Z) for a standard normal Z."""
    m = _abs_moment(spec.p)
    return 0.5 * m if spec.mode == ONE_SIDED else m


def _double_factorial_moment(k: int) -> float:
    """E Z^k for integer k >= 0."""
    if k % 2:
        return 0.0
    return float(math.prod(range(k - 1, 0, -2))) if k else 1.0


def _closed_cov(spec: LambdaSpec, t: np.ndarray) -> np.ndarray:
    if spec.mode == ONE_SIDED and spec.p == 1.0:
        s = np.sqrt(np.maximum(1.0 - t * t, 0.0))
        return (t * (0.5 * np.pi + np.arcsin(t)) + s - 1.0) / (2.0 * np.pi)
    # two-sided, even integer p: E[(sZ1 + tZ2)^p Z2^p] by binomial expansion
    p = int(spec.p)
    s = np.sqrt(np.maximum(1.0 - t * t, 0.0))
    cross = np.zeros_like(t)
    for k in range(p + 1):
        mz1 = _double_factorial_moment(p - k)
        if mz1 == 0.0:
            continue
        cross = cross + math.comb(p, k) * s ** (p - k) * t ** k * mz1 * _double_factorial_moment(p + k)
    return cross - _double_factorial_moment(p) ** 2


@lru_cache(maxsize=8)
def _base_normals(mc: McSettings) -> tuple[np.ndarray, np.ndarray]:
    """Common random numbers, shape ``(replicates, points)`` each."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(mc.seed))))
    z1, z2 = [], []
    tiny = np.finfo(float).tiny
    for _ in range(int(mc.replicates)):
        u = qmc.Sobol(d=2, scramble=True, seed=rng).random(mc.block)
        z = norm_ppf(np.clip(u, tiny, 1.0 - 2**-53))
        a, b = z[:, 0], z[:, 1]
        if mc.antithetic:
            a, b = np.concatenate([a, -a, a, -a]), np.concatenate([b, b, -b, -b])
        z1.append(a)
        z2.append(b)
    z1, z2 = np.array(z1), np.array(z2)
    z1.setflags(write=False)
    z2.setflags(write=False)
    return z1, z2


def cov_lambda_mc(spec: LambdaSpec, t, mc: McSettings | None = None):
    """Monte Carlo estimate of c_p(t) and its standard error.

    Returns
    -------
    est, se : ndarray
        Same shape as ``t``.  The standard error is the spread across
        independently scrambled replicates.
    """
    mc = mc or McSettings()
    t = _check_t(t)
    z1, z2 = _base_normals(mc)
    lam2 = spec(z2)
    mean2 = lam2.mean(axis=1)
    flat = t.reshape(-1)
    est = np.empty_like(flat)
    se = np.empty_like(flat)
    for i, ti in enumerate(flat):
        lam1 = spec(np.sqrt(max(1.0 - ti * ti, 0.0)) * z1 + ti * z2)
        per = (lam1 * lam2).mean(axis=1) - lam1.mean(axis=1) * mean2
        est[i] = per.mean()
        se[i] = per.std(ddof=1) / math.sqrt(per.size)
    return est.reshape(t.shape), se.reshape(t.shape)


def cov_lambda_pair(spec: LambdaSpec, t, method: str = "auto", mc: McSettings | None = None):
    """Pair covariance c_p(t).

    ``method`` is ``"auto"`` (closed form when one exists, else Monte
    Carlo), ``"closed"`` or ``"mc"``.
    """
    t_arr = _check_t(t)
    if method == "auto":
        method = "closed" if spec.has_closed_form else "mc"
    if method == "closed":
        if not spec.has_closed_form:
            raise ValueError(f"no closed form for p={spec.p} in {spec.mode} mode")
        out = _closed_cov(spec, t_arr)
    elif method == "mc":
        out = cov_lambda_mc(spec, t_arr, mc)[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    return out if np.ndim(out) else float(out)


@lru_cache(maxsize=32)
def cov_curve(spec: LambdaSpec, mc: McSettings | None = None,
              grid_size: int = 201) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised ``t -> c_p(t)`` used inside the q-integrals.

    Closed forms are returned directly; otherwise the Monte Carlo estimate
    is tabulated on a uniform grid over ``[-1, 1]`` and interpolated.
    """
    if spec.has_closed_form:
        return lambda t: _closed_cov(spec, np.asarray(t, dtype=float))
    if grid_size < 3:
        raise ValueError("t grid needs at least 3 points")
    grid = np.linspace(-1.0, 1.0, grid_size)
    values, _ = cov_lambda_mc(spec, grid, mc or McSettings())
    return PchipInterpolator(grid, values, extrapolate=False)


def _axis_breaks(kernel_factor) -> list[float]:
    pts = [-0.5, 0.5, *kernel_factor.breakpoints]
    diffs = {round(a - b, 15) for a in pts for b in pts}
    return sorted(x for x in diffs if -1.0 < x < 1.0)


@lru_cache(maxsize=64)
def overlap_nodes(kernel: ProductKernel, per_panel: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product quadrature over ``u in [-1, 1]^d``.

    Each axis is split where its overlap function has kinks and integrated
    with ``per_panel`` Gauss-Legendre nodes per piece.

    Returns
    -------
    weights, overlaps : ndarray
        Flattened quadrature weights and the matching ``overlap_t`` values.
    """
    gx, gw = gauss_legendre(per_panel)
    w_all, ov_all = np.ones(1), np.ones(1)
    for f in kernel.factors:
        edges = [-1.0, *_axis_breaks(f), 1.0]
        nodes, weights = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            nodes.append(0.5 * (a + b) + 0.5 * (b - a) * gx)
            weights.append(0.5 * (b - a) * gw)
        nodes, weights = np.concatenate(nodes), np.concatenate(weights)
        ov = f.overlap(nodes)
        w_all = np.outer(w_all, weights).ravel()
        ov_all = np.outer(ov_all, ov).ravel()
    w_all.setflags(write=False)
    ov_all.setflags(write=False)
    return w_all, ov_all


def q_constant(spec: LambdaSpec, kernel: ProductKernel, t_scale: float = 1.0,
               mc: McSettings | None = None, per_panel: int = 64,
               grid_size: int = 201) -> float:
    """``int_{[-1,1]^d} c_p(t_scale * overlap_t(u)) du``.

    With ``t_scale = 1`` this is q_p (one-sided) or its two-sided analogue.
    """
    t_scale = float(_check_t(t_scale))
    if t_scale == 0.0:
        return 0.0
    w, ov = overlap_nodes(kernel, per_panel)
    c = cov_curve(spec, mc, grid_size)
    return float(np.sum(w * c(t_scale * ov)))


def q_of_ratio(spec: LambdaSpec, kernel: ProductKernel, ratio, mc: McSettings | None = None,
               per_panel: int = 21, grid_size: int = 201) -> np.ndarray:
    """Vectorised ``q_hat(x)`` for an array of correlation ratios (already clamped)."""
    ratio = np.asarray(ratio, dtype=float)
    w, ov = overlap_nodes(kernel, per_panel)
    c = cov_curve(spec, mc, grid_size)
    flat = ratio.reshape(-1)
    out = np.empty_like(flat)
    step = max(1, 2_000_000 // max(ov.size, 1))
    for start in range(0, flat.size, step):
        chunk = flat[start:start + step]
        out[start:start + step] = c(chunk[:, None] * ov[None, :]) @ w
    return out.reshape(ratio.shape)
