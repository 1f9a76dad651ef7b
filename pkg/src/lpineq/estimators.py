"""Kernel estimators of g_j(x) = m_j(x) f(x) and of the local second moments.

    g_hat_j(x)     = (n h^d)^-1 sum_i Y_ji K((x - X_i) / h)
    rho_hat_jk(x)  = (n h^d)^-1 sum_i Y_ji Y_ki K^2((x - X_i) / h)

Grid evaluation sorts observations by the first covariate and only visits
the ones inside the bandwidth window of each grid point.  Window sums use
Neumaier compensated summation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import ProductKernel


@dataclass(frozen=True)
class Dataset:
    """``n`` observations of covariates ``x`` (n x d) and outcomes ``y`` (n x J)."""

    x: np.ndarray
    y: np.ndarray
    x_names: tuple[str, ...] | None = None
    y_names: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if x.ndim != 2 or y.ndim != 2:
            raise ValueError("x and y must be one- or two-dimensional")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        if x.shape[0] < 2:
            raise ValueError("need at least two observations")
        if x.shape[1] < 1 or y.shape[1] < 1:
            raise ValueError("need at least one covariate and one outcome")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("data contain non-finite values")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def J(self) -> int:
        return self.y.shape[1]

    def with_y(self, y) -> "Dataset":
        return Dataset(self.x, y, self.x_names, self.y_names)


Domain = Sequence[tuple[float, float]]


def default_grid_size(d: int) -> int:
    return {1: 512, 2: 64}.get(d, 24)


@dataclass(frozen=True)
class EvalGrid:
    """Tensor-product midpoint grid; ``cell_weights`` are the cell volumes."""

    points: np.ndarray
    cell_weights: np.ndarray
    domain: tuple[tuple[float, float], ...] = field(default=())

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.domain]))

    def integrate(self, values) -> float:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.size:
            raise ValueError(f"expected {self.size} grid values, got {values.shape[0]}")
        return float(np.sum(values * self.cell_weights))


def check_domain(domain: Domain) -> tuple[tuple[float, float], ...]:
    out = []
    for lo, hi in domain:
        lo, hi = float(lo), float(hi)
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError(f"invalid domain interval [{lo}, {hi}]")
        out.append((lo, hi))
    if not out:
        raise ValueError("domain must have at least one axis")
    return tuple(out)


def make_grid(domain: Domain, per_axis: int | None = None) -> EvalGrid:
    dom = check_domain(domain)
    per_axis = per_axis or default_grid_size(len(dom))
    if per_axis < 1:
        raise ValueError("grid needs at least one point per axis")
    axes, widths = [], []
    for lo, hi in dom:
        step = (hi - lo) / per_axis
        axes.append(lo + step * (np.arange(per_axis) + 0.5))
        widths.append(step)
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    weights = np.full(points.shape[0], float(np.prod(widths)))
    return EvalGrid(points, weights, dom)


def neumaier_rows(terms: np.ndarray) -> np.ndarray:
    """Compensated sum over axis 1 of a ``(G, W, ...)`` array."""
    s = np.zeros((terms.shape[0],) + terms.shape[2:])
    c = np.zeros_like(s)
    for k in range(terms.shape[1]):
        v = terms[:, k]
        t = s + v
        c += np.where(np.abs(s) >= np.abs(v), (s - t) + v, (v - t) + s)
        s = t
    return s + c


def _check_h(h: float) -> float:
    h = float(h)
    if not (np.isfinite(h) and h > 0):
        raise ValueError(f"bandwidth must be positive, got {h}")
    return h


@dataclass(frozen=True)
class GridEstimates:
    """Estimator values on a grid.

    ``g`` has shape ``(G, J)``; ``rho`` has shape ``(G, J, J)`` with
    ``rho[:, j, j]`` the squared scale estimate and off-diagonals the cross terms.
    """

    g: np.ndarray
    rho: np.ndarray

    @property
    def rho_sq(self) -> np.ndarray:
        return np.diagonal(self.rho, axis1=1, axis2=2)


def estimate_on_points(data: Dataset, kernel: ProductKernel, h: float, points,
                       cross: bool = True) -> GridEstimates:
    """Evaluate g_hat and rho_hat at every row of ``points``."""
    h = _check_h(h)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != data.d or kernel.d != data.d:
        raise ValueError(f"dimension mismatch: data d={data.d}, points d={pts.shape[1]}, kernel d={kernel.d}")
    J = data.J
    order = np.argsort(data.x[:, 0], kind="stable")
    xs = data.x[order]
    ys = data.y[order]
    lo = np.searchsorted(xs[:, 0], pts[:, 0] - 0.5 * h, side="left")
    hi = np.searchsorted(xs[:, 0], pts[:, 0] + 0.5 * h, side="right")
    width = int(np.max(hi - lo)) if pts.shape[0] else 0

    pairs = [(j, k) for j in range(J) for k in range(j, J) if cross or j == k]
    G = pts.shape[0]
    g = np.zeros((G, J))
    rho = np.zeros((G, J, J))
    if width == 0:
        return GridEstimates(g, rho)

    idx = lo[:, None] + np.arange(width)[None, :]
    valid = idx < hi[:, None]
    idx = np.minimum(idx, data.n - 1)
    kv = kernel.eval((pts[:, None, :] - xs[idx]) / h) * valid
    k2 = kv * kv
    yw = ys[idx]
    terms = np.concatenate(
        [yw * kv[..., None]]
        + [(yw[..., j] * yw[..., k] * k2)[..., None] for j, k in pairs],
        axis=-1,
    )
    sums = neumaier_rows(terms) / (data.n * h ** data.d)
    g[:] = sums[:, :J]
    for m, (j, k) in enumerate(pairs):
        rho[:, j, k] = rho[:, k, j] = sums[:, J + m]
    return GridEstimates(g, rho)


def _point(data: Dataset, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (data.d,):
        raise ValueError(f"expected a point of dimension {data.d}, got shape {x.shape}")
    return x[None, :]


def _check_j(data: Dataset, j: int) -> int:
    if not 0 <= j < data.J:
        raise IndexError(f"outcome index {j} out of range for J={data.J}")
    return j


def g_hat(data: Dataset, j: int, kernel: ProductKernel, h: float, x) -> float:
    _check_j(data, j)
    return float(estimate_on_points(data, kernel, h, _point(data, x), cross=False).g[0, j])


def rho_hat_sq(data: Dataset, j: int, kernel: ProductKernel, h: float, x) -> float:
    _check_j(data, j)
    return float(estimate_on_points(data, kernel, h, _point(data, x), cross=False).rho[0, j, j])


def rho_hat_cross(data: Dataset, j: int, k: int, kernel: ProductKernel, h: float, x) -> float:
    _check_j(data, j)
    _check_j(data, k)
    return float(estimate_on_points(data, kernel, h, _point(data, x)).rho[0, j, k])


def pop_rho_sq(dgp, kernel: ProductKernel, x) -> np.ndarray | float:
    """Population ``E[Y^2 | X = x] f(x) int K^2`` for a DGP with analytic moments.

    ``dgp`` must provide ``second_moment(x)`` and ``density(x)`` accepting
    arrays of shape ``(..., d)``.
    """
    if not (hasattr(dgp, "second_moment") and hasattr(dgp, "density")):
        raise TypeError("dgp does not expose analytic second moments and density")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != kernel.d:
        x = x[..., None]
    out = dgp.second_moment(x) * dgp.density(x) * kernel.int_K2()
    return out if np.ndim(out) else float(out)


def bandwidth_rule(c_h: float, data: Dataset) -> float:
    """``h = c_h * s_X * n^(-1/5)`` with ``s_X`` the sample std of the first covariate."""
    c_h = float(c_h)
    if not (np.isfinite(c_h) and c_h > 0):
        raise ValueError(f"bandwidth constant must be positive, got {c_h}")
    s = float(np.std(data.x[:, 0], ddof=1))
    if not s > 0:
        raise ValueError("first covariate has zero sample variance; bandwidth rule undefined")
    return c_h * s * data.n ** (-0.2)
