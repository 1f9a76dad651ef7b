"""Compactly supported product kernels and their moments.

Every one-dimensional factor lives on ``[-1/2, 1/2]``.  Moments are computed
with Gauss-Legendre quadrature split at the factor's declared breakpoints, so
piecewise-polynomial kernels are integrated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

HALF_WIDTH = 0.5
DEFAULT_NODES = 64


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[-1, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _segment_quadrature(edges: np.ndarray, integrand, nodes: int) -> np.ndarray:
    """Integrate over consecutive segments described by sorted ``edges``.

    ``edges`` has shape ``(m, s + 1)``; row ``i`` splits one interval into
    ``s`` pieces.  ``integrand(x, i)`` receives points of shape ``(m, s, nodes)``.
    """
    gx, gw = gauss_legendre(nodes)
    a = edges[:, :-1, None]
    b = edges[:, 1:, None]
    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * gx
    vals = integrand(x)
    return np.sum(vals * gw * half, axis=(1, 2))


def _quartic2u(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= HALF_WIDTH, 1.5 * (1.0 - 4.0 * u * u), 0.0)


def _uniform(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= HALF_WIDTH, 1.0, 0.0)


def _triangular(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= HALF_WIDTH, 2.0 * (1.0 - 2.0 * np.abs(u)), 0.0)


@dataclass(frozen=True)
class Kernel1D:
    """One-dimensional kernel supported on ``[-1/2, 1/2]``.

    Parameters
    ----------
    func : callable
        Vectorised map ``u -> K(u)``.
    sup_norm : float
        Declared bound on ``|K|``.  Checked against a dense sample.
    breakpoints : sequence of float
        Interior points where ``K`` is not smooth (``0`` for the triangle).
    name : str
        Label used in reports.
    """

    func: Callable[[np.ndarray], np.ndarray]
    sup_norm: float
    breakpoints: tuple[float, ...] = ()
    name: str = "custom"
    signed: bool = field(init=False, default=False)

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        if any(abs(b) >= HALF_WIDTH for b in self.breakpoints):
            raise ValueError("breakpoints must lie strictly inside (-1/2, 1/2)")
        if not np.isfinite(self.sup_norm) or self.sup_norm <= 0:
            raise ValueError("sup_norm must be a positive finite number")

        outside = np.concatenate([np.linspace(-3.0, -0.5 - 1e-9, 257),
                                  np.linspace(0.5 + 1e-9, 3.0, 257)])
        if np.any(np.asarray(self.func(outside), dtype=float) != 0.0):
            raise ValueError(f"kernel {self.name!r} is nonzero outside [-1/2, 1/2]")

        inside = np.linspace(-HALF_WIDTH, HALF_WIDTH, 4097)
        vals = np.asarray(self.func(inside), dtype=float)
        if vals.shape != inside.shape:
            raise ValueError("kernel function must be vectorised over numpy arrays")
        if np.max(np.abs(vals)) > self.sup_norm * (1 + 1e-12):
            raise ValueError(f"kernel {self.name!r} exceeds its declared sup-norm")

        total = self.integrate(lambda x: self.func(x))
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"kernel {self.name!r} integrates to {total!r}, not 1")
        object.__setattr__(self, "signed", bool(np.min(vals) < 0.0))

    def __call__(self, u):
        return self.func(u)

    def _edges(self, lo, hi, extra=()) -> np.ndarray:
        """Sorted, clipped segment edges between ``lo`` and ``hi`` (arrays)."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        cuts = [np.broadcast_to(b, lo.shape) for b in self.breakpoints]
        cuts += [np.asarray(e, dtype=float) for e in extra]
        if cuts:
            inner = np.clip(np.stack(cuts, axis=-1), lo[:, None], hi[:, None])
            edges = np.concatenate([lo[:, None], np.sort(inner, axis=-1), hi[:, None]], axis=-1)
        else:
            edges = np.stack([lo, hi], axis=-1)
        return edges

    def integrate(self, integrand, nodes: int = DEFAULT_NODES) -> float:
        """Integrate ``integrand`` over the support, split at breakpoints."""
        edges = self._edges(-HALF_WIDTH, HALF_WIDTH)
        return float(_segment_quadrature(edges, integrand, nodes)[0])

    def int_sq(self, nodes: int = DEFAULT_NODES) -> float:
        return self.integrate(lambda x: self.func(x) ** 2, nodes)

    def overlap(self, u, nodes: int = DEFAULT_NODES) -> np.ndarray:
        """``int K(x) K(x + u) dx / int K^2``, vectorised over ``u``."""
        u = np.asarray(u, dtype=float)
        flat = u.reshape(-1)
        out = np.zeros_like(flat)
        live = np.abs(flat) < 2 * HALF_WIDTH
        if np.any(live):
            uu = flat[live]
            lo = np.maximum(-HALF_WIDTH, -HALF_WIDTH - uu)
            hi = np.minimum(HALF_WIDTH, HALF_WIDTH - uu)
            shifted = [b - uu for b in self.breakpoints]
            edges = self._edges(lo, hi, shifted)
            shift = uu[:, None, None]
            vals = _segment_quadrature(
                edges, lambda x: self.func(x) * self.func(x + shift), nodes)
            out[live] = vals / self.int_sq(nodes)
        return out.reshape(u.shape)


@dataclass(frozen=True)
class ProductKernel:
    """``K(u) = prod_s K_s(u_s)`` on the box ``[-1/2, 1/2]^d``."""

    factors: tuple[Kernel1D, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("a product kernel needs at least one factor")

    @property
    def d(self) -> int:
        return len(self.factors)

    @property
    def signed(self) -> bool:
        return any(f.signed for f in self.factors)

    @property
    def name(self) -> str:
        names = {f.name for f in self.factors}
        return names.pop() if len(names) == 1 else "x".join(f.name for f in self.factors)

    def _check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.ndim == 0 or u.shape[-1] != self.d:
            raise ValueError(f"expected trailing dimension {self.d}, got shape {u.shape}")
        return u

    def eval(self, u) -> np.ndarray | float:
        u = self._check(u)
        out = np.ones(u.shape[:-1])
        for s, f in enumerate(self.factors):
            out = out * f(u[..., s])
        return out if out.ndim else float(out)

    __call__ = eval

    def int_K2(self, nodes: int = DEFAULT_NODES) -> float:
        return float(np.prod([f.int_sq(nodes) for f in self.factors]))

    def overlap_t(self, u, nodes: int = DEFAULT_NODES) -> np.ndarray | float:
        """Normalised self-overlap; separable across axes."""
        u = self._check(u)
        out = np.ones(u.shape[:-1])
        for s, f in enumerate(self.factors):
            out = out * f.overlap(u[..., s], nodes)
        return out if out.ndim else float(out)


QUARTIC2U = Kernel1D(_quartic2u, sup_norm=1.5, name="quartic2u")
UNIFORM = Kernel1D(_uniform, sup_norm=1.0, name="uniform")
TRIANGULAR = Kernel1D(_triangular, sup_norm=2.0, breakpoints=(0.0,), name="triangular")

KERNELS = {k.name: k for k in (QUARTIC2U, UNIFORM, TRIANGULAR)}


def get_kernel(name: str | Kernel1D | ProductKernel, d: int = 1) -> ProductKernel:
    """Look up a registered kernel and build its ``d``-fold product."""
    if isinstance(name, ProductKernel):
        if name.d != d:
            raise ValueError(f"kernel has dimension {name.d}, data has {d}")
        return name
    if isinstance(name, Kernel1D):
        return ProductKernel((name,) * d)
    try:
        base = KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}") from None
    return ProductKernel((base,) * d)


def product(factors: Sequence[Kernel1D]) -> ProductKernel:
    return ProductKernel(tuple(factors))
