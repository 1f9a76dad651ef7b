"""Data-generating processes, population oracles and Monte Carlo campaigns.

Observations follow ``Y = m(X) + sigma(X) U`` with ``X`` uniform on a box and
``U`` standard normal, independent of ``X``.  Every replication draws from its
own Philox stream keyed by ``(base_seed, dgp, n, r)``, so a campaign gives the
same numbers for any worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from multiprocessing import get_context
from typing import Callable, Sequence

import numpy as np

from .distributions import norm_ppf
from .estimators import Dataset, bandwidth_rule, make_grid, pop_rho_sq
from .kernels import get_kernel
from .normal import McSettings, mean_lambda, q_constant
from .statistic import DegenerateVarianceError, TestConfig, run_test

__all__ = [
    "DGPSpec", "make_dgp", "local_alternative", "draw", "bandwidth_rule", "pop_sigma_sq",
    "pop_a", "ExperimentConfig", "CellResult", "ExperimentResult", "run_experiment",
    "DESIGN_C_H", "DESIGN_C_M",
]

DESIGN_C_M = (0.25, 0.20, 0.15, 0.10, 0.05)
DESIGN_C_H = (0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5)


# picklable building blocks for mean and scale functions


@dataclass(frozen=True)
class Constant:
    value: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.value)


@dataclass(frozen=True)
class Quadratic:
    """``x (1 - x) - c_m`` in the first covariate."""

    c_m: float

    def __call__(self, x):
        x0 = np.asarray(x, dtype=float)[..., 0]
        return x0 * (1.0 - x0) - self.c_m


@dataclass(frozen=True)
class Sine:
    scale: float = 1.0

    def __call__(self, x):
        return self.scale * np.sin(2.0 * np.pi * np.asarray(x, dtype=float)[..., 0])


@dataclass(frozen=True)
class FirstCoordinate:
    def __call__(self, x):
        return np.asarray(x, dtype=float)[..., 0].copy()


@dataclass(frozen=True)
class Scaled:
    func: Callable
    scale: float

    def __call__(self, x):
        return self.scale * np.asarray(self.func(x), dtype=float)


@dataclass(frozen=True)
class DGPSpec:
    """``Y = m(X) + sigma_fn(X) U`` with ``X ~ Unif(box)``.

    ``m`` and ``sigma_fn`` take arrays of shape ``(..., d)``.
    """

    m: Callable
    sigma_fn: Callable
    name: str
    box: tuple[tuple[float, float], ...] = ((0.0, 1.0),)

    @property
    def d(self) -> int:
        return len(self.box)

    def _inside(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.ones(x.shape[:-1], dtype=bool)
        for s, (lo, hi) in enumerate(self.box):
            inside &= (x[..., s] >= lo) & (x[..., s] <= hi)
        return inside

    def density(self, x):
        vol = math.prod(hi - lo for lo, hi in self.box)
        return np.where(self._inside(x), 1.0 / vol, 0.0)

    def mean(self, x):
        return self.m(x)

    def second_moment(self, x):
        return np.asarray(self.m(x)) ** 2 + np.asarray(self.sigma_fn(x)) ** 2


def make_dgp(name: str, c_m: float | None = None, noise: str | None = None) -> DGPSpec:
    """Build one of the simulation designs.

    ``name`` is ``dgp0`` .. ``dgp5``, ``sine`` or ``alt`` (which needs
    ``c_m``), optionally suffixed ``-homo`` / ``-hetero``.  ``noise`` overrides
    the suffix; homoskedastic ``sigma = 1`` is the default, heteroskedastic
    uses ``sigma(x) = x``.
    """
    base, _, suffix = name.lower().partition("-")
    noise = (noise or suffix or "homo").lower()
    if noise not in ("homo", "hetero"):
        raise ValueError(f"noise must be 'homo' or 'hetero', got {noise!r}")
    sigma_fn = Constant(1.0) if noise == "homo" else FirstCoordinate()

    if base == "dgp0":
        m = Constant(0.0)
    elif base.startswith("dgp") and base[3:] in {"1", "2", "3", "4", "5"}:
        cm = DESIGN_C_M[int(base[3:]) - 1] if c_m is None else float(c_m)
        m = Quadratic(cm)
    elif base == "alt":
        if c_m is None:
            raise ValueError("the 'alt' design needs c_m")
        m = Quadratic(float(c_m))
    elif base == "sine":
        m = Sine()
    else:
        raise ValueError(f"unknown DGP {name!r}; expected dgp0-dgp5, sine or alt")
    return DGPSpec(m, sigma_fn, f"{base}-{noise}")


def local_alternative(delta: Callable, scale: float, noise: str = "homo",
                      name: str | None = None) -> DGPSpec:
    """``m(x) = scale * delta(x)`` with ``X ~ Unif[0, 1]``, so ``g = m``."""
    sigma_fn = Constant(1.0) if noise == "homo" else FirstCoordinate()
    return DGPSpec(Scaled(delta, float(scale)), sigma_fn, name or f"local-{noise}")


def _stream(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        entropy, *key = seed
        ss = np.random.SeedSequence(int(entropy), spawn_key=tuple(int(k) for k in key))
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


def draw(dgp: DGPSpec, n: int, seed) -> Dataset:
    """Sample ``n`` observations; deterministic in ``seed``.

    Normal errors come from the inverse CDF applied to Philox uniforms.
    """
    if n < 2:
        raise ValueError("a dataset needs at least two observations")
    rng = _stream(seed)
    lo = np.array([b[0] for b in dgp.box])
    hi = np.array([b[1] for b in dgp.box])
    x = lo + (hi - lo) * rng.random((n, dgp.d))
    u = norm_ppf(np.clip(rng.random(n), 2**-60, 1.0 - 2**-53))
    y = np.asarray(dgp.m(x), dtype=float) + np.asarray(dgp.sigma_fn(x), dtype=float) * u
    return Dataset(x, y)


def _population_weights(dgp: DGPSpec, cfg: TestConfig, grid, rho_sq) -> np.ndarray:
    if cfg.weights == "uniform":
        return np.ones(grid.size)
    if cfg.weights == "inverse_se":
        rho = np.sqrt(rho_sq)
        return np.where(rho > 0, 1.0 / np.where(rho > 0, rho, 1.0), 0.0)
    if cfg.weights == "custom":
        vals = cfg.custom_weights(grid.points) if callable(cfg.custom_weights) else cfg.custom_weights
        return np.asarray(vals, dtype=float).reshape(grid.size)
    raise ValueError(f"no population version of {cfg.weights!r} weights")


def pop_sigma_sq(dgp: DGPSpec, cfg: TestConfig) -> float:
    """``q_p * int rho^(2p) w^2`` with the population ``rho`` (one outcome)."""
    kernel = get_kernel(cfg.kernel, dgp.d)
    grid = make_grid(cfg.domain, cfg.grid_size)
    rho_sq = np.asarray(pop_rho_sq(dgp, kernel, grid.points), dtype=float)
    w = _population_weights(dgp, cfg, grid, rho_sq)
    q = q_constant(cfg.spec, kernel, 1.0, cfg.mc, cfg.q_nodes, cfg.t_grid_size)
    return q * grid.integrate(rho_sq ** cfg.p * w ** 2)


def pop_a(dgp: DGPSpec, cfg: TestConfig, h: float) -> float:
    """Population centring ``h^(-d/2) int rho^p w dx * E Lambda_p(Z)``."""
    kernel = get_kernel(cfg.kernel, dgp.d)
    grid = make_grid(cfg.domain, cfg.grid_size)
    rho_sq = np.asarray(pop_rho_sq(dgp, kernel, grid.points), dtype=float)
    w = _population_weights(dgp, cfg, grid, rho_sq)
    return h ** (-dgp.d / 2.0) * grid.integrate(rho_sq ** (cfg.p / 2.0) * w) * mean_lambda(cfg.spec)


@dataclass
class ExperimentConfig:
    """A campaign over ``dgps x n x c_h x weights``.

    ``dgps`` holds design names understood by :func:`make_dgp` or ready
    :class:`DGPSpec` objects.  ``bandwidth`` fixes ``h`` for every cell, in
    which case ``c_h`` only labels the single cell.
    """

    dgps: Sequence = ("dgp0",)
    n: Sequence[int] = (1000,)
    c_h: Sequence[float] = (1.0,)
    weights: Sequence[str] = ("uniform",)
    p: float = 1.0
    mode: str = "one_sided"
    alpha: float = 0.05
    replications: int = 1000
    base_seed: int = 12345
    domain: tuple = ((0.05, 0.95),)
    kernel: str = "quartic2u"
    bandwidth: float | None = None
    grid_size: int | None = None
    mc: McSettings = field(default_factory=McSettings)

    def __post_init__(self):
        if int(self.replications) < 1:
            raise ValueError("replications must be at least 1")
        if not self.dgps or not self.n or not self.c_h or not self.weights:
            raise ValueError("dgps, n, c_h and weights must be non-empty")
        if any(int(v) < 2 for v in self.n):
            raise ValueError("every sample size must be at least 2")
        self.dgps = [make_dgp(d) if isinstance(d, str) else d for d in self.dgps]
        names = [d.name for d in self.dgps]
        if len(set(names)) != len(names):
            raise ValueError(f"DGP names must be unique, got {names}")
        for w in self.weights:
            self.test_config(w, self.c_h[0])

    def test_config(self, weight: str, c_h: float) -> TestConfig:
        return TestConfig(p=self.p, mode=self.mode, kernel=self.kernel, bandwidth=self.bandwidth,
                          bandwidth_c=c_h, domain=self.domain, weights=weight, alpha=self.alpha,
                          grid_size=self.grid_size, mc=self.mc)

    def summary(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in ("dgps", "mc")}
        out["dgps"] = [d.name for d in self.dgps]
        out["domain"] = [list(b) for b in self.domain]
        out["mc"] = asdict(self.mc)
        out["n"], out["c_h"], out["weights"] = list(self.n), list(self.c_h), list(self.weights)
        return out


@dataclass
class CellResult:
    dgp: str
    n: int
    c_h: float
    weight: str
    p: float
    mode: str
    replications: int
    rejections: int
    failures: int
    mean_t: float
    t_stats: list[float] = field(repr=False, default_factory=list)

    @property
    def reject_rate(self) -> float:
        return self.rejections / self.replications

    @property
    def mc_se(self) -> float:
        r = self.reject_rate
        return math.sqrt(r * (1.0 - r) / self.replications)


CSV_FIELDS = ("dgp", "n", "c_h", "weight", "p", "mode", "reject_rate", "mc_se", "failures")


@dataclass
class ExperimentResult:
    cells: list[CellResult]
    config: dict
    runtime: float

    def cell(self, dgp: str, n: int | None = None, c_h: float | None = None,
             weight: str | None = None) -> CellResult:
        hits = [c for c in self.cells if c.dgp == dgp and (n is None or c.n == n)
                and (c_h is None or c.c_h == c_h) and (weight is None or c.weight == weight)]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} cells match ({dgp}, {n}, {c_h}, {weight})")
        return hits[0]

    def rows(self) -> list[dict]:
        return [{"dgp": c.dgp, "n": c.n, "c_h": c.c_h, "weight": c.weight, "p": c.p,
                 "mode": c.mode, "reject_rate": c.reject_rate, "mc_se": c.mc_se,
                 "failures": c.failures} for c in self.cells]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    def figure_data(self) -> str:
        """Tidy rows for rejection-rate-versus-c_h curves, one panel per (dgp, weight)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["panel", "dgp", "weight", "series_n", "c_h", "reject_rate", "mc_se"])
        for c in sorted(self.cells, key=lambda c: (c.dgp, c.weight, c.n, c.c_h)):
            writer.writerow([f"{c.dgp}/{c.weight}", c.dgp, c.weight, c.n, repr(c.c_h),
                             repr(c.reject_rate), repr(c.mc_se)])
        return buf.getvalue()

    def to_json(self) -> str:
        cells = [{**row, "mean_t": c.mean_t, "replications": c.replications}
                 for row, c in zip(self.rows(), self.cells)]
        return json.dumps({"config": self.config, "runtime_seconds": self.runtime,
                           "cells": cells}, indent=2)


def cell_key(dgp_name: str, n: int) -> int:
    digest = hashlib.blake2b(f"{dgp_name}|{int(n)}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _replicate_block(cfg: ExperimentConfig, dgp: DGPSpec, n: int, reps: range):
    """Decisions and statistics for replications ``reps`` of one (dgp, n) pair.

    The same sample feeds every (c_h, weight) cell.
    """
    key = cell_key(dgp.name, n)
    out = []
    for r in reps:
        data = draw(dgp, n, (cfg.base_seed, key, r))
        row = []
        for c_h in cfg.c_h:
            for w in cfg.weights:
                try:
                    rep = run_test(data, cfg.test_config(w, c_h))
                    row.append((rep.t_stat, rep.reject))
                except DegenerateVarianceError:
                    row.append((math.nan, False))
        out.append(row)
    return out


def _warm_caches(cfg: ExperimentConfig) -> None:
    # fork-started workers inherit the tabulated covariance curve
    for dgp in cfg.dgps:
        kernel = get_kernel(cfg.kernel, dgp.d)
        tc = cfg.test_config(cfg.weights[0], cfg.c_h[0])
        q_constant(tc.spec, kernel, 1.0, tc.mc, tc.q_nodes, tc.t_grid_size)


def run_experiment(cfg: ExperimentConfig, workers: int = 1, chunk: int = 50) -> ExperimentResult:
    """Rejection frequencies for every (dgp, n, c_h, weight) cell.

    Failed replications (degenerate variance) count as non-rejections and
    are reported per cell.
    """
    start = time.perf_counter()
    _warm_caches(cfg)
    R = int(cfg.replications)
    jobs = [(dgp, int(n), range(s, min(s + chunk, R)))
            for dgp in cfg.dgps for n in cfg.n for s in range(0, R, chunk)]
    workers = max(1, int(workers or os.cpu_count() or 1))
    if workers == 1:
        blocks = [_replicate_block(cfg, *job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("fork")) as pool:
            blocks = list(pool.map(_replicate_block, *zip(*[(cfg, *job) for job in jobs])))

    per_pair: dict[tuple[str, int], list] = {}
    for (dgp, n, _), block in zip(jobs, blocks):
        per_pair.setdefault((dgp.name, n), []).extend(block)

    cells = []
    for dgp in cfg.dgps:
        for n in cfg.n:
            rows = per_pair[(dgp.name, int(n))]
            col = 0
            for c_h in cfg.c_h:
                for w in cfg.weights:
                    results = [row[col] for row in rows]
                    stats = [t for t, _ in results]
                    finite = [t for t in stats if not math.isnan(t)]
                    cells.append(CellResult(
                        dgp=dgp.name, n=int(n), c_h=float(c_h), weight=w, p=float(cfg.p),
                        mode=TestConfig(mode=cfg.mode).mode, replications=R,
                        rejections=sum(1 for _, rej in results if rej),
                        failures=len(stats) - len(finite),
                        mean_t=math.fsum(finite) / len(finite) if finite else math.nan,
                        t_stats=stats,
                    ))
                    col += 1
    return ExperimentResult(cells, cfg.summary(), time.perf_counter() - start)
