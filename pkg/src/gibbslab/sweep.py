"""Gridded local functions and the shell-sweeping operator.

B^{n,s} f integrates the shells s, s+1, ..., n one after another; each shell
is a set of pairwise non-adjacent sites, so its conditional expectation is a
product of independent one-site integrations done by tensor contraction.
"""
from __future__ import annotations

import itertools
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .lattice import LatticeRegion, Shell, Site, are_neighbors, neighbors, origin, shell
from .orlicz import HFunction, omega
from .specification import (Boundary, SpinGrid, SpinModel, TailContainmentError, MuEstimate,
                            mcmc_samples, mean_with_stderr, trapezoid_weights)

DEFAULT_BUDGET = 2_000_000
NUMERICAL_FLOOR = 1e-14
SWEEP_GRID = SpinGrid(10.0, 41)
_MAGIC = b"GRIDFN01"


class SupportBudgetError(MemoryError):
    def __init__(self, size: int, budget: int, sites):
        super().__init__(f"gridded function would need {size} grid points on {len(sites)} sites "
                         f"(budget {budget}); use a smaller box or a coarser spin grid")
        self.size = size
        self.budget = budget


class SupportConditionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GriddedFunction:
    """Values of f on the product grid over its support (sorted sites).

    All support sites share one uniform spin grid; every other site is
    read from ``boundary``.
    """

    support: LatticeRegion
    grid: np.ndarray
    values: np.ndarray
    boundary: Boundary = field(default_factory=Boundary)

    def __post_init__(self):
        expected = (self.grid.size,) * len(self.support)
        if self.values.shape != expected:
            raise ValueError(f"value tensor shape {self.values.shape} != {expected}")

    @classmethod
    def constant(cls, value: float, grid: np.ndarray, boundary: Boundary | None = None):
        return cls(LatticeRegion(), np.asarray(grid, dtype=float), np.array(float(value)),
                   boundary or Boundary())

    @classmethod
    def from_callable(cls, support: LatticeRegion, grid: np.ndarray,
                      fn: Callable[[np.ndarray], np.ndarray], boundary: Boundary | None = None):
        """fn takes an array (..., |support|) of spins in support order."""
        grid = np.asarray(grid, dtype=float)
        mesh = np.stack(np.meshgrid(*([grid] * len(support)), indexing="ij"), axis=-1)
        return cls(support, grid, np.asarray(fn(mesh), dtype=float), boundary or Boundary())

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def is_constant(self) -> bool:
        return len(self.support) == 0

    def _interp(self):
        if self.is_constant:
            return None
        return RegularGridInterpolator([self.grid] * len(self.support), self.values,
                                       method="linear", bounds_error=True)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at spins given as (..., |support|) in support order."""
        pts = np.asarray(points, dtype=float)
        if self.is_constant:
            return np.full(pts.shape[:-1] if pts.ndim else (), float(self.values))
        lo, hi = self.grid[0], self.grid[-1]
        if np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12):
            raise ValueError("evaluation outside the spin grid")
        return self._interp()(np.clip(pts, lo, hi))

    def evaluate_on(self, region: LatticeRegion, configs: np.ndarray) -> np.ndarray:
        """Evaluate at configurations (N, |region|) given in region order."""
        configs = np.asarray(configs, dtype=float)
        if self.is_constant:
            return np.full(configs.shape[0], float(self.values))
        pos = {s: k for k, s in enumerate(region)}
        cols = [configs[:, pos[s]] if s in pos else np.full(configs.shape[0], self.boundary(s))
                for s in self.support]
        return self(np.stack(cols, axis=-1))

    def at(self, spins: dict[Site, float] | float) -> float:
        """Value at a configuration (constant fill if a number is given)."""
        if self.is_constant:
            return float(self.values)
        vals = [spins if np.isscalar(spins) else spins.get(s, self.boundary(s)) for s in self.support]
        return float(np.reshape(self(np.array(vals, dtype=float)), -1)[0])

    # ---- binary container
    def save(self, path: str | Path) -> None:
        header = json.dumps({"support": self.support.to_record(), "grid": self.grid.tolist(),
                             "boundary_fill": self.boundary.fill,
                             "shape": list(self.values.shape)}, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "GriddedFunction":
        raw = Path(path).read_bytes()
        if raw[:8] != _MAGIC:
            raise ValueError("not a gridded-function file")
        (hlen,) = struct.unpack("<Q", raw[8:16])
        header = json.loads(raw[16:16 + hlen])
        values = np.frombuffer(raw[16 + hlen:], dtype="<f8").reshape(header["shape"]).copy()
        return cls(LatticeRegion.from_record(header["support"]), np.array(header["grid"]),
                   values, Boundary(header["boundary_fill"]))


def local_function(support: Sequence[Site], fn: Callable[[np.ndarray], np.ndarray],
                   grid: SpinGrid = SWEEP_GRID, boundary: Boundary | None = None) -> GriddedFunction:
    return GriddedFunction.from_callable(LatticeRegion(support), grid.points, fn, boundary)


def _kernel(model: SpinModel, i: Site, x: np.ndarray, box: LatticeRegion, boundary: Boundary):
    """Normalised quadrature weights of E^{i,.} over (x_i, in-box neighbours)."""
    nb = [j for j in neighbors(i)]
    # uncoupled conditionals do not depend on the neighbours at all
    inside = [j for j in nb if j in box] if model.J != 0 else []
    outside_sum = sum(boundary(j) for j in nb if j not in box)
    quad, lin = model.potential.x_terms(x)
    m = len(inside)
    s = np.full((x.size,) * m, outside_sum, dtype=float)
    for a in range(m):
        shape = [1] * m
        shape[a] = x.size
        s = s + x.reshape(shape)
    logw = (-model.phase(x) - model.J * len(nb) * quad).reshape((-1,) + (1,) * m) \
        - model.J * lin.reshape((-1,) + (1,) * m) * s[None]
    logw -= logw.max(axis=0, keepdims=True)
    w = np.exp(logw)
    if np.any(np.maximum(w[0], w[-1]) >= 1e-12):
        raise TailContainmentError(f"conditional at {i} is not tail-contained on the sweep grid")
    w *= trapezoid_weights(x.size, x[1] - x[0]).reshape((-1,) + (1,) * m)
    w /= w.sum(axis=0, keepdims=True)
    return inside, w


def conditional_expectation_shell(f: GriddedFunction, sh: Shell | LatticeRegion, model: SpinModel,
                                  boundary: Boundary, box: LatticeRegion,
                                  budget: int = DEFAULT_BUDGET) -> GriddedFunction:
    """Integrate out the shell sites in support(f) against their one-site
    conditionals; neighbours inside the box join the support."""
    region = sh.region if isinstance(sh, Shell) else sh
    targets = [i for i in region if i in f.support]
    for a, b in itertools.combinations(targets, 2):
        if are_neighbors(a, b):
            raise ValueError(f"shell sites {a} and {b} are adjacent")
    sites = list(f.support)
    vals = f.values
    x = f.grid
    for i in targets:
        inside, w = _kernel(model, i, x, box, boundary)
        new_sites = sorted((set(sites) - {i}) | set(inside))
        size = x.size ** len(new_sites)
        if size > budget:
            raise SupportBudgetError(size, budget, new_sites)
        label = {s: k for k, s in enumerate(sorted(set(sites) | set(inside)))}
        vals = np.einsum(vals, [label[s] for s in sites], w, [label[i]] + [label[s] for s in inside],
                         [label[s] for s in new_sites], optimize=True)
        sites = new_sites
    return GriddedFunction(LatticeRegion(sites), x, np.asarray(vals, dtype=float), boundary)


@dataclass
class SweepStep:
    k: int
    support_size: int
    value: float
    increment: float
    seconds: float


@dataclass
class SweepTrace:
    start_value: float
    steps: list[SweepStep]
    final: GriddedFunction
    reference: float

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.steps])

    @property
    def increments(self) -> np.ndarray:
        return np.array([s.increment for s in self.steps])

    @property
    def limit(self) -> float:
        return self.steps[-1].value

    def rows(self) -> list[tuple]:
        return [(s.k, s.increment, s.support_size) for s in self.steps]


def check_support_condition(f: GriddedFunction, s: int, box: LatticeRegion) -> None:
    allowed = shell(s, box).region
    if s >= 1:
        allowed = allowed | shell(s - 1, box).region
    stray = [x for x in f.support if x not in allowed]
    if stray:
        raise SupportConditionError(f"support sites {stray} lie outside shells {s - 1} and {s}")


def apply_B(f: GriddedFunction, n: int, s: int, model: SpinModel, boundary: Boundary,
            box: LatticeRegion, reference: float | None = None,
            budget: int = DEFAULT_BUDGET) -> SweepTrace:
    """Integrate shells s..n in order; record the value at the reference
    configuration (constant fill) after every step."""
    if n < s or s < 0:
        raise ValueError("need 0 <= s <= n")
    check_support_condition(f, s, box)
    ref = boundary.fill if reference is None else reference
    prev = f.at(ref)
    start = prev
    steps = []
    for k in range(s, n + 1):
        t0 = time.perf_counter()
        f = conditional_expectation_shell(f, shell(k, box), model, boundary, box, budget)
        v = f.at(ref)
        steps.append(SweepStep(k, len(f.support), v, abs(v - prev), time.perf_counter() - t0))
        prev = v
    return SweepTrace(start, steps, f, ref)


@dataclass(frozen=True)
class ConvergenceReport:
    rate: float | None
    status: str
    limit_ok: bool
    final_deviation: float
    per_step_factor: float | None


def convergence_diagnostic(trace: SweepTrace, mu_estimate: MuEstimate,
                           floor: float = NUMERICAL_FLOOR) -> ConvergenceReport:
    """Geometric rate of the step increments, per full parity cycle (two
    shells), fitted on the tail half of the steps above the floor."""
    inc = trace.increments
    if inc.size < 6:
        raise ValueError("convergence diagnostic needs at least 6 steps")
    tail = np.arange(inc.size // 2, inc.size)
    keep = tail[inc[tail] > floor]
    final_dev = abs(trace.limit - mu_estimate.mean)
    limit_ok = final_dev < max(3 * mu_estimate.stderr, floor)
    if keep.size < 2:
        return ConvergenceReport(None, "below floor", limit_ok, final_dev, None)
    slope = np.polyfit(keep.astype(float), np.log(inc[keep]), 1)[0]
    factor = float(np.exp(slope))
    return ConvergenceReport(factor ** 2, "fitted", limit_ok, final_dev, factor)


def strictly_decreasing_after(values: np.ndarray, start: int, floor: float = NUMERICAL_FLOOR) -> bool:
    v = np.asarray(values)[start:]
    v = v[v > floor]
    return bool(np.all(np.diff(v) < 0))


# ---------------------------------------------------------------- Lemma-type checks

def _one_site_weights(model: SpinModel, x: np.ndarray, field_sum: np.ndarray, m: int) -> np.ndarray:
    """Normalised weights of one-site conditionals, one row per field value."""
    quad, lin = model.potential.x_terms(x)
    logw = -model.phase(x) - model.J * m * quad - model.J * field_sum[..., None] * lin
    logw = logw - logw.max(axis=-1, keepdims=True)
    w = np.exp(logw) * trapezoid_weights(x.size, x[1] - x[0])
    return w / w.sum(axis=-1, keepdims=True)


@dataclass
class GradientSweepReport:
    eta_min: float
    proof_constant: float
    detail: list[dict]


def check_gradient_sweep(model: SpinModel, support: Sequence[Site], fn: Callable[[np.ndarray], np.ndarray],
                         k: int, boundary_samples: int, seed: int, spread: float = 2.0,
                         grid: SpinGrid | None = None, c: float = 2.0, c_hat: float = 1.0,
                         ) -> GradientSweepReport:
    """Smallest eta with |d_i E^{L_k} f|^2 <= 2 E|d_i f|^2 + eta E|d_{~i cap L_k} f|^2
    over random boundary configurations (uniform on [-spread, spread]) and
    sites i of shell k+1 adjacent to integrated support sites.

    ``fn`` maps an array (..., |support|) of spins to values.
    """
    grid = grid or model.grid
    x = grid.points
    h = grid.h
    support = [tuple(s) for s in support]
    d = len(support[0])
    shell_k = set(shell(k, LatticeRegion(_ball(d, k + 2))).region)
    shell_k1 = set(shell(k + 1, LatticeRegion(_ball(d, k + 3))).region)
    integrated = [s for s in support if s in shell_k]
    for a, b in itertools.combinations(integrated, 2):
        if are_neighbors(a, b):
            raise ValueError("integrated sites must be non-adjacent")
    targets = sorted({j for s in integrated for j in neighbors(s) if j in shell_k1})
    window = sorted(set(support) | {j for s in support for j in neighbors(s)} | set(targets))
    rng = np.random.default_rng(seed)
    pos = {s: a for a, s in enumerate(support)}

    def f_at(conf: dict[Site, float], over: Sequence[Site], shift: dict[Site, float] | None = None):
        """f on the product grid of ``over`` (other spins from conf)."""
        axes = []
        for s in support:
            base = conf[s] + (shift or {}).get(s, 0.0)
            if s in over:
                shape = [1] * len(over)
                shape[list(over).index(s)] = x.size
                axes.append(x.reshape(shape))
            else:
                axes.append(np.full([1] * max(len(over), 1), base))
        arr = np.stack(np.broadcast_arrays(*axes), axis=-1)
        return fn(arr)

    def expect(conf, over, values):
        """Product conditional expectation over ``over`` of gridded values."""
        out = values
        for a in reversed(range(len(over))):
            s = over[a]
            fs = sum(conf[j] for j in neighbors(s))
            w = _one_site_weights(model, x, np.array(fs), 2 * d)
            out = np.tensordot(out, w, axes=([a], [0]))
        return float(out)

    def partial(conf, over, site):
        step = {site: h}
        if site in over:
            raise ValueError("cannot differentiate in an integrated coordinate")
        plus = f_at(conf, over, step)
        minus = f_at(conf, over, {site: -h})
        return (plus - minus) / (2 * h)

    def grad_on_grid(conf, over, site):
        """d f / d x_site on the grid of ``over`` (site may be in over)."""
        if site not in over:
            return partial(conf, over, site)
        vals = f_at(conf, over)
        return np.gradient(vals, h, axis=list(over).index(site), edge_order=1)

    eta = 0.0
    detail = []
    for sample in range(boundary_samples):
        conf = {s: float(v) for s, v in zip(window, rng.uniform(-spread, spread, len(window)))}
        for i in targets:
            def g_at(ci):
                c2 = dict(conf)
                c2[i] = ci
                return expect(c2, integrated, f_at(c2, integrated))
            lhs = ((g_at(conf[i] + h) - g_at(conf[i] - h)) / (2 * h)) ** 2
            local = [j for j in neighbors(i) if j in shell_k and j in pos]
            t1 = expect(conf, local, grad_on_grid(conf, local, i) ** 2) if local else \
                float(partial(conf, [], i) ** 2)
            t2 = sum(expect(conf, local, grad_on_grid(conf, local, j) ** 2) for j in local)
            e = (lhs - 2 * t1) / t2 if t2 > 0 else (np.inf if lhs > 2 * t1 else 0.0)
            eta = max(eta, e)
            detail.append({"sample": sample, "site": list(i), "lhs": lhs, "T1": t1, "T2": t2,
                           "eta": e})
    proof = 2 * c * 2 * d * c_hat * model.M ** 2 * model.J0 ** 2
    return GradientSweepReport(float(max(eta, 0.0)), float(proof), detail)


def _ball(d: int, r: int):
    rng = range(-r, r + 1)
    return [p for p in itertools.product(rng, repeat=d) if sum(map(abs, p)) <= r]


# ---------------------------------------------------------------- entropy decay

@dataclass
class EntropyDecayRecord:
    k: int
    lam: float
    mean: float
    stderr: float


@dataclass
class EntropyDecayReport:
    records: list[EntropyDecayRecord]
    a: float
    ratios: dict[float, float | None]
    level_bound: dict[float, float]
    C1_empirical: dict[float, float]

    def series(self, lam: float) -> np.ndarray:
        return np.array([r.mean for r in self.records if r.lam == lam])


def entropy_functional(h: GriddedFunction, lam: float, sh: Shell, model: SpinModel,
                       boundary: Boundary, box: LatticeRegion,
                       budget: int = DEFAULT_BUDGET) -> GriddedFunction:
    """Ent_{E^{shell}}(e^{lam h}) / E^{shell} e^{lam h} as a gridded function."""
    g = lam * (h.values - float(np.mean(h.values)))
    em1 = GriddedFunction(h.support, h.grid, np.expm1(g), h.boundary)
    gex = GriddedFunction(h.support, h.grid, g * np.exp(g), h.boundary)
    a = conditional_expectation_shell(em1, sh, model, boundary, box, budget)
    b = conditional_expectation_shell(gex, sh, model, boundary, box, budget)
    q = b.values / (1.0 + a.values) - np.log1p(a.values)
    return GriddedFunction(a.support, a.grid, np.maximum(q, 0.0), boundary)


def check_entropy_decay(model: SpinModel, F: GriddedFunction, s: int, k_max: int,
                        lambda_grid: Sequence[float], samples: int, seed: int,
                        box: LatticeRegion, boundary: Boundary, h_fn: HFunction | None = None,
                        c: float = 2.0, chains: int = 200, burn_in: int = 200,
                        budget: int = DEFAULT_BUDGET) -> EntropyDecayReport:
    """Monte Carlo estimate of mu(Ent_{E^{L_{k+1}}}(e^{lam B^{k,s}F}) / E^{L_{k+1}} e^{lam B^{k,s}F})."""
    h_fn = h_fn or HFunction.quadratic()
    check_support_condition(F, s, box)
    x = F.grid
    # a >= sum_i H(d_i F) on the grid
    a = 0.0
    for ax in range(len(F.support)):
        a_ax = h_fn(np.gradient(F.values, x[1] - x[0], axis=ax, edge_order=1))
        a = a + a_ax
    a = float(np.max(a)) if len(F.support) else 0.0
    draws = mcmc_samples(model, box, boundary, samples, seed, chains, burn_in)
    flat = draws.reshape(-1, draws.shape[-1])
    records = []
    h = F
    for k in range(s, k_max + 1):
        h = conditional_expectation_shell(h, shell(k, box), model, boundary, box, budget)
        for lam in lambda_grid:
            if lam == 0:
                records.append(EntropyDecayRecord(k, float(lam), 0.0, 0.0))
                continue
            q = entropy_functional(h, lam, shell(k + 1, box), model, boundary, box, budget)
            est = mean_with_stderr(q.evaluate_on(box, flat).reshape(draws.shape[:2]))
            records.append(EntropyDecayRecord(k, float(lam), est.mean, est.stderr))
    ratios, level, c1 = {}, {}, {}
    for lam in lambda_grid:
        ser = np.array([r.mean for r in records if r.lam == lam])
        ks = np.array([r.k for r in records if r.lam == lam], dtype=float)
        pos = ser > 1e-300
        ratios[float(lam)] = float(np.exp(np.polyfit(ks[pos], np.log(ser[pos]), 1)[0])) \
            if pos.sum() >= 2 else None
        level[float(lam)] = float(a * c * omega(h_fn, lam / 2)) if lam > 0 else 0.0
        c1[float(lam)] = float(ser[0] / level[float(lam)]) if level[float(lam)] > 0 else 0.0
    return EntropyDecayReport(records, a, ratios, level, c1)


def origin_function(model_d: int, fn: Callable[[np.ndarray], np.ndarray],
                    grid: SpinGrid = SWEEP_GRID, boundary: Boundary | None = None) -> GriddedFunction:
    """f(x_0) as a gridded function of the origin spin."""
    return local_function([origin(model_d)], lambda a: fn(a[..., 0]), grid, boundary)
