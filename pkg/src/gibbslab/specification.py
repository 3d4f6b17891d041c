"""Finite-volume local specifications: Hamiltonians, one-site conditional
measures by quadrature, and a checkerboard block-Gibbs sampler."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping

import numpy as np
from scipy import integrate

from .lattice import LatticeRegion, Site, neighbors, parity_classes

TAIL_RATIO = 1e-12


class TailContainmentError(ValueError):
    pass


class MissingSpinError(KeyError):
    pass


@dataclass(frozen=True)
class Phase:
    """Single-site potential phi.

    kinds: gaussian x^2/(2 sigma^2), power |x|^p/p,
    perturbed |x|^p + |x|^(p-1-delta) cos x, double_well x^4/4 - x^2.
    """

    kind: str = "gaussian"
    p: float = 2.0
    delta: float = 0.5
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "power", "perturbed", "double_well"):
            raise ValueError(f"unknown phase kind {self.kind!r}")
        if self.kind == "power" and not self.p > 1:
            raise ValueError("power phase needs p > 1")
        if self.kind == "perturbed" and not (self.p > 2 and 0 < self.delta < 1):
            raise ValueError("perturbed phase needs p > 2 and delta in (0, 1)")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        if self.kind == "gaussian":
            return x * x / (2 * self.sigma ** 2)
        if self.kind == "power":
            return ax ** self.p / self.p
        if self.kind == "perturbed":
            return ax ** self.p + ax ** (self.p - 1 - self.delta) * np.cos(x)
        return x ** 4 / 4 - x * x

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        ax, sg = np.abs(x), np.sign(x)
        if self.kind == "gaussian":
            return x / self.sigma ** 2
        if self.kind == "power":
            return sg * ax ** (self.p - 1)
        if self.kind == "perturbed":
            e = self.p - 1 - self.delta
            return (sg * self.p * ax ** (self.p - 1)
                    + sg * e * ax ** (e - 1) * np.cos(x) - ax ** e * np.sin(x))
        return x ** 3 - 2 * x

    @property
    def default_half_width(self) -> float:
        quartic = self.kind == "double_well" or (self.kind in ("power", "perturbed") and self.p >= 4)
        return 4.0 if quartic else 8.0


@dataclass(frozen=True)
class Potential:
    """Pair interaction V(x, y): bilinear xy or squared_difference (x-y)^2."""

    kind: str = "bilinear"

    def __post_init__(self):
        if self.kind not in ("bilinear", "squared_difference"):
            raise ValueError(f"unknown potential kind {self.kind!r}")

    def __call__(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return x * y if self.kind == "bilinear" else (x - y) ** 2

    def dx(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return y + 0 * x if self.kind == "bilinear" else 2 * (x - y)

    def x_terms(self, x):
        """(A, B) with sum_j V(x, y_j) = m A(x) + (sum_j y_j) B(x) + const(y)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "bilinear":
            return np.zeros_like(x), x
        return x * x, -2 * x

    @property
    def mixed_bound(self) -> float:
        """sup |d^2 V / dx dy|."""
        return 1.0 if self.kind == "bilinear" else 2.0

    @property
    def nonnegative(self) -> bool:
        return self.kind == "squared_difference"


@dataclass(frozen=True)
class SpinGrid:
    half_width: float = 8.0
    n: int = 513

    def __post_init__(self):
        if self.n < 3 or not self.half_width > 0:
            raise ValueError("grid needs n >= 3 and a positive half-width")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n)

    @property
    def h(self) -> float:
        return 2 * self.half_width / (self.n - 1)


@dataclass(frozen=True)
class SpinModel:
    d: int = 1
    phase: Phase = field(default_factory=Phase)
    potential: Potential = field(default_factory=Potential)
    J: float = 0.0
    J0: float | None = None
    grid: SpinGrid | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.J0 is None:
            object.__setattr__(self, "J0", abs(self.J))
        if abs(self.J) > self.J0 + 1e-15:
            raise ValueError(f"|J|={abs(self.J)} exceeds J0={self.J0}")
        if self.grid is None:
            object.__setattr__(self, "grid", SpinGrid(self.phase.default_half_width, 513))

    @property
    def M(self) -> float:
        return self.potential.mixed_bound

    def require_perturbative(self) -> None:
        if self.J < 0 or not self.potential.nonnegative:
            raise ValueError("this check needs J >= 0 and V >= 0")

    def with_(self, **changes) -> "SpinModel":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class Boundary:
    """Spins outside the integrated region: a constant fill plus overrides."""

    fill: float = 0.0
    overrides: Mapping[Site, float] = field(default_factory=dict)

    def __call__(self, site: Site) -> float:
        return float(self.overrides.get(tuple(site), self.fill))


def hamiltonian(model: SpinModel, region: LatticeRegion, interior: Mapping[Site, float],
                boundary: Boundary) -> float:
    """Sum of phi over the region plus J V(x_i, z_j) over every i in the
    region and every neighbour j, interior pairs therefore counted twice."""
    def z(j):
        if j in region:
            if j not in interior:
                raise MissingSpinError(f"no spin value for site {j}")
            return interior[j]
        return boundary(j)

    total = 0.0
    for i in region:
        if i not in interior:
            raise MissingSpinError(f"no spin value for site {i}")
        xi = interior[i]
        total += float(model.phase(xi))
        total += sum(model.J * float(model.potential(xi, z(j))) for j in neighbors(i))
    return total


def _normalise(log_w: np.ndarray, h: float):
    """Row-wise normalisation of log-weights on a uniform grid (trapezoid)."""
    top = log_w.max(axis=-1, keepdims=True)
    w = np.exp(log_w - top)
    mass = h * (w.sum(axis=-1, keepdims=True) - 0.5 * (w[..., :1] + w[..., -1:]))
    return w / mass, np.squeeze(top + np.log(mass), -1)


def _check_tails(density: np.ndarray, what: str) -> None:
    ends = np.maximum(density[..., 0], density[..., -1])
    if np.any(ends >= TAIL_RATIO * density.max(axis=-1)):
        raise TailContainmentError(
            f"{what}: density at the grid edge is not below {TAIL_RATIO:g} of its maximum; "
            f"increase the grid half-width")


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


@dataclass(frozen=True, eq=False)
class OneSiteMeasure:
    site: Site
    grid: np.ndarray
    density: np.ndarray
    log_z: float
    log_density: np.ndarray | None = None

    def __post_init__(self):
        if self.log_density is None:
            with np.errstate(divide="ignore"):
                object.__setattr__(self, "log_density", np.log(self.density))

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.grid.size, self.h) * self.density

    @property
    def cdf(self) -> np.ndarray:
        c = integrate.cumulative_trapezoid(self.density, dx=self.h, initial=0.0)
        return c / c[-1]

    def expect(self, g) -> float:
        vals = g(self.grid) if callable(g) else np.asarray(g, dtype=float)
        return float(np.dot(self.weights, vals))


def conditional_log_weights(model: SpinModel, x: np.ndarray, nbr_values: np.ndarray) -> np.ndarray:
    """-phi(x) - J sum_j V(x, w_j); nbr_values has shape (..., m)."""
    pot = model.potential(x, np.asarray(nbr_values, dtype=float)[..., None])
    return -model.phase(x) - model.J * pot.sum(axis=-2)


def one_site_measure(model: SpinModel, i: Site, boundary: Boundary,
                     grid: SpinGrid | None = None) -> OneSiteMeasure:
    g = grid or model.grid
    x = g.points
    w = np.array([boundary(j) for j in neighbors(tuple(i))])
    logw = conditional_log_weights(model, x, w)
    dens, log_z = _normalise(logw, g.h)
    _check_tails(dens, f"one-site measure at {tuple(i)}")
    return OneSiteMeasure(tuple(i), x, dens, float(log_z), logw - log_z)


def free_measure(model: SpinModel, grid: SpinGrid | None = None) -> OneSiteMeasure:
    """The boundary-free measure proportional to exp(-phi)."""
    g = grid or model.grid
    x = g.points
    logw = -model.phase(x)
    dens, log_z = _normalise(logw, g.h)
    _check_tails(dens, "free one-site measure")
    return OneSiteMeasure(tuple([0] * model.d), x, dens, float(log_z), logw - log_z)


def measure_from_log_weights(x: np.ndarray, log_w: np.ndarray, site: Site = (0,)) -> OneSiteMeasure:
    """Normalised measure on a uniform grid from unnormalised log-weights."""
    x = np.asarray(x, dtype=float)
    dens, log_z = _normalise(np.asarray(log_w, dtype=float), x[1] - x[0])
    _check_tails(dens, "one-site measure")
    return OneSiteMeasure(tuple(site), x, dens, float(log_z), log_w - log_z)


def one_site_expect(m: OneSiteMeasure, g) -> float:
    return m.expect(g)


# ---------------------------------------------------------------- sampling

@dataclass(frozen=True, eq=False)
class BoxTopology:
    """Index tables for a box: each site's neighbours are either box indices
    or slots in a trailing vector of fixed boundary spins."""

    region: LatticeRegion
    nbr_index: np.ndarray          # (sites, 2d) into concat(config, outside)
    outside_values: np.ndarray
    classes: tuple[np.ndarray, np.ndarray]

    @classmethod
    def build(cls, region: LatticeRegion, boundary: Boundary) -> "BoxTopology":
        pos = {s: k for k, s in enumerate(region)}
        outside: dict[Site, int] = {}
        table = []
        for s in region:
            row = []
            for j in neighbors(s):
                if j in pos:
                    row.append(pos[j])
                else:
                    row.append(len(region) + outside.setdefault(j, len(outside)))
            table.append(row)
        vals = np.array([boundary(j) for j in outside], dtype=float)
        even, odd = parity_classes(region)
        return cls(region, np.array(table, dtype=np.intp), vals,
                   (np.array([pos[s] for s in even], dtype=np.intp),
                    np.array([pos[s] for s in odd], dtype=np.intp)))


_BLOCK = 32


def _inverse_cdf(density: np.ndarray, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Invert the trapezoid CDF of each row of ``density`` at ``u``.

    Cells are treated as uniform, so the draw is linear inside a cell.
    The search is two-level (blocks of cells, then cells) to avoid a full
    cumulative sum per row.
    """
    n = x.size
    rows = density.reshape(-1, n)
    r = rows.shape[0]
    cells = rows[:, 1:] + rows[:, :-1]
    nb = -(-(n - 1) // _BLOCK)
    if nb * _BLOCK != n - 1:
        cells = np.pad(cells, ((0, 0), (0, nb * _BLOCK - (n - 1))))
    blocks = cells.reshape(r, nb, _BLOCK)
    cum_blocks = np.cumsum(blocks.sum(axis=-1), axis=-1)
    target = u.reshape(-1) * cum_blocks[:, -1]
    bi = np.minimum((cum_blocks < target[:, None]).sum(axis=-1), nb - 1)
    ridx = np.arange(r)
    before = np.where(bi > 0, cum_blocks[ridx, np.maximum(bi - 1, 0)], 0.0)
    inner = np.cumsum(blocks[ridx, bi], axis=-1) + before[:, None]
    ci = np.minimum((inner < target[:, None]).sum(axis=-1), _BLOCK - 1)
    hi = inner[ridx, ci]
    lo = np.where(ci > 0, inner[ridx, np.maximum(ci - 1, 0)], before)
    k = np.minimum(bi * _BLOCK + ci, n - 2)
    width = hi - lo
    frac = np.where(width > 0, (target - lo) / np.where(width > 0, width, 1.0), 0.5)
    return (x[k] + (x[1] - x[0]) * np.clip(frac, 0.0, 1.0)).reshape(u.shape)


class BlockGibbsSampler:
    """Alternating-parity block Gibbs on a box with fixed outside spins.

    Runs ``chains`` independent chains in lock-step; all randomness comes
    from one numpy Generator seeded by ``seed``.
    """

    def __init__(self, model: SpinModel, region: LatticeRegion, boundary: Boundary,
                 seed: int, chains: int = 1, init: np.ndarray | None = None):
        self.model = model
        self.topo = BoxTopology.build(region, boundary)
        self.rng = np.random.default_rng(seed)
        self.x = model.grid.points
        n_sites = len(region)
        if init is None:
            self.state = np.full((chains, n_sites), boundary.fill, dtype=float)
        else:
            self.state = np.array(init, dtype=float).reshape(chains, n_sites)
        self._tail_checked = False
        quad, self._lin = model.potential.x_terms(self.x)
        self._base = -model.phase(self.x) - model.J * 2 * model.d * quad

    def _half_sweep(self, idx: np.ndarray) -> None:
        if idx.size == 0:
            return
        chains = self.state.shape[0]
        ext = np.concatenate(
            [self.state, np.broadcast_to(self.topo.outside_values, (chains, self.topo.outside_values.size))],
            axis=1)
        field_sum = ext[:, self.topo.nbr_index[idx]].sum(axis=-1)     # (chains, |idx|)
        logw = (self.model.J * field_sum)[..., None] * self._lin
        np.subtract(self._base, logw, out=logw)
        logw -= logw.max(axis=-1, keepdims=True)
        dens = np.exp(logw, out=logw)
        if not self._tail_checked:
            _check_tails(dens, "block Gibbs conditional")
        u = self.rng.random((chains, idx.size))
        self.state[:, idx] = _inverse_cdf(dens, self.x, u)

    def sweep(self) -> None:
        for idx in self.topo.classes:
            self._half_sweep(idx)
        self._tail_checked = True

    def run(self, sweeps: int, burn_in: int = 0, thin: int = 1) -> Iterator[np.ndarray]:
        if sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        for _ in range(burn_in):
            self.sweep()
        for _ in range(sweeps):
            for _ in range(thin):
                self.sweep()
            yield self.state.copy()


def sample_block_gibbs(model: SpinModel, region: LatticeRegion, boundary: Boundary,
                       sweeps: int, seed: int, burn_in: int = 100, chains: int = 1,
                       init: np.ndarray | None = None) -> np.ndarray:
    """Configurations of shape (sweeps, chains, sites) in region order."""
    sampler = BlockGibbsSampler(model, region, boundary, seed, chains, init)
    return np.stack(list(sampler.run(sweeps, burn_in)))


@dataclass(frozen=True)
class MuEstimate:
    mean: float
    stderr: float
    samples: int


def evaluate_on_configs(f, region: LatticeRegion, configs: np.ndarray) -> np.ndarray:
    """f may be a callable on (N, sites) arrays or expose ``evaluate_on``."""
    if hasattr(f, "evaluate_on"):
        return np.asarray(f.evaluate_on(region, configs), dtype=float)
    out = f(configs)
    return np.broadcast_to(np.asarray(out, dtype=float), configs.shape[:1]).copy()


def mcmc_samples(model: SpinModel, region: LatticeRegion, boundary: Boundary, samples: int,
                 seed: int, chains: int = 200, burn_in: int = 200) -> np.ndarray:
    """Roughly ``samples`` configurations as an array (sweeps, chains, sites)."""
    chains = max(1, min(chains, samples))
    sweeps = max(1, -(-samples // chains))
    return sample_block_gibbs(model, region, boundary, sweeps, seed, burn_in, chains)


def estimate_mu(model: SpinModel, region: LatticeRegion, boundary: Boundary, f, samples: int,
                seed: int, chains: int = 200, burn_in: int = 200) -> MuEstimate:
    """MCMC average; stderr from the spread of per-chain means."""
    draws = mcmc_samples(model, region, boundary, samples, seed, chains, burn_in)
    return mean_with_stderr(evaluate_on_configs(f, region, draws.reshape(-1, draws.shape[-1]))
                            .reshape(draws.shape[:2]))


def mean_with_stderr(values: np.ndarray) -> MuEstimate:
    """values has shape (sweeps, chains); chains act as independent batches."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    batch = values.mean(axis=0)
    if batch.size < 2:
        # a single chain: batch means over 20 consecutive blocks
        blocks = np.array_split(values[:, 0], min(20, values.shape[0]))
        batch = np.array([b.mean() for b in blocks])
    spread = batch.std(ddof=1) if batch.size > 1 else 0.0
    return MuEstimate(float(values.mean()), float(spread / np.sqrt(batch.size)), values.size)


# ------------------------------------------------------- exact Gaussian case

@dataclass(frozen=True)
class GaussianLaw:
    mean: np.ndarray
    cov: np.ndarray
    precision: np.ndarray

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.multivariate_normal(self.mean, self.cov, size=size, method="cholesky")


def gaussian_law(model: SpinModel, region: LatticeRegion, boundary: Boundary) -> GaussianLaw:
    """Exact finite-volume law for a Gaussian phase.

    The precision is assembled so that its one-site conditionals coincide
    with the sampler's (J V per neighbour), which counts each edge once.
    """
    if model.phase.kind != "gaussian":
        raise ValueError("exact solve needs a gaussian phase")
    pos = {s: k for k, s in enumerate(region)}
    n = len(region)
    q = np.eye(n) / model.phase.sigma ** 2
    b = np.zeros(n)
    J = model.J
    bil = model.potential.kind == "bilinear"
    for s, k in pos.items():
        for j in neighbors(s):
            if not bil:
                q[k, k] += 2 * J
            if j in pos:
                q[k, pos[j]] += J if bil else -2 * J
            else:
                b[k] += -J * boundary(j) if bil else 2 * J * boundary(j)
    if np.min(np.linalg.eigvalsh(q)) <= 0:
        raise ValueError("precision matrix is not positive definite")
    cov = np.linalg.inv(q)
    return GaussianLaw(cov @ b, cov, q)


def model_record(model: SpinModel) -> dict[str, Any]:
    return {"d": model.d,
            "phase": {"kind": model.phase.kind, "p": model.phase.p,
                      "delta": model.phase.delta, "sigma": model.phase.sigma},
            "potential": {"kind": model.potential.kind},
            "J": model.J, "J0": model.J0,
            "grid": {"Lx": model.grid.half_width, "n": model.grid.n}}

