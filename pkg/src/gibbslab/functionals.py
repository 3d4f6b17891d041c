"""Entropy, Sobolev-type ratios, probe-based constant estimates, spectral
gaps, and the perturbation quantities U and R-hat for one-site measures."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import linalg, special

from .lattice import LatticeRegion, Site, neighbors
from .orlicz import HFunction
from .specification import (Boundary, OneSiteMeasure, SpinGrid, SpinModel, TailContainmentError,
                            mcmc_samples, mean_with_stderr, one_site_measure, trapezoid_weights)

LOWER_BOUND_LABEL = "lower bound (probe-limited)"
PROBE_TAIL_RATIO = 1e-8

Generator = tuple[str, Callable[[np.ndarray], np.ndarray]]


def _tanh(beta: float):
    return lambda x: np.tanh(beta * x)


DEFAULT_GENERATORS: tuple[Generator, ...] = (
    ("x", lambda x: x),
    ("x2", lambda x: x * x),
    ("tanh0.5", _tanh(0.5)),
    ("tanh1", _tanh(1.0)),
    ("tanh2", _tanh(2.0)),
)


@dataclass(frozen=True)
class TestFunctionFamily:
    """Tilted probes exp(theta g / 2) over generators g and a theta grid."""

    __test__ = False

    generators: tuple[Generator, ...] = DEFAULT_GENERATORS
    thetas: tuple[float, ...] = tuple(np.linspace(-3.0, 3.0, 33))

    def tilts(self, x: np.ndarray) -> Iterator[tuple[str, np.ndarray]]:
        for name, g in self.generators:
            gx = g(x)
            for th in self.thetas:
                if th == 0:
                    continue
                yield f"exp({th:+.4f}*{name}/2)", np.exp(0.5 * th * gx)

    def raw(self, x: np.ndarray) -> Iterator[tuple[str, np.ndarray]]:
        for name, g in self.generators:
            yield name, g(x)

    def subset(self, thetas: Sequence[float]) -> "TestFunctionFamily":
        return TestFunctionFamily(self.generators, tuple(thetas))


# ------------------------------------------------------------- entropy

def _rho_log_rho(d: np.ndarray) -> np.ndarray:
    """(1+d) log(1+d) - d, accurate for tiny d."""
    small = np.abs(d) < 1e-4
    series = d * d * (0.5 - d / 6.0 + d * d / 12.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = (1.0 + d) * np.log1p(d) - d
    return np.where(small, series, direct)


def entropy_weighted(weights: np.ndarray, f: np.ndarray) -> float:
    """mu(f log(f / mu f)) for a discrete measure with the given weights."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("entropy needs a strictly positive function")
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    mean = float(np.sum(weights * f) / total)
    d = f / mean - 1.0
    return float(mean * np.sum(weights * _rho_log_rho(d)) / total)


def entropy(m, f) -> float:
    """Entropy of f > 0 under a one-site measure, or under the empirical
    measure of a sample set (then ``f`` holds per-sample values)."""
    if isinstance(m, OneSiteMeasure):
        vals = f(m.grid) if callable(f) else f
        return entropy_weighted(m.weights, vals)
    vals = np.asarray(f(np.asarray(m)) if callable(f) else f, dtype=float).ravel()
    return entropy_weighted(np.ones_like(vals), vals)


def grid_gradient(values: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Central differences inside, one-sided at the two ends."""
    return np.gradient(values, h, axis=axis, edge_order=1)


# ------------------------------------------------------------- ratios

@dataclass(frozen=True)
class ProbeInputs:
    """A probe on a (possibly multi-dimensional) tensor grid."""

    weights: np.ndarray
    f: np.ndarray
    grads: tuple[np.ndarray, ...]


def _tail_contained(weights_density: np.ndarray, f: np.ndarray) -> bool:
    mass = weights_density * f * f
    if not np.all(np.isfinite(mass)):
        return False
    top = mass.max()
    edge = max(float(np.abs(np.take(mass, [0, -1], axis=a)).max()) for a in range(mass.ndim))
    return edge <= PROBE_TAIL_RATIO * top


def ratio(kind: str, p: ProbeInputs, h: HFunction | None = None) -> float | None:
    """Sobolev-type ratio for one probe; None if the probe is uninformative."""
    w, f = p.weights, p.f
    if kind == "SG2":
        mean = np.sum(w * f)
        num = float(np.sum(w * (f - mean) ** 2))
        den = float(sum(np.sum(w * g * g) for g in p.grads))
    else:
        if np.any(f <= 0):
            return None
        num = entropy_weighted(w, f * f)
        if kind == "LS2":
            den = float(sum(np.sum(w * g * g) for g in p.grads))
        else:
            if h is None:
                raise ValueError("MLS ratio needs an H function")
            den = float(sum(np.sum(w * h(g / f) * f * f) for g in p.grads))
    scale = float(np.sum(w * f * f))
    if not den > 1e-14 * max(scale, 1e-300):
        return None
    return num / den


def _one_site_probe(m: OneSiteMeasure, fx: np.ndarray) -> ProbeInputs | None:
    if not _tail_contained(m.density, fx):
        return None
    return ProbeInputs(m.weights, fx, (grid_gradient(fx, m.h),))


def mls_ratio(m: OneSiteMeasure, h: HFunction, f) -> float | None:
    fx = f(m.grid) if callable(f) else np.asarray(f, dtype=float)
    if np.any(fx <= 0):
        raise ValueError("probe must be strictly positive")
    return ratio("MLS", ProbeInputs(m.weights, fx, (grid_gradient(fx, m.h),)), h)


def ls_ratio(m: OneSiteMeasure, f) -> float | None:
    fx = f(m.grid) if callable(f) else np.asarray(f, dtype=float)
    return ratio("LS2", ProbeInputs(m.weights, fx, (grid_gradient(fx, m.h),)))


def sg_ratio(m: OneSiteMeasure, f) -> float | None:
    fx = f(m.grid) if callable(f) else np.asarray(f, dtype=float)
    return ratio("SG2", ProbeInputs(m.weights, fx, (grid_gradient(fx, m.h),)))


def _probes(x: np.ndarray, kind: str, family: TestFunctionFamily) -> list[tuple[str, np.ndarray]]:
    probes = list(family.tilts(x))
    if kind == "SG2":
        probes += list(family.raw(x))
    return probes


def probe_sup(m: OneSiteMeasure, kind: str, family: TestFunctionFamily,
              h: HFunction | None = None) -> tuple[float, str]:
    best, best_id = -np.inf, ""
    for pid, fx in _probes(m.grid, kind, family):
        p = _one_site_probe(m, fx)
        if p is None:
            continue
        r = ratio(kind, p, h)
        if r is not None and r > best:
            best, best_id = r, pid
    return float(best), best_id


@dataclass
class ConstantEstimate:
    kind: str
    lower_bound: float
    argmax: dict
    sweep: dict[float, float]
    sweep_probe: dict[float, str] = field(default_factory=dict)
    label: str = LOWER_BOUND_LABEL

    @property
    def uniform_sup(self) -> float:
        return max(self.sweep.values())

    def rows(self) -> list[tuple[float, float, str]]:
        return [(w, self.sweep[w], self.sweep_probe.get(w, "")) for w in sorted(self.sweep)]


def estimate_constant(model: SpinModel, site: Site, boundary_grid: Sequence[float], kind: str,
                      h: HFunction | None = None, family: TestFunctionFamily | None = None,
                      grid: SpinGrid | None = None) -> ConstantEstimate:
    """Probe-family lower bound of an SG2 / LS2 / MLS constant, per constant
    boundary value and uniformly over the sweep."""
    if kind not in ("SG2", "LS2", "MLS"):
        raise ValueError(f"unknown constant kind {kind!r}")
    family = family or TestFunctionFamily()
    sweep, probes = {}, {}
    for w in boundary_grid:
        m = one_site_measure(model, site, Boundary(float(w)), grid)
        sweep[float(w)], probes[float(w)] = probe_sup(m, kind, family, h)
    top = max(sweep, key=lambda k: (sweep[k], -k))
    return ConstantEstimate(kind, sweep[top], {"omega": top, "probe": probes[top]}, sweep, probes)


def estimate_constant_on(m: OneSiteMeasure, kind: str, h: HFunction | None = None,
                         family: TestFunctionFamily | None = None) -> ConstantEstimate:
    value, pid = probe_sup(m, kind, family or TestFunctionFamily(), h)
    return ConstantEstimate(kind, value, {"omega": None, "probe": pid}, {0.0: value}, {0.0: pid})


# ------------------------------------------------------------- spectral gap

def _gap(log_density: np.ndarray, h: float) -> float:
    # symmetrised generator: conductances sqrt(rho_i rho_j)/h, masses rho_i h
    half = 0.5 * np.diff(log_density)
    up = np.exp(half)        # sqrt(rho_{i+1}/rho_i)
    down = np.exp(-half)     # sqrt(rho_i/rho_{i+1})
    diag = np.zeros(log_density.size)
    diag[:-1] += up
    diag[1:] += down
    off = -np.ones(log_density.size - 1)
    vals = linalg.eigh_tridiagonal(diag / h ** 2, off / h ** 2, select="i", select_range=(0, 1),
                                   eigvals_only=True)
    return float(vals[1])


def spectral_gap_eigen(m: OneSiteMeasure, check: bool = True) -> float:
    """Smallest nonzero eigenvalue of the discretised one-site generator."""
    logd = m.log_density
    if not np.all(np.isfinite(logd)):
        raise ValueError("density must be strictly positive on the grid")
    gap = _gap(logd, m.h)
    if check and m.grid.size >= 9:
        coarse = _gap(logd[::2], 2 * m.h)
        if abs(coarse - gap) > 0.01 * gap:
            warnings.warn(f"spectral gap not converged: {gap:.6g} (n) vs {coarse:.6g} (n/2)",
                          RuntimeWarning, stacklevel=2)
    return gap


@dataclass(frozen=True)
class ImplicationReport:
    c0: float
    c: float
    margin: float
    slack: float

    @property
    def ok(self) -> bool:
        return self.margin >= -self.slack


def check_mls_implies_sg(est_mls: ConstantEstimate | float, est_sg: ConstantEstimate | float,
                         slack: float = 0.02) -> ImplicationReport:
    """c0 <= c/2 up to ``slack``; margin = c/2 - c0."""
    c = est_mls.lower_bound if isinstance(est_mls, ConstantEstimate) else float(est_mls)
    c0 = est_sg.lower_bound if isinstance(est_sg, ConstantEstimate) else float(est_sg)
    return ImplicationReport(c0, c, c / 2 - c0, slack)


# ------------------------------------------------------------- tensorisation

@dataclass(frozen=True)
class TensorisationReport:
    factor_sups: tuple[float, float]
    embedded_sup: float
    product_sup: float
    cross_sup: float

    @property
    def max_factor(self) -> float:
        return max(self.factor_sups)


def tensorisation_check(m1: OneSiteMeasure, m2: OneSiteMeasure, kind: str,
                        h: HFunction | None = None, family: TestFunctionFamily | None = None,
                        cross_thetas: Sequence[float] = tuple(np.linspace(-3, 3, 7))
                        ) -> TensorisationReport:
    """Probe sups on each factor and on the product measure (evaluated on
    the full two-dimensional grid)."""
    family = family or TestFunctionFamily()
    s1, _ = probe_sup(m1, kind, family, h)
    s2, _ = probe_sup(m2, kind, family, h)
    w = np.outer(m1.weights, m2.weights)
    dens = np.outer(m1.density, m2.density)

    def run(f2d) -> float | None:
        if not _tail_contained(dens, f2d):
            return None
        g1 = grid_gradient(f2d, m1.h, axis=0)
        g2 = grid_gradient(f2d, m2.h, axis=1)
        return ratio(kind, ProbeInputs(w, f2d, (g1, g2)), h)

    ones1, ones2 = np.ones_like(m1.grid), np.ones_like(m2.grid)
    embedded = -np.inf
    for _, fx in _probes(m1.grid, kind, family):
        r = run(np.outer(fx, ones2))
        embedded = max(embedded, r if r is not None else -np.inf)
    for _, fy in _probes(m2.grid, kind, family):
        r = run(np.outer(ones1, fy))
        embedded = max(embedded, r if r is not None else -np.inf)
    sub = family.subset(cross_thetas)
    cross = -np.inf
    for _, fx in sub.tilts(m1.grid):
        for _, fy in sub.tilts(m2.grid):
            r = run(np.outer(fx, fy))
            cross = max(cross, r if r is not None else -np.inf)
    return TensorisationReport((s1, s2), float(embedded), float(max(embedded, cross)), float(cross))


# ------------------------------------------------------------- perturbation

def _neighbour_values(model: SpinModel, site: Site, boundary: Boundary) -> np.ndarray:
    return np.array([boundary(j) for j in neighbors(tuple(site))], dtype=float)


def u_tilde(model: SpinModel, x: np.ndarray, nbr: np.ndarray, c: float) -> np.ndarray:
    """2c sum_j |d_x V(x, w_j)|^2 + (1/J0) sum_j V(x, w_j); nbr is (..., m)."""
    if not model.J0 > 0:
        raise ValueError("U needs J0 > 0")
    nb = np.asarray(nbr, dtype=float)[..., None]
    grad = model.potential.dx(x, nb)
    return (2 * c * grad * grad + model.potential(x, nb) / model.J0).sum(axis=-2)


def _log_moment(m_logw: np.ndarray, expo: np.ndarray, h: float) -> np.ndarray:
    """log of the trapezoid integral of exp(expo) against normalised weights."""
    n = m_logw.shape[-1]
    logt = np.log(trapezoid_weights(n, h))
    a = m_logw + expo + logt
    edge = np.maximum(a[..., 0], a[..., -1])
    if np.any(edge - a.max(axis=-1) > np.log(1e-12)):
        raise TailContainmentError(
            "exponential moment is not tail-contained on the grid; use a smaller epsilon")
    return special.logsumexp(a, axis=-1)


def compute_U(model: SpinModel, site: Site, boundary_value, epsilon: float, c: float,
              c_hat: float, grid: SpinGrid | None = None) -> float:
    """c_hat log E^{i,w} exp(epsilon U~) by quadrature (constant boundary)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    b = boundary_value if isinstance(boundary_value, Boundary) else Boundary(float(boundary_value))
    m = one_site_measure(model, site, b, grid)
    ut = u_tilde(model, m.grid, _neighbour_values(model, site, b), c)
    return float(c_hat * _log_moment(m.log_density, epsilon * ut, m.h))


def find_epsilon(model: SpinModel, site: Site, boundary_values: Sequence[float], c: float,
                 c_hat: float, epsilon: float = 0.05, min_epsilon: float = 1e-8,
                 grid: SpinGrid | None = None) -> float:
    """Halve epsilon until every exponential moment is tail-contained."""
    eps = epsilon
    while eps >= min_epsilon:
        try:
            for w in boundary_values:
                compute_U(model, site, w, eps, c, c_hat, grid)
            return eps
        except TailContainmentError:
            eps /= 2
    raise TailContainmentError(f"no epsilon >= {min_epsilon:g} gives a finite exponential moment")


@dataclass
class PerturbationReport:
    epsilon: float
    U_values: dict[tuple[Site, float], float]
    mu_U2: float
    mu_U2_stderr: float
    K_check: float
    R_hat: float | None = None


def check_h4(model: SpinModel, region: LatticeRegion, boundary: Boundary, epsilon: float,
             c: float, c_hat: float, samples: int, seed: int, site: Site | None = None,
             omega_grid: Sequence[float] = (-2.0, -1.0, 0.0, 1.0, 2.0),
             chains: int = 100, burn_in: int = 200) -> PerturbationReport:
    """Monte Carlo estimate of mu(U^2) at the running configuration."""
    model.require_perturbative()
    site = tuple(site) if site is not None else tuple([0] * model.d)
    draws = mcmc_samples(model, region, boundary, samples, seed, chains, burn_in)
    pos = {s: k for k, s in enumerate(region)}
    x = model.grid.points
    nbr_sites = list(neighbors(site))
    flat = draws.reshape(-1, draws.shape[-1])
    nbr = np.stack([flat[:, pos[j]] if j in pos else np.full(flat.shape[0], boundary(j))
                    for j in nbr_sites], axis=-1)
    u_sq = np.empty(flat.shape[0])
    quad, lin = model.potential.x_terms(x)
    base = -model.phase(x) - model.J * len(nbr_sites) * quad
    for lo in range(0, flat.shape[0], 2000):
        nb = nbr[lo:lo + 2000]
        logw = base - model.J * nb.sum(axis=-1)[:, None] * lin
        logw = logw - _log_moment(logw, np.zeros_like(logw), x[1] - x[0])[:, None]
        ut = u_tilde(model, x, nb, c)
        u = c_hat * _log_moment(logw, epsilon * ut, x[1] - x[0])
        u_sq[lo:lo + 2000] = u * u
    est = mean_with_stderr(u_sq.reshape(draws.shape[:2]))
    u_values = {(site, float(w)): compute_U(model, site, w, epsilon, c, c_hat) for w in omega_grid}
    return PerturbationReport(epsilon, u_values, est.mean, est.stderr, est.mean + 3 * est.stderr)


@dataclass
class PerturbedLSReport:
    R_hat: float
    slack: dict[float, float]
    U: dict[float, float]
    argmax: dict


def perturbed_ls_check(model: SpinModel, site: Site, boundary_grid: Sequence[float],
                       epsilon: float, c: float, c_hat: float,
                       family: TestFunctionFamily | None = None,
                       grid: SpinGrid | None = None) -> PerturbedLSReport:
    """Smallest R-hat with Ent(f^2) <= (R-hat + J0 U) E|f'|^2 over all probes.

    With J0 = 0 there is no perturbation and the J0 U term is dropped.
    ``slack`` maps each boundary value to the smallest relative margin.
    """
    family = family or TestFunctionFamily()
    per_omega = {}
    u_vals = {}
    best, arg = 0.0, {}
    for w in boundary_grid:
        w = float(w)
        m = one_site_measure(model, site, Boundary(w), grid)
        u = compute_U(model, site, w, epsilon, c, c_hat, grid) if model.J0 > 0 else 0.0
        u_vals[w] = u
        pairs = []
        for pid, fx in family.tilts(m.grid):
            p = _one_site_probe(m, fx)
            if p is None:
                continue
            ent = entropy_weighted(p.weights, fx * fx)
            dir_ = float(np.sum(p.weights * p.grads[0] ** 2))
            if dir_ <= 0:
                continue
            pairs.append((pid, ent, dir_))
            need = ent / dir_ - model.J0 * u
            if need > best:
                best, arg = need, {"omega": w, "probe": pid}
        per_omega[w] = pairs
    slack = {w: min(((best + model.J0 * u_vals[w]) * d - e) / d for _, e, d in pairs)
             for w, pairs in per_omega.items() if pairs}
    return PerturbedLSReport(best, slack, u_vals, arg)
