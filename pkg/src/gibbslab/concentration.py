"""Empirical tails with exact binomial bands, concentration envelopes, and
Monte Carlo enlargement probabilities for Talagrand-type sets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, stats

from .lattice import LatticeRegion
from .orlicz import HFunction, check_h2, growth_sup, omega, omega_star
from .specification import Boundary, SpinModel, evaluate_on_configs, mcmc_samples

LN2 = math.log(2.0)
K_CONDITION_MAX = 64


def clopper_pearson(k: np.ndarray, n: int, level: float = 0.99, one_sided: bool = False):
    """Exact binomial interval(s) for k successes out of n."""
    k = np.asarray(k, dtype=float)
    alpha = 1.0 - level
    tail = alpha if one_sided else alpha / 2
    lo = np.where(k > 0, stats.beta.ppf(tail, k, n - k + 1), 0.0)
    hi = np.where(k < n, stats.beta.ppf(1 - tail, k + 1, n - k), 1.0)
    return lo, hi


@dataclass
class Envelope:
    """exp(-(a c C_ddot / 2) omega*_H(2 r / (a c))) and its validity region."""

    a: float
    c: float
    C1: float
    C2: float
    t_star: float
    H: HFunction = field(default_factory=HFunction.quadratic)

    @classmethod
    def from_h2(cls, a: float, c: float, C1: float, C2: float, H: HFunction) -> "Envelope":
        rep = check_h2(H)
        if not rep.ok:
            raise ValueError("H fails the growth hypothesis; no admissible t")
        t = rep.t_witness
        return cls(a, c, C1, C2, t / (t - 1.0), H)

    @property
    def C_ddot(self) -> float:
        return 1.0 / (2 ** (2 * self.t_star) * self.C1 ** (self.t_star - 1))

    @property
    def k_condition(self) -> bool:
        log_base = -(self.t_star * LN2 + (self.t_star - 1) * math.log(self.C2))
        return all(k * log_base >= math.log(k + 1) for k in range(K_CONDITION_MAX + 1))

    def exponent(self, r) -> np.ndarray:
        ac = self.a * self.c
        return ac * self.C_ddot * np.asarray(omega_star(self.H, 2 * np.asarray(r, dtype=float) / ac))

    @property
    def r_min(self) -> float:
        """Smallest r with a c C_ddot omega*(2r/(ac)) >= 8 ln 2."""
        target = 8 * LN2
        hi = 1.0
        while float(self.exponent(hi)) < target:
            hi *= 2
            if hi > 1e12:
                return math.inf
        return float(optimize.brentq(lambda r: float(self.exponent(r)) - target, 0.0, hi,
                                     xtol=1e-12, rtol=1e-12))

    @property
    def K_hat(self) -> float:
        w2 = omega(self.H, 2.0)
        return w2 * self.C_ddot * float(omega_star(self.H, 1.0 / (w2 * self.c))) / 2

    @property
    def R_theorem(self) -> float:
        w2 = omega(self.H, 2.0)
        return 16 * LN2 / (w2 * self.C_ddot * float(omega_star(self.H, 2.0 / (w2 * self.c))))

    def summary(self) -> dict:
        return {"a": self.a, "c": self.c, "C1": self.C1, "C2": self.C2, "t_star": self.t_star,
                "C_ddot": self.C_ddot, "r_min": self.r_min, "k_condition": self.k_condition,
                "K_hat": self.K_hat, "R": self.R_theorem}


@dataclass(frozen=True)
class EnvelopeValue:
    value: float
    valid: bool


def envelope_value(env: Envelope, r: float) -> EnvelopeValue:
    e = float(env.exponent(r))
    valid = env.k_condition and e >= 8 * LN2 * (1 - 1e-12)
    return EnvelopeValue(math.exp(-e / 2), valid)


def herbst_tail(H: HFunction, K_f: float, r) -> np.ndarray:
    """exp(-K_f omega*_H(2 r / K_f))."""
    if not K_f > 0:
        raise ValueError("K_f must be positive")
    r = np.asarray(r, dtype=float)
    return np.exp(-K_f * np.asarray(omega_star(H, 2 * r / K_f)))


def bz_tail(q: float, C: float, r, p: float | None = None) -> np.ndarray:
    """2 exp(-(q-1)^p r^p / C^(p-1)) with p the conjugate of q."""
    p = q / (q - 1) if p is None else p
    r = np.asarray(r, dtype=float)
    return 2 * np.exp(-((q - 1) ** p) / C ** (p - 1) * r ** p)


@dataclass
class TailReport:
    r: np.ndarray
    exceed: np.ndarray
    upper: np.ndarray
    lower_two_sided: np.ndarray
    upper_two_sided: np.ndarray
    n: int
    mu_hat: float
    envelope: np.ndarray | None = None
    valid: np.ndarray | None = None
    verdict: list[str] | None = None

    def rows(self) -> list[tuple]:
        env = self.envelope if self.envelope is not None else [float("nan")] * len(self.r)
        valid = self.valid if self.valid is not None else [False] * len(self.r)
        verdict = self.verdict or [""] * len(self.r)
        return [(float(r), float(e), float(u), float(v), bool(ok), vd)
                for r, e, u, v, ok, vd in zip(self.r, self.exceed, self.upper, env, valid, verdict)]


def tail_from_values(values: np.ndarray, r_grid: Sequence[float], level: float = 0.99) -> TailReport:
    """First half estimates mu F, second half gives the exceedances."""
    values = np.asarray(values, dtype=float).ravel()
    half = values.size // 2
    mu_hat = float(values[:half].mean())
    test = values[half:] - mu_hat
    r = np.asarray(r_grid, dtype=float)
    counts = np.array([(test >= x).sum() for x in r])
    n = test.size
    _, up1 = clopper_pearson(counts, n, level, one_sided=True)
    lo2, up2 = clopper_pearson(counts, n, level)
    return TailReport(r, counts / n, up1, lo2, up2, n, mu_hat)


def empirical_tail(model: SpinModel, box: LatticeRegion, boundary: Boundary, F, r_grid,
                   samples: int, seed: int, chains: int = 200, burn_in: int = 200) -> TailReport:
    if samples < 10_000:
        raise ValueError("empirical tails need at least 10^4 samples")
    draws = mcmc_samples(model, box, boundary, samples, seed, chains, burn_in)
    # sweep-major order: the first half in time estimates mu F
    vals = evaluate_on_configs(F, box, draws.reshape(-1, draws.shape[-1]))
    return tail_from_values(vals, r_grid)


@dataclass
class DominanceVerdict:
    passed: bool
    violations: list[float]
    checked: int
    vacuous: bool

    @property
    def label(self) -> str:
        if self.violations:
            return "FAIL"
        if self.vacuous:
            return "PASS (vacuous)"
        return "NO VALID R" if self.checked == 0 else "PASS"


def dominance_check(tail: TailReport, env: Envelope | Callable[[float], EnvelopeValue]) -> DominanceVerdict:
    """Upper confidence tail <= envelope at every valid r."""
    evaluate = env if callable(env) and not isinstance(env, Envelope) else (lambda r: envelope_value(env, r))
    values, valid, verdict, violations = [], [], [], []
    for r, up in zip(tail.r, tail.upper):
        ev = evaluate(float(r))
        values.append(ev.value)
        valid.append(ev.valid)
        if not ev.valid:
            verdict.append("invalid")
        elif up <= ev.value:
            verdict.append("ok")
        else:
            verdict.append("violation")
            violations.append(float(r))
    tail.envelope, tail.valid, tail.verdict = np.array(values), np.array(valid), verdict
    checked = int(np.sum(valid))
    # an envelope above 1/2 on the whole tested grid carries no information
    vacuous = bool(np.all(np.array(values) > 0.5))
    return DominanceVerdict(not violations and (checked > 0 or vacuous), violations, checked,
                            vacuous)


# ---------------------------------------------------------------- enlargements

def gauge_h_star(H: HFunction) -> Callable[[np.ndarray], np.ndarray]:
    """Legendre conjugate of H (tabulated), as a gauge."""
    from .orlicz import YoungFunction, conjugate, log_grid
    grid = np.concatenate([[0.0], log_grid(1e-6, 1e4, 4096)])
    tab = conjugate(YoungFunction.tabulated(grid, H(grid)))

    def gauge(y):
        return tab(y)

    # growth ratios are only trustworthy well inside the tabulated range
    gauge.t_grid = log_grid(1e-3, 1e3, 2048)
    return gauge


def gauge_power(p: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda y: np.abs(y) ** p


@dataclass
class EnlargementSpec:
    """Base set A = {F <= threshold} (threshold defaults to the median)."""

    F: object
    gauge: Callable[[np.ndarray], np.ndarray]
    r_grid: Sequence[float]
    threshold: float | None = None
    witnesses: int = 20_000


@dataclass
class EnlargementCurve:
    r: np.ndarray
    complement: np.ndarray
    bound: np.ndarray
    mu_A: float
    mu_A_stderr: float
    K_hat: float
    n: int

    @property
    def dominated(self) -> np.ndarray:
        return self.complement <= self.bound

    def rows(self) -> list[tuple]:
        return [(float(r), float(c), float(b), bool(c <= b))
                for r, c, b in zip(self.r, self.complement, self.bound)]


def _draw_sets(model, box, boundary, spec, samples, seed, chains, burn_in):
    draws = mcmc_samples(model, box, boundary, samples + spec.witnesses, seed, chains, burn_in)
    flat = draws.reshape(-1, draws.shape[-1])
    vals = evaluate_on_configs(spec.F, box, flat)
    thr = float(np.median(vals)) if spec.threshold is None else spec.threshold
    # interleave chains: witnesses and test points come from disjoint chains
    n_w_chains = max(1, round(draws.shape[1] * spec.witnesses / (samples + spec.witnesses)))
    chain_id = np.tile(np.arange(draws.shape[1]), draws.shape[0])
    wit_mask = chain_id < n_w_chains
    in_a = vals <= thr
    witnesses = flat[wit_mask & in_a]
    tests, test_in_a = flat[~wit_mask], in_a[~wit_mask]
    if witnesses.shape[0] == 0:
        raise ValueError("witness set for A is empty")
    per_chain = in_a[~wit_mask].reshape(draws.shape[0], -1).mean(axis=0)
    mu_a = float(test_in_a.mean())
    se = float(per_chain.std(ddof=1) / np.sqrt(per_chain.size)) if per_chain.size > 1 else 0.0
    return witnesses, tests, test_in_a, mu_a, se


def gauge_distance(tests: np.ndarray, witnesses: np.ndarray, gauge, chunk: int = 256) -> np.ndarray:
    """min over witnesses of sum_i gauge(x_i - z_i), full scan."""
    out = np.empty(tests.shape[0])
    for lo in range(0, tests.shape[0], chunk):
        x = tests[lo:lo + chunk]
        out[lo:lo + chunk] = gauge(x[:, None, :] - witnesses[None, :, :]).sum(axis=-1).min(axis=1)
    return out


def enlargement_probability(model: SpinModel, box: LatticeRegion, boundary: Boundary,
                            spec: EnlargementSpec, samples: int, seed: int, K_hat: float,
                            chains: int = 200, burn_in: int = 200) -> EnlargementCurve:
    """1 - mu(A + {sum gauge < r}) by witness scan, against exp(-K_hat r)."""
    witnesses, tests, in_a, mu_a, se = _draw_sets(model, box, boundary, spec, samples, seed,
                                                  chains, burn_in)
    if mu_a < 0.5 - 2 * se:
        raise ValueError(f"mu(A)={mu_a:.4f} is below 1/2")
    dist = np.zeros(tests.shape[0])
    outside = ~in_a
    dist[outside] = gauge_distance(tests[outside], witnesses, spec.gauge)
    r = np.asarray(spec.r_grid, dtype=float)
    comp = np.array([np.mean(outside & (dist >= x)) for x in r])
    return EnlargementCurve(r, comp, np.exp(-K_hat * r), mu_a, se, K_hat, tests.shape[0])


def inverse_growth(fn: Callable[[np.ndarray], np.ndarray], y: float) -> float:
    """omega_fn^{-1}(y) for the growth envelope of fn (nondecreasing)."""
    t_grid = getattr(fn, "t_grid", None)
    g = lambda x: float(growth_sup(fn, np.array([x]), t_grid)[0]) - y
    hi = 1.0
    while g(hi) < 0:
        hi *= 2
    lo = 0.0
    return float(optimize.brentq(g, lo, hi, xtol=1e-14, rtol=1e-12))


@dataclass
class TalagrandCurve:
    r: np.ndarray
    probability: np.ndarray
    bound: np.ndarray
    C: float
    n: int

    def rows(self) -> list[tuple]:
        return [(float(r), float(p), float(b), bool(p >= b))
                for r, p, b in zip(self.r, self.probability, self.bound)]


def talagrand_check(model: SpinModel, box: LatticeRegion, boundary: Boundary,
                    spec: EnlargementSpec, phi_star: Callable[[np.ndarray], np.ndarray],
                    samples: int, seed: int, C: float, nearest: int = 32,
                    chains: int = 200, burn_in: int = 200, whole_space: bool = False
                    ) -> TalagrandCurve:
    """Lower bound on mu(A + sqrt(r) B2 + s(r) B_phi*) via a two-block split of
    x - z for the nearest witnesses z, against 1 - exp(-C r)."""
    r_grid = np.asarray(spec.r_grid, dtype=float)
    if whole_space:
        return TalagrandCurve(r_grid, np.ones_like(r_grid), 1 - np.exp(-C * r_grid), C, 0)
    witnesses, tests, in_a, _, _ = _draw_sets(model, box, boundary, spec, samples, seed,
                                              chains, burn_in)
    outside = np.nonzero(~in_a)[0]
    k = min(nearest, witnesses.shape[0])
    cand = np.empty((outside.size, k, tests.shape[1]))
    w2 = (witnesses ** 2).sum(axis=1)
    for lo in range(0, outside.size, 512):
        x = tests[outside[lo:lo + 512]]
        d2 = w2[None, :] - 2 * x @ witnesses.T
        idx = np.argpartition(d2, k - 1, axis=1)[:, :k]
        cand[lo:lo + 512] = x[:, None, :] - witnesses[idx]
    y = np.sort(np.abs(cand), axis=-1)                      # ascending per pair
    small = np.cumsum(y ** 2, axis=-1)
    small = np.concatenate([np.zeros(small.shape[:-1] + (1,)), small], axis=-1)
    prob = []
    for r in r_grid:
        scale = inverse_growth(phi_star, 1.0 / r)
        big = phi_star(y * scale)
        # tail sums: big block is the largest coordinates
        tail = np.concatenate([np.cumsum(big[..., ::-1], axis=-1)[..., ::-1],
                               np.zeros(big.shape[:-1] + (1,))], axis=-1)
        ok = ((small <= r) & (tail <= 1.0)).any(axis=-1).any(axis=-1)
        prob.append((in_a.sum() + ok.sum()) / tests.shape[0])
    return TalagrandCurve(r_grid, np.array(prob), 1 - np.exp(-C * r_grid), C, tests.shape[0])
