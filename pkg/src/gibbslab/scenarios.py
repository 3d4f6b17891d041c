"""Named experiments: each turns a validated config into CSV tables and
per-criterion checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import concentration as conc
from . import functionals as fn
from . import orlicz as oz
from . import sweep as sw
from .config import ExperimentConfig
from .lattice import LatticeRegion, origin
from .specification import (Boundary, Phase, SpinGrid, SpinModel, estimate_mu,
                            free_measure, gaussian_law, one_site_measure)

Row = tuple


@dataclass
class Table:
    header: list[str]
    rows: list[Row]


@dataclass
class Check:
    criterion: int
    name: str
    value: object
    target: str
    passed: bool


@dataclass
class Outcome:
    tables: dict[str, Table] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def table(self, name: str, header: list[str], rows: list[Row]) -> None:
        self.tables[name] = Table(header, rows)

    def check(self, criterion: int, name: str, value, target: str, passed: bool) -> None:
        self.checks.append(Check(criterion, name, value, target, bool(passed)))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


@dataclass(frozen=True)
class Scenario:
    name: str
    criteria: tuple[int, ...]
    description: str
    run: Callable[[ExperimentConfig], Outcome]


@dataclass(frozen=True)
class NormalizedSum:
    """F(x) = sum of the spins in ``sites`` divided by sqrt(|sites|)."""

    sites: LatticeRegion

    def evaluate_on(self, region: LatticeRegion, configs: np.ndarray) -> np.ndarray:
        idx = [region.index(s) for s in self.sites]
        return np.asarray(configs)[:, idx].sum(axis=1) / math.sqrt(len(idx))

    def gradient_level(self, h: oz.HFunction) -> float:
        """sum_i H(d_i F), the same at every configuration."""
        n = len(self.sites)
        return float(n * h(1.0 / math.sqrt(n)))


def _h_function(cfg: ExperimentConfig) -> oz.HFunction:
    return oz.HFunction.from_power(cfg.orlicz.p)


def _sampler_args(cfg: ExperimentConfig) -> dict:
    s = cfg.sampler
    return {"samples": s.samples, "seed": s.seed, "chains": s.chains, "burn_in": s.burn_in}


def _tanh0(a: np.ndarray) -> np.ndarray:
    return np.tanh(a[..., 0])


# ----------------------------------------------------------------- orlicz

def orlicz_suite(cfg: ExperimentConfig) -> Outcome:
    out = Outcome()
    powers = cfg.knob("powers", [1.5, 2.0, 3.0, 4.0])
    pairs = cfg.knob("young_pairs", 10_000)
    grid = np.concatenate([[0.0], oz.log_grid()])
    y = np.geomspace(0.1, 10.0, 400)
    rows, young_rows = [], []
    worst_rel, dc_ok, young_ok = 0.0, True, True
    for p in powers:
        q = p / (p - 1)
        phi = oz.YoungFunction.tabulated(grid, np.abs(grid) ** p / p)
        star = oz.conjugate(phi)
        exact = y ** q / q
        rel = float(np.max(np.abs(star(y) - exact) / exact))
        back = oz.conjugate(star)
        err = np.abs(back(y) - y ** p / p)
        # one grid cell displaces the value by about spacing * phi'
        spacing = y * (grid[-1] / grid[-2] - 1.0)
        allowed = 10 * spacing * np.maximum(y ** (p - 1), 1.0)
        dc = bool(np.all(err <= allowed))
        rows.append((p, q, rel, float(err.max()), dc))
        worst_rel, dc_ok = max(worst_rel, rel), dc_ok and dc
        rep = oz.check_young_lemmas(phi, a=p, sample_count=pairs, seed=cfg.sampler.seed)
        young_rows.append((p, pairs, rep.young_max_violation, rep.duality_premise,
                           rep.duality_max_violation, rep.scaling_max_violation, rep.ok))
        young_ok = young_ok and rep.young_max_violation <= 0
    out.table("conjugate", ["p", "q", "max_rel_err", "double_conj_max_err", "double_conj_ok"], rows)
    out.table("young", ["p", "pairs", "young_violation", "duality_premise", "duality_violation",
                        "scaling_violation", "ok"], young_rows)

    lams = np.geomspace(0.05, 8.0, 32)
    herbst_rows, h2_rows, omega_rows = [], [], []
    herbst_ok = True
    for p in cfg.knob("phi_powers", [2.0, 4.0, 2.5]):
        h = oz.HFunction.from_power(p)
        rep = oz.check_h2(h)
        h2_rows.append((p, rep.ok, rep.t_witness if rep.ok else "", rep.first_violation or ""))
        for lam in lams:
            lhs = oz.herbst_integral(h, float(lam))
            rhs = float(oz.omega(h, lam / 2))
            ok = lhs <= rhs * (1 + 1e-6)
            herbst_ok = herbst_ok and ok
            herbst_rows.append((p, float(lam), lhs, rhs, ok))
        for x in (0.5, 1.0, 2.0, 4.0):
            omega_rows.append((p, x, float(oz.omega(h, x)), float(oz.omega_star(h, x))))
    out.table("herbst", ["phi_power", "lambda", "integral", "omega_half_lambda", "ok"], herbst_rows)
    out.table("h2", ["phi_power", "ok", "t_witness", "first_violation"], h2_rows)
    out.table("omega", ["phi_power", "x", "omega", "omega_star"], omega_rows)

    out.check(1, "conjugate-max-rel-err", worst_rel, "<= 1e-4", worst_rel <= 1e-4)
    out.check(1, "double-conjugate", dc_ok, "within 10 grid cells", dc_ok)
    out.check(1, "young-slack", young_ok, f"nonnegative on {pairs} pairs", young_ok)
    out.check(1, "herbst-bound", herbst_ok, "integral <= omega(lambda/2) on 32 lambdas", herbst_ok)
    return out


# ------------------------------------------------------ one-site constants

def one_site_constants(cfg: ExperimentConfig) -> Outcome:
    out = Outcome()
    model = cfg.spin_model()
    site = origin(model.d)
    omegas = cfg.knob("boundary_values", [-2.0, -1.0, 0.0, 1.0, 2.0])
    ls = fn.estimate_constant(model, site, omegas, "LS2")
    sg = fn.estimate_constant(model, site, omegas, "SG2")
    gaps = {}
    for w in omegas:
        gaps[float(w)] = fn.spectral_gap_eigen(one_site_measure(model, site, Boundary(float(w))))
    rows = [(w, "LS2", v, p) for w, v, p in ls.rows()] + [(w, "SG2", v, p) for w, v, p in sg.rows()]
    out.table("constants", ["omega", "kind", "estimate", "probe_id"], rows)
    out.table("gap", ["omega", "gap", "c0"], [(w, g, 1.0 / g) for w, g in sorted(gaps.items())])

    gap = min(gaps.values())
    c0 = 1.0 / gap
    imp = fn.check_mls_implies_sg(ls, c0)
    out.summary.update(label=fn.LOWER_BOUND_LABEL, ls2=ls.uniform_sup, sg2=sg.uniform_sup,
                       gap=gap, margin=imp.margin)
    if model.J == 0 and model.phase.kind == "gaussian":
        oracle = 1.0 / model.phase.sigma ** 2
        out.check(2, "spectral-gap", gap, f"{oracle} +- 0.002", abs(gap - oracle) <= 0.002)
        lo, hi = 1.90 * model.phase.sigma ** 2, 2.01 * model.phase.sigma ** 2
        out.check(2, "ls2-probe-sup", ls.uniform_sup, f"in [{lo}, {hi}]", lo <= ls.uniform_sup <= hi)
    out.check(2, "c0-le-half-c", imp.margin, ">= -0.02", imp.ok)
    return out


# ------------------------------------------------------------ tensorisation

def _power_factor(p: float, n: int) -> SpinModel:
    phase = Phase("gaussian") if p == 2 else Phase("power", p=p)
    return SpinModel(phase=phase, grid=SpinGrid(phase.default_half_width, n))


def tensorisation(cfg: ExperimentConfig) -> Outcome:
    out = Outcome()
    n = cfg.model.grid.n
    p1, p2 = cfg.knob("powers", [2.0, 4.0])
    m1 = free_measure(_power_factor(p1, n))
    m2 = free_measure(_power_factor(p2, n))
    rows = []
    for kind in ("LS2", "SG2"):
        rep = fn.tensorisation_check(m1, m2, kind)
        lower = rep.embedded_sup >= rep.max_factor - 1e-6
        upper = rep.product_sup <= rep.max_factor * 1.05
        rows.append((kind, rep.factor_sups[0], rep.factor_sups[1], rep.embedded_sup,
                     rep.cross_sup, rep.product_sup, lower, upper))
        out.check(3, f"{kind.lower()}-product-ge-max", rep.product_sup - rep.max_factor,
                  ">= -1e-6", rep.product_sup >= rep.max_factor - 1e-6)
        out.check(3, f"{kind.lower()}-product-le-max-5pct", rep.product_sup / rep.max_factor,
                  "<= 1.05", upper)
    out.table("tensorisation", ["kind", "factor1_sup", "factor2_sup", "embedded_sup", "cross_sup",
                                "product_sup", "lower_ok", "upper_ok"], rows)
    out.summary["label"] = fn.LOWER_BOUND_LABEL
    return out


# ----------------------------------------------------------------- sweeps

def sweep_convergence(cfg: ExperimentConfig) -> Outcome:
    out = Outcome()
    model = cfg.spin_model()
    region = cfg.region()
    d = model.d
    steps = cfg.knob("steps", 12)
    s = cfg.knob("s", 0)
    budget = cfg.knob("budget", 3_000_000)
    omegas = cfg.knob("boundary_values", [2.0, -2.0])
    grid = SpinGrid(model.grid.half_width, model.grid.n)
    mc_model = model.with_(grid=SpinGrid(model.grid.half_width, 513))
    f_sites = [origin(d)]
    trace_rows, limit_rows, limits, stderrs = [], [], {}, {}
    decreasing_all, rate_all = True, True
    for w in omegas:
        b = Boundary(float(w))
        f = sw.local_function(f_sites, lambda a: a[..., 0], grid, b)
        trace = sw.apply_B(f, s + steps - 1, s, model, b, region, budget=budget)
        for st in trace.steps:
            trace_rows.append((w, st.k, st.support_size, st.value, st.increment))
        est = estimate_mu(mc_model, region, b, _origin_coordinate(region), **_sampler_args(cfg))
        diag = sw.convergence_diagnostic(trace, est)
        exact = float(gaussian_law(model, region, b).mean[region.index(origin(d))]) \
            if model.phase.kind == "gaussian" else float("nan")
        dec = sw.strictly_decreasing_after(trace.increments, 2)
        rate_ok = diag.status == "below floor" or diag.rate < 0.5
        limits[w], stderrs[w] = trace.limit, est.stderr
        limit_rows.append((w, trace.limit, est.mean, est.stderr, exact, diag.status,
                           diag.rate if diag.rate is not None else "", dec, diag.limit_ok))
        decreasing_all &= dec
        rate_all &= rate_ok
        out.check(4, f"limit-vs-mcmc[{w:g}]", abs(trace.limit - est.mean), f"<= 3*{est.stderr:.3g}",
                  abs(trace.limit - est.mean) <= 3 * est.stderr)
        if math.isfinite(exact):
            out.check(4, f"limit-vs-exact[{w:g}]", abs(trace.limit - exact),
                      f"<= 3*{est.stderr:.3g}", abs(trace.limit - exact) <= 3 * est.stderr)
    out.table("trace", ["omega", "k", "support_size", "value", "increment"], trace_rows)
    out.table("limits", ["omega", "limit", "mcmc_mean", "mcmc_stderr", "exact_mean", "status",
                         "rate_per_cycle", "strictly_decreasing", "limit_ok"], limit_rows)
    out.check(4, "deviations-strictly-decreasing-after-2", decreasing_all, "true", decreasing_all)
    out.check(4, "geometric-rate", rate_all, "< 0.5 or below floor", rate_all)
    if len(omegas) >= 2:
        spread = max(limits.values()) - min(limits.values())
        tol = 3 * max(stderrs.values())
        out.check(4, "boundary-uniqueness", spread, f"<= {tol:.3g}", spread <= tol)
    return out


@dataclass(frozen=True)
class _Coordinate:
    site: tuple

    def evaluate_on(self, region, configs):
        return np.asarray(configs)[:, region.index(self.site)]


def _origin_coordinate(region: LatticeRegion) -> _Coordinate:
    return _Coordinate(origin(region.dim))


def gradient_sweep(cfg: ExperimentConfig) -> Outcome:
    out = Outcome()
    base = cfg.spin_model()
    couplings = cfg.knob("couplings", [0.025, 0.05, 0.1])
    samples = cfg.knob("boundary_samples", 100)
    c, c_hat = cfg.knob("c", 2.0), cfg.knob("c_hat", 1.0)
    etas, rows = [], []
    for J in couplings:
        model = base.with_(J=J, J0=abs(J))
        rep = sw.check_gradient_sweep(model, [origin(model.d)], _tanh0, 0, samples,
                                      cfg.sampler.seed, c=c, c_hat=c_hat)
        etas.append(rep.eta_min)
        rows.append((J, rep.eta_min, rep.proof_constant, len(rep.detail)))
    out.table("eta", ["J0", "eta_min", "proof_constant", "evaluations"], rows)
    ref = int(np.argmin(np.abs(np.array(couplings) - 0.05)))
    out.check(5, f"eta-min-below-1[J0={couplings[ref]:g}]", etas[ref], "< 1", etas[ref] < 1)
    ratio_rows = []
    for a in range(len(couplings) - 1):
        law = (couplings[a + 1] / couplings[a]) ** 2
        obs = etas[a + 1] / etas[a] if etas[a] > 0 else float("inf")
        ok = law / 2 <= obs <= law * 2
        ratio_rows.append((couplings[a], couplings[a + 1], obs, law, ok))
        out.check(5, f"eta-ratio[{couplings[a]:g}->{couplings[a + 1]:g}]", obs,
                  f"in [{law / 2:g}, {law * 2:g}]", ok)
    out.table("ratios", ["J_low", "J_high", "observed_ratio", "square_law", "ok"], ratio_rows)
    return out


def entropy_decay(cfg: ExperimentConfig) -> Outcome:
    out = Outcome()
    base = cfg.spin_model()
    region = cfg.region()
    lams = cfg.knob("lambda_grid", [0.5, 1.0])
    s, k_max = cfg.knob("s", 0), cfg.knob("k_max", 3)
    budget = cfg.knob("budget", 3_000_000)
    c = cfg.knob("c", 2.0)
    h = _h_function(cfg)
    rows, fit_rows = [], []
    for J in cfg.knob("couplings", [0.05, 0.0]):
        model = base.with_(J=J, J0=abs(J))
        b = cfg.boundary()
        F = sw.local_function([origin(model.d)], _tanh0, model.grid, b)
        rep = sw.check_entropy_decay(model, F, s, k_max, lams, h_fn=h, c=c, box=region, boundary=b,
                                     budget=budget, **_sampler_args(cfg))
        for r in rep.records:
            rows.append((J, r.k, r.lam, r.mean, r.stderr))
        for lam in lams:
            ser = rep.series(lam)
            errs = np.array([r.stderr for r in rep.records if r.lam == lam])
            ratio = rep.ratios[float(lam)]
            fit_rows.append((J, lam, ratio if ratio is not None else "", rep.level_bound[float(lam)],
                             rep.C1_empirical[float(lam)]))
            if J == 0:
                zero = bool(np.all(np.abs(ser) <= 3 * errs + sw.NUMERICAL_FLOOR))
                out.check(6, f"zero-at-J0[lambda={lam:g}]", float(np.max(np.abs(ser))),
                          "<= 3*stderr", zero)
            else:
                mono = bool(np.all(np.diff(ser) <= 3 * np.hypot(errs[1:], errs[:-1])))
                out.check(6, f"nonincreasing[J={J:g},lambda={lam:g}]", mono, "true", mono)
                out.check(6, f"fitted-ratio[J={J:g},lambda={lam:g}]",
                          ratio if ratio is not None else "none", "< 1",
                          ratio is not None and ratio < 1)
    out.table("entropy", ["J", "k", "lambda", "mean", "stderr"], rows)
    out.table("fit", ["J", "lambda", "ratio", "level_bound", "C1_empirical"], fit_rows)
    return out


# -------------------------------------------------------- concentration

def _eta(model: SpinModel, cfg: ExperimentConfig) -> float:
    if model.J == 0:
        return 0.0
    rep = sw.check_gradient_sweep(model, [origin(model.d)], _tanh0, 0,
                                  cfg.knob("boundary_samples", 20), cfg.sampler.seed,
                                  c=cfg.knob("c", 2.0), c_hat=cfg.knob("c_hat", 1.0))
    return rep.eta_min


def _envelope(model: SpinModel, cfg: ExperimentConfig, a: float, c: float,
              h: oz.HFunction) -> tuple[conc.Envelope, float]:
    eta = _eta(model, cfg)
    C1 = 2.0 + 2 * model.d * eta
    C2 = max(2 * model.d * eta, 1e-6)
    return conc.Envelope.from_h2(a, c, C1, C2, h), eta


def _tested_range(r0: float, cfg: ExperimentConfig) -> np.ndarray:
    span, points = cfg.knob("r_span", 3.0), cfg.knob("r_points", 13)
    return r0 + np.linspace(0.0, span, points)


def _envelope_rows(env: conc.Envelope, eta: float) -> list[Row]:
    return [(k, v) for k, v in sorted({**env.summary(), "eta": eta}.items())]


def _tail(cfg: ExperimentConfig, criterion: int) -> Outcome:
    out = Outcome()
    model = cfg.spin_model()
    region = cfg.region()
    F = NormalizedSum(region)
    h = _h_function(cfg)
    a = cfg.knob("a", F.gradient_level(h))
    env, eta = _envelope(model, cfg, a, cfg.knob("c", 2.0), h)
    tested = _tested_range(env.r_min, cfg)
    r_grid = np.unique(np.concatenate([cfg.knob("r_grid", [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]),
                                       tested]))
    tail = conc.empirical_tail(model, region, cfg.boundary(), F, r_grid, **_sampler_args(cfg))
    verdict = conc.dominance_check(tail, env)
    out.table("tail", ["r", "empirical", "upper_ci", "envelope", "valid", "verdict"], tail.rows())
    out.table("envelope", ["quantity", "value"], _envelope_rows(env, eta))
    out.summary.update(verdict=verdict.label, K_hat=env.K_hat, R=env.R_theorem, r_min=env.r_min)
    in_range = (tail.r >= tested[0] - 1e-12) & (tail.r <= tested[-1] + 1e-12)
    valid_in_range = int(np.sum(tail.valid[in_range]))
    out.check(criterion, "dominance", verdict.label, "PASS with zero violations",
              verdict.label == "PASS" and valid_in_range == in_range.sum())
    below = bool(np.any(tail.envelope[in_range] < 0.5))
    out.check(criterion, "vacuity-guard", below, "envelope < 0.5 somewhere", below)
    if model.J == 0 and model.phase.kind == "gaussian" and model.phase.sigma == 1:
        k = int(np.argmin(np.abs(tail.r - 2.0)))
        if abs(tail.r[k] - 2.0) < 1e-12:
            oracle = float(stats.norm.sf(2.0))
            lo, hi = tail.lower_two_sided[k], tail.upper_two_sided[k]
            out.check(criterion, "tail-at-2-normal-oracle", float(tail.exceed[k]),
                      f"99% CI [{lo:.5f}, {hi:.5f}] contains {oracle:.5f}", lo <= oracle <= hi)
    return out


def tail_product(cfg: ExperimentConfig) -> Outcome:
    return _tail(cfg, 7)


def tail_gibbs(cfg: ExperimentConfig) -> Outcome:
    return _tail(cfg, 8)


def _gauge(cfg: ExperimentConfig, h: oz.HFunction):
    p = cfg.knob("gauge_power", None)
    if p is not None:
        return conc.gauge_power(p), f"|x|^{p:g}"
    return conc.gauge_h_star(h), "H*"


def _enlargement(cfg: ExperimentConfig, criterion: int, h: oz.HFunction, c: float,
                 gauge, gauge_name: str, out: Outcome) -> None:
    model = cfg.spin_model()
    region = cfg.region()
    F = NormalizedSum(region)
    env, eta = _envelope(model, cfg, cfg.knob("a", F.gradient_level(h)), c, h)
    tested = np.concatenate([_tested_range(env.r_min, cfg), _tested_range(env.R_theorem, cfg)])
    small = np.array(cfg.knob("r_grid", [0.0, 0.25, 0.5, 1.0, 2.0, 4.0]), dtype=float)
    spec = conc.EnlargementSpec(F, gauge, np.concatenate([small, tested]),
                                witnesses=cfg.knob("witnesses", 4000))
    curve = conc.enlargement_probability(model, region, cfg.boundary(), spec, K_hat=env.K_hat,
                                         **_sampler_args(cfg))
    flags = [False] * small.size + [True] * tested.size
    out.table("enlargement", ["r", "complement", "bound", "dominated", "tested"],
              [row + (t,) for row, t in zip(curve.rows(), flags)])
    out.table("envelope", ["quantity", "value"], _envelope_rows(env, eta))
    out.summary.update(K_hat=env.K_hat, R=env.R_theorem, r_min=env.r_min, mu_A=curve.mu_A,
                       gauge=gauge_name)
    ok_a = curve.mu_A >= 0.5 - 2 * curve.mu_A_stderr
    out.check(criterion, "mu-A-at-least-half", curve.mu_A, ">= 1/2 - 2 stderr", ok_a)
    dom = curve.dominated[small.size:]
    out.check(criterion, f"complement-under-exp(-K_hat r)[{gauge_name}]", int(np.sum(~dom)),
              "0 violations on the tested range", bool(np.all(dom)))


def enlargement(cfg: ExperimentConfig) -> Outcome:
    out = Outcome()
    h = _h_function(cfg)
    gauge, name = _gauge(cfg, h)
    _enlargement(cfg, 8, h, cfg.knob("c", 2.0), gauge, name, out)
    return out


def talagrand(cfg: ExperimentConfig) -> Outcome:
    out = Outcome()
    model = cfg.spin_model()
    region = cfg.region()
    F = NormalizedSum(region)
    h = _h_function(cfg)
    env, eta = _envelope(model, cfg, cfg.knob("a", F.gradient_level(h)), cfg.knob("c", 2.0), h)
    q = cfg.orlicz.p / (cfg.orlicz.p - 1)
    star = lambda y: np.abs(y) ** q / q
    r_grid = np.unique(np.concatenate([cfg.knob("r_grid", [0.01, 0.1, 0.5, 1.0, 2.0, 4.0]),
                                       _tested_range(env.r_min, cfg)]))
    spec = conc.EnlargementSpec(F, star, r_grid, witnesses=cfg.knob("witnesses", 4000))
    curve = conc.talagrand_check(model, region, cfg.boundary(), spec, star, C=env.K_hat,
                                 **_sampler_args(cfg))
    out.table("talagrand", ["r", "probability_lower", "bound", "ok"], curve.rows())
    out.table("envelope", ["quantity", "value"], _envelope_rows(env, eta))
    ok = bool(np.all(curve.probability >= curve.bound))
    out.check(8, "talagrand-two-ball", int(np.sum(curve.probability < curve.bound)),
              "0 violations", ok)
    out.summary.update(C=curve.C)
    return out


def perturbation_s3(cfg: ExperimentConfig) -> Outcome:
    out = Outcome()
    model = cfg.spin_model()
    model.require_perturbative()
    region = cfg.region()
    site = origin(model.d)
    c, c_hat = cfg.knob("c", 2.0), cfg.knob("c_hat", 1.0)
    omegas = cfg.knob("boundary_values", list(np.linspace(-2.0, 2.0, 9)))
    eps = fn.find_epsilon(model, site, omegas, c, c_hat, cfg.knob("epsilon", 0.05))
    r_rows, r_hats = [], []
    for n in cfg.knob("grid_sizes", [513, 1025]):
        rep = fn.perturbed_ls_check(model, site, omegas, eps, c, c_hat,
                                    grid=SpinGrid(model.grid.half_width, n))
        r_hats.append(rep.R_hat)
        r_rows.append((n, rep.R_hat, rep.argmax.get("omega", ""), rep.argmax.get("probe", "")))
    out.table("r_hat", ["grid_n", "R_hat", "argmax_omega", "argmax_probe"], r_rows)
    spread = (max(r_hats) - min(r_hats)) / max(abs(r_hats[0]), 1e-300)
    finite = all(math.isfinite(r) for r in r_hats)
    out.check(9, "R-hat-finite", r_hats[0], "finite", finite)
    out.check(9, "R-hat-grid-stability", spread, "<= 0.10", finite and spread <= 0.10)

    h4 = fn.check_h4(model, region, cfg.boundary(), eps, c, c_hat, cfg.sampler.samples,
                     cfg.sampler.seed, chains=cfg.sampler.chains, burn_in=cfg.sampler.burn_in)
    out.table("u_values", ["omega", "U"], [(w, u) for (_, w), u in sorted(h4.U_values.items())])
    out.check(9, "mu-U2-finite", h4.mu_U2, "finite", math.isfinite(h4.mu_U2))
    c_eff = r_hats[0] + model.J0 * math.sqrt(h4.K_check)
    out.table("perturbation", ["quantity", "value"],
              [("epsilon", eps), ("mu_U2", h4.mu_U2), ("mu_U2_stderr", h4.mu_U2_stderr),
               ("K_check", h4.K_check), ("R_hat", r_hats[0]), ("c_eff", c_eff)])
    h = _h_function(cfg)
    _enlargement(cfg, 9, h, c_eff, conc.gauge_power(4.0 / 3.0), "|x|^4/3", out)
    out.summary.update(epsilon=eps, K_check=h4.K_check, c_eff=c_eff)
    return out


REGISTRY: dict[str, Scenario] = {s.name: s for s in (
    Scenario("orlicz-suite", (1,), "conjugates, Young inequalities, Herbst bound", orlicz_suite),
    Scenario("one-site-constants", (2,), "spectral gap and LS2/SG2 probe sups", one_site_constants),
    Scenario("tensorisation", (3,), "two-site product probe sups", tensorisation),
    Scenario("sweep-convergence", (4,), "B operator traces against MCMC and exact means",
             sweep_convergence),
    Scenario("gradient-sweep", (5,), "sweeping-out eta across couplings", gradient_sweep),
    Scenario("entropy-decay", (6,), "per-shell entropy terms", entropy_decay),
    Scenario("tail-product", (7,), "product Gaussian tail against the envelope", tail_product),
    Scenario("tail-gibbs", (8,), "Gibbs tail against the envelope", tail_gibbs),
    Scenario("enlargement", (8,), "H*-gauge enlargement complement", enlargement),
    Scenario("talagrand", (8,), "two-ball Minkowski sum lower bound", talagrand),
    Scenario("perturbation-s3", (9,), "perturbed phase: R-hat, U, |x|^4/3 enlargement",
             perturbation_s3),
)}


def get(name: str) -> Scenario:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; valid names: {', '.join(REGISTRY)}") from None
