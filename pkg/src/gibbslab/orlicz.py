"""Young functions, their conjugates, modifications and growth envelopes.

Everything here is evaluated on |x|: Young functions are even, so the even
extension is taken implicitly by every ``__call__``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import integrate

# Default tabulation for growth envelopes.
LOG_GRID_LO = 1e-6
LOG_GRID_HI = 1e6
LOG_GRID_POINTS = 4096

_MONO_RTOL = 1e-10


class ConvexityError(ValueError):
    """A tabulated function is not convex; ``index`` is the first bad slope."""

    def __init__(self, index: int, message: str):
        super().__init__(message)
        self.index = index


class NotNiceError(ValueError):
    """A Young function fails one of the niceness clauses."""

    def __init__(self, clause: str, message: str):
        super().__init__(message)
        self.clause = clause


class DivergentIntegralError(ArithmeticError):
    pass


def log_grid(lo: float = LOG_GRID_LO, hi: float = LOG_GRID_HI,
             n: int = LOG_GRID_POINTS) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), n)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _slopes(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.diff(values) / np.diff(grid)


def check_convex(grid: np.ndarray, values: np.ndarray) -> None:
    """Raise ConvexityError at the first decreasing slope."""
    s = _slopes(grid, values)
    tol = 1e-9 * (1.0 + np.abs(s[:-1]))
    bad = np.nonzero(s[1:] < s[:-1] - tol)[0]
    if bad.size:
        i = int(bad[0]) + 1
        raise ConvexityError(
            i, f"convexity violated at grid index {i} "
               f"(slope {s[i]:.6g} < previous slope {s[i - 1]:.6g})")


def legendre_tabulated(grid: np.ndarray, values: np.ndarray,
                       y) -> np.ndarray:
    """sup over the grid of x*|y| - values, evaluated exactly for the
    piecewise-linear interpolant of a convex table."""
    y = np.abs(np.asarray(y, dtype=float))
    s = np.maximum.accumulate(_slopes(grid, values))
    idx = np.searchsorted(s, y, side="left")
    return grid[idx] * y - values[idx]


@dataclass(frozen=True, eq=False)
class YoungFunction:
    """An even convex function with value 0 at the origin.

    ``power`` kind: coef * |x|**p (coef defaults to 1/p).
    ``tabulated`` kind: piecewise-linear through (grid, values), linearly
    extrapolated past the last node with the last slope.
    """

    kind: str
    p: float | None = None
    coef: float | None = None
    grid: np.ndarray | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def power(cls, p: float, coef: float | None = None) -> "YoungFunction":
        if not p > 1:
            raise ValueError(f"power Young function needs p > 1, got {p}")
        return cls("power", p=float(p), coef=float(1.0 / p if coef is None else coef))

    @classmethod
    def tabulated(cls, grid, values) -> "YoungFunction":
        grid = _frozen(grid)
        values = _frozen(values)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise ValueError("grid and values must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(grid) <= 0) or grid[0] < 0:
            raise ValueError("grid must be strictly increasing and nonnegative")
        if np.any(values < 0):
            raise ValueError("tabulated Young function values must be >= 0")
        return cls("tabulated", grid=grid, values=values)

    @property
    def key(self) -> tuple:
        if self.kind == "power":
            return ("power", self.p, self.coef)
        return ("tabulated", self.grid.tobytes(), self.values.tobytes())

    def __call__(self, x):
        ax = np.abs(np.asarray(x, dtype=float))
        if self.kind == "power":
            return self.coef * ax ** self.p
        g, v = self.grid, self.values
        out = np.interp(ax, g, v)
        hi = ax > g[-1]
        if np.any(hi):
            slope = (v[-1] - v[-2]) / (g[-1] - g[-2])
            out = np.where(hi, v[-1] + slope * (ax - g[-1]), out)
        return out

    def derivative(self, x):
        """Right derivative on [0, inf), odd extension."""
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        if self.kind == "power":
            d = self.coef * self.p * ax ** (self.p - 1)
        else:
            s = _slopes(self.grid, self.values)
            idx = np.clip(np.searchsorted(self.grid, ax, side="right") - 1, 0, s.size - 1)
            d = s[idx]
        return np.sign(x) * d if np.ndim(x) else math.copysign(float(d), float(x))

    def to_record(self) -> dict[str, Any]:
        if self.kind == "power":
            return {"kind": "power", "p": self.p, "coef": self.coef}
        return {"kind": "tabulated", "grid": self.grid.tolist(),
                "values": self.values.tolist()}

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "YoungFunction":
        kind = rec.get("kind")
        if kind == "power":
            return cls.power(rec["p"], rec.get("coef"))
        if kind == "tabulated":
            return cls.tabulated(rec["grid"], rec["values"])
        raise ValueError(f"unknown Young function kind {kind!r}")


def conjugate(phi: YoungFunction) -> YoungFunction:
    """Legendre transform sup_{x>=0} (x|y| - phi(x))."""
    if phi.kind == "power":
        p, c = phi.p, phi.coef
        q = p / (p - 1.0)
        return YoungFunction.power(q, (c * p) ** (1.0 - q) / q)

    g, v = phi.grid, phi.values
    check_convex(g, v)
    s = np.maximum.accumulate(_slopes(g, v))
    # breakpoints of the conjugate are the slopes; the extra node past the
    # last slope carries the final slope g[-1] into the extrapolation
    last = s[-1] + max(s[-1] - s[0], 1.0)
    y = np.unique(np.concatenate([[0.0], np.clip(s, 0.0, None), [last]]))
    return YoungFunction.tabulated(y, np.maximum(legendre_tabulated(g, v, y), 0.0))


def tabulate(fn, grid) -> YoungFunction:
    grid = np.asarray(grid, dtype=float)
    return YoungFunction.tabulated(grid, np.asarray(fn(grid), dtype=float))


def niceness_failure(phi: YoungFunction) -> str | None:
    """Name of the first failed niceness clause, or None if phi is nice."""
    if phi.kind == "power":
        return None
    g, v = phi.grid, phi.values
    if g[0] != 0.0 or v[0] != 0.0:
        return "phi(0)=0"
    if np.any(v[1:] <= 0):
        return "phi(x)=0 iff x=0"
    s = _slopes(g, v)
    if s[0] > 1e-3 * max(s[-1], 1e-300):
        return "phi'(0)=0"
    ratio = v[1:] / g[1:]
    if np.any(np.diff(ratio) < -1e-12 * ratio[1:]) or ratio[-1] <= 10 * ratio[0]:
        return "phi(x)/x -> infinity"
    return None


@dataclass(frozen=True, eq=False)
class HFunction:
    """x^2 on [-1, 1], phi(|x|)/phi(1) outside."""

    base: YoungFunction

    @property
    def key(self) -> tuple:
        return ("H",) + self.base.key

    @property
    def phi1(self) -> float:
        return float(self.base(1.0))

    def __call__(self, x):
        ax = np.abs(np.asarray(x, dtype=float))
        return np.where(ax <= 1.0, ax * ax, self.base(ax) / self.phi1)

    @classmethod
    def quadratic(cls) -> "HFunction":
        return modification(YoungFunction.power(2.0))

    @classmethod
    def from_power(cls, p: float) -> "HFunction":
        return modification(YoungFunction.power(p))


def modification(phi: YoungFunction) -> HFunction:
    clause = niceness_failure(phi)
    if clause is not None:
        raise NotNiceError(clause, f"Young function is not nice: fails {clause!r}")
    if not phi(1.0) > 0:
        raise NotNiceError("phi(1)>0", "phi(1) must be positive")
    return HFunction(phi)


def growth_sup(fn, x, t_grid: np.ndarray | None = None) -> np.ndarray:
    """sup_t fn(t x) / fn(t) over a log t-grid augmented with {1, 1/x}.

    Returns +inf where the ratio is still climbing at the top of the grid.
    """
    x = np.atleast_1d(np.abs(np.asarray(x, dtype=float)))
    t = log_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    base = fn(t)
    # points where fn vanishes carry no information about the ratio
    t, base = t[base > 0], base[base > 0]
    out = np.empty_like(x)
    for lo in range(0, x.size, 256):
        xs = x[lo:lo + 256]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = fn(t[None, :] * xs[:, None]) / base[None, :]
            inv = np.where(xs > 0, 1.0 / xs, 1.0)
            extra = np.stack([fn(xs) / fn(1.0), fn(np.ones_like(xs)) / fn(inv)], axis=1)
        r = np.where(np.isnan(r), -np.inf, r)
        extra = np.where(np.isnan(extra), -np.inf, extra)
        best = np.maximum(r.max(axis=1), extra.max(axis=1))
        climbing = (r[:, -1] >= best) & (r[:, -1] > r[:, -2] * (1 + 1e-9)) & (xs > 1)
        best = np.where(climbing | ~np.isfinite(best), np.inf, best)
        out[lo:lo + 256] = np.where(xs == 0, 0.0, best)
    return out


def omega(h: HFunction, x):
    """Growth envelope sup_{t>0} H(t x)/H(t)."""
    out = growth_sup(h, x)
    return out if np.ndim(x) else float(out[0])


class GrowthEnvelope:
    """Tabulated omega_H on [0] + log grid, and its conjugate."""

    def __init__(self, h: HFunction, grid: np.ndarray | None = None):
        self.source = h
        g = log_grid() if grid is None else np.asarray(grid, dtype=float)
        # x = 1 is where every modification switches branch
        self.grid = np.unique(np.concatenate([[0.0, 1.0], g]))
        vals = growth_sup(h, self.grid)
        if not np.all(np.isfinite(vals)):
            bad = self.grid[~np.isfinite(vals)][0]
            raise ArithmeticError(f"omega_H diverges at x={bad:.3g} (H2 violated)")
        self.values = vals
        self.omega_fn = YoungFunction.tabulated(self.grid, vals)
        self.conjugate_fn = conjugate(self.omega_fn)

    def omega(self, x):
        return self.omega_fn(x)

    def omega_star(self, y):
        return self.conjugate_fn(y)


_ENVELOPES: dict[tuple, GrowthEnvelope] = {}


def envelope(h: HFunction) -> GrowthEnvelope:
    env = _ENVELOPES.get(h.key)
    if env is None:
        env = _ENVELOPES[h.key] = GrowthEnvelope(h)
    return env


def omega_star(h: HFunction, y):
    out = envelope(h).omega_star(y)
    return out if np.ndim(y) else float(out)


@dataclass(frozen=True)
class H2Report:
    ok: bool
    t_witness: float | None
    first_violation: float | None = None


def check_h2(h: HFunction, grid: np.ndarray | None = None,
             t_candidates: np.ndarray | None = None) -> H2Report:
    """Grid check that H/x^2 is nondecreasing and some H/x^t (t>2) nonincreasing.

    The witness is the smallest passing t on a 0.01-spaced search grid.
    """
    x = log_grid() if grid is None else np.asarray(grid, dtype=float)
    hx = h(x)
    r2 = hx / x ** 2
    bad = np.nonzero(r2[1:] < r2[:-1] * (1 - _MONO_RTOL))[0]
    if bad.size:
        return H2Report(False, None, float(x[bad[0] + 1]))
    if t_candidates is None:
        t_candidates = np.round(np.arange(2.01, 8.0 + 1e-9, 0.01), 2)
    first_bad = None
    for t in t_candidates:
        with np.errstate(over="ignore"):
            rt = hx / x ** t
        up = np.nonzero(rt[1:] > rt[:-1] * (1 + _MONO_RTOL))[0]
        if up.size == 0:
            return H2Report(True, float(t))
        if first_bad is None:
            first_bad = float(x[up[0] + 1])
    return H2Report(False, None, first_bad)


def herbst_integral(h: HFunction, lam: float) -> float:
    """lam * int_0^lam omega_H(u/2)/u^2 du."""
    if lam <= 0:
        return 0.0
    f = lambda u: omega(h, u / 2.0) / (u * u)
    probe = np.array([1e-8, 1e-6, 1e-4])
    vals = omega(h, probe / 2.0) / probe ** 2
    if not np.all(np.isfinite(vals)) or vals[0] > 10 * vals[-1] + 1e-12:
        raise DivergentIntegralError("omega_H(u/2)/u^2 blows up at 0 (H2 violated)")
    points = [p for p in (2.0,) if 0 < p < lam]
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, 0.0, lam, points=points or None,
                                epsabs=0.0, epsrel=1e-10, limit=200)
    return lam * val


@dataclass
class YoungReport:
    young_max_violation: float
    duality_premise: bool
    duality_max_violation: float
    scaling_premise: bool
    scaling_max_violation: float
    touching_slack: float

    @property
    def ok(self) -> bool:
        return (self.young_max_violation <= 0 and self.duality_max_violation <= 0
                and self.scaling_max_violation <= 0)


def _increase(r: np.ndarray) -> float:
    """Largest relative step-up of a sequence (<=0 means nonincreasing)."""
    return float(np.max((r[1:] - r[:-1]) / np.abs(r[:-1]))) if r.size > 1 else 0.0


def check_young_lemmas(phi: YoungFunction, a: float, sample_count: int = 10_000,
                       seed: int = 0, grid: np.ndarray | None = None) -> YoungReport:
    if not a > 1:
        raise ValueError("a must exceed 1")
    rng = np.random.default_rng(seed)
    star = conjugate(phi)
    x = rng.uniform(0.0, 10.0, sample_count)
    y = rng.uniform(0.0, 10.0, sample_count)
    slack = phi(x) + star(y) - x * y
    scale = 1e-12 * (1.0 + x * y)
    young = float(np.max(np.maximum(-slack - scale, 0.0)))

    g = np.logspace(-3, 3, 2001) if grid is None else np.asarray(grid, dtype=float)
    a_star = a / (a - 1.0)
    # premise: phi/x^a nondecreasing on the grid
    premise = bool(np.all(np.diff(phi(g) / g ** a) >= -_MONO_RTOL * phi(g[1:]) / g[1:] ** a))
    duality = 0.0
    scaling = 0.0
    if premise:
        duality = max(_increase(star(g) / g ** a_star) - _MONO_RTOL, 0.0)
        t = rng.uniform(0.0, 1.0, sample_count)
        lhs, rhs = phi(t * x), t ** a * phi(x)
        scaling = float(np.max(np.maximum(lhs - rhs - 1e-12 * (1 + rhs), 0.0)))
    x1 = 1.0
    y1 = float(phi.derivative(x1))
    touch = float(phi(x1) + star(y1) - x1 * y1)
    return YoungReport(young, premise, duality, premise, scaling, touch)
