"""Analytic thresholds and rate functions for the sparse ensemble.

Everything here is a deterministic numeric evaluation: the peeling
fixed point and the densities where the 2-core appears and where
satisfiability is lost, predicted core sizes and rank, the cluster-count
growth rate, the one-parameter Bethe free entropy (closed form and Monte
Carlo), the pair-satisfaction log-probability with its derivative
structure, and the GF(2) second-moment curve.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, asdict
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import FqlinError
from .ensemble import RowDistribution
from .gf import make_field

FIXED_POINT_TOL = 1e-12  # step tolerance of the fixed-point iteration
COLLAPSE_TOL = 1e-9  # iterates below this mean there is no positive fixed point
BISECTION_TOL = 1e-9  # width tolerance for threshold bisections
FD_STEP = 1e-5  # central-difference step for derivative spot checks
DIRECT_SUM_CAP = 10**6  # largest q**k for brute-force factor sums
PAIR_SUM_CAP = 10**8  # largest q**(2k+1) * |support| for pair-probability sums

_MAX_FIXED_POINT_ITER = 2_000_000


class BelowThreshold(FqlinError, ValueError):
    pass


class OutOfRegime(FqlinError, ValueError):
    pass


class ComplexityGuard(FqlinError, ValueError):
    pass


def _check_kd(k: int, d: float) -> None:
    if k < 3:
        raise ValueError(f"k must be >= 3, got {k}")
    if not d > 0:
        raise ValueError(f"d must be positive, got {d}")


def core_fixed_point(k: int, d: float) -> float:
    """Largest fixed point of x -> 1 - exp(-d x^(k-1)) on [0, 1].

    Iterating from 1 descends monotonically onto the largest fixed point;
    returns 0.0 when the iterates collapse and no positive fixed point
    exists.  This is the density-evolution limit of peeling survival.
    """
    _check_kd(k, d)
    x = 1.0
    for _ in range(_MAX_FIXED_POINT_ITER):
        nxt = 1.0 - math.exp(-d * x ** (k - 1))
        if x - nxt < FIXED_POINT_TOL:
            x = nxt
            break
        x = nxt
        if x < COLLAPSE_TOL:
            return 0.0
    return 0.0 if x < COLLAPSE_TOL else x


def _h(mu: float, k: int) -> float:
    return mu / (1.0 - math.exp(-mu)) ** (k - 1)


@functools.lru_cache(maxsize=None)
def _h_minimum(k: int) -> tuple[float, float]:
    """(mu*, h(mu*)): h is unimodal on (0, inf) with a unique minimum."""
    res = minimize_scalar(_h, args=(k,), bounds=(1e-8, 120.0), method="bounded", options={"xatol": 1e-12})
    return float(res.x), float(_h(res.x, k))


@functools.lru_cache(maxsize=None)
def core_emergence_threshold(k: int) -> float:
    """Density above which the 2-core of the incidence hypergraph is non-empty."""
    if k < 3:
        raise ValueError(f"k must be >= 3, got {k}")
    return _h_minimum(k)[1]


def core_emergence_threshold_bisect(k: int, tol: float = 1e-8) -> float:
    """Independent cross-check: bisect d on the predicate 'positive fixed point exists'."""
    lo, hi = 1.0, 2.0
    while core_fixed_point(k, hi) == 0.0:
        lo, hi = hi, hi * 2.0
        if hi > 1e6:
            raise AssertionError("no positive fixed point found while scanning")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if core_fixed_point(k, mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _solvability_excess(k: int, d: float) -> float:
    """Positive while the core stays underdetermined, negative once
    equations outnumber core variables; its root is the threshold."""
    r = core_fixed_point(k, d)
    return r - d * r ** (k - 1) + (1.0 - 1.0 / k) * d * r**k


@functools.lru_cache(maxsize=None)
def satisfiability_threshold(k: int) -> float:
    """Density at which random systems with k entries per row stop being
    solvable; independent of the field order and coefficient distribution."""
    lo = core_emergence_threshold(k)
    hi = lo + 10.0
    if not _solvability_excess(k, hi) < 0.0:
        raise AssertionError(f"no sign change in [{lo}, {hi}]")
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if _solvability_excess(k, mid) < 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def core_size_fractions(k: int, d: float) -> tuple[float, float]:
    """Limits of (core variables / n, core equations / n)."""
    r = core_fixed_point(k, d)
    return r - d * r ** (k - 1) + d * r**k, d * r**k / k


def core_density_ratio(k: int, d: float) -> float:
    """Equations-per-variable ratio of the core; strictly increasing in d
    and equal to 1 exactly at the satisfiability threshold."""
    n_frac, m_frac = core_size_fractions(k, d)
    if n_frac <= 0.0:
        raise OutOfRegime(f"core is empty below d = {core_emergence_threshold(k):.6f}")
    return m_frac / n_frac


def free_entropy(k: int, d: float, alpha: float) -> float:
    """One-parameter free-entropy functional (units of ln q); alpha is the
    fraction of coordinates frozen to a point mass."""
    _check_kd(k, d)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    b = alpha ** (k - 1)
    return math.exp(-d * b) + d * b - d * (k - 1) * alpha**k / k - d / k


def _unstable_fixed_point(k: int, d: float, rho: float) -> float | None:
    """Smaller positive fixed point, when distinct from the largest one."""

    def g(x: float) -> float:
        return 1.0 - math.exp(-d * x ** (k - 1)) - x

    lo = 1e-12
    if g(lo) >= 0.0:
        return None
    hi = None
    for frac in (0.5, 0.75, 0.9, 0.99, 0.999):
        x = rho * frac
        if g(x) > 0.0:
            hi = x
            break
    if hi is None:
        return None
    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if g(mid) < 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def free_entropy_max(k: int, d: float) -> tuple[float, float]:
    """(sup, argmax) of the free entropy over [0, 1].

    Stationary points are exactly the fixed points of the peeling map, so
    it suffices to compare alpha = 0 with the fixed points; the smaller
    (unstable) fixed point is evaluated too, defensively.
    """
    _check_kd(k, d)
    best_val, best_arg = free_entropy(k, d, 0.0), 0.0
    rho = core_fixed_point(k, d)
    candidates = []
    if rho > 0.0:
        candidates.append(rho)
        unstable = _unstable_fixed_point(k, d, rho)
        if unstable is not None:
            candidates.append(unstable)
    for alpha in candidates:
        val = free_entropy(k, d, alpha)
        if val > best_val + 1e-15:
            best_val, best_arg = val, alpha
    return best_val, best_arg


def rank_fraction(k: int, d: float) -> float:
    """Limit of rank(A)/m above the satisfiability threshold; below it the
    matrix has full row rank and the fraction is 1."""
    _check_kd(k, d)
    if d <= satisfiability_threshold(k):
        raise BelowThreshold(
            f"d = {d} is not above the threshold {satisfiability_threshold(k):.6f}; rank fraction is 1 there"
        )
    r = core_fixed_point(k, d)
    return 1.0 + (k / d) * r - k * r ** (k - 1) + (k - 1) * r**k


def cluster_exponent(k: int, d: float) -> float:
    """Exponential growth rate of the number of solution clusters, per
    variable and per ln q; defined strictly between the two thresholds."""
    _check_kd(k, d)
    if not core_emergence_threshold(k) < d < satisfiability_threshold(k):
        raise OutOfRegime(
            f"d = {d} outside ({core_emergence_threshold(k):.6f}, {satisfiability_threshold(k):.6f})"
        )
    r = core_fixed_point(k, d)
    return r - d * r ** (k - 1) + d * (1.0 - 1.0 / k) * r**k


@dataclass(frozen=True)
class ThresholdReport:
    k: int
    d: float | None
    d_k: float
    d_k_star: float
    mu_star: float
    rho: float | None = None
    free_entropy_max: float | None = None
    free_entropy_argmax: float | None = None
    n_star_frac: float | None = None
    m_star_frac: float | None = None
    rank_frac: float | None = None
    cluster_exponent: float | None = None
    pi_k: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def threshold_report(k: int, d: float | None = None) -> ThresholdReport:
    mu_star, d_star = _h_minimum(k)
    d_k = satisfiability_threshold(k)
    if d is None:
        return ThresholdReport(k=k, d=None, d_k=d_k, d_k_star=d_star, mu_star=mu_star)
    _check_kd(k, d)
    rho = core_fixed_point(k, d)
    val, arg = free_entropy_max(k, d)
    n_frac, m_frac = core_size_fractions(k, d)
    return ThresholdReport(
        k=k,
        d=d,
        d_k=d_k,
        d_k_star=d_star,
        mu_star=mu_star,
        rho=rho,
        free_entropy_max=val,
        free_entropy_argmax=arg,
        n_star_frac=n_frac,
        m_star_frac=m_frac,
        rank_frac=1.0 if d <= d_k else rank_fraction(k, d),
        cluster_exponent=cluster_exponent(k, d) if d_star < d < d_k else None,
        pi_k=m_frac / n_frac if n_frac > 0 else None,
    )


# --- Bethe free entropy -------------------------------------------------


def bethe_free_entropy(k: int, d: float, alpha: float, q: int) -> float:
    """Closed form of the Bethe functional on the one-parameter family:
    free_entropy(k, d, alpha) * ln q."""
    make_field(q)
    return free_entropy(k, d, alpha) * math.log(q)


class BetheEstimate(NamedTuple):
    estimate: float
    stderr: float


def _row_term_samples(
    rng: np.random.Generator, q: int, k: int, alpha: float, n: int, method: str, dist: RowDistribution
) -> np.ndarray:
    """Per-sample value (in units of ln q) of the single-equation term."""
    frozen = rng.random((n, k)) < alpha
    if method == "case":
        # with at least one uniform marginal the inner sum is exactly 1/q,
        # with all marginals frozen it is 1; the coefficients drop out
        return np.where(frozen.all(axis=1), 0.0, -1.0)
    f = make_field(q)
    lnq = math.log(q)
    out = np.empty(n)
    sigmas = _all_tuples(q, k)
    for s in range(n):
        a = np.asarray(dist.draw_coeffs(rng, q, k), dtype=np.uint8)
        ok = f.vsum(f.vmul(sigmas, a), axis=1) == 0
        # probability of each value tuple under the product of marginals
        probs = np.where(frozen[s][None, :], (sigmas == 0) * 1.0, 1.0 / q)
        total = float((ok * probs.prod(axis=1)).sum())
        out[s] = math.log(total) / lnq
    return out


def _growth_term_samples(
    rng: np.random.Generator, q: int, k: int, d: float, alpha: float, n: int, method: str, dist: RowDistribution
) -> np.ndarray:
    """Per-sample value (in units of ln q) of the add-a-variable term."""
    counts = rng.poisson(d, size=n)
    total = int(counts.sum())
    frozen = rng.random((total, k - 1)) < alpha
    if method == "case":
        fully = frozen.all(axis=1).astype(np.int64) if total else np.zeros(0, np.int64)
        bounds = np.concatenate([[0], np.cumsum(counts)])
        csum = np.concatenate([[0], np.cumsum(fully)])
        f_per = csum[bounds[1:]] - csum[bounds[:-1]]
        return np.where(f_per >= 1, f_per - counts, 1 - counts).astype(float)
    f = make_field(q)
    lnq = math.log(q)
    sigmas = _all_tuples(q, k - 1)
    out = np.empty(n)
    pos = 0
    for s in range(n):
        gamma = int(counts[s])
        by_chi = np.ones(q)
        for i in range(gamma):
            a = np.asarray(dist.draw_coeffs(rng, q, k), dtype=np.uint8)
            head = f.vsum(f.vmul(sigmas, a[: k - 1]), axis=1)
            probs = np.where(frozen[pos + i][None, :], (sigmas == 0) * 1.0, 1.0 / q)
            w = probs.prod(axis=1)
            factor = np.empty(q)
            for chi in range(q):
                need = f.neg(f.mul(int(a[k - 1]), chi))
                factor[chi] = float(w[head == need].sum())
            by_chi *= factor
        pos += gamma
        out[s] = math.log(float(by_chi.sum())) / lnq
    return out


def _all_tuples(q: int, k: int) -> np.ndarray:
    grids = np.meshgrid(*([np.arange(q, dtype=np.uint8)] * k), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def bethe_free_entropy_mc(
    k: int,
    d: float,
    alpha: float,
    q: int,
    samples: int,
    seed: int,
    dist: RowDistribution | None = None,
    method: str = "case",
) -> BetheEstimate:
    """Monte Carlo estimate of the Bethe functional on the one-parameter
    family: marginals are point masses with probability alpha, uniform
    otherwise; equation counts are Poisson(d).

    method "case" evaluates each inner sum by the exact two-case analysis
    (its value depends only on which marginals are frozen); "direct" sums
    over all q^k value tuples with coefficients drawn from `dist`, which
    must satisfy q^k <= 10^6.
    """
    _check_kd(k, d)
    make_field(q)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if method not in ("case", "direct"):
        raise ValueError(f"unknown method {method!r}")
    if method == "direct" and q**k > DIRECT_SUM_CAP:
        raise ComplexityGuard(f"q^k = {q**k} exceeds the direct-summation cap {DIRECT_SUM_CAP}")
    if dist is None:
        dist = RowDistribution.uniform_nonzero()
    rng_row = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    rng_growth = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    row = _row_term_samples(rng_row, q, k, alpha, samples, method, dist)
    growth = _growth_term_samples(rng_growth, q, k, d, alpha, samples, method, dist)
    weight = d * (1.0 - 1.0 / k)
    lnq = math.log(q)
    est = (growth.mean() - weight * row.mean()) * lnq
    var = growth.var(ddof=1) / samples + weight**2 * row.var(ddof=1) / samples
    return BetheEstimate(float(est), float(math.sqrt(var) * lnq))


# --- pair-satisfaction log-probability ----------------------------------


def _support_size(dist: RowDistribution, q: int, k: int) -> int:
    if dist.kind == "uniform":
        return (q - 1) ** k
    if dist.kind == "allones":
        return 1
    return sum(
        math.factorial(k) // math.prod(math.factorial(c) for c in _multiplicities(key))
        for key, w in dist.weights
        if w > 0
    )


def _multiplicities(key: tuple[int, ...]) -> list[int]:
    out: dict[int, int] = {}
    for c in key:
        out[c] = out.get(c, 0) + 1
    return list(out.values())


def pair_satisfaction_logprob(q: int, k: int, dist: RowDistribution, omega) -> float:
    """Log-probability that a single random equation is satisfied by both
    members of a pair of vectors whose coordinate values are drawn from the
    q x q matrix omega.

    At the uniform matrix the value is exactly -2 ln q, every entry of the
    gradient equals k, and the Hessian annihilates directions orthogonal
    to the all-ones vector.
    """
    f = make_field(q)
    dist.validate_for(q, k)
    om = np.asarray(getattr(omega, "freq", omega), dtype=float)
    if om.shape != (q, q):
        raise ValueError(f"omega must be a {q}x{q} matrix, got shape {om.shape}")
    if q ** (2 * k + 1) * _support_size(dist, q, k) > PAIR_SUM_CAP:
        raise ComplexityGuard(f"q^(2k+1) * |support| exceeds {PAIR_SUM_CAP}")

    perms = f.add_table.astype(np.int64)  # row c is the permutation s -> s + c

    def step(dp: np.ndarray, a: int) -> np.ndarray:
        new = np.zeros_like(dp)
        for sig in range(q):
            r = perms[f.mul(a, sig)]
            for tau in range(q):
                w = om[sig, tau]
                if w == 0.0:
                    continue
                c = perms[f.mul(a, tau)]
                new[np.ix_(r, c)] += w * dp
        return new

    def chain_value(coeffs) -> float:
        dp = np.zeros((q, q))
        dp[0, 0] = 1.0
        for a in coeffs:
            dp = step(dp, a)
        return float(np.trace(dp)) / q

    if dist.kind == "allones":
        total = chain_value([1] * k)
    elif dist.kind == "uniform":
        dp = np.zeros((q, q))
        dp[0, 0] = 1.0
        for _ in range(k):
            dp = sum(step(dp, a) for a in range(1, q)) / (q - 1)
        total = float(np.trace(dp)) / q
    else:
        total = 0.0
        for key, w in dist.weights:
            if w > 0:
                total += w * chain_value(key)
    return math.log(total)


# --- GF(2) second-moment curve ------------------------------------------


@dataclass
class SecondMomentCurve:
    k: int
    d: float
    zs: np.ndarray
    values: np.ndarray
    argmax_z: float
    argmax_value: float


def second_moment_rate(k: int, d: float, z: float) -> float:
    """GF(2) growth rate of the expected number of solution pairs agreeing
    on a fraction z of coordinates."""
    entropy = 0.0
    for t in (z, 1.0 - z):
        if t > 0.0:
            entropy -= t * math.log(t)
    return entropy + (d / k) * math.log1p((2.0 * z - 1.0) ** k) + (1.0 - 2.0 * d / k) * math.log(2.0)


def second_moment_curve(k: int, d: float, grid_size: int = 1001) -> SecondMomentCurve:
    """Evaluate the pair-count rate on a uniform grid over [1/2, 1) and
    refine the maximiser locally."""
    _check_kd(k, d)
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    zs = np.linspace(0.5, 1.0 - 1e-9, grid_size)
    values = np.array([second_moment_rate(k, d, z) for z in zs])
    i = int(values.argmax())
    lo, hi = zs[max(i - 1, 0)], zs[min(i + 1, grid_size - 1)]
    res = minimize_scalar(
        lambda z: -second_moment_rate(k, d, z), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
    )
    best_z, best_v = float(res.x), float(-res.fun)
    half = second_moment_rate(k, d, 0.5)
    if best_v <= half + 1e-12:
        best_z, best_v = 0.5, half
    return SecondMomentCurve(k=k, d=d, zs=zs, values=values, argmax_z=best_z, argmax_value=best_v)
