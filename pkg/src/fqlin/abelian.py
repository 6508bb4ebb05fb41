"""Solvability of all-ones equation systems over finite abelian groups.

A finite abelian group is supplied as its cyclic decomposition into
prime-power components Z/q_1 + ... + Z/q_K; a system is solvable over the
group iff it is solvable over every component.  Each component check
computes a Howell normal form over Z/q_i: unlike plain echelon forms,
the Howell form is a canonical generating set of the row span even in the
presence of zero divisors, so membership of the right-hand side can be
decided by greedy reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleParams, RowDistribution, sample_system, substream

_TAG_GROUP_RHS = 3


@dataclass(frozen=True)
class GroupSpec:
    """Cyclic decomposition: orders of the prime-power components."""

    components: tuple[int, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("group must have at least one component")
        for m in self.components:
            if not _is_prime_power(int(m)):
                raise ValueError(f"component order {m} is not a prime power >= 2")

    @property
    def order(self) -> int:
        return math.prod(self.components)

    @classmethod
    def parse(cls, text: str) -> "GroupSpec":
        return cls(tuple(int(t) for t in text.split(",") if t.strip()))


def _is_prime_power(m: int) -> bool:
    if m < 2:
        return False
    p = next(c for c in range(2, m + 1) if m % c == 0)
    while m % p == 0:
        m //= p
    return m == 1


# --- Howell normal form over Z/m ---------------------------------------


def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        qt = old_r // r
        old_r, r = r, old_r - qt * r
        old_s, s = s, old_s - qt * s
        old_t, t = t, old_t - qt * t
    return old_r, old_s, old_t


def _unit_for(a: int, m: int) -> int:
    """A unit u of Z/m with u*a = gcd(a, m) mod m."""
    g = math.gcd(a, m)
    a_, m_ = a // g, m // g
    u = pow(a_, -1, m_) if m_ > 1 else 1
    while math.gcd(u, m) != 1:
        u += m_
    return u % m


def _leading(row: np.ndarray) -> int:
    nz = np.nonzero(row)[0]
    return int(nz[0]) if nz.size else -1


def howell_form(mat, modulus: int) -> np.ndarray:
    """Canonical Howell normal form of an integer matrix over Z/modulus.

    Rows are in echelon form, each leading entry divides the modulus,
    entries above a leading entry are reduced below it, and every row of
    the span whose leading column is >= some pivot column lies in the span
    of that pivot row and the ones below it.
    """
    m = int(modulus)
    if m < 2:
        raise ValueError(f"modulus must be >= 2, got {modulus}")
    mat = np.atleast_2d(np.asarray(mat, dtype=np.int64)) % m
    ncols = mat.shape[1]

    buckets: dict[int, list[np.ndarray]] = {}
    for row in mat:
        lead = _leading(row)
        if lead >= 0:
            buckets.setdefault(lead, []).append(row.copy())

    result: list[np.ndarray] = []
    for col in range(ncols):
        rows = buckets.pop(col, None)
        if not rows:
            continue
        pivot = rows[0]
        for row in rows[1:]:
            a, b = int(pivot[col]), int(row[col])
            g, u, v = _xgcd(a, b)
            combined = (u * pivot + v * row) % m
            residual = ((a // g) * row - (b // g) * pivot) % m
            pivot = combined
            lead = _leading(residual)
            if lead >= 0:
                buckets.setdefault(lead, []).append(residual)
        unit = _unit_for(int(pivot[col]), m)
        pivot = (unit * pivot) % m
        result.append(pivot)
        ann = m // int(pivot[col])  # annihilator of the leading entry
        extra = (ann * pivot) % m
        lead = _leading(extra)
        if lead >= 0:
            buckets.setdefault(lead, []).append(extra)

    if not result:
        return np.zeros((0, ncols), dtype=np.int64)
    H = np.vstack(result)
    # reduce entries above each pivot; ascending order, so already-reduced
    # pivot columns stay untouched (later pivot rows are zero there)
    for i in range(len(H)):
        c = _leading(H[i])
        g = int(H[i, c])
        factors = H[:i, c] // g
        if factors.any():
            H[:i] = (H[:i] - factors[:, None] * H[i]) % m
    return H


def in_row_span(H: np.ndarray, v, modulus: int) -> bool:
    """Membership of v in the row span of a Howell form H over Z/modulus."""
    m = int(modulus)
    v = np.asarray(v, dtype=np.int64) % m
    v = v.copy()
    for row in H:
        c = _leading(row)
        g = int(row[c])
        if int(v[c]) % g:
            return False
        v = (v - (int(v[c]) // g) * row) % m
    return not v.any()


# --- solvability over a group -------------------------------------------


def _normalise_rhs(y, K: int) -> list[tuple[int, ...]]:
    out = []
    for entry in y:
        if isinstance(entry, (int, np.integer)):
            if K != 1:
                raise ValueError("scalar rhs given for a multi-component group")
            out.append((int(entry),))
        else:
            entry = tuple(int(c) for c in entry)
            if len(entry) != K:
                raise ValueError(f"rhs entry {entry} has {len(entry)} components, expected {K}")
            out.append(entry)
    return out


def abelian_solvable(positions, y, spec: GroupSpec) -> bool:
    """Whether the all-ones system 'sum of x at positions[i] = y[i]' has a
    solution over the group."""
    positions = [tuple(int(p) for p in row) for row in positions]
    K = len(spec.components)
    rhs = _normalise_rhs(y, K)
    if len(rhs) != len(positions):
        raise ValueError(f"{len(positions)} rows but {len(rhs)} rhs entries")
    if not positions:
        return True
    n = max((max(row) for row in positions if row), default=1)
    A = np.zeros((len(positions), n), dtype=np.int64)
    for i, row in enumerate(positions):
        for p in row:
            A[i, p - 1] += 1
    for comp, modulus in enumerate(spec.components):
        yc = np.array([entry[comp] for entry in rhs], dtype=np.int64)
        H = howell_form(A.T, modulus)  # row span of A^T = column span of A
        if not in_row_span(H, yc, modulus):
            return False
    return True


def sample_abelian_instance(spec: GroupSpec, k: int, n: int, d: float, seed: int):
    """Positions drawn exactly as the field ensemble with all-ones
    coefficients (identical substreams, so a single Z/2 component
    reproduces the GF(2) instance bit for bit), plus uniform per-component
    right-hand sides."""
    params = EnsembleParams(q=2, k=k, n=n, d=d, dist=RowDistribution.all_ones(), seed=seed)
    system = sample_system(params)
    positions = [row.positions for row in system.rows]
    rhs: list[tuple[int, ...]] = []
    for i, row in enumerate(system.rows):
        entry = []
        for comp, modulus in enumerate(spec.components):
            if modulus == 2:
                code = row.rhs if comp == 0 else int(substream(seed, _TAG_GROUP_RHS, comp, i).integers(modulus))
            else:
                code = int(substream(seed, _TAG_GROUP_RHS, comp, i).integers(modulus))
            entry.append(code)
        rhs.append(tuple(entry))
    return positions, rhs


def abelian_scan(spec: GroupSpec, k: int, n: int, d_grid, trials: int, seed: int) -> list[dict]:
    """Empirical solvability probability over a grid of densities, with
    Wilson 95% intervals."""
    from .experiments import derive_seed, wilson_interval

    d_grid = [float(d) for d in d_grid]
    table = []
    for di, d in enumerate(d_grid):
        solvable = 0
        for t in range(trials):
            trial_seed = derive_seed(seed, di, t)
            positions, rhs = sample_abelian_instance(spec, k, n, d, trial_seed)
            solvable += abelian_solvable(positions, rhs, spec)
        lo, hi = wilson_interval(solvable, trials)
        table.append(
            {
                "d": d,
                "trials": trials,
                "solvable": solvable,
                "p_solvable": solvable / trials if trials else 0.0,
                "wilson_low": lo,
                "wilson_high": hi,
            }
        )
    return table
