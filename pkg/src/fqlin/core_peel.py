"""Peeling to the 2-core, with a removal trace and solution extension.

Peeling repeatedly removes a variable that occurs in at most one equation
(and that equation, if any); ties are broken by a caller-supplied priority
permutation.  What survives is the 2-core: the reduced system in which
every variable occurs in at least two equations.  The trace records, for
each removed variable, directed edges from the other variables of the
equation it was removed with, which bounds how far a changed value can
propagate when a core solution is extended back to a full one.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import FqlinError
from .ensemble import SparseLinearSystem, SparseRow


class CoreAssignmentInvalid(FqlinError, ValueError):
    pass


@dataclass
class PeelReport:
    core_rows: list[int]  # surviving row indices into system.rows, ascending
    core_cols: list[int]  # surviving variables (1-based), ascending
    reduced: SparseLinearSystem  # compact system; column j+1 is core_cols[j]
    n_star: int
    m_star: int
    removal_order: list[tuple[int, int | None]]  # (variable, row index or None)
    system: SparseLinearSystem  # the system that was peeled


@dataclass
class PeelTrace:
    pi: tuple[int, ...]  # pi[i-1] = priority of variable i (a bijection on 1..n)
    edges: list[tuple[int, int]]  # (x_j -> x_i): x_i removed from a row containing x_j
    indegree_zero: set[int]
    successors: dict[int, list[int]] = field(default_factory=dict)


@dataclass(frozen=True)
class FlippableCycle:
    """Degree-2 variables arranged in a closed chain of equations:
    variables[h] occurs exactly in rows[h] and rows[(h+1) % t]."""

    variables: tuple[int, ...]
    rows: tuple[int, ...]
    core_only: bool


@dataclass
class FlippableCycles:
    cycles: list[FlippableCycle]

    def __len__(self):
        return len(self.cycles)

    def variable_count(self, core_only: bool = False) -> int:
        seen: set[int] = set()
        for cyc in self.cycles:
            if core_only and not cyc.core_only:
                continue
            seen.update(cyc.variables)
        return len(seen)


def _identity_pi(n: int) -> tuple[int, ...]:
    return tuple(range(1, n + 1))


def peel(system: SparseLinearSystem, pi=None) -> tuple[PeelReport, PeelTrace]:
    """Reduce a system to its 2-core, recording the removal trace.

    pi maps each variable to its removal priority; among removable
    variables the one with the smallest priority goes first.  The core
    itself does not depend on pi.
    """
    n = system.n
    if pi is None:
        pi = _identity_pi(n)
    else:
        pi = tuple(int(x) for x in pi)
        if sorted(pi) != list(range(1, n + 1)):
            raise ValueError("pi must be a permutation of 1..n")

    incident: list[list[int]] = [[] for _ in range(n + 1)]
    for r, row in enumerate(system.rows):
        for v in row.positions:
            incident[v].append(r)
    degree = [len(incident[v]) for v in range(n + 1)]
    row_alive = [True] * system.m
    var_alive = [True] * (n + 1)

    heap = [(pi[v - 1], v) for v in range(1, n + 1) if degree[v] <= 1]
    heapq.heapify(heap)

    removal_order: list[tuple[int, int | None]] = []
    edges: list[tuple[int, int]] = []
    successors: dict[int, list[int]] = {}
    indeg = [0] * (n + 1)

    while heap:
        _, v = heapq.heappop(heap)
        if not var_alive[v] or degree[v] > 1:
            continue
        var_alive[v] = False
        if degree[v] == 0:
            removal_order.append((v, None))
            continue
        r = next(ri for ri in incident[v] if row_alive[ri])
        removal_order.append((v, r))
        row_alive[r] = False
        for u in system.rows[r].positions:
            if u == v:
                continue
            # u is still alive: dead variables cannot sit in a live row
            edges.append((u, v))
            successors.setdefault(u, []).append(v)
            indeg[v] += 1
            degree[u] -= 1
            if degree[u] <= 1:
                heapq.heappush(heap, (pi[u - 1], u))
        degree[v] = 0

    core_cols = [v for v in range(1, n + 1) if var_alive[v]]
    core_rows = [r for r in range(system.m) if row_alive[r]]
    col_of = {v: j + 1 for j, v in enumerate(core_cols)}
    reduced_rows = [
        SparseRow(
            tuple(col_of[v] for v in system.rows[r].positions),
            system.rows[r].coeffs,
            system.rows[r].rhs,
            system.rows[r].pinned,
        )
        for r in core_rows
    ]
    reduced = SparseLinearSystem(system.field, len(core_cols), system.k, reduced_rows)
    report = PeelReport(
        core_rows=core_rows,
        core_cols=core_cols,
        reduced=reduced,
        n_star=len(core_cols),
        m_star=len(core_rows),
        removal_order=removal_order,
        system=system,
    )
    trace = PeelTrace(
        pi=pi,
        edges=edges,
        indegree_zero={v for v in range(1, n + 1) if indeg[v] == 0},
        successors=successors,
    )
    return report, trace


def reachable(trace: PeelTrace, i: int) -> set[int]:
    """Variables reachable from x_i along trace edges, including x_i."""
    seen = {i}
    stack = [i]
    while stack:
        u = stack.pop()
        for w in trace.successors.get(u, ()):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def _degree2_multigraph(system: SparseLinearSystem):
    """Rows as nodes, variables of total degree exactly 2 as edges."""
    occ: dict[int, list[int]] = {}
    for r, row in enumerate(system.rows):
        for v in row.positions:
            occ.setdefault(v, []).append(r)
    adj: dict[int, list[tuple[int, int]]] = {}
    for v, rows in occ.items():
        if len(rows) == 2:
            r1, r2 = rows
            adj.setdefault(r1, []).append((r2, v))
            adj.setdefault(r2, []).append((r1, v))
    return adj


def find_flippable_cycles(system: SparseLinearSystem, report: PeelReport) -> FlippableCycles:
    """All simple cycles of the multigraph whose nodes are rows and whose
    edges are the degree-2 variables joining their two incident rows."""
    adj = _degree2_multigraph(system)

    # prune nodes that cannot lie on a cycle
    degree = {u: len(nb) for u, nb in adj.items()}
    stack = [u for u, d in degree.items() if d <= 1]
    dead = set()
    while stack:
        u = stack.pop()
        if u in dead or degree.get(u, 0) > 1:
            continue
        dead.add(u)
        for w, _ in adj.get(u, ()):
            if w not in dead:
                degree[w] -= 1
                if degree[w] <= 1:
                    stack.append(w)
    live_adj = {
        u: sorted((w, v) for w, v in nb if w not in dead)
        for u, nb in adj.items()
        if u not in dead
    }

    core = set(report.core_cols)
    found: set[frozenset[int]] = set()
    cycles: list[FlippableCycle] = []
    for start in sorted(live_adj):
        # depth-first path enumeration from `start` through nodes > start,
        # closing back at start; iterative to keep the stack flat
        path_rows = [start]
        path_vars: list[int] = []
        on_path = {start}
        used: set[int] = set()
        stack = [iter(live_adj[start])]
        while stack:
            advanced = False
            for w, v in stack[-1]:
                if v in used:
                    continue
                if w == start and path_vars:
                    key = frozenset(path_vars + [v])
                    if key not in found:
                        found.add(key)
                        # variables[h] joins rows[h] and rows[(h+1) % t]
                        vars_ordered = tuple(path_vars + [v])
                        cycles.append(
                            FlippableCycle(
                                variables=vars_ordered,
                                rows=tuple(path_rows),
                                core_only=all(x in core for x in vars_ordered),
                            )
                        )
                elif w > start and w not in on_path:
                    path_rows.append(w)
                    path_vars.append(v)
                    on_path.add(w)
                    used.add(v)
                    stack.append(iter(live_adj[w]))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                if path_vars:
                    on_path.discard(path_rows.pop())
                    used.discard(path_vars.pop())
    cycles.sort(key=lambda c: (len(c.rows), c.rows, c.variables))
    return FlippableCycles(cycles)


def extend_core_solution(
    report: PeelReport,
    trace: PeelTrace,
    x_core,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Extend an assignment on the core variables to the full system.

    Peeled variables are set in reverse removal order; one removed with an
    equation takes the unique value satisfying it, one removed free takes 0
    (or a uniform draw when rng is given).  Raises CoreAssignmentInvalid if
    x_core does not satisfy the reduced system.
    """
    system = report.system
    f = system.field
    q = f.q
    x = np.zeros(system.n, dtype=np.uint8)
    missing = [v for v in report.core_cols if v not in x_core]
    if missing:
        raise CoreAssignmentInvalid(f"assignment missing core variables {missing[:5]}")
    for v in report.core_cols:
        code = int(x_core[v])
        if not 0 <= code < q:
            raise CoreAssignmentInvalid(f"value {code} for x_{v} outside GF({q})")
        x[v - 1] = code
    for r in report.core_rows:
        row = system.rows[r]
        lhs = f.vdot(row.coeffs, x[np.array(row.positions) - 1])
        if lhs != row.rhs:
            raise CoreAssignmentInvalid(f"core assignment violates row {r}")

    for v, r in reversed(report.removal_order):
        if r is None:
            x[v - 1] = int(rng.integers(q)) if rng is not None else 0
            continue
        row = system.rows[r]
        acc = f.neg(row.rhs)
        coeff_v = 0
        for p, c in zip(row.positions, row.coeffs):
            if p == v:
                coeff_v = c
            else:
                acc = f.add(acc, f.mul(c, int(x[p - 1])))
        # coeff_v * x_v + acc + rhs-contribution = 0  =>  x_v = -acc / coeff_v
        x[v - 1] = f.mul(f.inv(coeff_v), f.neg(acc))
    return x
