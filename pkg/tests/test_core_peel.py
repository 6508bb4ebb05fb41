import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fqlin.analytic import core_size_fractions
from fqlin.core_peel import (
    CoreAssignmentInvalid,
    PeelTrace,
    extend_core_solution,
    find_flippable_cycles,
    peel,
    reachable,
)
from fqlin.ensemble import EnsembleParams, SparseRow, pin_indices, sample_planted, sample_system
from fqlin.linalg import eliminate, matvec

from util import check_solution, system_from_rows


def test_degree_two_everywhere_survives():
    s = system_from_rows(2, 3, [((1, 2, 3), (1, 1, 1), 0), ((1, 2, 3), (1, 1, 1), 1)])
    report, trace = peel(s)
    assert report.core_cols == [1, 2, 3]
    assert report.core_rows == [0, 1]
    assert report.removal_order == []
    assert report.reduced.rows[0].positions == (1, 2, 3)


def test_single_row_peels_to_nothing():
    s = system_from_rows(2, 3, [((1, 2, 3), (1, 1, 1), 1)])
    report, trace = peel(s)
    assert report.n_star == 0 and report.m_star == 0
    with_rows = [(v, r) for v, r in report.removal_order if r is not None]
    assert with_rows == [(1, 0)]  # smallest-priority variable takes the row
    assert len(report.removal_order) == 3


def test_core_does_not_depend_on_priorities():
    rng = np.random.default_rng(0)
    for seed in range(10):
        s = sample_system(EnsembleParams(q=2, k=3, n=60, d=2.6, seed=seed))
        base, _ = peel(s)
        for _ in range(3):
            pi = (rng.permutation(s.n) + 1).tolist()
            rep, _ = peel(s, pi)
            assert rep.core_cols == base.core_cols
            assert rep.core_rows == base.core_rows


def test_bad_priority_vector_rejected():
    s = system_from_rows(2, 3, [((1, 2, 3), (1, 1, 1), 0)])
    with pytest.raises(ValueError):
        peel(s, [1, 1, 2])


def test_core_sizes_match_predictions():
    n, seeds = 1500, 5
    n_frac, m_frac = core_size_fractions(3, 2.6)
    ns, ms = [], []
    for seed in range(seeds):
        s = sample_system(EnsembleParams(q=2, k=3, n=n, d=2.6, seed=seed))
        report, _ = peel(s)
        ns.append(report.n_star / n)
        ms.append(report.m_star / n)
    assert abs(np.mean(ns) - n_frac) < 0.03
    assert abs(np.mean(ms) - m_frac) < 0.03


def test_core_empty_below_emergence_density():
    # d = 1.5 sits below the core-emergence density for k = 3
    nonempty = 0
    for seed in range(40):
        s = sample_system(EnsembleParams(q=2, k=3, n=2000, d=1.5, seed=seed))
        report, _ = peel(s)
        nonempty += report.n_star > 0
    assert nonempty / 40 <= 0.05


def test_removal_order_covers_non_core_variables_once():
    s = sample_system(EnsembleParams(q=3, k=3, n=80, d=2.4, seed=2))
    report, _ = peel(s)
    removed = [v for v, _ in report.removal_order]
    assert sorted(removed + report.core_cols) == list(range(1, 81))


def test_pinned_rows_peel_as_weight_one_rows():
    s = system_from_rows(2, 4, [((1, 2, 3), (1, 1, 1), 0)])
    s = pin_indices(s, [1])
    report, _ = peel(s)
    # x1 now has degree 2 but x2, x3 unravel everything
    assert report.n_star == 0
    assert len(report.removal_order) == 4


# --- trace / reachability ------------------------------------------------


def test_reachable_on_empty_digraph():
    s = system_from_rows(2, 4, [])
    report, trace = peel(s)
    assert trace.edges == []
    assert reachable(trace, 2) == {2}
    assert trace.indegree_zero == {1, 2, 3, 4}


def test_reachable_chain():
    trace = PeelTrace(pi=(1, 2, 3), edges=[(1, 2), (2, 3)], indegree_zero={1}, successors={1: [2], 2: [3]})
    assert reachable(trace, 1) == {1, 2, 3}
    assert reachable(trace, 2) == {2, 3}
    assert reachable(trace, 3) == {3}


def _closure_oracle(n, edges):
    """Transitive closure by boolean matrix powering."""
    adj = np.eye(n, dtype=bool)
    for u, v in edges:
        adj[u - 1, v - 1] = True
    for _ in range(int(np.ceil(np.log2(max(n, 2))))):
        adj = (adj.astype(np.int64) @ adj.astype(np.int64)) > 0
    return adj


def test_reachable_matches_matrix_powering():
    for seed in range(5):
        s = sample_system(EnsembleParams(q=2, k=3, n=40, d=2.5, seed=seed))
        _, trace = peel(s)
        closure = _closure_oracle(s.n, trace.edges)
        for i in range(1, s.n + 1):
            assert reachable(trace, i) == {j + 1 for j in np.nonzero(closure[i - 1])[0]}


def test_reachability_is_monotone_under_edges():
    s = sample_system(EnsembleParams(q=2, k=3, n=60, d=2.5, seed=9))
    _, trace = peel(s)
    for i in range(1, s.n + 1):
        r_i = reachable(trace, i)
        for j in r_i:
            assert reachable(trace, j) <= r_i


def test_edge_targets_are_removed_variables():
    s = sample_system(EnsembleParams(q=2, k=3, n=50, d=2.3, seed=5))
    report, trace = peel(s)
    removed_with_row = {v for v, r in report.removal_order if r is not None}
    for u, v in trace.edges:
        assert v in removed_with_row
    indeg = {v: 0 for v in range(1, s.n + 1)}
    for _, v in trace.edges:
        indeg[v] += 1
    assert trace.indegree_zero == {v for v, c in indeg.items() if c == 0}


# --- restriction ---------------------------------------------------------


def test_full_solution_restricts_to_core_solution():
    for seed in range(5):
        p = EnsembleParams(q=3, k=3, n=300, d=2.6, seed=seed)
        system, hidden = sample_planted(p)
        report, _ = peel(system)
        restricted = hidden[np.array(report.core_cols, dtype=np.int64) - 1]
        rhs = np.array([row.rhs for row in report.reduced.rows], dtype=np.uint8)
        assert (matvec(report.reduced, restricted) == rhs).all()


# --- flippable cycles ------------------------------------------------------


def test_two_rows_sharing_two_degree2_variables():
    s = system_from_rows(2, 4, [((1, 2, 3), (1, 1, 1), 0), ((1, 2, 4), (1, 1, 1), 0)])
    report, _ = peel(s)
    cycles = find_flippable_cycles(s, report)
    assert len(cycles) == 1
    cyc = cycles.cycles[0]
    assert sorted(cyc.variables) == [1, 2]
    assert sorted(cyc.rows) == [0, 1]
    assert cycles.variable_count() == 2


def test_tree_incidence_has_no_cycles():
    s = system_from_rows(2, 5, [((1, 2, 3), (1, 1, 1), 0), ((3, 4, 5), (1, 1, 1), 0)])
    report, _ = peel(s)
    assert len(find_flippable_cycles(s, report)) == 0


def test_parallel_edges_count_pairwise():
    # three degree-2 variables joining the same two rows: C(3,2) cycles
    rows = [((1, 2, 3, 7), (1, 1, 1, 1), 0), ((1, 2, 3, 8), (1, 1, 1, 1), 0)]
    s = system_from_rows(2, 8, rows, k=4)
    report, _ = peel(s)
    cycles = find_flippable_cycles(s, report)
    assert len(cycles) == 3
    assert cycles.variable_count() == 3


def _is_flippable_set(occ, subset):
    """Literal definition check for a candidate variable set."""
    rows: dict[int, int] = {}
    for v in subset:
        for r in occ[v]:
            rows[r] = rows.get(r, 0) + 1
    if len(rows) != len(subset):
        return False
    if any(c != 2 for c in rows.values()):
        return False
    # connectivity of the variable/row incidence graph
    seen = {subset[0]}
    frontier = [subset[0]]
    subset_set = set(subset)
    while frontier:
        v = frontier.pop()
        for r in occ[v]:
            for w in subset_set:
                if w not in seen and r in occ[w]:
                    seen.add(w)
                    frontier.append(w)
    return seen == subset_set


def _cycle_oracle_count(system):
    occ: dict[int, list[int]] = {}
    for r, row in enumerate(system.rows):
        for v in row.positions:
            occ.setdefault(v, []).append(r)
    deg2 = [v for v, rows in occ.items() if len(rows) == 2]
    count = 0
    for size in range(2, len(deg2) + 1):
        for subset in itertools.combinations(deg2, size):
            if _is_flippable_set(occ, subset):
                count += 1
    return count


def test_cycles_match_subset_definition_oracle():
    checked = 0
    for seed in range(60):
        s = sample_system(EnsembleParams(q=2, k=3, n=18, d=2.8, seed=seed))
        occ: dict[int, list[int]] = {}
        for r, row in enumerate(s.rows):
            for v in row.positions:
                occ.setdefault(v, []).append(r)
        if sum(1 for v in occ.values() if len(v) == 2) > 14:
            continue  # keep the 2^|deg2| oracle affordable
        report, _ = peel(s)
        cycles = find_flippable_cycles(s, report)
        assert len(cycles) == _cycle_oracle_count(s)
        checked += 1
    assert checked >= 30


def test_reported_cycles_satisfy_the_definition():
    for seed in range(8):
        s = sample_system(EnsembleParams(q=3, k=3, n=500, d=2.5, seed=seed))
        report, _ = peel(s)
        occ: dict[int, list[int]] = {}
        for r, row in enumerate(s.rows):
            for v in row.positions:
                occ.setdefault(v, []).append(r)
        core = set(report.core_cols)
        for cyc in find_flippable_cycles(s, report).cycles:
            t = len(cyc.variables)
            assert len(set(cyc.rows)) == t
            assert len(set(cyc.variables)) == t
            for h, v in enumerate(cyc.variables):
                incident = {cyc.rows[h], cyc.rows[(h + 1) % t]}
                assert set(occ[v]) == incident  # exactly its two cycle rows
            assert cyc.core_only == all(v in core for v in cyc.variables)


# --- extension -------------------------------------------------------------


def test_extend_single_equation():
    s = system_from_rows(2, 3, [((1, 2, 3), (1, 1, 1), 1)])
    report, trace = peel(s)
    x = extend_core_solution(report, trace, {})
    assert tuple(x) == (1, 0, 0)
    assert check_solution(s, x)


def test_extend_with_whole_system_as_core():
    s = system_from_rows(2, 3, [((1, 2, 3), (1, 1, 1), 0), ((1, 2, 3), (1, 1, 1), 0)])
    report, trace = peel(s)
    x = extend_core_solution(report, trace, {1: 1, 2: 1, 3: 0})
    assert tuple(x) == (1, 1, 0)


def test_extend_random_systems_agree_with_elimination():
    for seed in range(6):
        s = sample_system(EnsembleParams(q=3, k=3, n=200, d=2.0, seed=seed))
        report, trace = peel(s)
        res = eliminate(report.reduced)
        assert res.solvable  # d = 2.0 leaves an empty core almost surely
        x_core = {v: int(res.basis.particular[j]) for j, v in enumerate(report.core_cols)}
        x = extend_core_solution(report, trace, x_core)
        assert check_solution(s, x)
        assert eliminate(s, with_basis=False).solvable


def test_extend_with_rng_still_solves():
    s = sample_system(EnsembleParams(q=5, k=3, n=100, d=1.8, seed=3))
    report, trace = peel(s)
    res = eliminate(report.reduced)
    x_core = {v: int(res.basis.particular[j]) for j, v in enumerate(report.core_cols)}
    rng = np.random.default_rng(0)
    x = extend_core_solution(report, trace, x_core, rng=rng)
    assert check_solution(s, x)


def test_extend_rejects_bad_core_assignment():
    s = system_from_rows(2, 3, [((1, 2, 3), (1, 1, 1), 0), ((1, 2, 3), (1, 1, 1), 0)])
    report, trace = peel(s)
    with pytest.raises(CoreAssignmentInvalid):
        extend_core_solution(report, trace, {1: 1, 2: 0, 3: 0})  # violates the rows
    with pytest.raises(CoreAssignmentInvalid):
        extend_core_solution(report, trace, {1: 0})  # missing variables


@given(seed=st.integers(0, 5000), q=st.sampled_from([2, 3, 4]), d=st.floats(0.5, 3.2))
def test_peel_then_eliminate_matches_direct_elimination(seed, q, d):
    s = sample_system(EnsembleParams(q=q, k=3, n=40, d=d, seed=seed))
    report, _ = peel(s)
    direct = eliminate(s, with_basis=False)
    core = eliminate(report.reduced, with_basis=False)
    assert direct.solvable == core.solvable
    assert direct.rank == (s.m - report.m_star) + core.rank
