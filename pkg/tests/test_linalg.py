import itertools
import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, strategies as st

from fqlin.ensemble import EnsembleParams, SparseRow, sample_planted, sample_system
from fqlin.gf import make_field
from fqlin.linalg import (
    KernelBasis,
    LengthMismatch,
    NoSolution,
    decompose_kernel,
    eliminate,
    matvec,
    overlap,
    overlap_tv,
    pinning_symmetry_experiment,
    sample_kernel_uniform,
    symmetry_defect,
)

from util import (
    all_vectors,
    brute_kernel,
    brute_row_span_size,
    brute_solutions,
    check_solution,
    random_sparse_system,
    system_from_rows,
)


def test_identity_two_by_two():
    s = system_from_rows(2, 2, [((1,), (1,), 1), ((2,), (1,), 0)])
    res = eliminate(s)
    assert (res.rank, res.nullity, res.solvable) == (2, 0, True)
    assert tuple(res.basis.particular) == (1, 0)
    assert res.basis.vectors.shape == (0, 2)


def test_conflicting_duplicate_rows_unsolvable():
    s = system_from_rows(3, 3, [((1, 2, 3), (1, 1, 1), 0), ((1, 2, 3), (1, 1, 1), 1)])
    res = eliminate(s)
    assert res.rank == 1 and not res.solvable
    assert res.basis.particular is None


def test_empty_system():
    s = system_from_rows(5, 4, [])
    res = eliminate(s)
    assert res.rank == 0 and res.nullity == 4 and res.solvable
    assert res.basis.vectors.shape == (4, 4)
    assert tuple(res.basis.particular) == (0, 0, 0, 0)


def test_rank_matches_row_span_enumeration_over_gf4():
    rng = np.random.default_rng(44)
    s = random_sparse_system(rng, 4, 8, 6, max_weight=4)
    res = eliminate(s, with_basis=False)
    size = brute_row_span_size(s)
    assert size == 4**res.rank


@pytest.mark.parametrize("q", [2, 3, 4, 5, 8, 9])
def test_rank_matches_row_span_enumeration(q):
    rng = np.random.default_rng(q)
    for _ in range(3):
        s = random_sparse_system(rng, q, 6, 5)
        res = eliminate(s, with_basis=False)
        assert brute_row_span_size(s) == q**res.rank


def test_rank_and_solvability_are_column_order_independent():
    rng = np.random.default_rng(5)
    for q in (2, 3, 4):
        for _ in range(5):
            s = random_sparse_system(rng, q, 10, 8)
            base = eliminate(s, with_basis=False)
            perm = rng.permutation(10) + 1
            relabel = {i + 1: int(perm[i]) for i in range(10)}
            rows = []
            for row in s.rows:
                pairs = sorted((relabel[p], c) for p, c in zip(row.positions, row.coeffs))
                rows.append(
                    SparseRow(tuple(p for p, _ in pairs), tuple(c for _, c in pairs), row.rhs)
                )
            shuffled = system_from_rows(q, 10, [(r.positions, r.coeffs, r.rhs) for r in rows])
            other = eliminate(shuffled, with_basis=False)
            assert (base.rank, base.solvable) == (other.rank, other.solvable)


@given(
    q=st.sampled_from([2, 3, 4, 5, 9]),
    n=st.integers(1, 7),
    m=st.integers(0, 8),
    seed=st.integers(0, 10_000),
)
def test_elimination_against_brute_force(q, n, m, seed):
    if q**n > 20_000:
        n = 4
    rng = np.random.default_rng(seed)
    s = random_sparse_system(rng, q, n, m)
    res = eliminate(s)
    assert res.rank + res.nullity == n
    sols = brute_solutions(s)
    assert res.solvable == bool(sols)
    if sols:
        assert len(sols) == q**res.nullity
        assert check_solution(s, res.basis.particular)
    kernel = brute_kernel(s)
    assert len(kernel) == q**res.nullity
    for v in res.basis.vectors:
        assert not matvec(s, v).any()
    # the basis spans the kernel: all combinations land inside and are distinct
    span = set()
    f = s.field
    for coeffs in all_vectors(q, res.basis.vectors.shape[0]):
        x = np.zeros(n, dtype=np.int64)
        for c, vec in zip(coeffs, res.basis.vectors):
            x = f.vadd(x, f.vmul_scalar(int(c), vec))
        span.add(tuple(int(t) for t in x))
    assert span == set(kernel)


def test_large_gf2_system_consistency():
    s = sample_system(EnsembleParams(q=2, k=3, n=300, d=2.5, seed=1))
    res = eliminate(s)
    assert res.rank + res.nullity == 300
    for v in res.basis.vectors[:10]:
        assert not matvec(s, v).any()
    if res.solvable:
        assert check_solution(s, res.basis.particular)


def test_matvec_matches_naive_loop():
    rng = np.random.default_rng(2)
    s = random_sparse_system(rng, 9, 12, 10)
    f = s.field
    x = rng.integers(9, size=12)
    expected = []
    for row in s.rows:
        acc = 0
        for p, c in zip(row.positions, row.coeffs):
            acc = f.add(acc, f.mul(c, int(x[p - 1])))
        expected.append(acc)
    assert matvec(s, x).tolist() == expected


def test_matvec_length_mismatch():
    s = system_from_rows(2, 3, [((1, 2, 3), (1, 1, 1), 0)])
    with pytest.raises(LengthMismatch):
        matvec(s, np.zeros(4, dtype=np.uint8))


# --- kernel sampling ------------------------------------------------------


def test_sampling_unsolvable_raises():
    s = system_from_rows(2, 2, [((1,), (1,), 0), ((1,), (1,), 1)])
    res = eliminate(s)
    with pytest.raises(NoSolution):
        sample_kernel_uniform(res.basis, 0)


def test_sampling_with_zero_nullity_returns_the_solution():
    s = system_from_rows(3, 2, [((1,), (1,), 2), ((2,), (1,), 1)])
    basis = eliminate(s).basis
    for seed in range(5):
        assert tuple(sample_kernel_uniform(basis, seed)) == (2, 1)


def test_sampling_nullity_one_is_fair():
    s = system_from_rows(2, 2, [((1, 2), (1, 1), 0)])
    basis = eliminate(s).basis
    rng = np.random.default_rng(31)
    hits = sum(int(sample_kernel_uniform(basis, rng)[0]) for _ in range(10_000))
    sigma = math.sqrt(10_000 * 0.25)
    assert abs(hits - 5000) <= 3 * sigma


def test_sampling_uniform_over_27_solutions():
    s = system_from_rows(3, 3, [])  # kernel is all of GF(3)^3
    basis = eliminate(s).basis
    rng = np.random.default_rng(7)
    counts: dict[tuple, int] = {}
    for _ in range(100_000):
        x = tuple(sample_kernel_uniform(basis, rng))
        counts[x] = counts.get(x, 0) + 1
    assert len(counts) == 27
    assert scipy.stats.chisquare(list(counts.values())).pvalue > 0.001


def test_sampling_respects_affine_shift():
    rng = np.random.default_rng(8)
    s = random_sparse_system(rng, 4, 8, 5)
    res = eliminate(s)
    if not res.solvable:
        pytest.skip("instance not solvable")
    for seed in range(20):
        assert check_solution(s, sample_kernel_uniform(res.basis, seed))


# --- kernel decomposition --------------------------------------------------


def test_identity_matrix_freezes_everything():
    s = system_from_rows(3, 4, [((i,), (1,), 0) for i in range(1, 5)])
    dec = decompose_kernel(eliminate(s).basis)
    assert dec.frozen == [1, 2, 3, 4]
    assert dec.classes == []
    assert symmetry_defect(dec) == 0.0


def test_empty_matrix_gives_singleton_classes():
    s = system_from_rows(2, 2, [])
    dec = decompose_kernel(eliminate(s).basis)
    assert dec.frozen == []
    assert dec.classes == [[1], [2]]
    assert symmetry_defect(dec) == 0.0


def test_proportional_pair_class():
    # x1 + x2 = 0 over GF(2): kernel {(0,0),(1,1)}, one class of size 2
    s = system_from_rows(2, 2, [((1, 2), (1, 1), 0)])
    dec = decompose_kernel(eliminate(s).basis)
    assert dec.frozen == []
    assert dec.classes == [[1, 2]]
    assert dec.scalars == {1: 1, 2: 1}
    assert symmetry_defect(dec) == 0.5


def _brute_decomposition(system):
    """Classes from the enumerated kernel: frozen coordinates, then
    proportionality classes with their scalars."""
    f = system.field
    q = f.q
    kernel = np.array(brute_kernel(system), dtype=np.uint8)
    n = system.n
    frozen = [i + 1 for i in range(n) if not kernel[:, i].any()]
    classes: list[list[int]] = []
    scalars: dict[int, int] = {}
    assigned = set(frozen)
    for i in range(1, n + 1):
        if i in assigned:
            continue
        cls = [i]
        scalars[i] = 1
        assigned.add(i)
        for j in range(i + 1, n + 1):
            if j in assigned:
                continue
            for s in range(1, q):
                if all(x[j - 1] == f.mul(s, int(x[i - 1])) for x in kernel):
                    cls.append(j)
                    scalars[j] = s
                    assigned.add(j)
                    break
        classes.append(cls)
    return frozen, classes, scalars


@pytest.mark.parametrize("q", [2, 3, 4, 5])
def test_decomposition_matches_kernel_enumeration(q):
    rng = np.random.default_rng(q * 17)
    done = 0
    while done < 8:
        s = random_sparse_system(rng, q, int(rng.integers(3, 8)), int(rng.integers(1, 7)))
        res = eliminate(s)
        if res.nullity > 6:
            continue
        dec = decompose_kernel(res.basis)
        frozen, classes, scalars = _brute_decomposition(s)
        assert dec.frozen == frozen
        assert dec.classes == classes
        assert dec.scalars == scalars
        done += 1


@pytest.mark.parametrize("q", [2, 3, 4])
def test_decomposition_statistics_under_uniform_kernel_draws(q):
    # (i) frozen coordinates are 0; (ii) in-class coordinates are exact
    # multiples with uniform marginals; (iii) cross-class pairs are uniform
    # on the q x q grid.  All checked by enumerating the kernel.
    rng = np.random.default_rng(q * 31)
    done = 0
    while done < 5:
        s = random_sparse_system(rng, q, int(rng.integers(4, 8)), int(rng.integers(2, 6)))
        res = eliminate(s)
        if not 1 <= res.nullity <= 6:
            continue
        kernel = np.array(brute_kernel(s), dtype=np.uint8)
        dec = decompose_kernel(res.basis)
        f = s.field
        for i in dec.frozen:
            assert not kernel[:, i - 1].any()
        for cls in dec.classes:
            rep = cls[0]
            for j in cls:
                sj = dec.scalars[j]
                assert all(x[j - 1] == f.mul(sj, int(x[rep - 1])) for x in kernel)
                values, counts = np.unique(kernel[:, j - 1], return_counts=True)
                assert len(values) == q and len(set(counts)) == 1
        flat = [(u, i) for u, cls in enumerate(dec.classes) for i in cls]
        for (u, i), (v, j) in itertools.combinations(flat, 2):
            if u == v:
                continue
            pair_counts = np.zeros((q, q))
            for x in kernel:
                pair_counts[x[i - 1], x[j - 1]] += 1
            assert (pair_counts == len(kernel) / q**2).all()
        done += 1


def _brute_symmetry_defect(system):
    kernel = np.array(brute_kernel(system), dtype=np.uint8)
    q = system.field.q
    n = system.n
    z = len(kernel)
    total = 0.0
    for i, j in itertools.combinations(range(n), 2):
        joint = np.zeros((q, q))
        for x in kernel:
            joint[x[i], x[j]] += 1.0 / z
        prod = np.outer(joint.sum(axis=1), joint.sum(axis=0))
        total += 0.5 * np.abs(joint - prod).sum()
    return total


@pytest.mark.parametrize("q", [2, 3, 4])
def test_symmetry_defect_matches_brute_force(q):
    rng = np.random.default_rng(q * 7)
    done = 0
    while done < 6:
        s = random_sparse_system(rng, q, int(rng.integers(3, 7)), int(rng.integers(1, 6)))
        res = eliminate(s)
        if res.nullity > 6:
            continue
        dec = decompose_kernel(res.basis)
        assert symmetry_defect(dec) == pytest.approx(_brute_symmetry_defect(s), abs=1e-9)
        done += 1


# --- pinning ----------------------------------------------------------------


def test_pinning_with_t_one_reports_the_unpinned_indicator():
    s = system_from_rows(2, 6, [])  # all singleton classes, defect 0
    assert pinning_symmetry_experiment(s, T=1, epsilon=0.01, trials=20, seed=0) == 1.0
    # a single giant class: x1 = x2 = ... = x6, defect (1/2) C(6,2) = 7.5
    chain = system_from_rows(2, 6, [((i, i + 1), (1, 1), 0) for i in range(1, 6)])
    assert pinning_symmetry_experiment(chain, T=1, epsilon=7.5 / 36 - 0.01, trials=20, seed=0) == 0.0
    assert pinning_symmetry_experiment(chain, T=1, epsilon=7.5 / 36 + 0.01, trials=20, seed=0) == 1.0


def test_pinning_trivial_kernel_is_always_symmetric():
    s = system_from_rows(2, 50, [])
    assert pinning_symmetry_experiment(s, T=10, epsilon=0.05, trials=50, seed=1) == 1.0


def test_pinning_makes_sparse_systems_symmetric():
    s = sample_system(EnsembleParams(q=2, k=3, n=400, d=2.5, seed=12))
    frac = pinning_symmetry_experiment(s, T=64, epsilon=0.05, trials=100, seed=3)
    assert frac >= 0.9


# --- overlaps ----------------------------------------------------------------


def test_overlap_of_zero_vectors():
    om = overlap(np.zeros(4, dtype=np.uint8), np.zeros(4, dtype=np.uint8), 2)
    assert om.freq.tolist() == [[1.0, 0.0], [0.0, 0.0]]
    assert overlap_tv(om) == pytest.approx(0.75)


def test_overlap_of_balanced_vectors_is_uniform():
    x = np.array([0, 0, 1, 1], dtype=np.uint8)
    xp = np.array([0, 1, 0, 1], dtype=np.uint8)
    assert overlap_tv(overlap(x, xp, 2)) == 0.0


def test_overlap_matches_counting_oracle():
    rng = np.random.default_rng(3)
    x, xp = rng.integers(3, size=(2, 9)).astype(np.uint8)
    om = overlap(x, xp, 3)
    for s in range(3):
        for t in range(3):
            assert om.counts[s, t] == sum(1 for a, b in zip(x, xp) if (a, b) == (s, t))
    assert om.counts.sum() == 9
    assert (om.counts * 9 % 9 == 0).all()


def test_overlap_shape_checks():
    with pytest.raises(LengthMismatch):
        overlap(np.zeros(3, dtype=np.uint8), np.zeros(4, dtype=np.uint8), 2)
    with pytest.raises(LengthMismatch):
        overlap(np.zeros(0, dtype=np.uint8), np.zeros(0, dtype=np.uint8), 2)


# --- planted-draw statistics -------------------------------------------------


def test_planted_conditional_distribution_is_uniform_on_solutions():
    # condition planted draws on the rhs: counts within each solution set
    # must look uniform (smoke version of the acceptance test)
    p = EnsembleParams(q=2, k=3, n=8, d=2.0, seed=6)
    system = sample_system(p)
    rng = np.random.default_rng(9)
    counts: dict[tuple, int] = {}
    draws = 30_000
    for _ in range(draws):
        x = rng.integers(2, size=8).astype(np.uint8)
        counts[tuple(x)] = counts.get(tuple(x), 0) + 1
    by_rhs: dict[tuple, list[int]] = {}
    for x, c in counts.items():
        y = tuple(matvec(system, np.array(x, dtype=np.uint8)))
        by_rhs.setdefault(y, []).append(c)
    stat = 0.0
    dof = 0
    for cells in by_rhs.values():
        expected = sum(cells) / len(cells)
        stat += sum((c - expected) ** 2 / expected for c in cells)
        dof += len(cells) - 1
    assert scipy.stats.chi2.sf(stat, dof) > 0.001


def test_first_moment_of_solution_counts():
    # fixed m: the average number of solutions over sampled (A, y) equals
    # q^(n-m) up to Monte Carlo error
    q, n, m, trials = 2, 7, 4, 2000
    zs = []
    for seed in range(trials):
        s = sample_system(EnsembleParams(q=q, k=3, n=n, d=1.0, seed=seed), m=m)
        res = eliminate(s, with_basis=False)
        zs.append(q**res.nullity if res.solvable else 0)
    zs = np.array(zs, dtype=float)
    target = q ** (n - m)
    se = zs.std(ddof=1) / math.sqrt(trials)
    assert abs(zs.mean() - target) <= 3 * se
