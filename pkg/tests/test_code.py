import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from lpjd.code import (ParityCheckCode, codewords, gen_regular_code, gf2_nullspace, in_relaxed_polytope,
                       is_codeword, lcp_constraints, lcp_matrix, lcp_rows, project_q,
                       random_codeword_fixed_weight, read_alist, spc, write_alist)
from lpjd.trellis import build_trellis, make_dicode

from oracles import all_bit_vectors


def test_regular_155_code():
    code = gen_regular_code(155, 3, 5, seed=7)
    assert code.m == 93
    H = code.H
    assert np.all(H.sum(axis=0) == 3) and np.all(H.sum(axis=1) == 5)
    assert not code.has_4cycle()
    assert np.max(H.astype(int) @ H.T.astype(int) - np.diag(np.full(93, 5))) <= 1


def test_regular_generator_edge_cases():
    assert gen_regular_code(5, 1, 5, seed=0).checks == spc(5).checks
    assert gen_regular_code(60, 3, 5, seed=4).checks == gen_regular_code(60, 3, 5, seed=4).checks
    with pytest.raises(ValueError):
        gen_regular_code(7, 3, 5)
    with pytest.raises(RuntimeError, match="seed=3"):
        gen_regular_code(10, 3, 5, seed=3, max_restarts=5)


def test_small_fragment_code_allows_4cycles():
    code = gen_regular_code(10, 3, 5, seed=1, avoid_4cycles=False)
    H = code.H
    assert np.all(H.sum(axis=0) == 3) and np.all(H.sum(axis=1) == 5)


def test_is_codeword_examples():
    code = spc(3)
    assert is_codeword(code, [0, 1, 1])
    assert not is_codeword(code, [1, 1, 1])
    assert is_codeword(gen_regular_code(20, 3, 5, seed=0), np.zeros(20, dtype=int))
    with pytest.raises(ValueError):
        is_codeword(code, [0, 1])
    assert {tuple(c) for c in codewords(code)} == {(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0)}


def test_codewords_match_exhaustive():
    code = gen_regular_code(10, 3, 5, seed=2, avoid_4cycles=False)
    brute = {tuple(v) for v in all_bit_vectors(10) if is_codeword(code, v)}
    assert {tuple(c) for c in codewords(code)} == brute
    G = gf2_nullspace(code.H)
    assert np.all((code.H.astype(int) @ G.T.astype(int)) % 2 == 0)


def test_lcp_rows_counts_and_examples():
    assert len(list(lcp_rows(range(5)))) == 16
    code = spc(3)
    A, b = lcp_matrix(code)
    assert len(A) == 4
    assert np.all(A @ np.array([0.5, 0.5, 0.0]) <= b)
    row = [k for k, (S, _) in enumerate(lcp_rows((0, 1, 2))) if len(S) == 3][0]
    assert A[row] @ np.ones(3) == 3 and b[row] == 2
    with pytest.raises(ValueError):
        list(lcp_rows(range(20), max_degree=16))
    assert len(lcp_constraints(code)) == 4 + 6


def test_codewords_inside_relaxation():
    code = gen_regular_code(10, 3, 5, seed=5, avoid_4cycles=False)
    for v in all_bit_vectors(10):
        assert in_relaxed_polytope(code, v) == is_codeword(code, v)


def test_integral_vertices_are_codewords():
    # enumerate vertices of the SPC(3,2) relaxation via every 3-subset of active rows
    A, b = lcp_matrix(spc(3))
    A = np.vstack([A, np.eye(3), -np.eye(3)])
    b = np.concatenate([b, np.ones(3), np.zeros(3)])
    verts = set()
    for rows in itertools.combinations(range(len(A)), 3):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + 1e-9):
            verts.add(tuple(np.round(x, 9)))
    integral = {v for v in verts if all(c in (0.0, 1.0) for c in v)}
    assert integral == {(0.0, 0.0, 0.0), (0.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, 0.0)}


def test_project_q():
    tr = build_trellis(make_dicode(), 6)
    zero = tr.path_flow(tr.path_for_bits(np.zeros(6, dtype=int)))
    assert np.array_equal(project_q(tr, zero), np.zeros(6))
    rng = np.random.default_rng(0)
    paths = [tr.path_flow(tr.path_for_bits(rng.integers(0, 2, 6))) for _ in range(2)]
    a = 0.3
    mixed = project_q(tr, a * paths[0] + (1 - a) * paths[1])
    assert np.allclose(mixed, a * project_q(tr, paths[0]) + (1 - a) * project_q(tr, paths[1]))
    assert np.all((mixed >= 0) & (mixed <= 1))
    with pytest.raises(ValueError):
        project_q(tr, np.zeros(3))


def test_fixed_weight_codewords():
    code = spc(3)
    assert np.array_equal(random_codeword_fixed_weight(code, 0, seed=1), np.zeros(3))
    for s in range(20):
        assert tuple(random_codeword_fixed_weight(code, 2, seed=s)) in {(0, 1, 1), (1, 0, 1), (1, 1, 0)}
    big = gen_regular_code(60, 3, 5, seed=1)
    for s in range(1000):
        c = random_codeword_fixed_weight(big, 30, seed=s)
        assert c.sum() == 30 and is_codeword(big, c)
    with pytest.raises(ValueError):
        random_codeword_fixed_weight(code, 3, seed=0)


@pytest.mark.parametrize("n", [5, 18])  # exhaustive path, then basis-rejection path
def test_fixed_weight_sampler_is_uniform(n):
    code = spc(n)
    pairs = list(itertools.combinations(range(n), 2))
    counts = dict.fromkeys(pairs, 0)
    draws = 10 * len(pairs)
    for s in range(draws):
        counts[tuple(np.flatnonzero(random_codeword_fixed_weight(code, 2, seed=s)))] += 1
    assert chisquare(list(counts.values())).pvalue > 1e-3


def test_alist_round_trip(tmp_path):
    code = gen_regular_code(60, 3, 5, seed=9)
    path = tmp_path / "c.alist"
    write_alist(code, path)
    assert read_alist(path).checks == code.checks
    # unpadded variant of an irregular code
    irregular = ParityCheckCode(4, ((0, 1, 2), (2, 3)))
    text = "4 2\n2 3\n1 1 2 1\n3 2\n1\n1\n1 2\n2\n1 2 3\n3 4\n"
    (tmp_path / "u.alist").write_text(text)
    assert read_alist(tmp_path / "u.alist").checks == irregular.checks
    write_alist(irregular, tmp_path / "p.alist")
    assert read_alist(tmp_path / "p.alist").checks == irregular.checks


def test_alist_bad_row(tmp_path):
    (tmp_path / "b.alist").write_text("3 1\n1 3\n1 1 1\n3\n1\n1\n1\n1 2 0\n")
    with pytest.raises(ValueError):
        read_alist(tmp_path / "b.alist")


def test_check_validation():
    with pytest.raises(ValueError):
        ParityCheckCode(3, ((0, 0, 1),))
    with pytest.raises(ValueError):
        ParityCheckCode(3, ((0, 3),))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=5, max_size=5))
def test_relaxation_membership_matches_rows(f):
    code = spc(5)
    A, b = lcp_matrix(code)
    assert in_relaxed_polytope(code, f) == bool(np.all(A @ np.array(f) <= b + 1e-9))
