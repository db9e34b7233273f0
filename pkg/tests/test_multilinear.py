import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from frobcurrents.multilinear import (
    MultiCovector,
    MultiVector,
    SubspaceBasis,
    basis_tuples,
    pair,
    project,
    simple,
    span,
    wedge,
    wedge_all,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def graded(draw, cls=MultiVector, n=None, h=None):
    n = draw(st.integers(1, 6)) if n is None else n
    h = draw(st.integers(0, n)) if h is None else h
    coeffs = draw(arrays(float, comb(n, h), elements=finite))
    return cls(n, h, coeffs)


@st.composite
def graded_pair(draw, cls=MultiVector):
    n = draw(st.integers(2, 6))
    p = draw(st.integers(0, n))
    q = draw(st.integers(0, n - p))
    return draw(graded(cls, n, p)), draw(graded(cls, n, q))


def test_basis_wedge():
    e = [MultiVector.basis(3, (i,)) for i in (1, 2, 3)]
    w = wedge(e[0], e[1])
    assert w.as_dict() == {(1, 2): 1.0}


def test_wedge_self_vanishes():
    a = MultiVector.from_vector([1.0, 1.0, 0.0])
    assert not np.any(wedge(a, a).coeffs)


def test_wedge_bilinear_example():
    a = MultiVector.from_vector([2.0, 0, 0])
    b = MultiVector.from_vector([0, 3.0, 0])
    assert wedge(a, b)[(1, 2)] == 6.0


def test_wedge_errors():
    with pytest.raises(ValueError, match="grade overflow"):
        wedge(MultiVector.basis(3, (1, 2)), MultiVector.basis(3, (1, 3)))
    with pytest.raises(ValueError, match="dimension"):
        wedge(MultiVector.basis(3, (1,)), MultiVector.basis(4, (1,)))
    with pytest.raises(TypeError):
        wedge(MultiVector.basis(3, (1,)), MultiCovector.basis(3, (2,)))


def test_pair_examples():
    e12 = MultiVector.basis(3, (1, 2))
    assert pair(e12, MultiCovector.basis(3, (1, 2))) == 1.0
    assert pair(e12, MultiCovector.basis(3, (1, 3))) == 0.0
    w = e12 * 2 + MultiVector.basis(3, (1, 3))
    assert pair(w, MultiCovector.basis(3, (1, 3))) == 1.0


def test_pair_errors():
    with pytest.raises(ValueError, match="grade"):
        pair(MultiVector.basis(3, (1,)), MultiCovector.basis(3, (1, 2)))
    with pytest.raises(ValueError, match="dimension"):
        pair(MultiVector.basis(3, (1,)), MultiCovector.basis(4, (1,)))


def test_basis_sorting_sign():
    assert MultiVector.basis(3, (2, 1))[(1, 2)] == -1.0
    assert not np.any(MultiVector.basis(3, (2, 2)).coeffs)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_pairing_duality_exact(n):
    for h in range(n + 1):
        for I in basis_tuples(n, h):
            for J in basis_tuples(n, h):
                assert pair(MultiVector.basis(n, I), MultiCovector.basis(n, J)) == float(I == J)


@settings(max_examples=200, deadline=None)
@given(graded_pair())
def test_anticommutativity(ab):
    a, b = ab
    left, right = wedge(a, b).coeffs, (-1) ** (a.h * b.h) * wedge(b, a).coeffs
    assert np.allclose(left, right, rtol=0, atol=1e-12 * max(1.0, np.abs(left).max(initial=0)))


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_associativity(data):
    n = data.draw(st.integers(3, 6))
    p = data.draw(st.integers(0, n))
    q = data.draw(st.integers(0, n - p))
    r = data.draw(st.integers(0, n - p - q))
    a, b, c = (data.draw(graded(MultiVector, n, g)) for g in (p, q, r))
    left = wedge(wedge(a, b), c).coeffs
    right = wedge(a, wedge(b, c)).coeffs
    assert np.allclose(left, right, atol=1e-12 * max(1.0, np.abs(left).max(initial=0)))


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_simple_pairing_is_determinant(data):
    n = data.draw(st.integers(2, 6))
    k = data.draw(st.integers(1, n))
    vs = data.draw(arrays(float, (k, n), elements=finite))
    cs = data.draw(arrays(float, (k, n), elements=finite))
    w = wedge_all(MultiVector.from_vector(v) for v in vs)
    omega = wedge_all(MultiCovector.from_vector(c) for c in cs)
    hadamard = np.prod(np.linalg.norm(vs, axis=1)) * np.prod(np.linalg.norm(cs, axis=1))
    assert pair(w, omega) == pytest.approx(np.linalg.det(vs @ cs.T), abs=1e-9 + 1e-12 * hadamard)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_simple_norm_is_gram_volume(data):
    n = data.draw(st.integers(2, 6))
    k = data.draw(st.integers(1, n))
    vs = data.draw(arrays(float, (k, n), elements=finite))
    # product of singular values; sqrt(det(Gram)) loses digits near rank deficiency
    vol = float(np.prod(np.linalg.svd(vs, compute_uv=False)))
    assert simple(vs).norm() == pytest.approx(vol, abs=1e-9)


def test_span_examples():
    w = MultiVector.basis(3, (1, 2))
    B = span(w)
    assert B.m == 2
    assert np.allclose(B.projector(), np.diag([1.0, 1.0, 0.0]), atol=1e-12)
    assert span(MultiVector.basis(4, (1, 2)) + MultiVector.basis(4, (3, 4))).m == 4
    b = span(MultiVector.from_vector([0, 3.0, 0]))
    assert b.m == 1 and np.allclose(np.abs(b.vectors[0]), [0, 1, 0])
    with pytest.raises(ValueError):
        span(MultiVector.zero(3, 2))


def test_span_of_non_simple_matches_contraction_rank():
    # brute-force oracle: rank of the matrix of all contractions, computed independently
    rng = np.random.default_rng(3)
    for _ in range(20):
        n, h = 5, 2
        w = MultiVector(n, h, rng.normal(size=comb(n, h)))
        A = np.zeros((n, n))
        for (i, j), c in w.as_dict().items():
            A[i - 1, j - 1] += c
            A[j - 1, i - 1] -= c
        assert span(w).m == np.linalg.matrix_rank(A, tol=1e-9 * np.abs(A).max())


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_span_of_simple(data):
    n = data.draw(st.integers(2, 6))
    k = data.draw(st.integers(1, n))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    vs = rng.normal(size=(k, n))
    B = span(simple(vs))
    assert B.m == k
    for v in vs:
        assert np.allclose(project(v, B), v, atol=1e-10)


def test_project_examples():
    plane = SubspaceBasis(3, np.eye(3)[:2])
    assert np.allclose(project([0, 0, 1.0], plane), 0)
    z = np.array([0.3, -2.0, 5.0])
    assert np.allclose(project(z, SubspaceBasis(3, np.eye(3))), z)
    assert np.allclose(project([1.0, 1.0, 0], SubspaceBasis(3, np.eye(3)[:1])), [1, 0, 0])
    with pytest.raises(ValueError):
        project([1.0, 2.0], plane)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_project_idempotent(data):
    n = data.draw(st.integers(1, 6))
    m = data.draw(st.integers(0, n))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    B = SubspaceBasis.from_spanning(rng.normal(size=(max(m, 1), n))) if m else SubspaceBasis(n, np.zeros((0, n)))
    z = rng.normal(size=n)
    once = project(z, B)
    assert np.allclose(project(once, B), once, atol=1e-12)


def test_subspace_basis_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        SubspaceBasis(3, [[1.0, 0, 0], [1.0, 1.0, 0]])


def test_arithmetic_and_equality():
    a = MultiVector.basis(3, (1, 2))
    b = MultiVector.basis(3, (2, 3))
    assert (a + b) - b == a
    assert -a == a * -1
    assert (a * 4) / 2 == a * 2
    assert len({a, a * 1.0}) == 1
    assert (a + b).norm() == pytest.approx(np.sqrt(2))
    assert a.allclose(a + MultiVector.basis(3, (1, 3)) * 1e-14)
    assert list(itertools.islice(basis_tuples(4, 2), 3)) == [(1, 2), (1, 3), (1, 4)]
