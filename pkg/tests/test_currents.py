import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from frobcurrents.currents import (
    Cell,
    DiffuseCurrent,
    SimplicialCurrent,
    boundary,
    boundary_pair,
    box_mesh,
    comass_bound,
    evaluate_current,
    load_mesh,
    mass,
    save_mesh,
    simplex_rule,
    stokes_defect,
    support_samples,
    tangency,
    torus_mesh,
    unit_square,
)
from frobcurrents.fieldlang import Box, FrameField, coordinate_frame, heisenberg_frame
from frobcurrents.forms import DiffForm

CUBE = Box.cube(3)


def triangle():
    return SimplicialCurrent(3, 2, [[0, 0, 0], [1, 0, 0], [0, 1, 0]], [Cell((0, 1, 2))])


def test_triangle_boundary():
    dT = boundary(triangle())
    assert set(dT.face_weights().values()) == {0}
    assert {c.ids: c.weight for c in dT.cells} == {(1, 2): 1, (0, 2): -1, (0, 1): 1}
    assert len(boundary(dT).cells) == 0


def test_square_boundary_cancels_diagonal():
    dT = boundary(unit_square(1))
    assert len(dT.cells) == 4
    mids = dT.barycenters
    assert not np.any(np.all(np.isclose(mids[:, :2], 0.5), axis=1))
    assert mass(dT) == pytest.approx(4.0)
    assert all(c.theta == 2 for c in boundary(unit_square(1, theta=2)).cells)


def test_mass_examples():
    assert mass(unit_square(3)) == pytest.approx(1.0, abs=1e-14)
    assert mass(unit_square(3, theta=2)) == pytest.approx(2.0, abs=1e-14)
    T = DiffuseCurrent(2, coordinate_frame(2, 3, CUBE), "1", CUBE, 4)
    assert mass(T) == pytest.approx(1.0, abs=1e-14)


def test_evaluate_examples():
    T = unit_square(2)
    assert evaluate_current(T, DiffForm.basis(3, (1, 2))) == pytest.approx(1.0, abs=1e-14)
    assert evaluate_current(T, DiffForm.basis(3, (1, 3))) == 0.0
    assert evaluate_current(T, DiffForm.basis(3, (1, 2), "x1")) == pytest.approx(0.5, abs=1e-14)
    with pytest.raises(ValueError):
        evaluate_current(T, DiffForm.basis(3, (1,)))


def test_evaluate_against_scipy_integral():
    T = unit_square(16)
    omega = DiffForm.basis(3, (1, 2), "exp(x1)*sin(3*x2)")
    want, _ = integrate.dblquad(lambda y, x: np.exp(x) * np.sin(3 * y), 0, 1, 0, 1)
    assert evaluate_current(T, omega) == pytest.approx(want, rel=1e-4)


def test_affine_integrands_exact_at_order_two():
    T = box_mesh((0.0, 0.0, 0.0), (1.0, 2.0, 1.0), (1, 2, 1))
    omega = DiffForm.basis(3, (1, 2, 3), "1 + 2*x1 - x2 + 3*x3")
    # integral over [0,1]x[0,2]x[0,1] of the affine density
    assert evaluate_current(T, omega, order=2) == pytest.approx(2.0 + 2.0 - 2.0 + 3.0, abs=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_simplex_rule_exact_for_quadratics(k):
    pts, w = simplex_rule(k, 2)
    assert w.sum() == pytest.approx(1.0)
    # exact monomial integrals over the unit simplex, normalized by its volume
    from math import factorial

    for a in range(3):
        for b in range(3 - a):
            got = np.sum(w * pts[:, 0] ** a * (pts[:, 1] ** b if k > 1 else (1.0 if b == 0 else 0.0)))
            if k == 1 and b:
                continue
            want = factorial(a) * factorial(b) * factorial(k) / factorial(a + b + k)
            assert got == pytest.approx(want, abs=1e-14)


def test_boundary_pair_examples():
    T = unit_square(1)
    psi = DiffForm.basis(3, (2,), "x")
    a, b = stokes_defect(T, psi)
    assert a == pytest.approx(1.0, abs=1e-14) and b == pytest.approx(1.0, abs=1e-14)
    assert boundary_pair(T, DiffForm.basis(3, (3,))) == 0.0
    torus = torus_mesh()
    assert len(boundary(torus).cells) == 0
    assert boundary_pair(torus, DiffForm(3, 1, {(1,): "x*z^2", (2,): "sin(x)"})) == pytest.approx(0.0, abs=1e-12)


def test_diffuse_boundary_pair_of_exact_form():
    T = DiffuseCurrent(2, heisenberg_frame(), "exp(-(x^2 + y^2 + z^2))", Box.cube(3, -1, 1), 3)
    assert boundary_pair(T, DiffForm.basis(3, (3,))) == 0.0


def _graph_surface(res):
    # z = sin(x) cos(y) over [0,1]^2
    def embed(p):
        return np.column_stack([p, np.sin(p[:, 0]) * np.cos(p[:, 1])])

    return box_mesh((0.0, 0.0), (1.0, 1.0), res, embed, 3)


def test_discrete_stokes_converges():
    psi = DiffForm(3, 1, {(1,): "cos(2*y)*z", (2,): "exp(x)*z", (3,): "x*y^2"})
    defects = []
    for res in (2, 4, 8, 16):
        a, b = stokes_defect(_graph_surface(res), psi)
        defects.append(abs(a - b))
    ratios = [defects[i] / defects[i + 1] for i in range(len(defects) - 1)]
    assert all(r >= 1.8 for r in ratios), (defects, ratios)


def test_orientations_and_volumes():
    T = box_mesh((0.0, 0.0), (2.0, 3.0), (2, 3))
    assert np.allclose(T.volumes.sum(), 6.0)
    assert np.allclose(T.orientations, [[1.0]] * len(T.cells))


def test_tangency_examples():
    T = unit_square(2)
    assert tangency(T, coordinate_frame(2, 3, CUBE)).passed
    xz = FrameField.parse([["1", "0", "0"], ["0", "0", "1"]], CUBE)
    rep = tangency(T, xz)
    assert not rep.passed and rep.max_residual == pytest.approx(np.sqrt(2))
    assert len(rep.offending) == len(T.cells)
    edge = SimplicialCurrent(3, 1, [[0, 0, 0], [1, 0, 0]], [Cell((0, 1))])
    rep = tangency(edge, coordinate_frame(2, 3, CUBE))
    assert rep.passed and rep.mode == "containment"
    assert not tangency(edge, FrameField.parse([["0", "1", "0"], ["0", "0", "1"]], CUBE)).passed


def test_tangency_of_frame_current_is_exact():
    T = DiffuseCurrent(2, heisenberg_frame(), "1", Box.cube(3, -1, 1), 3)
    assert tangency(T, heisenberg_frame()).max_residual < 1e-12


def test_support_samples():
    assert np.allclose(support_samples(triangle()), [[1 / 3, 1 / 3, 0.0]])
    box = Box.cube(3, -1.0, 1.0)
    T = DiffuseCurrent(2, heisenberg_frame(), "((1 - x^2)*(1 - y^2)*(1 - z^2))^2*(x - 0.1)^2", box, 4)
    pts = support_samples(T)
    assert len(pts) == 64
    half = DiffuseCurrent(2, heisenberg_frame(), "0*x", box, 4)
    assert len(support_samples(half)) == 0
    assert len(support_samples(SimplicialCurrent(3, 2, np.zeros((0, 3)), ()))) == 0


def test_diffuse_validation():
    with pytest.raises(ValueError, match="negative"):
        DiffuseCurrent(2, heisenberg_frame(), "x", Box.cube(3, -1, 1), 2)
    with pytest.raises(ValueError, match="unit"):
        DiffuseCurrent(2, lambda p: np.tile([2.0, 0.0, 0.0], (len(p), 1)), "1", CUBE, 2)


def test_cell_validation():
    with pytest.raises(ValueError):
        Cell((0, 1, 2), theta=0)
    with pytest.raises(ValueError):
        Cell((0, 1, 2), sign=2)
    with pytest.raises(ValueError, match="degenerate"):
        SimplicialCurrent(2, 2, [[0, 0], [1, 0], [2, 0]], [Cell((0, 1, 2))])


def test_mesh_round_trip(tmp_path):
    T = unit_square(2, theta=3).reversed()
    path = tmp_path / "mesh.json"
    save_mesh(T, path)
    data = json.loads(path.read_text())
    assert set(data) == {"n", "k", "vertices", "cells"}
    assert set(data["cells"][0]) == {"ids", "sign", "theta"}
    U = load_mesh(path)
    omega = DiffForm.basis(3, (1, 2), "x1 + x2^2")
    assert evaluate_current(U, omega) == evaluate_current(T, omega)


# --- property tests ---------------------------------------------------------------


@st.composite
def random_mesh(draw):
    k = draw(st.integers(1, 3))
    n = draw(st.integers(k, 4))
    res = draw(st.lists(st.integers(1, 3), min_size=k, max_size=k))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(k, n))

    def embed(p):
        return p @ A + 0.1 * np.sin(p.sum(axis=1, keepdims=True)) * np.ones((1, n))

    T = box_mesh(np.zeros(k), np.ones(k), res, embed, n)
    mask = rng.random(len(T.cells)) < 0.7
    if not mask.any():
        mask[0] = True
    T = T.subset(mask)
    thetas = rng.integers(1, 4, size=len(T.cells))
    flips = rng.choice([-1, 1], size=len(T.cells))
    cells = tuple(Cell(c.ids, int(c.sign * f), int(t)) for c, f, t in zip(T.cells, flips, thetas))
    return SimplicialCurrent(n, k, T.vertices, cells)


@settings(max_examples=100, deadline=None)
@given(random_mesh())
def test_boundary_of_boundary_vanishes(T):
    if T.k >= 2:
        assert boundary(boundary(T)).cells == ()
    else:
        assert sum(c.weight for c in boundary(T).cells) == 0


def _random_form(n, h, rng):
    from frobcurrents.multilinear import basis_tuples

    coeffs = {}
    for key in basis_tuples(n, h):
        a, b, c = rng.normal(size=3)
        coeffs[key] = f"({a})*sin(x1 + ({b})*x{n}) + ({c})"
    return DiffForm(n, h, coeffs)


@settings(max_examples=100, deadline=None)
@given(random_mesh(), st.integers(0, 2**32 - 1))
def test_mass_bounds_pairing(T, seed):
    omega = _random_form(T.n, T.k, np.random.default_rng(seed))
    from frobcurrents.currents import cell_quadrature

    pts = cell_quadrature(T, 2)[0].reshape(-1, T.n)
    assert abs(evaluate_current(T, omega)) <= mass(T) * comass_bound(omega, pts) * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(random_mesh(), st.integers(0, 2**32 - 1))
def test_orientation_flip(T, seed):
    omega = _random_form(T.n, T.k, np.random.default_rng(seed))
    assert evaluate_current(T.reversed(), omega) == -evaluate_current(T, omega)
    assert mass(T.reversed()) == mass(T)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(0.5, 2))
def test_diffuse_flip_and_linearity(c, s):
    box = Box.cube(3, -1, 1)
    T = DiffuseCurrent(2, heisenberg_frame(), "1 + x^2", box, 3)
    omega = DiffForm(3, 2, {(1, 2): f"{c} + z", (2, 3): "x*y"})
    assert evaluate_current(T.reversed(), omega) == -evaluate_current(T, omega)
    assert mass(T.reversed()) == mass(T)
    assert evaluate_current(T, omega.scale(s)) == pytest.approx(s * evaluate_current(T, omega), rel=1e-12, abs=1e-14)
