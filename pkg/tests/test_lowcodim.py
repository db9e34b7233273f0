import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from frobcurrents.fieldlang import Box
from frobcurrents.lowcodim import (
    EdgeFlow,
    GridFunction,
    PathAtom,
    check_flow_decomposition,
    coarea_decompose,
    flow_decompose,
    grid_graph,
    load_flow,
    load_grid_function,
    random_grid_flow,
    recompose,
)

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def test_four_cycle_is_one_atom():
    flow = EdgeFlow(SQUARE, ((0, 1), (1, 2), (2, 3), (3, 0)), (Fraction(1),) * 4)
    atoms = flow_decompose(flow)
    assert len(atoms) == 1
    assert atoms[0].closed and atoms[0].weight == 1
    assert check_flow_decomposition(flow, atoms, True).passed


def test_single_path():
    flow = EdgeFlow(SQUARE[:3], ((0, 1), (1, 2)), (Fraction(2), Fraction(2)))
    atoms = flow_decompose(flow)
    assert len(atoms) == 1 and not atoms[0].closed
    assert atoms[0].nodes == (0, 1, 2) and atoms[0].weight == 2
    assert sum(a.mass(flow) for a in atoms) == flow.mass() == 4
    assert atoms[0].boundary_mass() == 4
    assert flow.divergence() == [-2, 0, 2]


def test_edges_against_their_orientation():
    flow = EdgeFlow(SQUARE[:3], ((1, 0), (2, 1)), (Fraction(-1), Fraction(-1)))
    atoms = flow_decompose(flow)
    assert atoms[0].nodes == (0, 1, 2)
    assert [d for _, d in atoms[0].edges] == [-1, -1]
    assert recompose(atoms, 2, True) == list(flow.weights)


def test_zero_flow_has_no_atoms():
    flow = EdgeFlow(SQUARE, ((0, 1),), (Fraction(0),))
    assert flow_decompose(flow) == []


def test_atom_validation():
    with pytest.raises(ValueError):
        PathAtom((0, 1), ((0, 1),), 0, False)
    with pytest.raises(ValueError):
        PathAtom((0, 1, 2), ((0, 1), (1, 1)), 1, True)
    with pytest.raises(ValueError):
        EdgeFlow(SQUARE, ((0, 0),), (1.0,))


def test_grid_flow_on_four_by_four():
    rng = np.random.default_rng(11)
    flow = random_grid_flow(4, 4, rng)
    assert all(d == 0 for d in flow.divergence())
    atoms = flow_decompose(flow)
    rep = check_flow_decomposition(flow, atoms, True)
    assert rep.passed and rep.recomposition_error == 0
    assert rep.mass_atoms == rep.mass_flow
    assert rep.atoms <= len(grid_graph(4, 4)[1])


def test_float_mode():
    rng = np.random.default_rng(5)
    base = random_grid_flow(5, 6, rng, sources=3)
    scale = rng.uniform(0.1, 2.0, size=len(base.edges))
    flow = EdgeFlow(base.positions, base.edges, tuple(float(w) * s for w, s in zip(base.weights, scale)))
    atoms = flow_decompose(flow, rational=False)
    rep = check_flow_decomposition(flow, atoms, False)
    assert rep.passed and not rep.exact
    assert rep.recomposition_error <= 1e-10


def test_flow_json_round_trip(tmp_path):
    flow = EdgeFlow(SQUARE, ((0, 1), (1, 2)), (Fraction(1, 3), Fraction(2)))
    path = tmp_path / "flow.json"
    path.write_text(json.dumps(flow.to_json()))
    back = load_flow(path, rational=True)
    assert back.weights == flow.weights and back.edges == flow.edges
    assert json.loads(path.read_text())["edges"][0]["weight"] == "1/3"


@st.composite
def random_flow(draw):
    nodes = draw(st.integers(2, 8))
    pairs = st.tuples(st.integers(0, nodes - 1), st.integers(0, nodes - 1)).filter(lambda p: p[0] != p[1])
    edges = draw(st.lists(pairs, min_size=1, max_size=16))
    weights = draw(st.lists(st.fractions(-5, 5, max_denominator=6), min_size=len(edges), max_size=len(edges)))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    return EdgeFlow(rng.normal(size=(nodes, 2)), tuple(edges), tuple(weights))


@settings(max_examples=300, deadline=None)
@given(random_flow())
def test_flow_decomposition_properties(flow):
    atoms = flow_decompose(flow)
    assert recompose(atoms, len(flow.edges), True) == [Fraction(w) for w in flow.weights]
    assert sum((a.mass(flow) for a in atoms), Fraction(0)) == flow.mass()
    assert len(atoms) <= len(flow.edges)
    assert all(a.weight > 0 for a in atoms)
    for a in atoms:
        for (e, direction), u, v in zip(a.edges, a.nodes, a.nodes[1:]):
            assert flow.edges[e] == ((u, v) if direction > 0 else (v, u))
    # no atom boundary exceeds what the divergence requires
    assert sum((a.boundary_mass() for a in atoms), Fraction(0)) == flow.boundary_mass()


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**32 - 1), st.integers(0, 4))
def test_random_grid_flows(rows, cols, seed, sources):
    flow = random_grid_flow(rows, cols, np.random.default_rng(seed), sources=sources)
    rep = check_flow_decomposition(flow, flow_decompose(flow), True)
    assert rep.passed


# --- coarea --------------------------------------------------------------------------


def test_linear_function_levels():
    u = GridFunction.from_expr("x", 101)
    dec = coarea_decompose(u, 100)
    assert np.allclose(dec.lengths, 1.0, atol=1e-12)
    assert dec.coarea_sum == pytest.approx(1.0, abs=1e-12)
    assert u.total_variation() == pytest.approx(1.0, abs=1e-12)
    assert dec.closed_or_boundary


def test_constant_function_is_empty():
    dec = coarea_decompose(GridFunction.from_expr("3", 10), 5)
    assert len(dec.levels) == 0 and dec.total_variation == 0.0 and dec.identity_error == 0.0


def _cone_tv_oracle():
    # |grad u| for u = |x - c| by central differences of the closed form, integrated by scipy
    c = np.array([0.5, 0.5])

    def grad_norm(y, x):
        h = 1e-6
        f = lambda a, b: np.hypot(a - c[0], b - c[1])  # noqa: E731
        gx = (f(x + h, y) - f(x - h, y)) / (2 * h)
        gy = (f(x, y + h) - f(x, y - h)) / (2 * h)
        return np.hypot(gx, gy)

    val, _ = integrate.dblquad(grad_norm, 0, 1, 0, 1, epsabs=1e-6)
    return val


def test_cone_levels_are_circles_within_two_percent():
    ref = _cone_tv_oracle()
    assert ref == pytest.approx(1.0, abs=1e-4)
    dec = coarea_decompose(GridFunction.cone((0.5, 0.5), 256), 4 * 256)
    assert dec.relative_error(ref) <= 0.02
    assert dec.closed_or_boundary
    # a level below the inscribed radius is a single closed circle
    i = int(np.searchsorted(dec.levels, 0.25))
    (line,) = dec.chains[i]
    assert np.allclose(line[0], line[-1])
    assert dec.lengths[i] == pytest.approx(2 * np.pi * dec.levels[i], rel=1e-3)


def test_smooth_function_identity_converges():
    errors = []
    for samples in (33, 65, 129, 257):
        u = GridFunction.from_expr("sin(2*x)*cos(y) + x^2", samples)
        errors.append(coarea_decompose(u, samples - 1).identity_error)
    ratios = [a / b for a, b in zip(errors, errors[1:])]
    assert all(r >= 1.5 for r in ratios), (errors, ratios)


def test_grid_function_validation_and_io(tmp_path):
    with pytest.raises(ValueError):
        GridFunction(np.zeros(4), Box.cube(2))
    with pytest.raises(ValueError):
        GridFunction(np.array([[0.0, np.nan], [1.0, 1.0]]), Box.cube(2))
    u = GridFunction.from_expr("x*y", (5, 7), Box((0.0, -1.0), (2.0, 1.0)))
    assert u.values[4, 0] == pytest.approx(2.0 * -1.0)
    js = tmp_path / "u.json"
    js.write_text(json.dumps(u.to_json()))
    assert np.array_equal(load_grid_function(js).values, u.values)
    assert load_grid_function(js).box == u.box
    csv_path = tmp_path / "u.csv"
    np.savetxt(csv_path, u.values, delimiter=",")
    back = load_grid_function(csv_path, u.box)
    assert np.allclose(back.values, u.values)
    with pytest.raises(ValueError):
        coarea_decompose(u, 0)
