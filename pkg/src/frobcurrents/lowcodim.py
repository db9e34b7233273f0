"""Low-codimension decompositions: edge flows (normal 1-currents on graphs) into
weighted paths and cycles, and grid functions in the plane into weighted level lines."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from skimage.measure import find_contours

from .expr import evaluate, parse_expr
from .fieldlang import Box


def _number(value, rational: bool):
    if isinstance(value, str):
        value = Fraction(value)
    if rational:
        return Fraction(value)
    return float(value)


# --- edge flows -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EdgeFlow:
    """Directed graph with real edge weights; weight w on (a, b) carries w from a to b."""

    positions: np.ndarray
    edges: tuple[tuple[int, int], ...]
    weights: tuple

    def __post_init__(self) -> None:
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        object.__setattr__(self, "weights", tuple(self.weights))
        if len(self.edges) != len(self.weights):
            raise ValueError("one weight per edge is required")
        for a, b in self.edges:
            if not (0 <= a < len(pos) and 0 <= b < len(pos)) or a == b:
                raise ValueError(f"bad edge ({a}, {b})")
        for w in self.weights:
            if not math.isfinite(float(w)):
                raise ValueError("edge weights must be finite")

    @property
    def rational(self) -> bool:
        return all(isinstance(w, (Fraction, int)) for w in self.weights)

    def as_rational(self) -> "EdgeFlow":
        return EdgeFlow(self.positions, self.edges, tuple(Fraction(w) for w in self.weights))

    @property
    def num_nodes(self) -> int:
        return len(self.positions)

    def lengths(self, exact: bool = False) -> list:
        out = [float(np.linalg.norm(self.positions[b] - self.positions[a])) for a, b in self.edges]
        return [Fraction(x) for x in out] if exact else out

    def divergence(self) -> list:
        """inflow - outflow per node, in the weights' own arithmetic."""
        zero = Fraction(0) if self.rational else 0.0
        div = [zero] * self.num_nodes
        for (a, b), w in zip(self.edges, self.weights):
            div[b] += w
            div[a] -= w
        return div

    def mass(self):
        exact = self.rational
        return _sum(abs(w) * l for w, l in zip(self.weights, self.lengths(exact)))

    def boundary_mass(self):
        return _sum(abs(d) for d in self.divergence())

    def to_json(self) -> dict:
        return {
            "nodes": [{"pos": p.tolist()} for p in self.positions],
            "edges": [
                {"from": a, "to": b, "weight": _json_number(w)} for (a, b), w in zip(self.edges, self.weights)
            ],
        }

    @classmethod
    def from_json(cls, data: dict, rational: bool = False) -> "EdgeFlow":
        pos = [node["pos"] for node in data["nodes"]]
        edges = [(e["from"], e["to"]) for e in data["edges"]]
        weights = [_number(e["weight"], rational) for e in data["edges"]]
        return cls(np.array(pos, dtype=float), tuple(edges), tuple(weights))


def _json_number(w):
    if isinstance(w, Fraction):
        return w.numerator if w.denominator == 1 else f"{w.numerator}/{w.denominator}"
    return w


def _sum(values):
    values = list(values)
    if values and all(isinstance(v, (Fraction, int)) for v in values):
        return sum(values, Fraction(0))
    return math.fsum(float(v) for v in values)


def load_flow(path, rational: bool = False) -> EdgeFlow:
    return EdgeFlow.from_json(json.loads(Path(path).read_text()), rational)


@dataclass(frozen=True)
class PathAtom:
    """A path or cycle through ``nodes``; ``edges`` holds (edge index, +1 along / -1 against)."""

    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    weight: object
    closed: bool

    def __post_init__(self) -> None:
        if not self.weight > 0:
            raise ValueError("atom weight must be positive")
        if len(self.edges) != len(self.nodes) - 1:
            raise ValueError("a walk through m+1 nodes has m edges")
        if self.closed and self.nodes[0] != self.nodes[-1]:
            raise ValueError("a cycle must return to its first node")

    def edge_vector(self, num_edges: int) -> list:
        zero = Fraction(0) if isinstance(self.weight, Fraction) else 0.0
        out = [zero] * num_edges
        for e, direction in self.edges:
            out[e] += direction * self.weight
        return out

    def mass(self, flow: EdgeFlow):
        lengths = flow.lengths(isinstance(self.weight, Fraction))
        return self.weight * _sum(lengths[e] for e, _ in self.edges)

    def boundary_mass(self):
        return 0 * self.weight if self.closed else 2 * self.weight

    def to_json(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "closed": self.closed,
            "weight": _json_number(self.weight),
        }


def flow_decompose(flow: EdgeFlow, rational: bool | None = None, zero_tol: float = 1e-12) -> list[PathAtom]:
    """Greedy bottleneck decomposition into source-to-sink paths, then cycles.

    Every edge is traversed in the direction of its current residual sign, so
    atoms never cancel each other and masses add up.
    """
    if rational is None:
        rational = flow.rational
    if rational:
        r = [Fraction(w) for w in flow.weights]
        eps = Fraction(0)
    else:
        r = [float(w) for w in flow.weights]
        eps = zero_tol * max((abs(w) for w in r), default=0.0)
    m, nv = len(r), flow.num_nodes
    incident: list[list[int]] = [[] for _ in range(nv)]
    for e, (a, b) in enumerate(flow.edges):
        incident[a].append(e)
        incident[b].append(e)

    def clean(e: int) -> None:
        if abs(r[e]) <= eps:
            r[e] = 0 * r[e]

    def out_step(node: int):
        """Lowest-index edge leaving ``node`` along its residual sign."""
        for e in incident[node]:
            if r[e] == 0:
                continue
            a, b = flow.edges[e]
            if r[e] > 0 and a == node:
                return e, 1, b
            if r[e] < 0 and b == node:
                return e, -1, a
        return None

    def excess(node: int):
        total = 0 * r[0] if r else 0
        for e in incident[node]:
            a, b = flow.edges[e]
            if a == node:
                total += r[e]
            if b == node:
                total -= r[e]
        return total if abs(total) > eps else 0 * total

    atoms: list[PathAtom] = []

    def take(nodes, steps, weight, closed) -> None:
        for e, direction in steps:
            r[e] -= direction * weight
            clean(e)
        atoms.append(PathAtom(tuple(nodes), tuple(steps), weight, closed))

    def walk(start: int, stop_at_sink: bool) -> None:
        nodes, steps, seen = [start], [], {start: 0}
        node = start
        while True:
            step = out_step(node)
            if step is None:
                raise RuntimeError(f"walk stuck at node {node}")  # cannot happen: flow conservation
            e, direction, nxt = step
            steps.append((e, direction))
            nodes.append(nxt)
            if nxt in seen:
                i = seen[nxt]
                cyc_nodes, cyc_steps = nodes[i:], steps[i:]
                weight = min(abs(r[c]) for c, _ in cyc_steps)
                take(cyc_nodes, cyc_steps, weight, True)
                return
            seen[nxt] = len(nodes) - 1
            node = nxt
            if stop_at_sink and excess(node) < 0:
                weight = min([abs(r[c]) for c, _ in steps] + [excess(start), -excess(node)])
                take(nodes, steps, weight, False)
                return

    while True:
        sources = [v for v in range(nv) if excess(v) > 0]
        if not sources:
            break
        walk(sources[0], True)
    while True:
        live = [e for e in range(m) if r[e] != 0]
        if not live:
            break
        a, b = flow.edges[live[0]]
        walk(a if r[live[0]] > 0 else b, False)
    return atoms


def recompose(atoms: Sequence[PathAtom], num_edges: int, rational: bool = False) -> list:
    total = [Fraction(0) if rational else 0.0] * num_edges
    for atom in atoms:
        for i, w in enumerate(atom.edge_vector(num_edges)):
            total[i] += w
    return total


@dataclass(frozen=True)
class FlowReport:
    atoms: int
    edges: int
    paths: int
    cycles: int
    recomposition_error: float
    mass_flow: object
    mass_atoms: object
    boundary_mass_atoms: object
    exact: bool

    @property
    def mass_error(self) -> float:
        return float(abs(self.mass_flow - self.mass_atoms))

    @property
    def passed(self) -> bool:
        if self.exact:
            ok = self.recomposition_error == 0 and self.mass_flow == self.mass_atoms
        else:
            scale = max(1.0, float(self.mass_flow))
            ok = self.recomposition_error <= 1e-10 * scale and self.mass_error <= 1e-10 * scale
        return ok and self.atoms <= self.edges

    def to_json(self) -> dict:
        return {
            "atoms": self.atoms,
            "edges": self.edges,
            "paths": self.paths,
            "cycles": self.cycles,
            "atom_bound_ok": self.atoms <= self.edges,
            "recomposition_error": float(self.recomposition_error),
            "mass_flow": _json_number(self.mass_flow) if self.exact else float(self.mass_flow),
            "mass_atoms": _json_number(self.mass_atoms) if self.exact else float(self.mass_atoms),
            "mass_error": self.mass_error,
            "boundary_mass_atoms": float(self.boundary_mass_atoms),
            "exact": self.exact,
            "passed": self.passed,
        }


def check_flow_decomposition(flow: EdgeFlow, atoms: Sequence[PathAtom], rational: bool) -> FlowReport:
    if rational:
        flow = flow.as_rational()
    total = recompose(atoms, len(flow.edges), rational)
    err = max((abs(t - w) for t, w in zip(total, flow.weights)), default=0)
    return FlowReport(
        atoms=len(atoms),
        edges=len(flow.edges),
        paths=sum(not a.closed for a in atoms),
        cycles=sum(a.closed for a in atoms),
        recomposition_error=err if rational else float(err),
        mass_flow=flow.mass(),
        mass_atoms=_sum(a.mass(flow) for a in atoms),
        boundary_mass_atoms=_sum(a.boundary_mass() for a in atoms),
        exact=rational,
    )


def grid_graph(rows: int, cols: int) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Nodes of a rows x cols lattice with unit spacing; edges point in +x1 and +x2."""
    pos = np.array([(i, j) for i in range(rows) for j in range(cols)], dtype=float)
    edges = []
    for i in range(rows):
        for j in range(cols):
            v = i * cols + j
            if i + 1 < rows:
                edges.append((v, v + cols))
            if j + 1 < cols:
                edges.append((v, v + 1))
    return pos, edges


def random_grid_flow(
    rows: int,
    cols: int,
    rng: np.random.Generator,
    max_weight: int = 3,
    sources: int = 0,
) -> EdgeFlow:
    """Integer flow: random multiples of unit face circulations plus optional random paths."""
    pos, edges = grid_graph(rows, cols)
    index = {e: i for i, e in enumerate(edges)}
    w = [0] * len(edges)

    def push(a: int, b: int, amount: int) -> None:
        if (a, b) in index:
            w[index[(a, b)]] += amount
        else:
            w[index[(b, a)]] -= amount

    for i in range(rows - 1):
        for j in range(cols - 1):
            c = int(rng.integers(-max_weight, max_weight + 1))
            if c:
                v = i * cols + j
                loop = [v, v + cols, v + cols + 1, v + 1, v]
                for a, b in zip(loop, loop[1:]):
                    push(a, b, c)
    for _ in range(sources):
        node = int(rng.integers(rows * cols))
        amount = int(rng.integers(1, max_weight + 1))
        for _ in range(int(rng.integers(1, rows + cols))):
            i, j = divmod(node, cols)
            options = [(i + di, j + dj) for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
                       if 0 <= i + di < rows and 0 <= j + dj < cols]
            ni, nj = options[int(rng.integers(len(options)))]
            nxt = ni * cols + nj
            push(node, nxt, amount)
            node = nxt
    return EdgeFlow(pos, tuple(edges), tuple(Fraction(x) for x in w))


# --- coarea decomposition -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples u[i, j] = u(lo1 + i h1, lo2 + j h2) on a regular planar grid."""

    values: np.ndarray
    box: Box

    def __post_init__(self) -> None:
        u = np.asarray(self.values, dtype=float)
        if u.ndim != 2 or min(u.shape) < 2:
            raise ValueError("a grid function needs a 2-d array with at least 2 samples per axis")
        if not np.all(np.isfinite(u)):
            raise ValueError("grid function values must be finite")
        if self.box.n != 2:
            raise ValueError("grid functions live on planar boxes")
        object.__setattr__(self, "values", u)

    @property
    def cell_size(self) -> np.ndarray:
        return self.box.widths / (np.array(self.values.shape) - 1)

    @classmethod
    def from_expr(cls, expr, samples, box: Box | None = None) -> "GridFunction":
        box = box or Box.cube(2)
        e = parse_expr(expr, 2) if isinstance(expr, str) else expr
        s1, s2 = (samples, samples) if np.isscalar(samples) else samples
        x1 = np.linspace(box.lo[0], box.hi[0], int(s1))
        x2 = np.linspace(box.lo[1], box.hi[1], int(s2))
        g1, g2 = np.meshgrid(x1, x2, indexing="ij")
        pts = np.stack([g1.ravel(), g2.ravel()], axis=1)
        return cls(evaluate(e, pts).reshape(len(x1), len(x2)), box)

    @classmethod
    def cone(cls, center, samples, box: Box | None = None) -> "GridFunction":
        """u(x) = |x - center|."""
        box = box or Box.cube(2)
        s1, s2 = (samples, samples) if np.isscalar(samples) else samples
        x1 = np.linspace(box.lo[0], box.hi[0], int(s1))
        x2 = np.linspace(box.lo[1], box.hi[1], int(s2))
        g1, g2 = np.meshgrid(x1, x2, indexing="ij")
        return cls(np.hypot(g1 - center[0], g2 - center[1]), box)

    def total_variation(self) -> float:
        """Sum over cells of |forward-difference gradient| times cell area."""
        h1, h2 = self.cell_size
        u = self.values
        g1 = (u[1:, :-1] - u[:-1, :-1]) / h1
        g2 = (u[:-1, 1:] - u[:-1, :-1]) / h2
        return math.fsum((np.hypot(g1, g2) * h1 * h2).ravel().tolist())

    def to_json(self) -> dict:
        return {"box": self.box.to_json(), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, data) -> "GridFunction":
        if isinstance(data, list):
            return cls(np.array(data, dtype=float), Box.cube(2))
        box = Box(tuple(data["box"]["lo"]), tuple(data["box"]["hi"])) if "box" in data else Box.cube(2)
        return cls(np.array(data["values"], dtype=float), box)


def load_grid_function(path, box: Box | None = None) -> GridFunction:
    """CSV matrix (unit square unless ``box`` is given) or JSON {box, values} / bare matrix."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open(newline="") as fh:
            rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
        return GridFunction(np.array(rows), box or Box.cube(2))
    g = GridFunction.from_json(json.loads(path.read_text()))
    return GridFunction(g.values, box) if box is not None else g


@dataclass(frozen=True, eq=False)
class CoareaDecomposition:
    levels: np.ndarray
    dt: float
    chains: tuple  # per level: tuple of (P, 2) polylines in physical coordinates
    lengths: np.ndarray
    closed_or_boundary: bool
    total_variation: float

    @property
    def coarea_sum(self) -> float:
        return math.fsum((self.lengths * self.dt).tolist())

    @property
    def identity_error(self) -> float:
        return abs(self.coarea_sum - self.total_variation)

    def relative_error(self, reference: float | None = None) -> float:
        ref = self.total_variation if reference is None else reference
        err = abs(self.coarea_sum - ref)
        return err / ref if ref else err

    def to_json(self) -> dict:
        return {
            "levels": len(self.levels),
            "dt": self.dt,
            "polylines": int(sum(len(c) for c in self.chains)),
            "coarea_sum": self.coarea_sum,
            "total_variation": self.total_variation,
            "identity_error": self.identity_error,
            "closed_or_boundary": self.closed_or_boundary,
        }


def _polyline_length(p: np.ndarray) -> float:
    return math.fsum(np.linalg.norm(np.diff(p, axis=0), axis=1).tolist())


def coarea_decompose(u: GridFunction, levels: int) -> CoareaDecomposition:
    """Level lines of u at the midpoints of ``levels`` equal slices of [min u, max u]."""
    if levels < 1:
        raise ValueError("levels must be at least 1")
    lo, hi = float(u.values.min()), float(u.values.max())
    tv = u.total_variation()
    if hi - lo <= 0:
        return CoareaDecomposition(np.zeros(0), 0.0, (), np.zeros(0), True, tv)
    dt = (hi - lo) / levels
    ts = lo + (np.arange(levels) + 0.5) * dt
    h = u.cell_size
    origin = np.array(u.box.lo)
    chains, lengths, ok = [], [], True
    tol = 1e-9 * float(h.max())
    for t in ts:
        lines = tuple(origin + c * h for c in find_contours(u.values, float(t)))
        chains.append(lines)
        lengths.append(math.fsum(_polyline_length(p) for p in lines))
        for p in lines:
            closed = np.allclose(p[0], p[-1], atol=tol)
            ends = all(_on_boundary(q, u.box, tol) for q in (p[0], p[-1]))
            ok = ok and (closed or ends)
    return CoareaDecomposition(ts, dt, tuple(chains), np.array(lengths), ok, tv)


def _on_boundary(q: np.ndarray, box: Box, tol: float) -> bool:
    lo, hi = np.array(box.lo), np.array(box.hi)
    return bool(np.any(np.abs(q - lo) <= tol) or np.any(np.abs(q - hi) <= tol))
