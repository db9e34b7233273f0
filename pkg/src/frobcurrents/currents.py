"""Concrete currents: integral simplicial chains and grid-quadrature diffuse currents."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations, product
from math import comb, factorial
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .expr import Expr, evaluate, parse_expr
from .fieldlang import (
    Box,
    FrameField,
    _resolution,
    orthonormal_frames,
    unit_multivectors,
    wedge_norms,
)
from .forms import exterior_derivative
from .multilinear import MultiVector, minors

MIN_CELL_VOLUME = 1e-12


@dataclass(frozen=True)
class Cell:
    ids: tuple[int, ...]
    sign: int = 1
    theta: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if self.sign not in (1, -1):
            raise ValueError(f"cell sign must be +1 or -1, got {self.sign}")
        if int(self.theta) != self.theta or self.theta < 1:
            raise ValueError(f"multiplicity must be a positive integer, got {self.theta}")
        object.__setattr__(self, "theta", int(self.theta))
        if len(set(self.ids)) != len(self.ids):
            raise ValueError(f"cell repeats a vertex: {self.ids}")

    @property
    def weight(self) -> int:
        return self.sign * self.theta


def _parity(seq: Sequence[int]) -> int:
    s = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                s = -s
    return s


@dataclass(frozen=True, eq=False)
class SimplicialCurrent:
    """T = [[Sigma, tau, theta]] realized on oriented k-simplices with integer multiplicity."""

    n: int
    k: int
    vertices: np.ndarray
    cells: tuple[Cell, ...] = ()

    def __post_init__(self) -> None:
        verts = np.asarray(self.vertices, dtype=float).reshape(-1, self.n).copy()
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        cells = tuple(c if isinstance(c, Cell) else Cell(*c) for c in self.cells)
        object.__setattr__(self, "cells", cells)
        if not 0 <= self.k <= self.n:
            raise ValueError(f"dimension {self.k} current in R^{self.n}")
        for c in cells:
            if len(c.ids) != self.k + 1:
                raise ValueError(f"a {self.k}-cell needs {self.k + 1} vertices, got {c.ids}")
            if min(c.ids) < 0 or max(c.ids) >= len(verts):
                raise ValueError(f"cell {c.ids} refers to a missing vertex")
        if cells and np.any(self.volumes <= MIN_CELL_VOLUME):
            bad = int(np.argmax(self.volumes <= MIN_CELL_VOLUME))
            raise ValueError(f"degenerate cell {cells[bad].ids} (k-volume {self.volumes[bad]:.3g})")

    @property
    def ids(self) -> np.ndarray:
        return np.array([c.ids for c in self.cells], dtype=int).reshape(len(self.cells), self.k + 1)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([c.theta for c in self.cells], dtype=float)

    @property
    def signs(self) -> np.ndarray:
        return np.array([c.sign for c in self.cells], dtype=float)

    @cached_property
    def _edge_wedges(self) -> np.ndarray:
        if not self.cells:
            return np.zeros((0, comb(self.n, self.k)))
        pts = self.vertices[self.ids]
        if self.k == 0:
            return np.ones((len(self.cells), 1))
        edges = pts[:, 1:, :] - pts[:, :1, :]
        return minors(edges)

    @cached_property
    def volumes(self) -> np.ndarray:
        """H^k measure of each cell."""
        if self.k == 0:
            return np.ones(len(self.cells))
        return np.linalg.norm(self._edge_wedges, axis=-1) / factorial(self.k)

    @cached_property
    def orientations(self) -> np.ndarray:
        """Unit simple k-vector tau per cell (coefficient rows)."""
        norms = np.linalg.norm(self._edge_wedges, axis=-1)
        return self.signs[:, None] * self._edge_wedges / norms[:, None]

    def tau(self, i: int) -> MultiVector:
        return MultiVector(self.n, self.k, self.orientations[i])

    @property
    def barycenters(self) -> np.ndarray:
        if not self.cells:
            return np.zeros((0, self.n))
        return self.vertices[self.ids].mean(axis=1)

    @property
    def diameters(self) -> np.ndarray:
        if not self.cells or self.k == 0:
            return np.zeros(len(self.cells))
        pts = self.vertices[self.ids]
        diffs = pts[:, :, None, :] - pts[:, None, :, :]
        return np.linalg.norm(diffs, axis=-1).max(axis=(1, 2))

    def reversed(self) -> "SimplicialCurrent":
        return SimplicialCurrent(
            self.n, self.k, self.vertices, tuple(Cell(c.ids, -c.sign, c.theta) for c in self.cells)
        )

    def scaled(self, theta: int) -> "SimplicialCurrent":
        return SimplicialCurrent(
            self.n, self.k, self.vertices, tuple(Cell(c.ids, c.sign, c.theta * theta) for c in self.cells)
        )

    def subset(self, mask) -> "SimplicialCurrent":
        keep = [c for c, m in zip(self.cells, mask) if m]
        return SimplicialCurrent(self.n, self.k, self.vertices, tuple(keep))

    def face_weights(self) -> dict[tuple[int, ...], int]:
        """Net integer weight of each (k-1)-face, keyed by sorted vertex ids."""
        out: dict[tuple[int, ...], int] = {}
        for c in self.cells:
            for i in range(self.k + 1):
                face = c.ids[:i] + c.ids[i + 1:]
                key = tuple(sorted(face))
                w = (-1) ** i * c.weight * _parity(face)
                out[key] = out.get(key, 0) + w
        return out

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "vertices": self.vertices.tolist(),
            "cells": [{"ids": list(c.ids), "sign": c.sign, "theta": c.theta} for c in self.cells],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SimplicialCurrent":
        cells = tuple(Cell(c["ids"], int(c.get("sign", 1)), int(c.get("theta", 1))) for c in data["cells"])
        return cls(int(data["n"]), int(data["k"]), np.asarray(data["vertices"], dtype=float), cells)

    def __len__(self) -> int:
        return len(self.cells)


def boundary(T: SimplicialCurrent) -> SimplicialCurrent:
    """Alternating face sum with exact cancellation of shared faces."""
    if not isinstance(T, SimplicialCurrent):
        raise TypeError("boundary is materialized only for simplicial currents")
    if T.k < 1:
        raise ValueError("the boundary of a 0-current is not defined")
    cells = tuple(
        Cell(key, 1 if w > 0 else -1, abs(w))
        for key, w in sorted(T.face_weights().items())
        if w != 0
    )
    return SimplicialCurrent(T.n, T.k - 1, T.vertices, cells)


def load_mesh(path) -> SimplicialCurrent:
    return SimplicialCurrent.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def save_mesh(T: SimplicialCurrent, path) -> None:
    Path(path).write_text(json.dumps(T.to_json(), indent=1), encoding="utf-8")


# --- quadrature -------------------------------------------------------------


def simplex_rule(k: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points (Q, k+1) and weights summing to 1.

    Order 1 is the barycenter; order 2 is the symmetric (k+1)-point rule exact
    for quadratics.
    """
    if k == 0:
        return np.ones((1, 1)), np.ones(1)
    if order == 1:
        return np.full((1, k + 1), 1.0 / (k + 1)), np.ones(1)
    if order == 2:
        beta = (k + 2 - math.sqrt(k + 2)) / ((k + 1) * (k + 2))
        alpha = 1.0 - k * beta
        pts = np.full((k + 1, k + 1), beta)
        np.fill_diagonal(pts, alpha)
        return pts, np.full(k + 1, 1.0 / (k + 1))
    raise ValueError(f"unsupported quadrature order {order} (use 1 or 2)")


def box_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """1-D rule on [0, 1]: midpoint (order 1) or 2-point Gauss (order 2)."""
    if order == 1:
        return np.array([0.5]), np.array([1.0])
    if order == 2:
        g = 0.5 / math.sqrt(3.0)
        return np.array([0.5 - g, 0.5 + g]), np.array([0.5, 0.5])
    raise ValueError(f"unsupported quadrature order {order} (use 1 or 2)")


def cell_quadrature(T: SimplicialCurrent, order: int = 2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrature points (C, Q, n), weights (C, Q) including theta*vol, and cell taus (C, Ck)."""
    bary, w = simplex_rule(T.k, order)
    if not T.cells:
        return np.zeros((0, len(w), T.n)), np.zeros((0, len(w))), T.orientations
    corners = T.vertices[T.ids]  # (C, k+1, n)
    pts = np.einsum("qa,can->cqn", bary, corners)
    weights = (T.thetas * T.volumes)[:, None] * w[None, :]
    return pts, weights, T.orientations


# --- diffuse currents -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiffuseCurrent:
    """T = tau mu with mu = rho L^n restricted to a box, discretized by a tensor rule.

    ``orientation`` is a FrameField (tau = v) or a batched function returning
    unit k-vector coefficients. ``sign`` flips the orientation.
    """

    k: int
    orientation: FrameField | Callable[[np.ndarray], np.ndarray]
    density: Expr
    region: Box
    resolution: tuple[int, ...]
    order: int = 2
    sign: int = 1

    def __post_init__(self) -> None:
        dens = parse_expr(self.density, self.region.n) if isinstance(self.density, str) else self.density
        object.__setattr__(self, "density", dens)
        object.__setattr__(self, "resolution", _resolution(self.resolution, self.region.n))
        if isinstance(self.orientation, FrameField):
            if self.orientation.k != self.k or self.orientation.n != self.n:
                raise ValueError("orientation frame does not match the current's dimensions")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if np.any(self.mu < 0):
            raise ValueError("density is negative at a quadrature node")
        norms = np.linalg.norm(self.taus, axis=-1)
        if self.taus.size and np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValueError("orientation is not unit at some quadrature node")

    @property
    def n(self) -> int:
        return self.region.n

    @property
    def frame(self) -> FrameField | None:
        return self.orientation if isinstance(self.orientation, FrameField) else None

    @cached_property
    def cell_size(self) -> np.ndarray:
        return self.region.widths / np.array(self.resolution)

    @cached_property
    def _nodes(self) -> tuple[np.ndarray, np.ndarray]:
        pts1, w1 = box_rule(self.order)
        local = np.array(list(product(pts1, repeat=self.n)))
        lw = np.array([np.prod(c) for c in product(w1, repeat=self.n)])
        corners = self.region.cell_centers(self.resolution) - 0.5 * self.cell_size
        nodes = (corners[:, None, :] + local[None, :, :] * self.cell_size).reshape(-1, self.n)
        weights = np.tile(lw, len(corners)) * float(np.prod(self.cell_size))
        return nodes, weights

    @property
    def nodes(self) -> np.ndarray:
        return self._nodes[0]

    @cached_property
    def mu(self) -> np.ndarray:
        """Quadrature weights of mu: rho(node) * cell volume * rule weight."""
        nodes, w = self._nodes
        return evaluate(self.density, nodes) * w

    @cached_property
    def taus(self) -> np.ndarray:
        return self.sign * orientation_values(self.orientation, self.nodes)

    def with_order(self, order: int) -> "DiffuseCurrent":
        return DiffuseCurrent(self.k, self.orientation, self.density, self.region, self.resolution, order, self.sign)

    def reversed(self) -> "DiffuseCurrent":
        return DiffuseCurrent(self.k, self.orientation, self.density, self.region, self.resolution, self.order, -self.sign)


def orientation_values(orientation, pts: np.ndarray) -> np.ndarray:
    if isinstance(orientation, FrameField):
        return unit_multivectors(orientation, pts)
    return np.asarray(orientation(pts), dtype=float)


Current = SimplicialCurrent | DiffuseCurrent


def _fsum(values) -> float:
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def mass(T: Current) -> float:
    if isinstance(T, SimplicialCurrent):
        return _fsum(T.thetas * T.volumes)
    return _fsum(T.mu)


def _samples(T: Current, order: int):
    """(points, weights, taus) with one row per quadrature sample."""
    if isinstance(T, SimplicialCurrent):
        pts, w, taus = cell_quadrature(T, order)
        q = pts.shape[1]
        return pts.reshape(-1, T.n), w.reshape(-1), np.repeat(taus, q, axis=0)
    if order != T.order:
        T = T.with_order(order)
    keep = T.mu != 0
    return T.nodes[keep], T.mu[keep], T.taus[keep]


def evaluate_current(T: Current, omega, order: int = 2) -> float:
    """<T; omega> = integral of <tau; omega> d mu by per-cell quadrature."""
    if omega.h != T.k:
        raise ValueError(f"grade mismatch: {T.k}-current against {omega.h}-form")
    if omega.n != T.n:
        raise ValueError(f"dimension mismatch: {T.n} vs {omega.n}")
    pts, w, taus = _samples(T, order)
    if not len(w):
        return 0.0
    vals = omega.evaluate_many(pts)
    return _fsum(w * np.einsum("qi,qi->q", taus, vals))


def boundary_pair(T: Current, psi, order: int = 2, step: float | None = None) -> float:
    """<dT; psi> := <T; d psi>."""
    if psi.h != T.k - 1:
        raise ValueError(f"boundary pairing of a {T.k}-current needs a {T.k - 1}-form, got {psi.h}")
    return evaluate_current(T, exterior_derivative(psi, step), order)


def stokes_defect(T: SimplicialCurrent, psi, order: int = 2) -> tuple[float, float]:
    """(<boundary(T); psi>, <T; d psi>), equal up to quadrature error."""
    return evaluate_current(boundary(T), psi, order), boundary_pair(T, psi, order)


def comass_bound(omega, pts) -> float:
    """max over pts of the coefficient norm of omega (an upper bound for the comass)."""
    vals = omega.evaluate_many(pts)
    return float(np.max(np.linalg.norm(vals, axis=-1))) if len(vals) else 0.0


# --- tangency ---------------------------------------------------------------


@dataclass(frozen=True)
class TangencyReport:
    max_residual: float
    tolerance: float
    samples: int
    offending: tuple[tuple[int, tuple[float, ...], float], ...] = field(default=())
    mode: str = "orientation"

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance

    def to_json(self, limit: int = 10) -> dict:
        return {
            "mode": self.mode,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "samples": self.samples,
            "passed": self.passed,
            "offending": [
                {"sample": i, "point": list(p), "residual": r} for i, p, r in self.offending[:limit]
            ],
        }


def _span_bases(T: Current, taus: np.ndarray, cell_of_sample: np.ndarray) -> np.ndarray:
    """Orthonormal bases (S, h, n) of span(tau) per sample."""
    if isinstance(T, SimplicialCurrent):
        if T.k == 0 or not T.cells:
            return np.zeros((len(cell_of_sample), 0, T.n))
        pts = T.vertices[T.ids]
        edges = pts[:, 1:, :] - pts[:, :1, :]
        return orthonormal_frames(edges)[cell_of_sample]
    from .multilinear import span

    return np.stack([span(MultiVector(T.n, T.k, t)).vectors for t in taus])


def tangency(T: Current, frame: FrameField, tol: float = 1e-7, at: str = "barycenter", order: int = 2) -> TangencyReport:
    """Tangency of T to the distribution of ``frame``.

    Same grade: residual min(|tau - v|, |tau + v|). Lower grade: largest
    distance from V(x) of an orthonormal basis vector of span(tau).
    ``at`` selects the sample points of simplicial cells: "barycenter" or
    "quadrature" (order-``order`` rule).
    """
    if T.k > frame.k:
        raise ValueError(f"a {T.k}-current cannot be tangent to a {frame.k}-plane distribution")
    if T.n != frame.n:
        raise ValueError(f"dimension mismatch: {T.n} vs {frame.n}")
    if isinstance(T, SimplicialCurrent):
        if at == "barycenter":
            pts, taus = T.barycenters, T.orientations
            cell_of = np.arange(len(T.cells))
        elif at == "quadrature":
            qp, _, taus0 = cell_quadrature(T, order)
            q = qp.shape[1]
            pts, taus = qp.reshape(-1, T.n), np.repeat(taus0, q, axis=0)
            cell_of = np.repeat(np.arange(len(T.cells)), q)
        else:
            raise ValueError(f"unknown sampling {at!r}")
    else:
        pts, _, taus = _samples(T, T.order)
        cell_of = np.arange(len(pts))
    if not len(pts):
        return TangencyReport(0.0, tol, 0, (), "orientation" if T.k == frame.k else "containment")
    if T.k == frame.k:
        v = unit_multivectors(frame, pts)
        res = np.minimum(np.linalg.norm(taus - v, axis=-1), np.linalg.norm(taus + v, axis=-1))
        mode = "orientation"
    else:
        vals = frame.values(pts)
        if np.any(wedge_norms(vals) < 1e-9):
            unit_multivectors(frame, pts)  # raises with the offending point
        q = orthonormal_frames(vals)
        bases = _span_bases(T, taus, cell_of)
        if bases.shape[1] == 0:
            res = np.zeros(len(pts))
        else:
            coef = np.einsum("skn,shn->shk", q, bases)
            proj = np.einsum("shk,skn->shn", coef, q)
            res = np.linalg.norm(bases - proj, axis=-1).max(axis=-1)
        mode = "containment"
    worst = np.argsort(-res, kind="stable")
    offending = tuple(
        (int(cell_of[i]), tuple(float(c) for c in pts[i]), float(res[i])) for i in worst if res[i] > tol
    )
    return TangencyReport(float(res.max()), tol, len(pts), offending, mode)


def support_samples(T: Current) -> np.ndarray:
    """Cell barycenters, or centers of grid cells where rho(center) > 0."""
    if isinstance(T, SimplicialCurrent):
        return T.barycenters
    centers = T.region.cell_centers(T.resolution)
    return centers[evaluate(T.density, centers) > 0]


# --- mesh builders ----------------------------------------------------------


def cube_triangulation(resolution: Sequence[int]) -> tuple[np.ndarray, list[Cell]]:
    """Freudenthal triangulation of the unit k-cube grid, all simplices positively oriented.

    Returns parameter-space nodes (C-order) and cells.
    """
    res = tuple(int(r) for r in resolution)
    k = len(res)
    axes = [np.linspace(0.0, 1.0, r + 1) for r in res]
    nodes = np.array(list(product(*axes))).reshape(-1, k)
    shape = tuple(r + 1 for r in res)
    cells = []
    for corner in product(*(range(r) for r in res)):
        for perm in permutations(range(k)):
            idx = list(corner)
            ids = [int(np.ravel_multi_index(idx, shape))]
            for axis in perm:
                idx[axis] += 1
                ids.append(int(np.ravel_multi_index(idx, shape)))
            cells.append(Cell(tuple(ids), _parity(perm), 1))
    return nodes, cells


def box_mesh(lo, hi, resolution, embed: Callable[[np.ndarray], np.ndarray] | None = None, n: int | None = None) -> SimplicialCurrent:
    """Triangulated k-box [lo, hi], optionally pushed into R^n by ``embed``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    k = len(lo)
    res = _resolution(resolution, k)
    unit, cells = cube_triangulation(res)
    params = lo + unit * (hi - lo)
    verts = params if embed is None else np.asarray(embed(params), dtype=float)
    n = verts.shape[1] if n is None else n
    return SimplicialCurrent(n, k, verts, tuple(cells))


def unit_square(resolution: int = 1, n: int = 3, theta: int = 1) -> SimplicialCurrent:
    """[0,1]^2 in the x1x2-plane of R^n."""

    def embed(p: np.ndarray) -> np.ndarray:
        out = np.zeros((len(p), n))
        out[:, :2] = p
        return out

    T = box_mesh((0.0, 0.0), (1.0, 1.0), resolution, embed, n)
    return T.scaled(theta) if theta != 1 else T


def torus_mesh(major: float = 2.0, minor: float = 0.5, nu: int = 12, nv: int = 8) -> SimplicialCurrent:
    """Closed, consistently oriented triangulated torus in R^3."""
    u = 2 * np.pi * np.arange(nu) / nu
    v = 2 * np.pi * np.arange(nv) / nv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    verts = np.stack(
        [(major + minor * np.cos(vv)) * np.cos(uu), (major + minor * np.cos(vv)) * np.sin(uu), minor * np.sin(vv)],
        axis=-1,
    ).reshape(-1, 3)

    def vid(i: int, j: int) -> int:
        return (i % nu) * nv + (j % nv)

    cells = []
    for i in range(nu):
        for j in range(nv):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            cells += [Cell((a, b, c)), Cell((a, c, d))]
    return SimplicialCurrent(3, 2, verts, tuple(cells))
