"""Vector fields, frames of plane distributions, Lie brackets and involutivity."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .expr import Expr, add, bind, diff_expr, evaluate, mul, parse_expr, simplify, sub, to_text
from .multilinear import MultiVector, SubspaceBasis, minors

DEGENERATE_TOL = 1e-9
INVOLUTIVITY_TOL = 1e-7


class DegenerateFrameError(ValueError):
    """The frame vectors are (numerically) linearly dependent at a point."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi] in R^n."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi):
            raise ValueError("box corners have different dimensions")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"empty box: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, n: int, lo: float = 0.0, hi: float = 1.0) -> "Box":
        return cls((lo,) * n, (hi,) * n)

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def widths(self) -> np.ndarray:
        return np.subtract(self.hi, self.lo)

    @property
    def size(self) -> float:
        return float(np.max(self.widths))

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, pts, slack: float = 0.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.all((pts >= np.subtract(self.lo, slack)) & (pts <= np.add(self.hi, slack)), axis=-1)

    def cell_centers(self, resolution) -> np.ndarray:
        """Centers of a regular grid, C-order (last axis fastest)."""
        res = _resolution(resolution, self.n)
        axes = [lo + (np.arange(r) + 0.5) * (hi - lo) / r for lo, hi, r in zip(self.lo, self.hi, res)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def to_json(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}


def _resolution(resolution, n: int) -> tuple[int, ...]:
    res = (int(resolution),) * n if np.isscalar(resolution) else tuple(int(r) for r in resolution)
    if len(res) != n or any(r < 1 for r in res):
        raise ValueError(f"resolution must be >= 1 per axis, got {resolution}")
    return res


@dataclass(frozen=True)
class VectorFieldExpr:
    n: int
    components: tuple[Expr, ...]

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        if len(comps) != self.n:
            raise ValueError(f"vector field on R^{self.n} needs {self.n} components, got {len(comps)}")
        for c in comps:
            bind(c, self.n)
        object.__setattr__(self, "components", comps)

    @classmethod
    def parse(cls, sources, n: int | None = None) -> "VectorFieldExpr":
        sources = list(sources)
        n = len(sources) if n is None else n
        return cls(n, tuple(parse_expr(str(s), n) for s in sources))

    @classmethod
    def constant(cls, vector) -> "VectorFieldExpr":
        from .expr import number

        return cls(len(vector), tuple(number(v) for v in vector))

    def __call__(self, x) -> np.ndarray:
        """Values at a point (n,) or a batch (N, n)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.array([evaluate(c, x) for c in self.components])
        return np.stack([evaluate(c, x) for c in self.components], axis=-1)

    def jacobian(self) -> tuple[tuple[Expr, ...], ...]:
        """J[c][a] = d(component c)/d x_a."""
        return tuple(tuple(diff_expr(c, a) for a in range(1, self.n + 1)) for c in self.components)

    def simplified(self) -> "VectorFieldExpr":
        return VectorFieldExpr(self.n, tuple(simplify(c) for c in self.components))

    def to_text(self) -> list[str]:
        return [to_text(c, self.n) for c in self.components]


def lie_bracket(u: VectorFieldExpr, w: VectorFieldExpr) -> VectorFieldExpr:
    """[u, w]_c = sum_a u_a dw_c/dx_a - w_a du_c/dx_a, built symbolically."""
    if u.n != w.n:
        raise ValueError(f"dimension mismatch: {u.n} vs {w.n}")
    ju, jw = u.jacobian(), w.jacobian()
    comps = []
    for c in range(u.n):
        acc = None
        for a in range(u.n):
            term = sub(mul(u.components[a], jw[c][a]), mul(w.components[a], ju[c][a]))
            acc = term if acc is None else add(acc, term)
        comps.append(simplify(acc))
    return VectorFieldExpr(u.n, tuple(comps))


@dataclass(frozen=True, eq=False)
class FrameField:
    """k pointwise-independent vector fields spanning a distribution of k-planes on a box."""

    fields: tuple[VectorFieldExpr, ...]
    region: Box

    def __post_init__(self) -> None:
        fields = tuple(self.fields)
        object.__setattr__(self, "fields", fields)
        if not fields:
            raise ValueError("a frame needs at least one field")
        n = fields[0].n
        if any(f.n != n for f in fields):
            raise ValueError("frame fields live in different dimensions")
        if self.region.n != n:
            raise ValueError(f"region dimension {self.region.n} != field dimension {n}")
        if not 0 < len(fields) < n:
            raise ValueError(f"need 0 < k < n, got k={len(fields)}, n={n}")

    @classmethod
    def parse(cls, sources, region: Box) -> "FrameField":
        return cls(tuple(VectorFieldExpr.parse(s, region.n) for s in sources), region)

    @property
    def n(self) -> int:
        return self.fields[0].n

    @property
    def k(self) -> int:
        return len(self.fields)

    @cached_property
    def brackets(self) -> dict[tuple[int, int], VectorFieldExpr]:
        """Symbolic [v_i, v_j] for 1 <= i < j <= k."""
        return {
            (i + 1, j + 1): lie_bracket(self.fields[i], self.fields[j])
            for i in range(self.k)
            for j in range(i + 1, self.k)
        }

    def values(self, pts) -> np.ndarray:
        """Field values, shape (N, k, n) for a batch or (k, n) for one point."""
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        batch = np.atleast_2d(pts)
        vals = np.stack([f(batch) for f in self.fields], axis=1)
        return vals[0] if single else vals

    def describe(self) -> list[list[str]]:
        return [f.to_text() for f in self.fields]


def wedge_norms(values: np.ndarray) -> np.ndarray:
    """|v_1 ^ ... ^ v_k| = sqrt(det Gram), batched over leading axes."""
    gram = values @ np.swapaxes(values, -1, -2)
    return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))


def orthonormal_frames(values: np.ndarray) -> np.ndarray:
    """Orthonormal bases (rows) of the spans of batched (N, k, n) frame values."""
    q, _ = np.linalg.qr(np.swapaxes(values, -1, -2))
    return np.swapaxes(q, -1, -2)


def normalize_frame(frame: FrameField, x) -> tuple[MultiVector, SubspaceBasis]:
    """Unit simple k-vector v(x) and the plane V(x)."""
    vals = frame.values(np.asarray(x, dtype=float))
    norm = float(wedge_norms(vals))
    if norm < DEGENERATE_TOL:
        raise DegenerateFrameError(f"frame is degenerate at {list(map(float, x))} (|v1^...^vk| = {norm:.3g})")
    v = MultiVector(frame.n, frame.k, minors(vals) / norm)
    return v, SubspaceBasis(frame.n, orthonormal_frames(vals))


def unit_multivectors(frame: FrameField, pts) -> np.ndarray:
    """Batched coefficients of v(x) at (N, n) points; raises on degenerate points."""
    vals = frame.values(np.atleast_2d(pts))
    norms = wedge_norms(vals)
    bad = norms < DEGENERATE_TOL
    if np.any(bad):
        where = np.atleast_2d(pts)[np.argmax(bad)]
        raise DegenerateFrameError(f"frame is degenerate at {where.tolist()}")
    return minors(vals) / norms[:, None]


def bracket_values(frame: FrameField, pts) -> dict[tuple[int, int], np.ndarray]:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return {ij: b(pts) for ij, b in frame.brackets.items()}


def _residual_vectors(frame: FrameField, pts: np.ndarray):
    """Returns (bracket values, out-of-plane parts, degenerate mask) at a batch of points."""
    vals = frame.values(pts)
    degenerate = wedge_norms(vals) < DEGENERATE_TOL
    q = orthonormal_frames(vals)
    brackets = bracket_values(frame, pts)
    defects = {}
    for ij, b in brackets.items():
        proj = np.einsum("nkd,nk->nd", q, np.einsum("nkd,nd->nk", q, b))
        defects[ij] = b - proj
    return brackets, defects, degenerate


def involutivity_residuals(frame: FrameField, pts, scale_aware: bool = False) -> np.ndarray:
    """max_{i<j} |[v_i,v_j] - P_V [v_i,v_j]| at each point; NaN where the frame degenerates.

    With ``scale_aware`` the residual is divided by the largest bracket norm
    (when that is nonzero).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if frame.k == 1:
        out = np.zeros(len(pts))
        out[wedge_norms(frame.values(pts)) < DEGENERATE_TOL] = np.nan
        return out
    brackets, defects, degenerate = _residual_vectors(frame, pts)
    res = np.max(np.stack([np.linalg.norm(d, axis=-1) for d in defects.values()]), axis=0)
    if scale_aware:
        scale = np.max(np.stack([np.linalg.norm(b, axis=-1) for b in brackets.values()]), axis=0)
        res = np.where(scale > 0, res / np.where(scale > 0, scale, 1.0), res)
    res[degenerate] = np.nan
    return res


def involutivity_residual(frame: FrameField, x, scale_aware: bool = False) -> float:
    """Distance of the brackets at x from V(x); zero iff V is involutive at x."""
    x = np.asarray(x, dtype=float)
    r = float(involutivity_residuals(frame, x[None, :], scale_aware)[0])
    if np.isnan(r):
        raise DegenerateFrameError(f"frame is degenerate at {x.tolist()}")
    return r


@dataclass(frozen=True, eq=False)
class ScanResult:
    points: np.ndarray
    residuals: np.ndarray
    tolerance: float
    resolution: tuple[int, ...]

    @property
    def degenerate(self) -> np.ndarray:
        return np.flatnonzero(np.isnan(self.residuals))

    @property
    def min(self) -> float:
        return float(np.nanmin(self.residuals)) if self.valid else float("nan")

    @property
    def max(self) -> float:
        return float(np.nanmax(self.residuals)) if self.valid else float("nan")

    @property
    def valid(self) -> bool:
        return bool(np.any(~np.isnan(self.residuals)))

    @property
    def fraction_above(self) -> float:
        ok = ~np.isnan(self.residuals)
        if not np.any(ok):
            return float("nan")
        return float(np.mean(self.residuals[ok] > self.tolerance))

    def grid(self) -> np.ndarray:
        return self.residuals.reshape(self.resolution)

    def summary(self) -> dict:
        return {
            "cells": int(len(self.residuals)),
            "min_residual": self.min,
            "max_residual": self.max,
            "fraction_above_tolerance": self.fraction_above,
            "degenerate_cells": int(len(self.degenerate)),
            "tolerance": self.tolerance,
        }


def scan_involutivity(
    frame: FrameField,
    resolution,
    tol: float = INVOLUTIVITY_TOL,
    scale_aware: bool = False,
    region: Box | None = None,
) -> ScanResult:
    """Residuals at every cell center of the frame's region (C order)."""
    region = frame.region if region is None else region
    res = _resolution(resolution, frame.n)
    pts = region.cell_centers(res)
    return ScanResult(pts, involutivity_residuals(frame, pts, scale_aware), tol, res)


# --- built-in frames ---------------------------------------------------------


def heisenberg_frame(h: int = 1, region: Box | None = None) -> FrameField:
    """X_i = d/dx_i - (y_i/2) d/dz, Y_i = d/dy_i + (x_i/2) d/dz on R^{2h+1}.

    Coordinates are ordered (x_1..x_h, y_1..y_h, z); for h = 1 they are x, y, z.
    """
    n = 2 * h + 1
    region = Box.cube(n, -1.0, 1.0) if region is None else region

    def var(i: int) -> str:
        return "xyz"[i - 1] if n <= 3 else f"x{i}"

    sources = []
    for i in range(1, h + 1):
        comp = ["0"] * n
        comp[i - 1] = "1"
        comp[n - 1] = f"-{var(h + i)}/2"
        sources.append(comp)
    for i in range(1, h + 1):
        comp = ["0"] * n
        comp[h + i - 1] = "1"
        comp[n - 1] = f"{var(i)}/2"
        sources.append(comp)
    return FrameField.parse(sources, region)


def coordinate_frame(k: int, n: int, region: Box | None = None) -> FrameField:
    region = Box.cube(n) if region is None else region
    sources = [["1" if a == i else "0" for a in range(n)] for i in range(k)]
    return FrameField.parse(sources, region)


def paraboloid_frame(region: Box | None = None) -> FrameField:
    """v1 = (1, 0, 2x), v2 = (0, 1, 2y): tangent to the level sets of z - x^2 - y^2."""
    region = Box((-1.0, -1.0, -1.0), (1.0, 1.0, 2.0)) if region is None else region
    return FrameField.parse([["1", "0", "2*x"], ["0", "1", "2*y"]], region)


def grid_points(region: Box, resolution) -> np.ndarray:
    """Regular grid of nodes (including the faces) of the box."""
    res = _resolution(resolution, region.n)
    axes = [np.linspace(lo, hi, r + 1) for lo, hi, r in zip(region.lo, region.hi, res)]
    return np.array(list(product(*axes)))
