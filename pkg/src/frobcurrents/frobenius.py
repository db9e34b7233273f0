"""Obstruction forms at non-involutive points, the pairing chain behind them,
flow-box charts of involutive distributions and mass decompositions of
normal currents into integral leaves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Sequence

import numpy as np

from .currents import (
    Cell,
    DiffuseCurrent,
    SimplicialCurrent,
    _samples,
    box_mesh,
    box_rule,
    boundary,
    boundary_pair,
    evaluate_current,
    mass,
    support_samples,
    tangency,
)
from .expr import evaluate, parse_expr
from .fieldlang import (
    DEGENERATE_TOL,
    INVOLUTIVITY_TOL,
    Box,
    FrameField,
    _residual_vectors,
    involutivity_residuals,
    orthonormal_frames,
    unit_multivectors,
    wedge_norms,
)
from .forms import DiffForm, NumericForm, exterior_derivative, polynomial_forms, wedge_form
from .multilinear import MultiCovector, MultiVector, basis_tuples, minors, pair, wedge_all


class NotInvolutiveError(ValueError):
    pass


class InvolutiveError(ValueError):
    """Raised when an obstruction is requested at a point where V is involutive."""


class ObstructionError(RuntimeError):
    """The constructed form failed its own a-posteriori checks."""


class ChartError(RuntimeError):
    pass


class SupportError(ValueError):
    pass


# --- obstruction certificate --------------------------------------------------


@dataclass(frozen=True, eq=False)
class ObstructionCertificate:
    x0: tuple[float, ...]
    pair: tuple[int, int]
    eta0: np.ndarray
    gamma: MultiCovector
    alpha: NumericForm
    d_alpha: NumericForm
    witness: float
    margin: float
    involutivity_residual: float
    restriction_residual: float
    restriction_tol: float
    restriction_samples: int
    fd_step: float

    @property
    def restriction_ok(self) -> bool:
        return self.restriction_residual <= self.restriction_tol

    @property
    def witness_ok(self) -> bool:
        return abs(self.witness) >= self.margin

    def to_json(self) -> dict:
        return {
            "x0": list(self.x0),
            "bracket_pair": list(self.pair),
            "eta0": self.eta0.tolist(),
            "gamma": self.gamma.coeffs.tolist(),
            "witness": self.witness,
            "margin": self.margin,
            "involutivity_residual": self.involutivity_residual,
            "restriction_residual": self.restriction_residual,
            "restriction_tolerance": self.restriction_tol,
            "restriction_samples": self.restriction_samples,
            "fd_step": self.fd_step,
        }


def _eta_form(frame: FrameField, eta0: np.ndarray, step: float) -> NumericForm:
    """x -> (I - P_V(x)) eta0 as a 1-form."""

    def func(pts: np.ndarray) -> np.ndarray:
        q = orthonormal_frames(frame.values(pts))
        return eta0 - np.einsum("nkd,nk->nd", q, q @ eta0)

    return NumericForm(frame.n, 1, func, step, label="eta")


def restriction_residuals(frame: FrameField, alpha, pts: np.ndarray) -> np.ndarray:
    """max |<w; alpha(x)>| over unit basis (h)-vectors w of V(x), h = grade(alpha)."""
    h = alpha.h
    q = orthonormal_frames(frame.values(pts))
    vals = alpha.evaluate_many(pts)
    worst = np.zeros(len(pts))
    for sub in combinations(range(frame.k), h):
        w = minors(q[:, list(sub), :], h)
        worst = np.maximum(worst, np.abs(np.einsum("ni,ni->n", w, vals)))
    return worst


def build_obstruction(
    frame: FrameField,
    x0,
    tol: float = INVOLUTIVITY_TOL,
    fd_step: float | None = None,
    samples_per_axis: int | None = None,
) -> ObstructionCertificate:
    """A (k-1)-form alpha vanishing on V with <v(x0); d alpha(x0)> != 0.

    alpha = eta ^ gamma where eta(x) = (I - P_V(x)) eta0 kills V(x), eta0 is the
    normalized out-of-plane part of the worst bracket at x0, and gamma is the
    constant wedge of the covectors dual (at x0, within V) to the frame fields
    not in that bracket.
    """
    x0 = np.asarray(x0, dtype=float)
    if frame.k < 2:
        raise InvolutiveError("a line field is always involutive")
    brackets, defects, degenerate = _residual_vectors(frame, x0[None, :])
    if degenerate[0]:
        raise InvolutiveError(f"frame is degenerate at {x0.tolist()}")
    norms = {ij: float(np.linalg.norm(dv[0])) for ij, dv in defects.items()}
    best = max(norms, key=lambda ij: (norms[ij], tuple(-c for c in ij)))
    residual = norms[best]
    if residual <= tol:
        raise InvolutiveError(
            f"V is involutive at {x0.tolist()} (residual {residual:.3g} <= {tol:.3g}); no obstruction exists"
        )
    eta0 = defects[best][0] / residual
    vals = frame.values(x0)
    wedge_norm = float(wedge_norms(vals))
    duals = np.linalg.pinv(vals)  # columns are covectors dual to the fields within V(x0)
    rest = [a for a in range(frame.k) if a + 1 not in best]
    if rest:
        gamma = wedge_all(MultiCovector.from_vector(duals[:, a]) for a in rest)
    else:
        gamma = MultiCovector(frame.n, 0, [1.0])

    step = 1e-4 * frame.region.size if fd_step is None else fd_step
    eta = _eta_form(frame, eta0, step)
    gamma_c = gamma.coeffs

    def gamma_func(pts: np.ndarray) -> np.ndarray:
        return np.broadcast_to(gamma_c, (len(pts), len(gamma_c)))

    alpha = wedge_form(eta, NumericForm(frame.n, gamma.h, gamma_func, step, label="gamma"))
    alpha = NumericForm(alpha.n, alpha.h, alpha.func, step, label="alpha")
    d_alpha = alpha.d(step)
    v0 = MultiVector(frame.n, frame.k, minors(vals) / wedge_norm)
    witness = pair(v0, d_alpha(x0))
    margin = 0.5 * residual / wedge_norm

    per_axis = samples_per_axis or (10 if frame.n <= 3 else 4)
    pts = frame.region.cell_centers(per_axis)
    ok = wedge_norms(frame.values(pts)) >= DEGENERATE_TOL
    rres = restriction_residuals(frame, alpha, pts[ok])
    scale = max(1.0, gamma.norm())
    cert = ObstructionCertificate(
        x0=tuple(float(c) for c in x0),
        pair=best,
        eta0=eta0,
        gamma=gamma,
        alpha=alpha,
        d_alpha=d_alpha,
        witness=float(witness),
        margin=float(margin),
        involutivity_residual=residual,
        restriction_residual=float(rres.max()) if len(rres) else 0.0,
        restriction_tol=1e-6 * scale,
        restriction_samples=int(ok.sum()),
        fd_step=step,
    )
    if not cert.witness_ok:
        raise ObstructionError(f"witness {cert.witness:.3g} below margin {cert.margin:.3g}")
    if not cert.restriction_ok:
        raise ObstructionError(
            f"alpha does not vanish on V: residual {cert.restriction_residual:.3g} > {cert.restriction_tol:.3g}"
        )
    return cert


# --- pairing chain --------------------------------------------------------------


@dataclass(frozen=True)
class PairingChain:
    boundary_term: float  # A = <dT; phi alpha>
    transverse_term: float  # B = <T; d phi ^ alpha>
    curvature_term: float  # C = <T; phi d alpha>
    error_estimate: float
    phi_integral: float
    boundary_chain_term: float | None = None

    @property
    def defect(self) -> float:
        return abs(self.boundary_term - self.transverse_term - self.curvature_term)

    @property
    def consistent(self) -> bool:
        return self.defect <= 5.0 * self.error_estimate

    def to_json(self) -> dict:
        out = {
            "A_boundary": self.boundary_term,
            "B_dphi_alpha": self.transverse_term,
            "C_phi_dalpha": self.curvature_term,
            "defect": self.defect,
            "error_estimate": self.error_estimate,
            "consistent": self.consistent,
            "phi_integral": self.phi_integral,
        }
        if self.boundary_chain_term is not None:
            out["A_from_boundary_chain"] = self.boundary_chain_term
        return out


def pairing_chain(T, phi, alpha, order: int = 2, step: float | None = None) -> PairingChain:
    """A = <dT; phi alpha>, B = <T; d phi ^ alpha>, C = <T; phi d alpha>; A = B + C."""
    n = T.n
    if alpha.h != T.k - 1:
        raise ValueError(f"alpha must have grade {T.k - 1}, got {alpha.h}")
    phi_expr = parse_expr(phi, n) if isinstance(phi, str) else phi
    phi0 = DiffForm.scalar(n, phi_expr)
    numeric = isinstance(alpha, NumericForm)
    if numeric:
        step = alpha.step if step is None else step
        alpha = alpha.with_step(step)

    def terms_at(h):
        a = alpha.with_step(h) if numeric else alpha
        phi_alpha = wedge_form(phi0, a)
        A = boundary_pair(T, phi_alpha, order, h)
        C = evaluate_current(T, wedge_form(phi0, exterior_derivative(a, h)), order)
        return A, C

    A, C = terms_at(step)
    B = evaluate_current(T, wedge_form(exterior_derivative(phi0), alpha), order)
    floor = 1e-9 * max(1.0, mass(T))
    est = floor
    if numeric:
        A2, C2 = terms_at(2 * step)
        est += (abs(A - A2) + abs(C - C2)) / 3.0
    pts, w, _ = _samples(T, order)
    phi_int = math.fsum((w * evaluate(phi_expr, pts)).tolist()) if len(w) else 0.0
    chain = None
    if isinstance(T, SimplicialCurrent):
        chain = evaluate_current(boundary(T), wedge_form(phi0, alpha), order)
    return PairingChain(A, B, C, est, phi_int, chain)


# --- flow-box charts ------------------------------------------------------------


def _rk4(field_fn, pts: np.ndarray, dt: np.ndarray, steps: int, region: Box, slack: float) -> np.ndarray:
    x = pts.copy()
    h = dt[:, None]
    for _ in range(steps):
        k1 = field_fn(x)
        k2 = field_fn(x + 0.5 * h * k1)
        k3 = field_fn(x + 0.5 * h * k2)
        k4 = field_fn(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(region.contains(x, slack)):
            bad = x[~region.contains(x, slack)][0]
            raise ChartError(f"flow leaves the region at {bad.tolist()}")
    return x


def choose_pivots(values: np.ndarray) -> tuple[tuple[int, ...], float]:
    """Columns with the largest absolute k x k minor (first in lexicographic order on ties)."""
    k, n = values.shape
    best, best_det = None, -1.0
    for cols in combinations(range(n), k):
        det = abs(float(np.linalg.det(values[:, cols])))
        if det > best_det:
            best, best_det = cols, det
    return best, best_det


@dataclass(frozen=True, eq=False)
class FoliationChart:
    """psi(t, s) = Phi^1_{t1} o ... o Phi^k_{tk}(x0 + sum_b s_b e_b) for the graph-form frame."""

    frame: FrameField
    x0: np.ndarray
    pivots: tuple[int, ...]
    complement: tuple[int, ...]
    step: float
    t_box: Box
    s_box: Box
    verification: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.frame.k

    @property
    def n(self) -> int:
        return self.frame.n

    def adapted_values(self, pts: np.ndarray) -> np.ndarray:
        """Rows e_{c_i} + sum_b a_ib e_b of the column-reduced frame, shape (N, k, n)."""
        vals = self.frame.values(pts)
        block = vals[:, :, list(self.pivots)]
        dets = np.abs(np.linalg.det(block))
        if np.any(dets < DEGENERATE_TOL):
            raise ChartError("pivot block degenerates along the flow")
        return np.linalg.solve(block, vals)

    def _steps(self, axis: int) -> int:
        reach = max(abs(self.t_box.lo[axis]), abs(self.t_box.hi[axis]))
        return max(1, math.ceil(reach / self.step - 1e-12))

    def __call__(self, t, s, slack: float | None = None) -> np.ndarray:
        slack = 1e-9 * self.frame.region.size if slack is None else slack
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        single = t.ndim == 1
        t = np.atleast_2d(t)
        s = np.broadcast_to(np.atleast_2d(s), (len(t), self.n - self.k))
        x = np.broadcast_to(self.x0, (len(t), self.n)).copy()
        x[:, list(self.complement)] += s
        for i in reversed(range(self.k)):
            steps = self._steps(i)

            def fld(p: np.ndarray, i=i) -> np.ndarray:
                return self.adapted_values(p)[:, i, :]

            x = _rk4(fld, x, t[:, i] / steps, steps, self.frame.region, slack)
        return x[0] if single else x

    def jacobian(self, t, s, delta: float = 1e-5) -> np.ndarray:
        """Central-difference D psi with columns (d/dt_1..d/dt_k, d/ds_1..), shape (N, n, n)."""
        t = np.atleast_2d(np.asarray(t, dtype=float))
        s = np.broadcast_to(np.atleast_2d(np.asarray(s, dtype=float)), (len(t), self.n - self.k))
        ts = np.concatenate([t, s], axis=1)
        slack = 1e-9 * self.frame.region.size + 4 * delta
        shifts = np.concatenate([np.eye(self.n), -np.eye(self.n)]) * delta
        moved = (ts[None, :, :] + shifts[:, None, :]).reshape(-1, self.n)
        img = self(moved[:, : self.k], moved[:, self.k:], slack).reshape(2 * self.n, len(ts), self.n)
        cols = [(img[a] - img[self.n + a]) / (2 * delta) for a in range(self.n)]
        return np.stack(cols, axis=-1)

    def to_json(self) -> dict:
        return {
            "x0": self.x0.tolist(),
            "pivots": [c + 1 for c in self.pivots],
            "complement": [c + 1 for c in self.complement],
            "step": self.step,
            "t_box": self.t_box.to_json(),
            "s_box": self.s_box.to_json(),
            "verification": self.verification,
        }


def _as_box(spec, dim: int, default_radius: float) -> Box:
    if spec is None:
        return Box((-default_radius,) * dim, (default_radius,) * dim)
    if isinstance(spec, Box):
        return spec
    lo, hi = spec
    lo = (lo,) * dim if np.isscalar(lo) else tuple(lo)
    hi = (hi,) * dim if np.isscalar(hi) else tuple(hi)
    return Box(lo, hi)


def straighten(
    frame: FrameField,
    x0,
    step: float = 0.01,
    t_box=None,
    s_box=None,
    tol: float = INVOLUTIVITY_TOL,
    scan_resolution: int = 6,
    verify_resolution: int = 3,
) -> FoliationChart:
    """Flow-box chart of an involutive frame around x0."""
    x0 = np.asarray(x0, dtype=float)
    k, n = frame.k, frame.n
    res = involutivity_residuals(frame, frame.region.cell_centers(scan_resolution))
    if np.any(np.isnan(res)):
        raise ChartError("frame degenerates inside the region")
    if res.max() > tol:
        raise NotInvolutiveError(f"distribution is not involutive on the region (max residual {res.max():.3g})")
    pivots, det = choose_pivots(frame.values(x0))
    if det < DEGENERATE_TOL:
        raise ChartError(f"pivot degeneracy at x0 (largest minor {det:.3g})")
    complement = tuple(c for c in range(n) if c not in pivots)
    chart = FoliationChart(
        frame, x0, pivots, complement, float(step), _as_box(t_box, k, 0.5), _as_box(s_box, n - k, 0.5)
    )
    object.__setattr__(chart, "verification", _verify_chart(chart, verify_resolution))
    return chart


def _verify_chart(chart: FoliationChart, resolution: int) -> dict:
    k, n = chart.k, chart.n
    t_nodes = _box_nodes(chart.t_box, resolution)
    s_nodes = _box_nodes(chart.s_box, resolution)
    tt = np.repeat(t_nodes, len(s_nodes), axis=0)
    ss = np.tile(s_nodes, (len(t_nodes), 1))
    base = chart(tt, ss)
    jac = chart.jacobian(tt, ss)
    q = orthonormal_frames(chart.frame.values(base))
    worst = 0.0
    for i in range(k):
        col = jac[:, :, i]
        proj = np.einsum("nkd,nk->nd", q, np.einsum("nkd,nd->nk", q, col))
        rel = np.linalg.norm(col - proj, axis=-1) / np.linalg.norm(col, axis=-1)
        worst = max(worst, float(rel.max()))
    # Lipschitz estimate of the adapted fields
    lip = 0.0
    h = 1e-5 * chart.frame.region.size
    for a in range(n):
        e = np.zeros(n)
        e[a] = h
        try:
            dv = (chart.adapted_values(base + e) - chart.adapted_values(base - e)) / (2 * h)
        except Exception:
            continue
        lip = max(lip, float(np.abs(dv).max()))
    bound = 10 * chart.step**4 * max(lip, 1.0) + 1e-7
    return {
        "tangency_residual": worst,
        "bound": bound,
        "lipschitz_estimate": lip,
        "passed": worst <= bound,
        "samples": int(len(base)),
    }


def _box_nodes(box: Box, resolution: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(box.lo, box.hi)]
    return np.array(list(product(*axes))).reshape(-1, box.n)


def leaf(chart: FoliationChart, s, resolution) -> SimplicialCurrent:
    """Triangulated image of psi(., s) over the chart's t-box, theta = 1."""
    s = np.asarray(s, dtype=float).reshape(chart.n - chart.k)

    def embed(t: np.ndarray) -> np.ndarray:
        return chart(t, s)

    return box_mesh(chart.t_box.lo, chart.t_box.hi, resolution, embed, chart.n)


def leaf_interpolation_bound(L: SimplicialCurrent, frame: FrameField) -> float:
    """Largest variation of +-v between vertices of a cell (mesh interpolation error scale)."""
    v = unit_multivectors(frame, L.vertices)
    worst = 0.0
    for c in L.cells:
        vals = v[list(c.ids)]
        for a, b in combinations(range(len(vals)), 2):
            d = min(np.linalg.norm(vals[a] - vals[b]), np.linalg.norm(vals[a] + vals[b]))
            worst = max(worst, float(d))
    return worst


# --- decompositions -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Family {R_t} of integral currents with weights dt: T = sum_t w_t R_t."""

    atoms: tuple[SimplicialCurrent, ...]
    weights: np.ndarray
    labels: tuple = ()
    verification: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float).reshape(len(self.atoms))
        if np.any(w <= 0):
            raise ValueError("decomposition weights must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "atoms", tuple(self.atoms))

    def __len__(self) -> int:
        return len(self.atoms)

    def with_verification(self, record: dict) -> "Decomposition":
        return Decomposition(self.atoms, self.weights, self.labels, record)


def _cluster_levels(g: np.ndarray, rtol: float) -> np.ndarray:
    """Merge values within rtol * max(g) of their sorted neighbour; returns clustered copy."""
    out = g.copy()
    pos = np.flatnonzero(g > 0)
    if not len(pos):
        return out
    order = pos[np.argsort(g[pos], kind="stable")]
    gap = rtol * float(g.max())
    start = 0
    for i in range(1, len(order) + 1):
        if i == len(order) or g[order[i]] - g[order[i - 1]] > gap:
            group = order[start:i]
            out[group] = g[group].mean()
            start = i
    return out


def foliate(
    T: DiffuseCurrent,
    chart: FoliationChart,
    leaf_resolution=8,
    s_resolution=4,
    order: int = 2,
    test_forms=None,
    tol: float = 1e-6,
    boundary_mass: float | None = None,
    boundary_tol: float = 1e-4,
    level_rtol: float = 1e-8,
    min_capture: float = 0.95,
) -> Decomposition:
    """Decompose T = rho v L^n into weighted integral leaf pieces of the chart.

    In chart coordinates T = int ds int dt g(t, s) [leaf s] with
    g = rho |det D psi| / |d_t psi_1 ^ ... ^ d_t psi_k|; each leaf is split
    layer-cake style into superlevel sets of g (one atom per leaf when g is
    constant along it).
    """
    if T.frame is None or T.frame.describe() != chart.frame.describe():
        raise ValueError("the current must be oriented by the chart's frame")
    k, n = chart.k, chart.n
    s_pts1, s_w1 = box_rule(order)
    s_cells = chart.s_box.cell_centers(s_resolution) - 0.5 * chart.s_box.widths / np.array(
        _tuple(s_resolution, n - k)
    )
    s_size = chart.s_box.widths / np.array(_tuple(s_resolution, n - k))
    local = np.array(list(product(s_pts1, repeat=n - k))).reshape(-1, n - k)
    local_w = np.array([np.prod(c) for c in product(s_w1, repeat=n - k)])
    s_nodes = (s_cells[:, None, :] + local[None, :, :] * s_size).reshape(-1, n - k)
    s_weights = np.tile(local_w, len(s_cells)) * float(np.prod(s_size))

    params = _leaf_params(chart, leaf_resolution)
    template = box_mesh(chart.t_box.lo, chart.t_box.hi, leaf_resolution)
    t_c = params[template.ids].mean(axis=1)
    S, V, C = len(s_nodes), len(params), len(t_c)
    verts = chart(np.tile(params, (S, 1)), np.repeat(s_nodes, V, axis=0)).reshape(S, V, n)
    jac = chart.jacobian(np.tile(t_c, (S, 1)), np.repeat(s_nodes, C, axis=0))
    det = np.abs(np.linalg.det(jac))
    if np.any(det < 1e-12):
        raise ChartError("chart Jacobian degenerates")
    area = np.linalg.norm(minors(np.swapaxes(jac[:, :, :k], 1, 2)), axis=-1)
    det, area = det.reshape(S, C), area.reshape(S, C)

    atoms, weights, labels = [], [], []
    for si, (s, ws) in enumerate(zip(s_nodes, s_weights)):
        L = SimplicialCurrent(n, k, verts[si], template.cells)
        x_c = L.barycenters
        v = unit_multivectors(chart.frame, x_c)
        if np.sum(np.einsum("ci,ci->c", v, L.orientations)) < 0:
            L = L.reversed()
        inside = T.region.contains(x_c)
        rho = np.zeros(len(x_c))
        if np.any(inside):
            rho[inside] = evaluate(T.density, x_c[inside])
        if np.any(rho < 0):
            raise ValueError("negative density on a leaf")
        g = _cluster_levels(rho * det[si] / area[si], level_rtol)
        levels = np.unique(g[g > 0])
        prev = 0.0
        for li, lam in enumerate(levels):
            atoms.append(L.subset(g >= lam))
            weights.append(ws * (lam - prev))
            labels.append((tuple(float(c) for c in s), li))
            prev = lam
    D = Decomposition(tuple(atoms), np.array(weights), tuple(labels))
    captured = float(np.dot(D.weights, [mass(a) for a in D.atoms])) if len(D) else 0.0
    total = mass(T)
    if total > 0 and captured < min_capture * total:
        raise SupportError(
            f"support escapes the chart: leaves capture {captured:.4g} of mass {total:.4g}"
        )
    record = verify_decomposition(
        T, D, test_forms, tol, order=order, boundary_mass=boundary_mass, boundary_tol=boundary_tol
    )
    return D.with_verification(record)


def _tuple(res, dim: int) -> tuple[int, ...]:
    return (int(res),) * dim if np.isscalar(res) else tuple(int(r) for r in res)


def _leaf_params(chart: FoliationChart, resolution) -> np.ndarray:
    from .currents import cube_triangulation

    unit, _ = cube_triangulation(_tuple(resolution, chart.k))
    lo = np.array(chart.t_box.lo)
    return lo + unit * chart.t_box.widths


def _stacked(atoms: Sequence[SimplicialCurrent], weights: np.ndarray, order: int):
    pts, w, taus = [], [], []
    for a, wt in zip(atoms, weights):
        p, ww, t = _samples(a, order)
        pts.append(p)
        w.append(ww * wt)
        taus.append(t)
    if not pts:
        return None
    return np.concatenate(pts), np.concatenate(w), np.concatenate(taus)


def _stacked_pairing(stack, omega) -> float:
    if stack is None:
        return 0.0
    pts, w, taus = stack
    if not len(w):
        return 0.0
    return math.fsum((w * np.einsum("qi,qi->q", taus, omega.evaluate_many(pts))).tolist())


def verify_decomposition(
    T,
    D: Decomposition,
    test_forms=None,
    tol: float = 1e-6,
    order: int = 2,
    boundary_mass: float | None = None,
    boundary_tol: float = 1e-4,
    boundary_forms=None,
) -> dict:
    """Per-condition errors for T = int R_t dt and the mass identities."""
    n, k = T.n, T.k
    forms = polynomial_forms(n, k, 2) if test_forms is None else list(test_forms)
    bforms = polynomial_forms(n, k - 1, 2) if boundary_forms is None else list(boundary_forms)
    if any(f.h != k for f in forms) or any(a.k != k for a in D.atoms):
        raise ValueError("grades of test forms or atoms do not match the current")
    stack = _stacked(D.atoms, D.weights, order)
    err_i = max((abs(evaluate_current(T, f, order) - _stacked_pairing(stack, f)) for f in forms), default=0.0)

    mass_T = mass(T)
    atom_mass = math.fsum(float(w) * mass(a) for a, w in zip(D.atoms, D.weights))
    err_ii = abs(mass_T - atom_mass)

    boundaries = [boundary(a) for a in D.atoms]
    bmass = math.fsum(float(w) * mass(b) for b, w in zip(boundaries, D.weights))
    bstack = _stacked(boundaries, D.weights, order)
    err_pair = max(
        (abs(boundary_pair(T, psi, order) - _stacked_pairing(bstack, psi)) for psi in bforms), default=0.0
    )
    integral = all(c.theta >= 1 for a in D.atoms for c in a.cells)

    record = {
        "atoms": len(D),
        "atoms_integral": integral,
        "test_forms": len(forms),
        "condition_i": {"error": err_i, "tolerance": tol, "passed": err_i <= tol},
        "condition_ii": {
            "error": err_ii,
            "tolerance": tol,
            "passed": err_ii <= tol,
            "mass_T": mass_T,
            "atom_mass_integral": atom_mass,
        },
        "condition_iii": {"boundary_mass_integral": bmass, "passed": bool(np.isfinite(bmass))},
        "boundary_pairing_consistency": {"error": err_pair, "tolerance": tol, "passed": err_pair <= tol},
    }
    if boundary_mass is None:
        record["condition_iv"] = {"status": "not computable", "boundary_mass_integral": bmass}
    else:
        err_iv = abs(boundary_mass - bmass)
        record["condition_iv"] = {
            "error": err_iv,
            "tolerance": boundary_tol,
            "passed": err_iv <= boundary_tol,
            "analytic_boundary_mass": boundary_mass,
            "boundary_mass_integral": bmass,
        }
    return record


def decomposition_passed(record: dict, conditions=("condition_i", "condition_ii", "condition_iii")) -> bool:
    ok = all(record[c]["passed"] for c in conditions)
    iv = record.get("condition_iv", {})
    if "passed" in iv:
        ok = ok and iv["passed"]
    return ok and record["boundary_pairing_consistency"]["passed"]


def support_involutivity(T, frame: FrameField, tol: float = INVOLUTIVITY_TOL) -> dict:
    """Involutivity residuals of ``frame`` over the support samples of T."""
    pts = support_samples(T)
    res = involutivity_residuals(frame, pts) if len(pts) else np.zeros(0)
    return {
        "samples": int(len(pts)),
        "min_residual": float(np.nanmin(res)) if len(res) else 0.0,
        "max_residual": float(np.nanmax(res)) if len(res) else 0.0,
        "tolerance": tol,
        "involutive_on_support": bool(len(res) == 0 or np.nanmax(res) <= tol),
    }


def leaf_boundary_tangency(L: SimplicialCurrent, frame: FrameField, tol: float = 1e-4):
    """Containment tangency of the boundary chain of a leaf."""
    return tangency(boundary(L), frame, tol)
