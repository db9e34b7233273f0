"""Differential forms: symbolic coefficients with exact d, and numeric forms with a
finite-difference d."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb
from typing import Callable

import numpy as np

from .expr import (
    ZERO,
    Expr,
    add,
    bind,
    diff_expr,
    evaluate,
    is_zero,
    mul,
    neg,
    number,
    parse_expr,
    simplify,
    to_text,
)
from .multilinear import MultiCovector, basis_tuples, merge_sign, tuple_index, wedge_coeffs

FD_STEP = 1e-5


@dataclass(frozen=True, eq=False)
class DiffForm:
    """h-form sum_I c_I dx_I with expression coefficients (absent tuples are zero)."""

    n: int
    h: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 <= self.h <= self.n:
            raise ValueError(f"grade {self.h} does not exist in dimension {self.n}")
        clean = {}
        for key, c in dict(self.coeffs).items():
            key = tuple(key)
            if len(key) != self.h or list(key) != sorted(set(key)) or (key and not 1 <= key[0] <= key[-1] <= self.n):
                raise ValueError(f"bad index tuple {key} for grade {self.h} in R^{self.n}")
            c = parse_expr(c, self.n) if isinstance(c, str) else bind(c, self.n)
            c = simplify(c)
            if c != ZERO:
                clean[key] = c
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @classmethod
    def scalar(cls, n: int, f: Expr | str) -> "DiffForm":
        return cls(n, 0, {(): f})

    @classmethod
    def basis(cls, n: int, key, coeff: Expr | str = "1") -> "DiffForm":
        return cls(n, len(key), {tuple(key): coeff})

    @classmethod
    def zero(cls, n: int, h: int) -> "DiffForm":
        return cls(n, h, {})

    @property
    def grade(self) -> int:
        return self.h

    def is_zero(self) -> bool | None:
        """Symbolic zero test (exact for polynomial coefficients)."""
        verdicts = [is_zero(c, self.n) for c in self.coeffs.values()]
        if any(v is False for v in verdicts):
            return False
        if any(v is None for v in verdicts):
            return None
        return True

    def evaluate_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((len(pts), comb(self.n, self.h)))
        index = tuple_index(self.n, self.h)
        for key, c in self.coeffs.items():
            out[:, index[key]] = evaluate(c, pts)
        return out

    def __call__(self, x) -> MultiCovector:
        return eval_form(self, x)

    def d(self) -> "DiffForm":
        return d(self)

    def __add__(self, other: "DiffForm") -> "DiffForm":
        _check_same(self, other)
        coeffs = dict(self.coeffs)
        for key, c in other.coeffs.items():
            coeffs[key] = add(coeffs[key], c) if key in coeffs else c
        return DiffForm(self.n, self.h, coeffs)

    def __neg__(self) -> "DiffForm":
        return DiffForm(self.n, self.h, {k: neg(c) for k, c in self.coeffs.items()})

    def __sub__(self, other: "DiffForm") -> "DiffForm":
        return self + (-other)

    def scale(self, f: Expr | str | float) -> "DiffForm":
        f = number(f) if isinstance(f, (int, float)) else parse_expr(f, self.n) if isinstance(f, str) else f
        return DiffForm(self.n, self.h, {k: mul(f, c) for k, c in self.coeffs.items()})

    def __xor__(self, other):
        return wedge_form(self, other)

    def to_text(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for key, c in self.coeffs.items():
            basis = "^".join(f"dx{i}" for i in key)
            parts.append(f"({to_text(c, self.n)})" + (f"*{basis}" if basis else ""))
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"DiffForm(n={self.n}, h={self.h}: {self.to_text()})"


def _check_same(a, b) -> None:
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    if a.h != b.h:
        raise ValueError(f"grade mismatch: {a.h} vs {b.h}")


def d(omega: DiffForm) -> DiffForm:
    """Exterior derivative: sum_I sum_i d(c_I)/dx_i dx_i ^ dx_I."""
    if omega.h >= omega.n:
        raise ValueError(f"exterior derivative of a top-grade ({omega.h}) form in R^{omega.n}")
    out: dict = {}
    for key, c in omega.coeffs.items():
        for i in range(1, omega.n + 1):
            if i in key:
                continue
            dc = diff_expr(c, i)
            sign = merge_sign((i,), key)
            term = dc if sign > 0 else neg(dc)
            new = tuple(sorted(key + (i,)))
            out[new] = add(out[new], term) if new in out else term
    return DiffForm(omega.n, omega.h + 1, out)


def wedge_form(a: DiffForm, b: DiffForm) -> DiffForm:
    """Pointwise wedge with symbolic coefficients."""
    if isinstance(a, NumericForm) or isinstance(b, NumericForm):
        return numeric_wedge(a, b)
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    if a.h + b.h > a.n:
        raise ValueError(f"grade overflow: {a.h} + {b.h} > {a.n}")
    out: dict = {}
    for ka, ca in a.coeffs.items():
        for kb, cb in b.coeffs.items():
            s = merge_sign(ka, kb)
            if not s:
                continue
            term = mul(ca, cb)
            if s < 0:
                term = neg(term)
            key = tuple(sorted(ka + kb))
            out[key] = add(out[key], term) if key in out else term
    return DiffForm(a.n, a.h + b.h, out)


def eval_form(omega, x) -> MultiCovector:
    """Value of a form at one point as a MultiCovector."""
    x = np.asarray(x, dtype=float)
    return MultiCovector(omega.n, omega.h, omega.evaluate_many(x[None, :])[0])


@dataclass(frozen=True, eq=False)
class NumericForm:
    """h-form given by a batched coefficient function (N, n) -> (N, C(n, h)).

    ``d`` uses central finite differences with ``step``; the truncation error
    is O(step^2) times third derivatives of the coefficients.
    """

    n: int
    h: int
    func: Callable[[np.ndarray], np.ndarray]
    step: float = FD_STEP
    label: str = "numeric"

    @property
    def grade(self) -> int:
        return self.h

    @classmethod
    def wrap(cls, form, step: float = FD_STEP) -> "NumericForm":
        if isinstance(form, NumericForm):
            return form
        return cls(form.n, form.h, form.evaluate_many, step, label=form.to_text())

    def evaluate_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.asarray(self.func(pts), dtype=float)
        return out.reshape(len(pts), comb(self.n, self.h))

    def __call__(self, x) -> MultiCovector:
        return eval_form(self, x)

    def d(self, step: float | None = None) -> "NumericForm":
        return fd_exterior_derivative(self, self.step if step is None else step)

    def with_step(self, step: float) -> "NumericForm":
        return NumericForm(self.n, self.h, self.func, step, self.label)

    def __xor__(self, other):
        return numeric_wedge(self, other)


def fd_exterior_derivative(form, step: float = FD_STEP) -> NumericForm:
    """d(form) by central differences of the coefficients."""
    n, h = form.n, form.h
    if h >= n:
        raise ValueError(f"exterior derivative of a top-grade ({h}) form in R^{n}")
    src = basis_tuples(n, h)
    dst = tuple_index(n, h + 1)
    table = [
        (i, si, dst[tuple(sorted(key + (i,)))], merge_sign((i,), key))
        for si, key in enumerate(src)
        for i in range(1, n + 1)
        if i not in key
    ]

    def func(pts: np.ndarray) -> np.ndarray:
        out = np.zeros((len(pts), comb(n, h + 1)))
        for i in range(1, n + 1):
            e = np.zeros(n)
            e[i - 1] = step
            deriv = (form.evaluate_many(pts + e) - form.evaluate_many(pts - e)) / (2.0 * step)
            for axis, si, di, sign in table:
                if axis == i:
                    out[:, di] += sign * deriv[:, si]
        return out

    return NumericForm(n, h + 1, func, step, label=f"d[{getattr(form, 'label', 'form')}]")


def numeric_wedge(a, b) -> NumericForm:
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    if a.h + b.h > a.n:
        raise ValueError(f"grade overflow: {a.h} + {b.h} > {a.n}")
    n, p, q = a.n, a.h, b.h

    def func(pts: np.ndarray) -> np.ndarray:
        return wedge_coeffs(n, p, q, a.evaluate_many(pts), b.evaluate_many(pts))

    step = min(getattr(a, "step", FD_STEP), getattr(b, "step", FD_STEP))
    return NumericForm(n, p + q, func, step, label=f"({_label(a)})^({_label(b)})")


def _label(form) -> str:
    return form.label if isinstance(form, NumericForm) else form.to_text()


def exterior_derivative(form, step: float | None = None):
    """Symbolic d for DiffForm, finite-difference d for NumericForm."""
    if isinstance(form, DiffForm):
        return d(form)
    return form.d(step)


def polynomial_forms(n: int, h: int, degree: int = 2) -> list[DiffForm]:
    """All forms x^m dx_I with monomials of total degree <= ``degree``."""
    monomials = [m for deg in range(degree + 1) for m in combinations_with_replacement(range(1, n + 1), deg)]
    out = []
    for key in basis_tuples(n, h):
        for m in monomials:
            text = "*".join(f"x{i}" for i in m) if m else "1"
            out.append(DiffForm.basis(n, key, parse_expr(text, n)))
    return out
