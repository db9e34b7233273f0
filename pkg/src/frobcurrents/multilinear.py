"""Exterior algebra over R^n with dense coefficient storage.

Basis tuples are 1-based, strictly increasing and stored in lexicographic
order, so the coefficient array of a grade-h element has length C(n, h).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

RANK_RTOL = 1e-9

IndexTuple = tuple[int, ...]


@lru_cache(maxsize=None)
def basis_tuples(n: int, h: int) -> tuple[IndexTuple, ...]:
    """All grade-h index tuples of R^n in lexicographic order."""
    if not 0 <= h <= n:
        raise ValueError(f"grade {h} does not exist in dimension {n}")
    return tuple(combinations(range(1, n + 1), h))


@lru_cache(maxsize=None)
def tuple_index(n: int, h: int) -> dict[IndexTuple, int]:
    return {t: i for i, t in enumerate(basis_tuples(n, h))}


def merge_sign(a: IndexTuple, b: IndexTuple) -> int:
    """Sign of the permutation sorting the concatenation ``a + b``; 0 if they overlap."""
    if set(a) & set(b):
        return 0
    # inversions between the two sorted blocks
    inversions = sum(1 for i in a for j in b if i > j)
    return -1 if inversions % 2 else 1


@lru_cache(maxsize=None)
def wedge_table(n: int, p: int, q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Index arrays (ia, ib, iout, sign) describing the grade-p by grade-q wedge."""
    if p + q > n:
        raise ValueError(f"wedge of grades {p} and {q} overflows dimension {n}")
    out_index = tuple_index(n, p + q)
    ia, ib, io, sg = [], [], [], []
    for i, a in enumerate(basis_tuples(n, p)):
        for j, b in enumerate(basis_tuples(n, q)):
            s = merge_sign(a, b)
            if s:
                ia.append(i)
                ib.append(j)
                io.append(out_index[tuple(sorted(a + b))])
                sg.append(s)
    return (
        np.array(ia, dtype=int),
        np.array(ib, dtype=int),
        np.array(io, dtype=int),
        np.array(sg, dtype=float),
    )


def wedge_coeffs(n: int, p: int, q: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Wedge of coefficient arrays with shared leading batch dimensions."""
    ia, ib, io, sg = wedge_table(n, p, q)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    batch = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    out = np.zeros(batch + (comb(n, p + q),))
    if len(io):
        terms = a[..., ia] * b[..., ib] * sg
        # np.add.at on the last axis
        out = np.moveaxis(out, -1, 0)
        np.add.at(out, io, np.moveaxis(np.broadcast_to(terms, batch + (len(io),)), -1, 0))
        out = np.moveaxis(out, 0, -1)
    return out


def minors(vectors: np.ndarray, h: int | None = None) -> np.ndarray:
    """Coefficients of v_1 ^ ... ^ v_h for rows of ``vectors`` (batched on leading axes).

    The coefficient on tuple I is the h x h minor built from columns I.
    """
    vectors = np.asarray(vectors, dtype=float)
    h = vectors.shape[-2] if h is None else h
    n = vectors.shape[-1]
    tuples = basis_tuples(n, h)
    if h == 0:
        return np.ones(vectors.shape[:-2] + (1,))
    cols = np.array(tuples, dtype=int) - 1  # (C, h)
    sub = vectors[..., :, cols]  # (..., h, C, h)
    sub = np.moveaxis(sub, -2, -3)  # (..., C, h, h)
    return np.linalg.det(sub)


@dataclass(frozen=True, eq=False)
class _Graded:
    n: int
    h: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (comb(self.n, self.h),):
            raise ValueError(
                f"grade-{self.h} element of R^{self.n} needs {comb(self.n, self.h)} coefficients, got {c.shape}"
            )
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, n: int, h: int):
        return cls(n, h, np.zeros(comb(n, h)))

    @classmethod
    def basis(cls, n: int, indices: IndexTuple):
        indices = tuple(indices)
        key = tuple(sorted(indices))
        if len(set(key)) != len(key):
            return cls.zero(n, len(key))
        if key and (key[0] < 1 or key[-1] > n):
            raise ValueError(f"index out of range 1..{n}: {indices}")
        c = np.zeros(comb(n, len(key)))
        # sign of the sorting permutation
        sign = 1
        lst = list(indices)
        for i in range(len(lst)):
            for j in range(i + 1, len(lst)):
                if lst[i] > lst[j]:
                    sign = -sign
        c[tuple_index(n, len(key))[key]] = sign
        return cls(n, len(key), c)

    @classmethod
    def from_dict(cls, n: int, h: int, coeffs: dict[IndexTuple, float]):
        c = np.zeros(comb(n, h))
        idx = tuple_index(n, h)
        for key, val in coeffs.items():
            if len(key) != h:
                raise ValueError(f"tuple {key} does not have grade {h}")
            c[idx[tuple(key)]] += val
        return cls(n, h, c)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(len(v), 1, v)

    def as_dict(self, atol: float = 0.0) -> dict[IndexTuple, float]:
        return {
            t: float(c)
            for t, c in zip(basis_tuples(self.n, self.h), self.coeffs)
            if abs(c) > atol
        }

    def __getitem__(self, key: IndexTuple) -> float:
        return float(self.coeffs[tuple_index(self.n, self.h)[tuple(key)]])

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def _check(self, other) -> None:
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")
        if other.h != self.h:
            raise ValueError(f"grade mismatch: {self.h} vs {other.h}")

    def __add__(self, other):
        self._check(other)
        return type(self)(self.n, self.h, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return type(self)(self.n, self.h, self.coeffs - other.coeffs)

    def __neg__(self):
        return type(self)(self.n, self.h, -self.coeffs)

    def __mul__(self, scalar: float):
        return type(self)(self.n, self.h, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return type(self)(self.n, self.h, self.coeffs / float(scalar))

    def __xor__(self, other):
        return wedge(self, other)

    def __eq__(self, other) -> bool:
        return (
            type(other) is type(self)
            and other.n == self.n
            and other.h == self.h
            and bool(np.array_equal(other.coeffs, self.coeffs))
        )

    def __hash__(self) -> int:
        return hash((type(self).__name__, self.n, self.h, self.coeffs.tobytes()))

    def allclose(self, other, atol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        terms = " + ".join(f"{c:g}*{_label(t, self._symbol)}" for t, c in self.as_dict().items())
        return f"{type(self).__name__}({terms or '0'}; n={self.n}, h={self.h})"

    _symbol = "e"


def _label(t: IndexTuple, symbol: str) -> str:
    if not t:
        return "1"
    return "^".join(f"{symbol}{i}" for i in t)


class MultiVector(_Graded):
    """Grade-h multivector; the home of orientations and simple k-vectors."""

    _symbol = "e"


class MultiCovector(_Graded):
    """Grade-h multicovector; values of differential forms."""

    _symbol = "dx"


def wedge(a: _Graded, b: _Graded) -> _Graded:
    """Exterior product. Raises when the result grade exceeds n."""
    if type(a) is not type(b):
        raise TypeError("wedge needs two multivectors or two multicovectors")
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    if a.h + b.h > a.n:
        raise ValueError(f"grade overflow: {a.h} + {b.h} > {a.n}")
    return type(a)(a.n, a.h + b.h, wedge_coeffs(a.n, a.h, b.h, a.coeffs, b.coeffs))


def wedge_all(factors) -> _Graded:
    factors = list(factors)
    if not factors:
        raise ValueError("empty wedge product")
    out = factors[0]
    for f in factors[1:]:
        out = wedge(out, f)
    return out


def simple(vectors) -> MultiVector:
    """v_1 ^ ... ^ v_k from the rows of ``vectors``."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    return MultiVector(vectors.shape[1], vectors.shape[0], minors(vectors))


def pair(w: MultiVector, omega: MultiCovector) -> float:
    """Duality pairing <w; omega> of same-grade elements."""
    if not isinstance(w, MultiVector) or not isinstance(omega, MultiCovector):
        raise TypeError("pair expects (MultiVector, MultiCovector)")
    if w.n != omega.n:
        raise ValueError(f"dimension mismatch: {w.n} vs {omega.n}")
    if w.h != omega.h:
        raise ValueError(f"grade mismatch: {w.h} vs {omega.h}")
    return float(np.dot(w.coeffs, omega.coeffs))


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Orthonormal basis (rows of ``vectors``) of an m-dimensional subspace of R^n."""

    n: int
    vectors: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vectors, dtype=float).reshape(-1, self.n).copy()
        if len(v) > self.n:
            raise ValueError("more basis vectors than the ambient dimension")
        if not np.allclose(v @ v.T, np.eye(len(v)), atol=1e-12, rtol=0.0):
            raise ValueError("basis vectors are not orthonormal")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def m(self) -> int:
        return len(self.vectors)

    @classmethod
    def from_spanning(cls, vectors, rtol: float = RANK_RTOL) -> "SubspaceBasis":
        """Orthonormal basis of the column space of ``vectors`` (rows), via SVD."""
        a = np.atleast_2d(np.asarray(vectors, dtype=float))
        n = a.shape[1]
        if not a.size or not np.any(a):
            return cls(n, np.zeros((0, n)))
        _, s, vt = np.linalg.svd(a, full_matrices=False)
        rank = int(np.sum(s > rtol * s[0]))
        return cls(n, vt[:rank])

    def projector(self) -> np.ndarray:
        return self.vectors.T @ self.vectors

    def contains(self, z, atol: float = 1e-10) -> bool:
        z = np.asarray(z, dtype=float)
        return float(np.linalg.norm(z - project(z, self))) <= atol


def project(z, basis: SubspaceBasis) -> np.ndarray:
    """Orthogonal projection of z onto the subspace."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != basis.n:
        raise ValueError(f"dimension mismatch: {z.shape[-1]} vs {basis.n}")
    return (z @ basis.vectors.T) @ basis.vectors


def interior_vectors(w: MultiVector) -> np.ndarray:
    """Rows are the contractions of w by every basis (h-1)-covector."""
    n, h = w.n, w.h
    if h == 0:
        return np.zeros((0, n))
    lower = tuple_index(n, h - 1)
    out = np.zeros((len(lower), n))
    for t, c in zip(basis_tuples(n, h), w.coeffs):
        if c == 0.0:
            continue
        for pos, i in enumerate(t):
            rest = t[:pos] + t[pos + 1:]
            out[lower[rest], i - 1] += (-1) ** pos * c
    return out


def span(w: MultiVector, rtol: float = RANK_RTOL) -> SubspaceBasis:
    """Smallest subspace W such that w is an h-vector in W."""
    if not isinstance(w, MultiVector):
        raise TypeError("span expects a MultiVector")
    if not np.any(w.coeffs):
        raise ValueError("span of the zero multivector is undefined")
    return SubspaceBasis.from_spanning(interior_vectors(w), rtol=rtol)


def subspace_multivectors(basis: SubspaceBasis, h: int) -> list[MultiVector]:
    """The wedges of all h-subsets of an orthonormal basis (a basis of Lambda_h W)."""
    return [simple(basis.vectors[list(c)]) if c else MultiVector(basis.n, 0, [1.0])
            for c in combinations(range(basis.m), h)]
