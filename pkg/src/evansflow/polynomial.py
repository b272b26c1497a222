"""Polynomial maps on R^n with exact derivatives.

A :class:`PolyMap` stores a list of monomial exponents shared by all output
components and one coefficient per (component, monomial).  Differentiation,
affine substitution and linear combinations act on the coefficient tables, so
no finite-difference error ever enters the flux Jacobians.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np


MAX_DEGREE = 4


def _merge(exponents: np.ndarray, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Combine duplicate exponent rows by summing their coefficients."""
    if exponents.shape[0] == 0:
        return exponents, coeffs
    uniq, inverse = np.unique(exponents, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    merged = np.zeros(coeffs.shape[:-1] + (uniq.shape[0],), dtype=float)
    np.add.at(np.moveaxis(merged, -1, 0), inverse, np.moveaxis(coeffs, -1, 0))
    return uniq, merged


@dataclass(frozen=True, eq=False)
class PolyMap:
    """Polynomial map R^n -> R^shape.

    Parameters
    ----------
    exponents : (m, n) integer array
        Monomial exponent rows.
    coeffs : array of shape ``shape + (m,)``
        Coefficient of each monomial for every output entry.
    """

    exponents: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        exps = np.asarray(self.exponents, dtype=np.int64)
        if exps.ndim != 2:
            raise ValueError("exponents must be a 2-D array")
        if np.any(exps < 0):
            raise ValueError("negative exponent in polynomial table")
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape[-1] != exps.shape[0]:
            raise ValueError("coefficient table does not match exponent rows")
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "coeffs", coeffs)

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls, n: int, shape: tuple[int, ...] = None) -> "PolyMap":
        shape = (n,) if shape is None else tuple(shape)
        return cls(np.zeros((0, n), dtype=np.int64), np.zeros(shape + (0,)))

    @classmethod
    def from_monomials(cls, n: int, terms: Iterable[Mapping]) -> "PolyMap":
        """Build an R^n -> R^n map from ``{exponents, component, coefficient}`` records."""
        rows, comps, vals = [], [], []
        for term in terms:
            exps = tuple(int(e) for e in term["exponents"])
            comp = int(term["component"])
            if len(exps) != n:
                raise ValueError(f"monomial {exps} does not have {n} exponents")
            if not 0 <= comp < n:
                raise ValueError(f"component {comp} out of range")
            if min(exps) < 0 or sum(exps) > MAX_DEGREE:
                raise ValueError(f"monomial {exps} outside degree range 0..{MAX_DEGREE}")
            rows.append(exps)
            comps.append(comp)
            vals.append(float(term["coefficient"]))
        if not rows:
            return cls.zero(n)
        exps = np.array(rows, dtype=np.int64)
        coeffs = np.zeros((n, len(rows)))
        coeffs[comps, np.arange(len(rows))] = vals
        return cls(*_merge(exps, coeffs))

    @classmethod
    def linear(cls, matrix: np.ndarray) -> "PolyMap":
        """The linear map v -> matrix @ v."""
        matrix = np.asarray(matrix, dtype=float)
        n = matrix.shape[1]
        return cls(np.eye(n, dtype=np.int64), matrix.copy())

    def to_monomials(self) -> list[dict]:
        if self.coeffs.ndim != 2:
            raise ValueError("only vector-valued maps have a monomial table")
        out = []
        for j, exps in enumerate(self.exponents):
            for comp in range(self.coeffs.shape[0]):
                c = self.coeffs[comp, j]
                if c != 0.0:
                    out.append({"exponents": [int(e) for e in exps],
                                "component": comp, "coefficient": float(c)})
        return out

    # basic properties ---------------------------------------------------
    @property
    def n(self) -> int:
        return self.exponents.shape[1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-1]

    @property
    def degree(self) -> int:
        if self.exponents.shape[0] == 0:
            return 0
        live = np.any(self.coeffs.reshape(-1, self.exponents.shape[0]) != 0, axis=0)
        if not np.any(live):
            return 0
        return int(self.exponents[live].sum(axis=1).max())

    # evaluation ---------------------------------------------------------
    def monomials(self, v) -> np.ndarray:
        v = np.asarray(v)
        return np.prod(v[..., None, :] ** self.exponents, axis=-1)

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v)
        if v.shape[-1] != self.n:
            raise ValueError(f"expected points in R^{self.n}, got shape {v.shape}")
        if self.exponents.shape[0] == 0:
            return np.zeros(v.shape[:-1] + self.shape, dtype=np.result_type(v, float))
        mono = self.monomials(v)
        flat = self.coeffs.reshape(-1, self.exponents.shape[0])
        out = mono @ flat.T
        return out.reshape(v.shape[:-1] + self.shape)

    # calculus -----------------------------------------------------------
    def derivative(self) -> "PolyMap":
        """Jacobian map; output shape ``shape + (n,)`` with the new axis last."""
        m, n = self.exponents.shape
        rows, blocks = [], []
        for j in range(n):
            take = self.exponents[:, j] > 0
            if not np.any(take):
                continue
            exps = self.exponents[take].copy()
            factor = exps[:, j].astype(float)
            exps[:, j] -= 1
            block = np.zeros(self.shape + (n, exps.shape[0]))
            block[..., j, :] = self.coeffs[..., take] * factor
            rows.append(exps)
            blocks.append(block)
        if rows:
            return PolyMap(*_merge(np.vstack(rows), np.concatenate(blocks, axis=-1)))
        return PolyMap(np.zeros((0, n), dtype=np.int64), np.zeros(self.shape + (n, 0)))

    @cached_property
    def jacobian(self) -> "PolyMap":
        return self.derivative()

    @cached_property
    def hessian(self) -> "PolyMap":
        return self.derivative().derivative()

    # algebra ------------------------------------------------------------
    def combine(self, other: "PolyMap", a: float = 1.0, b: float = 1.0) -> "PolyMap":
        """Return ``a*self + b*other``."""
        if other.n != self.n or other.shape != self.shape:
            raise ValueError("incompatible polynomial maps")
        exps = np.vstack([self.exponents, other.exponents])
        coeffs = np.concatenate([a * self.coeffs, b * other.coeffs], axis=-1)
        return PolyMap(*_merge(exps, coeffs))

    def scale(self, a: float) -> "PolyMap":
        return PolyMap(self.exponents, a * self.coeffs)

    def left_multiply(self, matrix: np.ndarray) -> "PolyMap":
        """Return ``v -> matrix @ self(v)`` for a vector-valued map."""
        matrix = np.asarray(matrix, dtype=float)
        return PolyMap(self.exponents, np.tensordot(matrix, self.coeffs, axes=([1], [0])))

    def compose_affine(self, shift: Sequence[float], matrix: np.ndarray) -> "PolyMap":
        """Return ``w -> self(shift + matrix @ w)`` by exact expansion."""
        shift = np.asarray(shift, dtype=float)
        matrix = np.asarray(matrix, dtype=float)
        n_new = matrix.shape[1]
        unit = [tuple(int(i == j) for i in range(n_new)) for j in range(n_new)]
        zero = (0,) * n_new

        def mul(p, q):
            out = defaultdict(float)
            for ea, ca in p.items():
                for eb, cb in q.items():
                    out[tuple(x + y for x, y in zip(ea, eb))] += ca * cb
            return out

        linear = []
        for i in range(self.n):
            factor = defaultdict(float)
            factor[zero] += shift[i]
            for j in range(n_new):
                factor[unit[j]] += matrix[i, j]
            linear.append(factor)
        powers: dict[tuple[int, int], dict] = {}

        def power(i, e):
            if (i, e) not in powers:
                powers[(i, e)] = {zero: 1.0} if e == 0 else mul(power(i, e - 1), linear[i])
            return powers[(i, e)]

        expansions = []
        for exps in self.exponents:
            poly = {zero: 1.0}
            for i, e in enumerate(exps):
                if e:
                    poly = mul(poly, power(i, int(e)))
            expansions.append(poly)
        keys = sorted({key for poly in expansions for key in poly})
        if not keys:
            return PolyMap(np.zeros((0, n_new), dtype=np.int64), np.zeros(self.shape + (0,)))
        index = {key: j for j, key in enumerate(keys)}
        transfer = np.zeros((self.exponents.shape[0], len(keys)))
        for row, poly in enumerate(expansions):
            for key, c in poly.items():
                transfer[row, index[key]] += c
        coeffs = self.coeffs @ transfer
        return PolyMap(np.array(keys, dtype=np.int64).reshape(len(keys), n_new), coeffs)

    def max_abs_coefficient(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0
