"""Rankine-Hugoniot solver, Lax classification and small shock families.

Family members are pinned symmetrically in the shock direction,
``(v-)_k = -eps`` and ``(v+)_k = +eps``.  The remaining n-1 degrees of freedom
are closed by requiring the midpoint of the end states to lie on the k-axis.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    FamilyInvariantViolation,
    MarginalShock,
    NewtonDivergence,
    NonUniqueHugoniotPoint,
)
from .model import ModelSpec, eigen_fields, require_normalized

log = logging.getLogger(__name__)

RH_TOL = 1e-12
NEWTON_MAX_ITER = 50
LAX_TOL = 1e-12
UNIQUENESS_SEEDS = 8


@dataclass(frozen=True)
class ShockTriple:
    v_minus: np.ndarray
    v_plus: np.ndarray
    s: float
    residual: float = 0.0


@dataclass(frozen=True)
class ShockFamily:
    eps_values: np.ndarray
    triples: tuple
    model: Optional[ModelSpec] = field(default=None, repr=False)

    @property
    def s_of_eps(self) -> np.ndarray:
        return np.array([t.s for t in self.triples])

    def __len__(self) -> int:
        return len(self.triples)

    def triple(self, eps: float) -> ShockTriple:
        idx = np.flatnonzero(np.isclose(self.eps_values, eps, rtol=1e-12, atol=0.0))
        if idx.size == 0:
            raise KeyError(f"eps={eps} is not a member of the family")
        return self.triples[int(idx[0])]


def rh_residual(model: ModelSpec, v_minus, v_plus, s: float) -> np.ndarray:
    return (model.flux(v_plus) - model.flux(v_minus)
            - s * (model.density(v_plus) - model.density(v_minus)))


def _off_k(model: ModelSpec) -> np.ndarray:
    return np.array([j for j in range(model.n) if j != model.kk], dtype=int)


def solve_rankine_hugoniot(model: ModelSpec, eps: float, guess: Optional[ShockTriple] = None,
                           tol: float = RH_TOL, max_iter: int = NEWTON_MAX_ITER,
                           check_uniqueness: bool = True) -> ShockTriple:
    """Newton solve for the pinned shock triple at amplitude ``eps``.

    Unknowns are the off-k components y of v+ (v- carries -y) and the speed s.
    """
    require_normalized(model)
    if not 0 < eps <= model.delta:
        raise ConfigError(f"eps={eps} outside (0, delta={model.delta}]")
    n, kk = model.n, model.kk
    off = _off_k(model)
    ek = np.zeros(n)
    ek[kk] = 1.0
    if guess is None:
        y = np.zeros(n - 1)
        s = float(eigen_fields(model, np.zeros(n)).mu[kk])
    else:
        y = 0.5 * (np.asarray(guess.v_plus)[off] - np.asarray(guess.v_minus)[off])
        s = float(guess.s)

    def states(y):
        vp = eps * ek.copy()
        vp[off] = y
        return -vp, vp

    for it in range(max_iter + 1):
        vm, vp = states(y)
        res = rh_residual(model, vm, vp, s)
        err = float(np.abs(res).max())
        if err < tol:
            break
        if it == max_iter or not np.isfinite(err):
            raise NewtonDivergence(f"Rankine-Hugoniot Newton stalled at residual {err:.3e}")
        jac_y = (model.flux_jac(vp) + model.flux_jac(vm)
                 - s * (model.density_jac(vp) + model.density_jac(vm)))[:, off]
        jac_s = -(model.density(vp) - model.density(vm))
        J = np.column_stack([jac_y, jac_s])
        step = np.linalg.solve(J, -res)
        y = y + step[:-1]
        s = s + step[-1]
    triple = ShockTriple(vm, vp, float(s), err)
    if check_uniqueness:
        check_hugoniot_uniqueness(model, eps, triple)
    return triple


def _uniqueness_seeds(model: ModelSpec, eps: float) -> np.ndarray:
    n, kk = model.n, model.kk
    seeds = []
    for c in (-2.5, -1.5, -0.5, 0.5, 1.5, 2.5):
        p = np.zeros(n)
        p[kk] = c * eps
        seeds.append(p)
    rng = np.random.default_rng(20240611)
    while len(seeds) < UNIQUENESS_SEEDS:
        d = rng.normal(size=n)
        seeds.append(2.0 * eps * d / np.linalg.norm(d))
    return np.array(seeds)


def check_hugoniot_uniqueness(model: ModelSpec, eps: float, triple: ShockTriple,
                              max_iter: int = NEWTON_MAX_ITER) -> None:
    """Multi-start search for a third solution of f - s g = const in B_{3 eps}(0)."""
    s = triple.s
    target = model.flux(triple.v_minus) - s * model.density(triple.v_minus)
    known = [triple.v_minus, triple.v_plus]
    for seed in _uniqueness_seeds(model, eps):
        v = seed.copy()
        converged = False
        for _ in range(max_iter):
            res = model.flux(v) - s * model.density(v) - target
            if np.abs(res).max() < 1e-13 * max(1.0, np.abs(target).max()) + 1e-15:
                converged = True
                break
            J = model.flux_jac(v) - s * model.density_jac(v)
            try:
                v = v - np.linalg.solve(J, res)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(v)) or np.linalg.norm(v) > 10 * eps:
                break
        if not converged or np.linalg.norm(v) >= 3 * eps:
            continue
        if min(np.linalg.norm(v - w) for w in known) > 1e-6 * eps:
            raise NonUniqueHugoniotPoint(f"extra Hugoniot point {v} for eps={eps}")


def classify_lax(model: ModelSpec, triple: ShockTriple, tol: float = LAX_TOL) -> Optional[int]:
    """Return the (1-based) family p of a Lax p-shock, or None."""
    mu_m = eigen_fields(model, triple.v_minus).mu
    mu_p = eigen_fields(model, triple.v_plus).mu
    s = triple.s
    gaps = np.concatenate([mu_m - s, mu_p - s])
    if np.abs(gaps).min() < tol:
        raise MarginalShock(f"characteristic speed within {tol:g} of the shock speed")
    for p in range(model.n):
        if not mu_p[p] < s < mu_m[p]:
            continue
        others = [j for j in range(model.n) if j != p]
        if all((mu_m[j] - s) * (mu_p[j] - s) > 0 for j in others):
            return p + 1
    return None


def build_shock_family(model: ModelSpec, eps_list: Sequence[float],
                       constant: float = 10.0) -> ShockFamily:
    """Continue pinned shocks in eps from the smallest amplitude upward.

    ``constant`` is the O(eps) / O(eps^2) constant used when checking that
    s(eps) -> mu_k(0) with vanishing slope and that v± = ±eps e_k + O(eps^2).
    """
    eps = np.asarray(list(eps_list), dtype=float)
    if eps.size == 0:
        return ShockFamily(eps, tuple(), model)
    if np.any(np.diff(eps) <= 0):
        raise ConfigError("eps list must be strictly increasing")
    triples = []
    guess = None
    for e in eps:
        triple = solve_rankine_hugoniot(model, float(e), guess)
        p = classify_lax(model, triple)
        if p != model.k:
            raise FamilyInvariantViolation(f"eps={e}: triple is not a Lax {model.k}-shock")
        triples.append(triple)
        guess = triple
    family = ShockFamily(eps, tuple(triples), model)
    check_family(model, family, constant)
    return family


def check_family(model: ModelSpec, family: ShockFamily, constant: float = 10.0) -> None:
    kk = model.kk
    mu_k = float(eigen_fields(model, np.zeros(model.n)).mu[kk])
    ek = np.zeros(model.n)
    ek[kk] = 1.0
    for e, t in zip(family.eps_values, family.triples):
        if t.residual >= 1e-10:
            raise FamilyInvariantViolation(f"eps={e}: RH residual {t.residual:.2e}")
        if abs(t.v_plus[kk] - e) > 1e-14 or abs(t.v_minus[kk] + e) > 1e-14:
            raise FamilyInvariantViolation(f"eps={e}: pinning lost")
        dev = max(np.linalg.norm(t.v_plus - e * ek), np.linalg.norm(t.v_minus + e * ek))
        if dev > constant * e * e:
            raise FamilyInvariantViolation(f"eps={e}: end states deviate by {dev:.2e}")
        if abs(t.s - mu_k) > constant * e * e:
            raise FamilyInvariantViolation(f"eps={e}: speed {t.s} far from mu_k(0)={mu_k}")
    if len(family) >= 2:
        e1, e2 = family.eps_values[:2]
        s1, s2 = family.s_of_eps[:2]
        slope = (s2 - s1) / (e2 - e1)
        if abs(slope) > constant * e2:
            raise FamilyInvariantViolation(f"speed slope {slope:.3e} is not O(eps)")


def speed_slope_at_zero(family: ShockFamily) -> float:
    """Finite-difference estimate of s'(0) from the two smallest amplitudes."""
    if len(family) < 2:
        raise ValueError("need two family members")
    e1, e2 = family.eps_values[:2]
    s1, s2 = family.s_of_eps[:2]
    return float((s2 - s1) / (e2 - e1))


def write_family_csv(family: ShockFamily, path) -> Path:
    path = Path(path)
    n = family.triples[0].v_minus.size if family.triples else 0
    header = (["eps", "s"] + [f"v_minus_{i}" for i in range(n)]
              + [f"v_plus_{i}" for i in range(n)])
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for e, t in zip(family.eps_values, family.triples):
            writer.writerow([repr(float(e)), repr(t.s)] + [repr(float(x)) for x in t.v_minus]
                            + [repr(float(x)) for x in t.v_plus])
    return path
