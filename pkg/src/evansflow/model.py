"""Conservation-law models g(v)_t + f(v)_x = B(v_xx - v_tt).

Models carry polynomial fluxes f and g.  This module checks the standing
structural hypotheses, computes generalized characteristic fields, brings a
model into the normalized frame (u* = 0, B = I, Df(0) - mu_k Dg(0) diagonal)
and applies Lorentz boosts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import (
    ConfigError,
    DegenerateMetric,
    EigenvalueCollision,
    EvansflowError,
    GNLViolation,
    NonSymmetricFlux,
    NotDiagonalizable,
    SplittingInvalid,
    SuperluminalSpeed,
)
from .polynomial import PolyMap

DEFINITENESS_MARGIN = 1e-8
EIGEN_GAP_TOL = 1e-6
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A hyperbolically regularized system of conservation laws."""

    n: int
    k: int
    f: PolyMap
    g: PolyMap
    B: np.ndarray
    u_star: np.ndarray
    delta: float
    name: str = "model"

    def __post_init__(self):
        if not 1 <= self.n <= 8:
            raise ConfigError(f"state dimension n={self.n} outside 1..8")
        if self.k not in (1, self.n):
            raise ConfigError(f"shock index k={self.k} must be 1 or n")
        if self.f.n != self.n or self.g.n != self.n:
            raise ConfigError("flux tables do not match the state dimension")
        if self.f.degree > 4 or self.g.degree > 4:
            raise ConfigError("flux degree exceeds 4")
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.shape != (self.n, self.n):
            raise ConfigError("B must be an n x n matrix")
        u_star = np.asarray(self.u_star, dtype=float).reshape(self.n)
        if not self.delta > 0:
            raise ConfigError("domain radius must be positive")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "u_star", u_star)

    @property
    def kk(self) -> int:
        """Zero-based index of the shock family."""
        return self.k - 1

    # evaluation helpers
    def flux(self, v):
        return self.f(v)

    def density(self, v):
        return self.g(v)

    def flux_jac(self, v):
        return self.f.jacobian(v)

    def density_jac(self, v):
        return self.g.jacobian(v)

    def flux_hess(self, v):
        return self.f.hessian(v)

    def density_hess(self, v):
        return self.g.hessian(v)

    # serialization
    @classmethod
    def from_config(cls, cfg: dict) -> "ModelSpec":
        try:
            n = int(cfg["n"])
            k = int(cfg["k"])
            f = PolyMap.from_monomials(n, cfg["f"])
            g = PolyMap.from_monomials(n, cfg["g"])
            B = np.asarray(cfg.get("B", np.eye(n).ravel().tolist()), dtype=float).reshape(n, n)
            u_star = np.asarray(cfg.get("u_star", [0.0] * n), dtype=float)
            delta = float(cfg.get("delta", 1.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model config: {exc}") from exc
        return cls(n, k, f, g, B, u_star, delta, name=str(cfg.get("name", "model")))

    def to_config(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "k": self.k,
            "f": self.f.to_monomials(),
            "g": self.g.to_monomials(),
            "B": self.B.ravel().tolist(),
            "u_star": self.u_star.tolist(),
            "delta": self.delta,
        }


def load_model(path) -> ModelSpec:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model config {path}: {exc}") from exc
    return ModelSpec.from_config(cfg)


@dataclass(frozen=True)
class EigenData:
    """Generalized eigenpairs of Df(v) relative to Dg(v), sorted ascending."""

    mu: np.ndarray
    r: np.ndarray
    order: np.ndarray


@dataclass(frozen=True)
class AssumptionReport:
    flags: dict
    margins: dict
    gnl_value: float
    a_value: float
    gamma0: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())


# ----------------------------------------------------------------------------
# built-in models


def hyperbolic_burgers(B: float = 1.0, delta: float = 0.45) -> ModelSpec:
    """Scalar law v_t + (-v^2)_x = B(v_xx - v_tt)."""
    f = PolyMap.from_monomials(1, [{"exponents": [2], "component": 0, "coefficient": -1.0}])
    g = PolyMap.linear(np.eye(1))
    return ModelSpec(1, 1, f, g, np.array([[B]]), np.zeros(1), delta, name="hyperbolic_burgers")


def decoupled_pair(swapped: bool = False, delta: float = 0.45) -> ModelSpec:
    """Two decoupled laws with fluxes -v1^2 and 0.5 v2 (optionally swapped)."""
    burgers, transport = (1, 0) if swapped else (0, 1)
    e_b = [0, 0]
    e_b[burgers] = 2
    e_t = [0, 0]
    e_t[transport] = 1
    f = PolyMap.from_monomials(2, [
        {"exponents": e_b, "component": burgers, "coefficient": -1.0},
        {"exponents": e_t, "component": transport, "coefficient": 0.5},
    ])
    g = PolyMap.linear(np.eye(2))
    return ModelSpec(2, 1, f, g, np.eye(2), np.zeros(2), delta, name="decoupled_pair")


# ----------------------------------------------------------------------------
# checks


def _lorentz_factor(s: float) -> float:
    return 1.0 / np.sqrt(1.0 - s * s)


def _sym_min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def flux_symmetry_defect(p: PolyMap) -> float:
    """Largest coefficient of Dp - Dp^T, zero for gradient fields."""
    J = p.jacobian.coeffs
    return float(np.max(np.abs(J - np.swapaxes(J, 0, 1)))) if J.size else 0.0


def _sample_points(model: ModelSpec, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = [model.u_star.copy()]
    for _ in range(max(count - 1, 0)):
        d = rng.normal(size=model.n)
        d /= np.linalg.norm(d)
        radius = model.delta * rng.uniform() ** (1.0 / model.n)
        pts.append(model.u_star + radius * d)
    return np.array(pts)


def validate_assumptions(model: ModelSpec, sample_count: int = 32, seed: int = 0,
                         margin: float = DEFINITENESS_MARGIN) -> AssumptionReport:
    """Check symmetry, definiteness, simple characteristic speeds and genuine nonlinearity.

    Symmetry of Df and Dg is checked on the coefficient tables; definiteness
    and eigenvalue gaps are checked on ``sample_count`` points of the ball of
    radius ``model.delta`` around ``u_star`` (the base point is always included).
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    for label, p in (("f", model.f), ("g", model.g)):
        defect = flux_symmetry_defect(p)
        scale = max(1.0, p.max_abs_coefficient())
        if defect > SYMMETRY_TOL * scale:
            raise NonSymmetricFlux(f"D{label} is not symmetric (defect {defect:.3e})")
    if np.max(np.abs(model.B - model.B.T)) > SYMMETRY_TOL * max(1.0, np.abs(model.B).max()):
        raise NonSymmetricFlux("B is not symmetric")
    dg_star = model.density_jac(model.u_star)
    dg_margin = _sym_min_eig(dg_star)
    b_margin = _sym_min_eig(model.B)
    if dg_margin <= margin:
        raise DegenerateMetric(f"Dg(u*) not positive definite (min eigenvalue {dg_margin:.3e})")
    if b_margin <= margin:
        raise DegenerateMetric(f"B not positive definite (min eigenvalue {b_margin:.3e})")

    pts = _sample_points(model, sample_count, seed)
    metric_margin = np.inf
    gap_margin = np.inf
    plus_margin = np.inf
    minus_margin = np.inf
    for v in pts:
        Df = model.flux_jac(v)
        Dg = model.density_jac(v)
        metric_margin = min(metric_margin, _sym_min_eig(Dg))
        plus_margin = min(plus_margin, _sym_min_eig(Dg + Df))
        minus_margin = min(minus_margin, _sym_min_eig(Dg - Df))
        if _sym_min_eig(Dg) > 0:
            mu = sla.eigh(Df, Dg, eigvals_only=True)
            if mu.size > 1:
                gap_margin = min(gap_margin, float(np.diff(mu).min()))
    if model.n == 1:
        gap_margin = np.inf

    flags = {
        "A1": bool(metric_margin > margin and b_margin > margin),
        "A2": bool(metric_margin > margin and gap_margin > EIGEN_GAP_TOL),
        "A4": bool(min(plus_margin, minus_margin) > margin),
    }
    margins = {
        "metric": float(metric_margin),
        "B": float(b_margin),
        "eigen_gap": float(gap_margin),
        "Dg_plus_Df": float(plus_margin),
        "Dg_minus_Df": float(minus_margin),
    }
    details = {}
    gnl = a_value = gamma0 = float("nan")
    if flags["A1"] and flags["A2"]:
        try:
            normal, _ = normalize_model(model)
            gnl = genuine_nonlinearity_coeff(normal, check=False)
            r_k = eigen_fields(normal, np.zeros(model.n)).r[:, model.kk]
            a_value = gnl / (2.0 * np.linalg.norm(r_k) ** 3)
            mu_k = eigen_fields(model, model.u_star).mu[model.kk]
            gamma0 = _lorentz_factor(mu_k) if abs(mu_k) < 1 else float("nan")
        except EvansflowError as exc:
            details["normalization_error"] = str(exc)
    flags["A3"] = bool(np.isfinite(gnl) and gnl < 0)
    return AssumptionReport(flags, margins, float(gnl), float(a_value), float(gamma0), details)


def eigen_fields(model: ModelSpec, v, gap_tol: float = EIGEN_GAP_TOL) -> EigenData:
    """Sorted generalized eigenpairs Df(v) r = mu Dg(v) r with r^T Dg r = I.

    The sign of each eigenvector is fixed by making its largest-magnitude entry
    positive (lowest index on ties).
    """
    v = np.asarray(v, dtype=float)
    Df = model.flux_jac(v)
    Dg = model.density_jac(v)
    try:
        mu, R = sla.eigh(0.5 * (Df + Df.T), 0.5 * (Dg + Dg.T))
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetric(f"Dg({v}) is not positive definite") from exc
    if mu.size > 1 and np.diff(mu).min() < gap_tol:
        raise EigenvalueCollision(f"eigenvalue gap {np.diff(mu).min():.3e} below {gap_tol:.1e}")
    R = _fix_signs(R)
    return EigenData(mu=mu, r=R, order=np.arange(model.n))


def _fix_signs(R: np.ndarray) -> np.ndarray:
    R = R.copy()
    for j in range(R.shape[1]):
        col = R[:, j]
        idx = int(np.argmax(np.abs(col) >= np.abs(col).max() * (1 - 1e-12)))
        if col[idx] < 0:
            R[:, j] = -col
    return R


def transform_model(model: ModelSpec, shift, M: np.ndarray, L: np.ndarray, **changes) -> ModelSpec:
    """Substitute v = shift + M w and left-multiply the equation by L.

    The fluxes are re-centred so that f(0) = g(0) = 0 in the new variables.
    """
    shift = np.asarray(shift, dtype=float)
    f_new = model.f.compose_affine(shift, M).left_multiply(L)
    g_new = model.g.compose_affine(shift, M).left_multiply(L)
    f0 = PolyMap(np.zeros((1, model.n), dtype=np.int64), L @ model.flux(shift)[:, None])
    g0 = PolyMap(np.zeros((1, model.n), dtype=np.int64), L @ model.density(shift)[:, None])
    f_new = f_new.combine(f0, 1.0, -1.0)
    g_new = g_new.combine(g0, 1.0, -1.0)
    B_new = L @ model.B @ M
    params = dict(n=model.n, k=model.k, f=_drop_tiny(f_new), g=_drop_tiny(g_new), B=B_new,
                  u_star=np.zeros(model.n), delta=model.delta, name=model.name)
    params.update(changes)
    return ModelSpec(**params)


def _drop_tiny(p: PolyMap, rel: float = 1e-15) -> PolyMap:
    if not p.coeffs.size:
        return p
    cutoff = rel * max(p.max_abs_coefficient(), 1.0)
    keep = np.any(np.abs(p.coeffs.reshape(-1, p.exponents.shape[0])) > cutoff, axis=0)
    coeffs = np.where(np.abs(p.coeffs) > cutoff, p.coeffs, 0.0)
    return PolyMap(p.exponents[keep], coeffs[..., keep])


def normalize_model(model: ModelSpec, tol: float = 1e-10) -> tuple[ModelSpec, np.ndarray]:
    """Return an equivalent model in the normalized frame and the orthogonal basis change.

    The new unknown w is related to v by ``v = u* + B^{-1/2} Q w`` and the
    equation is multiplied by ``Q^T B^{-1/2}``, so B becomes the identity and
    symmetry is preserved.  Q diagonalizes Df(0) - mu_k(0) Dg(0) with its zero
    in slot k and e_k pointing along r_k(0); the remaining slots hold the
    nonzero entries in ascending order.
    """
    evals, evecs = np.linalg.eigh(0.5 * (model.B + model.B.T))
    if evals.min() <= 0:
        raise DegenerateMetric("B not positive definite")
    root_inv = evecs @ np.diag(evals ** -0.5) @ evecs.T
    scaled = transform_model(model, model.u_star, root_inv, root_inv)
    eig = eigen_fields(scaled, np.zeros(model.n))
    mu_k = eig.mu[model.kk]
    D = scaled.flux_jac(np.zeros(model.n)) - mu_k * scaled.density_jac(np.zeros(model.n))
    D = 0.5 * (D + D.T)
    lam, Q = np.linalg.eigh(D)
    zero_slot = int(np.argmin(np.abs(lam)))
    if zero_slot != model.kk:
        order = [j for j in range(model.n) if j != zero_slot]
        order.insert(model.kk, zero_slot)
        lam, Q = lam[order], Q[:, order]
    Q = _fix_signs(Q)
    r_k = eig.r[:, model.kk]
    if Q[:, model.kk] @ r_k < 0:
        Q[:, model.kk] *= -1
    residual = np.abs(Q.T @ D @ Q - np.diag(lam)).max()
    scale = max(1.0, np.abs(D).max())
    align = abs(abs(Q[:, model.kk] @ r_k) / np.linalg.norm(r_k) - 1.0)
    if residual > tol * scale or abs(lam[model.kk]) > tol * scale or align > 1e-8:
        raise NotDiagonalizable(
            f"diagonalization residual {residual:.2e}, slot value {lam[model.kk]:.2e}")
    normal = transform_model(scaled, np.zeros(model.n), Q, Q.T,
                             delta=model.delta * float(np.sqrt(evals.min())))
    normal = replace(normal, B=np.eye(model.n))
    return normal, Q


def genuine_nonlinearity_coeff(model: ModelSpec, fd_step: float = 1e-4, rtol: float = 1e-6,
                               check: bool = True) -> float:
    """Directional derivative of mu_k along r_k at the base point.

    Computed both by centred differences of mu_k(t r_k) and by the closed form
    r_k . (D^2 f - mu_k D^2 g)[r_k, r_k], which equals
    |r_k|^3 (d_k^2 f_k - mu_k d_k^2 g_k) once e_k is parallel to r_k.
    """
    base = model.u_star
    eig = eigen_fields(model, base)
    mu_k = eig.mu[model.kk]
    r_k = eig.r[:, model.kk]
    hess = model.flux_hess(base) - mu_k * model.density_hess(base)
    closed = float(np.einsum("i,ijl,j,l->", r_k, hess, r_k, r_k))
    plus = eigen_fields(model, base + fd_step * r_k, gap_tol=0.0).mu[model.kk]
    minus = eigen_fields(model, base - fd_step * r_k, gap_tol=0.0).mu[model.kk]
    fd = (plus - minus) / (2 * fd_step)
    if abs(fd - closed) > rtol * max(abs(closed), 1.0):
        raise EvansflowError(f"GNL routes disagree: closed form {closed}, difference {fd}")
    if check and closed >= 0:
        raise GNLViolation(f"genuine nonlinearity coefficient {closed} is not negative")
    return closed


def lorentz_boost(model: ModelSpec, s: float, check: bool = True, tol: float = 1e-10) -> ModelSpec:
    """Boost with speed s: f_s = gamma (f - s g), g_s = gamma (g - s f)."""
    if not abs(s) < 1:
        raise SuperluminalSpeed(f"boost speed {s} is not subluminal")
    if s == 0:
        return model
    gamma = _lorentz_factor(s)
    f_s = model.f.combine(model.g, gamma, -gamma * s)
    g_s = model.g.combine(model.f, gamma, -gamma * s)
    boosted = replace(model, f=f_s, g=g_s)
    if check:
        mu = eigen_fields(model, model.u_star, gap_tol=0.0).mu
        mu_s = eigen_fields(boosted, model.u_star, gap_tol=0.0).mu
        expected = np.sort((mu - s) / (1 - mu * s))
        if np.abs(mu_s - expected).max() > tol:
            raise EvansflowError("boosted eigenvalues violate the relativistic velocity law")
    return boosted


def boost_factor(s: float) -> float:
    """gamma(s) = (1 - s^2)^(-1/2)."""
    if not abs(s) < 1:
        raise SuperluminalSpeed(f"boost speed {s} is not subluminal")
    return _lorentz_factor(s)


def inertia_split(F: np.ndarray, Vminus: np.ndarray, Vplus: np.ndarray,
                  margin: float = DEFINITENESS_MARGIN) -> tuple[int, int, int]:
    """Inertia (negative, zero, positive counts) of a symmetric matrix.

    ``Vminus`` and ``Vplus`` hold basis columns of subspaces on which F is
    claimed negative and positive definite.  The claim is verified and the
    counts must equal their dimensions.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n = F.shape[0]
    Vm = np.asarray(Vminus, dtype=float).reshape(n, -1)
    Vp = np.asarray(Vplus, dtype=float).reshape(n, -1)
    if np.abs(F - F.T).max(initial=0.0) > SYMMETRY_TOL * max(1.0, np.abs(F).max(initial=0.0)):
        raise SplittingInvalid("F is not symmetric")

    def restricted(V):
        Qv, _ = np.linalg.qr(V)
        return np.linalg.eigvalsh(Qv.T @ F @ Qv)

    if Vm.shape[1] and restricted(Vm).max() > -margin:
        raise SplittingInvalid("F is not negative definite on V-")
    if Vp.shape[1] and restricted(Vp).min() < margin:
        raise SplittingInvalid("F is not positive definite on V+")
    lam, U = np.linalg.eigh(F)
    zero_tol = 1e-10 * max(1.0, np.abs(lam).max(initial=0.0))
    neg = int(np.sum(lam < -zero_tol))
    pos = int(np.sum(lam > zero_tol))
    zero = n - neg - pos
    kernel = U[:, np.abs(lam) <= zero_tol]
    span = np.hstack([Vm, kernel, Vp])
    if span.shape[1] != n or np.linalg.matrix_rank(span) < n:
        raise SplittingInvalid("V- + ker F + V+ does not span the space")
    if neg != Vm.shape[1] or pos != Vp.shape[1]:
        raise SplittingInvalid(f"inertia ({neg}, {zero}, {pos}) contradicts subspace dimensions")
    return neg, zero, pos


def brute_inertia(F: np.ndarray, zero_tol: float = 1e-10) -> tuple[int, int, int]:
    lam = np.linalg.eigvalsh(F)
    tol = zero_tol * max(1.0, np.abs(lam).max(initial=0.0))
    neg = int(np.sum(lam < -tol))
    pos = int(np.sum(lam > tol))
    return neg, len(lam) - neg - pos, pos


def require_normalized(model: ModelSpec, tol: float = 1e-12) -> None:
    """Raise unless u* = 0, f(0) = g(0) = 0 and B = I."""
    zero = np.zeros(model.n)
    if (np.abs(model.u_star).max() > tol or np.abs(model.flux(zero)).max() > tol
            or np.abs(model.density(zero)).max() > tol
            or np.abs(model.B - np.eye(model.n)).max() > tol):
        raise ConfigError("operation requires a normalized model (see normalize_model)")


def coupled_pair(coupling: float = 0.1, cubic: float = 0.5, delta: float = 0.3) -> ModelSpec:
    """Two coupled laws, f the gradient of -v1^3/3 + d v1^4/4 + v2^2/4 + c v1^2 v2, g = id."""
    c = float(coupling)
    f = PolyMap.from_monomials(2, [
        {"exponents": [3, 0], "component": 0, "coefficient": float(cubic)},
        {"exponents": [2, 0], "component": 0, "coefficient": -1.0},
        {"exponents": [1, 1], "component": 0, "coefficient": 2 * c},
        {"exponents": [0, 1], "component": 1, "coefficient": 0.5},
        {"exponents": [2, 0], "component": 1, "coefficient": c},
    ])
    g = PolyMap.linear(np.eye(2))
    return ModelSpec(2, 1, f, g, np.eye(2), np.zeros(2), delta, name="coupled_pair")
