"""Small-amplitude shock profiles and their slow-manifold description.

In the rest frame of the shock the profile solves ``phi' = f_eps(phi) - c_eps``.
Writing ``phi = eps u`` gives ``u' = F_eps(u)`` whose slow manifold is a graph
over the k-th coordinate ``tau in [-1, 1]``; on it the flow reduces to the scalar
equation ``chi' = eps (1 - chi^2) h_eps(chi)``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy.integrate import solve_ivp

from .errors import ConfigError, EndpointMiss, SlowManifoldDivergence
from .model import (
    ModelSpec,
    boost_factor,
    eigen_fields,
    genuine_nonlinearity_coeff,
    lorentz_boost,
)
from .shock import ShockFamily

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FenichelData:
    eps: float
    a: float
    gamma0: float
    c_eps: np.ndarray
    boosted: ModelSpec = field(repr=False)
    v_minus: np.ndarray = field(repr=False, default=None)
    v_plus: np.ndarray = field(repr=False, default=None)

    @property
    def scaled_c(self) -> np.ndarray:
        """eps^-1 c_eps."""
        return self.c_eps / self.eps

    def F_eps(self, u) -> np.ndarray:
        """Rescaled profile field u -> eps^-1 f_eps(eps u) - eps^-1 c_eps."""
        u = np.asarray(u)
        return self.boosted.flux(self.eps * u) / self.eps - self.scaled_c

    def DF_eps(self, u) -> np.ndarray:
        return self.boosted.flux_jac(self.eps * np.asarray(u))


def quadratic_coefficient(model: ModelSpec) -> float:
    """a = (d_k^2 f_k - mu_k d_k^2 g_k) / 2 in the normalized frame."""
    gnl = genuine_nonlinearity_coeff(model)
    r_k = eigen_fields(model, np.zeros(model.n)).r[:, model.kk]
    return float(gnl / (2.0 * np.linalg.norm(r_k) ** 3))


def fenichel_data(model: ModelSpec, family: ShockFamily, eps: float) -> FenichelData:
    triple = family.triple(eps)
    mu_k0 = float(eigen_fields(model, np.zeros(model.n)).mu[model.kk])
    gamma0 = boost_factor(mu_k0)
    boosted = lorentz_boost(model, triple.s)
    c_eps = boosted.flux(triple.v_minus)
    return FenichelData(float(eps), quadratic_coefficient(model), gamma0, c_eps, boosted,
                        triple.v_minus, triple.v_plus)


# ----------------------------------------------------------------------------
# slow manifold


def lobatto_nodes(count: int) -> np.ndarray:
    """Chebyshev-Lobatto points on [-1, 1] in ascending order."""
    return -np.cos(np.pi * np.arange(count) / (count - 1))


@dataclass(frozen=True, eq=False)
class SlowManifold:
    """Graph tau -> u_eps(tau) over J = [-1, 1] and the slow speed h_eps(tau)."""

    eps: float
    k: int
    tau_grid: np.ndarray
    u: np.ndarray
    h: np.ndarray
    u_coeffs: np.ndarray = field(repr=False)
    h_coeffs: np.ndarray = field(repr=False)
    iterations: int = 0
    endpoint_defect: float = 0.0

    def u_at(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        out = np.array(np.moveaxis(cheb.chebval(tau, self.u_coeffs), 0, -1), dtype=float)
        out[..., self.k - 1] = tau
        return out

    def du_at(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        d = cheb.chebder(self.u_coeffs)
        out = np.array(np.moveaxis(cheb.chebval(tau, d), 0, -1), dtype=float)
        out[..., self.k - 1] = 1.0
        return out

    def h_at(self, tau) -> np.ndarray:
        return cheb.chebval(np.asarray(tau, dtype=float), self.h_coeffs)


def chebyshev_diff_matrix(tau: np.ndarray) -> np.ndarray:
    """Differentiation matrix of the polynomial interpolant through ``tau``."""
    N = tau.size
    coeffs = cheb.chebfit(tau, np.eye(N), N - 1)
    return cheb.chebval(tau, cheb.chebder(coeffs)).T


def compute_slow_manifold(model: ModelSpec, family: ShockFamily, eps: float,
                          tau_nodes: int = 33, tol: float = 1e-13,
                          max_iter: int = 50) -> SlowManifold:
    """Collocate the invariant graph of the rescaled profile field.

    The off-k components solve the graph condition
    ``F_j(u(tau)) = u_j'(tau) F_k(u(tau))`` at Chebyshev-Lobatto nodes.
    Starting from u_j = 0, the collocated system is solved by Newton's method.
    """
    data = fenichel_data(model, family, eps)
    n, kk = model.n, model.kk
    off = np.array([j for j in range(n) if j != kk], dtype=int)
    tau = lobatto_nodes(tau_nodes)
    U = np.zeros((tau_nodes, n))
    U[:, kk] = tau
    deg = tau_nodes - 1
    iterations = 0
    if off.size:
        D = chebyshev_diff_matrix(tau)
        m = off.size
        for iterations in range(1, max_iter + 1):
            Fvals = np.array([data.F_eps(u) for u in U])
            Jvals = np.array([data.DF_eps(u) for u in U])
            dU = D @ U[:, off]
            res = (Fvals[:, off] - dU * Fvals[:, [kk]]).ravel()
            if np.abs(res).max() < tol:
                break
            J = np.zeros((tau_nodes * m, tau_nodes * m))
            for i in range(tau_nodes):
                blk = slice(i * m, (i + 1) * m)
                J[blk, blk] = (Jvals[i][np.ix_(off, off)]
                               - np.outer(dU[i], Jvals[i][kk, off]))
                for r in range(m):
                    J[i * m + r, r::m] -= Fvals[i, kk] * D[i]
            try:
                step = np.linalg.solve(J, -res)
            except np.linalg.LinAlgError as exc:
                raise SlowManifoldDivergence("singular collocation Jacobian") from exc
            U[:, off] += step.reshape(tau_nodes, m)
            if not np.all(np.isfinite(U)) or np.abs(U[:, off]).max() > 1e3:
                raise SlowManifoldDivergence("slow-manifold iteration blew up")
        else:
            raise SlowManifoldDivergence(f"no convergence after {max_iter} Newton steps")
    Fk = np.array([data.F_eps(u)[kk] for u in U])
    h = np.empty(tau_nodes)
    interior = slice(1, -1)
    h[interior] = Fk[interior] / (eps * (1 - tau[interior] ** 2))
    # l'Hopital at tau = -1, +1 using the derivative of F_k along the graph
    dFk = cheb.chebval(tau[[0, -1]], cheb.chebder(cheb.chebfit(tau, Fk, deg)))
    h[0] = dFk[0] / (eps * 2.0)
    h[-1] = dFk[1] / (-eps * 2.0)
    u_coeffs = cheb.chebfit(tau, U, deg)
    h_coeffs = cheb.chebfit(tau, h, deg)
    defect = max(np.abs(U[0] - data.v_minus / eps).max(), np.abs(U[-1] - data.v_plus / eps).max())
    return SlowManifold(float(eps), model.k, tau, U, h, u_coeffs, h_coeffs, iterations,
                        float(defect))


# ----------------------------------------------------------------------------
# profiles


@dataclass(frozen=True, eq=False)
class ProfileGrid:
    x: np.ndarray
    phi: np.ndarray
    chi: np.ndarray
    L: float
    eps: float
    manifold: Optional[SlowManifold] = field(default=None, repr=False)
    _chi_dense: Optional[tuple] = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    def chi_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._chi_dense is None:
            return np.interp(x, self.x, self.chi)
        left, right = self._chi_dense
        return np.where(x >= 0, right(np.clip(x, 0, None)), left(np.clip(x, None, 0)))

    def phi_at(self, x) -> np.ndarray:
        """Profile at arbitrary x in [-L, L]."""
        if self.manifold is None:
            x = np.asarray(x, dtype=float)
            return np.stack([np.interp(x, self.x, self.phi[:, j])
                             for j in range(self.phi.shape[1])], axis=-1)
        return self.eps * self.manifold.u_at(self.chi_at(x))


def default_length(eps: float, a: float, gamma0: float, factor: float = 12.0) -> float:
    return factor / (eps * abs(gamma0 * a))


def integrate_profile(model: ModelSpec, family: ShockFamily, eps: float,
                      L: Optional[float] = None, tol: float = 1e-10,
                      nodes: int = 4001, manifold: Optional[SlowManifold] = None,
                      direct_check: Optional[bool] = None) -> ProfileGrid:
    """Profile phi_eps = eps u_eps(chi_eps) on [-L, L] from the midpoint condition.

    The slow coordinate is integrated from chi(0) = 0 in both directions with
    dense output.  Along the way the full profile equation is checked through
    the invariance defect of the slow graph.  For scalar laws (and on request)
    the profile equation is also shot directly from phi(0) = eps u_eps(0) and
    compared with the reduced solution.
    """
    data = fenichel_data(model, family, eps)
    if manifold is None:
        manifold = compute_slow_manifold(model, family, eps)
    L_min = 10.0 / (eps * abs(data.gamma0 * data.a))
    if L is None:
        L = default_length(eps, data.a, data.gamma0)
    if L < L_min * (1 - 1e-12):
        raise ConfigError(f"L={L} below the decay length {L_min:.3g}")

    def slow(x, chi):
        return eps * (1 - chi ** 2) * manifold.h_at(chi)

    rtol = min(1e-3 * tol, 1e-13)
    right = solve_ivp(slow, (0.0, L), [0.0], method="DOP853", rtol=rtol, atol=1e-3 * tol,
                      dense_output=True)
    left = solve_ivp(slow, (0.0, -L), [0.0], method="DOP853", rtol=rtol, atol=1e-3 * tol,
                     dense_output=True)
    if not (right.success and left.success):
        raise EndpointMiss("slow-coordinate integration failed")
    x = np.linspace(-L, L, nodes)
    chi = np.where(x >= 0, right.sol(np.clip(x, 0, None))[0], left.sol(np.clip(x, None, 0))[0])
    phi = eps * manifold.u_at(chi)

    # invariance defect of the reduced solution in the full profile equation
    dphi = eps * manifold.du_at(chi) * (eps * (1 - chi ** 2) * manifold.h_at(chi))[:, None]
    field_vals = data.boosted.flux(phi) - data.c_eps
    defect = float(np.abs(dphi - field_vals).max())
    diag = {"invariance_defect": defect, "manifold_endpoint_defect": manifold.endpoint_defect}
    if defect > max(1e3 * tol, 1e-12) * max(1.0, eps):
        raise EndpointMiss(f"reduced profile violates the profile equation by {defect:.2e}")

    if direct_check is None:
        direct_check = model.n == 1
    if direct_check:
        def full(xx, p):
            return data.boosted.flux(p) - data.c_eps

        phi0 = eps * manifold.u_at(0.0)
        fr = solve_ivp(full, (0.0, L), phi0, method="DOP853", rtol=rtol, atol=1e-3 * tol * eps,
                       dense_output=True)
        fl = solve_ivp(full, (0.0, -L), phi0, method="DOP853", rtol=rtol, atol=1e-3 * tol * eps,
                       dense_output=True)
        direct = np.where((x >= 0)[:, None], fr.sol(np.clip(x, 0, None)).T,
                          fl.sol(np.clip(x, None, 0)).T)
        diag["direct_gap"] = float(np.abs(direct - phi).max())
        if diag["direct_gap"] > 100 * tol:
            raise EndpointMiss(f"direct shooting departs from the slow profile by "
                               f"{diag['direct_gap']:.2e}")
    miss = max(np.abs(phi[0] - data.v_minus).max(), np.abs(phi[-1] - data.v_plus).max())
    diag["endpoint_miss"] = float(miss)
    if miss > 10 * tol:
        raise EndpointMiss(f"profile misses its end states by {miss:.2e} at L={L}")
    if np.any(np.diff(chi) < -1e-2 * tol):
        raise EndpointMiss("slow coordinate is not monotone")
    return ProfileGrid(x, phi, chi, float(L), float(eps), manifold,
                       (lambda xx: left.sol(xx)[0], lambda xx: right.sol(xx)[0]), diag)


def profile_residual(model: ModelSpec, family: ShockFamily, grid: ProfileGrid) -> float:
    """Max interior centred-difference residual of phi' = f_eps(phi) - c_eps."""
    triple = family.triple(grid.eps)
    boosted = lorentz_boost(model, triple.s)
    c_eps = boosted.flux(triple.v_minus)
    x, phi = grid.x, grid.phi
    dphi = (phi[2:] - phi[:-2]) / (x[2:] - x[:-2])[:, None]
    rhs = boosted.flux(phi[1:-1]) - c_eps
    return float(np.abs(dphi - rhs).max()) if len(x) > 2 else 0.0


def write_profile_csv(grid: ProfileGrid, path) -> Path:
    path = Path(path)
    n = grid.phi.shape[1]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "chi"] + [f"phi_{j}" for j in range(n)])
        for xi, ci, pi in zip(grid.x, grid.chi, grid.phi):
            writer.writerow([repr(float(xi)), repr(float(ci))] + [repr(float(p)) for p in pi])
    return path


# ----------------------------------------------------------------------------
# shared rest-frame data


class ShockContext:
    """Rest-frame data of one family member, including the limit eps = 0.

    Bundles the normalized model, the end states, the boosted fluxes and
    (lazily) the slow manifold and profile so that the spectral and Evans
    routines can share them.
    """

    def __init__(self, model: ModelSpec, eps: float, family: Optional[ShockFamily] = None,
                 tau_nodes: int = 33):
        from .shock import build_shock_family  # local import keeps module order simple

        self.model = model
        self.eps = float(eps)
        self.n = model.n
        self.kk = model.kk
        eig0 = eigen_fields(model, np.zeros(model.n))
        self.mu0 = eig0.mu
        self.r0 = eig0.r
        self.a = quadratic_coefficient(model)
        self.gamma0 = boost_factor(float(eig0.mu[model.kk]))
        self._tau_nodes = tau_nodes
        if self.eps == 0.0:
            self.family = None
            self.s = float(eig0.mu[model.kk])
            self.v_minus = np.zeros(model.n)
            self.v_plus = np.zeros(model.n)
        else:
            if family is None or not np.any(np.isclose(family.eps_values, eps, rtol=1e-12, atol=0)):
                family = build_shock_family(model, [eps])
            self.family = family
            triple = family.triple(eps)
            self.s = triple.s
            self.v_minus = triple.v_minus
            self.v_plus = triple.v_plus
        self.boosted = lorentz_boost(model, self.s)
        self.c_eps = self.boosted.flux(self.v_minus)
        self._manifold = None
        self._profiles = {}

    # boosted Jacobians
    def Df(self, v) -> np.ndarray:
        return self.boosted.flux_jac(v)

    def Dg(self, v) -> np.ndarray:
        return self.boosted.density_jac(v)

    @property
    def Dg0(self) -> np.ndarray:
        """Boosted Dg at the origin in the eps = 0 frame."""
        base = lorentz_boost(self.model, float(self.mu0[self.kk]))
        return base.density_jac(np.zeros(self.n))

    @property
    def Df0(self) -> np.ndarray:
        base = lorentz_boost(self.model, float(self.mu0[self.kk]))
        return base.flux_jac(np.zeros(self.n))

    @property
    def manifold(self) -> Optional[SlowManifold]:
        if self.eps == 0.0:
            return None
        if self._manifold is None:
            self._manifold = compute_slow_manifold(self.model, self.family, self.eps,
                                                   tau_nodes=self._tau_nodes)
        return self._manifold

    def u_at(self, tau) -> np.ndarray:
        """Slow graph u_eps(tau); the straight line tau e_k when eps = 0."""
        tau = np.asarray(tau, dtype=float)
        if self.eps == 0.0:
            out = np.zeros(tau.shape + (self.n,))
            out[..., self.kk] = tau
            return out
        return self.manifold.u_at(tau)

    def state_at_tau(self, tau) -> np.ndarray:
        return self.eps * self.u_at(tau)

    def h_at(self, tau):
        if self.eps == 0.0:
            return -self.gamma0 * self.a * np.ones_like(np.asarray(tau, dtype=float))
        return self.manifold.h_at(tau)

    def profile(self, L: Optional[float] = None, tol: float = 1e-10) -> ProfileGrid:
        if self.eps == 0.0:
            raise ConfigError("no profile at eps = 0")
        key = (None if L is None else float(L), float(tol))
        if key not in self._profiles:
            self._profiles[key] = integrate_profile(self.model, self.family, self.eps, L=L,
                                                    tol=tol, manifold=self.manifold)
        return self._profiles[key]
