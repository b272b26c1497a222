"""Laplace-mode first-order systems, endpoint splittings and dispersion checks.

The eigenvalue problem of the linearization about a profile is written as
``xi' = A(x) xi`` with ``xi = (p, q)`` in C^{2n}.  Two scalings are used: the
standard one in the spectral parameter kappa and the inner one in
``zeta = kappa / eps^2`` with ``q = eps q_tilde``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CenterEigenvalue,
    GroupAssignmentAmbiguous,
    ScalingMismatch,
    SKViolation,
)
from .model import ModelSpec
from .profile import ShockContext

CENTER_TOL = 1e-9


def _context(model, eps, family=None) -> ShockContext:
    if isinstance(model, ShockContext):
        return model
    return ShockContext(model, eps, family)


# ----------------------------------------------------------------------------
# matrices


@dataclass(frozen=True)
class SpectralMatrix:
    A: np.ndarray
    scaling: str
    eps: float
    param: complex
    location: np.ndarray


def standard_block(Df: np.ndarray, Dg: np.ndarray, kappa: complex) -> np.ndarray:
    n = Df.shape[0]
    eye = np.eye(n)
    return np.block([[Df.astype(complex), eye], [kappa ** 2 * eye + kappa * Dg, np.zeros((n, n))]])


def inner_block(Df: np.ndarray, Dg: np.ndarray, eps: float, zeta: complex) -> np.ndarray:
    n = Df.shape[0]
    eye = np.eye(n)
    return np.block([[Df.astype(complex), eps * eye],
                     [eps ** 3 * zeta ** 2 * eye + eps * zeta * Dg, np.zeros((n, n))]])


def assemble_spectral_matrix(model, eps: float, spectral_param: complex, location,
                             scaling: str = "standard", family=None,
                             location_kind: Optional[str] = None) -> SpectralMatrix:
    """Block matrix of the Laplace-mode system.

    ``location`` is a state v for ``location_kind="state"`` and a slow
    coordinate tau (mapped to the state eps u_eps(tau)) for ``"tau"``.  The
    standard scaling defaults to states, the inner scaling to tau.
    """
    if scaling not in ("standard", "inner"):
        raise ValueError(f"unknown scaling {scaling!r}")
    if location_kind is None:
        location_kind = "state" if scaling == "standard" else "tau"
    if scaling == "standard" and eps == 0 and location_kind == "tau":
        raise ScalingMismatch("standard scaling is singular on the slow manifold at eps = 0")
    ctx = _context(model, eps, family)
    if location_kind == "tau":
        v = ctx.state_at_tau(float(np.asarray(location).reshape(())))
    else:
        v = np.asarray(location, dtype=float).reshape(ctx.n)
    Df, Dg = ctx.Df(v), ctx.Dg(v)
    if scaling == "standard":
        A = standard_block(Df, Dg, complex(spectral_param))
    else:
        A = inner_block(Df, Dg, ctx.eps, complex(spectral_param))
    return SpectralMatrix(A, scaling, ctx.eps, complex(spectral_param), v)


def similarity_defect(model, eps: float, zeta: complex, v, family=None) -> float:
    """Max deviation between the inner matrix and the rescaled standard matrix at kappa = eps^2 zeta."""
    if eps <= 0:
        raise ScalingMismatch("similarity requires eps > 0")
    ctx = _context(model, eps, family)
    std = assemble_spectral_matrix(ctx, eps, eps ** 2 * zeta, v, "standard").A
    inn = assemble_spectral_matrix(ctx, eps, zeta, v, "inner", location_kind="state").A
    n = ctx.n
    S = np.diag(np.r_[np.ones(n), eps * np.ones(n)])
    return float(np.abs(np.linalg.solve(S, std @ S) - inn).max())


# ----------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplittingReport:
    minus: dict
    plus: dict
    gap: float
    consistent: bool
    eigenvalues_minus: np.ndarray = field(repr=False)
    eigenvalues_plus: np.ndarray = field(repr=False)


def _count(eigs: np.ndarray, tol: float) -> dict:
    re = eigs.real
    return {"stable": int(np.sum(re < -tol)), "unstable": int(np.sum(re > tol)),
            "center": int(np.sum(np.abs(re) <= tol))}


def endpoint_splitting(model, eps: float, kappa: complex, family=None,
                       center_tol: float = CENTER_TOL) -> SplittingReport:
    """Counts of stable/unstable eigenvalues of the endpoint matrices A-(kappa), A+(kappa)."""
    ctx = _context(model, eps, family)
    kappa = complex(kappa)
    Am = standard_block(ctx.Df(ctx.v_minus), ctx.Dg(ctx.v_minus), kappa)
    Ap = standard_block(ctx.Df(ctx.v_plus), ctx.Dg(ctx.v_plus), kappa)
    em = np.linalg.eigvals(Am)
    ep = np.linalg.eigvals(Ap)
    cm, cp = _count(em, center_tol), _count(ep, center_tol)
    if kappa != 0 and (cm["center"] or cp["center"]):
        raise CenterEigenvalue(f"kappa={kappa}: eigenvalue on the imaginary axis")
    hyper = np.concatenate([em.real[np.abs(em.real) > center_tol],
                            ep.real[np.abs(ep.real) > center_tol]])
    gap = float(np.abs(hyper).min()) if hyper.size else 0.0
    n = ctx.n
    consistent = (cm["center"] == 0 and cp["center"] == 0
                  and cm["unstable"] == n and cp["stable"] == n)
    return SplittingReport(cm, cp, gap, bool(consistent), em, ep)


# ----------------------------------------------------------------------------
# Shizuta-Kawashima and dispersion


def default_xi_grid() -> np.ndarray:
    return np.logspace(-3, 3, 200)


@dataclass(frozen=True)
class SKReport:
    K0: np.ndarray = field(repr=False)
    sk1: bool
    sk2: bool
    theta: float
    nu: float
    xi0: float
    c_xi0: float
    sk2_margin: float
    xi: np.ndarray = field(repr=False)
    max_re: np.ndarray = field(repr=False)

    @property
    def bound(self) -> np.ndarray:
        return -self.theta * self.xi ** 2 / (1 + self.xi ** 2)


def _min_eig(M):
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def shizuta_kawashima_check(F: np.ndarray, G: np.ndarray, xi_grid: Optional[np.ndarray] = None,
                            xi0: float = 0.1, margin: float = 1e-12) -> SKReport:
    """Verify SK1/SK2 for the endpoint pair (F, G) and extract theta and nu.

    theta is the largest constant with ``Re sigma(i xi K + Q) <= -theta xi^2/(1+xi^2)``
    on the grid (capped by the smallest eigenvalue of G, which covers xi = 0),
    and ``nu = theta min(c^-2, xi0^2) / (1 + xi0^2)`` with ``c`` the largest
    ratio |Im kappa(xi)| / xi on the grid below xi0.  xi0 is halved until the
    grid dispersion curves avoid the region M_nu.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n = F.shape[0]
    if np.abs(F - F.T).max() > 1e-12 or np.abs(G - G.T).max() > 1e-12:
        raise SKViolation("F and G must be symmetric")
    c_G = _min_eig(G)
    if c_G <= margin:
        raise SKViolation("G is not positive definite")
    if _min_eig(G + F) <= margin or _min_eig(G - F) <= margin:
        raise SKViolation("G + F or G - F is not positive definite")
    xi = default_xi_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float)
    eye, zero = np.eye(n), np.zeros((n, n))
    K = np.block([[zero, eye], [eye, zero]])
    Q = np.block([[-G, -F], [zero, zero]])
    K0 = np.block([[G, F], [F, G]])

    sym = lambda M: np.abs(M - M.T).max() <= 1e-12 * max(1.0, np.abs(M).max())
    K0Q = K0 @ Q
    sk1 = bool(_min_eig(K0) > 0 and sym(K0 @ K) and sym(K0Q)
               and np.linalg.eigvalsh(0.5 * (K0Q + K0Q.T)).max() <= 1e-12 * max(1.0, np.abs(K0Q).max()))
    if not sk1:
        raise SKViolation("SK1 fails: K0 K or K0 Q not symmetric, or K0 Q not semi-definite")
    # eigenvectors of K are (e, e) and (e, -e); Q maps them to (-(G +- F) e, 0)
    sk2_margin = min(np.linalg.svd(G + F, compute_uv=False).min(),
                     np.linalg.svd(G - F, compute_uv=False).min())
    sk2 = bool(sk2_margin > margin)
    if not sk2:
        raise SKViolation("SK2 fails: an eigenvector of K lies in ker Q")

    eigs = np.array([np.linalg.eigvals(1j * x * K + Q) for x in xi])
    max_re = eigs.real.max(axis=1)
    theta = float(min(np.min(-max_re * (1 + xi ** 2) / xi ** 2), c_G))
    if theta <= 0:
        raise SKViolation(f"no positive decay constant (theta={theta:.3e})")

    def nu_for(x0):
        sel = xi <= x0
        if not np.any(sel):
            return 0.0, np.inf
        c = float(np.max(np.abs(eigs[sel].imag) / xi[sel][:, None]))
        inv_c2 = np.inf if c == 0 else c ** -2
        return theta / (1 + x0 ** 2) * min(inv_c2, x0 ** 2), c

    x0 = xi0
    nu, c = nu_for(x0)
    for _ in range(40):
        im = eigs.imag
        allowed = -nu * im ** 2 / (1 + im ** 2)
        if np.all(eigs.real <= allowed + 1e-12):
            break
        x0 *= 0.5
        nu, c = nu_for(x0)
    return SKReport(K0, sk1, sk2, theta, float(nu), float(x0), float(c), float(sk2_margin),
                    xi, max_re)


def in_M_nu(kappa: complex, nu: float) -> bool:
    im = kappa.imag
    return bool(-nu * im ** 2 / (1 + im ** 2) < kappa.real)


def M_nu_boundary(nu: float, R: float, count: int) -> np.ndarray:
    """Points of the boundary curve of M_nu with |kappa| <= R, origin excluded."""
    half = count // 2
    y = np.geomspace(1e-3, R, half)
    top = -nu * y ** 2 / (1 + y ** 2) + 1j * y
    pts = np.concatenate([top, top.conj()])
    return pts[np.abs(pts) <= R]


@dataclass(frozen=True)
class DispersionReport:
    minus: SKReport
    plus: SKReport
    nu: float
    boundary_kappa: np.ndarray = field(repr=False)
    boundary_consistent: bool = True

    @property
    def theta(self) -> float:
        return min(self.minus.theta, self.plus.theta)


def dispersion_margin(model, eps: float, xi_grid: Optional[np.ndarray] = None, family=None,
                      R: float = 10.0, boundary_samples: int = 64,
                      shrink: float = 0.5) -> DispersionReport:
    """SK checks at both end states and a consistent-splitting scan of the boundary of M_nu.

    The boundary samples are taken slightly inside M_nu (the boundary scaled
    by ``shrink`` in nu) so that they probe the claimed region itself.
    """
    ctx = _context(model, eps, family)
    reports = []
    for v in (ctx.v_minus, ctx.v_plus):
        F, G = ctx.Df(v), ctx.Dg(v)
        reports.append(shizuta_kawashima_check(0.5 * (F + F.T), 0.5 * (G + G.T), xi_grid))
    nu = min(r.nu for r in reports)
    pts = M_nu_boundary(shrink * nu, R, boundary_samples)
    ok = all(endpoint_splitting(ctx, eps, k).consistent for k in pts)
    return DispersionReport(reports[0], reports[1], nu, pts, bool(ok))


def write_dispersion_csv(report: DispersionReport, path) -> Path:
    path = Path(path)
    xi = report.minus.xi
    bound = -report.theta * xi ** 2 / (1 + xi ** 2)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["xi", "max_Re_lambda_minus", "max_Re_lambda_plus", "bound"])
        for row in zip(xi, report.minus.max_re, report.plus.max_re, bound):
            writer.writerow([repr(float(x)) for x in row])
    return path


# ----------------------------------------------------------------------------
# inner eigenvalue expansions


def slow_roots(gamma0_a: float, dg_kk: float, zeta: complex) -> tuple[complex, complex]:
    """nu_1, nu_2 = gamma0 a +- sqrt((gamma0 a)^2 + (Dg0)_kk zeta), principal branch."""
    root = np.sqrt(complex(gamma0_a ** 2 + dg_kk * zeta))
    return complex(gamma0_a + root), complex(gamma0_a - root)


@dataclass(frozen=True)
class InnerExpansion:
    eps: float
    zeta: complex
    nu1: complex
    nu2: complex
    identity_residuals: dict
    groups: list

    def residuals(self, group: str, end: Optional[str] = None) -> np.ndarray:
        return np.array([g["residual"] for g in self.groups
                         if g["group"] == group and (end is None or g["end"] == end)])


def _assign(predicted: np.ndarray, computed: np.ndarray, labels: Sequence) -> list:
    """Greedy nearest assignment with a collision check on distinct predictions."""
    dist = np.abs(predicted[:, None] - computed[None, :])
    nearest = dist.argmin(axis=1)
    for i, j in itertools.combinations(range(len(predicted)), 2):
        if nearest[i] == nearest[j] and abs(predicted[i] - predicted[j]) > 1e-14 * (
                1 + abs(predicted[i])):
            raise GroupAssignmentAmbiguous(
                f"predictions {labels[i]} and {labels[j]} claim the same eigenvalue")
    order = np.dstack(np.unravel_index(np.argsort(dist, axis=None), dist.shape))[0]
    used_p, used_c, match = set(), set(), {}
    for i, j in order:
        if i in used_p or j in used_c:
            continue
        match[int(i)] = int(j)
        used_p.add(i)
        used_c.add(j)
    return [match[i] for i in range(len(predicted))]


def inner_eigenvalue_expansion(model, eps: float, zeta: complex, family=None) -> InnerExpansion:
    """Predicted eigenvalue groups of the inner matrix at tau = -1, +1 versus an eigensolve."""
    ctx = _context(model, eps, family)
    zeta = complex(zeta)
    n, kk = ctx.n, ctx.kk
    ga = ctx.gamma0 * ctx.a
    dg_kk = float(ctx.Dg0[kk, kk])
    nu1, nu2 = slow_roots(ga, dg_kk, zeta)
    ident = {
        "sum": abs(nu1 + nu2 - 2 * ga),
        "product": abs(nu1 * nu2 + dg_kk * zeta),
        "inverse": abs(-zeta * dg_kk / nu2 - nu1),
    }
    if zeta.real >= 0 and zeta != 0:
        if not (nu1.real > 0 and nu2.real <= ga < 0):
            raise GroupAssignmentAmbiguous("slow roots violate their sign pattern")
    # fast speeds lambda_j and boosted characteristic speeds at the origin
    lam = np.diag(ctx.Df0)
    from scipy.linalg import eigh
    mu_b = eigh(ctx.Df0, ctx.Dg0, eigvals_only=True)
    off = [j for j in range(n) if j != kk]
    mu_off = np.delete(mu_b, kk)

    groups = []
    for end, v in (("minus", ctx.v_minus), ("plus", ctx.v_plus)):
        A = inner_block(ctx.Df(v), ctx.Dg(v), ctx.eps, zeta)
        computed = np.linalg.eigvals(A)
        preds, labels, kinds = [], [], []
        for j in off:
            preds.append(lam[j])
            labels.append(f"fast_{j}")
            kinds.append(("fast", "S" if lam[j] < 0 else "U", "O(eps)"))
        if end == "plus":
            sf = [(eps * nu2, "S"), (-eps * zeta * dg_kk / nu2, "U")]
        else:
            sf = [(eps * zeta * dg_kk / nu2, "S"), (-eps * nu2, "U")]
        for val, tag in sf:
            preds.append(val)
            labels.append(f"slow_fast_{tag}")
            kinds.append(("slow_fast", tag, "O(eps^2)"))
        for j, mu in zip(off, mu_off):
            preds.append(-eps ** 2 * zeta / mu)
            labels.append(f"super_slow_{j}")
            kinds.append(("super_slow", "S" if mu > 0 else "U", "O(eps^2)"))
        preds = np.array(preds, dtype=complex)
        match = _assign(preds, computed, labels)
        for p, lab, kind, j in zip(preds, labels, kinds, match):
            groups.append({"end": end, "label": lab, "group": kind[0], "side": kind[1],
                           "order": kind[2], "predicted": complex(p),
                           "computed": complex(computed[j]),
                           "residual": float(abs(computed[j] - p))})
    return InnerExpansion(ctx.eps, zeta, nu1, nu2, ident, groups)


def basis_limits(model, zeta: complex) -> dict:
    """eps = 0 limits of the slow-fast and super-slow eigenvector directions."""
    ctx = _context(model, 0.0)
    n, kk = ctx.n, ctx.kk
    ga = ctx.gamma0 * ctx.a
    Dg0 = ctx.Dg0
    dg_kk = float(Dg0[kk, kk])
    nu1, nu2 = slow_roots(ga, dg_kk, complex(zeta))
    ek = np.zeros(n)
    ek[kk] = 1.0
    under = Dg0 @ ek / dg_kk
    vec = lambda c: np.concatenate([ek, c * under]).astype(complex)
    from scipy.linalg import eigh
    _, R = eigh(ctx.Df0, Dg0)
    ss = [np.concatenate([np.zeros(n), Dg0 @ R[:, j]]).astype(complex)
          for j in range(n) if j != kk]
    return {"plus_S": vec(-nu1), "plus_U": vec(-nu2), "minus_S": vec(nu2),
            "minus_U": vec(nu1), "super_slow": ss}


def log_log_slope(eps_values: Sequence[float], residuals: Sequence[float]) -> float:
    """Least-squares slope of log(residual) against log(eps)."""
    x = np.log(np.asarray(eps_values, dtype=float))
    y = np.log(np.asarray(residuals, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
