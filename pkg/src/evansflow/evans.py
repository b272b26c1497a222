"""Evans bundles and Evans functions, zero counting, and regime checks.

Boundary subspaces are normalized as graphs ``[I; T]`` over the p-coordinates,
which is an analytic choice of basis wherever the graph exists (every
eigenvector of the block matrix has a nonzero p-part).  Frames are integrated
toward x = 0 under the trace-shifted flow ``Y' = (A(x) - sigma) Y`` with
``n sigma = tr(A|subspace)``, so the asymptotic normalization ``e^{Lambda x}``
cancels exactly; QR steps keep the columns apart and their determinants are
accumulated as a complex log scale.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    BranchCut,
    ConfigError,
    ConstantDrift,
    EigenvalueGroupCollision,
    GapCollapse,
    InstabilityDetected,
    MarginLoss,
    SplittingLost,
    Stiffness,
    ZeroOnContour,
)
from .grassmann import Frame, gap_distance, kato_transport
from .model import eigen_fields, lorentz_boost
from .profile import ProfileGrid, ShockContext
from .spectral import _context

log = logging.getLogger(__name__)

DEFAULT_R0 = 1.0
DEFAULT_R1 = 0.25
DEFAULT_R = 10.0
BURGERS_LENGTH = 40.0
CENTER_TOL = 1e-9
GRAPH_COND_MAX = 1e10
EVANS_RTOL = 1e-10
EVANS_ATOL = 1e-12


# ----------------------------------------------------------------------------
# boundary subspaces


def _coefficients(scaling: str, eps: float, params) -> tuple:
    """(c1, c2, c3) with A = [[Df, c1 I], [c2 I + c3 Dg, 0]]."""
    p = np.atleast_1d(np.asarray(params, dtype=complex))
    if scaling == "standard":
        return 1.0, p ** 2, p
    if scaling == "inner":
        return float(eps), eps ** 3 * p ** 2, eps * p
    raise ConfigError(f"unknown scaling {scaling!r}")


def _block(Df, Dg, c1, c2, c3) -> np.ndarray:
    n = Df.shape[0]
    eye = np.eye(n)
    return np.block([[Df.astype(complex), c1 * eye], [c2 * eye + c3 * Dg, np.zeros((n, n))]])


def _graph_normalize(V: np.ndarray, n: int) -> np.ndarray:
    P = V[:n]
    cond = np.linalg.cond(P)
    if not np.isfinite(cond) or cond > GRAPH_COND_MAX:
        raise SplittingLost(f"boundary subspace is not a graph over p (cond {cond:.2e})")
    return V @ np.linalg.inv(P)


def _boundary_subspace(ctx: ShockContext, v, c1, c2, c3, side: str,
                       center_tol: float = CENTER_TOL) -> tuple[np.ndarray, complex]:
    """Graph basis of the unstable (side 'minus') or stable ('plus') space and its trace."""
    n = ctx.n
    Df, Dg = ctx.Df(v), ctx.Dg(v)
    A = _block(Df, Dg, c1, c2, c3)
    w, V = np.linalg.eig(A)
    want = (lambda re: re > center_tol) if side == "minus" else (lambda re: re < -center_tol)
    if c2 == 0 and c3 == 0:
        # zero spectral parameter: n eigenvalues sit at 0; keep the limit from Re kappa > 0,
        # where the slow eigenvalue -kappa / mu_j is unstable iff mu_j < 0
        keep = want(w.real) & (np.abs(w) > center_tol)
        eig = eigen_fields(ctx.boosted, v)
        mu, r = eig.mu, eig.r
        pick = mu < 0 if side == "minus" else mu > 0
        slow = np.vstack([r[:, pick], -Df @ r[:, pick] / c1]).astype(complex)
        basis = np.hstack([V[:, keep], slow])
    else:
        # eigenvalues are accurate to roundoff in |A|, and the hyperbolicity margin of
        # the super-slow pair shrinks like |kappa|^2 near the imaginary axis
        tol = 1e3 * np.finfo(float).eps * np.abs(A).max()
        if np.any(np.abs(w.real) <= tol):
            raise SplittingLost(f"center eigenvalue at spectral parameter ({c2}, {c3})")
        basis = V[:, w.real > 0 if side == "minus" else w.real < 0]
    if basis.shape[1] != n:
        raise SplittingLost(f"{side} space has dimension {basis.shape[1]}, expected {n}")
    W = _graph_normalize(basis, n)
    trace = complex(np.trace((A @ W)[:n]))
    return W, trace


@dataclass(frozen=True)
class BoundaryFrames:
    U_minus: Frame
    S_plus: Frame
    kappa: complex
    basis_minus: np.ndarray = field(repr=False)
    basis_plus: np.ndarray = field(repr=False)
    trace_minus: complex = 0.0
    trace_plus: complex = 0.0
    invariance_defect: float = 0.0
    cr_residual: Optional[float] = None
    anchors: Optional[np.ndarray] = field(default=None, repr=False)
    transported_gap: Optional[float] = None


def _invariance(A: np.ndarray, W: np.ndarray) -> float:
    AW = A @ W
    Q = np.linalg.qr(W)[0]
    return float(np.linalg.norm(AW - Q @ (Q.conj().T @ AW)) / max(np.linalg.norm(AW), 1e-300))


def _endpoint_blocks(ctx, c1, c2, c3):
    return (_block(ctx.Df(ctx.v_minus), ctx.Dg(ctx.v_minus), c1, c2, c3),
            _block(ctx.Df(ctx.v_plus), ctx.Dg(ctx.v_plus), c1, c2, c3))


def _graph_pair(ctx, kappa, scaling="standard"):
    c1, c2, c3 = _coefficients(scaling, ctx.eps, kappa)
    Wm, tm = _boundary_subspace(ctx, ctx.v_minus, c1, c2[0], c3[0], "minus")
    Wp, tp = _boundary_subspace(ctx, ctx.v_plus, c1, c2[0], c3[0], "plus")
    return Wm, Wp, tm, tp


def _cr_residual(fn: Callable, z: complex, h: float = 1e-4) -> float:
    """Relative d/d(conj z) of a matrix-valued function on a 2-D stencil."""
    scale = h * max(1.0, abs(z))
    dx = (fn(z + scale) - fn(z - scale)) / (2 * scale)
    dy = (fn(z + 1j * scale) - fn(z - 1j * scale)) / (2 * scale)
    dbar = 0.5 * (dx + 1j * dy)
    return float(np.abs(dbar).max() / max(np.abs(dx).max(), np.abs(fn(z)).max(), 1e-300))


def _projector(A: np.ndarray, side: str, dA: Optional[np.ndarray] = None):
    """Spectral projector onto the unstable (minus) or stable (plus) eigenvalues.

    With ``dA`` also returns the derivative of the projector, from the
    eigenbasis form of the resolvent integral.
    """
    w, V = np.linalg.eig(A)
    sel = w.real > 0 if side == "minus" else w.real < 0
    Vinv = np.linalg.inv(V)
    P = V[:, sel] @ Vinv[sel]
    if dA is None:
        return P
    M = Vinv @ dA @ V
    cross = sel[:, None] != sel[None, :]
    diff = w[:, None] - w[None, :]
    D = np.zeros_like(M)
    D[cross] = M[cross] / np.where(sel[:, None], diff, -diff)[cross]
    return P, V @ D @ Vinv


def init_boundary_frames(model, eps: float, kappa: complex,
                         continuation_path: Optional[Sequence[complex]] = None,
                         family=None) -> BoundaryFrames:
    """Unstable space of A-(kappa) and stable space of A+(kappa) with analytic bases.

    Without a path the bases are the graph-normalized eigenspaces.  With a
    path (starting anywhere in the splitting region and ending at ``kappa``)
    the bases at the first node are transported by Kato's equation.
    """
    ctx = _context(model, eps, family)
    kappa = complex(kappa)
    c1, c2, c3 = _coefficients("standard", ctx.eps, kappa)
    Am, Ap = _endpoint_blocks(ctx, c1, c2[0], c3[0])
    if continuation_path is None:
        Wm, Wp, tm, tp = _graph_pair(ctx, kappa)
        cr = None
        if kappa != 0:
            cr = max(_cr_residual(lambda z: _graph_pair(ctx, z)[0], kappa),
                     _cr_residual(lambda z: _graph_pair(ctx, z)[1], kappa))
        defect = max(_invariance(Am, Wm), _invariance(Ap, Wp))
        return BoundaryFrames(Frame.from_basis(Wm), Frame.from_basis(Wp), kappa, Wm, Wp, tm, tp,
                              defect, cr)

    path = np.asarray(list(continuation_path), dtype=complex)
    if path.size < 2:
        raise ConfigError("continuation path needs at least two nodes")
    if abs(path[-1] - kappa) > 1e-12 * max(1.0, abs(kappa)):
        path = np.append(path, kappa)
    # dimensions along the path, with mid-segment samples to catch crossings
    seg = np.abs(np.diff(path))
    t_nodes = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()
    dense_t = np.linspace(0, 1, 8 * path.size)
    for z in np.interp(dense_t, t_nodes, path.real) + 1j * np.interp(dense_t, t_nodes, path.imag):
        cz1, cz2, cz3 = _coefficients("standard", ctx.eps, z)
        Bm, Bp = _endpoint_blocks(ctx, cz1, cz2[0], cz3[0])
        em, ep = np.linalg.eigvals(Bm), np.linalg.eigvals(Bp)
        if (np.any(np.abs(em.real) <= CENTER_TOL) or np.any(np.abs(ep.real) <= CENTER_TOL)
                or np.sum(em.real > 0) != ctx.n or np.sum(ep.real < 0) != ctx.n):
            raise SplittingLost(f"splitting changes along the path near kappa={z:.3g}")

    def projectors(z, side, dz=None):
        cz1, cz2, cz3 = _coefficients("standard", ctx.eps, z)
        Bm, Bp = _endpoint_blocks(ctx, cz1, cz2[0], cz3[0])
        B = Bm if side == "minus" else Bp
        if dz is None:
            return _projector(B, side)
        n = ctx.n
        v = ctx.v_minus if side == "minus" else ctx.v_plus
        dB = np.zeros_like(B)
        dB[n:, :n] = dz * (2 * z * np.eye(n) + ctx.Dg(v))
        return _projector(B, side, dB)[1]

    W0m, W0p, _, _ = _graph_pair(ctx, path[0])
    bases = []
    for side, W0 in (("minus", W0m), ("plus", W0p)):
        # one transport per straight segment, parametrized on [0, 1]
        W = W0
        for za, zb in zip(path[:-1], path[1:]):
            transport = kato_transport(
                lambda t: projectors(za + t * (zb - za), side), np.array([0.0, 1.0]),
                dP_of_param=lambda t: projectors(za + t * (zb - za), side, zb - za))
            W = transport.transforms[-1] @ W
        bases.append(W)
    Wm, Wp = bases
    Gm, Gp, tm, tp = _graph_pair(ctx, kappa)
    moved = max(gap_distance(Frame.from_basis(Wm), Frame.from_basis(Gm)),
                gap_distance(Frame.from_basis(Wp), Frame.from_basis(Gp)))
    tm = complex(np.trace(np.linalg.lstsq(Wm, Am @ Wm, rcond=None)[0]))
    tp = complex(np.trace(np.linalg.lstsq(Wp, Ap @ Wp, rcond=None)[0]))
    defect = max(_invariance(Am, Wm), _invariance(Ap, Wp))
    cr = max(_cr_residual(lambda z: _graph_pair(ctx, z)[0], kappa),
             _cr_residual(lambda z: _graph_pair(ctx, z)[1], kappa))
    return BoundaryFrames(Frame.from_basis(Wm), Frame.from_basis(Wp), kappa, Wm, Wp, tm, tp,
                          defect, cr, path, moved)


# ----------------------------------------------------------------------------
# Evans function


@dataclass(frozen=True)
class EvansSample:
    param: complex
    kind: str
    value: complex
    regime: str
    cond: float
    scalar: float = 1.0
    log_scale: complex = 0.0
    L: float = 0.0
    eps: float = 0.0

    @property
    def kappa(self) -> complex:
        return self.param if self.kind == "kappa" else self.eps ** 2 * self.param


def regime_partition(eps: float, kappa: complex, r0: float = DEFAULT_R0,
                     r1: float = DEFAULT_R1) -> str:
    if r0 <= 0 or r1 <= 0:
        raise ConfigError("regime constants must be positive")
    size = abs(complex(kappa))
    if size <= r0 * eps ** 2:
        return "inner"
    if size < r1:
        return "outer"
    return "outmost"


def _propagate(ctx: ShockContext, profile: ProfileGrid, side: str, W: np.ndarray,
               sigma: np.ndarray, c1: float, c2: np.ndarray, c3: np.ndarray, L: float,
               spread: float, rtol: float, atol: float) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the shifted frames from -L (minus) or +L (plus) to 0."""
    n = ctx.n
    K, N, _ = W.shape
    x_start = -L if side == "minus" else L
    c2b, c3b, sb = c2[:, None, None], c3[:, None, None], sigma[:, None, None]

    def rhs(x, y):
        Y = y.reshape(K, N, n)
        v = profile.phi_at(x)
        Df, Dg = ctx.Df(v), ctx.Dg(v)
        p, q = Y[:, :n], Y[:, n:]
        dp = np.matmul(Df, p) + c1 * q
        dq = c2b * p + c3b * np.matmul(Dg, p)
        return (np.concatenate([dp, dq], axis=1) - sb * Y).ravel()

    Q, R = np.linalg.qr(W)
    logdet = np.sum(np.log(np.diagonal(R, axis1=1, axis2=2)), axis=1)
    pieces = 1 if n == 1 else max(1, int(np.ceil(L * spread / 5.0)))
    edges = np.linspace(x_start, 0.0, pieces + 1)
    Y = Q
    for a, b in zip(edges[:-1], edges[1:]):
        sol = solve_ivp(rhs, (a, b), Y.ravel(), method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise Stiffness(f"frame integration failed on [{a:.3g}, {b:.3g}]: {sol.message}")
        Q, R = np.linalg.qr(sol.y[:, -1].reshape(K, N, n))
        logdet = logdet + np.sum(np.log(np.diagonal(R, axis1=1, axis2=2)), axis=1)
        Y = Q
    return Y, logdet


def _spread(traces_eigs: list) -> float:
    out = 0.0
    for w in traces_eigs:
        if w.size > 1:
            out = max(out, float(w.real.max() - w.real.min()))
    return out


def evans_batch(model, profile: Optional[ProfileGrid], eps: float, params: Sequence[complex],
                scaling: str = "standard", family=None, L: Optional[float] = None,
                r0: float = DEFAULT_R0, r1: float = DEFAULT_R1, rtol: float = EVANS_RTOL,
                atol: float = EVANS_ATOL) -> list:
    """Evans function at many spectral parameters with one shared integration."""
    ctx = _context(model, eps, family)
    if ctx.eps == 0:
        raise ConfigError("Evans integration needs eps > 0; use inner_limit_bundles at eps = 0")
    if profile is None:
        profile = ctx.profile()
    L = profile.L if L is None else float(L)
    if L > profile.L * (1 + 1e-12):
        raise ConfigError(f"L={L} exceeds the profile length {profile.L}")
    params = np.atleast_1d(np.asarray(params, dtype=complex))
    if params.size == 0:
        return []
    n = ctx.n
    c1, c2, c3 = _coefficients(scaling, ctx.eps, params)
    Wm, Wp, sm, sp, eig_m, eig_p = [], [], [], [], [], []
    for j in range(params.size):
        wm, tm = _boundary_subspace(ctx, ctx.v_minus, c1, c2[j], c3[j], "minus")
        wp, tp = _boundary_subspace(ctx, ctx.v_plus, c1, c2[j], c3[j], "plus")
        Wm.append(wm)
        Wp.append(wp)
        sm.append(tm / n)
        sp.append(tp / n)
        Am, Ap = _endpoint_blocks(ctx, c1, c2[j], c3[j])
        eig_m.append(np.linalg.eigvals(np.linalg.lstsq(wm, Am @ wm, rcond=None)[0]))
        eig_p.append(np.linalg.eigvals(np.linalg.lstsq(wp, Ap @ wp, rcond=None)[0]))
    Wm, Wp = np.array(Wm), np.array(Wp)
    sm, sp = np.array(sm), np.array(sp)
    Ym, lm = _propagate(ctx, profile, "minus", Wm, sm, c1, c2, c3, L, _spread(eig_m), rtol, atol)
    Yp, lp = _propagate(ctx, profile, "plus", Wp, sp, c1, c2, c3, L, _spread(eig_p), rtol, atol)
    M = np.concatenate([Ym, Yp], axis=2)
    dets = np.linalg.det(M)
    svals = np.linalg.svd(M, compute_uv=False)
    scalar = ctx.eps ** n if scaling == "inner" else 1.0
    samples = []
    for j, z in enumerate(params):
        log_scale = complex(lm[j] + lp[j])
        value = complex(dets[j] * np.exp(log_scale))
        kappa = z if scaling == "standard" else ctx.eps ** 2 * z
        samples.append(EvansSample(complex(z), "kappa" if scaling == "standard" else "zeta", value,
                                   regime_partition(ctx.eps, kappa, r0, r1),
                                   float(svals[j].min()), scalar, log_scale, L, ctx.eps))
    return samples


def evans_value(model, profile: Optional[ProfileGrid], eps: float, kappa: complex,
                family=None, L: Optional[float] = None, **kw) -> EvansSample:
    """det[U-(0) | S+(0)] for the analytic graph bases, normalized by e^{Lambda x} at -+infinity."""
    return evans_batch(model, profile, eps, [kappa], "standard", family, L, **kw)[0]


def evans_inner(model, profile: Optional[ProfileGrid], eps: float, zeta: complex,
                family=None, L: Optional[float] = None, **kw) -> EvansSample:
    """Evans function of the inner system; ``scalar * value`` equals evans_value at eps^2 zeta."""
    return evans_batch(model, profile, eps, [zeta], "inner", family, L, **kw)[0]


def evaluate_nodes(ctx, profile, params, scaling: str = "standard", workers: int = 1,
                   chunk: int = 64, **kw) -> list:
    """Chunked evaluation, optionally on a thread pool; results keep node order."""
    params = np.atleast_1d(np.asarray(params, dtype=complex))
    chunks = [params[i:i + chunk] for i in range(0, params.size, chunk)]
    run = lambda c: evans_batch(ctx, profile, ctx.eps, c, scaling, **kw)  # noqa: E731
    if workers <= 1 or len(chunks) <= 1:
        parts = [run(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    return [s for part in parts for s in part]


def bundle_transversality(model, profile, eps: float, kappas, family=None, **kw) -> np.ndarray:
    """Minimum singular value of [U-(0) | S+(0)] for orthonormal frames."""
    return np.array([s.cond for s in evans_batch(model, profile, eps, kappas, "standard",
                                                 family, **kw)])


# ----------------------------------------------------------------------------
# Burgers reference


@dataclass(frozen=True)
class BurgersReference:
    zeta_tilde: complex
    h_minus: np.ndarray
    h_plus: np.ndarray
    E_tilde: complex


def _burgers_rates(zt: np.ndarray) -> np.ndarray:
    if np.any((np.abs((1 + zt).imag) <= 1e-14) & ((1 + zt).real <= 0)):
        raise BranchCut("1 + zeta_tilde lies on the branch cut (-inf, 0]")
    return np.sqrt(1 + zt)


def burgers_batch(zeta_tilde, L0: float = BURGERS_LENGTH, rtol: float = 1e-12,
                  atol: float = 1e-14) -> list:
    zt = np.atleast_1d(np.asarray(zeta_tilde, dtype=complex))
    if zt.size == 0:
        return []
    root = _burgers_rates(zt)
    K = zt.size
    out = {}
    for side, sign in (("minus", 1.0), ("plus", -1.0)):
        # -inf: A = [[2, 1], [z, 0]], rate 1 + root, vector (1, root - 1)
        # +inf: A = [[-2, 1], [z, 0]], rate -1 - root, vector (1, 1 - root)
        rate = sign * (1 + root)
        start = np.stack([np.ones(K, dtype=complex), sign * (root - 1)], axis=1)

        def rhs(x, y, rate=rate):
            Y = y.reshape(K, 2)
            p, q = Y[:, 0], Y[:, 1]
            dp = -2 * np.tanh(x) * p + q - rate * p
            dq = zt * p - rate * q
            return np.stack([dp, dq], axis=1).ravel()

        x0 = -L0 if side == "minus" else L0
        sol = solve_ivp(rhs, (x0, 0.0), start.ravel(), method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise Stiffness(f"Burgers reference integration failed: {sol.message}")
        out[side] = sol.y[:, -1].reshape(K, 2)
    hm, hp = out["minus"], out["plus"]
    E = hm[:, 0] * hp[:, 1] - hm[:, 1] * hp[:, 0]
    return [BurgersReference(complex(z), hm[j], hp[j], complex(E[j])) for j, z in enumerate(zt)]


def burgers_reference(zeta_tilde: complex, L0: float = BURGERS_LENGTH) -> BurgersReference:
    """Decaying solutions of p' = -2 tanh(x) p + q, q' = zeta_tilde p at x = 0."""
    return burgers_batch([zeta_tilde], L0)[0]


def translation_mode_residual(L0: float = BURGERS_LENGTH, points: int = 801) -> float:
    """Residual of p = sech^2 x, q = 0 in the zeta_tilde = 0 system, and its match
    with the numerically integrated left bundle (normalized as sech^2(x) / 4)."""
    x = np.linspace(-L0, L0, points)
    p = 1 / np.cosh(x) ** 2
    dp = -2 * np.tanh(x) * p
    analytic = float(np.abs(dp - (-2 * np.tanh(x) * p + 0.0)).max())

    def rhs(xx, y):
        return np.array([-2 * np.tanh(xx) * y[0] + y[1] - 2 * y[0], -2 * y[1]])

    xs = x[x <= 0]
    sol = solve_ivp(rhs, (-L0, 0.0), [1.0, 0.0], method="DOP853", t_eval=xs, rtol=1e-13,
                    atol=1e-15)
    numeric = 4 * sol.y[0] * np.exp(2 * xs)
    return max(analytic, float(np.abs(numeric - p[x <= 0]).max()), float(np.abs(sol.y[1]).max()))


# ----------------------------------------------------------------------------
# eps = 0 inner limit


@dataclass(frozen=True)
class InnerLimit:
    zeta: complex
    zeta_tilde: complex
    H_minus: np.ndarray
    H_plus: np.ndarray
    E0: complex
    c: complex
    reference: BurgersReference


def zeta_tilde_of(ctx: ShockContext, zeta) -> complex:
    dg = float(ctx.Dg0[ctx.kk, ctx.kk])
    return (ctx.gamma0 * ctx.a) ** -2 * dg * np.asarray(zeta, dtype=complex)


def _limit_frames(ctx: ShockContext, zeta: complex):
    n, kk = ctx.n, ctx.kk
    Df0, Dg0 = ctx.Df0, ctx.Dg0
    zt = complex(zeta_tilde_of(ctx, zeta))
    ref = burgers_reference(zt)
    ek = np.zeros(n)
    ek[kk] = 1.0
    scale = ctx.gamma0 * abs(ctx.a)
    slow_q = Dg0 @ ek / Dg0[kk, kk]
    lam = np.diag(Df0)
    base = lorentz_free_eigs(ctx)
    cols = {"minus": [], "plus": []}
    for side, h in (("minus", ref.h_minus), ("plus", ref.h_plus)):
        cols[side].append(np.r_[h[0] * ek, scale * h[1] * slow_q])
    for j in range(n):
        if j == kk:
            continue
        fast = np.zeros(2 * n, dtype=complex)
        fast[j] = 1.0
        cols["minus" if lam[j] > 0 else "plus"].append(fast)
        sup = np.r_[np.zeros(n), Dg0 @ base.r[:, j]].astype(complex)
        cols["minus" if base.mu[j] < 0 else "plus"].append(sup)
    Hm, Hp = np.array(cols["minus"]).T, np.array(cols["plus"]).T
    if Hm.shape[1] != n or Hp.shape[1] != n:
        raise SplittingLost("inner limit bundles do not split n / n")
    return Hm, Hp, ref


def lorentz_free_eigs(ctx: ShockContext):
    """Generalized eigenpairs of (Df0, Dg0) in the eps = 0 rest frame."""
    return eigen_fields(lorentz_boost(ctx.model, float(ctx.mu0[ctx.kk])), np.zeros(ctx.n))


def inner_limit_bundles(model, zeta: complex, check_zeta: complex = 0.5 + 0.5j,
                        rtol: float = 1e-8) -> InnerLimit:
    """Limit bundles H-+_0(zeta) assembled from the Burgers reference, and E_0 = det."""
    ctx = _context(model, 0.0)
    zeta = complex(zeta)
    Hm, Hp, ref = _limit_frames(ctx, zeta)
    E0 = complex(np.linalg.det(np.hstack([Hm, Hp])))
    samples = [z for z in (zeta, complex(check_zeta), 1.0 + 0.0j) if abs(z) > 1e-12]
    consts = []
    for z in samples:
        hm, hp, r = _limit_frames(ctx, z)
        consts.append(np.linalg.det(np.hstack([hm, hp])) / r.E_tilde)
    c = complex(consts[0])
    drift = max(abs(x - c) for x in consts) / abs(c)
    if drift > rtol:
        raise ConstantDrift(f"E0 / E_tilde varies by {drift:.2e} across zeta samples")
    return InnerLimit(zeta, ref.zeta_tilde, Hm, Hp, E0, c, ref)


# ----------------------------------------------------------------------------
# winding numbers and zero counts


@dataclass(frozen=True)
class Contour:
    nodes: np.ndarray
    params: np.ndarray
    closed: bool = True
    delta: float = 0.0
    R: float = 0.0


def halfplane_point(t, delta: float, R: float) -> np.ndarray:
    """Counter-clockwise boundary of {Re k >= 0, delta <= |k| <= R} for t in [0, 4)."""
    t = np.asarray(t, dtype=float)
    piece = np.clip(np.floor(t), 0, 3)
    s = t - piece
    arc = R * np.exp(1j * (-np.pi / 2 + np.pi * s))
    upper = 1j * R * (delta / R) ** s
    indent = delta * np.exp(1j * (np.pi / 2 - np.pi * s))
    lower = -1j * delta * (R / delta) ** s
    return np.select([piece == 0, piece == 1, piece == 2], [arc, upper, indent], lower)


def halfplane_contour(delta: float, R: float = DEFAULT_R, arc_nodes: int = 64,
                      axis_per_decade: int = 12, indent_nodes: int = 24) -> Contour:
    if not 0 < delta < R:
        raise ConfigError("need 0 < delta < R")
    axis = max(8, int(np.ceil(axis_per_decade * np.log10(R / delta))))
    t = np.concatenate([np.arange(arc_nodes) / arc_nodes,
                        1 + np.arange(axis) / axis,
                        2 + np.arange(indent_nodes) / indent_nodes,
                        3 + np.arange(axis) / axis])
    return Contour(halfplane_point(t, delta, R), t, True, float(delta), float(R))


def _values(samples) -> np.ndarray:
    return np.array([s.value if isinstance(s, EvansSample) else s for s in samples], dtype=complex)


def _increments(vals: np.ndarray, closed: bool) -> np.ndarray:
    ring = np.append(vals, vals[0]) if closed else vals
    return np.angle(ring[1:] / ring[:-1])


def winding_number(samples, closed: bool = True, zero_tol: float = 1e-12) -> int:
    """Winding of ordered values around 0 from principal argument increments."""
    vals = _values(samples)
    scale = float(np.median(np.abs(vals))) if vals.size else 0.0
    if vals.size == 0 or np.any(np.abs(vals) <= zero_tol * max(scale, 1e-300)):
        raise ZeroOnContour("Evans function vanishes (numerically) on the contour")
    inc = _increments(vals, closed)
    if np.abs(inc).max() >= np.pi / 2:
        raise ZeroOnContour("argument increment >= pi/2; contour needs refinement")
    total = inc.sum() / (2 * np.pi)
    w = int(np.rint(total))
    if abs(total - w) > 1e-6:
        raise ZeroOnContour(f"non-integral winding {total}")
    return w


def refine_winding(evaluate: Callable, point: Callable, t: np.ndarray, period: float,
                   max_rounds: int = 10, zero_tol: float = 1e-12) -> tuple[int, np.ndarray, list]:
    """Insert parameter midpoints where |d arg| >= pi/2 until the winding is resolved."""
    t = np.asarray(t, dtype=float)
    samples = list(evaluate(point(t)))
    for _ in range(max_rounds + 1):
        vals = _values(samples)
        inc = _increments(vals, True)
        bad = np.flatnonzero(np.abs(inc) >= np.pi / 2)
        if bad.size == 0:
            return winding_number(samples, True, zero_tol), t, samples
        t_next = np.append(t[1:], t[0] + period)
        mids = 0.5 * (t[bad] + t_next[bad]) % period
        new = list(evaluate(point(mids)))
        order = np.argsort(np.concatenate([t, mids]), kind="stable")
        t = np.concatenate([t, mids])[order]
        pool = samples + new
        samples = [pool[i] for i in order]
    raise ZeroOnContour("argument increments unresolved after refinement")


@dataclass
class ZeroCountReport:
    winding: int
    E0: complex
    dE0: complex
    median_abs: float
    delta: float
    R: float
    eps: float
    contour: Contour = field(repr=False)
    samples: list = field(repr=False, default_factory=list)

    @property
    def stable(self) -> bool:
        return self.winding == 0 and abs(self.dE0) > 0

    def to_dict(self) -> dict:
        return {"winding": self.winding, "E0": [self.E0.real, self.E0.imag],
                "dE0": [self.dE0.real, self.dE0.imag], "median_abs_E": self.median_abs,
                "contour_params": {"delta": self.delta, "R": self.R, "eps": self.eps,
                                   "nodes": int(len(self.contour.nodes))},
                "verdict": "stable" if self.stable else "unstable"}


def origin_derivative(ctx, profile, h: float = 0.1, **kw) -> tuple[complex, complex]:
    """E(0) and one-sided dE/dzeta(0) from zeta = h, h/2, h/4 with Richardson steps.

    Both are returned in the kappa-normalization (inner values times eps^n)."""
    s = evans_batch(ctx, profile, ctx.eps, [0.0, h, h / 2, h / 4], "inner", **kw)
    E = np.array([x.value * x.scalar for x in s])
    D = (E[1:] - E[0]) / np.array([h, h / 2, h / 4])
    D1 = 2 * D[1:] - D[:-1]
    return complex(E[0]), complex((4 * D1[1] - D1[0]) / 3)


def count_zeros_halfplane(model, profile: Optional[ProfileGrid], eps: float, R: float = DEFAULT_R,
                          delta: Optional[float] = None, family=None, arc_nodes: int = 64,
                          axis_per_decade: int = 12, indent_nodes: int = 24, workers: int = 1,
                          raise_on_instability: bool = False, r0: float = DEFAULT_R0,
                          r1: float = DEFAULT_R1) -> ZeroCountReport:
    ctx = _context(model, eps, family)
    if profile is None:
        profile = ctx.profile()
    if delta is None:
        delta = 1e-3 * ctx.eps ** 2
    contour = halfplane_contour(delta, R, arc_nodes, axis_per_decade, indent_nodes)

    def evaluate(kappas):
        return evaluate_nodes(ctx, profile, kappas, "standard", workers, r0=r0, r1=r1)

    w, t, samples = refine_winding(evaluate, lambda tt: halfplane_point(tt, delta, R),
                                   contour.params, 4.0)
    contour = Contour(halfplane_point(t, delta, R), t, True, float(delta), float(R))
    E0, dE0 = origin_derivative(ctx, profile)
    med = float(np.median(np.abs(_values(samples))))
    report = ZeroCountReport(int(w), E0, dE0, med, float(delta), float(R), ctx.eps, contour,
                             samples)
    if w > 0:
        log.warning("winding %d: eigenvalues in the right half plane", w)
        if raise_on_instability:
            raise InstabilityDetected(f"winding number {w} > 0", report)
    return report


def write_sweep_csv(samples: Sequence[EvansSample], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["re_kappa", "im_kappa", "re_E", "im_E", "regime", "cond"])
        for s in samples:
            k = s.kappa
            value = s.value * s.scalar
            writer.writerow([repr(k.real), repr(k.imag), repr(value.real), repr(value.imag),
                             s.regime, repr(s.cond)])
    return path


def write_zero_count_json(report: ZeroCountReport, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    return path


# ----------------------------------------------------------------------------
# outer regime


@dataclass(frozen=True)
class OuterReport:
    alpha: float
    beta: float
    kappa_hat: complex
    min_gap: float
    terminal_distance: float
    mu_sf_minus: complex
    mu_sf_plus: complex
    y: np.ndarray = field(repr=False)
    gaps: np.ndarray = field(repr=False)

    @property
    def lands(self) -> bool:
        return self.terminal_distance < 1e-6


def _slow_outer_matrix(ctx: ShockContext, alpha: float, beta: float, kappa_hat: complex,
                       tau: float) -> np.ndarray:
    """(p_k, q) block of the beta-rescaled outer system with the fast p_j slaved to 0."""
    n, kk = ctx.n, ctx.kk
    if beta > 0 and ctx.eps > 0:
        v = ctx.state_at_tau(tau)
        F = ctx.Df(v)[kk, kk] / beta
        dg = ctx.Dg(v)[:, kk]
    else:
        F = 2 * alpha * ctx.a * ctx.gamma0 * tau
        dg = ctx.Dg0[:, kk]
    M = np.zeros((n + 1, n + 1), dtype=complex)
    M[0, 0] = F
    M[0, 1 + kk] = 1.0
    M[1:, 0] = kappa_hat * dg
    M[1 + kk, 0] += beta ** 2 * kappa_hat ** 2
    return M


def _slow_lines(M: np.ndarray) -> tuple[complex, np.ndarray, np.ndarray]:
    w, V = np.linalg.eig(M)
    iu, is_ = int(np.argmax(w.real)), int(np.argmin(w.real))
    if w[iu].real <= 0 or w[is_].real >= 0:
        raise GapCollapse("slow-fast eigenvalues are not split")
    return complex(w[iu]), V[:, [iu]], V[:, [is_]]


def outer_transversality(model, alpha: float, beta: float, kappa_hat: complex,
                         family=None, threshold: float = 1e-6, samples: int = 401) -> OuterReport:
    """Transport the slow-fast unstable line along the slow outer flow.

    eps = alpha beta; the slow time is y = beta x and tau' = alpha (1 - tau^2) h(tau).
    """
    kappa_hat = complex(kappa_hat)
    if abs(abs(kappa_hat) - 1) > 1e-12 or kappa_hat.real < -1e-14:
        raise ConfigError("kappa_hat must be a unit complex number with Re >= 0")
    if alpha < 0 or beta < 0:
        raise ConfigError("alpha and beta must be nonnegative")
    ctx = _context(model, alpha * beta, family)

    if alpha == 0:
        M = _slow_outer_matrix(ctx, 0.0, beta, kappa_hat, -1.0)
        mu, up, st = _slow_lines(M)
        g = gap_distance(Frame.from_basis(up), Frame.from_basis(st))
        y = np.zeros(1)
        if g < threshold:
            raise GapCollapse(f"gap {g:.2e} below {threshold:g}")
        return OuterReport(alpha, beta, kappa_hat, g, 0.0, mu, mu, y, np.array([g]))

    rate = alpha * ctx.gamma0 * abs(ctx.a)
    Y = 14.0 / rate
    tau_sol = [solve_ivp(lambda yy, tt: alpha * (1 - tt ** 2) * ctx.h_at(tt), (0.0, end), [0.0],
                         method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
               for end in (-Y, Y)]

    def tau_at(yy):
        return float(tau_sol[0].sol(yy)[0] if yy < 0 else tau_sol[1].sol(yy)[0])

    mu_m, line, _ = _slow_lines(_slow_outer_matrix(ctx, alpha, beta, kappa_hat, tau_at(-Y)))
    z0 = line[:, 0] / np.linalg.norm(line[:, 0])

    def rhs(yy, z):
        M = _slow_outer_matrix(ctx, alpha, beta, kappa_hat, tau_at(yy))
        Mz = M @ z
        return Mz - (np.vdot(z, Mz) / np.vdot(z, z)) * z

    ys = np.linspace(-Y, Y, samples)
    sol = solve_ivp(rhs, (-Y, Y), z0, method="DOP853", t_eval=ys, rtol=1e-11, atol=1e-13)
    if not sol.success:
        raise Stiffness(f"slow outer transport failed: {sol.message}")
    gaps = np.empty(ys.size)
    for j, yy in enumerate(ys):
        _, _, st = _slow_lines(_slow_outer_matrix(ctx, alpha, beta, kappa_hat, tau_at(yy)))
        gaps[j] = gap_distance(Frame.from_basis(sol.y[:, [j]]), Frame.from_basis(st))
    mu_p, up, _ = _slow_lines(_slow_outer_matrix(ctx, alpha, beta, kappa_hat, tau_at(Y)))
    terminal = gap_distance(Frame.from_basis(sol.y[:, [-1]]), Frame.from_basis(up))
    report = OuterReport(alpha, beta, kappa_hat, float(gaps.min()), float(terminal), mu_m, mu_p,
                         ys, gaps)
    if report.min_gap < threshold:
        raise GapCollapse(f"transported line comes within {report.min_gap:.2e} of the stable "
                          f"direction at alpha={alpha}, beta={beta}, kappa_hat={kappa_hat}")
    return report


def outer_grid_transversality(model, alphas, betas, kappa_hats, family=None) -> np.ndarray:
    """min singular value of [U-(0) | S+(0)] at eps = alpha beta, kappa = beta^2 kappa_hat."""
    out = np.empty((len(alphas), len(betas), len(kappa_hats)))
    for i, a in enumerate(alphas):
        for j, b in enumerate(betas):
            ctx = _context(model, a * b, family)
            kappas = b ** 2 * np.asarray(kappa_hats, dtype=complex)
            out[i, j] = bundle_transversality(ctx, None, ctx.eps, kappas)
    return out


# ----------------------------------------------------------------------------
# outmost regime


@dataclass(frozen=True)
class OutmostReport:
    kappa: complex
    tau: float
    R: np.ndarray = field(repr=False)
    A_gt: np.ndarray = field(repr=False)
    A_lt: np.ndarray = field(repr=False)
    residual: float = 0.0
    margins: dict = field(default_factory=dict)
    derivative_norm: float = 0.0


def _riesz_with_derivative(M: np.ndarray, dM: np.ndarray, center: float, radius: float,
                           points: int = 96) -> tuple[np.ndarray, np.ndarray]:
    N = M.shape[0]
    eye = np.eye(N)
    eigs = np.linalg.eigvals(M)
    inside = np.abs(eigs - center) < radius
    if np.abs(np.abs(eigs - center) - radius).min() < 1e-3 * radius or inside.sum() != N // 2:
        raise EigenvalueGroupCollision("outmost eigenvalue groups are not separated")
    theta = 2 * np.pi * (np.arange(points) + 0.5) / points
    P = np.zeros((N, N), dtype=complex)
    dP = np.zeros((N, N), dtype=complex)
    for z in center + radius * np.exp(1j * theta):
        Rz = np.linalg.solve(z * eye - M, eye)
        P += (z - center) * Rz
        dP += (z - center) * Rz @ dM @ Rz
    return P / points, dP / points


def _outmost_B(ctx: ShockContext, tau: float) -> tuple[np.ndarray, np.ndarray]:
    v = ctx.state_at_tau(tau)
    Df, Dg = ctx.Df(v), ctx.Dg(v)
    return 0.5 * (Df + Dg), 0.5 * (Df - Dg)


def _outmost_transform(Bgt, Blt, kappa: complex) -> np.ndarray:
    n = Bgt.shape[0]
    J = np.diag(np.r_[np.ones(n), -np.ones(n)]).astype(complex)
    C = np.block([[Bgt, Bgt], [Blt, Blt]]).astype(complex)
    lam_end = 1.0 / kappa

    def pair(t):
        lam = t * lam_end
        M = J + lam * C
        Pp, dPp = _riesz_with_derivative(M, C * lam_end, 1.0, 0.5)
        Pm, dPm = _riesz_with_derivative(M, C * lam_end, -1.0, 0.5)
        return [Pp, Pm], [dPp, dPm]

    path = kato_transport(lambda t: pair(t)[0], np.array([0.0, 1.0]),
                          dP_of_param=lambda t: pair(t)[1], rtol=1e-13, atol=1e-15)
    return path.transforms[-1]


def _herm_bounds(A: np.ndarray) -> tuple[float, float]:
    H = 0.5 * (A + A.conj().T)
    w = np.linalg.eigvalsh(H)
    return float(w.min()), float(w.max())


def outmost_block_diagonalize(model, eps: float, kappa: complex, tau: float = 0.0,
                              family=None, fd_step: float = 1e-4, random_checks: int = 64,
                              seed: int = 0) -> OutmostReport:
    """Kato block-diagonalization of the kappa-form matrix in the outmost regime."""
    ctx = _context(model, eps, family)
    kappa = complex(kappa)
    if kappa == 0 or kappa.real < -1e-14:
        raise ConfigError("outmost regime requires kappa != 0 with Re kappa >= 0")
    n = ctx.n
    Bgt, Blt = _outmost_B(ctx, tau)
    At = kappa * np.diag(np.r_[np.ones(n), -np.ones(n)]) + np.block([[Bgt, Bgt], [Blt, Blt]])
    R = _outmost_transform(Bgt, Blt, kappa)
    D = np.linalg.solve(R, At @ R)
    residual = float(max(np.abs(D[:n, n:]).max(), np.abs(D[n:, :n]).max()))
    A_gt, A_lt = D[:n, :n], D[n:, n:]

    ctx0 = _context(ctx.model, 0.0)
    B0gt, B0lt = _outmost_B(ctx0, 0.0)
    c_gt0 = _herm_bounds(B0gt)[0]
    c_lt0 = -_herm_bounds(B0lt)[1]
    gt_min = min(_herm_bounds(A_gt)[0], _herm_bounds(A_gt.T)[0])
    lt_max = max(_herm_bounds(A_lt)[1], _herm_bounds(A_lt.T)[1])
    rng = np.random.default_rng(seed)
    eta = rng.normal(size=(random_checks, n)) + 1j * rng.normal(size=(random_checks, n))
    norms = np.sum(np.abs(eta) ** 2, axis=1)
    q_gt = np.real(np.einsum("ij,jk,ik->i", eta.conj(), A_gt, eta)) / norms
    q_lt = np.real(np.einsum("ij,jk,ik->i", eta.conj(), A_lt, eta)) / norms
    margins = {"gt": gt_min, "lt": lt_max, "gt_eps0": c_gt0, "lt_eps0": c_lt0,
               "gt_random_min": float(q_gt.min()), "lt_random_max": float(q_lt.max())}

    if ctx.eps == 0:
        deriv = 0.0
    else:
        lo, hi = max(-1.0, tau - fd_step), min(1.0, tau + fd_step)
        Rp = _outmost_transform(*_outmost_B(ctx, hi), kappa)
        Rm = _outmost_transform(*_outmost_B(ctx, lo), kappa)
        R0 = _outmost_transform(*_outmost_B(ctx, 0.0), kappa)
        deriv = float(np.linalg.norm(np.linalg.solve(R0, (Rp - Rm) / (hi - lo)), 2))
    report = OutmostReport(kappa, float(tau), R, A_gt, A_lt, residual, margins, deriv)
    if gt_min < c_gt0 / 2 or lt_max > -c_lt0 / 2 or q_gt.min() < c_gt0 / 2 or q_lt.max() > -c_lt0 / 2:
        raise MarginLoss(f"block definiteness lost at kappa={kappa}: {margins}")
    return report
