"""Subspaces of C^N under linear flows.

Two representations are kept side by side: orthonormal frames, propagated
column-wise and re-orthonormalized by QR, and Riccati charts
``span(M_B [I; T])`` whose coordinate T obeys a matrix Riccati equation.
The module also classifies invariant subspaces as equilibria of the induced
Grassmannian flow and transports spectral projectors along a path (Kato).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .errors import (
    ChartExhaustion,
    DimensionMismatch,
    EigenvalueGroupCollision,
    NotInvariant,
    Stiffness,
)

CHART_COND_MAX = 1e6


# ----------------------------------------------------------------------------
# representations


@dataclass(frozen=True)
class Frame:
    """Orthonormal basis (columns) of an m-dimensional subspace of C^N."""

    columns: np.ndarray

    @classmethod
    def from_basis(cls, basis) -> "Frame":
        Q, _ = np.linalg.qr(np.asarray(basis, dtype=complex))
        return cls(Q)

    @property
    def m(self) -> int:
        return self.columns.shape[1]

    @property
    def N(self) -> int:
        return self.columns.shape[0]

    def projector(self) -> np.ndarray:
        X = self.columns
        return X @ X.conj().T

    def orthonormality_defect(self) -> float:
        X = self.columns
        return float(np.abs(X.conj().T @ X - np.eye(self.m)).max())


@dataclass(frozen=True)
class RiccatiChart:
    """Chart coordinate T of the point span(M_B [I; T])."""

    basis_matrix: np.ndarray
    T: np.ndarray

    @property
    def m(self) -> int:
        return self.T.shape[1]

    def basis(self) -> np.ndarray:
        return self.basis_matrix @ np.vstack([np.eye(self.m), self.T])

    def frame(self) -> Frame:
        return Frame.from_basis(self.basis())

    def condition(self) -> float:
        """Condition number of the leading block of the orthonormalized chart point."""
        return chart_condition(self.T)


def chart_condition(T: np.ndarray) -> float:
    m = T.shape[1]
    s = np.zeros(max(m, 1))
    if T.size:
        sv = np.linalg.svd(T, compute_uv=False)
        s[:sv.size] = sv
    return float(np.sqrt((1.0 + s.max() ** 2) / (1.0 + s.min() ** 2)))


def chart_coordinates(basis_matrix: np.ndarray, X) -> tuple[np.ndarray, float]:
    """Coordinate T of span(X) in the chart of ``basis_matrix`` and the leading-block condition."""
    X = X.columns if isinstance(X, Frame) else np.asarray(X, dtype=complex)
    m = X.shape[1]
    Bt = np.linalg.solve(basis_matrix, X)
    B1, B2 = Bt[:m], Bt[m:]
    cond = np.linalg.cond(B1)
    if not np.isfinite(cond):
        return np.full((X.shape[0] - m, m), np.nan, dtype=complex), np.inf
    return B2 @ np.linalg.inv(B1), float(cond)


def best_chart(X) -> np.ndarray:
    """Permutation basis whose leading rows of X are best conditioned (pivoted QR)."""
    X = X.columns if isinstance(X, Frame) else np.asarray(X, dtype=complex)
    _, _, piv = sla.qr(X.conj().T, pivoting=True)
    N = X.shape[0]
    return np.eye(N)[:, piv]


def frame_to_chart(X, basis_matrix: Optional[np.ndarray] = None) -> RiccatiChart:
    if basis_matrix is None:
        basis_matrix = best_chart(X)
    T, cond = chart_coordinates(basis_matrix, X)
    if not np.isfinite(cond):
        raise ChartExhaustion("subspace is not a graph over the chart's leading block")
    return RiccatiChart(basis_matrix, T)


def gap_distance(X: Frame, Y: Frame) -> float:
    """Operator-norm distance of the orthogonal projectors onto span X and span Y."""
    X = X if isinstance(X, Frame) else Frame.from_basis(X)
    Y = Y if isinstance(Y, Frame) else Frame.from_basis(Y)
    if X.N != Y.N or X.m != Y.m:
        raise DimensionMismatch(f"subspaces of shape {X.columns.shape} and {Y.columns.shape}")
    if X.m == 0:
        return 0.0
    return float(min(np.linalg.norm(X.projector() - Y.projector(), 2), 1.0))


# ----------------------------------------------------------------------------
# flows


def riccati_field(A_B: np.ndarray, T: np.ndarray) -> np.ndarray:
    """T' = A21 + A22 T - T A11 - T A12 T for the chart-frame matrix A_B."""
    m = T.shape[1]
    A11, A12 = A_B[:m, :m], A_B[:m, m:]
    A21, A22 = A_B[m:, :m], A_B[m:, m:]
    return A21 + A22 @ T - T @ A11 - T @ A12 @ T


@dataclass
class GrassmannTrajectory:
    x: np.ndarray
    frames: list
    log_scale: np.ndarray
    riccati_frames: list = field(default_factory=list)
    gaps: np.ndarray = None
    chart_switches: int = 0

    @property
    def max_gap(self) -> float:
        return float(np.max(self.gaps)) if self.gaps is not None and len(self.gaps) else 0.0


def propagate_frame(A_of_x: Callable, X0: np.ndarray, x_nodes: Sequence[float],
                    rtol: float = 1e-10, atol: float = 1e-12, method: str = "DOP853"):
    """Propagate basis columns through ``x_nodes`` with QR after every segment.

    Returns the orthonormal frames at the nodes and the running sum of
    log det R, so that the un-normalized solution at node j equals
    ``frames[j] * exp(log_scale[j])`` in the determinant sense.
    """
    X = np.asarray(X0, dtype=complex)
    N, m = X.shape
    Q, R = np.linalg.qr(X)
    log_scale = np.log(np.diag(R).astype(complex)).sum()
    frames, scales = [Q], [log_scale]

    def rhs(x, y):
        return (A_of_x(x) @ y.reshape(N, m)).ravel()

    for a, b in zip(x_nodes[:-1], x_nodes[1:]):
        sol = solve_ivp(rhs, (a, b), Q.ravel(), method=method, rtol=rtol, atol=atol)
        if not sol.success:
            raise Stiffness(f"frame propagation failed on [{a}, {b}]: {sol.message}")
        Y = sol.y[:, -1].reshape(N, m)
        Q, R = np.linalg.qr(Y)
        log_scale = log_scale + np.log(np.diag(R).astype(complex)).sum()
        frames.append(Q)
        scales.append(log_scale)
    return frames, np.array(scales)


def integrate_grassmann_flow(A_of_x: Callable, X0, x_range: Sequence[float], tol: float = 1e-10,
                             checkpoints: int = 21, cross_check: bool = True,
                             chart_cond_max: float = CHART_COND_MAX) -> GrassmannTrajectory:
    """Evolve span X0 under xi' = A(x) xi with frames, cross-checked by Riccati charts."""
    X0 = X0.columns if isinstance(X0, Frame) else np.asarray(X0, dtype=complex)
    x_nodes = np.linspace(x_range[0], x_range[1], checkpoints)
    frames, scales = propagate_frame(A_of_x, X0, x_nodes, rtol=tol, atol=tol * 1e-2)
    traj = GrassmannTrajectory(x_nodes, [Frame(Q) for Q in frames], scales)
    if not cross_check:
        return traj
    N, m = X0.shape
    chart = frame_to_chart(Frame.from_basis(X0))
    riccati = [chart.frame()]
    switches = 0
    log_max = np.log(chart_cond_max)

    for a, b in zip(x_nodes[:-1], x_nodes[1:]):
        x = a
        while True:
            M = chart.basis_matrix
            Minv = np.linalg.inv(M)

            def rhs(xx, y, M=M, Minv=Minv):
                T = y.reshape(N - m, m)
                return riccati_field(Minv @ A_of_x(xx) @ M, T).ravel()

            def leave(xx, y):
                T = y.reshape(N - m, m)
                return 0.5 * np.log1p(np.vdot(T, T).real) - log_max

            leave.terminal = True
            leave.direction = 1
            sol = solve_ivp(rhs, (x, b), chart.T.ravel().astype(complex), method="DOP853",
                            rtol=tol, atol=tol * 1e-2, events=leave)
            if sol.status == -1:
                raise Stiffness(f"Riccati integration failed: {sol.message}")
            T = sol.y[:, -1].reshape(N - m, m)
            chart = RiccatiChart(M, T)
            if sol.status == 1:
                new_basis = best_chart(chart.frame())
                chart = frame_to_chart(chart.frame(), new_basis)
                switches += 1
                if chart.condition() > chart_cond_max:
                    raise ChartExhaustion("no admissible chart after switching")
                x = sol.t[-1]
                continue
            break
        riccati.append(chart.frame())
    gaps = np.array([gap_distance(F, R) for F, R in zip(traj.frames, riccati)])
    traj.riccati_frames = riccati
    traj.gaps = gaps
    traj.chart_switches = switches
    return traj


# ----------------------------------------------------------------------------
# equilibria


@dataclass(frozen=True)
class EquilibriumReport:
    tag: str
    c_X: float
    c_Y: float
    spectrum: np.ndarray = field(repr=False)
    invariance_defect: float = 0.0


def _herm_extremes(M: np.ndarray) -> tuple[float, float]:
    if M.size == 0:
        return np.inf, -np.inf
    w = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    return float(w.min()), float(w.max())


def classify_equilibrium(A: np.ndarray, X, tol: float = 1e-8) -> EquilibriumReport:
    """Classify an A-invariant subspace as an equilibrium of the Grassmannian flow.

    With A in the block form [[A^X, *], [0, A^Y]] the linearized chart field is
    E -> -E A^X + A^Y E.  Definite blocks decide attractor / repeller; a
    subspace equal to ker A with indefinite but hyperbolic complement gives a
    saddle; otherwise the spectrum of the linearization decides.
    """
    A = np.asarray(A, dtype=complex)
    X = X if isinstance(X, Frame) else Frame.from_basis(X)
    N, m = X.N, X.m
    Xc = X.columns
    scale = max(1.0, float(np.linalg.norm(A, 2)))
    defect = float(np.linalg.norm(A @ Xc - Xc @ (Xc.conj().T @ A @ Xc), 2))
    if defect > tol * scale:
        raise NotInvariant(f"A X leaves span X (defect {defect:.2e})")
    full, _ = np.linalg.qr(np.hstack([Xc, np.eye(N)]))
    comp = full[:, m:N]
    M = np.hstack([Xc, comp])
    A_B = M.conj().T @ A @ M
    AX, AY = A_B[:m, :m], A_B[m:, m:]
    lx_min, lx_max = _herm_extremes(AX)
    ly_min, ly_max = _herm_extremes(AY)
    c_X, c_Y = lx_min, -ly_max
    lin = np.array([ly - lx for ly in np.linalg.eigvals(AY) for lx in np.linalg.eigvals(AX)])
    zero = tol * scale
    if c_X + c_Y > zero:
        tag = "attractor"
    elif (-lx_max) + ly_min > zero:
        tag = "repeller"
    elif np.abs(AX).max(initial=0.0) <= zero:
        ey = np.linalg.eigvals(AY)
        if np.all(np.abs(ey.real) > zero) and np.any(ey.real < 0) and np.any(ey.real > 0):
            tag = "saddle"
        elif np.all(np.abs(lin.real) <= zero):
            tag = "degenerate"
        else:
            tag = "degenerate"
    elif np.all(np.abs(lin.real) <= zero):
        tag = "degenerate"
    elif np.all(lin.real < -zero):
        tag = "attractor"
    elif np.all(lin.real > zero):
        tag = "repeller"
    elif np.all(np.abs(lin.real) > zero):
        tag = "saddle"
    else:
        tag = "degenerate"
    return EquilibriumReport(tag, float(c_X), float(c_Y), lin, defect)


# ----------------------------------------------------------------------------
# spectral projectors and Kato transport


def riesz_projector(M: np.ndarray, center: complex, radius: float, points: int = 128,
                    gap_tol: float = 1e-3) -> np.ndarray:
    """Dunford-Taylor projector onto the eigenvalues of M inside |z - center| < radius."""
    M = np.asarray(M, dtype=complex)
    eigs = np.linalg.eigvals(M)
    dist = np.abs(np.abs(eigs - center) - radius)
    if dist.min() < gap_tol * radius:
        raise EigenvalueGroupCollision(
            f"eigenvalue within {dist.min():.2e} of the contour |z - {center}| = {radius}")
    N = M.shape[0]
    theta = 2 * np.pi * (np.arange(points) + 0.5) / points
    z = center + radius * np.exp(1j * theta)
    P = np.zeros((N, N), dtype=complex)
    eye = np.eye(N)
    for zj in z:
        P += (zj - center) * np.linalg.solve(zj * eye - M, eye)
    return P / points


def projector_family(matrix_fn: Callable, groups: Sequence[tuple], points: int = 128) -> Callable:
    """param -> list of Riesz projectors for (center, radius) groups; centers may be callables."""

    def family(t):
        M = matrix_fn(t)
        out = []
        for center, radius in groups:
            c = center(t) if callable(center) else center
            r = radius(t) if callable(radius) else radius
            out.append(riesz_projector(M, c, r, points))
        return out

    return family


@dataclass
class ProjectorPath:
    params: np.ndarray
    projectors: list
    transforms: list
    residuals: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if len(self.residuals) else 0.0


def _as_list(P):
    if isinstance(P, np.ndarray) and P.ndim == 2:
        return [P]
    return list(P)


def kato_transport(P_of_param: Callable, nodes: Sequence[float], dP_of_param: Optional[Callable] = None,
                   h: Optional[float] = None, rtol: float = 1e-12, atol: float = 1e-14) -> ProjectorPath:
    """Integrate S' = Q S, Q = sum_i P_i' P_i, S(start) = I along ``nodes``.

    ``P_of_param`` returns one projector or a list of complementary
    projectors; if they do not sum to the identity the complement is added.
    Derivatives come from ``dP_of_param`` or centred differences with step
    ``h`` (default 1e-5 times the path length).
    """
    nodes = np.asarray(nodes, dtype=float)
    scale = max(abs(nodes[-1] - nodes[0]), 1e-300)
    if h is None:
        h = 1e-5 * scale

    def complete(Ps):
        Ps = [np.asarray(P, dtype=complex) for P in _as_list(Ps)]
        N = Ps[0].shape[0]
        rest = np.eye(N) - sum(Ps)
        if np.abs(rest).max() > 1e-10:
            Ps.append(rest)
        return Ps

    def derivs(t):
        if dP_of_param is not None:
            dPs = [np.asarray(d, dtype=complex) for d in _as_list(dP_of_param(t))]
            Ps = _as_list(P_of_param(t))
            if len(dPs) == len(Ps) and len(complete(Ps)) > len(Ps):
                dPs.append(-sum(dPs))
            return dPs
        plus, minus = complete(P_of_param(t + h)), complete(P_of_param(t - h))
        return [(p - m) / (2 * h) for p, m in zip(plus, minus)]

    P0 = complete(P_of_param(nodes[0]))
    N = P0[0].shape[0]

    def rhs(t, y):
        S = y.reshape(N, N)
        Ps = complete(P_of_param(t))
        Q = sum(d @ p for d, p in zip(derivs(t), Ps))
        return (Q @ S).ravel()

    sol = solve_ivp(rhs, (nodes[0], nodes[-1]), np.eye(N, dtype=complex).ravel(), method="DOP853",
                    t_eval=nodes, rtol=rtol, atol=atol)
    if not sol.success:
        raise Stiffness(f"Kato transport failed: {sol.message}")
    transforms, projs, res = [], [], []
    for j, t in enumerate(nodes):
        S = sol.y[:, j].reshape(N, N)
        Ps = complete(P_of_param(t))
        r = max(float(np.abs(S @ p0 - p @ S).max()) for p0, p in zip(P0, Ps))
        transforms.append(S)
        projs.append(Ps)
        res.append(r)
    return ProjectorPath(nodes, projs, transforms, np.array(res))
