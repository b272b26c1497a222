import numpy as np
import pytest
from scipy.linalg import expm

from evansflow.errors import DimensionMismatch, EigenvalueGroupCollision, NotInvariant
from evansflow.grassmann import (Frame, classify_equilibrium, gap_distance,
                                 integrate_grassmann_flow, kato_transport, riccati_field,
                                 riesz_projector)


def test_gap_distance_examples():
    e = np.eye(2)
    assert gap_distance(Frame.from_basis(e[:, :1]), Frame.from_basis(e[:, :1])) == 0.0
    assert gap_distance(Frame.from_basis(e[:, :1]), Frame.from_basis(e[:, 1:])) == pytest.approx(1.0)
    t = np.pi / 6
    tilted = Frame.from_basis(np.array([[np.cos(t)], [np.sin(t)]]))
    assert gap_distance(Frame.from_basis(e[:, :1]), tilted) == pytest.approx(0.5)


def test_gap_distance_dimension_check():
    with pytest.raises(DimensionMismatch):
        gap_distance(Frame.from_basis(np.eye(3)[:, :1]), Frame.from_basis(np.eye(3)[:, :2]))


def test_riccati_field_simple_cases():
    t = 0.3
    assert np.allclose(riccati_field(np.diag([1.0, -1.0]), np.array([[t]])), -2 * t)
    A = np.diag([2.0, -1.0, 0.5])
    assert np.allclose(riccati_field(A, np.zeros((2, 1))), 0.0)


def test_riccati_field_matches_exponential_chart_flow(rng):
    A = rng.standard_normal((4, 4))
    T = rng.standard_normal((2, 2))
    h = 1e-6

    def chart(s):
        X = expm(s * A) @ np.vstack([np.eye(2), T])
        return X[2:] @ np.linalg.inv(X[:2])

    fd = (chart(h) - chart(-h)) / (2 * h)
    assert np.abs(fd - riccati_field(A, T)).max() < 1e-8


def test_flow_contracts_to_attracting_line():
    A = np.diag([-1.0, 1.0])
    t0 = 0.2
    traj = integrate_grassmann_flow(lambda x: A, np.array([[t0], [1.0]]), (0.0, 4.0))
    X = traj.frames[-1].columns[:, 0]
    assert X[0] / X[1] == pytest.approx(t0 * np.exp(-8.0), rel=1e-7)
    assert traj.max_gap < 1e-8


def test_frozen_flow():
    X0 = np.array([[1.0], [2.0], [0.5]])
    traj = integrate_grassmann_flow(lambda x: np.zeros((3, 3)), X0, (0.0, 3.0))
    for F in traj.frames:
        assert gap_distance(F, Frame.from_basis(X0)) < 1e-12


def test_dominant_eigenplane_is_stationary(rng):
    A = rng.standard_normal((4, 4))
    A = A + A.T
    w, V = np.linalg.eigh(A)
    X0 = V[:, 2:]
    traj = integrate_grassmann_flow(lambda x: A, X0, (0.0, 2.0))
    assert gap_distance(traj.frames[-1], Frame.from_basis(X0)) < 1e-8


def test_classification_examples():
    e = np.eye(3)
    assert classify_equilibrium(np.diag([1.0, -1.0]), e[:2, :1]).tag == "attractor"
    assert classify_equilibrium(np.diag([1.0, -1.0]), e[:2, 1:2]).tag == "repeller"
    assert classify_equilibrium(np.diag([-1.0, 0.0, 1.0]), e[:, 1:2]).tag == "saddle"
    assert classify_equilibrium(np.eye(3), e[:, :2]).tag == "degenerate"


def test_classification_requires_invariance():
    with pytest.raises(NotInvariant):
        classify_equilibrium(np.array([[1.0, 0.0], [1.0, -1.0]]), np.eye(2)[:, :1])


def test_riesz_projector_recovers_eigenprojector(rng):
    V = rng.standard_normal((3, 3))
    M = V @ np.diag([1.0, 3.0, -2.0]) @ np.linalg.inv(V)
    P = riesz_projector(M, 1.0, 1.0)
    expected = np.outer(V[:, 0], np.linalg.inv(V)[0])
    assert np.abs(P - expected).max() < 1e-10
    with pytest.raises(EigenvalueGroupCollision):
        riesz_projector(M, 0.0, 1.0)


def test_kato_transport_constant_family():
    P = np.diag([1.0, 0.0])
    path = kato_transport(lambda t: P, np.linspace(0, 1, 5))
    for S in path.transforms:
        assert np.allclose(S, np.eye(2))


def test_kato_transport_of_rotating_line():
    def P(t):
        u = np.array([np.cos(t), np.sin(t)])
        return np.outer(u, u)

    nodes = np.linspace(0.0, 1.2, 7)
    path = kato_transport(P, nodes)
    for t, S in zip(nodes, path.transforms):
        rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
        assert np.abs(S - rot).max() < 1e-8
    assert path.max_residual < 1e-8
