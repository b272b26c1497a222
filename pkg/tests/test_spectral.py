import csv

import numpy as np
import pytest

from evansflow.errors import SKViolation, ScalingMismatch
from evansflow.spectral import (assemble_spectral_matrix, dispersion_margin, endpoint_splitting,
                                in_M_nu, inner_eigenvalue_expansion, log_log_slope,
                                shizuta_kawashima_check, similarity_defect, slow_roots,
                                write_dispersion_csv)


def test_standard_block_for_burgers(burgers):
    A = assemble_spectral_matrix(burgers, 0.1, 1.0, [0.1]).A
    assert np.allclose(A, [[-0.2, 1.0], [2.0, 0.0]])


def test_inner_block_at_zero_amplitude(burgers, pair):
    A = assemble_spectral_matrix(burgers, 0.0, 2.0 + 1j, 0.3, scaling="inner").A
    assert np.allclose(A, 0.0)
    A2 = assemble_spectral_matrix(pair, 0.0, 1.0, 0.0, scaling="inner").A
    expected = np.zeros((4, 4))
    expected[1, 1] = 0.5
    assert np.allclose(A2, expected)


def test_standard_scaling_refused_on_zero_amplitude_manifold(burgers):
    with pytest.raises(ScalingMismatch):
        assemble_spectral_matrix(burgers, 0.0, 1.0, 0.0, location_kind="tau")


def test_inner_and_standard_blocks_are_similar(pair):
    assert similarity_defect(pair, 0.1, 0.7 + 0.2j, [0.05, 0.0]) < 1e-14


def test_burgers_splitting(burgers):
    rep = endpoint_splitting(burgers, 0.1, 1.0)
    root = np.sqrt(0.01 + 2.0)
    assert np.allclose(np.sort(rep.eigenvalues_minus.real), [0.1 - root, 0.1 + root])
    assert np.allclose(np.sort(rep.eigenvalues_plus.real), [-0.1 - root, -0.1 + root])
    assert rep.consistent
    assert rep.minus["unstable"] == 1 and rep.plus["stable"] == 1


def test_splitting_fails_at_zero(burgers):
    assert not endpoint_splitting(burgers, 0.1, 0.0).consistent


def test_splitting_gap_grows_with_kappa(pair):
    rep = endpoint_splitting(pair, 0.1, 10.0)
    assert rep.consistent
    assert rep.gap > 5.0


def test_splitting_on_imaginary_axis(burgers):
    assert endpoint_splitting(burgers, 0.1, 0.3j).consistent


def test_sk_scalar_transport_free_case():
    rep = shizuta_kawashima_check(np.zeros((1, 1)), np.eye(1))
    assert rep.sk1 and rep.sk2
    # eigenvalues of i xi K + Q solve l^2 + l + xi^2 = 0
    xi = rep.xi
    expected = np.maximum(np.real((-1 + np.sqrt(1 - 4 * xi ** 2 + 0j)) / 2),
                          np.real((-1 - np.sqrt(1 - 4 * xi ** 2 + 0j)) / 2))
    assert np.allclose(rep.max_re, expected, atol=1e-12)
    assert rep.theta > 0 and rep.nu > 0


def test_sk_rejects_subcharacteristic_boundary():
    with pytest.raises(SKViolation):
        shizuta_kawashima_check(np.eye(1), np.eye(1))


def test_burgers_dispersion(burgers, tmp_path):
    rep = dispersion_margin(burgers, 0.1)
    assert rep.minus.theta > 0 and rep.plus.theta > 0
    assert rep.nu > 0 and rep.boundary_consistent
    assert rep.minus.nu == pytest.approx(rep.plus.nu)
    assert rep.nu == pytest.approx(rep.minus.nu)
    assert all(in_M_nu(k, rep.nu) for k in rep.boundary_kappa)
    assert np.all(rep.minus.max_re <= rep.minus.bound + 1e-12)
    path = write_dispersion_csv(rep, tmp_path / "d.csv")
    assert len(list(csv.reader(path.open()))) == rep.minus.xi.size + 1


def test_slow_root_identities():
    nu1, nu2 = slow_roots(-1.0, 1.0, 3.0)
    assert nu1 == pytest.approx(1.0) and nu2 == pytest.approx(-3.0)
    assert -3.0 / nu2 == pytest.approx(nu1)
    nu1, nu2 = slow_roots(-1.0, 1.0, 0.0)
    assert nu1 == 0 and nu2 == pytest.approx(-2.0)


def test_inner_expansion_converges(burgers):
    eps = [0.1, 0.05, 0.025]
    res = [inner_eigenvalue_expansion(burgers, e, 1.0).residuals("slow_fast").max() for e in eps]
    assert log_log_slope(eps, res) >= 1.8
    exp = inner_eigenvalue_expansion(burgers, 0.05, 1.0)
    assert max(exp.identity_residuals.values()) < 1e-12


def test_inner_expansion_fast_groups(pair):
    exp = inner_eigenvalue_expansion(pair, 0.05, 1.0 + 1j)
    labels = {g["label"] for g in exp.groups}
    assert {"fast_1", "slow_fast_S", "slow_fast_U", "super_slow_1"} <= labels


def test_log_log_slope_of_power_law():
    e = np.array([0.1, 0.05, 0.025])
    assert log_log_slope(e, 3 * e ** 2) == pytest.approx(2.0)
