import json

import numpy as np
import pytest

from evansflow.errors import (BranchCut, ConfigError, SplittingLost, ZeroOnContour)
from evansflow.evans import (burgers_reference, evans_inner, evans_value, halfplane_contour,
                             halfplane_point, init_boundary_frames, inner_limit_bundles,
                             outer_transversality, outmost_block_diagonalize, refine_winding,
                             regime_partition, translation_mode_residual, winding_number,
                             write_sweep_csv)
from evansflow.grassmann import Frame, gap_distance
from evansflow.profile import ShockContext


@pytest.fixture(scope="module")
def burgers_ctx():
    from evansflow.model import hyperbolic_burgers
    return ShockContext(hyperbolic_burgers(), 0.1)


def test_boundary_frames_for_burgers(burgers_ctx):
    frames = init_boundary_frames(burgers_ctx, 0.1, 1.0)
    lam_u = 0.1 + np.sqrt(2.01)
    # eigenvector of [[0.2, 1], [2, 0]] for lam_u is (1, lam_u - 0.2)
    expected = Frame.from_basis(np.array([[1.0], [lam_u - 0.2]]))
    assert gap_distance(frames.U_minus, expected) < 1e-12
    assert np.allclose(frames.basis_minus[:, 0], [1.0, lam_u - 0.2])
    assert frames.invariance_defect < 1e-12


def test_boundary_frames_at_large_kappa(burgers_ctx):
    frames = init_boundary_frames(burgers_ctx, 0.1, 10.0)
    # lambda = eps + sqrt(eps^2 + kappa^2 + kappa) ~ kappa + 1/2; basis (1, lambda - 2 eps)
    lam = 0.1 + np.sqrt(0.01 + 110.0)
    assert np.allclose(frames.basis_minus[:, 0], [1.0, lam - 0.2])
    assert np.allclose(frames.basis_plus[:, 0], [1.0, -(lam - 0.2)])


def test_transported_frames_agree_with_direct_ones(burgers_ctx):
    frames = init_boundary_frames(burgers_ctx, 0.1, 0.5 + 0.5j,
                                  continuation_path=[2.0, 1.0 + 1j, 0.5 + 0.5j])
    assert frames.transported_gap < 1e-9


def test_path_through_origin_loses_splitting(burgers_ctx):
    with pytest.raises(SplittingLost):
        init_boundary_frames(burgers_ctx, 0.1, 0.5, continuation_path=[-0.5, 0.5])


def test_regime_partition():
    assert regime_partition(0.1, 1e-4, 1.0, 0.5) == "inner"
    assert regime_partition(0.1, 0.1, 1.0, 0.5) == "outer"
    assert regime_partition(0.1, 1.0, 1.0, 0.5) == "outmost"
    with pytest.raises(ConfigError):
        regime_partition(0.1, 1.0, 0.0, 0.5)


def test_inner_value_vanishes_at_origin(burgers_ctx):
    assert abs(evans_inner(burgers_ctx, None, 0.1, 0.0).value) < 1e-12


def test_inner_and_standard_values_agree(burgers_ctx):
    inner = evans_inner(burgers_ctx, None, 0.1, 1.0)
    std = evans_value(burgers_ctx, None, 0.1, 0.01)
    assert abs(inner.value * inner.scalar / std.value - 1) < 1e-8


def test_standard_value_near_origin_is_linear(burgers_ctx):
    vals = [evans_value(burgers_ctx, None, 0.1, k).value for k in (1e-3, 5e-4)]
    assert vals[0] / vals[1] == pytest.approx(2.0, rel=1e-2)


def test_truncation_refinement(burgers_ctx):
    prof = burgers_ctx.profile()
    a = evans_value(burgers_ctx, prof, 0.1, 2.0).value
    longer = burgers_ctx.profile(L=2 * prof.L)
    b = evans_value(burgers_ctx, longer, 0.1, 2.0).value
    assert abs(a / b - 1) < 1e-6


def test_burgers_reference_values():
    assert abs(burgers_reference(0.0).E_tilde) < 1e-12
    assert abs(burgers_reference(3.0).E_tilde) > 1e-3
    with pytest.raises(BranchCut):
        burgers_reference(-2.0)
    assert translation_mode_residual() < 1e-8


def test_burgers_reference_winding_around_origin():
    # radius below 1 keeps the circle clear of the branch point zeta_tilde = -1
    pts = 0.5 * np.exp(2j * np.pi * np.arange(64) / 64)
    vals = [burgers_reference(z).E_tilde for z in pts]
    assert winding_number(vals) == 1


def test_inner_limit_for_burgers():
    lim = inner_limit_bundles(_burgers(), 1.0)
    assert lim.zeta_tilde == pytest.approx(1.0)
    assert lim.E0 == pytest.approx(lim.c * burgers_reference(1.0).E_tilde, rel=1e-10)
    assert abs(inner_limit_bundles(_burgers(), 0.0).E0) < 1e-12


def test_inner_limit_for_pair(pair):
    lim = inner_limit_bundles(pair, 0.7 + 0.3j)
    assert abs(lim.c) > 0
    assert lim.H_minus.shape == (4, 2)


def _burgers():
    from evansflow.model import hyperbolic_burgers
    return hyperbolic_burgers()


def test_winding_of_model_functions():
    z = np.exp(2j * np.pi * np.arange(64) / 64)
    assert winding_number(z) == 1
    assert winding_number(np.ones(64)) == 0
    assert winding_number(z ** 2 + 0.01) == 2
    with pytest.raises(ZeroOnContour):
        winding_number(np.r_[z[:10], 0.0, z[10:]])


def test_refinement_resolves_coarse_contour():
    circle = lambda t: np.exp(2j * np.pi * np.asarray(t))  # noqa: E731
    w, t, _ = refine_winding(lambda k: k ** 3, circle, np.arange(5) / 5, 1.0)
    assert w == 3 and t.size >= 20


def test_halfplane_contour_shape():
    c = halfplane_contour(1e-3, 10.0)
    assert np.all(c.nodes.real >= -1e-12)
    assert np.allclose(np.abs(halfplane_point(np.array([0.0, 0.5, 2.5]), 1e-3, 10.0)),
                       [10.0, 10.0, 1e-3])
    with pytest.raises(ConfigError):
        halfplane_contour(2.0, 1.0)


def test_sweep_csv(tmp_path, burgers_ctx):
    s = [evans_value(burgers_ctx, None, 0.1, k) for k in (1.0, 0.5j)]
    path = write_sweep_csv(s, tmp_path / "sweep.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "re_kappa,im_kappa,re_E,im_E,regime,cond"
    assert len(lines) == 3


def test_outer_examples(burgers):
    rep = outer_transversality(burgers, 0.5, 0.1, 1.0)
    assert rep.lands and rep.min_gap > 0
    still = outer_transversality(burgers, 0.0, 0.0, 1.0)
    assert still.mu_sf_minus == pytest.approx(1.0)
    assert np.ptp(still.gaps) < 1e-12
    rot = outer_transversality(burgers, 0.5, 0.1, 1j)
    assert rot.lands and rot.mu_sf_minus.real > 0


def test_outmost_examples(burgers):
    rep0 = outmost_block_diagonalize(burgers, 0.0, 10.0)
    assert rep0.derivative_norm == 0.0
    rep = outmost_block_diagonalize(burgers, 0.1, 10.0)
    assert rep.residual < 1e-8
    # A> = kappa + 1/2 + O(1/kappa); A< = -kappa - 1/2 + O(1/kappa)
    assert rep.A_gt[0, 0].real == pytest.approx(np.sqrt(110.0), rel=1e-6)
    assert rep.A_lt[0, 0].real == pytest.approx(-np.sqrt(110.0), rel=1e-6)
    assert outmost_block_diagonalize(burgers, 0.1, 50.0).residual < 1e-8


def test_last_family_shock_runs_through_the_regimes():
    from evansflow.model import ModelSpec
    from evansflow.polynomial import PolyMap
    f = PolyMap.from_monomials(2, [
        {"exponents": [1, 0], "component": 0, "coefficient": -0.5},
        {"exponents": [0, 2], "component": 1, "coefficient": -1.0},
    ])
    model = ModelSpec(2, 2, f, PolyMap.linear(np.eye(2)), np.eye(2), np.zeros(2), 0.45)
    ctx = ShockContext(model, 0.1)
    assert np.allclose(ctx.v_plus, [0.0, 0.1])
    assert abs(evans_inner(ctx, None, 0.1, 0.0).value) < 1e-12
    assert abs(evans_inner(ctx, None, 0.1, 1.0).value) > 1e-6
    assert abs(inner_limit_bundles(model, 1.0).c) > 0
    assert outer_transversality(model, 0.5, 0.1, 1.0).lands
    assert outmost_block_diagonalize(model, 0.1, 10.0).residual < 1e-8
