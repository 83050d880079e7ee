"""Recursive potential construction, datum assembly, and recursion diagnostics."""

import numpy as np
import pytest

from mikadolab.data_builder import (
    FROBENIUS_WEIGHTS,
    BuildError,
    DataLevel,
    assemble_data,
    assemble_data_via_deformation,
    build_all,
    build_level,
    l1_norm,
    mollify,
    recursion_diagnostics,
    sup_norm,
)
from mikadolab.frame import reconstruct
from mikadolab.geometry import mikado_potential
from mikadolab.params import ConfigError, ParameterSet
from mikadolab.spectral import (
    Grid,
    d_operator_hat,
    divergence_hat,
    gradient_hat,
    heat_evolve,
    random_band_limited,
    truncate_band,
    vector_field,
)

# frozen reference measurement: the build is deterministic, so the level-1
# input sup is a regression anchor, not a tolerance statement
REFERENCE_D_PSI0_SUP = 4.239800585134507


@pytest.fixture(scope="module")
def diag(reference_levels, reference_params):
    return recursion_diagnostics(reference_levels, reference_params)


def test_level0_exact_seed(reference_levels):
    lvl = reference_levels[0]
    assert lvl.k == 0 and lvl.M == 2 and lvl.N == 8
    assert np.all(lvl.a[0] == 8.0)
    assert np.all(lvl.a[1:] == 0.0)
    assert np.all(lvl.chi == 1.0)
    assert lvl.prefactors.tolist() == [8.0, 0, 0, 0, 0, 0]
    assert lvl.d_psi0_prev_sup == 0.0
    assert lvl.nash_radius == 0.0
    # exact dyadic grid normalizers of the frozen skeletal geometry
    expect = np.array([1, 3, 1, 1, 3, 3]) / 4096.0
    assert np.allclose(lvl.normalizers, expect, rtol=1e-12, atol=0)


def test_level0_matches_direct_mollified_seed(reference_levels, reference_family,
                                              reference_grid):
    lvl = reference_levels[0]
    grid = reference_grid
    pot = mikado_potential(reference_family, grid, 0, 2, 8)
    direct_hat = heat_evolve(vector_field(grid, 8.0 * pot.data),
                             0.5 * lvl.mollifier_scale**2).hat()
    direct_hat = truncate_band(grid, direct_hat, grid.n // 2 - 1)
    gap = np.abs(grid.inv(direct_hat) - lvl.psi0.data).max()
    assert gap <= 1e-13 * lvl.psi0.linf()


def test_level1_normalizers_and_prefactors(reference_levels, reference_params):
    lvl = reference_levels[1]
    assert lvl.k == 1 and lvl.M == 8 and lvl.N == 32
    assert np.allclose(lvl.normalizers, 1.0 / 256.0, rtol=1e-12, atol=0)
    assert lvl.d_psi0_prev_sup == pytest.approx(REFERENCE_D_PSI0_SUP, rel=1e-9)
    # the stored prefactors satisfy the amplitude formula exactly
    eta_sq = np.array([1.0, 1.0, 2.0, 2.0, 1.0, 1.0])
    lhs = lvl.prefactors**2 * reference_params.c0 * eta_sq * lvl.normalizers
    rhs = 2.0 * lvl.N**2 * lvl.d_psi0_prev_sup
    assert np.allclose(lhs, rhs, rtol=1e-12)


def test_level1_support_equals_cutoff_support(reference_levels):
    lvl = reference_levels[1]
    covered = np.abs(lvl.a).sum(axis=0) > 0
    # Gamma_j > 0 everywhere inside the reconstruction ball, so the coefficient
    # support is exactly the cutoff support, bitwise
    assert np.array_equal(covered, lvl.chi > 0)
    assert np.all(lvl.a[:, ~(lvl.chi > 0)] == 0.0)


def test_level1_nash_radius_within_budget(reference_levels, reference_params):
    lvl = reference_levels[1]
    assert 0.0 < lvl.nash_radius <= reference_params.c0 * (1 + 1e-12)


def test_level1_frame_reconstruction_from_built_coefficients(
    reference_levels, reference_family, reference_grid, reference_params
):
    # recover Gamma_j from the stored a-fields on the chi = 1 region and check
    # that the frame reconstructs Id + c0 D psi0_0 / sup there (the identity
    # the amplitude formula is built on), against independently recomputed
    # deformation data
    prev, lvl = reference_levels
    dpsi = reference_grid.inv(d_operator_hat(reference_grid, prev.psi0.hat()))
    eps = (reference_params.c0 / lvl.d_psi0_prev_sup) * dpsi
    idx = np.argwhere(lvl.chi == 1.0)
    rng = np.random.default_rng(7)
    pick = idx[rng.choice(len(idx), size=50, replace=False)]
    sel = tuple(pick.T)
    gam = lvl.a[(slice(None),) + sel] / lvl.prefactors[:, None]
    recon = reconstruct(reference_family.frame, gam * gam)
    target = eps[(slice(None),) + sel]
    target[0] += 1.0
    target[3] += 1.0
    target[5] += 1.0
    assert np.abs(recon - target).max() <= 1e-12


def test_degenerate_previous_level_rejected(reference_family):
    grid = Grid(64)
    params = ParameterSet(K=1, Ms=(2, 4, 16), Ns=(4, 16, 64))
    zero = vector_field(grid, np.zeros((3, 64, 64, 64)))
    prev = DataLevel(
        k=0, M=2, N=4, psi0=zero, a=np.zeros((6, 64, 64, 64)),
        chi=np.ones((64, 64, 64)), normalizers=np.ones(6),
        prefactors=np.zeros(6), d_psi0_prev_sup=0.0, nash_radius=0.0,
        mollifier_scale=1e-3, representation="sampled",
    )
    with pytest.raises(BuildError, match="degenerate-previous-level"):
        build_level(params, reference_family, grid, prev=prev)


def test_level_beyond_truncation_rejected(reference_levels, reference_family,
                                          reference_grid, reference_params):
    with pytest.raises(ValueError, match="exceeds the configured truncation"):
        build_level(reference_params, reference_family, reference_grid,
                    prev=reference_levels[1])


def test_build_all_rejects_unresolvable_grid(reference_family, reference_params):
    with pytest.raises(ConfigError, match="grid resolvability"):
        build_all(reference_params, reference_family, Grid(64))


def test_assembled_datum_divergence_free_mean_zero(reference_levels, reference_grid):
    u = assemble_data(reference_levels)
    umax = u.linf()
    assert umax > 0
    assert np.abs(u.mean()).max() <= 1e-13 * umax
    div = reference_grid.inv(
        divergence_hat(reference_grid, reference_grid.fwd(u.data))
    )
    assert np.abs(div).max() <= 1e-12 * umax


def test_assembled_datum_dual_route_agreement(reference_levels):
    u = assemble_data(reference_levels)
    u2 = assemble_data_via_deformation(reference_levels)
    gap = np.abs(u.data - u2.data).max()
    assert gap <= 1e-12 * u.linf()


def test_assemble_empty_rejected():
    with pytest.raises(ValueError, match="no levels"):
        assemble_data([])
    with pytest.raises(ValueError, match="no levels"):
        assemble_data_via_deformation([])


def test_mollify_zero_scale_is_identity():
    grid = Grid(32)
    rng = np.random.default_rng(3)
    f = random_band_limited(grid, 10, rng, rank="vector")
    out = mollify(f, 0.0)
    assert np.abs(out.data - f.data).max() <= 1e-14 * f.linf()


def test_mollify_contract_against_gradient():
    grid = Grid(64)
    rng = np.random.default_rng(11)
    f = random_band_limited(grid, 8, rng, rank="scalar")
    ghat = gradient_hat(grid, f.hat())
    grad_sup = sup_norm(grid, np.stack([grid.inv(ghat[i]) for i in range(3)]))
    for scale in (1e-3, 1e-2):
        drift = np.abs(mollify(f, scale).data - f.data).max()
        assert drift <= scale * grad_sup


def test_mollify_rejects_negative_scale():
    grid = Grid(32)
    f = vector_field(grid, np.zeros((3, 32, 32, 32)))
    with pytest.raises(ValueError, match="scale"):
        mollify(f, -1e-3)


def test_sup_norm_refined_hits_internode_max():
    grid = Grid(64)
    x = grid.axes()
    f = np.cos(x - grid.h / 2)[:, None, None] * np.ones((1, 64, 64))
    coarse = sup_norm(grid, f, refine=1)
    fine = sup_norm(grid, f, refine=2)
    assert coarse < 1.0
    assert fine == pytest.approx(1.0, abs=1e-12)
    assert fine >= coarse


def test_sup_norm_weights_and_errors():
    grid = Grid(16)
    ones = np.ones((16, 16, 16))
    stack = np.stack([ones, 2 * ones])
    assert sup_norm(grid, stack, refine=1) == pytest.approx(np.sqrt(5.0))
    assert sup_norm(grid, stack, weights=(4.0, 1.0), refine=1) == pytest.approx(
        np.sqrt(8.0)
    )
    with pytest.raises(ValueError, match="one weight per component"):
        sup_norm(grid, stack, weights=(1.0,), refine=1)
    assert len(FROBENIUS_WEIGHTS) == 6


def test_l1_norm_on_constants():
    ones = np.ones((8, 8, 8))
    assert l1_norm(3.0 * ones) == pytest.approx(3.0)
    assert l1_norm(np.stack([3.0 * ones, 4.0 * ones])) == pytest.approx(5.0)


def test_build_determinism(reference_levels, reference_family, reference_grid,
                           reference_params):
    again = build_level(reference_params, reference_family, reference_grid,
                        prev=reference_levels[0])
    assert np.array_equal(again.psi0.data, reference_levels[1].psi0.data)
    assert np.array_equal(again.a, reference_levels[1].a)
    assert again.d_psi0_prev_sup == reference_levels[1].d_psi0_prev_sup


def test_diagnostics_structure_and_consistency(diag, reference_params):
    assert diag["K"] == reference_params.K
    assert len(diag["levels"]) == 2
    lvl1 = diag["levels"][1]
    assert diag["C1_fitted"] == lvl1["iter_bound_I_ratio"]
    for key in ("iter_bound_II_ratio", "amplitude_ratios", "amplitude_over_N",
                "nash_radius", "cutoff_cancellation", "grad_a_ratio"):
        assert key in lvl1
    sandwich = diag["sandwich"]
    assert sandwich["C2"] >= 1.0 and np.isfinite(sandwich["C2"])
    for b in sandwich["bounds"]:
        assert b["lower"] <= b["value"] * (1 + 1e-12)
        assert b["value"] <= b["upper"] * (1 + 1e-12)


def test_diagnostics_scaling_ratios(diag):
    # m = 0: ||psi0_k||_inf * N_k stays order one at level 0 (0.98 measured);
    # higher levels and derivatives inflate at desk scale and are recorded,
    # not asserted
    m0 = diag["levels"][0]["scaling_ratios"]["m0"]
    assert 0.5 < m0 < 2.0
    for e in diag["levels"]:
        for key in ("m0", "m1", "m2"):
            assert np.isfinite(e["scaling_ratios"][key])
        assert e["curl_l1"] > 0
        assert e["curlcurl_l1"] > 0


def test_diagnostics_reference_regression(diag):
    # deterministic pipeline: frozen reference values, tight windows
    assert diag["levels"][1]["nash_radius"] == pytest.approx(0.08196, abs=2e-4)
    assert diag["C1_fitted"] == pytest.approx(62.35, rel=0.02)
    assert diag["sandwich"]["C2"] == pytest.approx(5.21, rel=0.02)
    assert 0.2 <= diag["levels"][1]["cutoff_cancellation"] <= 0.6
    assert diag["levels"][1]["chi_support_fraction"] == pytest.approx(0.021, abs=0.002)


def test_diagnostics_need_two_levels(reference_levels, reference_params):
    with pytest.raises(ValueError, match="at least 2"):
        recursion_diagnostics(reference_levels[:1], reference_params)
