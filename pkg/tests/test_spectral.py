"""Spectral core: transforms, multipliers, operator identities, products, IO."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mikadolab import spectral as sp


RNG = np.random.default_rng(2024)


@pytest.fixture(scope="module")
def grid32():
    return sp.Grid(32)


@pytest.fixture(scope="module")
def grid64():
    return sp.Grid(64)


def rel_linf(a, b, ref=None):
    ref = b if ref is None else ref
    scale = np.abs(ref).max()
    return np.abs(a - b).max() / (scale if scale > 0 else 1.0)


# -- transforms -------------------------------------------------------------

def test_round_trip(grid32):
    f = sp.random_band_limited(grid32, 10, RNG)
    back = grid32.inv(grid32.fwd(f.data))
    assert rel_linf(back, f.data) <= 1e-13


def test_forward_normalization(grid32):
    # coefficient convention: mean value sits at xi=0, sin x1 has |c|=1/2
    x, _, _ = grid32.meshgrid()
    hat = grid32.fwd(np.sin(x) + 3.0)
    assert abs(hat[0, 0, 0] - 3.0) <= 1e-14
    assert abs(hat[1, 0, 0] - (-0.5j)) <= 1e-14


def test_l2_convention(grid32):
    x, _, _ = grid32.meshgrid()
    f = sp.scalar_field(grid32, np.sin(x))
    assert abs(f.l2() - 1.0 / np.sqrt(2.0)) <= 1e-13


# -- multipliers ------------------------------------------------------------

def test_heat_single_mode(grid32):
    x, _, _ = grid32.meshgrid()
    u = sp.scalar_field(grid32, np.sin(4 * x))
    out = sp.heat_evolve(u, 0.03)
    assert rel_linf(out.data, np.exp(-16 * 0.03) * np.sin(4 * x)) <= 1e-13


def test_heat_semigroup(grid32):
    f = sp.random_band_limited(grid32, 10, RNG, rank="scalar")
    one = sp.heat_evolve(f, 0.05)
    two = sp.heat_evolve(sp.heat_evolve(f, 0.02), 0.03)
    assert rel_linf(one.data, two.data, f.data) <= 1e-13


def test_mean_mode_undefined_guard(grid32):
    f = sp.scalar_field(grid32, np.ones((32, 32, 32)))
    sym = sp.MultiplierSymbol("bare_inv", lambda g: -g.inv_k2, None)
    with pytest.raises(ValueError, match="mean-mode-undefined"):
        sp.apply_multiplier(f, sym)
    # declared mean value silences the guard
    out = sp.apply_multiplier(f, sp.inv_laplacian_symbol())
    assert np.abs(out.data).max() <= 1e-14


def test_inv_laplacian_inverts(grid32):
    f = sp.random_band_limited(grid32, 8, RNG, rank="scalar")
    lap = sp.SpectralField(grid32, "scalar",
                           grid32.inv(sp.laplacian_hat(grid32, f.hat())))
    back = sp.apply_multiplier(lap, sp.inv_laplacian_symbol())
    assert rel_linf(back.data, f.data) <= 1e-12


def test_commuting_multipliers(grid32):
    f = sp.random_band_limited(grid32, 10, RNG, rank="scalar")
    a = sp.apply_multiplier(sp.heat_evolve(f, 0.01), sp.inv_grad_symbol())
    b = sp.heat_evolve(sp.apply_multiplier(f, sp.inv_grad_symbol()), 0.01)
    assert rel_linf(a.data, b.data, f.data) <= 1e-12


# -- operator identities ----------------------------------------------------

def test_leray_is_projection(grid32):
    f = sp.random_band_limited(grid32, 10, RNG)
    once = sp.leray(f)
    twice = sp.leray(once)
    assert rel_linf(twice.data, once.data, f.data) <= 1e-13
    div = sp.divergence(once)
    assert np.abs(div.data).max() <= 1e-12 * max(1.0, f.linf())


def test_leray_fixes_divergence_free(grid32):
    f = sp.random_band_limited(grid32, 10, RNG, divergence_free=True)
    assert rel_linf(sp.leray(f).data, f.data) <= 1e-13


def test_curl_of_gradient_vanishes(grid32):
    f = sp.random_band_limited(grid32, 10, RNG, rank="scalar")
    cg = sp.curl(sp.gradient(f))
    assert np.abs(cg.data).max() <= 1e-12 * max(1.0, f.linf())


def test_curl_curl_identity(grid32):
    f = sp.random_band_limited(grid32, 10, RNG)
    direct = sp.curl_curl(f)
    two_curls = sp.curl(sp.curl(f))
    assert rel_linf(direct.data, two_curls.data, f.data) <= 1e-12


def test_div_d_operator_equals_curl_curl(grid32):
    f = sp.random_band_limited(grid32, 10, RNG)
    lhs = sp.divergence(sp.d_operator(f))
    rhs = sp.curl_curl(f)
    assert rel_linf(lhs.data, rhs.data, rhs.data) <= 1e-12


def test_anti_divergence_example(grid32):
    # V = (0, cos x1, 0): the (1,2) entry of RV is sin x1
    x, _, _ = grid32.meshgrid()
    z = np.zeros_like(x)
    v = sp.vector_field(grid32, np.stack([z, np.cos(x), z]))
    rv = sp.anti_divergence(v)
    assert rel_linf(rv.data[sp.SYM_OF[0][1]], np.sin(x)) <= 1e-13


def test_anti_divergence_right_inverse(grid32):
    v = sp.random_band_limited(grid32, 10, RNG)
    dv = sp.divergence(sp.anti_divergence(v))
    target = v.data - v.mean()[:, None, None, None]
    assert rel_linf(dv.data, target, v.data) <= 1e-12


def test_anti_divergence_symmetric_and_mean_free(grid32):
    v = sp.random_band_limited(grid32, 10, RNG, mean_free=False)
    rv = sp.anti_divergence(v)
    assert np.abs(rv.mean()).max() <= 1e-13 * max(1.0, v.linf())


# -- Littlewood-Paley -------------------------------------------------------

def test_smoothstep_endpoints():
    v = np.array([-1.0, 0.0, 0.25, 0.5, 0.75, 1.0, 2.0])
    s = sp.smoothstep(v)
    assert s[0] == 0.0 and s[1] == 0.0
    assert s[5] == 1.0 and s[6] == 1.0
    assert np.all(np.diff(s) >= 0.0)
    assert abs(s[3] - 0.5) <= 1e-14


def test_lp_partition_sums_to_one(grid64):
    assert sp.lp_partition_defect(grid64) <= 1e-12


def test_lp_band_localization(grid64):
    # a pure mode at |xi| = 8 is seen only by bands N in {4, 8, 16}
    x, _, _ = grid64.meshgrid()
    f = sp.scalar_field(grid64, np.sin(8 * x))
    blocks = sp.littlewood_paley(f)
    total = np.zeros_like(f.data)
    for key, blk in blocks.items():
        amp = np.abs(blk.data).max()
        if key in (4, 8, 16):
            total += blk.data
        else:
            assert amp <= 1e-12, f"band {key} leaked {amp}"
    assert rel_linf(total, f.data) <= 1e-12


# -- products ---------------------------------------------------------------

def test_padded_product_exact_on_band(grid32):
    # compare against the collocation product of strongly band-limited fields,
    # where no aliasing is possible even without padding
    u = sp.random_band_limited(grid32, 5, RNG)
    v = sp.random_band_limited(grid32, 5, RNG)
    phat = sp.dealiased_outer_hat(grid32, u.hat(), v.hat())
    direct = grid32.fwd(sp.outer_sym(u.data, v.data))
    assert np.abs(phat - direct).max() <= 1e-12 * max(1.0, u.linf() * v.linf())


def test_padded_product_removes_aliases(grid32):
    # modes at |xi|=12: collocation product aliases 24 -> -8 on n=32;
    # the dealiased product must keep the true +-24 content out of band 8
    x, _, _ = grid32.meshgrid()
    u = np.zeros((3, 32, 32, 32))
    u[0] = np.cos(12 * x)
    uhat = grid32.fwd(u)
    clean = sp.dealiased_outer_hat(grid32, uhat)
    # true product cos^2(12x) = 1/2 + cos(24x)/2: mode 24 not representable,
    # mode 8 must be empty
    assert abs(clean[0, 8, 0, 0]) <= 1e-14
    aliased = grid32.fwd(sp.outer_self(u))
    # cos(24x) folds onto mode 8 with its full coefficient 1/4
    assert abs(aliased[0, 8, 0, 0]) >= 0.2


def test_outer_sym_matches_outer_self(grid32):
    u = sp.random_band_limited(grid32, 6, RNG)
    assert rel_linf(sp.outer_sym(u.data, u.data), sp.outer_self(u.data)) <= 1e-15


# -- snapshots ---------------------------------------------------------------

@pytest.mark.parametrize("rank,band", [("scalar", 7), ("vector", 7), ("symtensor", 5)])
def test_snapshot_round_trip(tmp_path, grid32, rank, band):
    if rank == "symtensor":
        base = sp.random_band_limited(grid32, band, RNG)
        f = sp.symtensor_field(grid32, sp.outer_self(base.data))
    else:
        f = sp.random_band_limited(grid32, band, RNG, rank=rank)
    path = tmp_path / f"{rank}.mkl1"
    sp.write_snapshot(path, f)
    back = sp.read_snapshot(path)
    assert back.rank == rank
    assert back.grid.n == 32
    assert np.array_equal(back.data, f.data)


def test_snapshot_layout_x_fastest(tmp_path, grid32):
    # the first three payload float64s walk x with y=z=0
    x, _, _ = grid32.meshgrid()
    f = sp.scalar_field(grid32, x.copy())
    path = tmp_path / "layout.mkl1"
    sp.write_snapshot(path, f)
    raw = np.fromfile(path, dtype="<f8", offset=16, count=3)
    assert np.allclose(raw, [0.0, grid32.h, 2 * grid32.h])


def test_snapshot_bad_magic(tmp_path):
    p = tmp_path / "bad.mkl1"
    p.write_bytes(b"NOPE" + b"\0" * 12)
    with pytest.raises(ValueError, match="magic"):
        sp.read_snapshot(p)


# -- property tests ----------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), t1=st.floats(0.001, 0.2), t2=st.floats(0.001, 0.2))
def test_heat_semigroup_property(seed, t1, t2):
    grid = sp.Grid(16)
    f = sp.random_band_limited(grid, 5, np.random.default_rng(seed), rank="scalar")
    one = sp.heat_evolve(f, t1 + t2)
    two = sp.heat_evolve(sp.heat_evolve(f, t1), t2)
    assert rel_linf(one.data, two.data, f.data) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_leray_kills_gradients(seed):
    grid = sp.Grid(16)
    p = sp.random_band_limited(grid, 5, np.random.default_rng(seed), rank="scalar")
    gp = sp.gradient(p)
    out = sp.leray(gp)
    assert np.abs(out.data).max() <= 1e-12 * max(1.0, gp.linf())
