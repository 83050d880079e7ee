"""Parameter-set validation, scale ladders, and grid-compatibility checks."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mikadolab.frame import default_frame
from mikadolab.params import (
    ConfigError,
    ParameterSet,
    default_ladder,
    strict_ladder,
)


def test_reference_defaults():
    p = ParameterSet()
    assert p.K == 1
    assert p.Ms == (2, 8, 32)
    assert p.Ns == (8, 32, 128)
    assert not p.strict_mode
    assert p.c0 == 0.1
    assert p.delta == 0.05
    assert p.delta0 == 0.058
    d = p.to_json_dict()
    assert d["regime"] == "desk-scale"


def test_default_ladder_generalizes():
    assert default_ladder(0) == ((2, 8), (8, 32))
    assert default_ladder(2) == ((2, 8, 32, 128), (8, 32, 128, 512))
    Ms, Ns = default_ladder(3)
    for m, n in zip(Ms, Ns):
        assert n % m == 0 and n // m == 4
    for k in range(len(Ns) - 1):
        assert Ns[k + 1] == 4 * Ns[k]


def test_strict_mode_defaults_validate_and_derive():
    p = ParameterSet(strict_mode=True)
    assert p.Ms[0] == 5
    assert p.Ns[0] == 10
    assert p.Ms[1] == 5**6
    assert p.Ns[1] == 5**6 * math.floor((5**6) ** 0.5)
    # level K+1 = 2 is an exact big integer, far beyond float range handling
    assert p.Ms[2] == 5**36
    assert p.Ns[2] % p.Ms[2] == 0
    assert p.to_json_dict()["regime"] == "strict"


def test_strict_exponent_chain_holds():
    p = ParameterSet(strict_mode=True)
    assert 4 * p.alpha < 1 - 1 / p.gamma < 1 - 1 / p.b


@pytest.mark.parametrize(
    "kwargs, fragment",
    [
        (dict(strict_mode=True, b=5.0), "b > max(5"),
        (dict(strict_mode=True, alpha=0.12), "b > max(5"),
        (dict(strict_mode=True, gamma=1.0), "gamma in"),
        (dict(strict_mode=True, gamma=4.0), "gamma in"),
        (dict(strict_mode=True, kappa=0.5), "kappa in"),
    ],
)
def test_strict_violations_name_the_inequality(kwargs, fragment):
    with pytest.raises(ConfigError, match="strict mode requires"):
        try:
            ParameterSet(**kwargs)
        except ConfigError as e:
            assert fragment in str(e)
            raise


@pytest.mark.parametrize(
    "kwargs, fragment",
    [
        (dict(Ms=(2, 8, 32), Ns=(8, 31, 128)), "must divide"),
        (dict(Ms=(2, 8, 32), Ns=(2, 32, 128)), ">= 2"),
        (dict(Ms=(2, 8, 32), Ns=(8, 16, 128)), ">= 4"),
        (dict(Ms=(2, 8), Ns=(8, 32)), "cover levels"),
        (dict(Ms=(2, 8, 32), Ns=(8, 32, 128, 512)), "differ in length"),
        (dict(alpha=0.2), "alpha"),
        (dict(alpha=0.0), "alpha"),
        (dict(delta=1.5), "delta"),
        (dict(delta0=-1.0), "delta0"),
        (dict(c0=0.0), "c0"),
        (dict(K=-1), "K must be"),
    ],
)
def test_invalid_configurations_rejected(kwargs, fragment):
    with pytest.raises(ConfigError, match="."):
        try:
            ParameterSet(**kwargs)
        except ConfigError as e:
            assert fragment in str(e)
            raise


def test_grid_check_reference_passes_at_128():
    p = ParameterSet()
    p.check_grid(128)
    p.check_grid(128, frame=default_frame())


def test_grid_check_rejects_small_grid():
    p = ParameterSet()
    with pytest.raises(ConfigError, match="grid resolvability"):
        p.check_grid(64)


def test_grid_check_rejects_oversized_hand_ladder():
    # N_K = 64 pushes the carrier-plus-envelope band past n/2 - 1 = 63
    p = ParameterSet(Ms=(2, 8, 32), Ns=(8, 64, 256))
    with pytest.raises(ConfigError, match="grid resolvability"):
        p.check_grid(128)


def test_grid_check_small_ladder_fits_small_grid():
    p = ParameterSet(K=0, Ms=(2, 4), Ns=(4, 16))
    p.check_grid(64)
    with pytest.raises(ConfigError, match="grid resolvability"):
        p.check_grid(64, env_bandwidth=30)


def test_carrier_resolvability_flags():
    p = ParameterSet()
    flags = [p.carrier_resolvable(k, 128) for k in range(3)]
    assert flags == [True, True, False]
    assert not p.carrier_resolvable(1, 64)


def test_mollifier_scales_reference_cap_binds():
    p = ParameterSet()
    assert p.mollifier_scale(0) == pytest.approx(0.058 / 16.0, rel=1e-15)
    assert p.mollifier_scale(1) == pytest.approx(0.058 / 64.0, rel=1e-15)
    with pytest.raises(ConfigError, match="built levels"):
        p.mollifier_scale(2)


def test_mollifier_scale_nominal_can_bind():
    p = ParameterSet(K=0, Ms=(2, 8), Ns=(512, 2048))
    nominal = 2048.0 ** (-1.0 / 3.0) * 512.0 ** (-2.0 / 3.0)
    assert p.mollifier_scale(0) == pytest.approx(nominal, rel=1e-12)
    assert nominal < p.delta0 / 16.0


def test_t_grid_endpoints_and_spacing():
    p = ParameterSet()
    t = p.t_grid(count=13)
    assert t.shape == (13,)
    assert t[0] == pytest.approx(1.0 / 4096.0, rel=1e-12)
    assert t[-1] == pytest.approx(1.0, rel=1e-12)
    ratios = t[1:] / t[:-1]
    assert np.allclose(ratios, ratios[0], rtol=1e-10)


def test_t_grid_default_density_is_16_per_decade():
    p = ParameterSet()
    t = p.t_grid()
    decades = np.log10(t[-1] / t[0])
    points_per_decade = (len(t) - 1) / decades
    assert points_per_decade == pytest.approx(16.0, rel=0.02)
    assert t[0] == pytest.approx(1.0 / 4096.0, rel=1e-12)
    assert t[-1] == pytest.approx(1.0, rel=1e-12)


def test_decay_rate():
    p = ParameterSet()
    assert p.decay_rate(0) == 64.0
    assert p.decay_rate(1, eta_sq=2) == 2048.0


def test_mapping_round_trip_is_bit_exact():
    p = ParameterSet(gamma=1.5 + 1e-14, delta0=0.058)
    d = json.loads(p.content_json())
    q = ParameterSet.from_mapping(d)
    assert q == p
    assert q.content_json() == p.content_json()


def test_from_mapping_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown parameter"):
        ParameterSet.from_mapping({"K": 1, "nu": 0.01})


def test_from_mapping_accepts_lists_for_ladders():
    q = ParameterSet.from_mapping({"K": 0, "Ms": [2, 8], "Ns": [8, 32]})
    assert q.Ms == (2, 8)
    assert isinstance(q.Ms[0], int)


def test_parameter_set_hashable_and_comparable():
    assert ParameterSet() == ParameterSet()
    assert len({ParameterSet(), ParameterSet(), ParameterSet(c0=0.2)}) == 2


def test_strict_ladder_requires_growth():
    # A = 1 collapses every scale to M_k = 1 and floor(1**x) = 1, so the
    # ladder ratio N/M = 1 < 2 must be rejected somewhere in construction
    with pytest.raises(ConfigError):
        ParameterSet(strict_mode=True, A=1.0)


def test_strict_ladder_exact_integer_path():
    Ms, Ns = strict_ladder(3.0, 6.0, 1.5, 0)
    assert Ms[0] == 3
    assert Ns[0] == 3  # floor(3**0.5) = 1 -> invalid ratio, caught by ParameterSet
    with pytest.raises(ConfigError, match=">= 2"):
        ParameterSet(strict_mode=True, A=3.0)


@settings(max_examples=60, deadline=None)
@given(
    alpha=st.floats(min_value=1e-3, max_value=0.124),
    spread=st.floats(min_value=0.05, max_value=3.0),
)
def test_gamma_window_nonempty_for_admissible_b(alpha, spread):
    # whenever b clears its floor, the gamma window is a nonempty interval
    # and any gamma inside it leaves room for a positive kappa
    b = max(5.0, 1.0 / (1.0 - 8.0 * alpha)) + spread
    lo = 1.0 / (1.0 - 4.0 * alpha)
    hi = 1.0 / (4.0 * alpha + 1.0 / b)
    assert lo < hi
    gamma = 0.5 * (lo + hi)
    kappa_max = 0.5 - 1.0 / (2.0 * gamma) - 2.0 * alpha
    assert kappa_max > 0.0
