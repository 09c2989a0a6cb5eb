import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forgetwin import physics
from forgetwin.physics import Environment, MaterialParams, Segment

SIGMA = 5.670374419e-8


def conv_oracle(ts, ta, d, length, h=1.86, n=1.3):
    if ts <= ta:
        return 0.0
    return 3.141592653589793 * d * length * h * (ts - ta) ** n


def rad_oracle(ts, ta, eps, d, length):
    if ts <= ta:
        return 0.0
    return 3.141592653589793 * d * length * SIGMA * eps * ((ts + 273.0) ** 4 - (ta + 273.0) ** 4)


@pytest.fixture
def mat():
    return MaterialParams(emissivity=0.8)


@pytest.fixture
def env():
    return Environment()


def test_transfer_efficiency_examples(mat):
    assert physics.transfer_efficiency(500.0, mat) == 0.9
    assert physics.transfer_efficiency(900.0, mat) == 0.2
    assert physics.transfer_efficiency(800.0, mat) == 0.2


def test_convective_loss_examples(env):
    assert physics.convective_loss(20.0, env, 0.1, 0.1) == 0.0
    q = physics.convective_loss(1000.0, env, 0.1, 0.1)
    assert q == pytest.approx(452.0, abs=1.0)
    assert q == pytest.approx(conv_oracle(1000.0, 20.0, 0.1, 0.1), rel=1e-12)
    assert physics.convective_loss(1000.0, env, 0.1, 0.2) == pytest.approx(2 * q, rel=1e-12)


def test_radiative_loss_examples(env, mat):
    assert physics.radiative_loss(20.0, env, mat, 0.1, 0.1) == 0.0
    q = physics.radiative_loss(1000.0, env, mat, 0.1, 0.1)
    assert q == pytest.approx(3730.0, abs=10.0)
    temps = np.linspace(21, 1200, 50)
    vals = [physics.radiative_loss(t, env, mat, 0.1, 0.1) for t in temps]
    assert np.all(np.diff(vals) > 0)


def test_step_segment_examples(env):
    m = MaterialParams(specific_heat=500.0)
    seg = Segment(temperature=20.0, length=0.1, mass=1.0)
    assert physics.step_segment(seg, 0.0, m, env, 1.0).temperature == 20.0
    # 500 W net into 1 kg at 500 J/(kg C): below ambient losses are zero so share/k sets the net power
    out = physics.step_segment(seg, 500.0 / 0.9, m, env, 1.0)
    assert out.temperature == pytest.approx(21.0, rel=1e-12)


def test_step_segment_hot_example(env):
    m = MaterialParams(emissivity=0.8, specific_heat=650.0)
    seg = Segment(temperature=900.0, length=0.1, mass=6.0)
    expect = 900.0 + (0.2 * 1e5 - conv_oracle(900, 20, 0.1, 0.1) - rad_oracle(900, 20, 0.8, 0.1, 0.1)) / (6 * 650)
    assert physics.step_segment(seg, 1e5, m, env, 1.0).temperature == pytest.approx(expect, rel=1e-12)


def test_step_segment_rejects_bad_input(mat, env):
    seg = Segment(500.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        physics.step_segment(seg, 0.0, mat, env, 0.0)
    with pytest.raises(ValueError):
        physics.step_segment(seg, -1.0, mat, env, 1.0)
    with pytest.raises(ValueError):
        MaterialParams(emissivity=1.5)
    with pytest.raises(ValueError):
        Segment(500.0, 0.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(t=st.floats(25.0, 1200.0), share=st.floats(0.0, 2e5), m=st.floats(1.0, 50.0), dt=st.floats(0.01, 2.0))
def test_energy_bookkeeping(t, share, m, dt):
    mat, env = MaterialParams(), Environment()
    new = physics.step_segment(Segment(t, 0.1, m), share, mat, env, dt).temperature
    p = physics.net_power(t, share, mat, env, 0.1)
    if new > env.ambient_temp:
        assert (new - t) * m * mat.specific_heat / dt == pytest.approx(p, rel=1e-9, abs=1e-6)


def test_monotone_cooling(mat, env):
    seg = Segment(1100.0, 0.1, 10.0)
    prev = seg.temperature
    for _ in range(10_000):
        seg = physics.step_segment(seg, 0.0, mat, env, 1.0)
        assert seg.temperature <= prev
        prev = seg.temperature
    assert 20.0 <= seg.temperature < 200.0


def test_dt_refinement_is_second_order(mat, env):
    # one Euler step of size dt vs two of dt/2: difference should shrink ~4x per halving
    def gap(dt):
        one = physics.step_segment(Segment(600.0, 0.1, 10.0), 3e4, mat, env, dt).temperature
        half = Segment(600.0, 0.1, 10.0)
        for _ in range(2):
            half = physics.step_segment(half, 3e4, mat, env, dt / 2)
        return abs(one - half.temperature)

    g1, g2 = gap(1.0), gap(0.5)
    assert g1 > 0
    assert g2 / g1 == pytest.approx(0.25, abs=0.02)


def test_array_kernels_agree():
    rng = np.random.default_rng(3)
    mat, env = MaterialParams(), Environment()
    temps = rng.uniform(0, 1200, 500)
    shares = rng.uniform(0, 1e5, 500)
    args = (temps, shares, 0.1, 10.3, mat.specific_heat, mat.emissivity, mat.curie_temp, mat.k_below, mat.k_above,
            mat.bar_diameter, env.ambient_temp, env.stefan_boltzmann, env.conv_coeff, env.conv_exponent, 1.0)
    a = physics._heat_step_numpy(*args)
    b = physics._heat_step_loop(*args)
    np.testing.assert_allclose(a, b, rtol=1e-12)
    scalar = [physics.step_segment(Segment(max(t, 20.0), 0.1, 10.3), s, mat, env, 1.0).temperature
              for t, s in zip(np.maximum(temps, 20.0), shares)]
    np.testing.assert_allclose(physics.step_temperatures(np.maximum(temps, 20.0), shares, 0.1, 10.3, mat, env, 1.0),
                               scalar, rtol=1e-12)


def test_segment_mass():
    assert physics.segment_mass(MaterialParams(bar_mass=400.0), 0.1, 4.0) == pytest.approx(10.0)
    assert math.isclose(physics.STEFAN_BOLTZMANN, SIGMA)
