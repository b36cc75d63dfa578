import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from cannlab.mechanics import plane_strain_F
from cannlab.model import ConstitutiveModel, WeightSet, build_model, canonical_descriptor
from cannlab.validators import ToleranceConfig, approx_eq

stretch = st.floats(0.6, 1.8)
shear = st.floats(-0.6, 0.6)
angle = st.floats(-np.pi, np.pi)
seed = st.integers(0, 10_000)


def _rotation(a, b, c):
    def rz(t):
        return np.array([[np.cos(t), -np.sin(t), 0], [np.sin(t), np.cos(t), 0], [0, 0, 1.0]])

    def rx(t):
        return np.array([[1.0, 0, 0], [0, np.cos(t), -np.sin(t)], [0, np.sin(t), np.cos(t)]])

    return rz(a) @ rx(b) @ rz(c)


def _model(s):
    desc = canonical_descriptor(neurons=2, seed=s)
    return build_model(desc)


@settings(max_examples=40, deadline=None)
@given(stretch, shear, shear, stretch)
def test_plane_strain_is_isochoric(a, b, c, d):
    if abs(a * d - b * c) < 0.2:
        return
    F = plane_strain_F(a, b, c, d)
    assert abs(np.linalg.det(F.F) - 1.0) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed, stretch, shear, angle, angle, angle)
def test_canonical_energy_objective_and_isotropic(s, a, b, t1, t2, t3):
    model = _model(s)
    F = plane_strain_F(a, b, 0.0, 1.0).F
    Q = _rotation(t1, t2, t3)
    psi = model.psi(F)
    np.testing.assert_allclose(model.psi(Q @ F), psi, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(model.psi(F @ Q.T), psi, rtol=1e-10, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed, stretch, shear)
def test_canonical_cauchy_symmetric_and_nonnegative(s, a, b):
    model = _model(s)
    F = plane_strain_F(a, b, 0.0, 1.0).F
    sigma = model.cauchy_stress(F)
    np.testing.assert_allclose(sigma, sigma.T, atol=1e-10 * max(1.0, np.abs(sigma).max()))
    assert model.psi(F) >= -1e-14


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_approx_eq_symmetric(x, y):
    assert approx_eq(x, y) == approx_eq(y, x)
    assert approx_eq(x, x)


@given(st.floats(-1e3, 1e3), st.floats(0, 0.9e-4))
def test_approx_eq_absolute_floor(x, d):
    assert approx_eq(x, x + d, ToleranceConfig(tau_rel=1e-15, tau_abs=1e-4))


@settings(max_examples=30, deadline=None)
@given(seed, st.lists(st.floats(0, 10, allow_subnormal=False), min_size=8, max_size=8))
def test_serialization_roundtrip_bitwise(s, flat):
    desc = canonical_descriptor(neurons=1, seed=s)
    model = build_model(desc, WeightSet.from_flat(desc, np.array(flat)))
    back = ConstitutiveModel.from_json(model.to_json())
    np.testing.assert_array_equal(back.weights.flat(), model.weights.flat())
    assert back.to_json() == model.to_json()
