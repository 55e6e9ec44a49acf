import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from healfem.kinematics import (DomainError, cofactor, deviator, elastic_part, embed_plane, frobenius,
                                growth_tensor, isochoric_part, jacobian, sign_tensor, trace)

from helpers import random_deformation

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)
tensors = arrays(float, (3, 3), elements=finite)


def test_jacobian_of_diagonal():
    assert jacobian(np.diag([2.0, 3.0, 0.5])) == pytest.approx(3.0)


def test_jacobian_matches_lapack_on_stacks():
    rng = np.random.default_rng(0)
    F = rng.normal(size=(5, 7, 3, 3))
    np.testing.assert_allclose(jacobian(F), np.linalg.det(F), rtol=1e-12, atol=1e-12)


def test_cofactor_is_det_times_inverse_transpose():
    rng = np.random.default_rng(1)
    F = np.stack([random_deformation(rng) for _ in range(20)])
    expected = np.linalg.det(F)[:, None, None] * np.swapaxes(np.linalg.inv(F), -1, -2)
    np.testing.assert_allclose(cofactor(F), expected, rtol=1e-12, atol=1e-12)


def test_elastic_part_of_pure_growth_is_half_identity():
    np.testing.assert_allclose(elastic_part(np.eye(3), 8.0), 0.5 * np.eye(3), rtol=1e-15)


def test_elastic_part_removes_isotropic_growth():
    F = np.diag([1.2, 1.0, 1.0])
    np.testing.assert_allclose(elastic_part(F, 1.331), F / 1.1, rtol=1e-14)


def test_growth_tensor_and_elastic_part_recompose():
    rng = np.random.default_rng(2)
    F = random_deformation(rng)
    Jg = 1.37
    np.testing.assert_allclose(elastic_part(F, Jg) @ growth_tensor(Jg), F, rtol=1e-14)


@pytest.mark.parametrize("Jg", [0.0, -1.0, np.nan])
def test_nonpositive_growth_is_a_domain_error(Jg):
    with pytest.raises(DomainError):
        elastic_part(np.eye(3), Jg)


def test_isochoric_part_rejects_inverted_input():
    with pytest.raises(DomainError):
        isochoric_part(np.diag([1.0, 1.0, -1.0]))


def test_sign_tensor_example():
    np.testing.assert_allclose(sign_tensor(np.diag([3.0, 4.0, 0.0])), np.diag([0.6, 0.8, 0.0]))


def test_sign_tensor_of_zero_is_zero():
    np.testing.assert_array_equal(sign_tensor(np.zeros((3, 3))), np.zeros((3, 3)))


def test_deviator_of_identity_is_zero():
    np.testing.assert_allclose(deviator(np.eye(3)), np.zeros((3, 3)), atol=1e-15)


def test_embed_plane_sets_out_of_plane_stretch():
    F = embed_plane(np.array([[1.1, 0.2], [0.0, 0.9]]))
    assert F[2, 2] == 1.0 and F[0, 2] == F[2, 0] == 0.0
    assert jacobian(F) == pytest.approx(0.99)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), Jg=st.floats(0.05, 20.0))
def test_determinant_identity(seed, Jg):
    F = random_deformation(np.random.default_rng(seed), det_range=(0.1, 5.0))
    lhs = jacobian(elastic_part(F, Jg)) * Jg
    assert abs(lhs - jacobian(F)) <= 1e-12 * abs(jacobian(F))


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_isochoric_part_is_idempotent(seed):
    F = random_deformation(np.random.default_rng(seed), det_range=(0.1, 5.0))
    once = isochoric_part(F)
    np.testing.assert_allclose(isochoric_part(once), once, rtol=0, atol=1e-12 * frobenius(once))
    assert jacobian(once) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(T=tensors)
def test_sign_tensor_has_at_most_unit_norm(T):
    n = frobenius(sign_tensor(T))
    assert n <= 1.0 + 1e-15
    if frobenius(T) > 0:
        assert n == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(T=tensors)
def test_deviator_is_traceless(T):
    n = frobenius(T)
    assert abs(trace(deviator(T))) <= 1e-12 * max(n, 1e-300) or n == 0.0
