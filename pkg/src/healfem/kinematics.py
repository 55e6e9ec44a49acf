"""
Tensor algebra and the multiplicative elastic-growth split.

Every function accepts a single 3x3 tensor or a stack of shape (..., 3, 3);
scalars broadcast against the leading axes.
"""

import numpy as np

I3 = np.eye(3)


class DomainError(ValueError):
    """Raised when an argument lies outside the admissible set."""


def _positive(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0.0)):
        raise DomainError(f"{name} must be positive, got min {np.min(x)!r}")
    return x


def jacobian(F):
    """Volume ratio det(F)."""
    F = np.asarray(F, dtype=float)
    if F.shape[-2:] != (3, 3):
        return np.linalg.det(F)
    # closed form; much cheaper than LAPACK for large stacks of 3x3 matrices
    return (F[..., 0, 0] * (F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1])
            - F[..., 0, 1] * (F[..., 1, 0] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 0])
            + F[..., 0, 2] * (F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0]))


def cofactor(F):
    """Cofactor matrix det(F) F^-T of 3x3 tensors."""
    F = np.asarray(F, dtype=float)
    a, b = F[..., [1, 2, 0], :], F[..., [2, 0, 1], :]
    return np.cross(a, b)


def elastic_part(F, J_g):
    """Elastic factor F_e = J_g^(-1/3) F of F = F_e . F_g with F_g = J_g^(1/3) I."""
    F = np.asarray(F, dtype=float)
    J_g = _positive(J_g, "J_g")
    return F * np.cbrt(J_g)[..., None, None] ** -1


def growth_tensor(J_g):
    """Spherical growth deformation J_g^(1/3) I."""
    J_g = _positive(J_g, "J_g")
    return np.cbrt(J_g)[..., None, None] * I3


def right_cauchy_green(F_e):
    F_e = np.asarray(F_e, dtype=float)
    return np.swapaxes(F_e, -1, -2) @ F_e


def left_cauchy_green(F_e):
    F_e = np.asarray(F_e, dtype=float)
    return F_e @ np.swapaxes(F_e, -1, -2)


def isochoric_part(F):
    """Unimodular part J^(-1/3) F."""
    F = np.asarray(F, dtype=float)
    J = jacobian(F)
    if np.any(~(J > 0.0)):
        raise DomainError("isochoric_part needs det(F) > 0")
    return F / np.cbrt(J)[..., None, None]


def frobenius(T):
    T = np.asarray(T, dtype=float)
    # scale by the largest entry so tiny or huge tensors neither underflow nor overflow
    m = np.max(np.abs(T), axis=(-2, -1))
    s = np.where(m > 0.0, m, 1.0)[..., None, None]
    return m * np.sqrt(np.sum((T / s) ** 2, axis=(-2, -1)))


def sign_tensor(T):
    """Selection T/|T| from the tensor sign set; the zero tensor maps to zero."""
    T = np.asarray(T, dtype=float)
    n = frobenius(T)
    safe = np.where(n > 0.0, n, 1.0)
    return np.where((n > 0.0)[..., None, None], T / safe[..., None, None], 0.0)


def trace(T):
    return np.trace(np.asarray(T, dtype=float), axis1=-2, axis2=-1)


def deviator(T):
    T = np.asarray(T, dtype=float)
    return T - trace(T)[..., None, None] / 3.0 * I3


def embed_plane(F2):
    """Lift in-plane 2x2 deformation gradients to 3x3 with F_zz = 1."""
    F2 = np.asarray(F2, dtype=float)
    F = np.zeros(F2.shape[:-2] + (3, 3))
    F[..., :2, :2] = F2
    F[..., 2, 2] = 1.0
    return F
