"""
Compressible neo-Hookean response of the undamaged constituents.

    psi = mu/2 (J^(-2/3) tr C - 3) + kappa/2 (J - 1)^2

The isochoric invariant J^(-2/3) tr C is used so that the reference state is
stress free and a pure dilation stores only volumetric energy.

Stresses are computed from the elastic factor F_e. Because growth is
spherical, the Cauchy stress of a grown constituent equals the Cauchy
stress of its elastic factor, and the spatial tangent of the mixture is
the weighted sum of the constituent tangents evaluated at their own F_e.
"""

from dataclasses import dataclass

import numpy as np

from .kinematics import I3, DomainError, cofactor, elastic_part, jacobian, left_cauchy_green, trace

# fourth-order identities, index order ijkl
_II = np.einsum("ij,kl->ijkl", I3, I3)
_ISYM = 0.5 * (np.einsum("ik,jl->ijkl", I3, I3) + np.einsum("il,jk->ijkl", I3, I3))


@dataclass(frozen=True)
class NeoHookeanParams:
    mu: float
    kappa: float

    def __post_init__(self):
        if not (self.mu > 0 and self.kappa > 0):
            raise DomainError(f"moduli must be positive: mu={self.mu}, kappa={self.kappa}")


def _det_checked(F_e):
    J = jacobian(F_e)
    if np.any(~(J > 0.0)):
        raise DomainError("det(F_e) must be positive")
    return J


def elastic_energy(F_e, p: NeoHookeanParams):
    """Strain energy per unit volume of the (grown) intermediate configuration."""
    F_e = np.asarray(F_e, dtype=float)
    J = _det_checked(F_e)
    I1 = np.sum(F_e * F_e, axis=(-2, -1))
    return 0.5 * p.mu * (J ** (-2.0 / 3.0) * I1 - 3.0) + 0.5 * p.kappa * (J - 1.0) ** 2


def cauchy_from_elastic(F_e, p: NeoHookeanParams):
    """Cauchy stress mu J^(-5/3) dev(b) + kappa (J - 1) I of an elastic factor."""
    F_e = np.asarray(F_e, dtype=float)
    J = _det_checked(F_e)
    b = left_cauchy_green(F_e)
    dev_b = b - trace(b)[..., None, None] / 3.0 * I3
    return (p.mu * J ** (-5.0 / 3.0))[..., None, None] * dev_b + (p.kappa * (J - 1.0))[..., None, None] * I3


def energy_gradient(F_e, p: NeoHookeanParams):
    """d psi / d F_e = J sigma F_e^-T."""
    F_e = np.asarray(F_e, dtype=float)
    sig = cauchy_from_elastic(F_e, p)
    return sig @ cofactor(F_e)


def mandel_stress(F_e, p: NeoHookeanParams):
    """F_e^T . d psi / d F_e, the stress part of the growth driving force."""
    F_e = np.asarray(F_e, dtype=float)
    return np.swapaxes(F_e, -1, -2) @ energy_gradient(F_e, p)


def cauchy_stress(F, J_g, p: NeoHookeanParams):
    return cauchy_from_elastic(elastic_part(F, J_g), p)


def first_pk_stress(F, J_g, p: NeoHookeanParams, stiffness_factor=1.0):
    """P = s J_g (d psi / d F_e) F_g^-T, with s the mixture weight of the constituent."""
    F = np.asarray(F, dtype=float)
    J_g = np.asarray(J_g, dtype=float)
    F_e = elastic_part(F, J_g)
    s = np.asarray(stiffness_factor, dtype=float)
    scale = s * J_g ** (2.0 / 3.0)
    return scale[..., None, None] * energy_gradient(F_e, p)


def spatial_tangent_elastic(F_e, p: NeoHookeanParams):
    """
    Spatial elasticity tensor c_ijkl (push-forward of 4 d2psi/dCdC, divided by J).

    Used with the geometric term delta_ik sigma_jl in the updated-Lagrangian
    stiffness. Has both minor symmetries and major symmetry.
    """
    F_e = np.asarray(F_e, dtype=float)
    J = _det_checked(F_e)
    b = left_cauchy_green(F_e)
    mJ = p.mu * J ** (-5.0 / 3.0)
    sig_iso = mJ[..., None, None] * (b - trace(b)[..., None, None] / 3.0 * I3)
    pres = p.kappa * (J - 1.0)
    ptil = p.kappa * (2.0 * J - 1.0)

    c = (2.0 / 3.0 * mJ * trace(b))[..., None, None, None, None] * (_ISYM - _II / 3.0)
    c = c - 2.0 / 3.0 * (np.einsum("ij,...kl->...ijkl", I3, sig_iso) + np.einsum("...ij,kl->...ijkl", sig_iso, I3))
    c = c + ptil[..., None, None, None, None] * _II - 2.0 * pres[..., None, None, None, None] * _ISYM
    return c


def mixture_weights(lam, d, damage_fn):
    """Volume-and-damage weights of the original (1) and new (2) constituents."""
    lam = np.asarray(lam, dtype=float)
    return (1.0 - lam) * damage_fn(d), lam


def mixture_cauchy(F, J_g1, J_g2, w1, w2, p1: NeoHookeanParams, p2: NeoHookeanParams):
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    return w1[..., None, None] * cauchy_stress(F, J_g1, p1) + w2[..., None, None] * cauchy_stress(F, J_g2, p2)


def mixture_tangent(F, J_g1, J_g2, w1, w2, p1: NeoHookeanParams, p2: NeoHookeanParams):
    w1 = np.asarray(w1, dtype=float)[..., None, None, None, None]
    w2 = np.asarray(w2, dtype=float)[..., None, None, None, None]
    c1 = spatial_tangent_elastic(elastic_part(F, J_g1), p1)
    c2 = spatial_tangent_elastic(elastic_part(F, J_g2), p2)
    return w1 * c1 + w2 * c2


def material_tangent(F, state, p1: NeoHookeanParams, p2: NeoHookeanParams):
    """
    Spatial tangent of the damaged/healing mixture.

    Weighted sum (1 - lambda) f(d) c_1 + lambda c_2 of the constituent tangents,
    each evaluated at its own elastic factor.
    """
    from .healing import damage_function

    w1, w2 = mixture_weights(state.lam, state.d, damage_function)
    return mixture_tangent(F, state.Jg1, state.Jg2, w1, w2, p1, p2)
