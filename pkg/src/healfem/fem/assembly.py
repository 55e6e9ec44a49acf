"""
Residual and tangent of the coupled displacement / nonlocal-damage problem.

Each node carries three unknowns ordered (u_x, u_y, phi); global dof
``3 * node + component``. The mechanical block is integrated in the current
configuration (Cauchy stress against spatial gradients); the nonlocal block
uses the reference gradient of phi, so with the internal variables frozen
during a solve the two blocks do not couple.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..healing import HealingParams, InternalState, NonlocalParams, damage_function
from ..kinematics import embed_plane
from ..material import NeoHookeanParams, mixture_cauchy, mixture_tangent
from .mesh import GAUSS_POINTS, GAUSS_WEIGHTS, Mesh, shape_eval

NDOF = 3
# keeps the nonlocal field defined where the original constituent is fully replaced
NONLOCAL_FLOOR = 1e-8


class InvertedElementError(RuntimeError):
    def __init__(self, element, detF):
        super().__init__(f"element {element} inverted (det F = {detF:.3e})")
        self.element = int(element)


@dataclass
class RegionModel:
    name: str
    mat1: NeoHookeanParams
    mat2: NeoHookeanParams
    healing: HealingParams
    nonlocal_: NonlocalParams

    @property
    def mats(self):
        return self.mat1, self.mat2


@dataclass
class QuadratureFields:
    F: np.ndarray          # (n_el, 4, 3, 3)
    phi: np.ndarray        # (n_el, 4)
    grad_phi: np.ndarray   # (n_el, 4, 2) reference gradient
    sigma: np.ndarray | None = None


class Assembler:
    """Precomputed geometry and scatter indices for one mesh."""

    def __init__(self, mesh: Mesh, regions: list[RegionModel]):
        mesh.validate()
        if len(regions) != len(mesh.region_names):
            raise ValueError("one RegionModel per mesh region is required")
        self.mesh = mesh
        self.regions = regions
        self.n_dofs = NDOF * mesh.n_nodes
        self.N, _ = shape_eval(GAUSS_POINTS)                       # (4q, 4a)
        self.dNdX, detJ = mesh.reference_gradients()
        self.wdet = detJ * GAUSS_WEIGHTS
        conn = mesh.elements
        self.edofs = (NDOF * conn[:, :, None] + np.arange(NDOF)).reshape(len(conn), -1)   # (n, 12)
        self.rows = np.repeat(self.edofs[:, :, None], 12, axis=2).ravel()
        self.cols = np.repeat(self.edofs[:, None, :], 12, axis=1).ravel()
        self.region_elements = [np.nonzero(mesh.region == k)[0] for k in range(len(regions))]

    def split(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, NDOF)
        return x[:, :2], x[:, 2]

    def quadrature_fields(self, x):
        u, phi = self.split(x)
        ue = u[self.mesh.elements]
        pe = phi[self.mesh.elements]
        H = np.einsum("nai,nqaJ->nqiJ", ue, self.dNdX)
        F = embed_plane(H + np.eye(2))
        return QuadratureFields(
            F=F,
            phi=pe @ self.N.T,
            grad_phi=np.einsum("na,nqaJ->nqJ", pe, self.dNdX),
        )

    def assemble(self, x, state: InternalState, tangent=True, f_ext=None):
        """
        Global residual (internal minus external nodal forces) and, optionally,
        the sparse tangent. Raises InvertedElementError on det F <= 0.
        """
        qf = self.quadrature_fields(x)
        F = qf.F
        detF = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
        if np.any(detF <= 0.0):
            e, q = np.unravel_index(np.argmin(detF), detF.shape)
            raise InvertedElementError(e, detF[e, q])
        Re = np.zeros((self.mesh.n_elements, 4, NDOF))
        Ke = np.zeros((self.mesh.n_elements, 4, NDOF, 4, NDOF)) if tangent else None
        sigma = np.zeros(F.shape)

        for model, els in zip(self.regions, self.region_elements):
            if len(els) == 0:
                continue
            s = state.take(els)
            Fr = F[els]
            Jr = detF[els]
            dNdX = self.dNdX[els]
            wdet = self.wdet[els]
            Finv = np.stack([np.stack([Fr[..., 1, 1], -Fr[..., 0, 1]], -1),
                             np.stack([-Fr[..., 1, 0], Fr[..., 0, 0]], -1)], -2) / Jr[..., None, None]
            dNdx = np.einsum("nqaJ,nqJj->nqaj", dNdX, Finv)
            dv = Jr * wdet

            w1 = (1.0 - s.lam) * damage_function(s.d)
            w2 = np.asarray(s.lam)
            sig = mixture_cauchy(Fr, s.Jg1, s.Jg2, w1, w2, model.mat1, model.mat2)
            sigma[els] = sig
            s2 = sig[..., :2, :2]
            Re[els, :, :2] = np.einsum("nqij,nqaj,nq->nai", s2, dNdx, dv)

            nl = model.nonlocal_
            a = ((1.0 - s.lam) * s.Jg1 + NONLOCAL_FLOOR) * wdet
            src = nl.beta_d * (qf.phi[els] - nl.gamma_d * s.d)
            Re[els, :, 2] = (np.einsum("nqJ,nqaJ,nq->na", qf.grad_phi[els], dNdX, a) * nl.c_d
                             + np.einsum("nq,qa,nq->na", src, self.N, a))

            if tangent:
                c = mixture_tangent(Fr, s.Jg1, s.Jg2, w1, w2, model.mat1, model.mat2)[..., :2, :2, :2, :2]
                Bw = dNdx * dv[..., None, None]
                Kmat = np.einsum("nqaikl,nqbl->naibk", np.einsum("nqaj,nqijkl->nqaikl", Bw, c), dNdx)
                geo = np.einsum("nqal,nqbl->nab", Bw @ s2, dNdx)
                Kmat[:, :, 0, :, 0] += geo
                Kmat[:, :, 1, :, 1] += geo
                Ke[els, :, :2, :, :2] = Kmat
                Ke[els, :, 2, :, 2] = (nl.c_d * np.einsum("nqaJ,nqbJ,nq->nab", dNdX, dNdX, a)
                                       + nl.beta_d * np.einsum("qa,qb,nq->nab", self.N, self.N, a))

        R = np.bincount(self.edofs.ravel(), weights=Re.ravel(), minlength=self.n_dofs)
        if f_ext is not None:
            R = R - f_ext
        qf.sigma = sigma
        if not tangent:
            return R, None, qf
        K = sp.csr_matrix((Ke.ravel(), (self.rows, self.cols)), shape=(self.n_dofs, self.n_dofs))
        return R, K, qf

    def body_force_vector(self, B):
        """Consistent nodal loads of a uniform body force B per unit reference volume."""
        f = np.zeros((self.mesh.n_elements, 4, NDOF))
        f[:, :, :2] = np.einsum("qa,nq,i->nai", self.N, self.wdet, np.asarray(B, dtype=float))
        return np.bincount(self.edofs.ravel(), weights=f.ravel(), minlength=self.n_dofs)

    def qp_volumes(self):
        return self.wdet
