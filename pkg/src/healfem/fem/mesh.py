"""Bilinear quadrilateral meshes and their reference-configuration geometry."""

from dataclasses import dataclass, field

import numpy as np

_XI_NODES = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

_g = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = np.array([[-_g, -_g], [_g, -_g], [_g, _g], [-_g, _g]])
GAUSS_WEIGHTS = np.ones(4)


def shape_eval(xi):
    """
    Bilinear shape functions at local coordinates xi in [-1, 1]^2.

    Returns
    -------
    N : ndarray, shape (..., 4)
    dN : ndarray, shape (..., 4, 2)
        Derivatives with respect to (xi, eta).
    """
    xi = np.asarray(xi, dtype=float)
    x = xi[..., 0, None]
    y = xi[..., 1, None]
    a = _XI_NODES[:, 0]
    b = _XI_NODES[:, 1]
    N = 0.25 * (1.0 + a * x) * (1.0 + b * y)
    dN = np.stack([0.25 * a * (1.0 + b * y), 0.25 * b * (1.0 + a * x)], axis=-1)
    return N, dN


@dataclass
class Mesh:
    nodes: np.ndarray                      # (n_nodes, 2) reference coordinates, mm
    elements: np.ndarray                   # (n_elements, 4) counter-clockwise connectivity
    region: np.ndarray | None = None       # (n_elements,) index into region_names
    region_names: tuple = ("tissue",)
    node_sets: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.elements = np.asarray(self.elements, dtype=int)
        if self.region is None:
            self.region = np.zeros(len(self.elements), dtype=int)
        self.region = np.asarray(self.region, dtype=int)
        self.node_sets = {k: np.asarray(v, dtype=int) for k, v in self.node_sets.items()}

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def validate(self):
        if self.elements.ndim != 2 or self.elements.shape[1] != 4:
            raise ValueError("elements must be 4-node quadrilaterals")
        if self.elements.min() < 0 or self.elements.max() >= self.n_nodes:
            raise ValueError("connectivity references a node that does not exist")
        if len(self.region) != self.n_elements or self.region.min() < 0 or self.region.max() >= len(self.region_names):
            raise ValueError("every element needs exactly one valid region")
        for name, ids in self.node_sets.items():
            if len(ids) and (ids.min() < 0 or ids.max() >= self.n_nodes):
                raise ValueError(f"node set {name!r} references a missing node")
        _, detJ = self.reference_gradients()
        bad = np.nonzero(np.any(detJ <= 0.0, axis=1))[0]
        if len(bad):
            raise ValueError(f"element {bad[0]} has a non-positive Jacobian")
        return self

    def reference_gradients(self):
        """Shape-function gradients dN/dX (n_el, 4 qp, 4 nodes, 2) and det(dX/dxi)."""
        _, dN = shape_eval(GAUSS_POINTS)                       # (4q, 4a, 2)
        X = self.nodes[self.elements]                          # (n, 4a, 2)
        Jm = np.einsum("nai,qaj->nqij", X, dN)                 # dX_i/dxi_j
        detJ = Jm[..., 0, 0] * Jm[..., 1, 1] - Jm[..., 0, 1] * Jm[..., 1, 0]
        inv = np.linalg.inv(Jm)
        dNdX = np.einsum("qaj,nqji->nqai", dN, inv)
        return dNdX, detJ

    def element_areas(self):
        _, detJ = self.reference_gradients()
        return detJ @ GAUSS_WEIGHTS

    def centroids(self):
        return self.nodes[self.elements].mean(axis=1)

    def region_area(self, name):
        k = self.region_names.index(name)
        return float(self.element_areas()[self.region == k].sum())

    def quadrature_coordinates(self):
        N, _ = shape_eval(GAUSS_POINTS)
        return np.einsum("qa,nai->nqi", N, self.nodes[self.elements])
