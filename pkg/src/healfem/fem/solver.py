"""Sparse direct solves and the increment-iterative Newton scheme."""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class LinearSolveError(RuntimeError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


@dataclass
class SolveControls:
    tol: float = 1e-8
    max_iter: int = 25
    line_search: bool = False
    dt: float = 0.1
    duration: float = 1000.0
    max_cutbacks: int = 8
    max_halvings: int = 10

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Newton tolerance must be positive")
        if not self.dt > 0 or not self.duration > 0:
            raise ValueError("dt and duration must be positive")


def _singular_pivot(A):
    """Index of the first vanishing pivot of a dense LU factorization, if any."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, _ = sla.lu_factor(A.toarray() if sp.issparse(A) else A, check_finite=False)
    d = np.abs(np.diag(lu))
    scale = max(d.max(), 1e-300)
    small = np.nonzero(d <= 1e-13 * scale)[0]
    return int(small[0]) if len(small) else None


def linear_solve(A, b):
    """Direct sparse LU solve with one step of iterative refinement."""
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        pivot = _singular_pivot(A) if n <= 5000 else None
        raise LinearSolveError(f"singular system ({exc}); zero pivot at row {pivot}", pivot) from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        pivot = _singular_pivot(A) if n <= 5000 else None
        raise LinearSolveError(f"singular system; zero pivot at row {pivot}", pivot)
    r = b - A @ x
    bn = np.linalg.norm(b)
    if bn > 0 and np.linalg.norm(r) > 1e-12 * bn:
        x += lu.solve(r)
    return x


@dataclass
class NewtonResult:
    converged: bool
    x: np.ndarray
    iterations: int
    norms: list = field(default_factory=list)
    reason: str = ""
    R: np.ndarray | None = None
    aux: object = None


def newton_solve(system, x0, constrained, target, controls: SolveControls, floor=0.0):
    """
    Solve R(x) = 0 on the free dofs with Dirichlet values ``target`` on ``constrained``.

    ``system(x, tangent)`` returns ``(R, K, aux)`` and may raise on an invalid
    configuration. The first iteration is a consistent linear predictor that
    carries the prescribed increment into the free dofs. Converged when
    |R_free| <= tol * (|R_pred| + floor).
    """
    x = np.array(x0, dtype=float, copy=True)
    n = len(x)
    cmask = np.zeros(n, dtype=bool)
    cmask[constrained] = True
    free = np.nonzero(~cmask)[0]
    cons = np.nonzero(cmask)[0]
    tvals = np.zeros(n)
    tvals[constrained] = target
    du_c = tvals[cons] - x[cons]

    try:
        R, K, aux = system(x, True)
    except (RuntimeError, ValueError) as exc:
        return NewtonResult(False, x, 0, [], f"initial assembly failed: {exc}")
    Kfc = K[free][:, cons]
    rhs = R[free] + Kfc @ du_c
    r0 = float(np.linalg.norm(rhs))
    limit = controls.tol * (r0 + floor)
    norms = [r0]
    if not np.any(du_c) and r0 <= controls.tol * floor:
        return NewtonResult(True, x, 0, norms, R=R, aux=aux)

    for it in range(1, controls.max_iter + 1):
        Kff = K[free][:, free]
        try:
            dx = linear_solve(Kff, -rhs)
        except LinearSolveError as exc:
            return NewtonResult(False, x, it, norms, f"linear solve failed: {exc}")
        x[free] += dx
        if it == 1:
            x[cons] = tvals[cons]
        try:
            R, K, aux = system(x, True)
        except (RuntimeError, ValueError) as exc:
            return NewtonResult(False, x, it, norms, f"assembly failed: {exc}")
        rhs = R[free]
        rn = float(np.linalg.norm(rhs))
        norms.append(rn)
        if not np.isfinite(rn):
            return NewtonResult(False, x, it, norms, "residual is not finite")
        if rn <= limit:
            return NewtonResult(True, x, it, norms, R=R, aux=aux)
        if it >= 3 and rn > 1e6 * max(norms[1], limit):
            return NewtonResult(False, x, it, norms, "diverging")
    return NewtonResult(False, x, controls.max_iter, norms, "maximum iterations reached")
