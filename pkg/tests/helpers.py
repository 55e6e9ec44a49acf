"""Shared generators and monitors for the test suite."""

import time
from dataclasses import replace

import numpy as np

from healfem.fem.mesh import Mesh
from healfem.healing import (InternalState, PhysiologicalPotential, driving_forces, healing_parameter,
                             total_energy)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1.0
    return q


def random_deformation(rng, det_range=(0.7, 1.5), spread=0.3):
    """Random 3x3 deformation gradient with det drawn uniformly from det_range."""
    while True:
        A = np.eye(3) + spread * rng.normal(size=(3, 3))
        J = np.linalg.det(A)
        if J > 0.2:
            break
    target = rng.uniform(*det_range)
    return A * (target / J) ** (1.0 / 3.0)


def random_state(rng, shape=(), d=(0.0, 2.0), lam=(0.0, 0.9), Jg=(0.8, 1.3), phi=(0.0, 2.0)):
    return InternalState(
        Jg1=rng.uniform(*Jg, size=shape),
        Jg2=rng.uniform(*Jg, size=shape),
        lam=rng.uniform(*lam, size=shape),
        d=rng.uniform(*d, size=shape),
        phi=rng.uniform(*phi, size=shape),
    )


def irregular_square(rng=None, size=1.0, jitter=0.15):
    """Unit square split into 4 quadrilaterals around a displaced interior node."""
    c = np.array([0.5, 0.5]) if rng is None else 0.5 + rng.uniform(-jitter, jitter, size=2)
    e = [0.5, 0.5, 0.5, 0.5] if rng is None else list(0.5 + rng.uniform(-jitter, jitter, size=4))
    nodes = np.array([
        [0.0, 0.0], [e[0], 0.0], [1.0, 0.0],
        [0.0, e[3]], c, [1.0, e[1]],
        [0.0, 1.0], [e[2], 1.0], [1.0, 1.0],
    ]) * size
    els = [[0, 1, 4, 3], [1, 2, 5, 4], [3, 4, 7, 6], [4, 5, 8, 7]]
    boundary = [0, 1, 2, 3, 5, 6, 7, 8]
    return Mesh(nodes, els, node_sets={"boundary": boundary, "interior": [4]})


class InvariantMonitor:
    """
    Step-by-step check of the thermodynamic invariants of a simulation.

    Records the worst violation of each invariant over every committed
    increment of every monitored run.
    """

    def __init__(self):
        self.d_decrease = 0.0            # largest drop of d at any point (must be 0)
        self.lam_low = 0.0               # most negative lambda
        self.lam_over_cap = 0.0          # largest lambda - max(eta, 0)
        self.H_out = 0.0                 # largest distance of H outside [0, 1]
        self.min_dissipation = 0.0
        self.clamps = 0
        self.runs = []

    def run(self, sim, label, until=None, stop=None):
        """March ``sim`` like Simulation.run, checking invariants after every increment."""
        caps = [max(m.healing.eta, 0.0) for m in sim.regions]
        prev_d = np.array(sim.state.d, copy=True)
        t0 = time.perf_counter()
        for t1 in sim.times:
            if t1 <= sim.t + 1e-12:
                continue
            if until is not None and t1 > until + 1e-12:
                break
            sim.step(float(t1))
            s = sim.state
            self.d_decrease = max(self.d_decrease, float(np.max(prev_d - s.d)))
            prev_d = np.array(s.d, copy=True)
            self.lam_low = min(self.lam_low, float(np.min(s.lam)))
            for cap, els in zip(caps, sim.asm.region_elements):
                if len(els):
                    self.lam_over_cap = max(self.lam_over_cap, float(np.max(s.lam[els])) - cap)
            H = healing_parameter(s)
            self.H_out = max(self.H_out, float(np.max(H)) - 1.0, -float(np.min(H)))
            self.min_dissipation = min(self.min_dissipation, float(sim.last_dissipation.min()))
            if stop is not None and stop(sim):
                break
        self.clamps += sim.clamps
        elapsed = time.perf_counter() - t0
        self.runs.append((label, elapsed))
        return sim.records, elapsed

    def failures(self):
        out = []
        if self.d_decrease > 0.0:
            out.append(f"d decreased by {self.d_decrease:.3e}")
        if self.lam_low < 0.0:
            out.append(f"lambda reached {self.lam_low:.3e} < 0")
        if self.lam_over_cap > 0.0:
            out.append(f"lambda exceeded its cap by {self.lam_over_cap:.3e}")
        if self.H_out > 0.0:
            out.append(f"H left [0, 1] by {self.H_out:.3e}")
        if self.min_dissipation < -1e-12:
            out.append(f"dissipation increment {self.min_dissipation:.3e} < -1e-12")
        if self.clamps:
            out.append(f"{self.clamps} clamp activations")
        return out


def _energy_with_growth_perturbation(F, s, grad_phi, mats, hp, nl, which, E, eps):
    """
    Energy of one constituent (per unit of its volume fraction) with its
    growth tensor F_g = J_g^(1/3) (I + eps E).

    total_energy only accepts spherical growth, but with F' = F (I + eps E)^-1
    det(I + eps E)^(1/3) and J_g' = J_g det(I + eps E) its elastic factor and
    volume prefactor are exactly those of the perturbed growth tensor.
    """
    A = np.eye(3) + eps * E
    a = np.linalg.det(A)
    Fp = F @ np.linalg.inv(A) * a ** (1.0 / 3.0)
    if which == 1:
        sp = replace(s, Jg1=s.Jg1 * a, lam=0.0)
    else:
        sp = replace(s, Jg2=s.Jg2 * a, lam=1.0)
    return total_energy(Fp, sp, grad_phi, mats, hp, nl)


def energy_force_errors(F, s, grad_phi, mats, hp, nl, h=1e-5):
    """
    Relative errors of the four driving forces against central differences
    of total_energy at one state.

    The physiological potential is an external offset that is not
    differentiated with respect to d, so it is frozen at its current value
    for the derivative. Returns a dict force name -> relative error.
    """
    q = driving_forces(F, s, mats, hp, nl, grad_phi)
    hp_fd = replace(hp, g=PhysiologicalPotential("constant", float(hp.g(s.d))))
    lam, Jg1, Jg2 = float(s.lam), float(s.Jg1), float(s.Jg2)
    scale = max(m.mu for m in mats)

    def W(st):
        return float(total_energy(F, st, grad_phi, mats, hp_fd, nl))

    err = {}
    # the energy is affine in lambda; the per-constituent split below relies on it
    split = (1 - lam) * W(replace(s, lam=0.0)) + lam * W(replace(s, lam=1.0))
    err["lambda_split"] = abs(split - W(s)) / max(abs(W(s)), scale)

    for which, qg, J in ((1, q.q_g1, Jg1), (2, q.q_g2, Jg2)):
        fd = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                E = np.zeros((3, 3))
                E[i, j] = 1.0
                wp = _energy_with_growth_perturbation(F, s, grad_phi, mats, hp_fd, nl, which, E, h)
                wm = _energy_with_growth_perturbation(F, s, grad_phi, mats, hp_fd, nl, which, E, -h)
                # dW_k = -J_gk q_gk : E d eps
                fd[i, j] = -(wp - wm) / (2 * h) / J
        err[f"q_g{which}"] = np.linalg.norm(qg - fd) / max(np.linalg.norm(fd), scale)

    fd_rm = -(W(replace(s, lam=lam + h)) - W(replace(s, lam=lam - h))) / (2 * h)
    err["q_rm"] = abs(float(q.q_rm) - fd_rm) / max(abs(fd_rm), scale)
    d = float(s.d)
    fd_d = -(W(replace(s, d=d + h)) - W(replace(s, d=d - h))) / (2 * h) / ((1 - lam) * Jg1)
    err["q_d"] = abs(float(q.q_d) - fd_d) / max(abs(fd_d), scale)
    return err


def random_fe_problem(rng, gamma_d=1.0, stretch=0.12):
    """Random 4-element mesh, material, internal state and nodal solution vector."""
    from healfem.fem.assembly import Assembler, RegionModel
    from healfem.healing import HealingParams, NonlocalParams
    from healfem.material import NeoHookeanParams

    mesh = irregular_square(rng, size=rng.uniform(0.5, 2.0))
    region = RegionModel("tissue", NeoHookeanParams(rng.uniform(0.5, 2.0), rng.uniform(1.0, 5.0)),
                         NeoHookeanParams(rng.uniform(0.5, 2.0), rng.uniform(1.0, 5.0)), HealingParams(),
                         NonlocalParams(rng.uniform(0.5, 2.0), rng.uniform(0.1, 2.0), gamma_d))
    asm = Assembler(mesh, [region])
    state = random_state(rng, shape=(mesh.n_elements, 4))
    x = np.zeros(asm.n_dofs).reshape(-1, 3)
    x[:, :2] = stretch * rng.normal(size=(mesh.n_nodes, 2)) * mesh.nodes.max()
    x[:, 2] = rng.uniform(0.0, 2.0, size=mesh.n_nodes)
    return asm, state, x.ravel()


def tangent_block_errors(asm, state, x, h=1e-6):
    """
    Max-norm relative error of each tangent block against central differences
    of the residual. Blocks are keyed 'uu', 'up', 'pu', 'pp' (p = nonlocal field).
    """
    _, K, _ = asm.assemble(x, state)
    K = K.toarray()
    n = len(x)
    fd = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        fd[:, j] = (asm.assemble(x + e, state, tangent=False)[0] - asm.assemble(x - e, state, tangent=False)[0]) / (2 * h)
    is_u = np.arange(n) % 3 < 2
    out = {}
    for name, rows, cols in (("uu", is_u, is_u), ("up", is_u, ~is_u), ("pu", ~is_u, is_u), ("pp", ~is_u, ~is_u)):
        kb = K[np.ix_(rows, cols)]
        fb = fd[np.ix_(rows, cols)]
        out[name] = float(np.max(np.abs(kb - fb)) / max(np.max(np.abs(fb)), 1e-12 * np.max(np.abs(K))))
    return out
