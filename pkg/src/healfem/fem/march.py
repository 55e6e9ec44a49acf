"""
Staggered time integration.

Each increment first advances the internal variables explicitly with the
deformation of the last equilibrium state, then solves equilibrium for the
new boundary values with those variables frozen. A failed solve restores
the previous increment exactly and retries with the increment halved.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ..healing import (InternalState, capture_growth_limit, driving_forces, evolve_with_report,
                       growth_drive, healing_parameter)
from .assembly import NDOF, Assembler, RegionModel
from .mesh import Mesh
from .solver import SolveControls, newton_solve

log = logging.getLogger(__name__)


class SolverFailure(RuntimeError):
    def __init__(self, increment, time, reason, norms=()):
        super().__init__(f"equilibrium failed at increment {increment} (t = {time:.6g} d): {reason}")
        self.increment = increment
        self.time = time
        self.reason = reason
        self.norms = list(norms)


@dataclass
class BoundaryCondition:
    """Prescribed value of one nodal component: 0 = u_x, 1 = u_y, 2 = phi."""

    nodes: np.ndarray
    component: int
    value: Callable[[float], np.ndarray | float]

    def dofs(self):
        return NDOF * np.asarray(self.nodes, dtype=int) + self.component

    def values(self, t):
        return np.broadcast_to(np.asarray(self.value(t), dtype=float), (len(self.nodes),))


@dataclass
class CaptureRule:
    """Freeze r_g := |q_g| at the first converged state with t >= time."""

    time: float
    label: str = ""


class Simulation:
    def __init__(self, mesh: Mesh, regions: list[RegionModel], bcs: list[BoundaryCondition],
                 controls: SolveControls, gr_start=0.0, capture: CaptureRule | None = None,
                 probes: Callable | None = None, breakpoints=(), snapshot_times=(),
                 on_snapshot: Callable | None = None, f_ext=None):
        self.mesh = mesh
        self.regions = regions
        self.asm = Assembler(mesh, regions)
        self.bcs = bcs
        self.controls = controls
        self.gr_start = float(gr_start)
        self.capture = capture
        self.probes = probes
        self.snapshot_times = sorted(float(t) for t in snapshot_times)
        self.on_snapshot = on_snapshot
        self.f_ext = f_ext

        shape = (mesh.n_elements, 4)
        self.state = InternalState.virgin(shape)
        self.r_g1 = np.full(shape, np.inf)
        self.r_g2 = np.full(shape, np.inf)
        self.captured = capture is None
        if capture is None:
            for model, els in zip(regions, self.asm.region_elements):
                self.r_g1[els] = model.healing.r_g1
                self.r_g2[els] = model.healing.r_g2

        self.x = np.zeros(self.asm.n_dofs)
        self.t = 0.0
        self.increment = 0
        self.records: list[dict] = []
        self.clamps = 0
        self.max_halvings = 0
        self.last_halvings = 0
        self.min_dissipation = 0.0
        self.last_dissipation = np.zeros(shape)
        self.newton_log: list[tuple[float, int]] = []
        area = mesh.element_areas().sum()
        mu = max(max(r.mat1.mu, r.mat2.mu, r.mat1.kappa) for r in regions)
        self.force_floor = mu * np.sqrt(area)

        self.cons_dofs = np.concatenate([bc.dofs() for bc in bcs]) if bcs else np.zeros(0, dtype=int)
        if len(np.unique(self.cons_dofs)) != len(self.cons_dofs):
            raise ValueError("a dof is constrained twice")

        times = set(np.round(np.arange(0.0, controls.duration + 1e-9 * controls.dt, controls.dt), 12))
        times.update(float(b) for b in breakpoints if 0 < b <= controls.duration)
        times.update(t for t in self.snapshot_times if 0 < t <= controls.duration)
        if capture is not None and 0 < capture.time <= controls.duration:
            times.add(float(capture.time))
        if 0 < self.gr_start <= controls.duration:
            times.add(self.gr_start)
        times.add(float(controls.duration))
        self.times = np.array(sorted(t for t in times if t > 0))

        self._equilibrate(0.0)
        self._after_commit()

    # ------------------------------------------------------------------ core
    def targets(self, t):
        if not self.bcs:
            return np.zeros(0)
        return np.concatenate([bc.values(t) for bc in self.bcs])

    def _system(self, state):
        def system(x, tangent):
            return self.asm.assemble(x, state, tangent=tangent, f_ext=self.f_ext)
        return system

    def _equilibrate(self, t):
        res = newton_solve(self._system(self.state), self.x, self.cons_dofs, self.targets(t),
                           self.controls, floor=self.force_floor)
        if not res.converged:
            raise SolverFailure(self.increment, t, res.reason, res.norms)
        self.x = res.x
        self.R = res.R
        self.qf = res.aux
        self.newton_log.append((t, res.iterations))

    def healing_for(self, k, els, t0):
        hp = replace(self.regions[k].healing, r_g1=self.r_g1[els], r_g2=self.r_g2[els])
        if t0 < self.gr_start - 1e-9:
            hp = hp.frozen_growth_and_remodeling()
        return hp

    def _evolve(self, t0, dt):
        new = self.state.copy()
        clamps = 0
        halvings = 0
        diss = np.zeros_like(self.last_dissipation)
        for k, (model, els) in enumerate(zip(self.regions, self.asm.region_elements)):
            if len(els) == 0:
                continue
            hp = self.healing_for(k, els, t0)
            s, rep = evolve_with_report(self.state.take(els), self.qf.F[els], hp, model.mats, dt,
                                        model.nonlocal_, self.qf.grad_phi[els],
                                        max_halvings=self.controls.max_halvings)
            new.put(els, s)
            diss[els] = rep.dissipation
            clamps += rep.clamps
            halvings = max(halvings, rep.max_halvings)
        return new, clamps, halvings, diss

    def _advance(self, t0, t1, depth=0):
        saved = (self.x.copy(), self.state.copy(), self.R.copy(), self.qf)
        new_state, clamps, halvings, diss = self._evolve(t0, t1 - t0)
        res = newton_solve(self._system(new_state), self.x, self.cons_dofs, self.targets(t1),
                           self.controls, floor=self.force_floor)
        if not res.converged:
            self.x, self.state, self.R, self.qf = saved
            if depth >= self.controls.max_cutbacks:
                raise SolverFailure(self.increment, t1, res.reason, res.norms)
            log.info("increment to t=%.6g failed (%s); halving", t1, res.reason)
            tm = 0.5 * (t0 + t1)
            self._advance(t0, tm, depth + 1)
            self._advance(tm, t1, depth + 1)
            return
        self.x = res.x
        self.R = res.R
        self.qf = res.aux
        new_state.phi = self.qf.phi.copy()
        self.state = new_state
        self.t = t1
        self.clamps += clamps
        self.max_halvings = max(self.max_halvings, halvings)
        self.last_halvings = halvings
        self.last_dissipation = diss
        self.min_dissipation = min(self.min_dissipation, float(diss.min()))
        self.newton_log.append((t1, res.iterations))

    def _after_commit(self):
        if not self.captured and self.t >= self.capture.time - 1e-9:
            for model, els in zip(self.regions, self.asm.region_elements):
                r1, r2 = capture_growth_limit(self.qf.F[els], self.state.take(els), model.mats,
                                              model.healing, model.nonlocal_, self.qf.grad_phi[els])
                self.r_g1[els] = r1
                self.r_g2[els] = r2
            self.captured = True
            log.info("growth limits captured at t=%.6g", self.t)
        self.records.append(self.record())
        for ts in self.snapshot_times:
            if abs(ts - self.t) < 1e-9 and self.on_snapshot is not None:
                self.on_snapshot(self)

    def step(self, t1):
        self.increment += 1
        self._advance(self.t, t1)
        self._after_commit()

    def run(self, until=None):
        for t1 in self.times:
            if t1 <= self.t + 1e-12:
                continue
            if until is not None and t1 > until + 1e-12:
                break
            self.step(float(t1))
        if not self.captured:
            raise ValueError(f"growth-limit capture time {self.capture.time} was never reached")
        return self.records

    # ------------------------------------------------------------- outputs
    @property
    def displacement(self):
        return self.x.reshape(-1, NDOF)[:, :2]

    @property
    def phi(self):
        return self.x.reshape(-1, NDOF)[:, 2]

    def reaction(self, nodes, component):
        return float(self.R[NDOF * np.asarray(nodes) + component].sum())

    def healing_field(self):
        return healing_parameter(self.state)

    def growth_norms(self):
        """Per-point growth-force norms (|q_g1|, |q_g2|) at the current state."""
        n1 = np.zeros(self.state.d.shape)
        n2 = np.zeros(self.state.d.shape)
        for model, els in zip(self.regions, self.asm.region_elements):
            q = driving_forces(self.qf.F[els], self.state.take(els), model.mats, model.healing,
                               model.nonlocal_, self.qf.grad_phi[els])
            n1[els] = growth_drive(q.q_g1)[1]
            n2[els] = growth_drive(q.q_g2)[1]
        return n1, n2

    def record(self):
        w = self.asm.wdet
        vol = w.sum()
        H = self.healing_field()
        s = self.state
        n1, n2 = self.growth_norms()
        with np.errstate(invalid="ignore", divide="ignore"):
            gap = np.where(np.isfinite(self.r_g1) & (self.r_g1 > 0), (n1 - self.r_g1) / self.r_g1, np.nan)
        rec = {
            "time": self.t,
            "H_min": float(H.min()),
            "H_mean": float((H * w).sum() / vol),
            "lambda_mean": float((s.lam * w).sum() / vol),
            "lambda_max": float(s.lam.max()),
            "Jg1_mean": float((s.Jg1 * w).sum() / vol),
            "Jg2_mean": float((s.Jg2 * w).sum() / vol),
            "d_max": float(s.d.max()),
            "d_mean": float((s.d * w).sum() / vol),
            "qg1_norm_mean": float((n1 * w).sum() / vol),
            "qg1_gap_max": float(np.nanmax(np.abs(gap))) if np.any(np.isfinite(gap)) else float("nan"),
            "dissipation_min": float(self.last_dissipation.min()),
        }
        if self.probes is not None:
            rec.update(self.probes(self))
        return rec


def time_march(sim: Simulation, until=None):
    """Run ``sim`` through its time grid and return the list of output records."""
    return sim.run(until)
