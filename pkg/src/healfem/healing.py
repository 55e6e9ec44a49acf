"""
Internal variables of the healing model and their explicit evolution.

Per material point the history consists of the growth volume ratios of the
original (damaged) and new tissue, the new-tissue volume fraction, the
damage variable and the interpolated nonlocal damage field. All functions
broadcast over arrays of points.

Rates are written in nondimensional form: every energy-density driving
force is divided by the shear modulus of the constituent it belongs to, so
that mobilities carry units of 1/day.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .kinematics import I3, DomainError, elastic_part, trace
from .material import NeoHookeanParams, elastic_energy, mandel_stress

SQRT3 = np.sqrt(3.0)


class StateInvariantError(RuntimeError):
    """An evolved state violates its invariants after clamping (a bug trap)."""


@dataclass
class InternalState:
    Jg1: np.ndarray | float = 1.0
    Jg2: np.ndarray | float = 1.0
    lam: np.ndarray | float = 0.0
    d: np.ndarray | float = 0.0
    phi: np.ndarray | float = 0.0

    @classmethod
    def virgin(cls, shape=()):
        return cls(np.ones(shape), np.ones(shape), np.zeros(shape), np.zeros(shape), np.zeros(shape))

    def copy(self):
        return InternalState(**{f.name: np.array(getattr(self, f.name), dtype=float, copy=True) for f in fields(self)})

    def take(self, idx):
        return InternalState(**{f.name: np.asarray(getattr(self, f.name))[idx] for f in fields(self)})

    def put(self, idx, other):
        for f in fields(self):
            getattr(self, f.name)[idx] = getattr(other, f.name)

    def check(self):
        if np.any(~(np.asarray(self.Jg1) > 0)) or np.any(~(np.asarray(self.Jg2) > 0)):
            raise StateInvariantError("growth volume ratio must stay positive")
        lam = np.asarray(self.lam)
        if np.any(lam < 0.0) or np.any(lam > 1.0):
            raise StateInvariantError("volume fraction left [0, 1]")
        if np.any(np.asarray(self.d) < 0.0):
            raise StateInvariantError("negative damage")


@dataclass(frozen=True)
class PhysiologicalPotential:
    """
    Energy offset g(d) of the original tissue.

    ``constant`` returns ``value`` for every d. ``saturating`` returns
    value * (1 - exp(-d)); it vanishes in undamaged tissue, so only damaged
    tissue is flagged for replacement.
    """

    mode: str = "constant"
    value: float = 0.001

    def __post_init__(self):
        if self.mode not in ("constant", "saturating"):
            raise DomainError(f"unknown physiological potential mode {self.mode!r}")
        if self.value < 0:
            raise DomainError("physiological potential must be non-negative")

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        if self.mode == "constant":
            return np.full(d.shape, float(self.value))
        return self.value * -np.expm1(-d)


@dataclass(frozen=True)
class NonlocalParams:
    c_d: float = 1.0
    beta_d: float = 0.001
    gamma_d: float = 1.0


@dataclass(frozen=True)
class HealingParams:
    M_g1: float = 0.0
    M_g2: float = 0.0
    r_g1: np.ndarray | float = np.inf
    r_g2: np.ndarray | float = np.inf
    M_rm: float = 0.0
    r_rm: float = 0.0
    eta: float = 1.0
    M_d: float = 1.0
    r_d: float = 0.2
    g: PhysiologicalPotential = field(default_factory=PhysiologicalPotential)
    # modulus that turns mobility x energy density into a rate; None uses
    # each constituent's own shear modulus
    rate_modulus: float | None = None

    def __post_init__(self):
        for name in ("M_g1", "M_g2", "M_rm", "M_d", "r_rm", "r_d"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if self.rate_modulus is not None and not self.rate_modulus > 0:
            raise DomainError("rate_modulus must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError("eta must lie in [0, 1]")

    def frozen_growth_and_remodeling(self):
        """Copy with growth and remodeling switched off (damage stays active)."""
        return replace(self, M_g1=0.0, M_g2=0.0, M_rm=0.0)


@dataclass
class DrivingForces:
    q_g1: np.ndarray
    q_g2: np.ndarray
    q_rm: np.ndarray
    q_d: np.ndarray


def damage_function(d):
    """Stiffness retention f(d) = exp(-d)."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise DomainError("damage must be non-negative")
    return np.exp(-d)


def physiological_potential(d, g_spec: PhysiologicalPotential):
    return g_spec(d)


def healing_parameter(s: InternalState):
    lam = np.asarray(s.lam, dtype=float)
    return (1.0 - lam) * damage_function(s.d) + lam


def _nonlocal_energy(s, grad_phi, nl: NonlocalParams | None):
    if nl is None:
        return np.zeros(np.shape(s.d))
    d = np.asarray(s.d, dtype=float)
    phi = np.asarray(s.phi, dtype=float)
    if grad_phi is None:
        g2 = 0.0
    else:
        grad_phi = np.asarray(grad_phi, dtype=float)
        g2 = np.sum(grad_phi * grad_phi, axis=-1)
    return 0.5 * nl.c_d * g2 + 0.5 * nl.beta_d * (phi - nl.gamma_d * d) ** 2


def total_energy(F, s: InternalState, grad_phi, mats, hp: HealingParams, nonlocal_: NonlocalParams | None = None):
    """
    Mixture free energy per unit reference volume.

    The physiological potential is an externally controlled offset and is
    evaluated at the current damage; it is not differentiated with respect to d.
    """
    p1, p2 = mats
    lam = np.asarray(s.lam, dtype=float)
    Jg1 = np.asarray(s.Jg1, dtype=float)
    Jg2 = np.asarray(s.Jg2, dtype=float)
    psi1 = elastic_energy(elastic_part(F, Jg1), p1)
    psi2 = elastic_energy(elastic_part(F, Jg2), p2)
    own = damage_function(s.d) * psi1 + _nonlocal_energy(s, grad_phi, nonlocal_) + hp.g(s.d)
    return (1.0 - lam) * Jg1 * own + lam * Jg2 * psi2


def driving_forces(F, s: InternalState, mats, hp: HealingParams, nonlocal_: NonlocalParams | None = None,
                   grad_phi=None) -> DrivingForces:
    """
    Forces conjugate to growth, remodeling and damage.

    Growth and damage forces are per unit volume of grown original tissue
    (the (1 - lambda) J_g1 prefactor shared with the dissipation cancels);
    the remodeling force is the plain negative derivative with respect to
    lambda. The nonlocal energy enters every force it depends on.
    """
    p1, p2 = mats
    F = np.asarray(F, dtype=float)
    Jg1 = np.asarray(s.Jg1, dtype=float)
    Jg2 = np.asarray(s.Jg2, dtype=float)
    Fe1 = elastic_part(F, Jg1)
    Fe2 = elastic_part(F, Jg2)
    f = damage_function(s.d)
    psi1 = elastic_energy(Fe1, p1)
    psi2 = elastic_energy(Fe2, p2)
    g = hp.g(s.d)
    nl = _nonlocal_energy(s, grad_phi, nonlocal_)

    own1 = f * psi1 + nl + g
    q_g1 = -own1[..., None, None] * I3 + f[..., None, None] * mandel_stress(Fe1, p1)
    q_g2 = -psi2[..., None, None] * I3 + mandel_stress(Fe2, p2)
    q_rm = Jg1 * own1 - Jg2 * psi2
    q_d = f * psi1
    if nonlocal_ is not None:
        q_d = q_d + nonlocal_.beta_d * nonlocal_.gamma_d * (np.asarray(s.phi) - nonlocal_.gamma_d * np.asarray(s.d))
    return DrivingForces(q_g1, q_g2, q_rm, q_d)


def growth_drive(q_g):
    """
    Spherical part q_s = tr(q)/3 of a growth force and its norm sqrt(3)|q_s|.

    Growth is restricted to spherical F_g, so only the spherical part of the
    force does work on admissible growth rates.
    """
    qs = trace(q_g) / 3.0
    return qs, SQRT3 * np.abs(qs)


def capture_growth_limit(F, s: InternalState, mats, hp: HealingParams, nonlocal_=None, grad_phi=None):
    """Growth limits (r_g1, r_g2) equal to the current growth-force norms."""
    q = driving_forces(F, s, mats, hp, nonlocal_, grad_phi)
    return growth_drive(q.q_g1)[1], growth_drive(q.q_g2)[1]


VANISHED_WEIGHT = 1e-6


def _rates(q: DrivingForces, s: InternalState, hp: HealingParams, mats):
    p1, p2 = mats
    mu1 = p1.mu if hp.rate_modulus is None else hp.rate_modulus
    mu2 = p2.mu if hp.rate_modulus is None else hp.rate_modulus
    qs1, n1 = growth_drive(q.q_g1)
    qs2, n2 = growth_drive(q.q_g2)
    with np.errstate(invalid="ignore"):
        ex1 = np.where(np.isfinite(hp.r_g1), n1 - hp.r_g1, -np.inf)
        ex2 = np.where(np.isfinite(hp.r_g2), n2 - hp.r_g2, -np.inf)
    # d ln J_g / dt = tr L_g
    r1 = SQRT3 * hp.M_g1 * np.maximum(ex1, 0.0) * np.sign(qs1) / mu1
    r2 = SQRT3 * hp.M_g2 * np.maximum(ex2, 0.0) * np.sign(qs2) / mu2

    lam = np.asarray(s.lam, dtype=float)
    # the original constituent has effectively vanished; its per-unit forces
    # no longer act on anything, so its growth is frozen
    r1 = np.where((1.0 - lam) * damage_function(s.d) < VANISHED_WEIGHT, 0.0, r1)
    drive = np.maximum(np.abs(q.q_rm) - hp.r_rm, 0.0) * np.sign(q.q_rm)
    rl = hp.M_rm * drive * np.maximum(hp.eta - lam, 0.0) / mu1
    # volume fraction cannot drop below zero
    rl = np.where((lam <= 0.0) & (rl < 0.0), 0.0, rl)

    rd = hp.M_d * np.maximum(q.q_d - hp.r_d, 0.0) / mu1
    return (r1, r2, rl, rd), (ex1, ex2, np.asarray(q.q_d) - hp.r_d)


def dissipation_increment(s_old: InternalState, s_new: InternalState, forces: DrivingForces, dt=None):
    """
    Dissipated energy density sum(q . dz) over one update.

    Growth uses the contraction q_g : L_g dt with L_g spherical. The growth and
    damage terms carry the (1 - lambda) J_g1 and lambda J_g2 weights of the
    free energy.
    """
    lam = np.asarray(s_old.lam, dtype=float)
    Jg1 = np.asarray(s_old.Jg1, dtype=float)
    Jg2 = np.asarray(s_old.Jg2, dtype=float)
    dl1 = np.log(np.asarray(s_new.Jg1) / Jg1)
    dl2 = np.log(np.asarray(s_new.Jg2) / Jg2)
    out = (1.0 - lam) * Jg1 * trace(forces.q_g1) / 3.0 * dl1
    out = out + lam * Jg2 * trace(forces.q_g2) / 3.0 * dl2
    out = out + np.asarray(forces.q_rm) * (np.asarray(s_new.lam) - lam)
    out = out + (1.0 - lam) * Jg1 * np.asarray(forces.q_d) * (np.asarray(s_new.d) - np.asarray(s_old.d))
    return out


@dataclass
class EvolveReport:
    max_halvings: int = 0
    clamps: int = 0
    dissipation: np.ndarray | float = 0.0


MAX_LOG_GROWTH = 0.2
MAX_DAMAGE_STEP = 0.5


def _euler(s, F, hp, mats, h, nonlocal_, grad_phi):
    q = driving_forces(F, s, mats, hp, nonlocal_, grad_phi)
    (r1, r2, rl, rd), excess = _rates(q, s, hp, mats)
    lam = np.asarray(s.lam, dtype=float)
    lam_new = lam + h * rl
    cap = np.maximum(hp.eta, lam)
    clamped = lam_new > cap * (1.0 + 1e-14)
    lam_new = np.clip(lam_new, 0.0, cap)
    # bound single substeps so a runaway rate cannot overflow; limited points
    # are flagged and retried with smaller steps
    g1, g2, dd = h * r1, h * r2, h * rd
    limited = (np.abs(g1) > MAX_LOG_GROWTH) | (np.abs(g2) > MAX_LOG_GROWTH) | (dd > MAX_DAMAGE_STEP)
    new = InternalState(
        Jg1=np.asarray(s.Jg1) * np.exp(np.clip(g1, -MAX_LOG_GROWTH, MAX_LOG_GROWTH)),
        Jg2=np.asarray(s.Jg2) * np.exp(np.clip(g2, -MAX_LOG_GROWTH, MAX_LOG_GROWTH)),
        lam=lam_new,
        d=np.asarray(s.d) + np.minimum(dd, MAX_DAMAGE_STEP),
        phi=np.array(s.phi, dtype=float, copy=True),
    )
    return new, q, excess, clamped, limited


OVERSHOOT_RATIO = 0.5


def _directed_excess(q_before, q_after, hp):
    """
    Yield excesses after a step, measured along the flow direction before it.

    A growth step that carries the spherical force through the elastic band
    to the opposite side of the yield surface then shows up as a negative
    excess instead of a fresh positive one.
    """
    out = []
    for qb, qa, r in ((q_before.q_g1, q_after.q_g1, hp.r_g1), (q_before.q_g2, q_after.q_g2, hp.r_g2)):
        sb = np.sign(trace(qb))
        with np.errstate(invalid="ignore"):
            out.append(np.where(np.isfinite(r), SQRT3 * sb * trace(qa) / 3.0 - r, -np.inf))
    out.append(np.asarray(q_after.q_d) - hp.r_d)
    return tuple(out)


OVERSHOOT_SLACK = 0.05
OVERSHOOT_ATOL = 1e-3


def _overshoot(before, after, initial, thresholds):
    """
    Points whose yield excess changed sign by more than half its previous size
    (an undamped step). Overshoots below 5% of the excess at the start of the
    whole step, or below 1e-3 of the threshold itself, are tolerated so that
    points already relaxed onto the yield surface do not force further halving.
    """
    flag = np.zeros(np.shape(before[0]), dtype=bool)
    for b, a, b0, r in zip(before, after, initial, thresholds):
        with np.errstate(invalid="ignore"):
            slack = OVERSHOOT_SLACK * np.where(np.isfinite(b0), np.maximum(b0, 0.0), 0.0)
            slack = slack + OVERSHOOT_ATOL * np.where(np.isfinite(r), np.abs(r), 0.0)
            flag |= (b > 0.0) & np.isfinite(b) & (a < -OVERSHOOT_RATIO * b - slack)
    return flag


def evolve_with_report(s: InternalState, F, hp: HealingParams, mats, dt, nonlocal_=None, grad_phi=None,
                       max_halvings=10):
    """
    Explicit update of all internal variables over dt with frozen F and phi.

    Points whose step overshoots a yield surface or hits the lambda <= eta cap
    are recomputed with the step halved, up to ``max_halvings`` times.
    """
    if not dt > 0:
        raise DomainError("time step must be positive")
    F = np.asarray(F, dtype=float)
    if F.ndim == 2:
        one = InternalState(*(np.reshape(getattr(s, f.name), (1,)) for f in fields(InternalState)))
        hp1 = replace(hp, r_g1=np.reshape(hp.r_g1, (1,)), r_g2=np.reshape(hp.r_g2, (1,)))
        gp1 = None if grad_phi is None else np.reshape(grad_phi, (1, 2))
        res, rep = evolve_with_report(one, F[None], hp1, mats, dt, nonlocal_, gp1, max_halvings)
        rep.dissipation = float(rep.dissipation[0])
        return InternalState(*(float(getattr(res, f.name)[0]) for f in fields(InternalState))), rep
    shape = np.shape(F)[:-2]
    s = InternalState(*(np.broadcast_to(np.asarray(getattr(s, f.name), dtype=float), shape).copy()
                        for f in fields(InternalState)))
    hp_b = replace(hp, r_g1=np.broadcast_to(np.asarray(hp.r_g1, dtype=float), shape),
                   r_g2=np.broadcast_to(np.asarray(hp.r_g2, dtype=float), shape))
    gp = None if grad_phi is None else np.broadcast_to(np.asarray(grad_phi, dtype=float), shape + (2,))

    out = s.copy()
    diss = np.zeros(shape)
    pending = np.ones(shape, dtype=bool)
    report = EvolveReport()
    for level in range(max_halvings + 1):
        idx = np.nonzero(pending)
        if len(idx[0]) == 0:
            break
        report.max_halvings = level
        sub = s.take(idx)
        sub_hp = replace(hp_b, r_g1=hp_b.r_g1[idx], r_g2=hp_b.r_g2[idx])
        Fi = F[idx]
        gpi = None if gp is None else gp[idx]
        n = 2 ** level
        h = dt / n
        bad = np.zeros(len(idx[0]), dtype=bool)
        nclamp = np.zeros(len(idx[0]), dtype=int)
        dsub = np.zeros(len(idx[0]))
        initial = None
        for _ in range(n):
            new, q, excess, clamped, limited = _euler(sub, Fi, sub_hp, mats, h, nonlocal_, gpi)
            initial = excess if initial is None else initial
            dsub += dissipation_increment(sub, new, q)
            q_after = driving_forces(Fi, new, mats, sub_hp, nonlocal_, gpi)
            bad |= _overshoot(excess, _directed_excess(q, q_after, sub_hp), initial,
                              (sub_hp.r_g1, sub_hp.r_g2, sub_hp.r_d)) | clamped | limited
            nclamp += clamped
            sub = new
        last = level == max_halvings
        ok = ~bad | last
        sel = tuple(i[ok] for i in idx)
        out.put(sel, sub.take(ok))
        diss[sel] = dsub[ok]
        if last:
            report.clamps += int(nclamp[bad].sum())
        pending[sel] = False
    report.dissipation = diss
    out.check()
    return out, report


def evolve(s: InternalState, F, hp: HealingParams, mats, dt, nonlocal_=None, grad_phi=None) -> InternalState:
    return evolve_with_report(s, F, hp, mats, dt, nonlocal_, grad_phi)[0]
