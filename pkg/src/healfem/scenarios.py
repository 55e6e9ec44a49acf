"""
Built-in example problems: a single-element uniaxial test, a quarter open-hole
plate and a half cross-section of an atherosclerotic artery under balloon
inflation.

Each builder returns the mesh together with a ScenarioSpec holding material
and evolution parameters, the loading schedule and the growth-limit capture
rule. ``default_spec`` also reports where each default value comes from.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fem.assembly import RegionModel
from .fem.march import BoundaryCondition, CaptureRule, Simulation
from .fem.mesh import Mesh
from .fem.solver import SolveControls
from .healing import HealingParams, NonlocalParams, PhysiologicalPotential
from .kinematics import DomainError
from .material import NeoHookeanParams

log = logging.getLogger(__name__)

KINDS = ("uniaxial", "open_hole", "angioplasty")
UNIAXIAL_VARIANTS = ("growth", "remodeling", "combined")
MESH_LEVELS = {"coarse": (8, 10), "medium": (16, 18), "fine": (26, 30)}

HOLE_RADIUS = 25.0
PLATE_SIZE = 100.0
LUMEN_CENTER = np.array([0.0, -0.5])
LUMEN_RADIUS = 1.0
ARTERY_INNER = 1.8
ARTERY_OUTER = 2.0
LIPID_INNER = 1.25
LIPID_OUTER = 1.75
LIPID_HALF_ANGLE = 70.0


@dataclass
class ScenarioSpec:
    kind: str
    variant: str = "growth"
    mesh_level: str = "coarse"
    inflation_radius: float = 1.4
    ramp_target: float = 5.5              # mm edge displacement (uniaxial, open hole)
    ramp_duration: float = 100.0          # days
    gr_start: float = 100.0               # days
    capture_time: float | None = 10.0     # days
    capture_lumen_radius: float | None = None
    materials: dict = field(default_factory=dict)     # region -> (material 1, material 2)
    healing: HealingParams = field(default_factory=HealingParams)
    nonlocal_: NonlocalParams = field(default_factory=NonlocalParams)
    dt: float = 0.5
    duration: float = 1000.0

    def validate(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "uniaxial" and self.variant not in UNIAXIAL_VARIANTS:
            raise DomainError(f"unknown uniaxial variant {self.variant!r}")
        if self.kind == "open_hole" and self.mesh_level not in MESH_LEVELS:
            raise DomainError(f"mesh_level must be one of {sorted(MESH_LEVELS)}")
        if self.kind == "angioplasty":
            if not 1.0 < self.inflation_radius < 1.6:
                raise DomainError("inflation radius must lie in (1.0, 1.6) mm")
            if self.capture_lumen_radius is not None and not 1.0 <= self.capture_lumen_radius <= self.inflation_radius:
                raise DomainError("capture lumen radius must lie between 1.0 mm and the inflation radius")
        for name in ("ramp_duration", "dt", "duration"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.gr_start < 0:
            raise DomainError("gr_start must be non-negative")
        return self

    def controls(self, **kw):
        return SolveControls(dt=self.dt, duration=self.duration, **kw)

    def resolved_capture_time(self):
        """Capture instant in days; a lumen-radius rule is mapped through the linear ramp."""
        if self.kind == "angioplasty" and self.capture_lumen_radius is not None:
            frac = (self.capture_lumen_radius - LUMEN_RADIUS) / (self.inflation_radius - LUMEN_RADIUS)
            return frac * self.ramp_duration
        return self.capture_time

    def region_models(self, names):
        out = []
        for name in names:
            m1, m2 = self.materials[name]
            out.append(RegionModel(name, m1, m2, self.healing, self.nonlocal_))
        return out


def default_spec(kind, variant="growth"):
    """
    Default parameters of a built-in scenario and their provenance.

    Returns
    -------
    spec : ScenarioSpec
    sources : dict
        Config key -> "Table 1|2|3" for values taken from the published
        parameter tables, "default" for values chosen here.
    """
    if kind == "uniaxial":
        if variant not in UNIAXIAL_VARIANTS:
            raise DomainError(f"unknown uniaxial variant {variant!r}")
        tab = "Table 1"
        mat = NeoHookeanParams(1.0, 1.0)
        grow = variant in ("growth", "combined")
        remodel = variant in ("remodeling", "combined")
        g = PhysiologicalPotential("saturating", 2.0) if remodel else PhysiologicalPotential("constant", 0.001)
        hp = HealingParams(M_g1=0.01 if grow else 0.0, M_g2=0.01 if grow else 0.0,
                           M_rm=0.01 if remodel else 0.0, eta=1.0, M_d=10.0, r_d=0.2, g=g)
        spec = ScenarioSpec("uniaxial", variant=variant, ramp_target=5.5, capture_time=10.0,
                            materials={"tissue": (mat, mat)}, healing=hp,
                            nonlocal_=NonlocalParams(1.0, 0.001, 1.0), dt=1.0,
                            duration=1000.0 if not remodel else 2000.0)
        sources = {k: tab for k in ("materials.tissue.mu1", "materials.tissue.mu2", "materials.tissue.kappa1",
                                    "materials.tissue.kappa2", "damage.r_d", "damage.c_d", "damage.beta_d",
                                    "damage.gamma_d", "growth.M_g1", "growth.M_g2", "remodeling.M_rm",
                                    "remodeling.eta", "loading.ramp_duration", "loading.gr_start")}
        if not grow:
            sources["growth.M_g1"] = sources["growth.M_g2"] = "default"
        if not remodel:
            sources["remodeling.M_rm"] = "default"
        sources["physiological.mode"] = "default" if remodel else tab
        sources["physiological.value"] = "default" if remodel else tab
    elif kind == "open_hole":
        tab = "Table 2"
        mat = NeoHookeanParams(1.0, 40.0)
        hp = HealingParams(M_g1=0.03, M_g2=0.03, M_rm=0.1, eta=0.0, M_d=10.0, r_d=0.01,
                           g=PhysiologicalPotential("constant", 0.001))
        spec = ScenarioSpec("open_hole", variant="", mesh_level="coarse", ramp_target=5.0, capture_time=50.0,
                            materials={"tissue": (mat, mat)}, healing=hp,
                            nonlocal_=NonlocalParams(1.0, 1.0, 1.0), dt=2.0, duration=1000.0)
        sources = {k: tab for k in ("materials.tissue.mu1", "materials.tissue.mu2", "materials.tissue.kappa1",
                                    "materials.tissue.kappa2", "damage.r_d", "damage.c_d", "damage.beta_d",
                                    "damage.gamma_d", "growth.M_g1", "growth.M_g2", "remodeling.M_rm",
                                    "remodeling.eta", "capture.time")}
        sources["physiological.mode"] = sources["physiological.value"] = "Table 1"
    elif kind == "angioplasty":
        tab = "Table 3"
        artery = NeoHookeanParams(15.0, 4.0)
        plaque = NeoHookeanParams(78.9, 23.7)
        lipid = NeoHookeanParams(0.1, 0.5)
        # rates scaled by the plaque modulus, so the soft lipid evolves slowly
        hp = HealingParams(M_g1=0.01, M_g2=0.01, M_rm=0.1, eta=1.0, M_d=10.0, r_d=5.0,
                           g=PhysiologicalPotential("saturating", 60.0), rate_modulus=78.9)
        spec = ScenarioSpec("angioplasty", variant="", inflation_radius=1.4, capture_time=None,
                            capture_lumen_radius=1.2, ramp_duration=100.0, gr_start=100.0,
                            materials={"artery": (artery, artery), "plaque": (plaque, plaque), "lipid": (lipid, lipid)},
                            healing=hp, nonlocal_=NonlocalParams(1.0, 20.0, 1.0), dt=1.0, duration=500.0)
        sources = {f"materials.{r}.{k}": tab for r in ("artery", "plaque", "lipid")
                   for k in ("mu1", "mu2", "kappa1", "kappa2")}
        sources.update({k: tab for k in ("damage.r_d", "damage.c_d", "damage.beta_d", "damage.gamma_d",
                                         "growth.M_g1", "growth.M_g2", "remodeling.M_rm", "remodeling.eta",
                                         "scenario.inflation_radius", "capture.lumen_radius")})
    else:
        raise DomainError(f"unknown scenario kind {kind!r}")
    return spec, sources


# ----------------------------------------------------------------- meshes
def _grid_mesh(points, n_ang, n_rad):
    """Quadrilaterals of a structured (n_ang + 1) x (n_rad + 1) point grid, angle-major."""
    idx = np.arange((n_ang + 1) * (n_rad + 1)).reshape(n_ang + 1, n_rad + 1)
    a, r = np.meshgrid(np.arange(n_ang), np.arange(n_rad), indexing="ij")
    els = np.stack([idx[a, r], idx[a, r + 1], idx[a + 1, r + 1], idx[a + 1, r]], axis=-1).reshape(-1, 4)
    return points.reshape(-1, 2), els, idx


def _orient_ccw(nodes, els):
    X = nodes[els]
    area = 0.5 * np.sum(X[:, :, 0] * np.roll(X[:, :, 1], -1, axis=1) - np.roll(X[:, :, 0], -1, axis=1) * X[:, :, 1], axis=1)
    els = els.copy()
    els[area < 0] = els[area < 0][:, ::-1]
    return els


def uniaxial_mesh(size=10.0):
    nodes = np.array([[0.0, 0.0], [size, 0.0], [size, size], [0.0, size]])
    sets = {"left": [0, 3], "bottom": [0, 1], "right": [1, 2], "top": [2, 3]}
    return Mesh(nodes, [[0, 1, 2, 3]], node_sets=sets)


def open_hole_mesh(level="coarse"):
    """
    Quarter plate with a centered hole, meshed by rays from the hole arc to the
    plate edges with radial grading toward the hole.
    """
    if level not in MESH_LEVELS:
        raise DomainError(f"mesh_level must be one of {sorted(MESH_LEVELS)}")
    n_ang, n_rad = MESH_LEVELS[level]
    L = PLATE_SIZE
    half = n_ang // 2
    theta = np.linspace(0.0, 0.5 * np.pi, n_ang + 1)
    inner = HOLE_RADIUS * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    k = np.arange(n_ang + 1)
    outer = np.where((k <= half)[:, None],
                     np.stack([np.full(n_ang + 1, L), L * k / half], axis=-1),
                     np.stack([L * (n_ang - k) / (n_ang - half), np.full(n_ang + 1, L)], axis=-1))
    a = 2.0
    t = np.linspace(0.0, 1.0, n_rad + 1)
    rho = np.expm1(a * t) / np.expm1(a)
    pts = inner[:, None, :] + rho[None, :, None] * (outer - inner)[:, None, :]
    nodes, els, idx = _grid_mesh(pts, n_ang, n_rad)
    els = _orient_ccw(nodes, els)
    sets = {
        "bottom": idx[0, :],
        "left": idx[n_ang, :],
        "right": idx[: half + 1, n_rad],
        "top": idx[half:, n_rad],
        "hole": idx[:, 0],
        "node_A": [idx[n_ang, 0]],
        "corner": [idx[half, n_rad]],
    }
    return Mesh(nodes, els, node_sets=sets)


def _ray_to_circle(alpha, radius):
    """Distance from the lumen center along direction alpha to the artery circle of given radius."""
    e = np.stack([np.sin(alpha), np.cos(alpha)], axis=-1)
    ce = e @ LUMEN_CENTER
    return -ce + np.sqrt(ce ** 2 - LUMEN_CENTER @ LUMEN_CENTER + radius ** 2)


def angioplasty_mesh(n_ang=36, layers=(2, 3, 3, 2)):
    """
    Half cross-section (x >= 0) of an artery with an eccentric lumen.

    Lumen-centered polar grid: angle alpha from +y toward +x in [0, 180] deg.
    Radial layers: fibrous cap, lipid band, plaque, artery wall. Beyond the
    lipid half-angle the cap/lipid/plaque layers keep the thickness fractions
    they have at the crescent edge and all belong to the plaque.
    """
    alpha = np.linspace(0.0, np.pi, n_ang + 1)
    s_in = _ray_to_circle(alpha, ARTERY_INNER)
    s_out = _ray_to_circle(alpha, ARTERY_OUTER)
    edge = np.deg2rad(LIPID_HALF_ANGLE)
    s_edge = _ray_to_circle(np.array(edge), ARTERY_INNER)
    f1 = (LIPID_INNER - LUMEN_RADIUS) / (s_edge - LUMEN_RADIUS)
    f2 = (LIPID_OUTER - LUMEN_RADIUS) / (s_edge - LUMEN_RADIUS)
    inside = alpha <= edge + 1e-12
    b1 = np.where(inside, LIPID_INNER, LUMEN_RADIUS + f1 * (s_in - LUMEN_RADIUS))
    b2 = np.where(inside, LIPID_OUTER, LUMEN_RADIUS + f2 * (s_in - LUMEN_RADIUS))
    bounds = [np.full_like(alpha, LUMEN_RADIUS), b1, b2, s_in, s_out]
    radial = []
    layer_of = []
    for j, n in enumerate(layers):
        for i in range(n):
            radial.append(bounds[j] + (bounds[j + 1] - bounds[j]) * i / n)
            layer_of.append(j)
    radial.append(s_out)
    s = np.stack(radial, axis=-1)                                     # (n_ang+1, n_rad+1)
    e = np.stack([np.sin(alpha), np.cos(alpha)], axis=-1)
    pts = LUMEN_CENTER + s[..., None] * e[:, None, :]
    n_rad = sum(layers)
    nodes, els, idx = _grid_mesh(pts, n_ang, n_rad)
    els = _orient_ccw(nodes, els)

    layer_of = np.array(layer_of)
    a_mid = 0.5 * (alpha[:-1] + alpha[1:])
    ea, er = np.meshgrid(np.arange(n_ang), np.arange(n_rad), indexing="ij")
    lay = layer_of[er].ravel()
    lipid = (lay == 1) & (a_mid[ea].ravel() < edge)
    region = np.where(lay == 3, 0, np.where(lipid, 2, 1))
    sym = np.concatenate([idx[0, 1:], idx[n_ang, 1:]])
    sets = {"lumen": idx[:, 0], "outer": idx[:, n_rad], "symmetry": sym}
    return Mesh(nodes, els, region=region, region_names=("artery", "plaque", "lipid"), node_sets=sets)


def analytic_region_areas():
    """Exact areas of the half cross-section regions (mm^2)."""
    lipid = (LIPID_HALF_ANGLE / 180.0) * 0.5 * math.pi * (LIPID_OUTER ** 2 - LIPID_INNER ** 2)
    artery = 0.5 * math.pi * (ARTERY_OUTER ** 2 - ARTERY_INNER ** 2)
    plaque = 0.5 * math.pi * (ARTERY_INNER ** 2 - LUMEN_RADIUS ** 2) - lipid
    return {"artery": artery, "plaque": plaque, "lipid": lipid}


def mirror_mesh(mesh: Mesh, axis=0):
    """
    Reflect a mesh across the plane x_axis = 0 and merge nodes lying on it.

    Returns the full mesh and, for every original node, its index in the
    full mesh and the index of its mirror image.
    """
    X = mesh.nodes
    on = np.abs(X[:, axis]) < 1e-12 * max(1.0, np.abs(X).max())
    n = mesh.n_nodes
    mirror_of = np.arange(n)
    off = np.nonzero(~on)[0]
    mirror_of[off] = n + np.arange(len(off))
    refl = X[off].copy()
    refl[:, axis] *= -1.0
    nodes = np.vstack([X, refl])
    els = np.vstack([mesh.elements, mirror_of[mesh.elements][:, ::-1]])
    region = np.concatenate([mesh.region, mesh.region])
    sets = {k: np.unique(np.concatenate([v, mirror_of[v]])) for k, v in mesh.node_sets.items()}
    return Mesh(nodes, els, region=region, region_names=mesh.region_names, node_sets=sets), np.arange(n), mirror_of


# --------------------------------------------------------------- loading
def ramp(target, duration):
    def value(t):
        return target * min(max(t / duration, 0.0), 1.0)
    return value


def polygon_area(xy):
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _argmin_location(sim):
    H = sim.healing_field()
    e, q = np.unravel_index(np.argmin(H), H.shape)
    return sim.mesh.quadrature_coordinates()[e, q]


def _uniaxial_setup(mesh, spec):
    s = mesh.node_sets
    bcs = [BoundaryCondition(s["left"], 0, lambda t: 0.0),
           BoundaryCondition(s["bottom"], 1, lambda t: 0.0),
           BoundaryCondition(s["right"], 0, ramp(spec.ramp_target, spec.ramp_duration))]
    corner = 2

    def probes(sim):
        u = sim.displacement
        length = 10.0 + u[corner, 1]
        return {"sigma_x": sim.reaction(s["right"], 0) / length, "u_x": u[corner, 0], "u_y": u[corner, 1]}
    return bcs, probes


def _open_hole_setup(mesh, spec):
    s = mesh.node_sets
    bcs = [BoundaryCondition(s["left"], 0, lambda t: 0.0),
           BoundaryCondition(s["bottom"], 1, lambda t: 0.0),
           BoundaryCondition(s["right"], 0, ramp(spec.ramp_target, spec.ramp_duration))]
    a = s["node_A"][0]
    c = s["corner"][0]

    def probes(sim):
        u = sim.displacement
        length = PLATE_SIZE + u[c, 1]
        x, y = _argmin_location(sim)
        return {"sigma_x": sim.reaction(s["right"], 0) / length, "uA_x": u[a, 0], "uA_y": u[a, 1],
                "H_min_x": x, "H_min_y": y}
    return bcs, probes


def _angioplasty_setup(mesh, spec):
    s = mesh.node_sets
    lumen = s["lumen"]
    sym = s["symmetry"]
    dirs = mesh.nodes[lumen] - LUMEN_CENTER
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radius = ramp(spec.inflation_radius - LUMEN_RADIUS, spec.ramp_duration)
    bcs = [BoundaryCondition(lumen, 0, lambda t: radius(t) * dirs[:, 0]),
           BoundaryCondition(lumen, 1, lambda t: radius(t) * dirs[:, 1]),
           BoundaryCondition(sym, 0, lambda t: 0.0)]
    outer = s["outer"]
    X0 = mesh.nodes[outer]
    R0 = math.sqrt(2.0 * polygon_area(X0) / math.pi)

    def probes(sim):
        u = sim.displacement
        R = math.sqrt(2.0 * polygon_area(X0 + u[outer]) / math.pi)
        f = sim.R.reshape(-1, 3)[lumen, :2]
        x, y = _argmin_location(sim)
        k = np.argmin(sim.healing_field().min(axis=1))
        return {"R": R, "R_normalized": R / R0, "lumen_force": float(np.sum(f * dirs)),
                "H_min_x": x, "H_min_y": y, "H_min_region": float(sim.mesh.region[k])}
    return bcs, probes


# --------------------------------------------------------------- builders
def build_uniaxial(variant="growth", **overrides):
    spec, _ = default_spec("uniaxial", variant)
    spec = replace(spec, **overrides).validate()
    return uniaxial_mesh(), spec


def build_open_hole(mesh_level="coarse", **overrides):
    spec, _ = default_spec("open_hole")
    spec = replace(spec, mesh_level=mesh_level, **overrides).validate()
    return open_hole_mesh(spec.mesh_level), spec


def build_angioplasty(inflation_radius=1.4, **overrides):
    spec, _ = default_spec("angioplasty")
    spec = replace(spec, inflation_radius=inflation_radius, **overrides).validate()
    return angioplasty_mesh(), spec


def build(spec: ScenarioSpec):
    """Mesh for an already assembled spec."""
    spec.validate()
    if spec.kind == "uniaxial":
        return uniaxial_mesh()
    if spec.kind == "open_hole":
        return open_hole_mesh(spec.mesh_level)
    return angioplasty_mesh()


_SETUPS = {"uniaxial": _uniaxial_setup, "open_hole": _open_hole_setup, "angioplasty": _angioplasty_setup}


def make_simulation(mesh, spec: ScenarioSpec, controls: SolveControls | None = None, snapshot_times=(),
                    on_snapshot=None):
    spec.validate()
    controls = controls or spec.controls()
    bcs, probes = _SETUPS[spec.kind](mesh, spec)
    t_cap = spec.resolved_capture_time()
    capture = None if t_cap is None else CaptureRule(t_cap)
    return Simulation(mesh, spec.region_models(mesh.region_names), bcs, controls, gr_start=spec.gr_start,
                      capture=capture, probes=probes, breakpoints=[spec.ramp_duration],
                      snapshot_times=snapshot_times, on_snapshot=on_snapshot)


@dataclass
class ScenarioResult:
    records: list
    simulation: Simulation

    def channel(self, name):
        return np.array([r[name] for r in self.records])


def run_scenario(spec: ScenarioSpec, controls: SolveControls | None = None, mesh: Mesh | None = None,
                 snapshot_times=(), on_snapshot=None):
    """Build, march to the end of the schedule and return the output records."""
    mesh = mesh if mesh is not None else build(spec)
    sim = make_simulation(mesh, spec, controls, snapshot_times, on_snapshot)
    log.info("running %s: %d elements, %d dofs, %d increments", spec.kind, mesh.n_elements,
             sim.asm.n_dofs, len(sim.times))
    sim.run()
    return ScenarioResult(sim.records, sim)
