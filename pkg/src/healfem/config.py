"""
Run configuration: strict TOML schema, defaults and provenance echo.

A configuration names a built-in scenario and overrides any of its
parameters. Unknown keys are rejected with the nearest valid key, and every
resolved value is echoed with its origin: a parameter table, a documented
default of this package, or the user.

Example::

    [scenario]
    kind = "uniaxial"
    variant = "growth"

    [remodeling]
    M_rm = 0.05

    [output]
    snapshot_times = [100.0, 500.0]
"""

import difflib
from dataclasses import dataclass, field, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .fem.solver import SolveControls
from .healing import HealingParams, NonlocalParams, PhysiologicalPotential
from .kinematics import DomainError
from .material import NeoHookeanParams
from .scenarios import KINDS, MESH_LEVELS, ScenarioSpec, default_spec


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key or line."""


def _num(lo=None, hi=None, lo_open=False, integer=False):
    def check(key, v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {v!r}")
        if integer and int(v) != v:
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
        if lo is not None and (v < lo or (lo_open and v == lo)):
            raise ConfigError(f"{key}: value {v} out of range (must be {'>' if lo_open else '>='} {lo})")
        if hi is not None and v > hi:
            raise ConfigError(f"{key}: value {v} out of range (must be <= {hi})")
        return int(v) if integer else float(v)
    return check


def _choice(options):
    def check(key, v):
        if v not in options:
            raise ConfigError(f"{key}: {v!r} is not one of {sorted(options)}")
        return v
    return check


def _boolean(key, v):
    if not isinstance(v, bool):
        raise ConfigError(f"{key}: expected true or false, got {v!r}")
    return v


def _string(key, v):
    if not isinstance(v, str):
        raise ConfigError(f"{key}: expected a string, got {v!r}")
    return v


def _times(key, v):
    if not isinstance(v, list):
        raise ConfigError(f"{key}: expected an array of times")
    out = [_num(0.0)(key, t) for t in v]
    return sorted(out)


def _optional_num(lo=None, lo_open=False):
    inner = _num(lo, lo_open=lo_open)

    def check(key, v):
        if v == "none":
            return None
        return inner(key, v)
    return check


POS = _num(0.0, lo_open=True)
NONNEG = _num(0.0)

SCHEMA = {
    "scenario": {"kind": _choice(KINDS), "variant": _choice(("growth", "remodeling", "combined")),
                 "mesh_level": _choice(tuple(MESH_LEVELS)), "inflation_radius": _num(1.0, 1.6, lo_open=True)},
    "loading": {"ramp_target": _num(), "ramp_duration": POS, "gr_start": NONNEG},
    "capture": {"time": _optional_num(0.0), "lumen_radius": _optional_num(1.0)},
    "growth": {"M_g1": NONNEG, "M_g2": NONNEG},
    "remodeling": {"M_rm": NONNEG, "r_rm": NONNEG, "eta": _num(0.0, 1.0)},
    "damage": {"r_d": NONNEG, "M_d": NONNEG, "c_d": NONNEG, "beta_d": NONNEG, "gamma_d": NONNEG},
    "physiological": {"mode": _choice(("constant", "saturating")), "value": NONNEG},
    "kinetics": {"rate_modulus": _optional_num(0.0, lo_open=True)},
    "materials": {"mu1": POS, "kappa1": POS, "mu2": POS, "kappa2": POS},
    "solver": {"dt": POS, "duration": POS, "tol": POS, "max_iter": _num(1, integer=True),
               "line_search": _boolean, "max_cutbacks": _num(0, integer=True),
               "max_halvings": _num(0, integer=True)},
    "output": {"dir": _string, "snapshot_times": _times},
    "seed": _num(0, integer=True),
}


@dataclass
class RunConfig:
    spec: ScenarioSpec
    controls: SolveControls
    out_dir: str = "results"
    snapshot_times: list = field(default_factory=list)
    seed: int = 0
    provenance: dict = field(default_factory=dict)     # dotted key -> (value, source)


def _suggest(key, options):
    near = difflib.get_close_matches(key, options, n=1, cutoff=0.5)
    if not near:
        near = difflib.get_close_matches(key.lower(), [o.lower() for o in options], n=1, cutoff=0.5)
        near = [o for o in options if o.lower() in near]
    return f" (did you mean {near[0]!r}?)" if near else ""


def _flatten(data, regions):
    """Dotted keys of a parsed document; unknown sections or keys raise ConfigError."""
    flat = {}
    for sec, body in data.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown key {sec!r}{_suggest(sec, list(SCHEMA))}")
        if callable(SCHEMA[sec]):
            flat[sec] = SCHEMA[sec](sec, body)
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"{sec!r} must be a table")
        if sec == "materials":
            for region, vals in body.items():
                if region not in regions:
                    raise ConfigError(f"unknown key 'materials.{region}'{_suggest(region, list(regions))}")
                if not isinstance(vals, dict):
                    raise ConfigError(f"'materials.{region}' must be a table")
                for k, v in vals.items():
                    if k not in SCHEMA[sec]:
                        raise ConfigError(f"unknown key 'materials.{region}.{k}'{_suggest(k, list(SCHEMA[sec]))}")
                    flat[f"materials.{region}.{k}"] = SCHEMA[sec][k](f"materials.{region}.{k}", v)
            continue
        for k, v in body.items():
            if k not in SCHEMA[sec]:
                raise ConfigError(f"unknown key '{sec}.{k}'{_suggest(k, list(SCHEMA[sec]))}")
            flat[f"{sec}.{k}"] = SCHEMA[sec][k](f"{sec}.{k}", v)
    return flat


def _regions(kind):
    return ("artery", "plaque", "lipid") if kind == "angioplasty" else ("tissue",)


def parse_config(text, overrides=None, scenario=None):
    """
    Validate a TOML document and resolve it into a RunConfig.

    Parameters
    ----------
    text : str
        TOML source. May be empty when ``scenario`` is given.
    overrides : dict, optional
        Extra dotted-key values (from command-line flags or sweep grids),
        applied after the file and validated by the same schema.
    scenario : str, optional
        Scenario kind used when the file does not set ``scenario.kind``.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from exc
    kind = data.get("scenario", {}).get("kind", scenario) if isinstance(data.get("scenario", {}), dict) else scenario
    if kind is None:
        raise ConfigError("scenario.kind is required (one of " + ", ".join(KINDS) + ")")
    if kind not in KINDS:
        raise ConfigError(f"scenario.kind: {kind!r} is not one of {sorted(KINDS)}")
    regions = _regions(kind)
    flat = _flatten(data, regions)
    for k, v in (overrides or {}).items():
        flat.update(_flatten(_nest(k, v), regions))
    flat["scenario.kind"] = kind
    return _resolve(flat)


def _nest(key, value):
    parts = key.split(".")
    out = cur = {}
    for p in parts[:-1]:
        cur[p] = {}
        cur = cur[p]
    cur[parts[-1]] = value
    return out


def _resolve(flat):
    kind = flat["scenario.kind"]
    variant = flat.get("scenario.variant", "growth")
    if kind != "uniaxial" and "scenario.variant" in flat:
        raise ConfigError("scenario.variant applies to the uniaxial scenario only")
    if kind != "open_hole" and "scenario.mesh_level" in flat:
        raise ConfigError("scenario.mesh_level applies to the open_hole scenario only")
    if kind != "angioplasty" and ("scenario.inflation_radius" in flat or "capture.lumen_radius" in flat):
        raise ConfigError("inflation and lumen-radius capture apply to the angioplasty scenario only")
    spec, sources = default_spec(kind, variant if kind == "uniaxial" else "growth")
    ctl = SolveControls(dt=spec.dt, duration=spec.duration)

    hp = spec.healing
    nl = spec.nonlocal_
    g = hp.g
    mats = {r: list(m) for r, m in spec.materials.items()}
    upd = {}
    for key, v in flat.items():
        sec, _, name = key.partition(".")
        if sec == "scenario" and name != "kind":
            upd[name] = v
        elif sec == "loading":
            upd[name] = v
        elif sec == "capture":
            upd["capture_time" if name == "time" else "capture_lumen_radius"] = v
        elif sec in ("growth", "remodeling") or (sec == "damage" and name in ("r_d", "M_d")):
            hp = replace(hp, **{name: v})
        elif sec == "damage":
            nl = replace(nl, **{name: v})
        elif sec == "physiological":
            g = replace(g, **{name: v})
        elif sec == "kinetics":
            hp = replace(hp, rate_modulus=v)
        elif sec == "materials":
            region, _, prop = name.partition(".")
            slot = 0 if prop.endswith("1") else 1
            attr = "mu" if prop.startswith("mu") else "kappa"
            mats[region][slot] = replace(mats[region][slot], **{attr: v})
        elif sec == "solver":
            ctl = replace(ctl, **{name: v})
    try:
        g = PhysiologicalPotential(g.mode, g.value)
        hp = HealingParams(**{**hp.__dict__, "g": g})
        spec = replace(spec, healing=hp, nonlocal_=NonlocalParams(nl.c_d, nl.beta_d, nl.gamma_d),
                       materials={r: (NeoHookeanParams(m[0].mu, m[0].kappa), NeoHookeanParams(m[1].mu, m[1].kappa))
                                  for r, m in mats.items()},
                       dt=ctl.dt, duration=ctl.duration, **upd)
        spec.validate()
        ctl = SolveControls(**ctl.__dict__)
    except (DomainError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if spec.resolved_capture_time() is not None and spec.resolved_capture_time() > spec.duration:
        raise ConfigError("capture instant lies after the end of the run")

    snaps = flat.get("output.snapshot_times", [])
    cfg = RunConfig(spec, ctl, flat.get("output.dir", "results"), snaps, flat.get("seed", 0))
    cfg.provenance = effective_values(cfg, sources, set(flat))
    return cfg


def effective_values(cfg: RunConfig, sources, user_keys):
    """Every resolved config value with its source: a table label, 'default' or 'user'."""
    s = cfg.spec
    hp = s.healing
    vals = {
        "scenario.kind": s.kind,
        "loading.ramp_target": s.ramp_target,
        "loading.ramp_duration": s.ramp_duration,
        "loading.gr_start": s.gr_start,
        "growth.M_g1": hp.M_g1, "growth.M_g2": hp.M_g2,
        "remodeling.M_rm": hp.M_rm, "remodeling.r_rm": hp.r_rm, "remodeling.eta": hp.eta,
        "damage.r_d": hp.r_d, "damage.M_d": hp.M_d,
        "damage.c_d": s.nonlocal_.c_d, "damage.beta_d": s.nonlocal_.beta_d, "damage.gamma_d": s.nonlocal_.gamma_d,
        "physiological.mode": hp.g.mode, "physiological.value": hp.g.value,
        "kinetics.rate_modulus": "none" if hp.rate_modulus is None else hp.rate_modulus,
    }
    if s.kind == "uniaxial":
        vals["scenario.variant"] = s.variant
    if s.kind == "open_hole":
        vals["scenario.mesh_level"] = s.mesh_level
    if s.kind == "angioplasty":
        vals["scenario.inflation_radius"] = s.inflation_radius
        vals["capture.lumen_radius"] = "none" if s.capture_lumen_radius is None else s.capture_lumen_radius
    vals["capture.time"] = "none" if s.capture_time is None else s.capture_time
    for r, (m1, m2) in s.materials.items():
        vals.update({f"materials.{r}.mu1": m1.mu, f"materials.{r}.kappa1": m1.kappa,
                     f"materials.{r}.mu2": m2.mu, f"materials.{r}.kappa2": m2.kappa})
    c = cfg.controls
    vals.update({"solver.dt": c.dt, "solver.duration": c.duration, "solver.tol": c.tol,
                 "solver.max_iter": c.max_iter, "solver.line_search": c.line_search,
                 "solver.max_cutbacks": c.max_cutbacks, "solver.max_halvings": c.max_halvings,
                 "output.dir": cfg.out_dir, "output.snapshot_times": list(cfg.snapshot_times), "seed": cfg.seed})
    out = {}
    for k, v in vals.items():
        src = "user" if k in user_keys else sources.get(k, "default")
        out[k] = (v, src)
    return out


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def render_effective(cfg: RunConfig):
    """TOML text of the resolved configuration; each line ends with a provenance comment."""
    lines = ["# effective configuration; source after each value", ""]
    top = []
    sections = {}
    for key, (v, src) in cfg.provenance.items():
        if "." not in key:
            top.append(f"{key} = {_toml_value(v)}  # {src}")
            continue
        sec, _, name = key.rpartition(".")
        sections.setdefault(sec, []).append(f"{name} = {_toml_value(v)}  # {src}")
    lines += top
    for sec, body in sections.items():
        lines += ["", f"[{sec}]"] + body
    return "\n".join(lines) + "\n"
