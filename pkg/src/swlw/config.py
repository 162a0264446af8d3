"""Declarative run configuration (YAML).

One document configures every entry point.  Unknown keys are rejected,
types are checked and every physical constraint is re-validated at parse
time; all violations are reported together.

    seed: 0
    output: {dir: out, snapshot_format: binary, snapshots: true}
    params: {gamma: 2.0, epsilon: 0.1, alpha: 0.178, beta: 0.0316, delta: 0.0316, ...}
    coupling: {g_lo: 0.25, g_hi: 4.0, g_scale: 1.0, z_max: 4.0, h_scale: 1.0}
    solver: {n: 64, dt: 1.0e-4, t_end: 1.0, integrator: etd-rk4, ...}
    initial_data: {profile: smooth-periodic, rho_amplitude: 0.2, ...}
    lagrangian: {rho_min: 1.0e-10}
    limit: {cells: 400, cfl: 0.4, flux: llf, t_end: 0.25, samples: 10, ...}
    entropy: {zeta: s2, nodes: 64, rtol: 1.0e-8, samples: 10000, ...}
    checks: {mass_tol: 1.0e-8, energy_tol: 1.0e-5, entropy_tol: 1.0e-6}
    sweep: {eps_ladder: [0.1, 0.05], alpha_exp: 0.75, ..., resolution: {0.05: {n: 64}}}
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .constitutive import CouplingFns, GasParams
from .entropy_pairs import BUILTIN_ZETAS
from .errors import IOFailure, ValidationError
from .euler_limit import FLUXES
from .galerkin import SolverConfig
from .lagrangian import RHO_MIN
from .sweep import SweepPlan, exponent_violations, make_plan

__all__ = ["RunConfig", "OutputOptions", "LimitOptions", "EntropyOptions", "CheckOptions",
           "parse_config", "load_config", "config_from_dict", "SCHEMA"]

SNAPSHOT_FORMATS = ("binary", "csv")
NLS_METHODS = ("spectral", "fd")
INITIAL_KEYS = ("profile", "rho_amplitude", "rho_smoothing", "u_amplitude", "w_amplitude", "h_amplitude",
                "theta_mean", "theta_amplitude", "psi_amplitude", "psi_width", "psi_wavenumber",
                "perturbation")


@dataclass(frozen=True)
class OutputOptions:
    dir: str = "out"
    snapshot_format: str = "binary"
    snapshots: bool = True


@dataclass(frozen=True)
class LimitOptions:
    cells: int = 400
    cfl: float = 0.4
    flux: str = "llf"
    t_end: float = 0.25
    samples: int = 10
    nls_nodes: int = 256
    nls_dt: float = 1e-4
    nls_method: str = "spectral"


@dataclass(frozen=True)
class EntropyOptions:
    zeta: str = "s2"
    nodes: int = 64
    rtol: float = 1e-8
    samples: int = 10000
    endpoint_regularized: bool = False


@dataclass(frozen=True)
class CheckOptions:
    mass_tol: float = 1e-8
    energy_tol: float = 1e-5
    entropy_tol: float = 1e-6


@dataclass(frozen=True)
class SweepOptions:
    eps_ladder: tuple = (0.1, 0.05, 0.025, 0.0125)
    alpha_exp: float = 0.75
    beta_exp: float = 1.5
    delta_exp: float = 1.5
    t_end: float = 0.25
    samples: int = 50
    n_compare: int = 5
    compare_cells: int = 200
    reference_cells: int = 1600
    reference_cfl: float = 0.4
    flux: str = "llf"
    nls_nodes: int = 256
    nls_dt: float = 1e-4
    mollify: bool = False
    mollify_scale: float = 0.1
    workers: int = 1
    resolution: dict = field(default_factory=dict)


_SOLVER_KEYS = tuple(f.name for f in fields(SolverConfig) if f.name not in ("params", "coupling", "initial_data"))

# section -> dataclass whose fields are the allowed keys
SCHEMA = {
    "output": OutputOptions,
    "params": GasParams,
    "coupling": CouplingFns,
    "solver": SolverConfig,
    "limit": LimitOptions,
    "entropy": EntropyOptions,
    "checks": CheckOptions,
    "sweep": SweepOptions,
}
_SKIP = {"params": ("laws",), "solver": ("params", "coupling", "initial_data")}
TOP_KEYS = ("seed", "initial_data", "lagrangian") + tuple(SCHEMA)


@dataclass(frozen=True)
class RunConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputOptions = field(default_factory=OutputOptions)
    limit: LimitOptions = field(default_factory=LimitOptions)
    entropy: EntropyOptions = field(default_factory=EntropyOptions)
    checks: CheckOptions = field(default_factory=CheckOptions)
    sweep: SweepOptions = field(default_factory=SweepOptions)
    rho_min: float = RHO_MIN
    seed: int = 0
    source: dict = field(default_factory=dict, compare=False)

    @property
    def params(self) -> GasParams:
        return self.solver.params

    def sweep_plan(self) -> SweepPlan:
        s = self.sweep
        opts = {f.name: getattr(s, f.name) for f in fields(s)
                if f.name not in ("eps_ladder", "alpha_exp", "beta_exp", "delta_exp", "resolution")}
        return make_plan(s.eps_ladder, s.alpha_exp, s.beta_exp, s.delta_exp, base=self.solver,
                         resolution=s.resolution, **opts)


# --------------------------------------------------------------------------
# parsing


def _lines(node, prefix="") -> dict:
    """Map dotted key paths to 1-based source lines."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}{k.value}"
            out[path] = k.start_mark.line + 1
            out.update(_lines(v, path + "."))
    return out


def _where(lines, path):
    return f" (line {lines[path]})" if path in lines else ""


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_type(path, v, default, lines, errs):
    """Coerce v to the type of ``default``; record a violation on mismatch."""
    if isinstance(default, bool):
        if isinstance(v, bool):
            return v
        errs.append(f"{path} must be true or false: got {v!r}{_where(lines, path)}")
    elif isinstance(default, int) or (default is None and path.endswith(("collocation_points", "snapshot_every"))):
        if v is None and default is None:
            return None
        if isinstance(v, int) and not isinstance(v, bool):
            return v
        errs.append(f"{path} must be an integer: got {v!r}{_where(lines, path)}")
    elif isinstance(default, float):
        if _is_number(v):
            return float(v)
        errs.append(f"{path} must be a number: got {v!r}{_where(lines, path)}")
    elif isinstance(default, str):
        if isinstance(v, str):
            return v
        errs.append(f"{path} must be a string: got {v!r}{_where(lines, path)}")
    elif isinstance(default, tuple):
        if isinstance(v, list) and all(_is_number(x) for x in v):
            return tuple(float(x) for x in v)
        errs.append(f"{path} must be a list of numbers: got {v!r}{_where(lines, path)}")
    elif isinstance(default, dict):
        if isinstance(v, dict):
            return v
        errs.append(f"{path} must be a mapping: got {v!r}{_where(lines, path)}")
    else:
        return v
    return default


def _section(name, data, cls, lines, errs) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        errs.append(f"{name} must be a mapping{_where(lines, name)}")
        return {}
    proto = cls()
    allowed = [f.name for f in fields(cls) if f.name not in _SKIP.get(name, ())]
    out = {}
    for k, v in data.items():
        path = f"{name}.{k}"
        if k not in allowed:
            errs.append(f"unknown key {path}{_where(lines, path)}")
            continue
        out[k] = _check_type(path, v, getattr(proto, k), lines, errs)
    return out


def _resolution(data, lines, errs) -> dict:
    out = {}
    for e, spec in (data or {}).items():
        path = f"sweep.resolution.{e}"
        if not _is_number(e) or not isinstance(spec, dict):
            errs.append(f"{path} must map an eps value to {{n, dt}}{_where(lines, path)}")
            continue
        bad = set(spec) - {"n", "dt"}
        if bad:
            errs.append(f"unknown key(s) {sorted(bad)} in {path}{_where(lines, path)}")
            continue
        if "n" in spec and not (isinstance(spec["n"], int) and spec["n"] >= 1):
            errs.append(f"{path}.n must be a positive integer{_where(lines, path)}")
        if "dt" in spec and not (_is_number(spec["dt"]) and spec["dt"] > 0):
            errs.append(f"{path}.dt must be a positive number{_where(lines, path)}")
        out[float(e)] = dict(spec)
    return out


def config_from_dict(doc: dict, lines: dict | None = None) -> RunConfig:
    """Build and fully validate a RunConfig; raises ValidationError listing
    every violation."""
    lines = lines or {}
    errs: list[str] = []
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ValidationError("configuration must be a mapping at the top level")
    for k in doc:
        if k not in TOP_KEYS:
            errs.append(f"unknown key {k}{_where(lines, str(k))}")
    seed = doc.get("seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0):
        errs.append(f"seed must be a nonnegative integer: got {seed!r}{_where(lines, 'seed')}")
        seed = 0
    sec = {name: _section(name, doc.get(name), cls, lines, errs) for name, cls in SCHEMA.items()}

    idata = doc.get("initial_data") or {"profile": "smooth-periodic"}
    if not isinstance(idata, dict):
        errs.append(f"initial_data must be a mapping{_where(lines, 'initial_data')}")
        idata = {"profile": "smooth-periodic"}
    for k, v in idata.items():
        path = f"initial_data.{k}"
        if k not in INITIAL_KEYS:
            errs.append(f"unknown key {path}{_where(lines, path)}")
        elif k != "profile" and not _is_number(v):
            errs.append(f"{path} must be a number: got {v!r}{_where(lines, path)}")
    idata = {"profile": "smooth-periodic", **idata}

    lag = doc.get("lagrangian") or {}
    rho_min = RHO_MIN
    if not isinstance(lag, dict):
        errs.append("lagrangian must be a mapping")
    else:
        for k, v in lag.items():
            if k != "rho_min":
                errs.append(f"unknown key lagrangian.{k}{_where(lines, 'lagrangian.' + str(k))}")
            elif not (_is_number(v) and v > 0):
                errs.append(f"lagrangian.rho_min > 0 required: got {v!r}")
            else:
                rho_min = float(v)

    params = GasParams(**sec["params"])
    coupling = CouplingFns(**sec["coupling"])
    solver = SolverConfig(params=params, coupling=coupling, initial_data=idata, **sec["solver"])
    errs += solver.violations()

    output = OutputOptions(**sec["output"])
    if output.snapshot_format not in SNAPSHOT_FORMATS:
        errs.append(f"output.snapshot_format must be one of {SNAPSHOT_FORMATS}: got {output.snapshot_format!r}")

    limit = LimitOptions(**sec["limit"])
    errs += _limit_violations(limit)
    entropy = EntropyOptions(**sec["entropy"])
    if entropy.zeta not in BUILTIN_ZETAS:
        errs.append(f"entropy.zeta must be one of {BUILTIN_ZETAS}: got {entropy.zeta!r}")
    if entropy.nodes < 2 or entropy.samples < 1 or not entropy.rtol > 0:
        errs.append("entropy.nodes >= 2, entropy.samples >= 1 and entropy.rtol > 0 required")
    if params.gamma > 3 and not (params.allow_large_gamma and entropy.endpoint_regularized):
        errs.append("gamma > 3 requires params.allow_large_gamma and entropy.endpoint_regularized")
    checks = CheckOptions(**sec["checks"])
    if min(checks.mass_tol, checks.energy_tol, checks.entropy_tol) <= 0:
        errs.append("checks tolerances must be > 0")

    sw = dict(sec["sweep"])
    if "resolution" in sw:
        sw["resolution"] = _resolution(sw["resolution"], lines, errs)
    sweep = SweepOptions(**sw)
    if "sweep" in doc:
        errs += exponent_violations(sweep.alpha_exp, sweep.beta_exp, sweep.delta_exp)
        if sweep.flux not in FLUXES:
            errs.append(f"sweep.flux must be one of {FLUXES}: got {sweep.flux!r}")

    cfg = RunConfig(solver=solver, output=output, limit=limit, entropy=entropy, checks=checks, sweep=sweep,
                    rho_min=rho_min, seed=seed, source=doc)
    if not errs and "sweep" in doc:
        try:
            cfg.sweep_plan()
        except ValidationError as exc:
            errs += exc.violations
    if errs:
        raise ValidationError(list(dict.fromkeys(errs)))
    return cfg


def _limit_violations(o: LimitOptions) -> list[str]:
    out = []
    if o.cells < 4:
        out.append(f"limit.cells >= 4 required: cells={o.cells}")
    if not 0 < o.cfl <= 0.45:
        out.append(f"0 < limit.cfl <= 0.45 required: cfl={o.cfl}")
    if o.flux not in FLUXES:
        out.append(f"limit.flux must be one of {FLUXES}: got {o.flux!r}")
    if not o.t_end > 0 or o.samples < 1:
        out.append("limit.t_end > 0 and limit.samples >= 1 required")
    if o.nls_nodes < 3 or not o.nls_dt > 0:
        out.append("limit.nls_nodes >= 3 and limit.nls_dt > 0 required")
    if o.nls_method not in NLS_METHODS:
        out.append(f"limit.nls_method must be one of {NLS_METHODS}: got {o.nls_method!r}")
    return out


def load_config(text: str) -> RunConfig:
    """Parse a YAML document held in a string."""
    try:
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            doc = loader.construct_document(node) if node is not None else {}
        finally:
            loader.dispose()
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ValidationError(f"parse error{where}: {getattr(exc, 'problem', None) or exc}") from exc
    return config_from_dict(doc, _lines(node))


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IOFailure(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return load_config(text)
