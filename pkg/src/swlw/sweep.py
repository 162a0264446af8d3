"""Vanishing-viscosity experiment harness.

A plan is an epsilon ladder with alpha = eps^alpha_exp, beta = eps^beta_exp,
delta = eps^delta_exp.  Every rung is a viscous Galerkin run; the limit
reference (Euler + transverse w + cubic NLS) is computed once at fine
resolution.  Rows are independent jobs and are merged in ladder order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .entropy_pairs import EntropyPairSpec, dissipation_balance_residual
from .errors import ValidationError
from .euler_limit import EulerState, NlsState, limit_energy, run_limit, thermal_inequality_residual
from .galerkin import SolverConfig, initial_state, run, to_eulerian
from .snapshot import FieldSnapshot

__all__ = ["SweepPlan", "PlanRow", "SweepRow", "SWEEP_COLUMNS", "SweepResult", "make_plan", "run_sweep",
           "fit_rate", "FitResult", "limit_initial_data", "cell_averages", "hminus1_norm"]


@dataclass(frozen=True)
class PlanRow:
    eps: float
    alpha: float
    beta: float
    delta: float
    n: int
    dt: float
    rho_smoothing: float = 0.0


@dataclass(frozen=True)
class SweepPlan:
    rows: tuple = ()
    alpha_exp: float = 0.75
    beta_exp: float = 1.5
    delta_exp: float = 1.5
    base: SolverConfig = field(default_factory=SolverConfig)
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

    @property
    def eps_ladder(self) -> tuple:
        return tuple(r.eps for r in self.rows)

    @property
    def sample_times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.samples + 1)

    @property
    def compare_index(self) -> np.ndarray:
        """Indices into sample_times used for the distance columns (t > 0)."""
        stride = self.samples // self.n_compare
        return np.arange(stride, self.samples + 1, stride)


def exponent_violations(alpha_exp, beta_exp, delta_exp) -> list[str]:
    out = []
    if not alpha_exp > 0.5:
        out.append(f"alpha_exp > 1/2 required (alpha = o(eps^(1/2))): alpha_exp={alpha_exp}")
    if not beta_exp > 1.0:
        out.append(f"beta_exp > 1 required (beta = o(eps)): beta_exp={beta_exp}")
    if not delta_exp > 1.0:
        out.append(f"delta_exp > 1 required (delta = o(eps)): delta_exp={delta_exp}")
    return out


def make_plan(eps_ladder, alpha_exp: float = 0.75, beta_exp: float = 1.5, delta_exp: float = 1.5,
              base: SolverConfig | None = None, resolution: dict | None = None, **options) -> SweepPlan:
    """Deterministic plan for a decreasing epsilon ladder.

    ``resolution`` maps eps to {"n": .., "dt": ..} overrides of the base grid.
    """
    base = base or SolverConfig()
    ladder = [float(e) for e in eps_ladder]
    errs = exponent_violations(alpha_exp, beta_exp, delta_exp)
    if any(not (0.0 < e < 1.0) for e in ladder):
        errs.append("every eps must lie in (0, 1)")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        errs.append("eps ladder must be strictly decreasing")
    probe = replace(SweepPlan(), **options)
    if probe.samples < 1 or probe.n_compare < 1 or probe.samples % probe.n_compare:
        errs.append(f"samples must be a positive multiple of n_compare: {probe.samples}, {probe.n_compare}")
    if not probe.t_end > 0:
        errs.append(f"t_end > 0 required: t_end={probe.t_end}")
    if probe.reference_cells % probe.compare_cells:
        errs.append("reference_cells must be a multiple of compare_cells")
    if probe.workers < 1:
        errs.append("workers >= 1 required")
    if errs:
        raise ValidationError(errs)
    resolution = resolution or {}
    rows = []
    for e in ladder:
        over = resolution.get(e, {})
        row = PlanRow(eps=e, alpha=e**alpha_exp, beta=e**beta_exp, delta=e**delta_exp,
                      n=int(over.get("n", base.n)), dt=float(over.get("dt", base.dt)),
                      rho_smoothing=probe.mollify_scale * math.sqrt(e) if probe.mollify else 0.0)
        # hard scaling guards
        assert row.alpha < math.sqrt(e) and row.beta < e and row.delta < e
        steps = probe.t_end / row.dt
        if abs(steps - round(steps)) > 1e-9 * steps or round(steps) % probe.samples:
            raise ValidationError(f"t_end/dt must be an integer multiple of samples for eps={e}")
        rows.append(row)
    return replace(probe, rows=tuple(rows), alpha_exp=alpha_exp, beta_exp=beta_exp, delta_exp=delta_exp,
                   base=base)


@dataclass
class SweepRow:
    eps: float
    alpha: float
    beta: float
    delta: float
    n: int
    dt: float
    status: str = "ok"
    l1_rho_m: float = math.nan
    w_dist: float = math.nan
    beta_h_sup: float = math.nan
    sqrt_beta_h_l2: float = math.nan
    psi_dist_l4: float = math.nan
    max_unif1: float = math.nan
    max_unif2: float = math.nan
    max_unif3: float = math.nan
    max_unif4: float = math.nan
    max_unif5: float = math.nan
    thermal_residual: float = math.nan
    thermal_scale: float = math.nan
    limit_energy_ratio: float = math.nan
    db_residual: float = math.nan
    db_eps: float = math.nan
    db_delta: float = math.nan
    db_beta: float = math.nan
    db_alpha: float = math.nan
    vacuum_measure: float = math.nan
    rho_smoothing: float = 0.0
    thermal_pressure_off: int = 0
    error: str = ""
    wall_time: float = math.nan


# wall_time is machine-dependent and goes to the manifest, not to the CSV
SWEEP_COLUMNS = tuple(f.name for f in fields(SweepRow) if f.name != "wall_time")


@dataclass
class SweepResult:
    plan: SweepPlan
    rows: list
    monitors: dict
    reference: object = None
    timings: dict = field(default_factory=dict)


def _gauss_points(length: float, cells: int):
    g, _ = np.polynomial.legendre.leggauss(3)
    dx = length / cells
    centers = (np.arange(cells) + 0.5) * dx
    return (centers[:, None] + 0.5 * dx * g[None, :]).ravel()


def _average(vals, cells: int):
    _, gw = np.polynomial.legendre.leggauss(3)
    vals = np.asarray(vals)
    return 0.5 * np.sum(vals.reshape(vals.shape[:-1] + (cells, 3)) * gw, axis=-1)


def cell_averages(fun, length: float, cells: int):
    """Cell averages of fun(x) (x on the last axis) by 3-point Gauss per cell."""
    return _average(fun(_gauss_points(length, cells)), cells)


def _eulerian_averages(state, cfg, cells):
    """Cell averages of rho, rho u, rho w (returned as w), h, theta, psi."""
    length = float(np.dot(cfg.grid.wq, state.v))
    snap = to_eulerian(state, cfg, np.clip(_gauss_points(length, cells), 0.0, length))
    rho = _average(snap.rho, cells)
    return {
        "length": length,
        "rho": rho,
        "m": _average(snap.rho * snap.u, cells),
        "w": _average(snap.rho * snap.w, cells) / rho,
        "h": _average(snap.h, cells),
        "theta": _average(snap.theta, cells),
        "psi": _average(snap.psi, cells),
    }


def limit_initial_data(cfg: SolverConfig, cells: int, nls_nodes: int):
    """Euler cell averages, transverse velocity and NLS nodal data matching
    the viscous initial state of ``cfg``."""
    st = initial_state(cfg)
    a = _eulerian_averages(st, cfg, cells)
    y = np.linspace(0.0, 1.0, nls_nodes + 1)
    psi = cfg.grid.sine_eval(st.psi, y)
    return EulerState(a["rho"], a["m"], 0.0, a["length"]), a["w"], NlsState(psi, 0.0, 1.0)


def hminus1_norm(f, length: float):
    """H^{-1} norm (Dirichlet) of cell-centred samples on [0, length]; f (..., N)."""
    f = np.atleast_2d(f)
    N = f.shape[-1]
    dx = length / N
    x = (np.arange(N) + 0.5) * dx
    k = np.arange(1, N + 1)
    S = np.sin(np.outer(k, x) * np.pi / length)
    coef = 2.0 / length * (f @ S.T) * dx
    return float(math.sqrt(0.5 * length * np.sum(coef**2 / (k * np.pi / length) ** 2)))


def _coarsen(a, factor):
    a = np.asarray(a)
    return a.reshape(a.shape[:-1] + (a.shape[-1] // factor, factor)).mean(axis=-1)


def _reference(plan: SweepPlan):
    cfg = replace(plan.base, params=plan.base.params, t_end=plan.t_end)
    e0, w0, z0 = limit_initial_data(cfg, plan.reference_cells, plan.nls_nodes)
    times = plan.sample_times[plan.compare_index]
    lim = run_limit(e0, w0, z0, times, plan.base.params, cfl=plan.reference_cfl, flux=plan.flux,
                    nls_dt=plan.nls_dt)
    f = plan.reference_cells // plan.compare_cells
    return {
        "times": times,
        "rho": np.array([_coarsen(s.rho, f) for s in lim.euler]),
        "m": np.array([_coarsen(s.m, f) for s in lim.euler]),
        "w": np.array([_coarsen(w, f) for w in lim.w]),
        "psi": np.array([z.psi for z in lim.nls]),
        "length": e0.length,
        "steps": lim.steps,
    }


def _row_config(plan: SweepPlan, row: PlanRow) -> SolverConfig:
    p = plan.base.params.with_(epsilon=row.eps, alpha=row.alpha, beta=row.beta, delta=row.delta)
    idata = dict(plan.base.initial_data)
    if row.rho_smoothing:
        idata["rho_smoothing"] = row.rho_smoothing
    steps = int(round(plan.t_end / row.dt))
    return replace(plan.base, params=p, n=row.n, dt=row.dt, t_end=plan.t_end, initial_data=idata,
                   snapshot_every=steps // plan.samples, collocation_points=None)


def _run_row(plan: SweepPlan, index: int, ref: dict):
    row = plan.rows[index]
    out = SweepRow(eps=row.eps, alpha=row.alpha, beta=row.beta, delta=row.delta, n=row.n, dt=row.dt,
                   rho_smoothing=row.rho_smoothing)
    cfg = _row_config(plan, row)
    out.thermal_pressure_off = int(cfg.params.degenerate_thermal_pressure())
    t0 = time.perf_counter()
    traj, psis = [], []
    y = np.linspace(0.0, 1.0, plan.nls_nodes + 1)
    Nc = plan.compare_cells

    def on_state(st):
        a = _eulerian_averages(st, cfg, Nc)
        x = (np.arange(Nc) + 0.5) * a["length"] / Nc
        traj.append(FieldSnapshot("eulerian", st.t, x, a["rho"], a["m"] / a["rho"], a["w"], a["h"],
                                  a["theta"], a["psi"], meta={}))
        psis.append(cfg.grid.sine_eval(st.psi, y))

    monitors = []
    try:
        res = run(cfg, keep_states=False, on_state=on_state)
        monitors = res.monitors
    except Exception as exc:  # recorded in the row, the sweep continues
        monitors = getattr(getattr(exc, "partial", None), "monitors", [])
        out.status = type(exc).__name__
        out.error = str(exc).replace("\n", " ")
        out.wall_time = time.perf_counter() - t0
        return out, monitors
    p = cfg.params
    ci = plan.compare_index
    dxc = ref["length"] / Nc
    l1, wd2, psid = [], [], []
    for j, k in enumerate(ci):
        s = traj[k]
        l1.append(float(np.sum(np.abs(s.rho - ref["rho"][j]) + np.abs(s.rho * s.u - ref["m"][j])) * dxc))
        wd2.append(hminus1_norm(s.w - ref["w"][j], ref["length"]) ** 2)
        psid.append(float(np.trapezoid(np.abs(psis[k] - ref["psi"][j]) ** 4, y) ** 0.25))
    tc = plan.sample_times[ci]
    out.l1_rho_m = max(l1)
    # L^2 in time from t=0, where both solutions coincide
    out.w_dist = float(math.sqrt(np.trapezoid(np.concatenate([[0.0], wd2]), np.concatenate([[0.0], tc]))))
    out.psi_dist_l4 = max(psid)
    hmag = [np.sqrt(np.sum(s.h**2, axis=0)) for s in traj]
    out.beta_h_sup = float(max(p.beta * np.max(h) for h in hmag))
    out.sqrt_beta_h_l2 = float(max(math.sqrt(p.beta * np.sum(h**2) * dxc) for h in hmag))
    for k in range(1, 6):
        out.__setattr__(f"max_unif{k}", float(max(getattr(r, f"unif{k}") for r in monitors)))
    t = np.array([s.t for s in traj])
    x = traj[0].coord
    stack = lambda name: np.array([getattr(s, name) for s in traj])
    dom = (0.0, ref["length"])
    tr = thermal_inequality_residual(t, x, stack("rho"), stack("u"), stack("w"), stack("theta"), p,
                                     domain=dom)
    out.thermal_residual = tr.value
    out.thermal_scale = abs(tr.parts["initial"])
    out.vacuum_measure = tr.vacuum_measure
    E = [limit_energy(x, s.rho, s.u, s.w, s.theta, p, domain=dom) for s in traj]
    out.limit_energy_ratio = float(max(E) / E[0])
    # entropy balance of the viscous run for the mechanical-energy pair
    db = dissipation_balance_residual(traj, EntropyPairSpec.from_params("s2", p), p, cfg.coupling)
    out.db_residual = db.residual
    out.db_eps, out.db_delta, out.db_beta, out.db_alpha = (db.magnitudes[k] for k in
                                                           ("eps", "delta", "beta", "alpha"))
    out.wall_time = time.perf_counter() - t0
    return out, monitors


def _job(args):
    plan, index, ref = args
    return _run_row(plan, index, ref)


def run_sweep(plan: SweepPlan, on_row=None) -> SweepResult:
    """Execute every rung (in a process pool when plan.workers > 1) and merge
    the rows in ladder order."""
    t0 = time.perf_counter()
    result = SweepResult(plan=plan, rows=[], monitors={})
    if not plan.rows:
        return result
    ref = _reference(plan)
    result.reference = ref
    result.timings["reference"] = time.perf_counter() - t0
    jobs = [(plan, i, ref) for i in range(len(plan.rows))]
    if plan.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(plan.workers, len(jobs))) as pool:
            outs = list(pool.map(_job, jobs))
    else:
        outs = [_job(j) for j in jobs]
    for row, mons in outs:
        result.rows.append(row)
        result.monitors[row.eps] = mons
        result.timings[f"eps={row.eps!r}"] = row.wall_time
        if on_row:
            on_row(row)
    result.timings["total"] = time.perf_counter() - t0
    return result


@dataclass
class FitResult:
    slope: float
    intercept: float
    residual: float


def fit_rate(table, column: str) -> FitResult:
    """Least-squares slope of log(column) against log(eps)."""
    eps, vals = [], []
    for r in table:
        get = r.get if isinstance(r, dict) else (lambda k, r=r: getattr(r, k))
        eps.append(float(get("eps")))
        vals.append(float(get(column)))
    eps, vals = np.array(eps), np.array(vals)
    if eps.size < 3:
        raise ValidationError(f"fit_rate needs at least 3 rows, got {eps.size}")
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0) or np.any(eps <= 0):
        raise ValidationError(f"fit_rate needs positive finite values in column {column!r}")
    X, Y = np.log(eps), np.log(vals)
    (slope, intercept), *_ = np.polyfit(X, Y, 1, full=True)
    resid = Y - (slope * X + intercept)
    return FitResult(float(slope), float(intercept), float(math.sqrt(np.mean(resid**2))))
