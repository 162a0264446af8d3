"""Conserved and monitored quantities.

Every integral is evaluated in the mass coordinate with the trapezoidal rule
on the collocation nodes, which is the inner product the Galerkin
projections use.  Eulerian integrals are converted exactly: dx = v dy,
rho_x = -v_y / v^3, f_x = f_y / v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import DivergenceError

__all__ = ["MonitorRecord", "MONITOR_COLUMNS", "Accumulator", "measure", "check_energy_identity",
           "energy_scale", "LagrangianIntegrands"]


@dataclass
class MonitorRecord:
    t: float
    mass: float
    total_energy: float
    entropy_integral: float
    entropy_production_rate: float
    psi_l2: float
    psi_energy: float
    min_v: float
    max_v: float
    min_theta: float
    max_theta: float
    unif1: float
    unif2: float
    unif2_time: float
    unif3: float
    unif4: float
    unif5: float
    dissipation: float
    fluid_energy: float
    coupling_energy: float
    entropy_bracket: float
    thermal_pressure_off: int

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in MONITOR_COLUMNS}


MONITOR_COLUMNS = tuple(f.name for f in fields(MonitorRecord))

_RUNNING = ("unif2_time", "unif3", "unif4", "unif5", "dissipation")


class Accumulator:
    """Per-run state for the running space-time integrals (trapezoid in t)."""

    def __init__(self):
        self.t = None
        self.rates = None
        self.values = {k: 0.0 for k in _RUNNING}

    def advance(self, t: float, rates: dict) -> dict:
        if self.t is not None:
            dt = t - self.t
            for k in _RUNNING:
                self.values[k] += 0.5 * dt * (rates[k] + self.rates[k])
        self.t, self.rates = t, dict(rates)
        return dict(self.values)


@dataclass
class LagrangianIntegrands:
    """Nodal fields and y-derivatives with quadrature weights for int dy."""

    wq: np.ndarray
    v: np.ndarray
    vy: np.ndarray
    u: np.ndarray
    uy: np.ndarray
    w: np.ndarray
    wy: np.ndarray
    h: np.ndarray
    hy: np.ndarray
    theta: np.ndarray
    thetay: np.ndarray
    psi: np.ndarray
    psiy: np.ndarray


def _integrands_galerkin(state, cfg):
    from .galerkin import nodal_fields

    g = cfg.grid
    f = nodal_fields(state, g)
    return LagrangianIntegrands(g.wq, f.v, g.Dc @ f.v, f.u, f.uy, f.w, f.wy, f.h, f.hy,
                                f.theta, f.thetay, f.psi, f.psiy)


def _integrands_snapshot(snap):
    c = np.asarray(snap.coord, float)
    wq = np.zeros_like(c)
    dc = np.diff(c)
    wq[:-1] += 0.5 * dc
    wq[1:] += 0.5 * dc
    d = lambda f: np.gradient(f, c, axis=-1, edge_order=2)
    v = 1.0 / snap.rho
    if snap.frame == "lagrangian":
        return LagrangianIntegrands(wq, v, d(v), snap.u, d(snap.u), snap.w, d(snap.w), snap.h, d(snap.h),
                                    snap.theta, d(snap.theta), snap.psi, d(snap.psi))
    # Eulerian: dy = rho dx and f_y = v f_x
    return LagrangianIntegrands(wq * snap.rho, v, v * d(v), snap.u, v * d(snap.u), snap.w, v * d(snap.w),
                                snap.h, v * d(snap.h), snap.theta, v * d(snap.theta), snap.psi,
                                v * d(snap.psi))


def _finite_or_raise(L: LagrangianIntegrands, t):
    for name in ("v", "u", "w", "h", "theta", "psi"):
        if not np.all(np.isfinite(getattr(L, name))):
            raise DivergenceError(name, t)


def energy_parts(L: LagrangianIntegrands, params, coupling) -> dict:
    p = params
    I = lambda f: float(np.dot(L.wq, f))
    rho = 1.0 / L.v
    Pe = p.a * rho ** (p.gamma - 1.0) / (p.gamma - 1.0)
    Q = p.laws.q_energy(L.theta, p)
    kinetic = 0.5 * (L.u**2 + np.sum(L.w**2, axis=0))
    magnetic = 0.5 * p.beta * L.v * np.sum(L.h**2, axis=0)
    z = np.abs(L.psi) ** 2
    gv = coupling.g_all(L.v)[0]
    Hz = coupling.h_all(z)[0]
    psi_en = 0.5 * np.abs(L.psiy) ** 2 + 0.25 * z**2
    fluid = I(Pe + Q + kinetic)
    return {
        "fluid": fluid,
        "magnetic": I(magnetic),
        "coupling": I(p.alpha * gv * Hz),
        "psi": I(psi_en),
        "total": fluid + I(magnetic) + I(p.alpha * gv * Hz) + I(psi_en),
    }


def measure(obj, cfg, acc: Accumulator | None = None, rhs=None) -> MonitorRecord:
    """Monitor record for a GalerkinState (spectral) or a FieldSnapshot.

    For Galerkin states the entropy production rate is d/dt int s dy of the
    semidiscrete system (uses the right-hand side); for snapshots it is the
    sum-of-squares expression that the continuous identity equates it to.
    """
    from .galerkin import GalerkinState, assemble_rhs

    p = cfg.params
    coupling = cfg.coupling
    if isinstance(obj, GalerkinState):
        L = _integrands_galerkin(obj, cfg)
        t = obj.t
    else:
        L = _integrands_snapshot(obj)
        t = obj.t
    _finite_or_raise(L, t)
    I = lambda f: float(np.dot(L.wq, f))
    laws = p.laws
    v, th = L.v, L.theta
    rho = 1.0 / v
    en = energy_parts(L, p, coupling)
    s = laws.s_theta(th, p) - p.delta * laws.p_theta_volume_integral(rho, p)
    kap = laws.kappa(th, p)
    wy2 = np.sum(L.wy**2, axis=0)
    hy2 = np.sum(L.hy**2, axis=0)
    h2 = np.sum(L.h**2, axis=0)
    visc = p.epsilon * L.uy**2 + p.mu * wy2 + p.nu * hy2
    if isinstance(obj, GalerkinState):
        d = rhs if rhs is not None else assemble_rhs(obj, cfg)
        theta_t = cfg.grid.C @ d.theta
        sprod = I(p.delta * laws.p_theta(rho, p) * L.uy + laws.c_theta(th, p) / th * theta_t)
    else:
        sprod = I(kap * L.thetay**2 / (v * th**2) + visc / (v * th))
    g = p.gamma
    q = p.q
    th_q2_y = 0.5 * q * th ** (0.5 * q - 1.0) * L.thetay
    rates = {
        "unif2_time": I(p.epsilon * L.vy**2 * v ** (-2.0 - g) + p.epsilon * p.beta * hy2),
        "unif3": I(v ** (-g) + p.delta * th * laws.p_theta(rho, p) + p.beta * h2),
        "unif4": I(np.abs(L.u) ** 3 + v ** (1.0 - g - p.vartheta)),
        "unif5": I(th ** (q + 1.0) * v + th_q2_y**2 / v),
        "dissipation": I(kap * L.thetay**2 / (v * th**2) + visc / v),
    }
    running = acc.advance(t, rates) if acc is not None else {k: 0.0 for k in _RUNNING}
    unif2 = I(p.epsilon**2 * L.vy**2 / v**2 + p.epsilon * p.beta**2 * v**2 * h2)
    rec = MonitorRecord(
        t=float(t),
        mass=I(v),
        total_energy=en["total"],
        entropy_integral=I(s),
        entropy_production_rate=sprod,
        psi_l2=math.sqrt(I(np.abs(L.psi) ** 2)),
        psi_energy=en["psi"],
        min_v=float(np.min(v)),
        max_v=float(np.max(v)),
        min_theta=float(np.min(th)),
        max_theta=float(np.max(th)),
        unif1=en["total"],
        unif2=unif2,
        unif2_time=running["unif2_time"],
        unif3=running["unif3"],
        unif4=running["unif4"],
        unif5=running["unif5"],
        dissipation=running["dissipation"],
        fluid_energy=en["fluid"] + en["magnetic"],
        coupling_energy=en["coupling"],
        entropy_bracket=I(th - 1.0 - np.log(th)),
        thermal_pressure_off=int(p.degenerate_thermal_pressure()),
    )
    for k, val in rec.as_dict().items():
        if not math.isfinite(val):
            raise DivergenceError(f"monitor {k}", t)
    return rec


def energy_scale(records) -> float:
    """Scale for relative tolerances: the initial total energy."""
    return abs(records[0].total_energy)


def check_energy_identity(window, scale: float | None = None) -> float:
    """|E(t2) - E(t1)| / scale for the first and last record of ``window``."""
    r1, r2 = window[0], window[-1]
    sc = abs(r1.total_energy) if scale is None else scale
    return abs(r2.total_energy - r1.total_energy) / sc
