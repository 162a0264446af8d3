"""Reference solvers for the decoupled limit system.

* isentropic Euler: finite volumes, minmod MUSCL, local Lax-Friedrichs (or
  HLL) fluxes, SSP-RK2, reflective walls;
* cubic NLS  i psi_t + psi_yy = |psi|^2 psi  with Dirichlet ends: Strang
  splitting of an exact phase rotation and a Crank-Nicolson step;
* transverse velocity (rho w)_t + (rho u w)_x = (mu w_x)_x: conservative
  upwind advection and implicit diffusion;
* weak-form residuals of the entropy inequalities and of the thermal
  variational inequality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.fft import dst, idst
from scipy.linalg import solve_banded

from .entropy_pairs import EntropyPairSpec, entropy_pair, kernel_mass, mechanical_pair
from .errors import LinearSolveError, PositivityError, StepSizeError, UnsupportedError, ValidationError

__all__ = [
    "EulerState", "euler_step", "euler_rhs", "run_euler", "max_speed", "stable_dt", "total_mass",
    "total_momentum", "total_mechanical_energy", "EntropyResidual", "entropy_inequality_residual",
    "default_entropy_test", "NlsState", "nls_step", "run_nls", "nls_mass", "nls_energy",
    "transverse_step", "ThermalResidual", "thermal_inequality_residual", "default_thermal_test",
    "limit_energy", "LimitRun", "run_limit", "CFL_MAX", "FLUXES",
]

CFL_MAX = 0.45
VACUUM = 1e-10
FLUXES = ("llf", "hll")


# --------------------------------------------------------------------------
# isentropic Euler


@dataclass
class EulerState:
    rho: np.ndarray
    m: np.ndarray
    t: float = 0.0
    length: float = 1.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, float)
        self.m = np.asarray(self.m, float)
        if self.rho.shape != self.m.shape or self.rho.ndim != 1:
            raise ValidationError("rho and m must be 1-D arrays of equal length")

    @property
    def n(self) -> int:
        return self.rho.size

    @property
    def dx(self) -> float:
        return self.length / self.rho.size

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.dx

    @property
    def u(self) -> np.ndarray:
        pos = self.rho > VACUUM
        return np.where(pos, self.m / np.where(pos, self.rho, 1.0), 0.0)

    def copy(self) -> "EulerState":
        return EulerState(self.rho.copy(), self.m.copy(), self.t, self.length)


def _velocity(rho, m):
    pos = rho > VACUUM
    return np.where(pos, m / np.where(pos, rho, 1.0), 0.0)


def _sound(rho, p):
    return np.sqrt(p.a * p.gamma * np.maximum(rho, 0.0) ** (p.gamma - 1.0))


def max_speed(state: EulerState, p) -> float:
    return float(np.max(np.abs(state.u) + _sound(state.rho, p)))


def stable_dt(state: EulerState, p, cfl: float = 0.4) -> float:
    s = max_speed(state, p)
    return cfl * state.dx / s if s > 0 else np.inf


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _faces(rho, m):
    """Left/right states at the N+1 interfaces (walls included) from minmod
    MUSCL with two mirror ghost cells per side (rho even, m odd)."""
    R = np.concatenate([rho[1::-1], rho, rho[:-3:-1]])
    Mo = np.concatenate([-m[1::-1], m, -m[:-3:-1]])
    out = []
    for q in (R, Mo):
        d = np.diff(q)
        slope = _minmod(d[:-1], d[1:])  # cells 1..N+2 of the padded array
        c = q[1:-1]
        left = c + 0.5 * slope   # right edge of each padded cell
        right = c - 0.5 * slope  # left edge
        out.append((left[:-1], right[1:]))
    (rl, rr), (ml, mr) = out
    # vacuum faces carry no momentum
    ml = np.where(rl > VACUUM, ml, 0.0)
    mr = np.where(rr > VACUUM, mr, 0.0)
    return rl, ml, rr, mr


def _phys_flux(rho, m, p):
    u = _velocity(rho, m)
    return m, m * u + p.a * np.maximum(rho, 0.0) ** p.gamma


def _numerical_flux(rl, ml, rr, mr, p, kind: str):
    ul, ur = _velocity(rl, ml), _velocity(rr, mr)
    cl, cr = _sound(rl, p), _sound(rr, p)
    fl, fr = _phys_flux(rl, ml, p), _phys_flux(rr, mr, p)
    if kind == "llf":
        a = np.maximum(np.abs(ul) + cl, np.abs(ur) + cr)
        return [0.5 * (fl[k] + fr[k]) - 0.5 * a * (ur_ - ul_)
                for k, (ul_, ur_) in enumerate(((rl, rr), (ml, mr)))], a
    sl = np.minimum(ul - cl, ur - cr)
    sr = np.maximum(ul + cl, ur + cr)
    out = []
    for k, (ql, qr) in enumerate(((rl, rr), (ml, mr))):
        denom = np.where(sr > sl, sr - sl, 1.0)
        hll = (sr * fl[k] - sl * fr[k] + sl * sr * (qr - ql)) / denom
        out.append(np.where(sl >= 0, fl[k], np.where(sr <= 0, fr[k], hll)))
    return out, np.maximum(np.abs(sl), np.abs(sr))


def _interface_fluxes(rho, m, p, kind):
    rl, ml, rr, mr = _faces(rho, m)
    (fr_, fm), _ = _numerical_flux(rl, ml, rr, mr, p, kind)
    # reflective walls: mirror symmetry makes the mass flux vanish there exactly
    fr_[0] = 0.0
    fr_[-1] = 0.0
    return fr_, fm


def euler_rhs(rho, m, p, dx, kind="llf"):
    fr, fm = _interface_fluxes(rho, m, p, kind)
    return -(fr[1:] - fr[:-1]) / dx, -(fm[1:] - fm[:-1]) / dx, (fr, fm)


def euler_step(state: EulerState, dt: float, p, flux: str = "llf", return_fluxes: bool = False,
               cfl_max: float = CFL_MAX):
    """One SSP-RK2 step.  With return_fluxes the time-averaged interface
    fluxes (mass, momentum) used by the update are returned too."""
    if flux not in FLUXES:
        raise ValidationError(f"flux must be one of {FLUXES}: got {flux!r}")
    dx = state.dx
    cfl = dt * max_speed(state, p) / dx
    if not dt > 0 or cfl > cfl_max:
        raise StepSizeError(f"CFL number {cfl:.4g} exceeds {cfl_max} (dt={dt:.4g}, dx={dx:.4g})")
    r0, m0 = state.rho, state.m
    dr, dm, f0 = euler_rhs(r0, m0, p, dx, flux)
    r1, m1 = r0 + dt * dr, m0 + dt * dm
    _positivity(r1, state.x, state.t + dt)
    dr, dm, f1 = euler_rhs(r1, m1, p, dx, flux)
    # written as a single flux difference so mass and momentum telescope exactly
    fr = 0.5 * (f0[0] + f1[0])
    fm = 0.5 * (f0[1] + f1[1])
    r2 = r0 - dt / dx * (fr[1:] - fr[:-1])
    m2 = m0 - dt / dx * (fm[1:] - fm[:-1])
    _positivity(r2, state.x, state.t + dt)
    r2 = np.maximum(r2, 0.0)
    m2 = np.where(r2 > 0.0, m2, 0.0)
    out = EulerState(r2, m2, state.t + dt, state.length)
    return (out, (fr, fm)) if return_fluxes else out


def _positivity(rho, x, t):
    bad = np.flatnonzero(rho < -1e-13)
    if bad.size:
        j = int(bad[0])
        raise PositivityError("rho", float(x[j]), t, float(rho[j]))


def run_euler(state: EulerState, t_end: float, p, cfl: float = 0.4, flux: str = "llf",
              store_every: int = 1, on_step: Callable | None = None) -> list[EulerState]:
    """Integrate to t_end with the adaptive step cfl*dx/max speed; returns the
    stored states (first and last always included)."""
    out = [state.copy()]
    s = state
    k = 0
    while s.t < t_end - 1e-14 * max(1.0, t_end):
        dt = min(stable_dt(s, p, cfl), t_end - s.t)
        res = euler_step(s, dt, p, flux=flux, return_fluxes=on_step is not None)
        if on_step is not None:
            nxt, fl = res
            on_step(s, nxt, dt, fl)
        else:
            nxt = res
        s = nxt
        k += 1
        if k % store_every == 0:
            out.append(s.copy())
    if out[-1].t != s.t:
        out.append(s.copy())
    return out


def total_mass(state: EulerState) -> float:
    return float(np.sum(state.rho) * state.dx)


def total_momentum(state: EulerState) -> float:
    return float(np.sum(state.m) * state.dx)


def total_mechanical_energy(state: EulerState, p) -> float:
    eta, _ = mechanical_pair(state.rho, state.m, p)
    return float(np.sum(eta) * state.dx)


# --------------------------------------------------------------------------
# entropy inequality residual


@dataclass
class EntropyResidual:
    value: float
    scale: float
    production: np.ndarray = field(repr=False, default=None)

    def __float__(self):
        return float(self.value)


def default_entropy_test(length: float, t_end: float):
    """phi = sin^4(pi x/L) (1 - t/T)^2: nonnegative, vanishing at the walls and at T."""

    def phi(x, t):
        return np.sin(np.pi * x / length) ** 4 * (1.0 - t / t_end) ** 2

    return phi


def _entropy_flux(rl, ml, rr, mr, spec, p, kind):
    """Numerical entropy flux matching the scheme's numerical viscosity."""
    el, ql = entropy_pair(rl, ml, spec)
    er, qr = entropy_pair(rr, mr, spec)
    _, a = _numerical_flux(rl, ml, rr, mr, p, "llf")
    return 0.5 * (ql + qr) - 0.5 * a * (er - el)


def entropy_inequality_residual(traj: list[EulerState], zeta_id: str, p, test_fn: Callable | None = None,
                                flux: str = "llf") -> EntropyResidual:
    """Discrete weak form of eta_t + q_x <= 0 along a stored trajectory.

    ``traj`` must hold every step of an ``euler_step`` run.  The scheme is
    replayed step by step; with Q the numerical entropy flux at the stage
    interfaces, the cell production is
        D_i^n = eta(U_i^{n+1}) - eta(U_i^n) + dt/dx (Q_{i+1/2} - Q_{i-1/2}),
    and the residual -sum_n sum_i phi_i^n D_i^n dx is, after summation by
    parts, the quadrature of  int int [eta phi_t + q phi_x] + int eta_0 phi_0.
    For zeta in {+-1, +-s} eta is linear in (rho, m), Q is the scheme's own
    flux and the residual vanishes to round-off.
    """
    if not p.gamma > 1.0 or p.gamma > 3.0:
        raise UnsupportedError(f"entropy residual supports 1 < gamma <= 3: gamma={p.gamma}")
    if len(traj) < 2:
        raise ValidationError("trajectory needs at least two states")
    if flux not in FLUXES:
        raise ValidationError(f"flux must be one of {FLUXES}: got {flux!r}")
    spec = EntropyPairSpec.from_params(zeta_id, p)
    s0 = traj[0]
    x, dx = s0.x, s0.dx
    T = traj[-1].t
    phi_fn = test_fn or default_entropy_test(s0.length, T)
    # validate the test function on the trajectory grid
    walls = np.array([0.0, s0.length])
    samp = np.array([phi_fn(x, s.t) for s in traj])
    top = max(float(np.max(np.abs(samp))), 1e-300)
    if np.min(samp) < -1e-14 * top:
        raise ValidationError("test function must be nonnegative")
    if np.max(np.abs([phi_fn(walls, s.t) for s in traj])) > 1e-10 * top:
        raise ValidationError("test function must vanish at the walls")
    if np.max(np.abs(phi_fn(x, T))) > 1e-10 * top:
        raise ValidationError("test function must vanish at the final time")
    prod = np.zeros((len(traj) - 1, x.size))
    eta_prev, _ = entropy_pair(s0.rho, s0.m, spec)
    # magnitude of the initial term, floored by the tested mass so that pairs
    # vanishing on the initial data (zeta = s with m_0 = 0) get a usable scale
    scale = float(np.sum((np.abs(eta_prev) + kernel_mass(spec.Lambda) * s0.rho) * samp[0]) * dx)
    for n in range(len(traj) - 1):
        a, b = traj[n], traj[n + 1]
        dt = b.t - a.t
        dr, dm, _ = euler_rhs(a.rho, a.m, p, dx, flux)
        stage = (a.rho + dt * dr, a.m + dt * dm)
        Q = np.zeros(x.size + 1)
        for r, m in ((a.rho, a.m), stage):
            Q += 0.5 * _entropy_flux(*_faces(r, m), spec, p, flux)
        eta_next, _ = entropy_pair(b.rho, b.m, spec)
        prod[n] = eta_next - eta_prev + dt / dx * (Q[1:] - Q[:-1])
        eta_prev = eta_next
    value = float(-np.sum(samp[:-1] * prod) * dx)
    return EntropyResidual(value=value, scale=max(scale, 1e-300), production=prod)


# --------------------------------------------------------------------------
# cubic NLS


@dataclass
class NlsState:
    psi: np.ndarray
    t: float = 0.0
    length: float = 1.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, complex)
        if self.psi.ndim != 1 or self.psi.size < 3:
            raise ValidationError("psi must be a 1-D array with at least 3 nodes")
        tol = 1e-12 * max(1.0, float(np.max(np.abs(self.psi))))
        if abs(self.psi[0]) > tol or abs(self.psi[-1]) > tol:
            raise ValidationError("psi must vanish at the boundary nodes")
        self.psi[0] = self.psi[-1] = 0.0

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.psi.size)

    def copy(self) -> "NlsState":
        return NlsState(self.psi.copy(), self.t, self.length)


@lru_cache(maxsize=32)
def _cn_multiplier(N: int, dt: float, length: float):
    k = np.arange(1, N)
    lam = (k * np.pi / length) ** 2
    return (1.0 - 0.5j * dt * lam) / (1.0 + 0.5j * dt * lam)


def _cn_spectral(psi, dt, length):
    N = psi.size - 1
    inner = psi[1:-1]
    c = dst(inner.real, type=1) + 1j * dst(inner.imag, type=1)
    c *= _cn_multiplier(N, dt, length)
    out = np.zeros_like(psi)
    out[1:-1] = idst(c.real, type=1) + 1j * idst(c.imag, type=1)
    return out


def _cn_fd(psi, dt, length):
    N = psi.size - 1
    h = length / N
    r = 0.5j * dt / h**2
    inner = psi[1:-1]
    rhs = (1.0 - 2.0 * r) * inner
    rhs[1:] += r * inner[:-1]
    rhs[:-1] += r * inner[1:]
    ab = np.zeros((3, N - 1), complex)
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :-1] = -r
    try:
        sol = solve_banded((1, 1), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinearSolveError(f"Crank-Nicolson solve failed: {exc}") from exc
    out = np.zeros_like(psi)
    out[1:-1] = sol
    return out


def nls_step(state: NlsState, dt: float, cubic: bool = True, method: str = "spectral") -> NlsState:
    """Strang step: half phase rotation, Crank-Nicolson for i psi_yy, half rotation."""
    if method not in ("spectral", "fd"):
        raise ValidationError(f"method must be 'spectral' or 'fd': got {method!r}")
    psi = state.psi
    if cubic:
        psi = psi * np.exp(-0.5j * dt * np.abs(psi) ** 2)
    psi = (_cn_spectral if method == "spectral" else _cn_fd)(psi, dt, state.length)
    if cubic:
        psi = psi * np.exp(-0.5j * dt * np.abs(psi) ** 2)
    if not np.all(np.isfinite(psi)):
        raise LinearSolveError("non-finite NLS state")
    psi[0] = psi[-1] = 0.0
    return NlsState(psi, state.t + dt, state.length)


def run_nls(state: NlsState, dt: float, steps: int, cubic: bool = True, method: str = "spectral",
            store_every: int | None = None) -> list[NlsState]:
    out = [state.copy()]
    s = state
    t0 = state.t
    for k in range(1, steps + 1):
        s = nls_step(s, dt, cubic, method)
        s.t = t0 + k * dt
        if store_every and k % store_every == 0 and k != steps:
            out.append(s.copy())
    out.append(s)
    return out


def _trap_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def nls_mass(state: NlsState) -> float:
    h = state.length / (state.psi.size - 1)
    return float(np.dot(_trap_weights(state.psi.size, h), np.abs(state.psi) ** 2))


def nls_energy(state: NlsState) -> float:
    """int (|psi_y|^2/2 + |psi|^4/4) with spectral derivative."""
    N = state.psi.size - 1
    h = state.length / N
    inner = state.psi[1:-1]
    c = (dst(inner.real, type=1) + 1j * dst(inner.imag, type=1)) / N
    k = np.arange(1, N) * np.pi / state.length
    grad = 0.5 * state.length * np.sum(np.abs(c * k) ** 2)
    quart = np.dot(_trap_weights(N + 1, h), np.abs(state.psi) ** 4)
    return float(0.5 * grad + 0.25 * quart)


# --------------------------------------------------------------------------
# transverse velocity


def transverse_step(w, rho, m, dt: float, mu: float, dx: float, rho_next=None, mass_flux=None):
    """Advance w (shape (N,) or (k, N)) by (rho w)_t + (rho u w)_x = (mu w_x)_x.

    ``mass_flux`` are the N+1 interface mass fluxes (walls included) of the
    Euler update that produced ``rho_next``; by default the centred average of
    m with zero wall flux, and rho_next from the discrete continuity equation.
    Vacuum cells (rho_next < 1e-10) take w from their upwind neighbour.
    """
    w = np.asarray(w, float)
    squeeze = w.ndim == 1
    W = np.atleast_2d(w)
    rho = np.asarray(rho, float)
    N = rho.size
    if mass_flux is None:
        mass_flux = np.zeros(N + 1)
        mass_flux[1:-1] = 0.5 * (m[1:] + m[:-1])
    mf = np.asarray(mass_flux, float)
    if rho_next is None:
        rho_next = rho - dt / dx * (mf[1:] - mf[:-1])
    rho_next = np.asarray(rho_next, float)
    pos, neg = np.maximum(mf[1:-1], 0.0), np.minimum(mf[1:-1], 0.0)
    G = np.zeros((W.shape[0], N + 1))
    G[:, 1:-1] = pos * W[:, :-1] + neg * W[:, 1:]
    mom = rho * W - dt / dx * (G[:, 1:] - G[:, :-1])
    r = dt * mu / dx**2
    ab = np.zeros((3, N))
    ab[0, 1:] = -r
    ab[1, :] = rho_next + 2.0 * r
    ab[1, 0] += r   # ghost w_{-1} = -w_0 (w = 0 on the wall face)
    ab[1, -1] += r
    ab[2, :-1] = -r
    # empty rows (vacuum without diffusion) are overwritten below
    ab[1] = np.where(ab[1] > 0.0, ab[1], 1.0)
    try:
        out = solve_banded((1, 1), ab, mom.T).T
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinearSolveError(f"transverse diffusion solve failed: {exc}") from exc
    vac = np.flatnonzero(rho_next < VACUUM)
    for j in vac:
        flow = mf[j] + mf[j + 1]
        src = j - 1 if flow > 0 else j + 1
        if 0 <= src < N:
            out[:, j] = out[:, src]
    return out[0] if squeeze else out


# --------------------------------------------------------------------------
# thermal variational inequality


@dataclass
class ThermalResidual:
    value: float
    vacuum_measure: float
    parts: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


def default_thermal_test(length: float, t_end: float):
    """phi = (1 + cos(pi x/L))/2 (1 - t/T)^2 and its derivatives (phi_x = 0 at the walls)."""

    def phi(x, t):
        a = np.pi * x / length
        tt = (1.0 - t / t_end) ** 2
        ttd = -2.0 * (1.0 - t / t_end) / t_end
        sp = 0.5 * (1.0 + np.cos(a))
        return (sp * tt, sp * ttd, -0.5 * np.pi / length * np.sin(a) * tt,
                -0.5 * (np.pi / length) ** 2 * np.cos(a) * tt)

    return phi


def _x_weights(x, domain):
    """Trapezoid weights on the points x, or midpoint weights when ``domain``
    is given and x are the centres of uniform cells covering it."""
    if domain is None:
        w = np.zeros_like(x)
        d = np.diff(x)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
        return w
    a, b = domain
    dx = (b - a) / x.size
    if not np.allclose(x, a + (np.arange(x.size) + 0.5) * dx, rtol=0, atol=1e-9 * (b - a)):
        raise ValidationError("with a domain, points must be the centres of uniform cells")
    return np.full(x.size, dx)


def thermal_inequality_residual(t, x, rho, u, w, theta, p, test_fn: Callable | None = None,
                                h=None, domain=None) -> ThermalResidual:
    """int int [rho Q phi_t + rho u Q phi_x + K(theta) phi_xx] + int int mu |w_x|^2 phi
    (+ nu |h_x|^2 phi when h is given) + int rho_0 Q(theta_0) phi(0).

    Fields are (T, X) arrays (w and h: (T, k, X)); a variational solution has
    residual <= 0.  ``test_fn(x, t)`` returns (phi, phi_t, phi_x, phi_xx).
    The x-domain is [x[0], x[-1]] (trapezoid) unless ``domain`` is given, in
    which case x are cell centres (midpoint rule).
    """
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    rho, u, theta = (np.asarray(a, float) for a in (rho, u, theta))
    if rho.shape != (t.size, x.size):
        raise ValidationError(f"fields must have shape (times, points) = {(t.size, x.size)}")
    wx_ = _x_weights(x, domain)
    a, b = (x[0], x[-1]) if domain is None else domain
    phi_fn = test_fn or default_thermal_test(b - a, t[-1])
    phi, phi_t, phi_x, phi_xx = (np.broadcast_to(f, rho.shape) for f in phi_fn(x[None, :] - a, t[:, None]))
    top = max(float(np.max(np.abs(phi))), 1e-300)
    if np.min(phi) < -1e-14 * top:
        raise ValidationError("test function must be nonnegative")
    edge_x = phi_fn(np.array([0.0, b - a])[None, :], t[:, None])[2]
    if np.max(np.abs(edge_x)) > 1e-8 * max(top, float(np.max(np.abs(phi_x)))):
        raise ValidationError("test function must have phi_x = 0 at the boundary")
    if np.max(np.abs(phi[-1])) > 1e-10 * top:
        raise ValidationError("test function must vanish at the final time")
    I2 = lambda f: float(np.trapezoid(f @ wx_, t))
    laws = p.laws
    Q = laws.q_energy(theta, p)
    K = laws.kappa_primitive(theta, p)
    W = np.asarray(w, float)
    wx = np.gradient(W, x, axis=-1, edge_order=2)
    wx2 = np.sum(wx**2, axis=-2) if W.ndim == 3 else wx**2
    parts = {
        "transport": I2(rho * Q * phi_t + rho * u * Q * phi_x),
        "conduction": I2(K * phi_xx),
        "shear_heating": I2(p.mu * wx2 * phi),
        "initial": float((rho[0] * Q[0] * phi[0]) @ wx_),
    }
    if h is not None:
        H = np.asarray(h, float)
        hx = np.gradient(H, x, axis=-1, edge_order=2)
        hx2 = np.sum(hx**2, axis=-2) if H.ndim == 3 else hx**2
        parts["magnetic_heating"] = I2(p.nu * hx2 * phi)
    vac = I2((rho < VACUUM).astype(float))
    return ThermalResidual(value=float(sum(parts.values())), vacuum_measure=vac, parts=parts)


def limit_energy(x, rho, u, w, theta, p, domain=None) -> float:
    """int rho (P_e(rho) + Q(theta) + u^2/2 + |w|^2/2) dx at one time
    (x-quadrature as in thermal_inequality_residual)."""
    rho = np.asarray(rho, float)
    W = np.atleast_2d(np.asarray(w, float))
    pe = p.a * np.maximum(rho, 0.0) ** (p.gamma - 1.0) / (p.gamma - 1.0)
    Q = p.laws.q_energy(np.asarray(theta, float), p)
    dens = rho * (pe + Q + 0.5 * np.asarray(u) ** 2 + 0.5 * np.sum(W**2, axis=0))
    return float(dens @ _x_weights(np.asarray(x, float), domain))


# --------------------------------------------------------------------------
# coupled limit run


@dataclass
class LimitRun:
    times: np.ndarray
    euler: list
    w: list
    nls: list
    steps: int = 0


def run_limit(euler0: EulerState, w0, nls0: NlsState, times, p, cfl: float = 0.4, flux: str = "llf",
              nls_dt: float = 1e-4, nls_method: str = "spectral") -> LimitRun:
    """Euler + transverse w (driven by the Euler mass fluxes) + cubic NLS,
    sampled exactly at ``times`` (increasing, first may be 0)."""
    times = np.asarray(times, float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValidationError("sample times must be increasing and nonnegative")
    s = euler0.copy()
    w = np.atleast_2d(np.asarray(w0, float)).copy()
    z = nls0.copy()
    out = LimitRun(times=times, euler=[], w=[], nls=[])
    steps = 0
    for T in times:
        while s.t < T - 1e-14 * max(1.0, T):
            dt = min(stable_dt(s, p, cfl), T - s.t)
            nxt, (fr, _) = euler_step(s, dt, p, flux=flux, return_fluxes=True)
            w = transverse_step(w, s.rho, s.m, dt, p.mu, s.dx, rho_next=nxt.rho, mass_flux=fr)
            s = nxt
            steps += 1
        s.t = float(T)
        k = int(round((T - z.t) / nls_dt))
        if k > 0:
            h = (T - z.t) / k
            z = run_nls(z, h, k, method=nls_method)[-1]
        z.t = float(T)
        out.euler.append(s.copy())
        out.w.append(w.copy())
        out.nls.append(z.copy())
    out.steps = steps
    return out
