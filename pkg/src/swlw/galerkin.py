"""Faedo-Galerkin spectral solver for the Lagrangian MHD + Schrodinger system.

Unknowns on the mass interval (0, 1):

    u, w, h, psi   sine series  sum_{k=1..n} c_k sin(k pi y)
    theta          cosine series sum_{j=0..n} c_j cos(j pi y)
    v              nodal values at M equispaced collocation nodes (v_t = u_y)

Nonlinear terms are evaluated at the nodes and projected back with the
discrete (trapezoidal) inner product.  Because every projection is the
orthogonal projection for that inner product, the semidiscrete system keeps
the discrete mass exactly and the discrete total energy exactly when
C_theta is affine in theta and the magnetic equation uses the
``conservative`` form; the default ``paper`` form is conservative up to
spectral truncation error.

Time stepping is exponential: the diffusive blocks and the linear
Schrodinger operator are frozen every ``refresh_every`` steps and treated
exactly through matrix functions, the remainder by four explicit stages.
``etd-rk4`` (default) is the Cox-Matthews exponential time differencing
scheme, which keeps strongly damped modes slaved correctly to their forcing;
``if-rk4`` is the integrating-factor (Lawson) variant; ``rk4`` is plain RK4.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.linalg import solve

from .constitutive import CouplingFns, GasParams
from .errors import DivergenceError, PositivityError, ShapeError, ValidationError
from .snapshot import FieldSnapshot

log = logging.getLogger(__name__)

V_FLOOR = 1e-8
THETA_FLOOR = 1e-8
H_FORMS = ("paper", "conservative")
INTEGRATORS = ("etd-rk4", "if-rk4", "rk4")
PROFILES = ("smooth-periodic", "gaussian-psi", "near-constant")


# --------------------------------------------------------------------------
# spectral grid


class SpectralGrid:
    """Collocation nodes, basis tables and projection matrices for (n, M)."""

    def __init__(self, n: int, M: int, dealias: bool = True):
        if n < 1 or M < n + 2:
            raise ValidationError(f"need n >= 1 and at least n+2 nodes: n={n}, nodes={M}")
        self.n, self.M, self.dealias = n, M, dealias
        N = M - 1
        y = np.linspace(0.0, 1.0, M)
        wq = np.full(M, 1.0 / N)
        wq[[0, -1]] = 0.5 / N
        self.y, self.wq = y, wq
        k = np.arange(1, n + 1)
        j = np.arange(0, n + 1)
        self.kpi = k * np.pi
        self.jpi = j * np.pi
        ky = np.outer(y, k * np.pi)
        jy = np.outer(y, j * np.pi)
        self.S = np.sin(ky)
        self.Sy = np.cos(ky) * self.kpi
        self.Syy = -self.S * self.kpi**2
        self.C = np.cos(jy)
        self.Cy = -np.sin(jy) * self.jpi
        self.PS = 2.0 * (self.S * wq[:, None]).T
        pc = 2.0 * (self.C * wq[:, None]).T
        pc[0] *= 0.5
        self.PC = pc
        # P^S[dF/dy] for a nodal flux F: -k pi * 2 <F, cos(k pi y)>
        self.PSD = -self.kpi[:, None] * 2.0 * (np.cos(ky) * wq[:, None]).T
        # weighted sine table for Galerkin mass matrices
        self.SW = self.S * wq[:, None]
        # nodal derivative of the full cosine / sine interpolants
        kk = np.arange(1, N)
        if dealias:
            kk = kk[kk <= (2 * N) // 3]
        kky = np.outer(y, kk * np.pi)
        cosT = 2.0 * (np.cos(kky) * wq[:, None]).T
        sinT = 2.0 * (np.sin(kky) * wq[:, None]).T
        self.Dc = -(np.sin(kky) * (kk * np.pi)) @ cosT
        self.Ds = (np.cos(kky) * (kk * np.pi)) @ sinT
        # full cosine interpolant coefficients for nodal v (DCT-I), modes 0..N
        kall = np.arange(0, N + 1)
        ct = 2.0 * (np.cos(np.outer(kall * np.pi, y)) * wq[None, :])
        ct[0] *= 0.5
        ct[-1] *= 0.5
        self.v_dct = ct
        self.kall = kall

    # evaluation of series at arbitrary points
    def sine_eval(self, coef, y, deriv: int = 0):
        ky = np.outer(np.asarray(y, float), self.kpi)
        if deriv == 0:
            B = np.sin(ky)
        elif deriv == 1:
            B = np.cos(ky) * self.kpi
        else:
            B = -np.sin(ky) * self.kpi**2
        return np.asarray(coef) @ B.T

    def cosine_eval(self, coef, y, deriv: int = 0):
        jy = np.outer(np.asarray(y, float), self.jpi)
        B = np.cos(jy) if deriv == 0 else -np.sin(jy) * self.jpi
        return np.asarray(coef) @ B.T

    def nodal_cosine_coef(self, f):
        """All N+1 cosine-interpolant coefficients of nodal data."""
        return self.v_dct @ f

    def nodal_eval(self, f, y, deriv: int = 0, integral: bool = False):
        """Evaluate the cosine interpolant of nodal data (or its derivative or
        its integral from 0) at arbitrary points."""
        c = self.nodal_cosine_coef(f)
        kp = self.kall * np.pi
        ky = np.outer(np.asarray(y, float), kp)
        if integral:
            B = np.empty_like(ky)
            B[:, 0] = np.asarray(y, float)
            B[:, 1:] = np.sin(ky[:, 1:]) / kp[1:]
        elif deriv == 0:
            B = np.cos(ky)
        else:
            B = -np.sin(ky) * kp
        return B @ c


@lru_cache(maxsize=16)
def get_grid(n: int, M: int, dealias: bool = True) -> SpectralGrid:
    return SpectralGrid(n, M, dealias)


def project_sine(f, n: int, grid: SpectralGrid | None = None):
    """Discrete sine coefficients (modes 1..n) of nodal data on the uniform grid."""
    f = np.asarray(f)
    if grid is None:
        grid = get_grid(n, f.shape[-1], False)
    if f.shape[-1] != grid.M:
        raise ShapeError(f"expected {grid.M} nodes, got {f.shape[-1]}")
    return f @ grid.PS.T


def project_cosine(f, n: int, grid: SpectralGrid | None = None):
    """Discrete cosine coefficients (modes 0..n) of nodal data on the uniform grid."""
    f = np.asarray(f)
    if grid is None:
        grid = get_grid(n, f.shape[-1], False)
    if f.shape[-1] != grid.M:
        raise ShapeError(f"expected {grid.M} nodes, got {f.shape[-1]}")
    return f @ grid.PC.T


# --------------------------------------------------------------------------
# state and configuration


@dataclass
class GalerkinState:
    t: float
    u: np.ndarray
    w: np.ndarray
    h: np.ndarray
    theta: np.ndarray
    psi: np.ndarray
    v: np.ndarray

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def M(self) -> int:
        return self.v.shape[0]

    def copy(self) -> "GalerkinState":
        return GalerkinState(self.t, self.u.copy(), self.w.copy(), self.h.copy(),
                             self.theta.copy(), self.psi.copy(), self.v.copy())

    # flat real layout: u | w | h | theta | Re psi | Im psi | v
    def pack(self) -> np.ndarray:
        return np.concatenate([self.u, self.w.ravel(), self.h.ravel(), self.theta,
                               self.psi.real, self.psi.imag, self.v])

    @staticmethod
    def unpack(x: np.ndarray, n: int, M: int, t: float) -> "GalerkinState":
        o = np.cumsum([0, n, 2 * n, 2 * n, n + 1, n, n, M])
        return GalerkinState(
            t=t,
            u=x[o[0]:o[1]],
            w=x[o[1]:o[2]].reshape(2, n),
            h=x[o[2]:o[3]].reshape(2, n),
            theta=x[o[3]:o[4]],
            psi=x[o[4]:o[5]] + 1j * x[o[5]:o[6]],
            v=x[o[6]:o[7]],
        )


@dataclass
class SolverConfig:
    params: GasParams = field(default_factory=GasParams)
    coupling: CouplingFns = field(default_factory=CouplingFns)
    n: int = 32
    dt: float = 1e-4
    t_end: float = 1.0
    collocation_points: int | None = None
    dealias: bool = True
    monitor_every: int = 10
    snapshot_every: int | None = None
    initial_data: dict = field(default_factory=lambda: {"profile": "smooth-periodic"})
    h_form: str = "paper"
    integrator: str = "etd-rk4"
    refresh_every: int = 10
    potential_factor: float = 2.0
    v_floor: float = V_FLOOR
    theta_floor: float = THETA_FLOOR

    @property
    def nodes(self) -> int:
        return self.collocation_points if self.collocation_points else 2 * self.n + 2

    @property
    def grid(self) -> SpectralGrid:
        return get_grid(self.n, self.nodes, self.dealias)

    def violations(self) -> list[str]:
        out = list(self.params.violations(viscous=True))
        out += self.coupling.violations()
        if self.n < 1:
            out.append(f"n >= 1 required: n={self.n}")
        if self.dealias and self.nodes < 2 * self.n + 1:
            out.append(f"collocation_points >= 2n+1 required with dealias: points={self.nodes}, n={self.n}")
        if self.nodes < self.n + 2:
            out.append(f"collocation_points >= n+2 required: points={self.nodes}, n={self.n}")
        if not self.dt > 0:
            out.append(f"dt > 0 required: dt={self.dt}")
        if self.t_end < 0:
            out.append(f"t_end >= 0 required: t_end={self.t_end}")
        if self.monitor_every < 1:
            out.append("monitor_every >= 1 required")
        if self.refresh_every < 1:
            out.append("refresh_every >= 1 required")
        if self.h_form not in H_FORMS:
            out.append(f"h_form must be one of {H_FORMS}: got {self.h_form!r}")
        if self.integrator not in INTEGRATORS:
            out.append(f"integrator must be one of {INTEGRATORS}: got {self.integrator!r}")
        prof = self.initial_data.get("profile")
        if prof not in PROFILES and not callable(self.initial_data.get("builder")):
            out.append(f"initial_data.profile must be one of {PROFILES}: got {prof!r}")
        return out

    def validate(self) -> "SolverConfig":
        bad = self.violations()
        if bad:
            raise ValidationError(bad)
        return self

    def stability_number(self) -> float:
        return self.params.epsilon * self.n**2 * math.pi**2 * self.dt


# --------------------------------------------------------------------------
# initial data

_GL_T, _GL_W = np.polynomial.legendre.leggauss(64)


def _cumulative_mass(rho0: Callable, x):
    x = np.asarray(x, float)
    pts = 0.5 * x[:, None] * (_GL_T[None, :] + 1.0)
    return 0.5 * x * (rho0(pts) @ _GL_W)


def specific_volume_from_density(rho0: Callable, y, tol: float = 1e-15):
    """Nodal v(y) = 1/rho0(x(y)) for an Eulerian density on (0,1); y must lie in
    [0, total mass].  Newton iteration on the exact cumulative mass."""
    y = np.asarray(y, float)
    d = float(_cumulative_mass(rho0, np.array([1.0]))[0])
    x = np.clip(y / d, 0.0, 1.0)
    for _ in range(60):
        r = _cumulative_mass(rho0, x) - y
        dx = r / rho0(x)
        x = np.clip(x - dx, 0.0, 1.0)
        if np.max(np.abs(dx)) < tol:
            break
    return 1.0 / rho0(x), x


def _profile_fields(spec: dict, y):
    """Nodal initial fields (u, w, h, theta, psi, v) for a named profile."""
    prof = spec.get("profile", "smooth-periodic")
    s = lambda k: np.sin(k * np.pi * y)
    if prof == "smooth-periodic":
        A = spec.get("rho_amplitude", 0.2)
        # optional Gaussian mollification of rho_0 (width rho_smoothing) acts on its single mode
        A *= math.exp(-0.5 * (2.0 * np.pi * spec.get("rho_smoothing", 0.0)) ** 2)
        rho0 = lambda x: 1.0 + A * np.cos(2.0 * np.pi * x)
        v, _ = specific_volume_from_density(rho0, y)
        u = spec.get("u_amplitude", 0.1) * s(1)
        wa = spec.get("w_amplitude", 0.05)
        ha = spec.get("h_amplitude", 0.1)
        w = np.stack([wa * s(1), 0.6 * wa * s(2)])
        h = np.stack([ha * s(1), 0.5 * ha * s(2)])
        theta = spec.get("theta_mean", 1.0) + spec.get("theta_amplitude", 0.1) * np.cos(np.pi * y)
        pa = spec.get("psi_amplitude", 0.5)
        psi = pa * s(1) + 0.4j * pa * s(2)
    elif prof == "gaussian-psi":
        width = spec.get("psi_width", 0.08)
        k0 = spec.get("psi_wavenumber", 10.0)
        psi = spec.get("psi_amplitude", 1.0) * np.exp(-((y - 0.5) ** 2) / (2 * width**2) + 1j * k0 * y)
        psi = psi * s(1)
        v = np.ones_like(y)
        u = np.zeros_like(y)
        w = np.zeros((2, y.size))
        h = np.zeros((2, y.size))
        theta = np.full_like(y, spec.get("theta_mean", 1.0))
    elif prof == "near-constant":
        a = spec.get("perturbation", 1e-3)
        v = 1.0 + a * np.cos(2 * np.pi * y)
        u = a * s(1)
        w = np.stack([a * s(1), a * s(2)])
        h = np.stack([a * s(1), np.zeros_like(y)])
        theta = 1.0 + a * np.cos(np.pi * y)
        psi = a * (s(1) + 1j * s(2))
    else:
        raise ValidationError(f"unknown initial-data profile {prof!r}")
    return u, w, h, theta, psi, v


def initial_state(cfg: SolverConfig) -> GalerkinState:
    """Project the configured initial data onto the Galerkin spaces."""
    g = cfg.grid
    spec = cfg.initial_data
    if callable(spec.get("builder")):
        u, w, h, theta, psi, v = spec["builder"](g.y)
    else:
        u, w, h, theta, psi, v = _profile_fields(spec, g.y)
    st = GalerkinState(
        t=0.0,
        u=project_sine(u, cfg.n, g),
        w=project_sine(np.asarray(w, float), cfg.n, g),
        h=project_sine(np.asarray(h, float), cfg.n, g),
        theta=project_cosine(theta, cfg.n, g),
        psi=project_sine(np.asarray(psi, complex), cfg.n, g),
        v=np.array(v, dtype=float),
    )
    if cfg.params.beta == 0.0:
        st.h[:] = 0.0
    return st


# --------------------------------------------------------------------------
# right-hand side


@dataclass
class NodalFields:
    v: np.ndarray
    rho: np.ndarray
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


def nodal_fields(state: GalerkinState, grid: SpectralGrid) -> NodalFields:
    return NodalFields(
        v=state.v,
        rho=1.0 / state.v,
        u=grid.S @ state.u,
        uy=grid.Sy @ state.u,
        w=state.w @ grid.S.T,
        wy=state.w @ grid.Sy.T,
        h=state.h @ grid.S.T,
        hy=state.h @ grid.Sy.T,
        theta=grid.C @ state.theta,
        thetay=grid.Cy @ state.theta,
        psi=grid.S @ state.psi,
        psiy=grid.Sy @ state.psi,
    )


def check_positivity(f: NodalFields, cfg: SolverConfig, grid: SpectralGrid, t: float):
    for name, arr, floor in (("v", f.v, cfg.v_floor), ("theta", f.theta, cfg.theta_floor)):
        bad = ~(arr > floor)
        if np.any(bad):
            j = int(np.flatnonzero(bad)[0])
            if not np.all(np.isfinite(arr)):
                raise DivergenceError(name, t)
            raise PositivityError(name, grid.y[j], t, float(arr[j]))


def assemble_rhs(state: GalerkinState, cfg: SolverConfig, nodal: NodalFields | None = None) -> GalerkinState:
    """Time derivatives of every coefficient vector and of the nodal v."""
    g = cfg.grid
    p = cfg.params
    laws = p.laws
    f = nodal if nodal is not None else nodal_fields(state, g)
    check_positivity(f, cfg, g, state.t)
    v, rho, uy = f.v, f.rho, f.uy
    th = f.theta
    ptheta = p.delta * laws.p_theta(rho, p)
    pres = p.a * rho**p.gamma + th * ptheta
    h2 = np.sum(f.h**2, axis=0)
    z = np.abs(f.psi) ** 2
    gv, g1, _ = cfg.coupling.g_all(v)
    Hz, H1, _ = cfg.coupling.h_all(z)

    flux_u = -pres - 0.5 * p.beta * h2 + p.alpha * g1 * Hz + p.epsilon * uy / v
    du = g.PSD @ flux_u

    dw = p.beta * (f.hy @ g.PS.T) + (p.mu * f.wy / v) @ g.PSD.T

    if p.beta > 0.0:
        Y = -p.beta * uy * f.h + p.beta * f.wy + (p.nu * f.hy / v) @ g.Dc.T
        if cfg.h_form == "paper":
            dh = (Y / v) @ g.PS.T / p.beta
        else:
            Mv = g.SW.T @ (g.S * v[:, None])
            dh = solve(p.beta * Mv, (Y @ g.SW).T, assume_a="pos").T
    else:
        dh = np.zeros_like(state.h)

    G = laws.kappa(th, p) * f.thetay / v
    X = (-th * ptheta * uy + g.Ds @ G
         + (p.epsilon * uy**2 + p.mu * np.sum(f.wy**2, axis=0) + p.nu * np.sum(f.hy**2, axis=0)) / v)
    dtheta = g.PC @ (X / laws.c_theta(th, p))

    nl = z * f.psi + cfg.potential_factor * p.alpha * gv * H1 * f.psi
    dpsi = -1j * (g.kpi**2 * state.psi + g.PS @ nl)

    return GalerkinState(t=state.t, u=du, w=dw, h=dh, theta=dtheta, psi=dpsi, v=uy.copy())


# --------------------------------------------------------------------------
# exponential integrators


def phi_functions(z: np.ndarray, upto: int = 3) -> list[np.ndarray]:
    """phi_0..phi_upto at complex points z, phi_k(z) = sum_j z^j / (j+k)!.

    Closed forms away from 0 and a Taylor series near 0 (no cancellation)."""
    z = np.asarray(z, dtype=complex)
    out = [np.exp(z)]
    small = np.abs(z) < 0.5
    zs = np.where(small, 0.0, z)
    prev = out[0]
    for k in range(1, upto + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            direct = (prev - 1.0 / math.factorial(k - 1)) / np.where(small, 1.0, zs)
        series = np.zeros_like(z)
        term = np.full_like(z, 1.0 / math.factorial(k))
        for j in range(25):
            series = series + term
            term = term * z / (j + k + 1)
        cur = np.where(small, series, direct)
        out.append(cur)
        prev = cur
    return out


def _matrix_functions(A: np.ndarray, dt: float, scalar_fns) -> list[np.ndarray]:
    """f(A dt) for each scalar function in ``scalar_fns`` via an eigendecomposition.

    The frozen diffusion blocks have real spectra and well-conditioned
    eigenvectors (they are similar to symmetric negative semidefinite
    matrices up to small projection errors)."""
    if not np.any(A):
        z = np.zeros(A.shape[0], complex)
        return [np.diag(f(z).real) for f in scalar_fns]
    lam, V = np.linalg.eig(A)
    Vinv = np.linalg.inv(V)
    z = lam * dt
    return [((V * f(z)) @ Vinv).real for f in scalar_fns]


def _etd_weights(z):
    e, p1, p2, p3 = phi_functions(z)
    return e, p1, p1 - 3 * p2 + 4 * p3, p2 - 2 * p3, 4 * p3 - p2


class LinearPart:
    """Frozen stiff linear operator L and the matrix functions the steppers need.

    For ``etd-rk4`` the stored blocks are exp(L dt/2), phi_1(L dt/2), exp(L dt)
    and the three Cox-Matthews weights; for ``if-rk4`` only the exponentials.
    """

    BLOCKS = ("Au", "Aw", "Ah", "At")

    def __init__(self, state: GalerkinState, cfg: SolverConfig, dt: float):
        g = cfg.grid
        p = cfg.params
        n = cfg.n
        self.n, self.M = n, g.M
        self.kind = cfg.integrator
        if cfg.integrator == "rk4":
            self.A = None
            return
        v = state.v
        th = g.C @ state.theta
        self.Au = g.PSD @ ((p.epsilon / v)[:, None] * g.Sy)
        self.Aw = g.PSD @ ((p.mu / v)[:, None] * g.Sy)
        if p.beta > 0.0:
            inner = g.Dc @ ((p.nu / v)[:, None] * g.Sy)
            if cfg.h_form == "paper":
                self.Ah = g.PS @ (inner / v[:, None]) / p.beta
            else:
                Mv = g.SW.T @ (g.S * v[:, None])
                self.Ah = solve(p.beta * Mv, g.SW.T @ inner, assume_a="pos")
        else:
            self.Ah = np.zeros((n, n))
        kap = p.laws.kappa(th, p)
        cth = p.laws.c_theta(th, p)
        self.At = g.PC @ ((1.0 / cth)[:, None] * (g.Ds @ ((kap / v)[:, None] * g.Cy)))
        self.lam_psi = -1j * g.kpi**2
        self.A = True
        if self.kind == "if-rk4":
            fns = [lambda z: np.exp(0.5 * z)]
            names = ("Eh",)
        else:
            fns = [lambda z: np.exp(0.5 * z), lambda z: phi_functions(0.5 * z, 1)[1],
                   lambda z: _etd_weights(z)[0], lambda z: _etd_weights(z)[2],
                   lambda z: _etd_weights(z)[3], lambda z: _etd_weights(z)[4]]
            names = ("Eh", "P1h", "Ef", "F1", "F2", "F3")
        self.mats = {nm: {} for nm in names}
        for b in self.BLOCKS:
            for nm, m in zip(names, _matrix_functions(getattr(self, b), dt, fns)):
                self.mats[nm][b] = m
        if self.kind == "if-rk4":
            self.mats["Ef"] = {b: m @ m for b, m in self.mats["Eh"].items()}
        zp = self.lam_psi * dt
        self.psi = {"Eh": np.exp(0.5 * zp), "Ef": np.exp(zp)}
        if self.kind == "etd-rk4":
            self.psi["P1h"] = phi_functions(0.5 * zp, 1)[1]
            _, _, self.psi["F1"], self.psi["F2"], self.psi["F3"] = _etd_weights(zp)

    def apply_L(self, s: GalerkinState) -> GalerkinState:
        return GalerkinState(s.t, self.Au @ s.u, s.w @ self.Aw.T, s.h @ self.Ah.T,
                             self.At @ s.theta, self.lam_psi * s.psi, np.zeros_like(s.v))

    def apply(self, name: str, s: GalerkinState, v_factor: float = 0.0) -> GalerkinState:
        """Apply the stored block matrix ``name``; v is multiplied by v_factor
        (v has no linear part: exp and phi_1 reduce to 1, each ETD weight to 1/6)."""
        E = self.mats[name]
        return GalerkinState(s.t, E["Au"] @ s.u, s.w @ E["Aw"].T, s.h @ E["Ah"].T,
                             E["At"] @ s.theta, self.psi[name] * s.psi, v_factor * s.v)

    def propagate(self, s: GalerkinState, full: bool) -> GalerkinState:
        if self.A is None:
            return s
        return self.apply("Ef" if full else "Eh", s, 1.0)


def _axpy(a: float, x: GalerkinState, y: GalerkinState, t: float) -> GalerkinState:
    """y + a x."""
    return GalerkinState(t, y.u + a * x.u, y.w + a * x.w, y.h + a * x.h,
                         y.theta + a * x.theta, y.psi + a * x.psi, y.v + a * x.v)


def _check_finite(s: GalerkinState):
    for name in ("u", "w", "h", "theta", "psi", "v"):
        if not np.all(np.isfinite(getattr(s, name))):
            raise DivergenceError(name, s.t)


class Stepper:
    """Advances a state by one step; caches the frozen linear part."""

    def __init__(self, cfg: SolverConfig, dt: float | None = None):
        self.cfg = cfg
        self.dt = cfg.dt if dt is None else dt
        self.lin: LinearPart | None = None
        self.count = 0
        self.last_rhs: GalerkinState | None = None

    def remainder(self, s: GalerkinState) -> tuple[GalerkinState, GalerkinState]:
        f = assemble_rhs(s, self.cfg)
        if self.lin.A is None:
            return f, f
        Ls = self.lin.apply_L(s)
        return _axpy(-1.0, Ls, f, s.t), f

    def step(self, s: GalerkinState) -> GalerkinState:
        if self.lin is None or self.count % self.cfg.refresh_every == 0:
            self.lin = LinearPart(s, self.cfg, self.dt)
        self.count += 1
        if self.lin.kind == "etd-rk4":
            out = self._etd(s)
        else:
            out = self._lawson(s)
        # exact reset of the clock to avoid drift from repeated additions
        out.t = s.t + self.dt
        _check_finite(out)
        check_positivity(nodal_fields(out, self.cfg.grid), self.cfg, self.cfg.grid, out.t)
        return out

    def _lawson(self, s):
        # with no linear part (plain rk4) the propagators are the identity
        dt = self.dt
        P = self.lin.propagate
        t0 = s.t
        k1, f0 = self.remainder(s)
        self.last_rhs = f0
        Ex = P(s, False)
        a = _axpy(0.5 * dt, P(k1, False), Ex, t0 + 0.5 * dt)
        k2, _ = self.remainder(a)
        b = _axpy(0.5 * dt, k2, Ex, t0 + 0.5 * dt)
        k3, _ = self.remainder(b)
        c = _axpy(dt, P(k3, False), P(s, True), t0 + dt)
        k4, _ = self.remainder(c)
        acc = _axpy(2.0, P(k2, False), P(k1, True), t0)
        acc = _axpy(2.0, P(k3, False), acc, t0)
        acc = _axpy(1.0, k4, acc, t0)
        return _axpy(dt / 6.0, acc, P(s, True), t0 + dt)

    def _etd(self, s):
        # Cox-Matthews ETDRK4
        dt = self.dt
        L = self.lin
        t0 = s.t
        th = t0 + 0.5 * dt
        n0, f0 = self.remainder(s)
        self.last_rhs = f0
        Es = L.apply("Eh", s, 1.0)
        a = _axpy(0.5 * dt, L.apply("P1h", n0, 1.0), Es, th)
        na, _ = self.remainder(a)
        b = _axpy(0.5 * dt, L.apply("P1h", na, 1.0), Es, th)
        nb, _ = self.remainder(b)
        c = _axpy(0.5 * dt, L.apply("P1h", _axpy(-1.0, n0, _axpy(1.0, nb, nb, th), th), 1.0),
                  L.apply("Eh", a, 1.0), t0 + dt)
        nc, _ = self.remainder(c)
        mid = _axpy(1.0, na, nb, t0)
        mid = _axpy(1.0, mid, mid, t0)
        acc = _axpy(1.0, L.apply("F1", n0, 1.0 / 6.0), L.apply("F2", mid, 1.0 / 6.0), t0)
        acc = _axpy(1.0, L.apply("F3", nc, 1.0 / 6.0), acc, t0)
        return _axpy(dt, acc, L.apply("Ef", s, 1.0), t0 + dt)


def step(state: GalerkinState, cfg: SolverConfig) -> GalerkinState:
    """One time step of size cfg.dt (fresh linear part; use Stepper for runs)."""
    return Stepper(cfg).step(state)


# --------------------------------------------------------------------------
# reconstruction and frame change


def reconstruct(state: GalerkinState, cfg: SolverConfig, at=None) -> FieldSnapshot:
    """Evaluate every field at the requested Lagrangian nodes (default: collocation nodes)."""
    g = cfg.grid
    if at is None:
        f = nodal_fields(state, g)
        y, v = g.y, state.v
        u, w, h, th, psi = f.u, f.w, f.h, f.theta, f.psi
    else:
        y = np.asarray(at, float)
        v = g.nodal_eval(state.v, y)
        u = g.sine_eval(state.u, y)
        w = g.sine_eval(state.w, y)
        h = g.sine_eval(state.h, y)
        th = g.cosine_eval(state.theta, y)
        psi = g.sine_eval(state.psi, y)
    return FieldSnapshot("lagrangian", state.t, y.copy(), 1.0 / v, u, w, h, th, psi,
                         meta={"n": state.n, "nodes": g.M})


def lagrangian_of_eulerian(state: GalerkinState, cfg: SolverConfig, x, tol: float = 1e-14):
    """Mass coordinate y(x) of Eulerian points, inverting x(y) = int_0^y v
    (spectral cosine interpolant of v) by safeguarded Newton iteration."""
    g = cfg.grid
    x = np.asarray(x, float)
    c = g.nodal_cosine_coef(state.v)
    kp = g.kall * np.pi
    length = c[0]
    if np.any(x < -1e-12) or np.any(x > length + 1e-12):
        raise ValidationError("Eulerian points outside the current domain")
    x = np.clip(x, 0.0, length)
    xm = np.concatenate([[0.0], np.cumsum(0.5 * (state.v[1:] + state.v[:-1]) * np.diff(g.y))])
    y = np.interp(x, xm, g.y)
    for _ in range(50):
        ky = np.outer(y, kp)
        X = c[0] * y + np.sin(ky[:, 1:]) @ (c[1:] / kp[1:])
        V = np.cos(ky) @ c
        dy = (X - x) / V
        y = np.clip(y - dy, 0.0, 1.0)
        if np.max(np.abs(dy)) < tol:
            break
    return y


def to_eulerian(state: GalerkinState, cfg: SolverConfig, x) -> FieldSnapshot:
    """Fields at Eulerian points x (spectral evaluation at y(x))."""
    y = lagrangian_of_eulerian(state, cfg, x)
    snap = reconstruct(state, cfg, at=y)
    return FieldSnapshot("eulerian", state.t, np.asarray(x, float).copy(), snap.rho, snap.u, snap.w,
                         snap.h, snap.theta, snap.psi, meta={**snap.meta, "y_of_x": "spectral"})


# --------------------------------------------------------------------------
# run driver


@dataclass
class RunResult:
    states: list = field(default_factory=list)
    monitors: list = field(default_factory=list)
    final: GalerkinState | None = None
    steps: int = 0
    error: Exception | None = None


def run(cfg: SolverConfig, state: GalerkinState | None = None, on_record: Callable | None = None,
        on_state: Callable | None = None, keep_states: bool = True) -> RunResult:
    """Integrate to t_end, emitting monitor records every ``monitor_every`` steps.

    On a numerical failure the partial result is attached to the exception as
    ``exc.partial`` before it propagates.
    """
    from .invariants import Accumulator, measure

    cfg.validate()
    if cfg.integrator == "rk4" and cfg.stability_number() > 2.8:
        log.warning("explicit RK4 stability advisory: eps n^2 pi^2 dt = %.3g > 2.8", cfg.stability_number())
    if cfg.params.degenerate_thermal_pressure():
        log.warning("thermal pressure switched off (delta=0 or p0=0)")
    st = initial_state(cfg) if state is None else state
    nsteps = int(round(cfg.t_end / cfg.dt))
    snap_every = cfg.snapshot_every or cfg.monitor_every
    res = RunResult()
    acc = Accumulator()
    stepper = Stepper(cfg)

    def emit(s, k, rhs=None):
        rec = measure(s, cfg, acc, rhs=rhs)
        res.monitors.append(rec)
        if on_record:
            on_record(rec)

    try:
        emit(st, 0)
        if keep_states:
            res.states.append(st.copy())
        if on_state:
            on_state(st)
        t0 = st.t
        for k in range(1, nsteps + 1):
            st = stepper.step(st)
            st.t = t0 + k * cfg.dt
            res.steps = k
            if k % cfg.monitor_every == 0 or k == nsteps:
                emit(st, k)
            if k % snap_every == 0 or k == nsteps:
                if keep_states:
                    res.states.append(st.copy())
                if on_state:
                    on_state(st)
    except Exception as exc:
        res.final = st
        res.error = exc
        exc.partial = res
        raise
    res.final = st
    return res


def with_params(cfg: SolverConfig, **kw) -> SolverConfig:
    return replace(cfg, params=cfg.params.with_(**kw))
