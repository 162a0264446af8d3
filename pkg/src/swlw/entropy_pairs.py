"""Weak entropy kernel and entropy pairs of the isentropic Euler system.

For p = a rho^gamma write theta_g = (gamma-1)/2, Lambda = (3-gamma)/(2(gamma-1))
and c = k rho^theta_g with k = sqrt(a gamma)/theta_g (k = 1 for the normalised
constant a = (gamma-1)^2/(4 gamma)).  The kernel is

    chi(rho, u, s) = [c^2 - (s-u)^2]_+^Lambda

and the pair generated by a test function zeta is

    eta = rho int_{-1}^{1} zeta(u + c s) (1-s^2)^Lambda ds
    q   = rho int_{-1}^{1} (u + theta_g c s) zeta(u + c s) (1-s^2)^Lambda ds

evaluated with Gauss-Jacobi rules whose weight is exactly the kernel factor.
Test functions with compact support or kinks are integrated piecewise so the
rule never straddles a support edge or a kink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import roots_jacobi

from .errors import AccuracyError, DomainError, ValidationError

__all__ = [
    "TestFunction", "BUILTIN_ZETAS", "builtin_zeta", "bump", "sharp_zeta", "EntropyPairSpec",
    "chi", "entropy_pair", "entropy_pair_derivatives", "mechanical_pair", "pair_bounds_check",
    "kernel_mass", "s2_normalization", "DissipationBalance", "dissipation_balance_residual",
]

# the five test functions of the finite-energy entropy-solution definition
BUILTIN_ZETAS = ("+1", "-1", "+s", "-s", "s2")


@dataclass(frozen=True)
class TestFunction:
    """zeta with its first two derivatives.

    ``support`` is the closed interval outside which zeta vanishes identically
    (None: whole line); ``breakpoints`` are points where zeta is not smooth;
    ``degree`` is the polynomial degree when zeta is a polynomial (enables the
    exactness shortcut), else None.
    """

    name: str
    f: Callable
    d1: Callable
    d2: Callable
    support: tuple[float, float] | None = None
    breakpoints: tuple[float, ...] = ()
    degree: int | None = None
    sup_norm: float | None = None


def _poly(name, coef):
    c = np.asarray(coef, float)
    p = np.polynomial.Polynomial(c)
    p1, p2 = p.deriv(1), p.deriv(2)
    return TestFunction(name, lambda z: p(z), lambda z: p1(z) + 0.0 * z, lambda z: p2(z) + 0.0 * z,
                        degree=len(c) - 1)


def builtin_zeta(name: str) -> TestFunction:
    """One of +1, -1, +s, -s, s2, bump, sharp."""
    table = {"+1": [1.0], "1": [1.0], "-1": [-1.0], "+s": [0.0, 1.0], "s": [0.0, 1.0],
             "-s": [0.0, -1.0], "s2": [0.0, 0.0, 1.0], "s^2": [0.0, 0.0, 1.0]}
    if name in table:
        key = {"1": "+1", "s": "+s", "s^2": "s2"}.get(name, name)
        return _poly(key, table[name])
    if name == "bump":
        return bump()
    if name == "sharp":
        return sharp_zeta()
    raise ValidationError(f"unknown zeta {name!r}; expected one of {BUILTIN_ZETAS + ('bump', 'sharp')}")


def bump(lo: float = -1.0, hi: float = 1.0, height: float = 1.0) -> TestFunction:
    """C-infinity bump height * exp(1 - 1/(1-x^2)), x the affine image of z in (lo, hi)."""
    if not hi > lo:
        raise ValidationError(f"bump support needs lo < hi: got [{lo}, {hi}]")
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)

    def parts(z):
        x = (np.asarray(z, float) - mid) / half
        inside = np.abs(x) < 1.0
        xs = np.where(inside, x, 0.0)
        d = 1.0 - xs * xs
        e = np.where(inside, height * np.exp(1.0 - 1.0 / d), 0.0)
        # with f = exp(1 - 1/d): f' = g1 f, f'' = (g1^2 + g1') f
        g1 = -2.0 * xs / d**2
        g2 = -2.0 / d**2 - 8.0 * xs * xs / d**3
        return e, e * g1 / half, e * (g1 * g1 + g2) / half**2

    return TestFunction("bump", lambda z: parts(z)[0], lambda z: parts(z)[1], lambda z: parts(z)[2],
                        support=(lo, hi), sup_norm=abs(height))


def sharp_zeta() -> TestFunction:
    """zeta(z) = z|z|/2: C^1 only (kink of zeta'' at 0); integrated piecewise around 0."""
    return TestFunction("sharp", lambda z: 0.5 * z * np.abs(z), lambda z: np.abs(z) + 0.0,
                        lambda z: np.sign(z) + 0.0, breakpoints=(0.0,))


@lru_cache(maxsize=64)
def _jacobi(n: int, right: float, left: float):
    # weight (1-x)^right (1+x)^left on [-1, 1]
    x, w = roots_jacobi(n, right, left)
    return x, w


@dataclass(frozen=True)
class EntropyPairSpec:
    zeta: TestFunction
    gamma: float
    a: float | None = None
    nodes: int = 64
    rtol: float = 1e-8
    check: bool = True
    endpoint_regularized: bool = False

    def __post_init__(self):
        if isinstance(self.zeta, str):
            object.__setattr__(self, "zeta", builtin_zeta(self.zeta))
        errs = []
        if not self.gamma > 1.0:
            errs.append("gamma > 1 required")
        if self.a is not None and not self.a > 0:
            errs.append(f"a > 0 required: a={self.a}")
        if self.nodes < 2:
            errs.append("nodes >= 2 required")
        if errs:
            raise ValidationError(errs)

    @classmethod
    def from_params(cls, zeta, params, **kw) -> "EntropyPairSpec":
        return cls(zeta=zeta, gamma=params.gamma, a=params.a, **kw)

    @property
    def vartheta(self) -> float:
        return 0.5 * (self.gamma - 1.0)

    @property
    def Lambda(self) -> float:
        return (3.0 - self.gamma) / (2.0 * (self.gamma - 1.0))

    @property
    def gas_constant(self) -> float:
        return (self.gamma - 1.0) ** 2 / (4.0 * self.gamma) if self.a is None else self.a

    @property
    def speed_scale(self) -> float:
        """k in c = k rho^theta_g (sound speed over theta_g)."""
        return math.sqrt(self.gas_constant * self.gamma) / self.vartheta

    @property
    def exactness_degree(self) -> int:
        """Polynomial degree integrated exactly against (1-s^2)^Lambda."""
        return 2 * self.nodes - 1


def kernel_mass(Lam: float) -> float:
    """int_{-1}^{1} (1-s^2)^Lambda ds = B(1/2, Lambda+1)."""
    return float(beta_fn(0.5, Lam + 1.0))


def s2_normalization(spec: EntropyPairSpec) -> float:
    """eta^{s^2} / eta_* (the mechanical energy): equals 2 * kernel_mass."""
    return 2.0 * kernel_mass(spec.Lambda)


def chi(rho, u, s, spec: EntropyPairSpec):
    """Kernel [c^2 - (s-u)^2]_+^Lambda, c = k rho^theta_g; zero at vacuum."""
    rho, u, s = np.broadcast_arrays(np.asarray(rho, float), np.asarray(u, float), np.asarray(s, float))
    if np.any(rho < 0):
        raise DomainError("rho >= 0 required")
    c = spec.speed_scale * rho**spec.vartheta
    r = c * c - (s - u) ** 2
    Lam = spec.Lambda
    inside = (r > 0) & (rho > 0)
    out = np.zeros(r.shape)
    out[inside] = r[inside] ** Lam
    edge = (r == 0) & (rho > 0)
    if Lam < 0 and np.any(edge) and not spec.endpoint_regularized:
        raise DomainError("kernel is singular at |s-u| = c for gamma > 3; enable endpoint_regularized")
    if Lam == 0:
        out[edge] = 1.0
    return out if out.ndim else float(out)


def _pieces(spec: EntropyPairSpec, u, c):
    """Cut points in s for every state, shape (P, K): -1, mapped support edges
    and kinks (clipped to [-1, 1]), 1."""
    z = spec.zeta
    pts = list(z.breakpoints)
    if z.support is not None:
        pts += list(z.support)
    if not pts:
        return np.tile(np.array([-1.0, 1.0]), (u.size, 1))
    cs = np.where(c > 0, c, 1.0)
    cut = [(p - u) / cs for p in sorted(pts)]
    cuts = np.clip(np.stack(cut, axis=1), -1.0, 1.0)
    cuts = np.sort(cuts, axis=1)
    P = u.size
    return np.concatenate([-np.ones((P, 1)), cuts, np.ones((P, 1))], axis=1)


def _integrals(spec: EntropyPairSpec, u, c, nodes: int, derivs: bool):
    """int over s of zeta(u+cs) w, (u + theta c s) zeta w, and optionally
    zeta'(.) w, zeta''(.) w, s zeta''(.) w, with w = (1-s^2)^Lambda."""
    Lam = spec.Lambda
    th = spec.vartheta
    z = spec.zeta
    cuts = _pieces(spec, u, c)
    P, K = cuts.shape
    nout = 5 if derivs else 2
    acc = np.zeros((nout, P))
    for j in range(K - 1):
        lo, hi = cuts[:, j], cuts[:, j + 1]
        length = hi - lo
        live = length > 0
        if z.support is not None:
            zm = u + c * 0.5 * (lo + hi)
            live &= (zm > z.support[0]) & (zm < z.support[1])
        if not np.any(live):
            continue
        at_right = hi >= 1.0
        at_left = lo <= -1.0
        for rflag in (False, True):
            for lflag in (False, True):
                m = live & (at_right == rflag) & (at_left == lflag)
                if not np.any(m):
                    continue
                x, w = _jacobi(nodes, Lam if rflag else 0.0, Lam if lflag else 0.0)
                lo_m, L = lo[m], length[m]
                s = lo_m[:, None] + 0.5 * L[:, None] * (x[None, :] + 1.0)
                weight = w[None, :] * (0.5 * L[:, None])
                if rflag:
                    weight = weight * (0.5 * L[:, None]) ** Lam
                else:
                    weight = weight * (1.0 - s) ** Lam
                if lflag:
                    weight = weight * (0.5 * L[:, None]) ** Lam
                else:
                    weight = weight * (1.0 + s) ** Lam
                arg = u[m][:, None] + c[m][:, None] * s
                zv = z.f(arg)
                acc[0, m] += np.sum(weight * zv, axis=1)
                acc[1, m] += np.sum(weight * (u[m][:, None] + th * c[m][:, None] * s) * zv, axis=1)
                if derivs:
                    d2 = z.d2(arg)
                    acc[2, m] += np.sum(weight * z.d1(arg), axis=1)
                    acc[3, m] += np.sum(weight * d2, axis=1)
                    acc[4, m] += np.sum(weight * s * d2, axis=1)
    return acc


def _evaluate(rho, m, spec: EntropyPairSpec, derivs: bool):
    rho = np.asarray(rho, float)
    m = np.asarray(m, float)
    rho, m = np.broadcast_arrays(rho, m)
    shape = rho.shape
    rho, m = rho.ravel(), m.ravel()
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise DomainError("rho >= 0 required")
    pos = rho > 0
    u = np.where(pos, m / np.where(pos, rho, 1.0), 0.0)
    c = spec.speed_scale * rho**spec.vartheta
    idx = np.flatnonzero(pos)
    nout = 5 if derivs else 2
    vals = np.zeros((nout, rho.size))
    if idx.size:
        acc = _integrals(spec, u[idx], c[idx], spec.nodes, derivs)
        exact = spec.zeta.degree is not None and spec.zeta.degree + 1 <= spec.exactness_degree
        if spec.check and not exact:
            acc2 = _integrals(spec, u[idx], c[idx], 2 * spec.nodes, derivs)
            err = np.abs(acc2[:2] - acc[:2]) * rho[idx]
            tol = spec.rtol * (1.0 + np.abs(acc2[:2]) * rho[idx])
            if np.any(err > tol):
                k = int(np.argmax(np.max(err / tol, axis=0)))
                raise AccuracyError(
                    f"entropy-pair quadrature not converged at rho={rho[idx][k]:.6g}, u={u[idx][k]:.6g}: "
                    f"change {np.max(err[:, k]):.3g} on doubling nodes")
            acc = acc2
        r = rho[idx]
        vals[0, idx] = r * acc[0]
        vals[1, idx] = r * acc[1]
        if derivs:
            vals[2, idx] = acc[2]
            vals[3, idx] = acc[3]
            # d/drho at fixed u of int zeta'(u + c s) w: c_rho = theta c / rho
            vals[4, idx] = spec.vartheta * c[idx] / r * acc[4]
    return [v.reshape(shape) for v in vals]


def entropy_pair(rho, m, spec: EntropyPairSpec):
    """(eta, q) at states (rho, m); vacuum gives (0, 0)."""
    eta, q = _evaluate(rho, m, spec, derivs=False)
    return eta, q


def entropy_pair_derivatives(rho, m, spec: EntropyPairSpec) -> dict:
    """eta, q and eta_m, eta_mu = d eta_m/du, eta_mrho = d eta_m/drho (fixed u)."""
    eta, q, em, emu, emr = _evaluate(rho, m, spec, derivs=True)
    return {"eta": eta, "q": q, "eta_m": em, "eta_mu": emu, "eta_mrho": emr}


def mechanical_pair(rho, m, p):
    """eta_* = m^2/(2 rho) + rho P_e(rho) and its flux; zero at vacuum."""
    rho = np.asarray(rho, float)
    m = np.asarray(m, float)
    if np.any(rho < 0):
        raise DomainError("rho >= 0 required")
    pos = rho > 0
    rs = np.where(pos, rho, 1.0)
    u = np.where(pos, m / rs, 0.0)
    pe = p.a * rs ** (p.gamma - 1.0) / (p.gamma - 1.0)
    pe_prime = p.a * rs ** (p.gamma - 2.0)
    eta = np.where(pos, 0.5 * m * u + rho * pe, 0.0)
    q = np.where(pos, 0.5 * m * u * u + m * pe + rho * m * pe_prime, 0.0)
    return (eta, q) if eta.ndim else (float(eta), float(q))


def analytic_bound(spec: EntropyPairSpec) -> float | None:
    """C with |eta| + |q| <= C rho for compactly supported zeta and Lambda >= 0.

    |eta| <= rho |zeta|_inf I0; the flux weight u + theta c s splits into
    theta (u + c s) (bounded by max|support|) plus (1-theta) u, and |u| is at
    most max|support| + c|s| on the support, whose s-measure is (b-a)/c.
    """
    z = spec.zeta
    if z.support is None or spec.Lambda < 0:
        return None
    lo, hi = z.support
    sup = z.sup_norm if z.sup_norm is not None else float(np.max(np.abs(z.f(np.linspace(lo, hi, 4001)))))
    big = max(abs(lo), abs(hi))
    I0 = kernel_mass(spec.Lambda)
    return sup * (I0 * (1.0 + big) + (1.0 - spec.vartheta) * (hi - lo))


def pair_bounds_check(spec: EntropyPairSpec, rho, u) -> dict:
    """Empirical check of |eta| + |q| <= C rho and of the support strip.

    Returns a report; never raises on a violated property (test-facing).
    """
    rho = np.asarray(rho, float).ravel()
    u = np.asarray(u, float).ravel()
    eta, q = entropy_pair(rho, rho * u, spec)
    mag = np.abs(eta) + np.abs(q)
    pos = rho > 0
    ratio = np.where(pos, mag / np.where(pos, rho, 1.0), 0.0)
    C = analytic_bound(spec)
    report = {
        "n_samples": int(rho.size),
        "max_ratio": float(np.max(ratio)) if rho.size else 0.0,
        "analytic_bound": C,
        "vacuum_nonzero": int(np.count_nonzero(mag[~pos])),
    }
    if spec.zeta.support is not None:
        lo, hi = spec.zeta.support
        c = spec.speed_scale * rho**spec.vartheta
        outside = (c + u < lo) | (u - c > hi)
        report["outside_strip"] = int(np.count_nonzero(outside))
        report["outside_nonzero"] = int(np.count_nonzero(mag[outside]))
    else:
        report["outside_strip"] = 0
        report["outside_nonzero"] = 0
    bound_ok = True if C is None else bool(np.all(mag <= C * rho * (1 + 1e-12) + 1e-300))
    report["violations"] = 0 if C is None else int(np.count_nonzero(mag > C * rho * (1 + 1e-12)))
    report["holds"] = bound_ok and report["outside_nonzero"] == 0 and report["vacuum_nonzero"] == 0
    return report


# --------------------------------------------------------------------------
# entropy dissipation balance of the viscous system


@dataclass
class DissipationBalance:
    residual: float
    transport: float
    groups: dict = field(default_factory=dict)
    magnitudes: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.residual)


def default_space_time_test(x0: float, x1: float, t0: float, t1: float):
    """phi = sin^2(pi xi) sin^2(pi tau) on the space-time box (vanishes on its boundary)."""
    Lx, Lt = x1 - x0, t1 - t0

    def phi(x, t):
        a = np.pi * (x - x0) / Lx
        b = np.pi * (t - t0) / Lt
        sx, st = np.sin(a) ** 2, np.sin(b) ** 2
        return sx * st, sx * np.sin(2 * b) * np.pi / Lt, np.sin(2 * a) * np.pi / Lx * st

    return phi


def _trajectory_arrays(traj):
    if not traj:
        raise ValidationError("empty trajectory")
    for s in traj:
        if s.frame != "eulerian":
            raise ValidationError(f"trajectory must be in the Eulerian frame, got {s.frame!r}")
    x = np.asarray(traj[0].coord, float)
    for s in traj[1:]:
        if s.coord.shape != x.shape or not np.allclose(s.coord, x, rtol=0, atol=1e-12):
            raise ValidationError("trajectory snapshots must share one Eulerian grid")
    t = np.array([s.t for s in traj], float)
    if np.any(np.diff(t) <= 0):
        raise ValidationError("trajectory times must increase")
    stack = lambda name: np.stack([np.asarray(getattr(s, name)) for s in traj])
    return x, t, {k: stack(k) for k in ("rho", "u", "w", "h", "theta", "psi")}


def _trap2(f, x, t):
    return float(np.trapezoid(np.trapezoid(f, x, axis=-1), t))


def dissipation_balance_residual(traj, spec: EntropyPairSpec, params, coupling,
                                 test_fn: Callable | None = None) -> DissipationBalance:
    """Weak residual of the entropy balance of the viscous system for one pair.

    eta_t + q_x = (eps eta_m u_x - delta theta p_theta eta_m)_x
                  - (eps u_x - delta theta p_theta)(eta_mu u_x + eta_mrho rho_x)
                  - eta_m (beta/2 |h|^2 - alpha g'(1/rho) h(|psi|^2))_x

    tested against phi (vanishing on the boundary of the space-time box):
    residual = int int [eta phi_t + q phi_x] + sum of the tested right sides.
    Each right-side group (eps, delta, beta, alpha) is returned separately.
    """
    x, t, F = _trajectory_arrays(traj)
    if not math.isclose(spec.gas_constant, params.a, rel_tol=1e-12):
        raise ValidationError("entropy pair spec must use the gas constant a of the viscous system")
    phi_fn = test_fn or default_space_time_test(x[0], x[-1], t[0], t[-1])
    phi, phi_t, phi_x = phi_fn(x[None, :], t[:, None])
    phi, phi_t, phi_x = (np.broadcast_to(a, (t.size, x.size)) for a in (phi, phi_t, phi_x))
    rho, u = F["rho"], F["u"]
    if np.any(rho <= 0):
        raise ValidationError("dissipation balance needs rho > 0 along the trajectory")
    d = entropy_pair_derivatives(rho, rho * u, spec)
    dx = lambda f: np.gradient(f, x, axis=-1, edge_order=2)
    ux, rx = dx(u), dx(rho)
    p = params
    th = F["theta"]
    pth = p.laws.p_theta(rho, p)
    mix = d["eta_mu"] * ux + d["eta_mrho"] * rx
    em = d["eta_m"]
    g1 = coupling.g_all(1.0 / rho)[1]
    Hz = coupling.h_all(np.abs(F["psi"]) ** 2)[0]
    h2 = np.sum(np.abs(F["h"]) ** 2, axis=-2)
    integrands = {
        "eps": -p.epsilon * em * ux * phi_x - p.epsilon * ux * mix * phi,
        "delta": p.delta * th * pth * em * phi_x + p.delta * th * pth * mix * phi,
        "beta": -em * dx(0.5 * p.beta * h2) * phi,
        "alpha": em * dx(p.alpha * g1 * Hz) * phi,
    }
    transport = _trap2(d["eta"] * phi_t + d["q"] * phi_x, x, t)
    groups = {k: _trap2(v, x, t) for k, v in integrands.items()}
    mags = {k: _trap2(np.abs(v), x, t) for k, v in integrands.items()}
    return DissipationBalance(residual=transport + sum(groups.values()), transport=transport,
                              groups=groups, magnitudes=mags)
