"""Constitutive laws: pressure, internal energy, entropy, conductivity, coupling.

All functions are vectorised over numpy arrays and pure.  The thermal part of
the model (p_theta, C_theta, kappa) is supplied by a ``ThermalLaws`` object so
tests can swap in alternatives; ``PowerLaws`` is the default closed form

    p_theta(rho) = rho,   C_theta = e1 (1 + theta^r),   kappa = k1 (1 + theta^q).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "ThermalLaws",
    "PowerLaws",
    "GasParams",
    "CouplingFns",
    "pressure",
    "elastic_pressure",
    "thermal_pressure_coefficient",
    "elastic_potential",
    "internal_energy",
    "heat_capacity",
    "thermal_energy",
    "entropy",
    "heat_conductivity",
    "kappa_primitive",
    "maxwell_residual",
    "coupling_eval",
    "growth_report",
]


class ThermalLaws:
    """Interface for the temperature-dependent laws.

    Subclasses implement every method; ``params`` is the owning GasParams.
    """

    def p_theta(self, rho, params):
        raise NotImplementedError

    def p_theta_prime(self, rho, params):
        raise NotImplementedError

    def p_theta_volume_integral(self, rho, params):
        """Return the integral of p_theta(z)/z^2 from 1 to rho."""
        raise NotImplementedError

    def c_theta(self, theta, params):
        raise NotImplementedError

    def q_energy(self, theta, params):
        """Return Q(theta), the integral of C_theta from 0 to theta."""
        raise NotImplementedError

    def s_theta(self, theta, params):
        """Return the integral of C_theta(z)/z from 1 to theta."""
        raise NotImplementedError

    def kappa(self, theta, params):
        raise NotImplementedError

    def kappa_prime(self, theta, params):
        raise NotImplementedError

    def kappa_primitive(self, theta, params):
        raise NotImplementedError


class PowerLaws(ThermalLaws):
    """Default power-law instantiation of the thermal laws."""

    def p_theta(self, rho, params):
        return np.asarray(rho, dtype=float) * 1.0

    def p_theta_prime(self, rho, params):
        return np.ones_like(np.asarray(rho, dtype=float))

    def p_theta_volume_integral(self, rho, params):
        return np.log(rho)

    def c_theta(self, theta, params):
        return params.e1 * (1.0 + np.power(theta, params.r))

    def q_energy(self, theta, params):
        r = params.r
        return params.e1 * (theta + np.power(theta, r + 1.0) / (r + 1.0))

    def s_theta(self, theta, params):
        r = params.r
        if r == 0.0:
            return 2.0 * params.e1 * np.log(theta)
        return params.e1 * (np.log(theta) + (np.power(theta, r) - 1.0) / r)

    def kappa(self, theta, params):
        return params.k1 * (1.0 + np.power(theta, params.q))

    def kappa_prime(self, theta, params):
        q = params.q
        return params.k1 * q * np.power(theta, q - 1.0)

    def kappa_primitive(self, theta, params):
        q = params.q
        return params.k1 * (theta + np.power(theta, q + 1.0) / (q + 1.0))


@dataclass(frozen=True)
class GasParams:
    """Every constitutive and transport constant of the model.

    ``vartheta`` and ``Lambda`` are derived from ``gamma`` and never stored.
    """

    a: float = 1.0
    gamma: float = 2.0
    delta: float = 1.0
    epsilon: float = 0.1
    mu: float = 1.0
    nu: float = 1.0
    beta: float = 0.0
    alpha: float = 0.0
    r: float = 1.0
    q: float = 4.0
    e1: float = 1.0
    e2: float = 1.0
    k1: float = 1.0
    k2: float = 1.0
    p0: float = 1.0
    Gamma: float = 1.0
    allow_large_gamma: bool = False
    laws: ThermalLaws = field(default_factory=PowerLaws, compare=False, repr=False)

    @property
    def vartheta(self) -> float:
        return (self.gamma - 1.0) / 2.0

    @property
    def Lambda(self) -> float:
        return (3.0 - self.gamma) / (2.0 * (self.gamma - 1.0))

    def with_(self, **kw) -> "GasParams":
        return replace(self, **kw)

    def violations(self, viscous: bool = False) -> list[str]:
        """Return every violated constraint as a human-readable string."""
        out = []
        for f in fields(self):
            if f.name in ("laws", "allow_large_gamma"):
                continue
            val = getattr(self, f.name)
            if not isinstance(val, (int, float)) or not math.isfinite(val):
                out.append(f"{f.name} must be a finite number, got {val!r}")
        if out:
            return out
        if self.gamma <= 1.0:
            out.append("gamma > 1 required")
        elif self.gamma > 3.0 and not self.allow_large_gamma:
            out.append(f"gamma <= 3 required unless allow_large_gamma is set: gamma={self.gamma:g}")
        if self.a <= 0.0:
            out.append(f"a > 0 required: a={self.a:g}")
        if self.delta < 0.0:
            out.append(f"delta >= 0 required: delta={self.delta:g}")
        if not 0.0 <= self.r <= 1.0:
            out.append(f"r in [0,1] required: r={self.r:g}")
        if self.q < 2.0 + 2.0 * self.r:
            out.append(f"q >= 2+2r violated: q={self.q:g}, r={self.r:g}")
        if self.Gamma > self.gamma / 2.0:
            out.append(f"Gamma <= gamma/2 violated: Gamma={self.Gamma:g}, gamma={self.gamma:g}")
        if self.p0 < 0.0:
            out.append(f"p0 >= 0 required: p0={self.p0:g}")
        for name in ("e1", "e2", "k1", "k2"):
            if getattr(self, name) <= 0.0:
                out.append(f"{name} > 0 required: {name}={getattr(self, name):g}")
        if self.e2 < self.e1:
            out.append(f"e2 >= e1 required: e1={self.e1:g}, e2={self.e2:g}")
        if self.k2 < self.k1:
            out.append(f"k2 >= k1 required: k1={self.k1:g}, k2={self.k2:g}")
        if self.beta < 0.0:
            out.append(f"beta >= 0 required: beta={self.beta:g}")
        if self.alpha < 0.0:
            out.append(f"alpha >= 0 required: alpha={self.alpha:g}")
        if viscous:
            for name in ("epsilon", "mu", "nu"):
                if getattr(self, name) <= 0.0:
                    out.append(f"{name} > 0 required for viscous runs: {name}={getattr(self, name):g}")
        return out

    def validate(self, viscous: bool = False) -> "GasParams":
        bad = self.violations(viscous)
        if bad:
            raise ValidationError(bad)
        return self

    def degenerate_thermal_pressure(self) -> bool:
        """True when the thermal pressure is switched off (delta=0 or p0=0)."""
        return self.delta == 0.0 or self.p0 == 0.0


def _arr(x, name: str, strict: bool = False):
    x = np.asarray(x, dtype=float)
    bad = (x <= 0.0) if strict else (x < 0.0)
    if np.any(bad) or np.any(np.isnan(x)):
        rel = ">" if strict else ">="
        raise DomainError(f"{name} {rel} 0 required")
    return x


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def elastic_pressure(rho, p: GasParams):
    rho = _arr(rho, "rho")
    return _out(p.a * np.power(rho, p.gamma))


def thermal_pressure_coefficient(rho, p: GasParams):
    """dp/dtheta = delta * p_theta(rho)."""
    rho = _arr(rho, "rho")
    return _out(p.delta * p.laws.p_theta(rho, p))


def pressure(rho, theta, p: GasParams):
    rho = _arr(rho, "rho")
    theta = _arr(theta, "theta")
    return _out(p.a * np.power(rho, p.gamma) + p.delta * theta * p.laws.p_theta(rho, p))


def elastic_potential(rho, p: GasParams):
    """P_e(rho) = a rho^(gamma-1) / (gamma-1)."""
    rho = _arr(rho, "rho")
    return _out(p.a * np.power(rho, p.gamma - 1.0) / (p.gamma - 1.0))


def heat_capacity(theta, p: GasParams):
    theta = _arr(theta, "theta")
    return _out(p.laws.c_theta(theta, p))


def thermal_energy(theta, p: GasParams):
    """Q(theta)."""
    theta = _arr(theta, "theta")
    return _out(p.laws.q_energy(theta, p))


def internal_energy(rho, theta, p: GasParams):
    rho = _arr(rho, "rho", strict=True)
    theta = _arr(theta, "theta")
    return _out(p.a * np.power(rho, p.gamma - 1.0) / (p.gamma - 1.0) + p.laws.q_energy(theta, p))


def entropy(rho, theta, p: GasParams):
    """Specific entropy, consistent with the Gibbs relation for the full pressure.

    The volume term carries the factor delta because the thermal pressure is
    delta * theta * p_theta(rho).
    """
    rho = _arr(rho, "rho", strict=True)
    theta = _arr(theta, "theta", strict=True)
    return _out(p.laws.s_theta(theta, p) - p.delta * p.laws.p_theta_volume_integral(rho, p))


def heat_conductivity(theta, p: GasParams):
    theta = _arr(theta, "theta")
    return _out(p.laws.kappa(theta, p))


def kappa_primitive(theta, p: GasParams):
    theta = _arr(theta, "theta")
    return _out(p.laws.kappa_primitive(theta, p))


def maxwell_residual(rho, theta, p: GasParams, step: float = 1e-5, relative: bool = True):
    """Centered-difference e_rho minus (p - theta p_theta)/rho^2."""
    rho = _arr(rho, "rho", strict=True)
    theta = _arr(theta, "theta")
    if np.any(rho - step <= 0.0):
        raise DomainError("rho must exceed the finite-difference step")
    e_rho = (internal_energy(rho + step, theta, p) - internal_energy(rho - step, theta, p)) / (2.0 * step)
    rhs = (pressure(rho, theta, p) - theta * thermal_pressure_coefficient(rho, p)) / rho**2
    res = e_rho - rhs
    if relative:
        res = res / np.maximum(np.abs(rhs), 1e-300)
    return _out(res)


def _smootherstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


@dataclass(frozen=True)
class CouplingFns:
    """Coupling functions g (of specific volume) and h (of |psi|^2).

    Defaults: g is a C^2 smootherstep rising from 0 to ``g_scale`` across
    [g_lo, g_hi]; h has h'(z) = h_scale (1 - z/z_max)^3 on [0, z_max] and is
    constant beyond.  Subclasses may override ``g_all`` and ``h_all``.
    """

    g_lo: float = 0.25
    g_hi: float = 4.0
    g_scale: float = 1.0
    z_max: float = 4.0
    h_scale: float = 1.0

    def violations(self) -> list[str]:
        out = []
        if not 0.0 < self.g_lo < self.g_hi:
            out.append(f"0 < g_lo < g_hi required: g_lo={self.g_lo:g}, g_hi={self.g_hi:g}")
        if self.z_max <= 0.0:
            out.append(f"z_max > 0 required: z_max={self.z_max:g}")
        if self.g_scale < 0.0 or self.h_scale < 0.0:
            out.append("g_scale and h_scale must be >= 0")
        return out

    def g_all(self, v):
        width = self.g_hi - self.g_lo
        x = np.clip((v - self.g_lo) / width, 0.0, 1.0)
        g = self.g_scale * _smootherstep(x)
        g1 = self.g_scale * 30.0 * x**2 * (1.0 - x) ** 2 / width
        g2 = self.g_scale * 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x) / width**2
        return g, g1, g2

    def h_all(self, z):
        zm = self.z_max
        s = np.clip(1.0 - z / zm, 0.0, 1.0)
        h = self.h_scale * zm / 4.0 * (1.0 - s**4)
        h1 = self.h_scale * s**3
        h2 = -3.0 * self.h_scale / zm * s**2
        return h, h1, h2


def coupling_eval(v, z, fns: CouplingFns):
    """Return (g(v), g'(v), g''(v), h(z), h'(z))."""
    v = _arr(v, "v")
    z = _arr(z, "|psi|^2")
    g, g1, g2 = fns.g_all(v)
    h, h1, _ = fns.h_all(z)
    return tuple(_out(a) for a in (g, g1, g2, h, h1))


def growth_report(p: GasParams, rho=None, theta=None) -> dict[str, bool]:
    """Check the growth hypotheses on sample grids; True means satisfied."""
    rho = np.linspace(0.0, 50.0, 2001) if rho is None else np.asarray(rho, float)
    theta = np.linspace(0.0, 100.0, 2001) if theta is None else np.asarray(theta, float)
    laws = p.laws
    pt = laws.p_theta(rho, p)
    c = laws.c_theta(theta, p)
    kap = laws.kappa(theta, p)
    base_q = 1.0 + theta**p.q
    base_r = 1.0 + theta**p.r
    kq = max(p.k2, p.q * p.k1)
    rtol = 1e-12
    return {
        "p_theta(0)=0": bool(laws.p_theta(np.array([0.0]), p)[0] == 0.0),
        "p_theta nondecreasing": bool(np.all(np.diff(pt) >= 0.0)),
        "p_theta <= p0(1+rho^Gamma)": bool(np.all(pt <= p.p0 * (1.0 + rho**p.Gamma) * (1 + rtol))),
        "C_theta lower bound": bool(np.all(c >= p.e1 * base_r * (1 - rtol))),
        "C_theta upper bound": bool(np.all(c <= p.e2 * base_r * (1 + rtol))),
        "inf C_theta > 0": bool(np.min(c) > 0.0),
        "kappa lower bound": bool(np.all(kap >= p.k1 * base_q * (1 - rtol))),
        "kappa upper bound": bool(np.all(kap <= p.k2 * base_q * (1 + rtol))),
        "kappa' bound": bool(np.all(laws.kappa_prime(theta, p) <= kq * (1.0 + theta ** max(p.q - 1.0, 0.0)) * (1 + rtol))),
        "q >= 2+2r": p.q >= 2.0 + 2.0 * p.r,
    }
