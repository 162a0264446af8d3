import math

import numpy as np
import pytest

from swlw.constitutive import (CouplingFns, GasParams, PowerLaws, coupling_eval, entropy, growth_report,
                               heat_conductivity, internal_energy, kappa_primitive, maxwell_residual,
                               pressure, thermal_energy)
from swlw.errors import DomainError, ValidationError


def test_pressure_examples():
    assert pressure(0.0, 5.0, GasParams()) == 0.0
    assert pressure(1.0, 0.0, GasParams(delta=0.0)) == pytest.approx(1.0, abs=1e-15)
    assert pressure(2.0, 1.0, GasParams(delta=0.1)) == pytest.approx(4.2, abs=1e-14)


def test_pressure_rejects_negative():
    with pytest.raises(DomainError):
        pressure(-1.0, 1.0, GasParams())
    with pytest.raises(DomainError):
        pressure(1.0, -1.0, GasParams())


def test_internal_energy_examples():
    p = GasParams()
    assert internal_energy(1.0, 0.0, p) == pytest.approx(1.0, abs=1e-15)
    assert internal_energy(1.0, 1.0, p) == pytest.approx(2.5, abs=1e-15)
    assert thermal_energy(0.0, GasParams(r=0.3, e1=2.0)) == 0.0
    with pytest.raises(DomainError):
        internal_energy(0.0, 1.0, p)


def test_entropy_examples():
    p = GasParams()
    assert entropy(1.0, 1.0, p) == pytest.approx(0.0, abs=1e-15)
    assert entropy(math.e, 1.0, p) == pytest.approx(-1.0, abs=1e-14)
    assert entropy(1.0, math.e, p) == pytest.approx(math.e, abs=1e-14)
    with pytest.raises(DomainError):
        entropy(1.0, 0.0, p)


def test_entropy_monotonicity():
    p = GasParams()
    rho = np.linspace(0.1, 10, 50)
    th = np.linspace(0.1, 10, 50)
    R, T = np.meshgrid(rho, th, indexing="ij")
    s = entropy(R, T, p)
    assert np.all(np.diff(s, axis=1) > 0)
    assert np.all(np.diff(s, axis=0) < 0)


def test_conductivity_examples():
    p = GasParams()
    assert heat_conductivity(0.0, p) == p.k1
    assert kappa_primitive(0.0, p) == 0.0
    assert kappa_primitive(1.0, p) == pytest.approx(1.2, abs=1e-15)
    th = np.linspace(0, 100, 1001)
    assert np.all(np.diff(kappa_primitive(th, p)) > 0)


@pytest.mark.parametrize("rho,theta", [(1.0, 1.0), (2.0, 3.0), (0.5, 0.0)])
def test_maxwell_examples(rho, theta):
    assert abs(maxwell_residual(rho, theta, GasParams())) <= 1e-6


def test_maxwell_grid():
    R, T = np.meshgrid(np.linspace(0.2, 5, 20), np.linspace(0.0, 5, 20), indexing="ij")
    assert np.max(np.abs(maxwell_residual(R, T, GasParams(), step=1e-5))) <= 1e-6


def test_growth_report_default_holds():
    rep = growth_report(GasParams())
    assert all(rep.values()), rep


def test_params_violations_collected():
    with pytest.raises(ValidationError) as exc:
        GasParams(gamma=1.0, q=3.0, a=-1).validate()
    msg = str(exc.value)
    assert "gamma > 1 required" in msg
    assert "q >= 2+2r violated: q=3, r=1" in msg
    assert "a > 0 required" in msg


def test_viscous_constraints():
    assert GasParams(epsilon=0.0).violations() == []
    assert any("epsilon" in v for v in GasParams(epsilon=0.0).violations(viscous=True))


def test_derived_exponents():
    p = GasParams(gamma=2.0)
    assert p.vartheta == 0.5 and p.Lambda == 0.5
    assert GasParams(gamma=3.0).Lambda == 0.0


def test_degenerate_thermal_flag():
    assert GasParams(delta=0.0).degenerate_thermal_pressure()
    assert GasParams(p0=0.0).degenerate_thermal_pressure()
    assert not GasParams().degenerate_thermal_pressure()


def test_coupling_examples():
    f = CouplingFns()
    g, g1, g2, h, h1 = coupling_eval(0.0, 0.0, f)
    assert g == 0.0 and h == 0.0
    assert coupling_eval(8.0, 5.0, f)[1] == 0.0
    assert coupling_eval(8.0, 5.0, f)[4] == 0.0


def test_coupling_supports_and_derivatives():
    f = CouplingFns()
    v = np.linspace(0, 10, 1000)
    z = np.linspace(0, 10, 1000)
    g, g1, g2, h, h1 = coupling_eval(v, z, f)
    out = (v < f.g_lo) | (v > f.g_hi)
    assert np.all(g1[out] == 0) and np.all(g2[out] == 0)
    assert np.all(h1[z > f.z_max] == 0)
    assert np.all(g >= 0) and np.all(h >= 0)
    # derivatives against finite differences
    x = np.linspace(0.3, 3.9, 200)
    e = 1e-6
    fd = (f.g_all(x + e)[0] - f.g_all(x - e)[0]) / (2 * e)
    assert np.max(np.abs(fd - f.g_all(x)[1])) < 1e-7
    fd2 = (f.g_all(x + e)[1] - f.g_all(x - e)[1]) / (2 * e)
    assert np.max(np.abs(fd2 - f.g_all(x)[2])) < 1e-6
    zz = np.linspace(0.1, 3.9, 200)
    fdh = (f.h_all(zz + e)[0] - f.h_all(zz - e)[0]) / (2 * e)
    assert np.max(np.abs(fdh - f.h_all(zz)[1])) < 1e-7


def test_coupling_rejects_negative():
    with pytest.raises(DomainError):
        coupling_eval(-1.0, 0.0, CouplingFns())


def test_laws_injectable():
    class Linear(PowerLaws):
        def c_theta(self, theta, params):
            return 2.0 + 0.0 * np.asarray(theta)

        def q_energy(self, theta, params):
            return 2.0 * np.asarray(theta)

    p = GasParams(laws=Linear())
    assert internal_energy(1.0, 1.0, p) == pytest.approx(3.0)
