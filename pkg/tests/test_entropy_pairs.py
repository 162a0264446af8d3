import math

import numpy as np
import pytest

from swlw.constitutive import GasParams
from swlw.entropy_pairs import (EntropyPairSpec, analytic_bound, builtin_zeta, bump, chi,
                                dissipation_balance_residual, entropy_pair, entropy_pair_derivatives,
                                kernel_mass, mechanical_pair, pair_bounds_check, s2_normalization,
                                sharp_zeta)
from swlw.errors import DomainError, ValidationError
from swlw.galerkin import SolverConfig, run, to_eulerian
from swlw.snapshot import FieldSnapshot


def test_chi_examples():
    spec = EntropyPairSpec("+1", gamma=2.0)
    assert chi(0.0, 0.3, 0.1, spec) == 0.0
    assert chi(1.0, 0.0, 0.0, spec) == 1.0
    s3 = EntropyPairSpec("+1", gamma=3.0)
    assert chi(1.0, 0.0, 0.5, s3) == 1.0
    assert chi(1.0, 0.0, 1.5, s3) == 0.0


def test_chi_support_exact():
    rng = np.random.default_rng(0)
    for gamma in (1.4, 2.0, 3.0):
        spec = EntropyPairSpec("+1", gamma=gamma)
        rho = rng.uniform(0, 3, 5000)
        u = rng.uniform(-2, 2, 5000)
        s = rng.uniform(-5, 5, 5000)
        out = np.abs(s - u) > spec.speed_scale * rho**spec.vartheta
        assert np.all(chi(rho, u, s, spec)[out] == 0.0)


def test_chi_singular_for_large_gamma():
    spec = EntropyPairSpec("+1", gamma=4.0)
    c = spec.speed_scale
    with pytest.raises(DomainError):
        chi(1.0, 0.0, c, spec)
    reg = EntropyPairSpec("+1", gamma=4.0, endpoint_regularized=True)
    assert np.isfinite(chi(1.0, 0.0, 0.5 * c, reg))


def test_eta_constant_zeta_is_half_pi():
    eta, q = entropy_pair(1.0, 0.0, EntropyPairSpec("+1", gamma=2.0))
    assert abs(eta - math.pi / 2) <= 1e-10
    assert abs(q) <= 1e-14


def test_eta_linear_zeta_proportional_to_momentum():
    spec = EntropyPairSpec("+s", gamma=2.0)
    rho = np.array([0.5, 1.0, 2.0])
    m = np.array([0.3, -1.0, 2.5])
    eta, _ = entropy_pair(rho, m, spec)
    assert np.allclose(eta, m * kernel_mass(spec.Lambda), rtol=1e-13)


def test_vacuum_and_continuity():
    spec = EntropyPairSpec("s2", gamma=1.4)
    assert entropy_pair(0.0, 0.0, spec) == (0.0, 0.0)
    rho = 10.0 ** -np.arange(1, 9)
    eta, q = entropy_pair(rho, rho * 0.7, spec)
    assert np.all(np.diff(np.abs(eta)) < 0) and abs(eta[-1]) < 1e-7


def test_mechanical_pair_examples():
    p = GasParams()
    assert mechanical_pair(1.0, 0.0, p)[0] == pytest.approx(1.0)
    assert mechanical_pair(2.0, 2.0, p)[0] == pytest.approx(5.0)
    assert mechanical_pair(0.0, 0.0, p) == (0.0, 0.0)


@pytest.mark.parametrize("gamma", [1.4, 2.0, 3.0])
def test_s2_pair_is_scaled_mechanical_energy(gamma):
    rng = np.random.default_rng(7)
    spec = EntropyPairSpec("s2", gamma=gamma, a=1.0)
    p = GasParams(gamma=gamma, a=1.0)
    rho = rng.uniform(0.05, 3, 100)
    m = rho * rng.uniform(-2, 2, 100)
    eta, q = entropy_pair(rho, m, spec)
    es, qs = mechanical_pair(rho, m, p)
    assert np.allclose(eta / es, s2_normalization(spec), rtol=1e-12)
    assert np.allclose(q / qs, s2_normalization(spec), rtol=1e-10)


@pytest.mark.parametrize("zeta", ["+1", "+s", "s2"])
def test_polynomial_quadrature_node_doubling(zeta):
    rng = np.random.default_rng(3)
    rho = rng.uniform(0.01, 3, 200)
    m = rho * rng.uniform(-2, 2, 200)
    a = entropy_pair(rho, m, EntropyPairSpec(zeta, gamma=1.4, nodes=16))
    b = entropy_pair(rho, m, EntropyPairSpec(zeta, gamma=1.4, nodes=32))
    for x, y in zip(a, b):
        assert np.max(np.abs(x - y)) <= 1e-10


@pytest.mark.parametrize("zeta", [bump(-0.5, 1.0), sharp_zeta()])
@pytest.mark.parametrize("gamma", [1.4, 2.0, 3.0])
def test_flux_gradient_relation(zeta, gamma):
    # grad q = grad eta * dF for the isentropic Euler flux
    spec = EntropyPairSpec(zeta, gamma=gamma, a=1.0, nodes=96)
    p = GasParams(gamma=gamma, a=1.0)
    rho, m, e = 1.3, 0.4, 1e-5
    f = lambda r, mm: np.array(entropy_pair(r, mm, spec))
    d_r = (f(rho + e, m) - f(rho - e, m)) / (2 * e)
    d_m = (f(rho, m + e) - f(rho, m - e)) / (2 * e)
    u = m / rho
    c2 = p.a * gamma * rho ** (gamma - 1)
    # dF = [[0, 1], [c2 - u^2, 2u]]
    q_r = d_r[0] * 0 + d_m[0] * (c2 - u * u)
    q_m = d_r[0] * 1 + d_m[0] * 2 * u
    assert q_r == pytest.approx(d_r[1], rel=1e-5, abs=1e-7)
    assert q_m == pytest.approx(d_m[1], rel=1e-5, abs=1e-7)


def test_derivatives_match_finite_differences():
    spec = EntropyPairSpec(bump(-1.0, 1.5), gamma=2.0, a=1.0)
    rho, u, e = np.array([0.8]), np.array([0.3]), 1e-6
    d = entropy_pair_derivatives(rho, rho * u, spec)
    em = lambda r, uu: entropy_pair_derivatives(r, r * uu, spec)["eta_m"]
    eta_m_fd = (entropy_pair(rho, rho * u + e, spec)[0] - entropy_pair(rho, rho * u - e, spec)[0]) / (2 * e)
    assert d["eta_m"] == pytest.approx(eta_m_fd, rel=1e-6)
    assert d["eta_mu"] == pytest.approx((em(rho, u + e) - em(rho, u - e)) / (2 * e), rel=1e-5)
    assert d["eta_mrho"] == pytest.approx((em(rho + e, u) - em(rho - e, u)) / (2 * e), rel=1e-5)


@pytest.mark.parametrize("gamma", [1.4, 2.0, 3.0])
def test_bounds_hold_random_samples(gamma):
    rng = np.random.default_rng(11)
    spec = EntropyPairSpec(bump(-1.0, 2.0), gamma=gamma)
    rep = pair_bounds_check(spec, rng.uniform(0, 5, 10_000), rng.uniform(-4, 4, 10_000))
    assert rep["holds"], rep
    assert rep["max_ratio"] <= analytic_bound(spec)


def test_outside_strip_exact_zero():
    spec = EntropyPairSpec(bump(0.0, 1.0), gamma=2.0)
    eta, q = entropy_pair(np.array([0.01]), np.array([0.01 * -3.0]), spec)
    assert eta[0] == 0.0 and q[0] == 0.0


def test_spec_validation():
    with pytest.raises(ValidationError):
        EntropyPairSpec("+1", gamma=1.0)
    with pytest.raises(ValidationError):
        builtin_zeta("cubic")


def _traj(n=32, samples=20, nx=101, const=False):
    p = GasParams(epsilon=0.1, alpha=0.1**0.75, beta=0.1**1.5, delta=0.1**1.5)
    idata = {"profile": "near-constant", "perturbation": 0.0} if const else {"profile": "smooth-periodic"}
    cfg = SolverConfig(params=p, n=n, dt=2.5e-4, t_end=0.2, monitor_every=10**6, snapshot_every=800 // samples,
                       initial_data=idata)
    x = np.linspace(0, 1, nx)
    traj = []
    run(cfg, keep_states=False, on_state=lambda s: traj.append(to_eulerian(s, cfg, x)))
    return traj, p, cfg.coupling


def test_dissipation_balance_constant_trajectory():
    traj, p, c = _traj(n=8, samples=5, nx=21, const=True)
    r = dissipation_balance_residual(traj, EntropyPairSpec("s2", gamma=p.gamma, a=p.a), p, c)
    assert abs(r.residual) <= 1e-12
    assert all(abs(v) <= 1e-12 for v in r.groups.values())


def test_dissipation_balance_consistency():
    res = []
    for samples, nx in ((20, 101), (40, 201)):
        traj, p, c = _traj(samples=samples, nx=nx)
        res.append(dissipation_balance_residual(traj, EntropyPairSpec("s2", gamma=p.gamma, a=p.a), p, c))
    assert abs(res[0].residual) / abs(res[1].residual) >= 3.5
    assert abs(res[1].residual) <= 0.05 * sum(res[1].magnitudes.values())


def test_dissipation_balance_frame_and_constant_checks():
    traj, p, c = _traj(n=8, samples=5, nx=21, const=True)
    lag = [FieldSnapshot("lagrangian", s.t, s.coord, s.rho, s.u, s.w, s.h, s.theta, s.psi) for s in traj]
    with pytest.raises(ValidationError):
        dissipation_balance_residual(lag, EntropyPairSpec("s2", gamma=p.gamma, a=p.a), p, c)
    with pytest.raises(ValidationError):
        dissipation_balance_residual(traj, EntropyPairSpec("s2", gamma=p.gamma), p, c)
