import cmath
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from qpnls import bounds
from qpnls.errors import CapacityError, DomainError
from qpnls.lattice import LatticeBox
from qpnls.solver import (
    ProblemSpec,
    TimeGrid,
    Trajectory,
    cumulative_simpson,
    evolve_interaction,
    galerkin_rhs,
    linear_flow,
    mass,
    mass_drift,
    picard_solve,
    picard_step,
    plane_wave_exact,
    required_steps,
    rk4_solve,
    write_trajectory,
    zero_trajectory,
)
from qpnls.spectral import CoefficientField, alt_convolution, field_from_csv, make_rng

OMEGA = (1.0, math.sqrt(2.0))
T0 = bounds.t0_bound(1, 12, 2, 1)


def spec(**kw):
    base = dict(nu=2, p=1, omega=OMEGA, radius=2, t_end=T0, steps=40)
    base.update(kw)
    return ProblemSpec(**base)


def two_mode(box):
    return CoefficientField.from_modes(box, {(1, 0): 0.8, (0, -1): 0.5 * cmath.exp(0.7j)})


def test_time_grid():
    g = TimeGrid(1.0, 4)
    assert np.allclose(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    for bad in ((1.0, 3), (1.0, 0), (0.0, 4), (math.inf, 4)):
        with pytest.raises(ValueError):
            TimeGrid(*bad)


def test_problem_spec_validation():
    s = spec()
    assert s.P == 3 and s.box == LatticeBox(2, 2) and s.t0 == pytest.approx(T0)
    for kw in (dict(nu=1, omega=(1.0,)), dict(lam=0), dict(p=0), dict(omega=(1.0,)), dict(A=-1.0)):
        with pytest.raises(DomainError):
            spec(**kw)
    assert spec(decay="exponential", rate=0.5).t0 is None


@pytest.mark.parametrize("quad_order", [2, 4, 6, 10, 40])
def test_cumulative_simpson_polynomials(quad_order):
    # exact for cubics on every prefix except i = 1, which is exact for quadratics
    t = np.linspace(0, 2, quad_order + 1)
    h = t[1] - t[0]
    g = 1 - 2 * t + 3 * t**2 - 0.5 * t**3
    exact = t - t**2 + t**3 - t**4 / 8
    got = cumulative_simpson(g, h)
    assert np.allclose(got[2:], exact[2:], atol=1e-13)
    q = 1 - 2 * t + 3 * t**2
    assert cumulative_simpson(q, h)[1] == pytest.approx((t - t**2 + t**3)[1], abs=1e-14)


def test_cumulative_simpson_converges_fourth_order():
    errs = []
    for n in (16, 32, 64):
        t = np.linspace(0, 3, n + 1)
        errs.append(np.max(np.abs(cumulative_simpson(np.cos(5 * t), t[1]) - np.sin(5 * t) / 5)))
    assert errs[1] / errs[0] < 0.15 and errs[2] / errs[1] < 0.15


def test_linear_flow_examples():
    box = LatticeBox(2, 2)
    c0 = two_mode(box)
    g = TimeGrid(0.7, 10)
    lin = linear_flow(c0, OMEGA, g)
    assert np.array_equal(lin.values[0], c0.values)
    w = 1.0
    assert lin.field(10)[(1, 0)] == pytest.approx(0.8 * cmath.exp(-1j * w * w * 0.7), abs=1e-15)
    assert np.allclose(np.abs(lin.values), np.abs(c0.values)[None], rtol=1e-15)


def test_galerkin_rhs_examples():
    box = LatticeBox(2, 2)
    assert np.all(galerkin_rhs(CoefficientField.zeros(box), OMEGA, 1, 1).values == 0)
    a = 0.6 * cmath.exp(0.2j)
    n0 = (1, 1)
    w = 1 + math.sqrt(2)
    for p, lam in [(1, 1), (2, -1)]:
        d = galerkin_rhs(CoefficientField.from_modes(box, {n0: a}), OMEGA, p, lam)
        assert d[n0] == pytest.approx(-1j * w * w * a + 1j * lam * abs(a) ** (2 * p) * a, abs=1e-14)


@given(st.integers(0, 2**32), st.sampled_from([1, 2]), st.sampled_from([1, -1]))
@settings(max_examples=25)
def test_mass_flux_vanishes(seed, p, lam):
    box = LatticeBox(2, 2)
    rng = make_rng(seed, 5)
    c = CoefficientField(box, rng.normal(size=box.shape) + 1j * rng.normal(size=box.shape))
    d = galerkin_rhs(c, OMEGA, p, lam).values
    flux = np.vdot(c.values, d).real
    assert abs(flux) <= 1e-12 * np.sum(np.abs(c.values) * np.abs(d))


def test_plane_wave_examples():
    assert plane_wave_exact(0.3 + 0.1j, (1, 0), OMEGA, 1, 1, 0.0) == 0.3 + 0.1j
    # <n0> = 1, |a| = 1: phases cancel at t = pi
    assert plane_wave_exact(1.0, (1, 0), OMEGA, 1, 1, math.pi) == pytest.approx(1.0, abs=1e-15)
    for t in (0.1, 3.0, 100.0):
        assert abs(plane_wave_exact(0.4j, (1, 1), OMEGA, 2, -1, t)) == pytest.approx(0.4, rel=1e-15)


def test_zero_data():
    s = spec()
    z = CoefficientField.zeros(s.box)
    assert np.all(rk4_solve(s, z).values == 0)
    res = picard_solve(s, z)
    assert res.converged and res.deltas == [0.0]


def test_picard_step_from_zero_is_linear_flow_bitwise():
    s = spec()
    c0 = two_mode(s.box)
    step = picard_step(zero_trajectory(s.box, s.grid), c0, s)
    assert np.array_equal(step.values, linear_flow(c0, OMEGA, s.grid).values)


def test_picard_step_grid_mismatch():
    s = spec()
    c0 = two_mode(s.box)
    with pytest.raises(ValueError):
        picard_step(zero_trajectory(s.box, TimeGrid(T0, 20)), c0, s)


def test_second_iterate_against_adaptive_quadrature():
    # iterate 2 = linear flow + i lam int_0^t exp(-i w^2 (t-s)) F(linear(s)) ds, integrated
    # here by adaptive quadrature of the closed-form integrand
    s = spec(t_end=0.05, steps=40)
    box = s.box
    c0 = two_mode(box)
    w2 = box.pairing(OMEGA) ** 2
    T = s.t_end

    def integrand(tau):
        lin = CoefficientField(box, np.exp(-1j * w2 * tau) * c0.values)
        return (np.exp(-1j * w2 * (T - tau)) * alt_convolution(lin, 1).values).ravel()

    integral, _ = integrate.quad_vec(integrand, 0.0, T, epsabs=1e-14, epsrel=1e-13)
    expect = np.exp(-1j * w2 * T) * c0.values + 1j * integral.reshape(box.shape)
    it1 = picard_step(zero_trajectory(box, s.grid), c0, s)
    it2 = picard_step(it1, c0, s)
    assert np.max(np.abs(it2.values[-1] - expect)) <= 1e-10


@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("lam", [1, -1])
def test_single_mode_solvers_match_plane_wave(p, lam):
    T = min(bounds.t0_bound(1, 12, 2, p), 0.5)
    s = spec(p=p, lam=lam, t_end=T, steps=400)
    a, n0 = 0.9 * cmath.exp(0.3j), (1, -1)
    c0 = CoefficientField.from_modes(s.box, {n0: a})
    exact = np.array([plane_wave_exact(a, n0, OMEGA, p, lam, t) for t in s.grid.nodes])
    pos = (slice(None),) + s.box.position(n0)
    res = picard_solve(s, c0)
    rk = rk4_solve(s, c0)
    assert res.converged
    assert np.max(np.abs(res.trajectory.values[pos] - exact)) <= 1e-6
    assert np.max(np.abs(rk.values[pos] - exact)) <= 1e-6
    assert mass_drift(rk) <= 1e-8


def test_single_mode_beyond_existence_time():
    # t0 is sufficient, not necessary: a unit mode still converges on [0, 0.5]
    s = spec(t_end=0.5, steps=200, picard_depth=40)
    a, n0 = 1.0, (0, 1)
    c0 = CoefficientField.from_modes(s.box, {n0: a})
    res = picard_solve(s, c0)
    exact = plane_wave_exact(a, n0, OMEGA, 1, 1, 0.5)
    assert res.converged and not res.diverged
    assert abs(res.trajectory.field(-1)[n0] - exact) <= 1e-6


def test_divergence_is_reported_not_raised():
    s = spec(t_end=3.0, steps=60, picard_depth=30, A=1.0)
    box = s.box
    rng = make_rng(3, 9)
    c0 = CoefficientField(box, 3.0 * (rng.normal(size=box.shape) + 1j * rng.normal(size=box.shape)))
    res = picard_solve(s, c0)
    assert res.diverged and not res.converged


def test_gauge_covariance_of_both_solvers():
    s = spec(t_end=0.02, steps=40)
    c0 = two_mode(s.box)
    rot = cmath.exp(1j * math.pi / 3)
    for solve in (lambda c: picard_solve(s, c).trajectory.values, lambda c: rk4_solve(s, c).values):
        assert np.max(np.abs(solve(c0 * rot) - rot * solve(c0))) <= 1e-10


def test_mass():
    box = LatticeBox(2, 1)
    assert mass(CoefficientField.zeros(box)) == 0
    assert mass(CoefficientField.from_modes(box, {(1, 0): 0.3 + 0.4j})) == pytest.approx(0.25)


def test_interaction_picture_integrator_single_mode():
    box = LatticeBox(2, 1)
    a, n0 = 0.7, (1, 0)
    c0 = CoefficientField.from_modes(box, {n0: a})
    out = evolve_interaction(c0, OMEGA, 1, 0.01, 12.0, dt_max=0.05)
    assert out[n0] == pytest.approx(plane_wave_exact(a, n0, OMEGA, 1, 0.01, 12.0), abs=1e-12)


def test_interaction_picture_matches_rk4():
    s = spec(t_end=1.0, steps=4000)
    c0 = two_mode(s.box)
    rk = rk4_solve(s, c0)
    ip = evolve_interaction(c0, OMEGA, 1, 1.0, 1.0, dt_max=1e-3)
    assert np.max(np.abs(rk.values[-1] - ip.values)) <= 1e-9


def test_interaction_capacity():
    c0 = CoefficientField.zeros(LatticeBox(2, 1))
    with pytest.raises(CapacityError, match="needs 1000000 steps"):
        evolve_interaction(c0, OMEGA, 1, 0.1, 1e4, dt_max=0.01, max_steps=1000)
    assert required_steps(1.0, 0.3) == 4


def test_trajectory_serialization(tmp_path):
    s = spec(steps=4)
    c0 = two_mode(s.box)
    traj = rk4_solve(s, c0)
    paths = write_trajectory(traj, str(tmp_path / "t"), s.p)
    assert len(paths) == len(traj) + 1
    back = field_from_csv(open(paths[2]).read())
    assert np.array_equal(back.values, traj.values[2])
    lines = [json.loads(x) for x in open(paths[-1]).read().splitlines()]
    assert [x["node_index"] for x in lines] == list(range(5))
    assert set(lines[0]) == {"node_index", "t", "mass", "linf_coeff", "discarded_mass"}
    assert lines[0]["mass"] == mass(c0)
    again = write_trajectory(traj, str(tmp_path / "u"), s.p)
    for a, b in zip(paths, again):
        assert open(a, "rb").read() == open(b, "rb").read()


def test_trajectory_shape_check():
    g = TimeGrid(1.0, 2)
    with pytest.raises(ValueError):
        Trajectory(g, LatticeBox(2, 1), np.zeros((2, 3, 3)), "x")
