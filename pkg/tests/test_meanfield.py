import math

import numpy as np
import pytest

from iqasim import (AnnealPath, FieldProfile, MeanFieldState, PSpinModel,
                    SaddlePointQuery, ground_state_reference_curve,
                    initial_product_state, run_meanfield, solve_saddle,
                    solve_saddle_branches, step)
from iqasim.errors import DomainError


def saddle_oracle(s, tau, p=3, resolution=1e-6):
    """Dense-grid scan of the zero-T self-consistency map, minimal f."""
    m = np.arange(0.0, 1.0 + resolution / 2, resolution)
    h = p * s * m ** (p - 1)
    rhs = (1 - tau) * h / np.sqrt(h * h + 1.0) + tau * np.sign(h)
    g = rhs - m
    roots = [0.0] if abs(g[0]) < 1e-12 else []
    flips = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]
    roots.extend(0.5 * (m[i] + m[i + 1]) for i in flips)
    if g[-1] == 0.0:
        roots.append(1.0)
    best = None
    for root in roots:
        hh = p * s * root ** (p - 1)
        f = (-s * root ** p + hh * root
             - (1 - tau) * math.sqrt(hh * hh + 1.0) - tau * abs(hh))
        if best is None or f < best[2]:
            best = (root, hh, f)
    return best


# frozen from the oracle above at resolution 1e-6 (the Eq.-(9) path start)
ORACLE_START = (0.102856436157, 0.0031738339376757058, -0.9001042835003353)


def test_saddle_trivial_examples():
    sol = solve_saddle(SaddlePointQuery(0.7, 1.0, 3))
    assert sol.m == 1.0 and sol.h == pytest.approx(3 * 0.7)
    sol = solve_saddle(SaddlePointQuery(0.0, 0.0, 3))
    assert sol.m == 0.0 and sol.h == 0.0 and sol.f == -1.0


def test_saddle_path_start_against_oracle():
    m_o, h_o, f_o = saddle_oracle(0.1, 0.1)
    sol = solve_saddle(SaddlePointQuery(0.1, 0.1, 3))
    assert sol.m == pytest.approx(m_o, abs=2e-6)
    assert sol.m == pytest.approx(ORACLE_START[0], abs=1e-9)
    assert sol.h == pytest.approx(ORACLE_START[1], abs=1e-12)
    assert sol.f == pytest.approx(ORACLE_START[2], abs=1e-12)
    assert sol.f == pytest.approx(f_o, abs=1e-9)
    assert sol.residual < 1e-10


def test_saddle_branches_sorted_and_consistent():
    branches = solve_saddle_branches(SaddlePointQuery(0.3, 0.4, 3))
    assert all(b.residual < 1e-10 for b in branches)
    assert all(branches[i].f <= branches[i + 1].f
               for i in range(len(branches) - 1))
    for b in branches:
        assert b.h == pytest.approx(3 * 0.3 * b.m ** 2, abs=1e-12)


def test_saddle_finite_beta_converges():
    for s, tau in ((0.1, 0.1), (0.5, 0.3), (0.9, 0.8), (0.2, 0.6)):
        cold = solve_saddle(SaddlePointQuery(s, tau, 3))
        warm = solve_saddle(SaddlePointQuery(s, tau, 3, beta=1e4))
        assert abs(warm.m - cold.m) < 1e-3


def test_saddle_general_gammas_matches_weights():
    # a half-on/half-off field array reproduces the tau = 1/2 weights
    gam = np.array([1.0] * 50 + [0.0] * 50)
    a = solve_saddle(SaddlePointQuery(0.4, 0.5, 3))
    b = solve_saddle(SaddlePointQuery(0.4, 0.5, 3), gammas=gam)
    assert b.m == pytest.approx(a.m, abs=1e-12)


def test_initial_product_state_examples():
    st0 = initial_product_state(SaddlePointQuery(0.0, 0.0, 3),
                                FieldProfile.ramp(3))
    assert np.allclose(st0.a, 1 / math.sqrt(2))
    assert np.allclose(st0.b, 1 / math.sqrt(2))
    # h > 0 with the field off pins the spin up exactly
    st1 = initial_product_state(SaddlePointQuery(0.6, 1.0, 3),
                                FieldProfile.ramp(2))
    assert np.allclose(st1.a, 1.0) and np.allclose(st1.b, 0.0)


def test_initial_product_state_tilted_spinor():
    from iqasim.meanfield import _ground_spinor
    a, b = _ground_spinor(1.0, 1.0)
    assert abs(a) ** 2 - abs(b) ** 2 == pytest.approx(1 / math.sqrt(2))
    assert abs(a) ** 2 + abs(b) ** 2 == pytest.approx(1.0, abs=1e-15)
    # ground-state energy condition: H v = -sqrt(2) v
    hmat = np.array([[-1.0, -1.0], [-1.0, 1.0]])
    v = np.array([a, b])
    assert np.allclose(hmat @ v, -math.sqrt(2) * v, atol=1e-14)


def test_initial_product_state_degeneracy_warning():
    with pytest.warns(UserWarning, match="degenerate"):
        st0 = initial_product_state(SaddlePointQuery(0.0, 0.0, 3),
                                    FieldProfile.quench(2))
    # spin 2's field is already off at tau = 0 and h = 0 there
    assert st0.a[1] == 1.0 and st0.b[1] == 0.0


def test_initial_product_state_requires_zero_temperature():
    with pytest.raises(DomainError):
        initial_product_state(SaddlePointQuery(0.1, 0.1, 3, beta=10.0),
                              FieldProfile.ramp(2))


def test_step_sigma_z_eigenstate_only_dephases():
    state = MeanFieldState(0.0, np.ones(4, complex), np.zeros(4, complex), 0.0)
    out = step(state, s=1.0, gammas=np.zeros(4), dt=0.37, p=3)
    assert np.allclose(out.magnetizations(), 1.0, atol=1e-15)


def test_step_rabi_rotation():
    state = MeanFieldState(0.0, np.array([1 + 0j]), np.array([0j]), 0.0)
    for dt in (0.1, 0.5, math.pi / 2):
        out = step(state, s=0.0, gammas=[1.0], dt=dt, p=3)
        assert out.magnetizations()[0] == pytest.approx(math.cos(2 * dt),
                                                        abs=1e-12)
    out = step(state, s=0.0, gammas=[1.0], dt=math.pi / 2, p=3)
    assert out.magnetizations()[0] == pytest.approx(-1.0, abs=1e-12)


def _mz_after(path, profile, model, dt):
    path = AnnealPath(path.s0, path.tau0, path.s1, path.tau1,
                      path.total_time, dt)
    return run_meanfield(path, profile, model).final_mz


def test_step_richardson_first_order():
    # halving dt must shrink the change in final m^z (left-endpoint scheme
    # converges at first order)
    model = PSpinModel(64, 3)
    profile = FieldProfile.ramp(64)
    base = AnnealPath(0.1, 0.1, 1.0, 1.0, 20.0, 0.2)
    m1 = _mz_after(base, profile, model, 0.2)
    m2 = _mz_after(base, profile, model, 0.1)
    m3 = _mz_after(base, profile, model, 0.05)
    m4 = _mz_after(base, profile, model, 0.025)
    d12, d23, d34 = abs(m1 - m2), abs(m2 - m3), abs(m3 - m4)
    assert d23 < d12
    assert d34 < d23


def test_two_half_steps_vs_one_step_quadratic():
    rng = np.random.default_rng(5)
    a = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    b = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    norm = np.sqrt(np.abs(a) ** 2 + np.abs(b) ** 2)
    state = MeanFieldState(0.0, a / norm, b / norm, 0.0)
    gam = FieldProfile.ramp(16).fields(0.3, 0.3)
    errs = []
    for dt in (0.2, 0.1, 0.05):
        one = step(state, 0.3, gam, dt)
        half = step(step(state, 0.3, gam, dt / 2), 0.3, gam, dt / 2)
        errs.append(abs(one.mean_mz() - half.mean_mz()))
    # O(dt^2) difference: ratio ~ 4 per halving
    assert errs[1] < errs[0] / 2.5
    assert errs[2] < errs[1] / 2.5


def test_frozen_spin_conservation_via_steps():
    model = PSpinModel(8, 3)
    profile = FieldProfile.ramp(8)
    path = AnnealPath(0.1, 0.1, 1.0, 1.0, 40.0, 0.1)
    state = initial_product_state(SaddlePointQuery(0.1, 0.1, 3), profile)
    frozen = {}
    t = 0.0
    for k in range(path.n_steps):
        s, tau = path.at(t)
        gam = profile.fields(s, tau)
        for j in range(8):
            if gam[j] == 0.0 and j not in frozen:
                frozen[j] = state.magnetizations()[j]
        if frozen:
            mags = state.magnetizations()
            for j, val in frozen.items():
                assert abs(mags[j] - val) < 1e-12
        state = step(state, s, gam, path.dt, p=3)
        t += path.dt
    assert len(frozen) == 7  # spin 1 only turns off exactly at t = T


def test_homogeneous_symmetry_spins_identical():
    model = PSpinModel(16, 3)
    profile = FieldProfile.homogeneous(16)
    path = AnnealPath(0.1, 0.1, 1.0, 1.0, 5.0, 0.05)
    state = initial_product_state(SaddlePointQuery(0.1, 0.1, 3), profile)
    t = 0.0
    for _ in range(path.n_steps):
        s, tau = path.at(t)
        state = step(state, s, profile.fields(s, tau), path.dt)
        t += path.dt
        assert np.all(state.a == state.a[0])
        assert np.all(state.b == state.b[0])


def test_run_meanfield_matches_step_loop():
    model = PSpinModel(12, 3)
    profile = FieldProfile.ramp(12)
    path = AnnealPath(0.1, 0.1, 1.0, 1.0, 3.0, 0.1)
    traj = run_meanfield(path, profile, model, stride=1)
    state = initial_product_state(SaddlePointQuery(0.1, 0.1, 3), profile)
    t = 0.0
    for k in range(path.n_steps):
        assert traj.m_z[k] == pytest.approx(state.mean_mz(), abs=1e-12)
        s, tau = path.at(t)
        state = step(state, s, profile.fields(s, tau), path.dt)
        t += path.dt
    assert traj.m_z[-1] == pytest.approx(state.mean_mz(), abs=1e-12)
    assert traj.norm_drift < 1e-9
    assert np.allclose(traj.energy_density, -traj.m_z ** 3, atol=0)


def test_reference_curve_endpoints_and_monotone():
    model = PSpinModel(50, 3)
    profile = FieldProfile.ramp(50)
    path = AnnealPath(0.1, 0.1, 1.0, 1.0, 10.0, 0.1)
    curve = ground_state_reference_curve(path, profile, model, n_points=41)
    assert curve[-1][1] == 1.0
    m_o, _, _ = saddle_oracle(0.1, 0.1, resolution=1e-5)
    assert curve[0][1] == pytest.approx(m_o, abs=2e-5)
    ms = [m for _, m in curve]
    assert all(b >= a - 1e-12 for a, b in zip(ms, ms[1:]))
