import numpy as np
import pytest

from sandwichbeam.discretize import (
    VARIANT_CONTROLLED,
    VARIANT_STABILIZED,
    DiscreteState,
    Grid1D,
    build_system,
)
from sandwichbeam.params import DampingSpec, DelaySpec, GainConfig, SinusoidalDelay
from sandwichbeam.presets import (
    eigen_mode_state,
    make_histories,
    random_smooth_state,
    state_from_functions,
    zero_state,
)
from sandwichbeam.timestep import (
    IntegrationError,
    SchemeConfig,
    simulate,
    step_conservative_controlled,
    step_damped_delayed,
)

from test_params import unit_params


def stabilized(N=32, **kw):
    p = unit_params(**kw)
    return p, build_system(Grid1D(N=N, L=p.L), p, VARIANT_STABILIZED)


def controlled(N=32, **kw):
    p = unit_params(**kw)
    return p, build_system(Grid1D(N=N, L=p.L), p, VARIANT_CONTROLLED)


def test_scheme_config_validation():
    with pytest.raises(ValueError):
        SchemeConfig(dt=0.0, T=1.0)
    with pytest.raises(ValueError):
        SchemeConfig(dt=0.1, T=1.0, stride=0)
    cfg = SchemeConfig(dt=0.1, T=1.0)
    assert cfg.n_steps == 10


def test_zero_state_stays_zero():
    p, sys_ = stabilized(16)
    cfg = SchemeConfig(dt=0.05, T=0.5)
    out = simulate(zero_state(sys_), sys_, cfg)
    assert np.all(out.energy == 0.0)
    p, sysc = controlled(16)
    out = simulate(zero_state(sysc), sysc, cfg)
    assert np.all(out.energy == 0.0)


def test_midpoint_scheme_quadratic_invariant_oracle():
    # establish the conservation property on an independent dense toy
    # system, then require the production stepper to reproduce it
    rng = np.random.default_rng(1)
    n = 5
    A = rng.standard_normal((n, n))
    K = A @ A.T + n * np.eye(n)
    M = np.diag(rng.uniform(0.5, 2.0, n))
    q = rng.standard_normal(n)
    v = rng.standard_normal(n)
    dt = 0.01
    e0 = v @ M @ v + q @ K @ q
    for _ in range(2000):
        a = np.linalg.solve(M + 0.25 * dt * dt * K, -K @ (q + 0.5 * dt * v))
        q = q + dt * v + 0.5 * dt * dt * a
        v = v + dt * a
    assert abs(v @ M @ v + q @ K @ q - e0) <= 1e-10 * e0

    # conservative reduction of the stabilized variant over 1000 steps
    p, sys_ = stabilized(24)
    st = random_smooth_state(sys_, seed=3, prepared=True)
    cfg = SchemeConfig(dt=0.005, T=5.0, stride=100)
    out = simulate(st, sys_, cfg)
    assert out.relative_drift() <= 1e-10


def test_controlled_conservation_random_smooth():
    p, sys_ = controlled(32)
    st = random_smooth_state(sys_, seed=11)
    cfg = SchemeConfig(dt=1e-3, T=2.0, stride=200)
    out = simulate(st, sys_, cfg)
    assert out.relative_drift() <= 1e-8


def test_one_step_constant_control_matches_dense_oracle():
    p, sys_ = controlled(16)
    c = 0.8
    cfg = SchemeConfig(dt=0.01, T=0.01)
    state = zero_state(sys_)
    new = step_conservative_controlled(state, sys_, 0.0, cfg, lambda t: (c, 0.0, 0.0))
    # dense one-step oracle for the same midpoint equations
    n = sys_.ndof
    force = sys_.control_columns @ np.array([c, 0.0, 0.0])
    A = np.diag(sys_.M) + 0.25 * cfg.dt ** 2 * sys_.K
    a = np.linalg.solve(A, force)
    v1 = cfg.dt * a
    q1 = 0.5 * cfg.dt ** 2 * a
    assert np.allclose(new.p, v1, rtol=0, atol=1e-13)
    assert np.allclose(new.q, q1, rtol=0, atol=1e-13)
    # the boundary trace velocity picks up ~ dt * c * E1h1 / M_trace
    i4 = sys_.layout.trace_indices[0]
    lead = cfg.dt * c * p.E1h1 / sys_.M[i4]
    assert new.p[i4] == pytest.approx(lead, rel=0.05)


def test_step_damped_delayed_pushes_history():
    p, sys_ = stabilized(16)
    delays = DelaySpec.constant(0.3)
    gains = GainConfig(1.0, 0.1, 1.0, 0.1, 1.0, 0.05)
    st = random_smooth_state(sys_, seed=5, prepared=True)
    hist = make_histories(sys_, st, delays)
    n_before = [len(h) for h in hist]
    cfg = SchemeConfig(dt=0.02, T=0.02)
    new = step_damped_delayed(st, sys_, hist, 0.0, cfg, gains, delays, DampingSpec.constant(1.0))
    assert new.t == pytest.approx(0.02)
    assert all(len(h) == m + 1 for h, m in zip(hist, n_before))
    assert hist[0].last_time == pytest.approx(0.01)  # midpoint sample


def test_delay_safety_enforced():
    p, sys_ = stabilized(16)
    delays = DelaySpec.constant(0.05)
    gains = GainConfig(1.0, 0.1, 1.0, 0.0, 1.0, 0.0)
    st = random_smooth_state(sys_, seed=5, prepared=True)
    hist = make_histories(sys_, st, delays)
    cfg = SchemeConfig(dt=0.1, T=1.0)
    with pytest.raises(ValueError):
        simulate(st, sys_, cfg, gains=gains, delays=delays, histories=hist)


def test_unit_slope_delay_refused():
    p, sys_ = stabilized(16)
    delays = DelaySpec((SinusoidalDelay(2.0, 1.0, 1.0),) * 3)
    gains = GainConfig(1.0, 0.1, 1.0, 0.0, 1.0, 0.0)
    st = zero_state(sys_)
    hist = make_histories(sys_, st, delays)
    with pytest.raises(ValueError):
        simulate(st, sys_, SchemeConfig(dt=0.05, T=0.5), gains=gains, delays=delays, histories=hist)


def test_nonfinite_state_detected():
    p, sys_ = controlled(16)
    st = zero_state(sys_)
    st.q[0] = np.inf
    with pytest.raises(IntegrationError):
        simulate(st, sys_, SchemeConfig(dt=0.01, T=0.1))


def test_decimation_stride_honored():
    p, sys_ = controlled(16)
    st = random_smooth_state(sys_, seed=2)
    out = simulate(st, sys_, SchemeConfig(dt=0.01, T=0.2, stride=7))
    assert out.sample_times[0] == 0.0
    assert out.sample_times[-1] == pytest.approx(0.2)
    assert np.allclose(np.diff(out.sample_times)[:-1], 0.07)
    # T = 0: initial sample only
    out0 = simulate(st, sys_, SchemeConfig(dt=0.01, T=0.0))
    assert out0.n_steps == 0 and len(out0.sample_times) == 1


def test_time_reversibility_of_conservative_run():
    p, sys_ = controlled(24)
    st = random_smooth_state(sys_, seed=9)
    cfg = SchemeConfig(dt=0.005, T=1.0, stride=10 ** 9)
    fwd = simulate(st, sys_, cfg)
    back_start = DiscreteState(q=fwd.states_q[-1].copy(), p=-fwd.states_p[-1], t=0.0)
    back = simulate(back_start, sys_, cfg)
    q_rt = back.states_q[-1]
    p_rt = -back.states_p[-1]
    scale = max(np.max(np.abs(st.q)), np.max(np.abs(st.p)))
    assert np.max(np.abs(q_rt - st.q)) <= 1e-8 * scale
    assert np.max(np.abs(p_rt - st.p)) <= 1e-8 * scale


def test_scalar_delayed_reduction_second_order_in_time():
    # u-field only (k ~ 0): delayed wave equation against a dt/16 reference
    p, sys_ = stabilized(24, k=1e-12)
    delays = DelaySpec.constant(0.5)
    gains = GainConfig(1.0, 0.3, 0.0, 0.0, 0.0, 0.0)
    st = eigen_mode_state(sys_, 0, 1.0)

    def final(dt):
        hist = make_histories(sys_, st, delays)
        out = simulate(
            st, sys_, SchemeConfig(dt=dt, T=2.0, stride=10 ** 9),
            gains=gains, delays=delays, histories=hist,
        )
        return out.states_q[-1], out.states_p[-1]

    qr, pr = final(0.005 / 16)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        q, v = final(dt)
        errs.append(np.sqrt(np.sum((q - qr) ** 2) + np.sum((v - pr) ** 2)))
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(1.7 <= o <= 2.3 for o in orders), (errs, orders)


def test_monotone_decay_with_steep_delay_slope():
    # sinusoidal delays with slope bound 0.9 still give monotone energy
    p, sys_ = stabilized(32)
    delays = DelaySpec((SinusoidalDelay(0.5, 0.3, 3.0),) * 3)
    assert delays.slope_bound(0) == pytest.approx(0.9)
    gains = GainConfig(1.0, 0.1, 1.0, -0.08, 1.0, 0.05)
    damping = DampingSpec.constant(1.0)
    from sandwichbeam.hypotheses import validate_gains

    assert validate_gains(p, gains, delays).all_passed
    st = random_smooth_state(sys_, seed=21, prepared=True)
    hist = make_histories(sys_, st, delays)
    out = simulate(
        st, sys_, SchemeConfig(dt=0.05, T=8.0, stride=20),
        gains=gains, delays=delays, damping=damping, histories=hist,
    )
    assert out.max_energy_increase() <= 1e-10 * out.energy[0]
    assert out.energy[-1] < 0.05 * out.energy[0]


def test_exponential_damping_refactors_and_decays():
    p, sys_ = stabilized(16)
    from sandwichbeam.params import ExponentialDamping

    damping = DampingSpec((ExponentialDamping(0.5, 2.0, 1.0),) * 3)
    st = random_smooth_state(sys_, seed=4, prepared=True)
    out = simulate(st, sys_, SchemeConfig(dt=0.02, T=2.0, stride=10), damping=damping)
    assert out.max_energy_increase() == 0.0
    assert out.energy[-1] < out.energy[0]


def test_trace_ode_consistency_controlled():
    # the recorded boundary velocity differentiates (centered, second order)
    # to the trace equation -u_x(L) + f1; the spatial trace uses the
    # one-sided second-order stencil, so the comparison carries an O(dx)
    # floor on top of the O(dt^2) temporal term
    p, sys_ = controlled(64)
    st = eigen_mode_state(sys_, 2, 1.0)
    f1 = lambda t: 0.3 * np.sin(2.0 * t)
    controls = lambda t: (f1(t), 0.0, 0.0)
    i4 = sys_.layout.trace_indices[0]
    iu = sys_.layout.iu
    dx = sys_.grid.dx

    def gaps(dt):
        out = simulate(st, sys_, SchemeConfig(dt=dt, T=1.0, stride=1), controls=controls)
        psi4 = out.trace_velocities[:, 0]
        dpsi = (psi4[2:] - psi4[:-2]) / (2.0 * dt)
        worst = 0.0
        for n in range(1, out.n_steps):
            q = out.states_q[n]
            ux = (3.0 * q[iu[-1]] - 4.0 * q[iu[-2]] + q[iu[-3]]) / (2.0 * dx)
            worst = max(worst, abs(dpsi[n - 1] - (-ux + f1(out.times[n]))))
        return worst

    g1 = gaps(0.02)
    g2 = gaps(0.005)
    scale = 0.3  # control amplitude
    assert g2 <= 0.5 * dx * scale + 0.1 * g1
    assert g1 <= 0.05 * scale
