import numpy as np
from scipy.integrate import solve_ivp

from lqstack.filtering import DeterministicPath, solve_follower_filter
from lqstack.riccati import solve_follower_P

from conftest import make_model

# Frozen 100000-step self-reference for the filter state at t=T
# (regenerate with scripts/make_reference.py; cross-checked there against an
# adaptive integrator to 2.1e-13).
XHAT_T_REF = 1.4096484296196565


def filter_model(steps):
    return make_model(steps=steps, A=0.0, C=0.0, Q1=1.0, G1=0.0)


def test_zero_control_zero_offset_and_exponential_state():
    # Q1 = G1 = 0 forces P = 0; with zero filtered control the state estimate
    # is the plain exponential flow of the drift coefficient.
    m = make_model(steps=400, A=0.7, Q1=0.0, G1=0.0)
    P = solve_follower_P(m)
    fp = solve_follower_filter(m, P, np.zeros(401))
    assert np.all(fp.theta_hat.nodes == 0.0)
    times = m.grid.times()
    assert np.max(np.abs(fp.xhat.nodes - np.exp(0.7 * times))) < 1e-10


def test_zero_control_zero_offset_any_model():
    m = make_model(steps=300, D1=0.4, D2=0.2, C=0.5)
    P = solve_follower_P(m)
    fp = solve_follower_filter(m, P, np.zeros(301))
    assert np.all(fp.theta_hat.nodes == 0.0)
    assert np.all(fp.theta_hat.mids == 0.0)


def test_terminal_offset_and_initial_state_exact():
    m = make_model(steps=100)
    P = solve_follower_P(m)
    fp = solve_follower_filter(m, P, np.linspace(0.5, -0.5, 101))
    assert fp.theta_hat.nodes[-1] == 0.0
    assert fp.xhat.nodes[0] == m.x0


def test_filter_self_convergence():
    m = filter_model(1000)
    P = solve_follower_P(m)
    fp = solve_follower_filter(m, P, np.ones(1001))
    assert abs(fp.xhat.nodes[-1] - XHAT_T_REF) < 1e-8


def test_filter_against_adaptive_integrator():
    # Independent oracle for the same pair (unit filtered control).
    m = filter_model(800)
    P = solve_follower_P(m)
    fp = solve_follower_filter(m, P, np.ones(801))

    def theta_rhs(t, y):
        p = np.tanh(1.0 - t)
        return [p * y[0] - p]

    th = solve_ivp(theta_rhs, (1.0, 0.0), [0.0], rtol=1e-12, atol=1e-14, dense_output=True)

    def xhat_rhs(t, y):
        p = np.tanh(1.0 - t)
        return [-p * y[0] - th.sol(t)[0] + 1.0]

    xh = solve_ivp(xhat_rhs, (0.0, 1.0), [1.0], rtol=1e-12, atol=1e-14)
    assert abs(fp.xhat.nodes[-1] - xh.y[0, -1]) < 1e-9


def test_filter_substitution_residual_second_order():
    def residual(steps):
        m = filter_model(steps)
        P = solve_follower_P(m)
        u2 = np.sin(m.grid.times())
        fp = solve_follower_filter(m, P, u2)
        dt = m.grid.dt
        pn = P.values
        x = fp.xhat.nodes
        th = fp.theta_hat.nodes
        dx = (x[2:] - x[:-2]) / (2.0 * dt)
        dth = (th[2:] - th[:-2]) / (2.0 * dt)
        inner = slice(1, steps)
        rx = dx - (-pn[inner] * x[inner] - th[inner] + u2[inner])
        rt = dth - (pn[inner] * th[inner] - pn[inner] * u2[inner])
        return max(np.max(np.abs(rx)), np.max(np.abs(rt)))

    r1, r2 = residual(200), residual(400)
    assert 3.5 < r1 / r2 < 4.5


def test_leader_xhat_trivial_cases(eq_b200):
    # all cost weights zero: gains vanish, the estimate is the exponential flow
    m = make_model(steps=200, Q1=0.0, G1=0.0, Q2=0.0, G2=0.0)
    from lqstack.equilibrium import solve_equilibrium
    eq = solve_equilibrium(m)
    times = m.grid.times()
    assert np.max(np.abs(eq.xhat.nodes[:, 0] - np.exp(0.1 * times))) < 1e-10
    assert np.all(eq.xhat.nodes[:, 1] == 0.0)

    # zero initial state: homogeneous linear ODE stays at zero
    m0 = make_model(steps=200, x0=0.0)
    eq0 = solve_equilibrium(m0)
    assert np.all(eq0.xhat.nodes == 0.0)


def test_leader_xhat_initial_exact(eq_b200):
    assert np.array_equal(eq_b200.xhat.nodes[0], [1.0, 0.0])


def test_two_xhat_routes_agree(eq_b400):
    # The first component of the augmented estimate and the follower filter
    # driven by the leader's filtered feedback discretize the same ODE.
    eq = eq_b400
    fp = solve_follower_filter(eq.model, eq.P, eq.u2hat_path())
    scale = np.max(np.abs(eq.xhat.nodes[:, 0]))
    assert np.max(np.abs(fp.xhat.nodes - eq.xhat.nodes[:, 0])) <= 1e-9 * scale


def test_linearity_in_initial_state():
    m1 = make_model(steps=150, x0=1.25)
    m2 = make_model(steps=150, x0=2.5)
    from lqstack.equilibrium import solve_equilibrium
    a = solve_equilibrium(m1).xhat.nodes
    b = solve_equilibrium(m2).xhat.nodes
    # doubling x0 doubles the whole path (exact: scaling by 2 is lossless)
    assert np.array_equal(2.0 * a, b)


def test_deterministic_path_half_values():
    p = DeterministicPath(nodes=np.array([0.0, 2.0, 4.0]))
    assert p.at_half(1) == 1.0
    assert p.at_half(2) == 2.0
    q = DeterministicPath(nodes=np.array([0.0, 2.0, 4.0]), mids=np.array([0.7, 3.1]))
    assert q.at_half(1) == 0.7
    assert np.array_equal(q.half_values(), [0.0, 0.7, 2.0, 3.1, 4.0])
