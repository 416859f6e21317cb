import numpy as np
import pytest
import scipy.linalg

from conftest import constant_system
from enscontrol.errors import FileMismatchError, IntegrationError
from enscontrol.flow import (
    build_flow_table,
    forward_flow_step,
    inverse_flow_trajectory,
    load_flow_table,
    save_flow_table,
)
from enscontrol.model import (
    LinearEnsembleSystem,
    ParameterBox,
    harmonic_oscillator_system,
    make_parameter_grid,
    make_time_grid,
    random_timevarying_system,
)
from enscontrol.ode import IntegrationStats, IntegratorConfig, integrate
from oracles import expm_taylor, gauss_integral, rotation


def test_expm_oracle_against_scipy():
    rng = np.random.default_rng(0)
    for _ in range(5):
        A = 2 * rng.standard_normal((4, 4))
        np.testing.assert_allclose(expm_taylor(A), scipy.linalg.expm(A), rtol=1e-11, atol=1e-12)


class TestIntegrator:
    def test_scalar_exponential(self):
        nodes = np.linspace(0, 2, 11)
        out = integrate(lambda t, y: -y, np.array([1.0]), nodes, IntegratorConfig(1e-10, 1e-13))
        np.testing.assert_allclose(out[:, 0], np.exp(-nodes), rtol=1e-8)

    def test_lands_on_nodes(self):
        seen = []

        def f(t, y):
            seen.append(t)
            return np.ones_like(y)

        nodes = np.array([0.0, 0.1, 0.37, 1.0])
        out = integrate(f, np.zeros(1), nodes)
        np.testing.assert_allclose(out[:, 0], nodes, atol=1e-14)

    def test_fifth_order_convergence(self):
        # fixed steps by forcing tiny tolerance off and dense nodes
        def f(t, y):
            return np.array([y[1], -y[0]])

        errs = []
        for n in (10, 20):
            nodes = np.linspace(0, 1, n + 1)
            cfg = IntegratorConfig(rel_tol=1.0, abs_tol=1.0, initial_step=1.0)
            y = integrate(f, np.array([0.0, 1.0]), nodes, cfg, record=False)
            errs.append(abs(y[0] - np.sin(1.0)))
        assert errs[0] / errs[1] > 2 ** 4.5

    def test_underflow(self):
        with pytest.raises(IntegrationError) as info:
            integrate(lambda t, y: y ** 2, np.array([1.0]), np.array([0.0, 2.0]))
        assert info.value.t == pytest.approx(1.0, abs=1e-3)

    def test_stats(self):
        stats = IntegrationStats()
        integrate(lambda t, y: -3 * y, np.ones(2), np.array([0.0, 5.0]), stats=stats)
        assert stats.accepted > 5


class TestInverseFlow:
    def test_zero_dynamics(self, zero_dynamics):
        traj = inverse_flow_trajectory(zero_dynamics(3, 1), [0.0], make_time_grid(2.0, 7))
        np.testing.assert_array_equal(traj, np.broadcast_to(np.eye(3), (8, 3, 3)))

    @pytest.mark.parametrize("omega", [-10.0, -3.3, 0.5, 7.0, 10.0])
    def test_oscillator_closed_form(self, omega):
        tg = make_time_grid(1.0, 50)
        traj = inverse_flow_trajectory(harmonic_oscillator_system(), [omega], tg)
        np.testing.assert_allclose(traj, rotation(-omega * tg.nodes), rtol=0, atol=1e-6)

    def test_constant_matrix_exponential(self):
        rng = np.random.default_rng(5)
        A = rng.standard_normal((4, 4))
        tg = make_time_grid(1.5, 15)
        traj = inverse_flow_trajectory(constant_system(A, np.eye(4, 2)), [0.0], tg)
        for k, t in enumerate(tg.nodes):
            ref = expm_taylor(-A * t)
            assert np.max(np.abs(traj[k] - ref)) <= 1e-6 * max(1.0, np.max(np.abs(ref)))

    def test_tightening_tolerance(self):
        tg = make_time_grid(5.0, 40)
        sys = harmonic_oscillator_system()
        a = inverse_flow_trajectory(sys, [9.0], tg, IntegratorConfig(rel_tol=1e-6))
        b = inverse_flow_trajectory(sys, [9.0], tg, IntegratorConfig(rel_tol=1e-9, abs_tol=1e-12))
        assert np.max(np.abs(a - b)) < 1e-5

    def test_failure_carries_beta(self):
        sys = LinearEnsembleSystem(
            n=1, m=1, d=1,
            eval_A=lambda t, b: np.array([[-1.0 / (1.0 - t) ** 2 if t < 1 else -np.inf]]),
            eval_B=lambda t, b: np.ones((1, 1)))
        with pytest.raises(IntegrationError) as info:
            inverse_flow_trajectory(sys, [0.25], make_time_grid(2.0, 4))
        np.testing.assert_array_equal(info.value.beta, [0.25])


class TestForwardFlow:
    def test_empty_interval(self):
        M0 = np.arange(4.0).reshape(2, 2)
        out = forward_flow_step(harmonic_oscillator_system(), [3.0], 0.4, 0.4, M0)
        np.testing.assert_array_equal(out, M0)

    def test_zero_dynamics(self, zero_dynamics):
        out = forward_flow_step(zero_dynamics(), [0.0], 0.0, 3.0, np.eye(2))
        np.testing.assert_array_equal(out, np.eye(2))

    @pytest.mark.parametrize("t", [0.3, 1.0, 2.7])
    def test_oscillator(self, t):
        out = forward_flow_step(harmonic_oscillator_system(), [4.0], 0.0, t, np.eye(2))
        np.testing.assert_allclose(out, rotation(4.0 * t), atol=1e-6)

    def test_inverse_consistency(self):
        tg = make_time_grid(1.0, 10)
        for seed in range(4):
            sys = random_timevarying_system(seed)
            beta = [0.005, -0.03]
            psi = inverse_flow_trajectory(sys, beta, tg)
            phi = forward_flow_step(sys, beta, 0.0, 1.0, np.eye(4))
            assert np.max(np.abs(psi[-1] @ phi - np.eye(4))) <= 10 * 1e-6 * max(1, np.abs(phi).max())

    def test_composition(self):
        rng = np.random.default_rng(2)
        sys = random_timevarying_system(4)
        beta = [-0.004, 0.06]
        cfg = IntegratorConfig(rel_tol=1e-9, abs_tol=1e-12)
        for _ in range(5):
            ta, tb, tc = np.sort(rng.uniform(0, 1, 3))
            direct = forward_flow_step(sys, beta, ta, tc, np.eye(4), cfg)
            split = forward_flow_step(sys, beta, tb, tc, forward_flow_step(sys, beta, ta, tb, np.eye(4), cfg), cfg)
            np.testing.assert_allclose(direct, split, rtol=1e-6, atol=1e-7)


class TestFlowTable:
    def test_oscillator_table(self):
        pg = make_parameter_grid(ParameterBox([-10], [10]), [4])
        tg = make_time_grid(1.0, 10)
        table = build_flow_table(harmonic_oscillator_system(), pg, tg)
        assert table.inverse_flows.shape == (4, 11, 2, 2)
        ref = rotation(-np.outer(pg.points[:, 0], tg.nodes))
        np.testing.assert_allclose(table.inverse_flows, ref, atol=1e-6)
        np.testing.assert_allclose(np.linalg.det(table.inverse_flows), 1.0, rtol=1e-5)

    def test_zero_dynamics_table(self, zero_dynamics):
        pg = make_parameter_grid(ParameterBox([0], [1]), [3])
        table = build_flow_table(zero_dynamics(), pg, make_time_grid(1.0, 5))
        np.testing.assert_array_equal(table.inverse_flows, np.broadcast_to(np.eye(2), (3, 6, 2, 2)))

    def test_identity_at_start_and_threads_agree(self):
        sys = random_timevarying_system(0)
        pg = make_parameter_grid(ParameterBox([-0.01, -0.1], [0.01, 0.1]), [5, 30])
        tg = make_time_grid(1.0, 20)
        a = build_flow_table(sys, pg, tg, threads=1)
        b = build_flow_table(sys, pg, tg, threads=4)
        np.testing.assert_array_equal(a.inverse_flows, b.inverse_flows)
        np.testing.assert_array_equal(a.inverse_flows[:, 0], np.broadcast_to(np.eye(4), (150, 4, 4)))

    def test_liouville(self):
        sys = random_timevarying_system(9)
        pg = make_parameter_grid(ParameterBox([-0.01, -0.1], [0.01, 0.1]), [2, 2])
        tg = make_time_grid(1.0, 8)
        table = build_flow_table(sys, pg, tg)
        for j, beta in enumerate(pg.points):
            for k, t in enumerate(tg.nodes):
                trace_int = gauss_integral(lambda s: np.trace(sys.A(s, beta)), 0.0, t, pieces=20) if t else 0.0
                assert np.linalg.det(table.inverse_flows[j, k]) == pytest.approx(np.exp(-trace_int), rel=1e-5)

    def test_cache_round_trip(self, tmp_path):
        pg = make_parameter_grid(ParameterBox([-1], [1]), [3])
        tg = make_time_grid(0.5, 6)
        table = build_flow_table(harmonic_oscillator_system(), pg, tg)
        path = tmp_path / "flow.bin"
        save_flow_table(table, path)
        loaded = load_flow_table(path, pg, tg)
        assert loaded.inverse_flows.tobytes() == table.inverse_flows.tobytes()
        with pytest.raises(FileMismatchError):
            load_flow_table(path, pg, make_time_grid(0.5, 7))
        with pytest.raises(FileMismatchError):
            load_flow_table(path, make_parameter_grid(ParameterBox([-1], [2]), [3]), tg)
