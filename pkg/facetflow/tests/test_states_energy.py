import math
import unittest

import numpy as np

from facetflow.errors import ConfigError, DimensionMismatch, InvalidParam
from facetflow.geometry import make_domain
from facetflow.states_energy import (
    FlowConfig,
    State,
    check_state,
    difference,
    energy_E,
    energy_E_eps,
    inner_tau,
    is_ordered,
    lattice_sup_inf,
    norm_tau,
    total_variation,
    trace_gap,
    trace_state,
)


class TestStates(unittest.TestCase):
    """Unit tests for states and the tau inner product."""

    def setUp(self):
        self.interval = make_domain("interval", L=1.0, n=11)

    def test_inner_tau_constants(self):
        """Test (U, U)_tau for u = v = 1 on the unit interval with tau = 2."""
        U = State(np.ones(11), np.ones(2))
        self.assertAlmostEqual(inner_tau(U, U, 2.0, self.interval), 5.0)
        self.assertAlmostEqual(norm_tau(U, 2.0, self.interval), math.sqrt(5.0))

    def test_inner_tau_rejects_bad_tau(self):
        """Test that tau must be positive."""
        U = State(np.ones(11), np.ones(2))
        with self.assertRaises(InvalidParam):
            inner_tau(U, U, 0.0, self.interval)

    def test_shape_checks(self):
        """Test that states of the wrong size are rejected."""
        with self.assertRaises(DimensionMismatch):
            check_state(State(np.ones(10), np.ones(2)), self.interval)
        with self.assertRaises(DimensionMismatch):
            check_state(State(np.ones(11), np.ones(1)), self.interval)
        with self.assertRaises(DimensionMismatch):
            State(np.array([0.0, np.nan]), np.zeros(1))
        with self.assertRaises(DimensionMismatch):
            difference(State(np.ones(3), np.ones(1)), State(np.ones(4), np.ones(1)))

    def test_trace_state_and_gap(self):
        """Test that a traced state has zero gap and a shifted layer shows up."""
        u = self.interval.nodes
        U = trace_state(self.interval, u)
        np.testing.assert_array_equal(U.v, [0.0, 1.0])
        np.testing.assert_array_equal(trace_gap(U, self.interval), [0.0, 0.0])
        shifted = State(U.u, U.v + 0.25)
        np.testing.assert_allclose(trace_gap(shifted, self.interval), [0.25, 0.25])

    def test_lattice_and_order(self):
        """Test the componentwise sup and inf."""
        U1 = State(np.array([0.0, 2.0]), np.array([1.0]))
        U2 = State(np.array([1.0, 1.0]), np.array([0.0]))
        sup, inf = lattice_sup_inf(U1, U2)
        np.testing.assert_array_equal(sup.u, [1.0, 2.0])
        np.testing.assert_array_equal(inf.v, [0.0])
        self.assertTrue(is_ordered(inf, sup))
        self.assertFalse(is_ordered(U1, U2))


class TestEnergy(unittest.TestCase):
    """Unit tests for E and E_eps."""

    def test_energy_of_traced_ramp(self):
        """Test that a traced ramp on the interval has E = total rise."""
        domain = make_domain("interval", L=1.0, n=21)
        U = trace_state(domain, 3.0 * domain.nodes)
        self.assertAlmostEqual(energy_E(U, domain), 3.0)

    def test_energy_counts_the_gap(self):
        """Test that a detached layer adds |Gamma| times the gap."""
        domain = make_domain("annulus", r0=0.5, R=2.0, gamma="inner", n=31)
        u = np.zeros(31)
        self.assertAlmostEqual(energy_E(State(u, [0.2]), domain), 0.2 * math.pi)

    def test_ball_ramp_total_variation(self):
        """Test that TV of u = r on B(0, 2) is pi R^2 up to the midpoint rule."""
        domain = make_domain("ball", R=2.0, n=201)
        self.assertAlmostEqual(total_variation(domain.nodes, domain), 4.0 * math.pi, places=10)

    def test_energy_eps(self):
        """Test E_eps on a constant and on a mismatched state."""
        domain = make_domain("interval", L=1.0, n=11)
        self.assertAlmostEqual(energy_E_eps(trace_state(domain, np.zeros(11)), 0.1, domain), 0.1)
        self.assertEqual(energy_E_eps(State(np.zeros(11), [0.0, 1.0]), 0.1, domain), math.inf)
        with self.assertRaises(InvalidParam):
            energy_E_eps(trace_state(domain, np.zeros(11)), 0.0, domain)

    def test_energy_eps_approaches_energy(self):
        """Test that E_eps tends to E on a traced ramp as eps shrinks."""
        domain = make_domain("interval", L=1.0, n=21)
        U = trace_state(domain, domain.nodes)
        for eps in (1e-2, 1e-4):
            with self.subTest(eps=eps):
                self.assertAlmostEqual(energy_E_eps(U, eps, domain), energy_E(U, domain), delta=2 * eps)


class TestEnergyProperties(unittest.TestCase):
    """Submodularity, homogeneity and the kernel of E on random states."""

    def setUp(self):
        self.domains = [make_domain("interval", L=1.0, n=17), make_domain("ball", R=1.5, n=17),
                        make_domain("annulus", r0=0.5, R=2.0, gamma="both", n=17)]
        self.rng = np.random.default_rng(2024)

    def _random_state(self, domain):
        return State(self.rng.standard_normal(domain.n), self.rng.standard_normal(len(domain.gamma)))

    def test_submodular(self):
        """Test E(U v W) + E(U ^ W) <= E(U) + E(W) over random pairs."""
        for domain in self.domains:
            for trial in range(20):
                with self.subTest(kind=domain.kind, trial=trial):
                    U, W = self._random_state(domain), self._random_state(domain)
                    sup, inf = lattice_sup_inf(U, W)
                    lhs = energy_E(sup, domain) + energy_E(inf, domain)
                    self.assertLessEqual(lhs, energy_E(U, domain) + energy_E(W, domain) + 1e-12)

    def test_one_homogeneous(self):
        """Test E(c U) = |c| E(U) for positive and negative c."""
        for domain in self.domains:
            U = self._random_state(domain)
            for c in (0.0, 0.5, 3.0, -2.0):
                with self.subTest(kind=domain.kind, c=c):
                    scaled = State(c * U.u, c * U.v)
                    self.assertAlmostEqual(energy_E(scaled, domain), abs(c) * energy_E(U, domain), places=10)

    def test_zero_exactly_on_constants(self):
        """Test that E vanishes on traced constants and nowhere else."""
        for domain in self.domains:
            with self.subTest(kind=domain.kind):
                constant = trace_state(domain, np.full(domain.n, 1.7))
                self.assertEqual(energy_E(constant, domain), 0.0)
                bump = constant.u.copy()
                bump[domain.n // 2] += 1e-3
                self.assertGreater(energy_E(State(bump, constant.v), domain), 0.0)
                self.assertGreater(energy_E(State(constant.u, constant.v + 1e-3), domain), 0.0)


class TestFlowConfig(unittest.TestCase):
    """Unit tests for the run configuration."""

    def test_invalid_values(self):
        """Test that non-positive parameters raise ConfigError."""
        for kwargs in (dict(tau=0), dict(dt=-1), dict(T=0), dict(eps=-0.1),
                       dict(tol=0), dict(max_iter=0), dict(solver="newton")):
            with self.subTest(**kwargs):
                with self.assertRaises(ConfigError):
                    FlowConfig(**kwargs)

    def test_steps(self):
        """Test the step count for a horizon that is a multiple of dt."""
        self.assertEqual(FlowConfig(dt=1e-3, T=0.2).steps, 200)
        self.assertEqual(FlowConfig(dt=0.3, T=1.0).steps, 4)

    def test_default_dt_from_domain(self):
        """Test that an unset dt becomes h / 4 of the domain and an explicit one is kept."""
        domain = make_domain("interval", L=1.0, n=401)
        config = FlowConfig(T=0.2)
        self.assertIsNone(config.dt)
        with self.assertRaises(ConfigError):
            config.steps
        resolved = config.resolve(domain)
        self.assertAlmostEqual(resolved.dt, 1.0 / 1600.0)
        self.assertEqual(resolved.steps, 320)
        self.assertEqual(FlowConfig(dt=1e-2).resolve(domain).dt, 1e-2)


if __name__ == "__main__":
    unittest.main()
