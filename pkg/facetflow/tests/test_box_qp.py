import unittest

import numpy as np
from scipy import optimize, sparse

from facetflow.box_qp import _value, projected_residual, solve_box_qp
from facetflow.errors import Infeasible, NotConverged


class TestBoxQP(unittest.TestCase):
    """Unit tests for the projected Newton solver."""

    def test_unconstrained_minimizer_inside_box(self):
        """Test that an interior minimizer is found in one Newton step."""
        H = np.array([[2.0, 0.0], [0.0, 4.0]])
        g = np.array([-2.0, -4.0])
        result = solve_box_qp(H, g, -10.0, 10.0)
        np.testing.assert_allclose(result.x, [1.0, 1.0])
        self.assertTrue(result.converged)
        self.assertAlmostEqual(result.value, -3.0)

    def test_active_bounds(self):
        """Test a problem whose solution sits on the box."""
        H = np.array([[2.0, 1.0], [1.0, 2.0]])
        g = np.array([-10.0, 4.0])
        result = solve_box_qp(H, g, [-1.0, -1.0], [1.0, 1.0])
        np.testing.assert_allclose(result.x, [1.0, -1.0])
        self.assertLessEqual(result.residual, 1e-12)

    def test_sparse_matches_dense(self):
        """Test that the sparse path agrees with the dense one on a tridiagonal problem."""
        n = 30
        H = sparse.diags([-np.ones(n - 1), 2.5 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
        g = np.sin(np.arange(n))
        dense = solve_box_qp(H.toarray(), g, -0.3, 0.3)
        sparse_result = solve_box_qp(H, g, -0.3, 0.3, x0=np.zeros(n))
        np.testing.assert_allclose(sparse_result.x, dense.x, atol=1e-10)

    def test_matches_bounded_least_squares(self):
        """Test coupled problems with many active bounds against scipy's bounded least squares."""
        rng = np.random.default_rng(5)
        for trial in range(30):
            with self.subTest(trial=trial):
                n = 8
                q, _ = np.linalg.qr(rng.standard_normal((n, n)))
                A = q @ np.diag(np.linspace(1.0, 30.0, n)) @ q.T
                b = 3.0 * rng.standard_normal(n)
                lower, upper = -0.2 * rng.random(n), 0.2 * rng.random(n)
                H, g = A.T @ A, -(A.T @ b)
                result = solve_box_qp(H, g, lower, upper)
                reference = optimize.lsq_linear(A, b, bounds=(lower, upper), method="bvls", tol=1e-14).x
                np.testing.assert_allclose(result.x, reference, atol=1e-7)
                self.assertLessEqual(result.value, _value(H, g, reference) + 1e-10)

    def test_clipped_newton_step(self):
        """Test a start on the bound where the Newton step leaves the box along a coupled direction."""
        H = np.array([[1.0, 0.99], [0.99, 1.0]])
        g = np.array([-1.0, 5.0])
        result = solve_box_qp(H, g, [-1.0, -1.0], [1.0, 1.0], x0=np.array([1.0, 0.0]))
        self.assertTrue(result.converged)
        np.testing.assert_allclose(result.x, [1.0, -1.0])
        self.assertAlmostEqual(result.value, -5.99)

    def test_kkt_residual(self):
        """Test the projected residual at a hand-made KKT point."""
        x = np.array([1.0, 0.0])
        grad = np.array([-3.0, 0.0])
        self.assertEqual(projected_residual(x, grad, np.array([-1.0, -1.0]), np.array([1.0, 1.0])), 0.0)

    def test_empty_box(self):
        """Test that crossed bounds raise Infeasible."""
        with self.assertRaises(Infeasible):
            solve_box_qp(np.eye(2), np.zeros(2), [1.0, 0.0], [0.0, 1.0])

    def test_not_converged(self):
        """Test that a tiny iteration budget raises unless failures are allowed."""
        n = 30
        H = sparse.diags([-np.ones(n - 1), 2.5 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
        g = np.sin(np.arange(n))
        with self.assertRaises(NotConverged):
            solve_box_qp(H, g, -0.3, 0.3, max_iter=1)
        result = solve_box_qp(H, g, -0.3, 0.3, max_iter=1, raise_on_failure=False)
        self.assertFalse(result.converged)


if __name__ == "__main__":
    unittest.main()
