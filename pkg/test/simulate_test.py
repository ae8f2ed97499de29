"""
Unit tests for the paraflat.simulate module
"""
import unittest
from unittest.mock import patch

import numpy as np

from paraflat.discretize import build_semidiscrete, growth_bound, norm_2d, steady_state
from paraflat.errors import IntegrationError, ValidationError
from paraflat.problem import EndpointState, Piece, PiecewiseSmoothFn
from paraflat.simulate import (Trajectory, convergence_study, initial_vector, integrate, verify,
                               zero_input)
from test.problems import constant_problem


def first_mode():
    return PiecewiseSmoothFn([0.0, 1.0], [Piece.from_expr("cos(pi*x/2)")])


class TestIntegrate(unittest.TestCase):
    """Tests for the time integrator"""

    def setUp(self):
        """Set up the constant-coefficient system on n = 30"""
        self.problem = constant_problem()
        self.sys = build_semidiscrete(self.problem, 30)

    def test_eigenvector_decay(self):
        """Test e^{lam T} decay of an eigenvector without input"""
        lam, vecs = self.sys.symmetrizer.modes
        v = self.sys.symmetrizer.p * vecs[:, -1]

        out = integrate(self.sys, v, zero_input, 0.5, 1e-4, store_every=5000)
        np.testing.assert_allclose(out.final, np.exp(lam[-1] * 0.5) * v, rtol=1e-6)

    def test_second_order_in_time(self):
        """Test that halving dt divides the terminal error by about four"""
        v0 = initial_vector(first_mode(), self.sys)
        exact = self.sys.symmetrizer.propagate(v0, 0.2)

        errors = [norm_2d(integrate(self.sys, v0, zero_input, 0.2, dt).final - exact)
                  for dt in (1e-2, 5e-3, 2.5e-3)]
        slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        np.testing.assert_array_less(1.8, slopes)
        np.testing.assert_array_less(slopes, 2.2)

    def test_growth_bound_holds(self):
        """Test ||v(t)|| <= M e^{omega t} ||v0|| along runs from random vectors"""
        sys = build_semidiscrete(constant_problem(sigma=2.0), 30)
        M, omega = growth_bound(sys)
        rng = np.random.default_rng(3)

        self.assertGreater(M, 1.0)
        self.assertEqual(omega, 0.0)
        for _ in range(5):
            v0 = rng.standard_normal(30)
            out = integrate(sys, v0, zero_input, 0.2, 1e-3)
            bound = M * np.exp(omega * out.times) * norm_2d(v0)
            np.testing.assert_array_less(out.norms(), bound * (1 + 1e-12))

    def test_steady_state_is_kept(self):
        """Test that the steady state stays put under its constant input"""
        v_ss = np.asarray(steady_state(self.sys, 0.5))

        out = integrate(self.sys, v_ss, lambda t: np.full_like(t, 0.5), 0.2, 1e-3)
        np.testing.assert_allclose(out.final, v_ss, atol=1e-10)

    def test_snapshots(self):
        """Test the stored snapshot times"""
        out = integrate(self.sys, EndpointState.zero(), zero_input, 0.1, 1e-3, store_every=10)

        self.assertEqual(out.states.shape, (11, 30))
        self.assertEqual(out.times[-1], 0.1)
        np.testing.assert_allclose(np.diff(out.times), 0.01)
        np.testing.assert_array_equal(out.norms(), 0.0)

    def test_non_finite_state(self):
        """Test that a blown-up state raises"""
        with self.assertRaises(IntegrationError):
            integrate(self.sys, np.zeros(30), lambda t: np.full_like(t, np.inf), 0.01, 1e-3)

    def test_invalid_step(self):
        """Test that non-positive horizons and steps are refused"""
        with self.assertRaises(ValidationError):
            integrate(self.sys, np.zeros(30), zero_input, 0.0, 1e-3)
        with self.assertRaises(ValidationError):
            integrate(self.sys, np.zeros(30), zero_input, 0.1, -1e-3)


class TestInitialVector(unittest.TestCase):
    """Tests for the conversion of states to grid vectors"""

    def setUp(self):
        """Set up the constant-coefficient system on n = 10"""
        self.sys = build_semidiscrete(constant_problem(), 10)

    def test_kinds(self):
        """Test every accepted kind of state"""
        np.testing.assert_array_equal(initial_vector(EndpointState.zero(), self.sys), np.zeros(10))
        np.testing.assert_allclose(initial_vector(EndpointState.steady(1.0), self.sys),
                                   np.asarray(steady_state(self.sys, 1.0)))
        x = np.arange(1, 11) / 11
        np.testing.assert_allclose(initial_vector(first_mode(), self.sys), np.cos(np.pi * x / 2))
        np.testing.assert_allclose(initial_vector((first_mode(), first_mode()), self.sys),
                                   2 * np.cos(np.pi * x / 2))

    def test_wrong_length(self):
        """Test that arrays of the wrong length are refused"""
        with self.assertRaises(ValidationError):
            initial_vector(np.zeros(9), self.sys)

    def test_trajectory_shape(self):
        """Test that a trajectory needs one state per time"""
        with self.assertRaises(ValidationError):
            Trajectory(np.array([0.0, 1.0]), np.zeros((3, 10)))


class TestVerify(unittest.TestCase):
    """Tests for the fine-grid check of planned inputs"""

    def setUp(self):
        """Set up the constant-coefficient problem"""
        self.problem = constant_problem()

    def test_zero_stays_zero(self):
        """Test a zero terminal error with a passing step-halving check"""
        result = verify(self.problem, EndpointState.zero(), EndpointState.zero(), zero_input,
                        0.1, 20, 1e-3, design_n=10)

        self.assertEqual(result["terminal_error"], 0.0)
        self.assertTrue(result["dt_richardson"]["passed"])
        self.assertEqual(result["n_sim"], 20)

    def test_trajectory_and_snapshot_error(self):
        """Test the kept fine-grid run and its distance to a design-grid reference"""
        design = build_semidiscrete(self.problem, 10)
        v0 = initial_vector(first_mode(), design)

        def reference(times):
            return np.array([design.symmetrizer.propagate(v0, t) for t in times])

        result = verify(self.problem, first_mode(), EndpointState.zero(), zero_input,
                        0.1, 20, 1e-3, design_n=10, richardson=False, reference=reference)
        traj = result["trajectory"]
        self.assertEqual(traj.n, 20)
        self.assertEqual(len(traj.times), 101)
        self.assertEqual(traj.times[-1], 0.1)
        np.testing.assert_array_equal(traj.final, result["final"])
        self.assertGreater(result["snapshot_error"], 0.0)
        self.assertLess(result["snapshot_error"], 0.05)

    def test_steady_transfer(self):
        """Test that holding the steady input keeps the steady state"""
        target = EndpointState.steady(0.5)
        result = verify(self.problem, target, target, lambda t: np.full_like(t, 0.5),
                        0.1, 25, 1e-3, richardson=False)

        self.assertLess(result["terminal_error"], 1e-10)
        self.assertIsNone(result["dt_richardson"])

    def test_design_grid_refused(self):
        """Test that the design grid cannot double as verification grid"""
        with self.assertRaises(ValidationError):
            verify(self.problem, EndpointState.zero(), EndpointState.zero(), zero_input,
                   0.1, 20, 1e-3, design_n=20)


class TestConvergenceStudy(unittest.TestCase):
    """Tests for the grid convergence study"""

    def test_state_error_decreases(self):
        """Test second-order decrease of the state error against the reference"""
        rows = convergence_study(constant_problem(), first_mode(), zero_input, [15, 31], 0.1,
                                 1e-3, n_ref=127)

        self.assertEqual([r["n"] for r in rows], [15, 31])
        self.assertLess(rows[1]["state_error"], 0.5 * rows[0]["state_error"])
        self.assertLess(rows[1]["trace_error"], rows[0]["trace_error"])

    def test_reference_must_be_finer(self):
        """Test that the reference order is at least four times the largest order"""
        with self.assertRaises(ValidationError):
            convergence_study(constant_problem(), first_mode(), zero_input, [15, 31], 0.1,
                              1e-3, n_ref=120)

    @patch("paraflat.simulate.Bar")
    def test_progress(self, mock_bar):
        """Test that the progress bar advances once per grid"""
        convergence_study(constant_problem(), first_mode(), zero_input, [7, 15], 0.05, 1e-3,
                          n_ref=63, show_progress=True)

        self.assertEqual(mock_bar.return_value.next.call_count, 2)
