"""
Unit tests for the paraflat.nullcontrol module
"""
import unittest

import numpy as np

from paraflat.discretize import build_semidiscrete
from paraflat.errors import MagnitudeOverflowError, ValidationError
from paraflat.flatness import flat_table
from paraflat.gevrey import Psi
from paraflat.nullcontrol import (NullInput, SmoothedState, null_input, propagate,
                                  surrogate_convergence_check)
from paraflat.problem import Piece, PiecewiseSmoothFn
from test.problems import constant_problem


def first_mode():
    return PiecewiseSmoothFn([0.0, 1.0], [Piece.from_expr("cos(pi*x/2)")])


class TestSmoothedState(unittest.TestCase):
    """Tests for the free evolution of the rough state and its derivatives"""

    def setUp(self):
        """Set up the constant-coefficient system on n = 20"""
        self.problem = constant_problem()
        self.sys = build_semidiscrete(self.problem, 20)

    def test_eigenvector(self):
        """Test [A^m e^{A(t+s)} v]_1 = lam^m e^{lam(t+s)} v_1 for an eigenvector v"""
        lam, vecs = self.sys.symmetrizer.modes
        v = self.sys.symmetrizer.p * vecs[:, -1]
        np.testing.assert_allclose(self.sys.matvec(v), lam[-1] * v, rtol=1e-9, atol=1e-9)

        times = np.array([0.0, 0.1, 0.3])
        jets = SmoothedState(self.sys, v, 0.05, scaled=False).jets(times, 3)
        expected = v[0] * np.exp(lam[-1] * (times + 0.05))[:, None] * lam[-1] ** np.arange(4)
        np.testing.assert_allclose(jets.derivs, expected, rtol=1e-9)

    def test_states(self):
        """Test that the smoothed states agree with the derivative-zero entry"""
        smoothed = SmoothedState(self.sys, first_mode(), 0.05)
        times = np.array([0.0, 0.2])

        states = smoothed.states(times)
        self.assertEqual(states.shape, (2, 20))
        np.testing.assert_allclose(self.sys.flat_scale * states[:, 0],
                                   smoothed.jets(times, 0).value, rtol=1e-12)

    def test_spectral_matches_crank_nicolson(self):
        """Test both propagation methods on low derivative orders"""
        times = np.linspace(0.0, 0.2, 5)
        spectral = propagate(self.sys, first_mode(), 0.05, times, 2)
        stepped = propagate(self.sys, first_mode(), 0.05, times, 2, method="crank_nicolson")

        np.testing.assert_allclose(stepped.phi.derivs, spectral.phi.derivs, rtol=1e-6)
        np.testing.assert_allclose(stepped.states, spectral.states, rtol=1e-6, atol=1e-12)

    def test_magnitude_guard(self):
        """Test that overflowing high-order derivatives raise"""
        sys = build_semidiscrete(self.problem, 200)
        smoothed = SmoothedState(sys, np.ones(200), 1e-6)

        with self.assertRaises(MagnitudeOverflowError):
            smoothed.jets(np.array([0.0]), 60)

    def test_invalid(self):
        """Test the smoothing time and method checks"""
        with self.assertRaises(ValidationError):
            SmoothedState(self.sys, first_mode(), 0.0)
        with self.assertRaises(ValidationError):
            propagate(self.sys, first_mode(), 0.05, np.array([0.0]), 2, method="euler")


class TestNullInput(unittest.TestCase):
    """Tests for the null-control input"""

    def setUp(self):
        """Set up a window [0.1, 0.5] on n = 20 with truncation 6"""
        self.sys = build_semidiscrete(constant_problem(), 20)
        self.tab = flat_table(self.sys, 10)
        self.psi = Psi(1.5, 0.4)
        self.smoothed = SmoothedState(self.sys, first_mode(), 0.1)
        self.times = np.linspace(0.0, 0.4, 11)

    def test_prefix_is_zero(self):
        """Test that the sampled input is zero before s and after the window"""
        jets = propagate(self.sys, first_mode(), 0.1, self.times, 6)
        signal = null_input(jets, self.psi, self.tab, 6)

        np.testing.assert_allclose(signal.times[:4], [0.0, 0.04, 0.08, 0.1])
        np.testing.assert_array_equal(signal.values[:3], 0.0)
        self.assertEqual(signal.values[-1], 0.0)
        self.assertNotEqual(signal.values[3], 0.0)

    def test_evaluator_matches_samples(self):
        """Test that the evaluator reproduces the precomputed samples"""
        jets = propagate(self.sys, first_mode(), 0.1, self.times, 6)
        signal = null_input(jets, self.psi, self.tab, 6)
        evaluator = NullInput(self.smoothed, self.psi, self.tab, 6)

        np.testing.assert_allclose(evaluator(signal.times), signal.values, rtol=1e-9, atol=1e-12)
        np.testing.assert_array_equal(evaluator(np.array([0.0, 0.05, 0.099])), 0.0)

    def test_start_value(self):
        """Test g(s) = sum_k a_k phi^(k)(0), psi being flat at 0"""
        evaluator = NullInput(self.smoothed, self.psi, self.tab, 6)
        phi = self.smoothed.jets(0.0, 6).derivs[0]

        self.assertAlmostEqual(float(evaluator(0.1)[0]), float(phi @ self.tab.a[:7]), places=10)
        self.assertEqual(evaluator.contributions(np.array([0.2, 0.3])).shape, (2, 7))

    def test_product_jets_match_finite_differences(self):
        """Test the derivatives of phi psi against central differences of the lower order"""
        step = 1e-5
        times = np.linspace(0.05, 0.35, 7)

        def product(t):
            return (self.smoothed.jets(t, 3) * self.psi.jets(t, 3)).derivs

        derivs, ahead, behind = product(times), product(times + step), product(times - step)
        for m in (1, 2):
            central = (ahead[:, m - 1] - behind[:, m - 1]) / (2 * step)
            scale = np.max(np.abs(derivs[:, m]))
            self.assertGreater(scale, 0.0)
            np.testing.assert_allclose(central, derivs[:, m], rtol=0, atol=1e-6 * scale)

    def test_short_jets(self):
        """Test that jets shorter than the truncation are refused"""
        jets = propagate(self.sys, first_mode(), 0.1, self.times, 3)

        with self.assertRaises(ValueError):
            null_input(jets, self.psi, self.tab, 6)
        with self.assertRaises(ValueError):
            NullInput(self.smoothed, self.psi, self.tab, 11)


class TestSurrogateConvergence(unittest.TestCase):
    """Tests for the refinement check of the smoothed-state derivatives"""

    def test_smooth_state_converges(self):
        """Test that a smooth state converges under refinement"""
        result = surrogate_convergence_check(constant_problem(), first_mode(), 0.05,
                                             np.linspace(0.0, 0.2, 5), 2, [20, 41, 83])

        self.assertEqual(result["sup_diff"].shape, (2, 3))
        self.assertLess(result["sup_diff"][1, 0], result["sup_diff"][0, 0])
        self.assertFalse(result["diverged"])
