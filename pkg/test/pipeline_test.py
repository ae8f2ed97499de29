"""
Unit tests for the paraflat.pipeline module
"""
import unittest
from unittest.mock import patch

import numpy as np
import pytest

from paraflat.constants import TRUNCATION_LEVELS
from paraflat.discretize import build_semidiscrete, norm_2d
from paraflat.errors import ValidationError
from paraflat.flatness import SampledSignal
from paraflat.pipeline import (level_gaps, plan, plan_composite, plan_null_control, plan_transfer,
                               time_grid)
from paraflat.problem import NullControlSpec, Piece, PiecewiseSmoothFn
from paraflat.simulate import initial_vector, integrate
from test.problems import piecewise


class TestTransferPlan(unittest.TestCase):
    """Tests for transfers between steady states"""

    def setUp(self):
        """Set up the transfer leg of the piecewise reference problem"""
        self.problem, task = piecewise()
        self.spec = task.transfer

    def test_verified_plan(self):
        """Test the sampled input, its endpoint values and the verification report"""
        result = plan_transfer(self.problem, self.spec, n=30, truncation=8, n_sim=61, dt=1e-3)

        self.assertEqual(result.kind, "transfer")
        self.assertEqual(len(result.signal.times), 501)
        self.assertEqual(result.signal.times[-1], 0.5)
        self.assertEqual(result.signal.values[0], 0.0)
        self.assertAlmostEqual(result.signal.values[-1], 0.5, places=8)
        self.assertLess(result.report["design_terminal_error"], 1e-8)
        self.assertIsInstance(result.verified, bool)
        self.assertEqual(result.report["verification"]["n_sim"], 61)
        self.assertIsNotNone(result.report["growth"])
        self.assertFalse(result.report["gamma_shrunk"])

    def test_snapshots_follow_verification_run(self):
        """Test that a checked plan keeps the fine-grid trajectory as its snapshots"""
        result = plan_transfer(self.problem, self.spec, n=30, truncation=8, n_sim=61, dt=1e-3)
        check = result.report["verification"]

        self.assertEqual(result.snapshots.n, 61)
        self.assertEqual(result.snapshots.times[-1], 0.5)
        self.assertEqual(result.design.n, 30)
        self.assertNotIn("trajectory", check)
        self.assertGreaterEqual(check["snapshot_error"], 0.0)
        self.assertLess(check["snapshot_error"], 0.1)
        self.assertEqual(result.report["flags"], [])

    def test_truncation_levels(self):
        """Test that the highest level is the planned input and larger levels are dropped"""
        result = plan_transfer(self.problem, self.spec, n=30, truncation=8, dt=1e-3,
                               check=False, levels=(1, 5, 8, 20))

        self.assertIsNone(result.verified)
        self.assertEqual(sorted(result.levels), [1, 5, 8])
        np.testing.assert_allclose(result.levels[8].values, result.signal.values,
                                   rtol=1e-12, atol=1e-15)
        self.assertEqual(sorted(level_gaps(result.levels)), [(1, 5), (5, 8)])

    def test_invalid_truncation(self):
        """Test that negative truncations and truncations above n are refused"""
        with self.assertRaises(ValidationError):
            plan_transfer(self.problem, self.spec, n=30, truncation=-1, check=False)
        with self.assertRaises(ValidationError):
            plan_transfer(self.problem, self.spec, n=5, truncation=6, check=False)


class TestNullControlPlan(unittest.TestCase):
    """Tests for null control of the rough state"""

    def setUp(self):
        """Set up the null-control leg of the piecewise reference problem"""
        self.problem, task = piecewise()
        self.spec = task.null_control

    def test_plan(self):
        """Test that the input is off during the smoothing time"""
        result = plan_null_control(self.problem, self.spec, n=20, truncation=6, n_sim=41,
                                   dt=1e-3, check=False, levels=(1, 6))

        times = result.signal.times
        self.assertEqual(times[-1], 0.5)
        np.testing.assert_array_equal(result.signal.values[times < 0.05], 0.0)
        self.assertEqual(result.signal.values[-1], 0.0)
        self.assertGreater(result.report["free_decay"], 0.0)
        self.assertEqual(sorted(result.levels), [1, 6])
        self.assertIsNone(result.report["propagation_richardson_ok"])
        self.assertEqual(result.report["flags"], [])
        self.assertIsNone(result.verified)

    def test_stepped_propagation(self):
        """Test the stepped propagation against the spectral one"""
        spectral = plan_null_control(self.problem, self.spec, n=20, truncation=6, n_sim=41,
                                     dt=1e-3, check=False)
        stepped = plan_null_control(self.problem, self.spec, n=20, truncation=6, n_sim=41,
                                    dt=1e-3, check=False, method="crank_nicolson")

        self.assertIsInstance(stepped.evaluator, SampledSignal)
        self.assertEqual(stepped.levels, {})
        expected = spectral.evaluator(stepped.signal.times)
        gap = np.max(np.abs(stepped.signal.values - expected))
        self.assertLess(gap, 1e-4 * np.max(np.abs(expected)))

    @patch("paraflat.nullcontrol.PROPAGATION_RICHARDSON_TOL", -1.0)
    def test_failed_stepped_propagation_is_flagged(self):
        """Test that an unchecked plan whose half-step comparison fails is unverified"""
        result = plan_null_control(self.problem, self.spec, n=20, truncation=6, n_sim=41,
                                   dt=1e-3, check=False, method="crank_nicolson")

        self.assertIs(result.report["propagation_richardson_ok"], False)
        self.assertEqual(result.report["flags"], ["propagation_richardson"])
        self.assertIs(result.verified, False)
        self.assertNotIn("verification", result.report)


class TestCompositePlan(unittest.TestCase):
    """Tests for the superposition of transfer and null control"""

    def setUp(self):
        """Set up the composite task of the piecewise reference problem"""
        self.problem, self.task = piecewise()

    def test_plan(self):
        """Test the combined input and its level gaps"""
        result = plan_composite(self.problem, self.task, n=30, truncation=8, n_sim=61, dt=1e-3,
                                check=False, levels=(1, 5))

        self.assertEqual(result.report["kind"], "composite")
        self.assertIn("1-5", result.report["level_gaps"])
        self.assertAlmostEqual(result.signal.values[-1], 0.5, places=8)

    def test_snapshots_start_from_combined_state(self):
        """Test that unchecked snapshots simulate from u0 + u0_tilde on the design grid"""
        result = plan_composite(self.problem, self.task, n=30, truncation=8, dt=1e-3, check=False)
        sys = build_semidiscrete(self.problem, 30)
        start = initial_vector((self.task.transfer.u0, self.task.null_control.u0_tilde), sys)

        snapshots = result.snapshots
        self.assertEqual(snapshots.n, 30)
        self.assertEqual(snapshots.times[-1], self.task.null_control.tau)
        np.testing.assert_array_equal(snapshots.states[0], start)
        self.assertGreater(np.max(np.abs(snapshots.states[0] - result.design.states[0])), 0.5)

    def test_superposition(self):
        """Test that the combined input from u0 + u0_tilde acts as the sum of its two legs"""
        result = plan_composite(self.problem, self.task, n=30, truncation=8, dt=1e-3, check=False)
        sys = build_semidiscrete(self.problem, 30)
        transfer, null = self.task.transfer, self.task.null_control
        f, g = result.evaluator.parts

        whole = integrate(sys, (transfer.u0, null.u0_tilde), result.evaluator, null.tau, 1e-3)
        legs = (integrate(sys, transfer.u0, f, null.tau, 1e-3).final
                + integrate(sys, null.u0_tilde, g, null.tau, 1e-3).final)
        np.testing.assert_allclose(whole.final, legs, rtol=1e-10,
                                   atol=1e-12 * np.max(np.abs(legs)))

    def test_dispatch(self):
        """Test dispatch on the task type"""
        result = plan(self.problem, self.task.transfer, n=30, truncation=4, dt=1e-2, check=False,
                      method="spectral")

        self.assertEqual(result.kind, "transfer")
        with self.assertRaises(ValidationError):
            plan(self.problem, "transfer")

    def test_time_grid(self):
        """Test the uniform grid ends exactly at the horizon"""
        times = time_grid(0.5, 1e-3)

        self.assertEqual(len(times), 501)
        self.assertEqual(times[-1], 0.5)


@pytest.mark.slow
class TestAcceptance(unittest.TestCase):
    """Full-size composite run of the piecewise reference problem"""

    def test_composite_reaches_target(self):
        """Test the terminal error and the gaps between truncation levels"""
        problem, task = piecewise()
        result = plan_composite(problem, task, n=500, truncation=20, n_sim=2000, dt=1e-4,
                                levels=TRUNCATION_LEVELS)

        self.assertLessEqual(result.report["verification"]["terminal_error"], 5e-4)
        gaps = level_gaps(result.levels)
        self.assertLess(gaps[(13, 18)], 1.3e-4)
        self.assertLess(gaps[(18, 20)], 3e-8)
        self.assertLess(gaps[(18, 20)], gaps[(13, 18)])


@pytest.mark.slow
class TestRoughNullControl(unittest.TestCase):
    """Null control of random discontinuous states at the default design order"""

    def setUp(self):
        """Set up the piecewise problem and a seeded generator"""
        self.problem, task = piecewise()
        self.tau, self.s = task.null_control.tau, task.null_control.s
        self.rng = np.random.default_rng(7)

    def random_state(self):
        """Piecewise-linear state with jumps at three random points"""
        edges = np.concatenate([[0.0], np.sort(self.rng.uniform(0.1, 0.9, 3)), [1.0]])
        pieces = [Piece.from_expr(f"{a:.6f} + ({b:.6f})*x")
                  for a, b in self.rng.uniform(-1.0, 1.0, (4, 2))]
        return PiecewiseSmoothFn(edges, pieces)

    def test_beats_free_decay(self):
        """Test a terminal norm of at most 1% of the uncontrolled one"""
        for _ in range(3):
            spec = NullControlSpec(tau=self.tau, s=self.s, u0_tilde=self.random_state())
            report = plan_null_control(self.problem, spec, truncation=20, n_sim=2000,
                                       dt=1e-4).report

            self.assertEqual(report["n"], 1000)
            self.assertLessEqual(report["verification"]["terminal_error"],
                                 1e-2 * report["free_decay"])
