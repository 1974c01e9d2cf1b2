"""Tests for gauge alignment and SSIM scoring."""
import math

import numpy as np
from django.test import SimpleTestCase

from ptycho_prior.services.metrics import SweepRow, align, evaluate, ssim
from ptycho_prior.services.phantom import chip_phantom
from ptycho_prior.services.scan import ScanPlan, coverage_mask, fermat_plan


def direct_ssim(a, b, mask=None):
    mask = np.ones(a.shape, dtype=bool) if mask is None else mask
    data_range = b[mask].max() - b[mask].min()
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    scores = []
    for r in range(a.shape[0] - 6):
        for c in range(a.shape[1] - 6):
            if not mask[r : r + 7, c : c + 7].all():
                continue
            x = a[r : r + 7, c : c + 7]
            y = b[r : r + 7, c : c + 7]
            mx, my = x.mean(), y.mean()
            vx, vy = ((x - mx) ** 2).mean(), ((y - my) ** 2).mean()
            cov = ((x - mx) * (y - my)).mean()
            scores.append((2 * mx * my + c1) * (2 * cov + c2) / ((mx**2 + my**2 + c1) * (vx + vy + c2)))
    return float(np.mean(scores))


class AlignTests(SimpleTestCase):
    def setUp(self):
        self.ref = chip_phantom(16, seed=1)

    def test_removes_global_phase(self):
        np.testing.assert_allclose(align(self.ref * np.exp(0.3j), self.ref), self.ref, atol=1e-12)

    def test_removes_global_scale(self):
        np.testing.assert_allclose(align(2.0 * self.ref, self.ref), self.ref, atol=1e-12)

    def test_rejects_shape_mismatch(self):
        with self.assertRaises(ValueError):
            align(self.ref, self.ref[:8])

    def test_masked_fit_ignores_outside_pixels(self):
        estimate = self.ref * (1.5 * np.exp(-0.8j))
        mask = np.zeros(self.ref.shape, dtype=bool)
        mask[:10, :12] = True
        estimate[~mask] = 5.0
        aligned = align(estimate, self.ref, mask)
        np.testing.assert_allclose(aligned[mask], self.ref[mask], atol=1e-12)

    def test_rejects_mask_shape_mismatch(self):
        with self.assertRaises(ValueError):
            align(self.ref, self.ref, np.ones((4, 4), dtype=bool))


class SSIMTests(SimpleTestCase):
    def test_matches_direct_formula(self):
        rng = np.random.default_rng(50)
        b = rng.uniform(0.0, 1.0, size=(16, 16))
        a = b + rng.normal(scale=0.1, size=(16, 16))
        self.assertAlmostEqual(ssim(a, b), direct_ssim(a, b), places=10)

    def test_identical_images(self):
        b = np.random.default_rng(51).uniform(size=(12, 12))
        self.assertAlmostEqual(ssim(b, b.copy()), 1.0, places=12)

    def test_constant_reference(self):
        flat = np.full((8, 8), 0.4)
        self.assertEqual(ssim(flat, flat.copy()), 1.0)
        with self.assertRaises(ValueError):
            ssim(flat + np.eye(8), flat)

    def test_rejects_small_or_mismatched_images(self):
        with self.assertRaises(ValueError):
            ssim(np.eye(5), np.eye(5))
        with self.assertRaises(ValueError):
            ssim(np.eye(8), np.eye(9))

    def test_mask_keeps_only_windows_inside_it(self):
        rng = np.random.default_rng(52)
        b = rng.uniform(0.0, 1.0, size=(16, 16))
        a = b + rng.normal(scale=0.1, size=(16, 16))
        mask = np.ones((16, 16), dtype=bool)
        mask[:5, 9:] = False
        a[~mask] = 40.0
        self.assertAlmostEqual(ssim(a, b, mask), direct_ssim(a, b, mask), places=10)

    def test_full_mask_equals_no_mask(self):
        rng = np.random.default_rng(53)
        b = rng.uniform(size=(12, 14))
        a = b + rng.normal(scale=0.2, size=(12, 14))
        self.assertAlmostEqual(ssim(a, b, np.ones((12, 14), dtype=bool)), ssim(a, b), places=12)

    def test_mask_without_a_full_window(self):
        mask = np.zeros((12, 12), dtype=bool)
        mask[:6, :] = True
        with self.assertRaisesMessage(ValueError, "no 7x7 window"):
            ssim(np.eye(12), np.eye(12) * 2, mask)


class EvaluateTests(SimpleTestCase):
    def setUp(self):
        self.ref = chip_phantom(32, seed=2)

    def test_perfect_estimate(self):
        phase, magnitude = evaluate(self.ref.copy(), self.ref)
        self.assertAlmostEqual(phase, 1.0, places=10)
        self.assertAlmostEqual(magnitude, 1.0, places=10)

    def test_gauge_is_removed(self):
        phase, magnitude = evaluate(self.ref * np.exp(0.3j), self.ref)
        self.assertAlmostEqual(phase, 1.0, places=8)
        self.assertAlmostEqual(magnitude, 1.0, places=8)

    def test_uncovered_pixels_are_ignored(self):
        plan = ScanPlan(((0, 0), (8, 8)), (16, 16), (32, 32))
        estimate = self.ref.copy()
        estimate[26:, :] = 0.1
        estimate[:, 26:] = 0.1
        phase, magnitude = evaluate(estimate, self.ref, plan)
        self.assertAlmostEqual(phase, 1.0, places=10)
        self.assertAlmostEqual(magnitude, 1.0, places=10)
        self.assertLess(evaluate(estimate, self.ref)[1], 0.99)

    def test_spiral_coverage_corners_are_ignored(self):
        truth = chip_phantom(96, seed=4)
        plan = fermat_plan(40, 6.0, None, 96, 24)
        covered = coverage_mask(plan)
        rows, cols = np.nonzero(covered)
        self.assertFalse(covered[rows.min() : rows.max() + 1, cols.min() : cols.max() + 1].all())

        rng = np.random.default_rng(5)
        estimate = truth * (1.7 * np.exp(0.4j))
        noise = rng.uniform(0.1, 2.0, size=truth.shape) * np.exp(1j * rng.uniform(-np.pi, np.pi, size=truth.shape))
        estimate[~covered] = noise[~covered]
        phase, magnitude = evaluate(estimate, truth, plan)
        self.assertAlmostEqual(phase, 1.0, places=10)
        self.assertAlmostEqual(magnitude, 1.0, places=10)

    def test_phase_gauge_leaves_scores_unchanged(self):
        noisy = self.ref * np.exp(1j * np.random.default_rng(6).normal(scale=0.2, size=self.ref.shape))
        reference = evaluate(noisy, self.ref)
        for theta in np.linspace(0.0, 2 * np.pi, 10, endpoint=False):
            scores = evaluate(noisy * np.exp(1j * theta), self.ref)
            self.assertLessEqual(abs(scores[0] - reference[0]), 1e-10, theta)
            self.assertLessEqual(abs(scores[1] - reference[1]), 1e-10, theta)

    def test_degraded_estimate_scores_lower(self):
        noisy = self.ref * np.exp(1j * np.random.default_rng(3).normal(scale=0.3, size=self.ref.shape))
        phase, _ = evaluate(noisy, self.ref)
        self.assertLess(phase, 0.9)


class SweepRowTests(SimpleTestCase):
    def test_overlap_range(self):
        with self.assertRaises(ValueError):
            SweepRow(1.2, "tv", 0.9, 0.9, 0.1)
        self.assertTrue(math.isnan(SweepRow(math.nan, "tv", 0.9, 0.9, 0.1).overlap))
