"""Tests for the scan service."""
import numpy as np
from django.test import SimpleTestCase, tag

from ptycho_prior.services.scan import (
    ScanError,
    ScanPlan,
    coverage_mask,
    fermat_plan,
    mean_spacing,
    overlap_ratio,
    plan_overlap,
    raster_plan,
    scan_plan_from_dict,
    step_for_overlap,
    thin_plan,
)


class RasterPlanTests(SimpleTestCase):
    def test_exact_tiling(self):
        plan = raster_plan(512, 256, 256)
        self.assertEqual(plan.positions, ((0, 0), (0, 256), (256, 0), (256, 256)))

    def test_grid_count(self):
        self.assertEqual(len(raster_plan(512, 256, 32)), 81)

    def test_step_beyond_extent(self):
        self.assertEqual(raster_plan(100, 60, 50).positions, ((0, 0),))

    def test_row_major_order(self):
        plan = raster_plan(10, 4, 3)
        self.assertEqual(plan.positions[:3], ((0, 0), (0, 3), (0, 6)))
        self.assertEqual(plan.positions[3], (3, 0))

    def test_rejects_probe_larger_than_object(self):
        with self.assertRaises(ScanError):
            raster_plan(32, 64, 8)

    def test_rejects_zero_step(self):
        with self.assertRaises(ScanError):
            raster_plan(32, 16, 0)


class ScanPlanTests(SimpleTestCase):
    def test_rejects_out_of_bounds(self):
        with self.assertRaises(ScanError):
            ScanPlan(((0, 17),), (16, 16), (32, 32))

    def test_rejects_duplicates(self):
        with self.assertRaises(ScanError):
            ScanPlan(((1, 1), (1, 1)), (16, 16), (32, 32))

    def test_dict_round_trip(self):
        plan = raster_plan(40, 16, 8)
        self.assertEqual(scan_plan_from_dict(plan.to_dict()), plan)


class OverlapTests(SimpleTestCase):
    def test_published_pairs(self):
        for step, expected in ((32, 0.788), (64, 0.575), (96, 0.363), (128, 0.151)):
            self.assertAlmostEqual(overlap_ratio(step, 64), expected, places=3)

    def test_monotone_and_clamped(self):
        values = [overlap_ratio(step, 10) for step in range(0, 60, 5)]
        self.assertEqual(values, sorted(values, reverse=True))
        self.assertEqual(overlap_ratio(1000, 10), 0.0)
        self.assertEqual(overlap_ratio(0, 10), 1.0)

    def test_rejects_bad_arguments(self):
        with self.assertRaises(ScanError):
            overlap_ratio(-1, 10)
        with self.assertRaises(ScanError):
            overlap_ratio(1, 0)

    def test_step_for_overlap_inverts_ratio(self):
        self.assertEqual(step_for_overlap(overlap_ratio(32, 64), 64), 32)

    def test_plan_overlap_uses_raster_step(self):
        self.assertAlmostEqual(plan_overlap(raster_plan(128, 64, 32), 64), overlap_ratio(32, 64))


class FermatPlanTests(SimpleTestCase):
    def test_single_point_at_center(self):
        plan = fermat_plan(1, 10.0, (20, 30), 100, 40)
        self.assertEqual(plan.positions, ((20, 30),))

    def test_default_center(self):
        plan = fermat_plan(1, 10.0, None, 100, 40)
        self.assertEqual(plan.positions, ((30, 30),))

    def test_spacing_close_to_target(self):
        plan = fermat_plan(60, 8.0, None, 160, 32)
        self.assertEqual(len(plan), 60)
        self.assertLess(abs(mean_spacing(plan) - 8.0) / 8.0, 0.15)

    def test_clipped_spiral_warns_about_spacing(self):
        with self.assertLogs("ptycho_prior.services.scan", level="WARNING") as logs:
            plan = fermat_plan(60, 12.0, None, 64, 16)
        self.assertIn("mean spacing", logs.output[0])
        self.assertGreater(abs(mean_spacing(plan) - 12.0), 0.15 * 12.0)

    def test_unclipped_spiral_does_not_warn(self):
        with self.assertNoLogs("ptycho_prior.services.scan", level="WARNING"):
            fermat_plan(60, 8.0, None, 160, 32)

    @tag("slow")
    def test_full_size_spiral(self):
        plan = fermat_plan(175, 60.0, None, 1280, 256)
        self.assertEqual(len(plan), 175)
        self.assertEqual(len(set(plan.positions)), 175)
        self.assertLess(abs(mean_spacing(plan) - 60.0) / 60.0, 0.15)

    def test_rejects_crowded_plan(self):
        with self.assertRaises(ScanError):
            fermat_plan(200, 30.0, None, 64, 48)

    def test_rejects_zero_points(self):
        with self.assertRaises(ScanError):
            fermat_plan(0, 10.0, None, 64, 16)


class ThinPlanTests(SimpleTestCase):
    def setUp(self):
        self.plan = raster_plan(200, 16, 14)

    def test_keep_all_is_identity(self):
        self.assertEqual(thin_plan(self.plan, len(self.plan)), self.plan)

    def test_counts_and_endpoints(self):
        for keep in (99, 61, 2):
            thinned = thin_plan(self.plan, keep)
            self.assertEqual(len(thinned), keep)
            self.assertEqual(thinned.positions[0], self.plan.positions[0])
            self.assertEqual(thinned.positions[-1], self.plan.positions[-1])

    def test_subsequence(self):
        thinned = thin_plan(self.plan, 61)
        indices = [self.plan.positions.index(p) for p in thinned.positions]
        self.assertEqual(indices, sorted(indices))

    def test_keep_one(self):
        self.assertEqual(thin_plan(self.plan, 1).positions, (self.plan.positions[0],))

    def test_rejects_out_of_range(self):
        with self.assertRaises(ScanError):
            thin_plan(self.plan, 0)
        with self.assertRaises(ScanError):
            thin_plan(self.plan, len(self.plan) + 1)


class CoverageMaskTests(SimpleTestCase):
    def test_union_of_windows(self):
        plan = ScanPlan(((0, 0), (4, 4)), (2, 2), (8, 8))
        mask = coverage_mask(plan)
        self.assertEqual(int(mask.sum()), 8)
        self.assertTrue(mask[5, 5])
        self.assertFalse(mask[2, 2])
        self.assertEqual(mask.dtype, np.bool_)
