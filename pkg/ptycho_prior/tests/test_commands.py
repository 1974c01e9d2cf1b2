"""Tests for the experiment management commands."""
import csv
import itertools
import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings, tag

from ptycho_prior.management.commands.sweep import sweep_weights
from ptycho_prior.services.priors import PriorKind, PriorWeights
from ptycho_prior.services.scan import overlap_ratio
from ptycho_prior.services.storage import read_dataset, read_field

SMALL = {"object_size": 32, "probe_size": 16, "probe_sigma": 4.0, "step": 4}


def run(name, **options):
    out = StringIO()
    call_command(name, stdout=out, **options)
    return out.getvalue()


def read_csv(path):
    with Path(path).open(newline="") as f:
        return list(csv.reader(f))


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def simulate(self, name="data", **options):
        run("simulate", out=str(self.root / name), **{**SMALL, **options})
        return self.root / name


class SimulateCommandTests(CommandTestCase):
    def test_reports_overlap(self):
        data = self.simulate(object_size=128, probe_size=64, probe_sigma=64.0, step=32)
        manifest = json.loads((data / "manifest.json").read_text())
        self.assertAlmostEqual(manifest["provenance"]["overlap"], 0.788, places=3)
        self.assertEqual(manifest["pattern_count"], 9)
        self.assertTrue((data / "object.field").is_file())
        self.assertTrue((data / "probe.field").is_file())

    def test_same_seed_same_bytes(self):
        first = self.simulate("first", seed=4)
        second = self.simulate("second", seed=4)
        for name in ("manifest.json", "patterns.bin", "object.field", "probe.field"):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)

    def test_fermat_plan(self):
        data = self.simulate(object_size=48, plan="fermat", n_points=20, spacing=5.0)
        manifest = json.loads((data / "manifest.json").read_text())
        self.assertEqual(manifest["plan"]["geometry"]["kind"], "fermat")
        self.assertEqual(len(read_dataset(data)), manifest["pattern_count"])
        self.assertGreaterEqual(manifest["pattern_count"], 10)

    def test_overlap_sets_the_step(self):
        data = self.simulate(overlap=0.15)
        manifest = json.loads((data / "manifest.json").read_text())
        self.assertEqual(manifest["plan"]["geometry"]["step"], 8)
        self.assertAlmostEqual(manifest["provenance"]["overlap"], overlap_ratio(8, 4.0))

    def test_overlap_out_of_range(self):
        with self.assertRaisesMessage(CommandError, "--overlap"):
            self.simulate(overlap=1.0)

    def test_stored_object(self):
        data = self.simulate()
        again = self.simulate("again", object=str(data / "object.field"))
        self.assertEqual(read_field(again / "object.field").tobytes(), read_field(data / "object.field").tobytes())

    def test_invalid_flag_names_the_flag(self):
        with self.assertRaisesMessage(CommandError, "--step"):
            self.simulate(step=0)

    def test_missing_output(self):
        with self.assertRaisesMessage(CommandError, "--out is required"):
            run("simulate")

    def test_config_file_and_precedence(self):
        config = self.root / "sim.env"
        config.write_text("STEP=8\nPROBE_SIGMA=4\nSEED=3\n")
        data = self.root / "data"
        run("simulate", config=str(config), out=str(data), object_size=32, probe_size=16, seed=1)
        manifest = json.loads((data / "manifest.json").read_text())
        self.assertAlmostEqual(manifest["provenance"]["overlap"], overlap_ratio(8, 4))
        self.assertEqual(manifest["provenance"]["seed"], 1)

    def test_config_file_unknown_key(self):
        config = self.root / "bad.env"
        config.write_text("STRIDE=8\n")
        with self.assertRaisesMessage(CommandError, "STRIDE"):
            run("simulate", config=str(config), out=str(self.root / "x"))

    def test_config_file_bad_value(self):
        config = self.root / "bad.env"
        config.write_text("STEP=wide\n")
        with self.assertRaisesMessage(CommandError, "--step"):
            run("simulate", config=str(config), out=str(self.root / "x"))

    def test_missing_config_file(self):
        with self.assertRaisesMessage(CommandError, "--config"):
            run("simulate", config=str(self.root / "nope.env"), out=str(self.root / "x"))


class ReconstructCommandTests(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.data = self.simulate()

    def reconstruct(self, name, **options):
        run("reconstruct", data=str(self.data), out=str(self.root / name), epochs=2, **options)
        return self.root / name

    def test_outputs(self):
        out = self.reconstruct("recon")
        for name in ("object.field", "probe.field", "object_magnitude.pgm", "object_phase.pgm", "probe_magnitude.pgm"):
            self.assertTrue((out / name).is_file(), name)
        history = read_csv(out / "history.csv")
        self.assertEqual(history[0], ["epoch", "E_o", "E_total"])
        self.assertEqual(len(history), 3)
        record = json.loads((out / "run.json").read_text())
        self.assertEqual(record["prior"], "tv")
        self.assertEqual(record["lambda_x"], 0.005)

    def test_identical_runs(self):
        first = self.reconstruct("first", prior="stp")
        second = self.reconstruct("second", prior="stp")
        for name in ("object.field", "probe.field", "history.csv", "run.json"):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)

    def test_without_priors(self):
        out = self.reconstruct("plain", prior="none", lambda_pr=0.0, lambda_cc=0.0, lambda_x=0.0)
        history = read_csv(out / "history.csv")
        for _, data, total in history[1:]:
            self.assertEqual(data, total)

    def test_fixed_true_probe(self):
        out = self.reconstruct("fixed", probe=str(self.data / "probe.field"), fix_probe=True)
        self.assertEqual((out / "probe.field").read_bytes(), (self.data / "probe.field").read_bytes())

    def test_unknown_prior(self):
        with self.assertRaisesMessage(CommandError, "--prior"):
            self.reconstruct("bad", prior="hessian")

    def test_missing_dataset(self):
        with self.assertRaises(CommandError):
            run("reconstruct", data=str(self.root / "missing"), out=str(self.root / "x"))

    @override_settings(PTYCHO_CONFIG={"threads": 2})
    def test_thread_count_does_not_change_output(self):
        threaded = self.reconstruct("threaded")
        with override_settings(PTYCHO_CONFIG={"threads": 1}):
            single = self.reconstruct("single")
        self.assertEqual((threaded / "object.field").read_bytes(), (single / "object.field").read_bytes())


class EpieCommandTests(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.data = self.simulate()

    def test_zero_sweeps_dumps_initialization(self):
        out = self.root / "init"
        run("epie", data=str(self.data), out=str(out), sweeps=0)
        self.assertEqual(read_csv(out / "residuals.csv"), [["sweep", "E_o"]])
        self.assertIsNotNone(json.loads((out / "run.json").read_text())["final_E_o"])

    def test_residual_rows_and_determinism(self):
        first, second = self.root / "a", self.root / "b"
        run("epie", data=str(self.data), out=str(first), sweeps=3, seed=2)
        run("epie", data=str(self.data), out=str(second), sweeps=3, seed=2)
        self.assertEqual(len(read_csv(first / "residuals.csv")), 4)
        self.assertEqual((first / "object.field").read_bytes(), (second / "object.field").read_bytes())

    def test_bad_step(self):
        with self.assertRaisesMessage(CommandError, "--alpha"):
            run("epie", data=str(self.data), out=str(self.root / "x"), alpha=2.0)


class EvaluateCommandTests(CommandTestCase):
    def test_truth_against_truth(self):
        data = self.simulate()
        out = self.root / "score.csv"
        run("evaluate", recon=str(data), truth=str(data), out=str(out))
        rows = read_csv(out)
        self.assertEqual(rows[0], ["overlap", "prior", "ssim_phase", "ssim_magnitude", "final_E_o"])
        self.assertAlmostEqual(float(rows[1][2]), 1.0, places=10)
        self.assertAlmostEqual(float(rows[1][3]), 1.0, places=10)

    def test_reconstruction_row(self):
        data = self.simulate()
        recon = self.root / "recon"
        run("reconstruct", data=str(data), out=str(recon), epochs=1)
        out = self.root / "score.csv"
        run("evaluate", recon=str(recon), truth=str(data), out=str(out))
        row = read_csv(out)[1]
        self.assertEqual(row[1], "tv")
        self.assertLess(float(row[2]), 1.0)


class SweepCommandTests(CommandTestCase):
    def test_overlap_grid(self):
        out = self.root / "sweep.csv"
        run(
            "sweep",
            out=str(out),
            object_size=32,
            probe_size=16,
            probe_sigma=4.0,
            steps=[4, 8],
            priors=["none", "tv"],
            epochs=1,
            images=str(self.root / "images"),
        )
        rows = read_csv(out)
        self.assertEqual(len(rows), 1 + 2 * 2)
        self.assertEqual([row[1] for row in rows[1:]], ["none", "tv", "none", "tv"])
        self.assertAlmostEqual(float(rows[1][0]), overlap_ratio(4, 4.0))
        self.assertTrue((self.root / "images" / "step4_tv_phase.pgm").is_file())

    def test_thinning(self):
        out = self.root / "thin.csv"
        run(
            "sweep",
            out=str(out),
            object_size=48,
            probe_size=16,
            probe_sigma=4.0,
            keep=[10, 5],
            n_points=20,
            spacing=5.0,
            priors=["cc"],
            epochs=1,
            sweeps=1,
        )
        rows = read_csv(out)
        self.assertEqual(rows[0][0], "patterns")
        expected = [("10", "cc"), ("10", "epie"), ("5", "cc"), ("5", "epie")]
        self.assertEqual([(row[0], row[2]) for row in rows[1:]], expected)

    def test_probe_smoothness_only_configuration(self):
        out = self.root / "pr.csv"
        run("sweep", out=str(out), object_size=32, probe_size=16, probe_sigma=4.0, steps=[8], priors=["pr"], epochs=1)
        self.assertEqual(read_csv(out)[1][1], "pr")

    def test_rejects_unknown_prior(self):
        with self.assertRaisesMessage(CommandError, "--priors"):
            run("sweep", out=str(self.root / "x.csv"), priors=["hessian"])


class SweepWeightsTests(SimpleTestCase):
    config = {"lambda_pr": 0.01, "lambda_cc": 0.02, "lambda_x": None, "stp_sigma": 1.5}

    def test_single_term_configurations(self):
        self.assertEqual(sweep_weights("none", self.config, 0.8), PriorWeights())
        self.assertEqual(sweep_weights("pr", self.config, 0.8), PriorWeights(lambda_pr=0.01))
        self.assertEqual(sweep_weights("cc", self.config, 0.8), PriorWeights(lambda_cc=0.02))

    def test_image_priors_follow_the_overlap_schedule(self):
        high = sweep_weights("tv", self.config, 0.788)
        low = sweep_weights("stp", self.config, 0.151)
        self.assertEqual((high.lambda_pr, high.lambda_cc, high.lambda_x), (0.01, 0.02, 0.005))
        self.assertIs(high.prior_kind, PriorKind.TV)
        self.assertEqual(low.lambda_x, 0.01)
        self.assertIs(low.prior_kind, PriorKind.STP)

    def test_explicit_image_prior_weight(self):
        weights = sweep_weights("tv", {**self.config, "lambda_x": 0.3}, 0.151)
        self.assertEqual(weights.lambda_x, 0.3)


@tag("slow")
class SweepDefaultsTests(CommandTestCase):
    """Full-size sweeps at the default optimizer settings."""

    def test_overlap_sweep(self):
        out = self.root / "overlap.csv"
        run("sweep", out=str(out), priors=["none", "tv", "stp"])
        phase = {(row[0], row[1]): float(row[2]) for row in read_csv(out)[1:]}
        overlaps = sorted({overlap for overlap, _ in phase}, key=float, reverse=True)
        self.assertEqual(len(overlaps), 4)
        plain = [phase[overlap, "none"] for overlap in overlaps]
        for higher, lower in itertools.pairwise(plain):
            self.assertLessEqual(lower, higher)
        self.assertGreaterEqual(plain[0] - plain[-1], 0.05)
        sparse, dense = overlaps[-1], overlaps[0]
        for prior in ("tv", "stp"):
            self.assertGreaterEqual(phase[sparse, prior], phase[sparse, "none"] + 0.05, prior)
            self.assertLessEqual(abs(phase[dense, prior] - phase[dense, "none"]), 0.03, prior)

    def test_thinning_sweep(self):
        out = self.root / "thinning.csv"
        run("sweep", out=str(out), keep=[99, 61], priors=["none", "tv", "stp"])
        rows = read_csv(out)
        self.assertEqual(len(rows), 1 + 2 * 4)
        phase = {(row[0], row[2]): float(row[3]) for row in rows[1:]}
        self.assertEqual({method for _, method in phase}, {"none", "tv", "stp", "epie"})
        self.assertGreaterEqual(phase["61", "tv"], phase["61", "none"] + 0.05)
