"""SSIM-versus-overlap and SSIM-versus-pattern-count experiments."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import TYPE_CHECKING, ClassVar

import numpy as np

from ptycho_prior.experiment import ExperimentConfig, Option, int_list, str_list
from ptycho_prior.management.base import ExperimentCommand, nonnegative, optics_options, positive
from ptycho_prior.services.epie import epie_run
from ptycho_prior.services.field import split
from ptycho_prior.services.forward import data_fidelity, simulate
from ptycho_prior.services.metrics import SweepRow, evaluate
from ptycho_prior.services.phantom import chip_phantom, gaussian_probe
from ptycho_prior.services.priors import DEFAULT_STP_SIGMA, PriorKind, PriorWeights, lambda_x_for_overlap
from ptycho_prior.services.recon import ReconConfig, reconstruct
from ptycho_prior.services.scan import fermat_plan, plan_overlap, raster_plan, thin_plan
from ptycho_prior.services.storage import export_image, write_sweep_csv

if TYPE_CHECKING:
    from ptycho_prior.services.field import ComplexField
    from ptycho_prior.services.forward import DiffractionSet

logger = logging.getLogger(__name__)

SWEEP_PRIORS = ("none", "pr", "cc", "tv", "stp")
EPIE = "epie"
RASTER_OBJECT_SIZE = 128
FERMAT_OBJECT_SIZE = 320


def sweep_weights(prior: str, config: ExperimentConfig, overlap: float) -> PriorWeights:
    """Weights of one sweep configuration.

    ``none`` disables every prior, ``pr`` keeps only the probe smoothness term, ``cc`` only
    the cross-channel term, and ``tv``/``stp`` add the image prior to both of those.
    """
    if prior == "none":
        return PriorWeights()
    if prior == "pr":
        return PriorWeights(lambda_pr=config["lambda_pr"])
    if prior == "cc":
        return PriorWeights(lambda_cc=config["lambda_cc"])
    lambda_x = config["lambda_x"] if config["lambda_x"] is not None else lambda_x_for_overlap(overlap)
    return PriorWeights(
        lambda_pr=config["lambda_pr"],
        lambda_cc=config["lambda_cc"],
        lambda_x=lambda_x,
        prior_kind=PriorKind(prior),
        stp_sigma=config["stp_sigma"],
    )


class Command(ExperimentCommand):
    """Simulate, reconstruct and score every (scan, prior) pair and write one CSV row each.

    With ``--keep`` the scan is a Fermat spiral thinned to each pattern count and the
    ePIE baseline is scored alongside the priors; otherwise the scan is a raster at
    each ``--steps`` value.
    """

    help = "Sweep overlap (raster steps) or pattern count (Fermat thinning) against prior configurations."

    experiment_options: ClassVar[tuple[Option, ...]] = (
        Option("object-size", int, help="Phantom size; 128 for raster sweeps, 320 for thinning sweeps when unset.",
               check=lambda v: v >= 8, requirement="must be at least 8"),
        Option("probe-size", int, default=64, help="Probe window size.", check=positive,
               requirement="must be positive"),
        Option("probe-sigma", float, default=16.0, help="Gaussian probe width in pixels.", check=positive,
               requirement="must be positive"),
        Option("steps", int_list, default=lambda: [8, 16, 24, 32], help="Comma-separated raster steps.",
               check=positive, requirement="must hold positive steps"),
        Option("priors", str_list, default=lambda: ["none", "tv", "stp"], help="Comma-separated prior configs.",
               choices=SWEEP_PRIORS),
        Option("keep", int_list, help="Comma-separated pattern counts for a thinned Fermat sweep.", check=positive,
               requirement="must hold positive counts"),
        Option("n-points", int, default=175, help="Fermat spiral points before thinning.", check=positive,
               requirement="must be positive"),
        Option("spacing", float, default=17.5, help="Fermat mean spacing in pixels.", check=positive,
               requirement="must be positive"),
        Option("epochs", int, default=500, help="Adam epochs per reconstruction.", check=nonnegative,
               requirement="must be nonnegative"),
        Option("sweeps", int, default=300, help="ePIE sweeps in thinning experiments.", check=nonnegative,
               requirement="must be nonnegative"),
        Option("batch", int, default=16, help="Patterns per minibatch.", check=positive,
               requirement="must be positive"),
        Option("lr-object", float, default=0.01, help="Adam step for the object.", check=positive,
               requirement="must be positive"),
        Option("lr-probe", float, default=0.001, help="Adam step for the probe.", check=positive,
               requirement="must be positive"),
        Option("lambda-pr", float, default=0.01, help="Probe smoothness weight.", check=nonnegative,
               requirement="must be nonnegative"),
        Option("lambda-cc", float, default=0.01, help="Cross-channel weight.", check=nonnegative,
               requirement="must be nonnegative"),
        Option("lambda-x", float, help="Image prior weight; scheduled from the overlap when unset.",
               check=nonnegative, requirement="must be nonnegative"),
        Option("stp-sigma", float, default=DEFAULT_STP_SIGMA, help="Structure tensor smoothing in pixels.",
               check=positive, requirement="must be positive"),
        Option("photons", float, help="Mean photons per pattern; noiseless when unset.", check=positive,
               requirement="must be positive"),
        Option("seed", int, default=0, help="Seed of every random draw.", check=nonnegative,
               requirement="must be nonnegative"),
        *optics_options(),
        Option("images", str, help="Directory for per-run phase and magnitude previews."),
        Option("out", str, help="Output CSV file.", required=True),
    )

    def run(self, config: ExperimentConfig, workers: int) -> None:
        """Run every configuration and write the table."""
        self.config = config
        self.workers = workers
        size = config["object_size"] or (FERMAT_OBJECT_SIZE if config["keep"] else RASTER_OBJECT_SIZE)
        self.truth = chip_phantom(size, seed=config["seed"])
        self.probe = gaussian_probe(
            config["probe_size"],
            config["probe_sigma"],
            config["defocus"],
            config["wavelength"],
            config["pixel_pitch"],
            workers,
        )

        rows = self.thinning_rows() if config["keep"] else self.overlap_rows()
        write_sweep_csv(rows, config["out"], with_patterns=bool(config["keep"]))
        self.report(f"Wrote {len(rows)} sweep rows to {config['out']}")

    def overlap_rows(self) -> list[SweepRow]:
        """One row per (raster step, prior)."""
        rows = []
        for step in self.config["steps"]:
            plan = raster_plan(self.truth.shape, self.probe.shape, step)
            overlap = plan_overlap(plan, self.config["probe_sigma"])
            dataset = simulate(self.truth, self.probe, plan, self.config["photons"], self.config["seed"], self.workers)
            rows.extend(self.prior_row(prior, dataset, overlap, f"step{step}") for prior in self.config["priors"])
        return rows

    def thinning_rows(self) -> list[SweepRow]:
        """One row per (pattern count, prior) plus one ePIE row per pattern count."""
        base = fermat_plan(self.config["n_points"], self.config["spacing"], None, self.truth.shape, self.probe.shape)
        rows = []
        for keep in self.config["keep"]:
            plan = thin_plan(base, keep)
            overlap = plan_overlap(plan, self.config["probe_sigma"])
            dataset = simulate(self.truth, self.probe, plan, self.config["photons"], self.config["seed"], self.workers)
            tag = f"keep{keep}"
            rows.extend(self.prior_row(prior, dataset, overlap, tag) for prior in self.config["priors"])
            rows.append(self.epie_row(dataset, overlap, tag))
        return rows

    def prior_row(self, prior: str, dataset: DiffractionSet, overlap: float, tag: str) -> SweepRow:
        """Reconstruct with one prior configuration and score it."""
        recon_config = ReconConfig(
            weights=sweep_weights(prior, self.config, overlap),
            lr_object=self.config["lr_object"],
            lr_probe=self.config["lr_probe"],
            batch_size=self.config["batch"],
            epochs=self.config["epochs"],
            seed=self.config["seed"],
            defocus=self.config["defocus"],
            wavelength=self.config["wavelength"],
            pixel_pitch=self.config["pixel_pitch"],
            workers=self.workers,
        )
        obj, probe, history = reconstruct(dataset, recon_config)
        final = history[-1].data if history else self.residual(obj, probe, dataset)
        return self.score(obj, dataset, overlap, prior, final, f"{tag}_{prior}")

    def epie_row(self, dataset: DiffractionSet, overlap: float, tag: str) -> SweepRow:
        """Run the ePIE baseline and score it."""
        obj, probe, residuals = epie_run(
            dataset,
            self.config["sweeps"],
            self.config["seed"],
            defocus=self.config["defocus"],
            wavelength=self.config["wavelength"],
            pixel_pitch=self.config["pixel_pitch"],
            workers=self.workers,
        )
        final = residuals[-1] if residuals else self.residual(obj, probe, dataset)
        return self.score(obj, dataset, overlap, EPIE, final, f"{tag}_{EPIE}")

    def residual(self, obj: ComplexField, probe: ComplexField, dataset: DiffractionSet) -> float:
        """Data fidelity over the full dataset."""
        return data_fidelity(obj, probe, dataset, range(len(dataset)), self.workers)

    def score(  # noqa: PLR0913
        self,
        obj: ComplexField,
        dataset: DiffractionSet,
        overlap: float,
        method: str,
        final: float,
        name: str,
    ) -> SweepRow:
        """Evaluate one reconstruction and optionally save its previews."""
        ssim_phase, ssim_magnitude = evaluate(obj, self.truth, dataset.plan)
        logger.info("%s: overlap %.3f, SSIM phase %.4f, magnitude %.4f", name, overlap, ssim_phase, ssim_magnitude)
        if self.config["images"]:
            magnitude, phase = split(obj)
            export_image(phase, Path(self.config["images"]) / f"{name}_phase.pgm", value_range=(-np.pi, np.pi))
            export_image(magnitude, Path(self.config["images"]) / f"{name}_magnitude.pgm")
        return SweepRow(overlap, method, ssim_phase, ssim_magnitude, final, patterns=len(dataset))
