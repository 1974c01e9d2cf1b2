"""Simulate a ptychographic dataset from a phantom or a stored object."""
from __future__ import annotations

from pathlib import Path
from typing import ClassVar

from ptycho_prior.experiment import ExperimentConfig, Option
from ptycho_prior.management.base import (
    UNSAVED,
    ExperimentCommand,
    nonnegative,
    optics_options,
    positive,
    write_estimate,
)
from ptycho_prior.services.forward import simulate
from ptycho_prior.services.phantom import chip_phantom, gaussian_probe
from ptycho_prior.services.scan import fermat_plan, plan_overlap, raster_plan, step_for_overlap
from ptycho_prior.services.storage import read_field, write_dataset

PHANTOMS = ("chip-like",)
PLANS = ("raster", "fermat")


class Command(ExperimentCommand):
    """Write ``manifest.json``, ``patterns.bin`` and the ground-truth object and probe."""

    help = "Simulate diffraction patterns of a phantom or stored object along a raster or Fermat scan."

    experiment_options: ClassVar[tuple[Option, ...]] = (
        Option("object", str, help="Complex object field file; overrides --phantom."),
        Option("phantom", str, default="chip-like", help="Built-in phantom.", choices=PHANTOMS),
        Option("object-size", int, default=128, help="Phantom size in pixels.", check=lambda v: v >= 8,
               requirement="must be at least 8"),
        Option("probe-size", int, default=64, help="Probe window size in pixels.", check=positive,
               requirement="must be positive"),
        Option("probe-sigma", float, default=16.0, help="Gaussian probe width in pixels.", check=positive,
               requirement="must be positive"),
        Option("plan", str, default="raster", help="Scan geometry.", choices=PLANS),
        Option("step", int, default=16, help="Raster step in pixels.", check=positive, requirement="must be positive"),
        Option("overlap", float, help="Raster overlap ratio; sets the step from --probe-sigma over --step.",
               check=lambda v: 0 <= v < 1, requirement="must be in [0, 1)"),
        Option("n-points", int, default=175, help="Fermat spiral points.", check=positive,
               requirement="must be positive"),
        Option("spacing", float, default=17.5, help="Fermat mean spacing in pixels.", check=positive,
               requirement="must be positive"),
        Option("photons", float, help="Mean photons per pattern; noiseless when unset.", check=positive,
               requirement="must be positive"),
        Option("seed", int, default=0, help="Seed of the phantom and the noise.", check=nonnegative,
               requirement="must be nonnegative"),
        *optics_options(),
        Option("out", str, help="Output dataset directory.", required=True),
    )

    def run(self, config: ExperimentConfig, workers: int) -> None:
        """Simulate and write the dataset."""
        if config["object"]:
            obj = read_field(config["object"])
        else:
            obj = chip_phantom(config["object_size"], seed=config["seed"])
        probe = gaussian_probe(
            config["probe_size"],
            config["probe_sigma"],
            config["defocus"],
            config["wavelength"],
            config["pixel_pitch"],
            workers,
        )

        if config["plan"] == "raster":
            step = config["step"]
            if config["overlap"] is not None:
                step = step_for_overlap(config["overlap"], config["probe_sigma"])
            plan = raster_plan(obj.shape, probe.shape, step)
        else:
            plan = fermat_plan(config["n_points"], config["spacing"], None, obj.shape, probe.shape)
        overlap = plan_overlap(plan, config["probe_sigma"])

        dataset = simulate(obj, probe, plan, config["photons"], config["seed"], workers)
        provenance = {
            "command": "simulate",
            "run_id": config.run_id("simulate", exclude=UNSAVED),
            "seed": config["seed"],
            "overlap": overlap,
            "settings": config.to_dict(exclude=UNSAVED),
        }
        out = Path(config["out"])
        write_dataset(dataset, out, provenance)
        write_estimate(out, obj, probe)
        self.report(f"Wrote {len(dataset)} patterns ({overlap:.1%} overlap) to {out}")
