"""Score a reconstruction against the ground truth."""
from __future__ import annotations

import math
from pathlib import Path
from typing import ClassVar

from ptycho_prior.experiment import ExperimentConfig, Option
from ptycho_prior.management.base import ExperimentCommand, read_run
from ptycho_prior.services.metrics import SweepRow, evaluate
from ptycho_prior.services.scan import scan_plan_from_dict
from ptycho_prior.services.storage import MANIFEST_NAME, read_field, read_manifest, write_sweep_csv


class Command(ExperimentCommand):
    """Write a one-row SSIM table for a result directory."""

    help = "Compute phase and magnitude SSIM of a reconstruction after removing the global phase and scale."

    experiment_options: ClassVar[tuple[Option, ...]] = (
        Option("recon", str, help="Reconstruction directory with object.field.", required=True),
        Option("truth", str, help="Ground-truth directory with object.field, usually the dataset.", required=True),
        Option("out", str, help="Output CSV file.", required=True),
    )

    def run(self, config: ExperimentConfig, workers: int) -> None:  # noqa: ARG002
        """Evaluate and write the CSV."""
        recon = Path(config["recon"])
        truth = Path(config["truth"])
        estimate = read_field(recon / "object.field")
        reference = read_field(truth / "object.field")

        plan = None
        overlap = None
        if (truth / MANIFEST_NAME).is_file():
            manifest = read_manifest(truth)
            plan = scan_plan_from_dict(manifest["plan"])
            overlap = manifest.get("provenance", {}).get("overlap")
        run = read_run(recon)
        if overlap is None:
            overlap = run.get("overlap")

        ssim_phase, ssim_magnitude = evaluate(estimate, reference, plan)
        final = run.get("final_E_o")
        row = SweepRow(
            overlap=math.nan if overlap is None else overlap,
            prior=run.get("prior", "unknown"),
            ssim_phase=ssim_phase,
            ssim_magnitude=ssim_magnitude,
            final_e_o=math.nan if final is None else final,
        )
        write_sweep_csv([row], config["out"])
        self.report(f"SSIM phase {ssim_phase:.4f}, magnitude {ssim_magnitude:.4f} written to {config['out']}")
