"""Run the ePIE baseline on a dataset."""
from __future__ import annotations

from pathlib import Path
from typing import ClassVar

from ptycho_prior.experiment import ExperimentConfig, Option
from ptycho_prior.management.base import (
    UNSAVED,
    ExperimentCommand,
    nonnegative,
    optics_options,
    unit_step,
    write_estimate,
    write_run,
)
from ptycho_prior.services.epie import epie_run
from ptycho_prior.services.forward import data_fidelity
from ptycho_prior.services.storage import read_dataset, read_manifest, write_residual_csv


class Command(ExperimentCommand):
    """Write ``object.field``, ``probe.field``, ``residuals.csv``, previews and ``run.json``."""

    help = "Reconstruct with the extended ptychographic iterative engine (no priors)."

    experiment_options: ClassVar[tuple[Option, ...]] = (
        Option("data", str, help="Dataset directory.", required=True),
        Option("sweeps", int, default=50, help="Passes over all positions.", check=nonnegative,
               requirement="must be nonnegative"),
        Option("alpha", float, default=1.0, help="Object step.", check=unit_step, requirement="must be in (0, 1]"),
        Option("beta", float, default=1.0, help="Probe step.", check=unit_step, requirement="must be in (0, 1]"),
        Option("seed", int, default=0, help="Seed of the initialization and visiting order.", check=nonnegative,
               requirement="must be nonnegative"),
        *optics_options(),
        Option("out", str, help="Output directory.", required=True),
    )

    def run(self, config: ExperimentConfig, workers: int) -> None:
        """Run the sweeps and write the results."""
        dataset = read_dataset(config["data"])
        manifest = read_manifest(config["data"])
        obj, probe, residuals = epie_run(
            dataset,
            config["sweeps"],
            config["seed"],
            config["alpha"],
            config["beta"],
            defocus=config["defocus"],
            wavelength=config["wavelength"],
            pixel_pitch=config["pixel_pitch"],
            workers=workers,
        )
        if residuals:
            final = residuals[-1]
        else:
            final = data_fidelity(obj, probe, dataset, range(len(dataset)), workers)

        out = Path(config["out"])
        out.mkdir(parents=True, exist_ok=True)
        write_estimate(out, obj, probe)
        write_residual_csv(residuals, out / "residuals.csv")
        write_run(
            out,
            {
                "command": "epie",
                "run_id": config.run_id("epie", exclude=UNSAVED),
                "prior": "epie",
                "overlap": manifest.get("provenance", {}).get("overlap"),
                "final_E_o": final,
                "settings": config.to_dict(exclude=UNSAVED),
            },
        )
        self.report(f"Ran {config['sweeps']} ePIE sweeps into {out}")
