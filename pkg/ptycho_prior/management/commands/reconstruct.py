"""Reconstruct object and probe from a dataset with the regularized gradient solver."""
from __future__ import annotations

from pathlib import Path
from typing import ClassVar

from ptycho_prior.conf import get_setting
from ptycho_prior.experiment import ExperimentConfig, Option
from ptycho_prior.management.base import (
    UNSAVED,
    ExperimentCommand,
    nonnegative,
    optics_options,
    positive,
    write_estimate,
    write_run,
)
from ptycho_prior.services.priors import DEFAULT_STP_SIGMA, PriorKind, PriorWeights, lambda_x_for_overlap
from ptycho_prior.services.recon import ReconConfig, reconstruct
from ptycho_prior.services.storage import read_dataset, read_field, read_manifest, write_history_csv

DEFAULT_LAMBDA_X = 0.005


def image_prior_weight(lambda_x: float | None, manifest: dict) -> float:
    """Use the given weight, else schedule it from the dataset's recorded overlap."""
    if lambda_x is not None:
        return lambda_x
    overlap = manifest.get("provenance", {}).get("overlap")
    return DEFAULT_LAMBDA_X if overlap is None else lambda_x_for_overlap(overlap)


class Command(ExperimentCommand):
    """Write ``object.field``, ``probe.field``, ``history.csv``, previews and ``run.json``."""

    help = "Reconstruct the object and probe by minibatch Adam on the regularized objective."

    experiment_options: ClassVar[tuple[Option, ...]] = (
        Option("data", str, help="Dataset directory.", required=True),
        Option("prior", str, default=PriorKind.TV.value, help="Image prior.", choices=tuple(PriorKind)),
        Option("lambda-pr", float, default=0.01, help="Probe smoothness weight.", check=nonnegative,
               requirement="must be nonnegative"),
        Option("lambda-cc", float, default=0.01, help="Cross-channel weight.", check=nonnegative,
               requirement="must be nonnegative"),
        Option("lambda-x", float, help="Image prior weight; scheduled from the dataset overlap when unset.",
               check=nonnegative, requirement="must be nonnegative"),
        Option("stp-sigma", float, default=DEFAULT_STP_SIGMA, help="Structure tensor smoothing in pixels.",
               check=positive, requirement="must be positive"),
        Option("lr-object", float, default=0.1, help="Adam step for the object.", check=positive,
               requirement="must be positive"),
        Option("lr-probe", float, default=0.01, help="Adam step for the probe.", check=positive,
               requirement="must be positive"),
        Option("batch", int, default=16, help="Patterns per minibatch.", check=positive,
               requirement="must be positive"),
        Option("epochs", int, default=100, help="Passes over the dataset.", check=nonnegative,
               requirement="must be nonnegative"),
        Option("seed", int, default=0, help="Seed of the initialization and batch order.", check=nonnegative,
               requirement="must be nonnegative"),
        Option("probe", str, help="Initial probe field file; estimated from the data when unset."),
        Option("fix-probe", bool, default=False, help="Keep the probe at its initial value."),
        Option("log-every", int, default=lambda: get_setting("log_every"), help="Epochs between progress lines.",
               check=positive, requirement="must be positive"),
        *optics_options(),
        Option("out", str, help="Output directory.", required=True),
    )

    def run(self, config: ExperimentConfig, workers: int) -> None:
        """Reconstruct and write the results."""
        dataset = read_dataset(config["data"])
        manifest = read_manifest(config["data"])
        prior = PriorKind(config["prior"])
        weights = PriorWeights(
            lambda_pr=config["lambda_pr"],
            lambda_cc=config["lambda_cc"],
            lambda_x=0.0 if prior is PriorKind.NONE else image_prior_weight(config["lambda_x"], manifest),
            prior_kind=prior,
            stp_sigma=config["stp_sigma"],
        )
        recon_config = ReconConfig(
            weights=weights,
            lr_object=config["lr_object"],
            lr_probe=config["lr_probe"],
            batch_size=config["batch"],
            epochs=config["epochs"],
            seed=config["seed"],
            fix_probe=config["fix_probe"],
            defocus=config["defocus"],
            wavelength=config["wavelength"],
            pixel_pitch=config["pixel_pitch"],
            workers=workers,
            log_every=config["log_every"],
        )
        probe = read_field(config["probe"]) if config["probe"] else None
        obj, probe, history = reconstruct(dataset, recon_config, probe)

        out = Path(config["out"])
        out.mkdir(parents=True, exist_ok=True)
        write_estimate(out, obj, probe)
        write_history_csv(history, out / "history.csv")
        write_run(
            out,
            {
                "command": "reconstruct",
                "run_id": config.run_id("reconstruct", exclude=UNSAVED),
                "prior": prior.value,
                "lambda_x": weights.lambda_x,
                "overlap": manifest.get("provenance", {}).get("overlap"),
                "final_E_o": history[-1].data if history else None,
                "final_E_total": history[-1].total if history else None,
                "settings": config.to_dict(exclude=UNSAVED),
            },
        )
        self.report(f"Reconstructed {obj.shape} object over {len(history)} epochs into {out}")
