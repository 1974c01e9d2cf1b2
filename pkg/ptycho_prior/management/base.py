"""Shared plumbing for the experiment management commands."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any, ClassVar

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from ptycho_prior.conf import get_setting
from ptycho_prior.experiment import ExperimentConfig, Option
from ptycho_prior.services.field import split
from ptycho_prior.services.storage import export_image, write_field

if TYPE_CHECKING:
    from argparse import ArgumentParser

    from ptycho_prior.services.field import ComplexField

logger = logging.getLogger(__name__)

RUN_NAME = "run.json"
UNSAVED = ("out", "config")


def positive(value: float) -> bool:
    """Range check for strictly positive settings."""
    return value > 0


def nonnegative(value: float) -> bool:
    """Range check for settings that may be zero."""
    return value >= 0


def unit_step(value: float) -> bool:
    """Range check for step sizes in (0, 1]."""
    return 0 < value <= 1


def optics_options() -> tuple[Option, ...]:
    """Defocus, wavelength and pixel pitch, defaulting to the host's ``PTYCHO_CONFIG``."""
    return (
        Option("defocus", float, default=lambda: get_setting("defocus"), help="Probe defocus distance in metres."),
        Option(
            "wavelength",
            float,
            default=lambda: get_setting("wavelength"),
            help="Wavelength in metres.",
            check=positive,
            requirement="must be positive",
        ),
        Option(
            "pixel-pitch",
            float,
            default=lambda: get_setting("pixel_pitch"),
            help="Object pixel size in metres.",
            check=positive,
            requirement="must be positive",
        ),
    )


def write_estimate(out: Path, obj: ComplexField, probe: ComplexField) -> None:
    """Write object and probe fields plus magnitude and phase previews into ``out``."""
    write_field(obj, out / "object.field")
    write_field(probe, out / "probe.field")
    magnitude, phase = split(obj)
    export_image(magnitude, out / "object_magnitude.pgm")
    export_image(phase, out / "object_phase.pgm", value_range=(-np.pi, np.pi))
    export_image(np.abs(probe), out / "probe_magnitude.pgm")


def write_run(out: Path, record: dict[str, Any]) -> Path:
    """Write the JSON record describing a finished run."""
    path = out / RUN_NAME
    path.write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def read_run(directory: Path) -> dict[str, Any]:
    """Load ``run.json`` from a result directory, or an empty dict when there is none."""
    path = directory / RUN_NAME
    if not path.is_file():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


class ExperimentCommand(BaseCommand):
    """Base class of commands whose settings come from flags and an optional config file."""

    requires_system_checks: ClassVar[list[str]] = []
    experiment_options: ClassVar[tuple[Option, ...]] = ()

    def add_arguments(self, parser: ArgumentParser) -> None:
        """Add ``--config`` and one flag per experiment option."""
        parser.add_argument("--config", default=None, help="Env-style KEY=value file with default settings.")
        for option in self.experiment_options:
            option.add_to(parser)

    def handle(self, *args: Any, **options: Any) -> None:  # noqa: ANN401, ARG002
        """Merge and validate the settings, then run the experiment."""
        self.verbosity = options.get("verbosity", 1)
        try:
            config = ExperimentConfig.load(self.experiment_options, options, options.get("config"))
            self.run(config, workers=int(get_setting("threads")))
        except (ValueError, OSError) as exc:
            msg = " ".join(str(exc).split())
            raise CommandError(msg) from exc

    def run(self, config: ExperimentConfig, workers: int) -> None:
        """Carry out the command with validated settings."""
        raise NotImplementedError

    def report(self, message: str) -> None:
        """Log a result line and echo it on stdout unless ``--verbosity 0``."""
        logger.info(message)
        if self.verbosity > 0:
            self.stdout.write(self.style.SUCCESS(message))
