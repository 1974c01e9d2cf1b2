"""Built-in test objects: an IC-like piecewise-constant phantom and a defocused Gaussian probe."""
from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np
from skimage.draw import rectangle

from ptycho_prior.services.field import fresnel_propagate, join

if TYPE_CHECKING:
    from ptycho_prior.services.field import ComplexField

logger = logging.getLogger(__name__)

MAGNITUDE_LEVELS = (1.0, 0.6)
PHASE_LEVELS = (-0.3, 0.3)


def chip_phantom(size: int | tuple[int, int], seed: int = 0) -> ComplexField:
    """Draw a seeded IC-like layout of pads, vias and horizontal/vertical wires.

    Metal (pads and wires) lowers the magnitude from 1.0 to 0.6 and raises the
    phase from -0.3 to 0.3 rad; vias change only the phase, so the two channels
    share most but not all edges.

    Args:
        size (int | tuple[int, int]): Object grid size (square when an int).
        seed (int): Layout seed.

    Returns:
        ComplexField: The phantom transmission function.

    """
    shape = (size, size) if isinstance(size, int) else (int(size[0]), int(size[1]))
    rng = np.random.default_rng(seed)
    metal = np.zeros(shape, dtype=bool)
    via = np.zeros(shape, dtype=bool)
    short = min(shape)
    wire = max(2, short // 48)

    for _ in range(max(2, short // 24)):
        extent = rng.integers(short // 12 + 2, short // 5 + 3, size=2)
        start = (rng.integers(0, shape[0] - extent[0]), rng.integers(0, shape[1] - extent[1]))
        metal[rectangle(start, extent=tuple(extent), shape=shape)] = True

    for _ in range(max(2, short // 16)):
        if rng.random() < 0.5:  # noqa: PLR2004
            row = rng.integers(0, shape[0] - wire)
            col0, col1 = np.sort(rng.integers(0, shape[1], size=2))
            metal[rectangle((row, col0), end=(row + wire - 1, max(col1, col0 + wire)), shape=shape)] = True
        else:
            col = rng.integers(0, shape[1] - wire)
            row0, row1 = np.sort(rng.integers(0, shape[0], size=2))
            metal[rectangle((row0, col), end=(max(row1, row0 + wire), col + wire - 1), shape=shape)] = True

    for _ in range(max(2, short // 20)):
        side = wire + 1
        start = (rng.integers(0, shape[0] - side), rng.integers(0, shape[1] - side))
        via[rectangle(start, extent=(side, side), shape=shape)] = True

    magnitude = np.where(metal, MAGNITUDE_LEVELS[1], MAGNITUDE_LEVELS[0])
    phase = np.where(metal | via, PHASE_LEVELS[1], PHASE_LEVELS[0])
    logger.debug("Chip phantom %s: %.1f%% metal", shape, 100.0 * metal.mean())
    return join(magnitude, phase)


def gaussian_probe(  # noqa: PLR0913
    size: int | tuple[int, int],
    sigma: float,
    defocus: float = 0.0,
    wavelength: float = 1.24e-10,
    pixel_pitch: float = 1e-8,
    workers: int = 1,
) -> ComplexField:
    """Return a centred Gaussian-magnitude probe, Fresnel-propagated by ``defocus``.

    Args:
        size (int | tuple[int, int]): Probe window size.
        sigma (float): Standard deviation of the magnitude in pixels.
        defocus (float): Propagation distance applied to the in-focus probe.
        wavelength (float): Wavelength, same length unit as ``defocus``.
        pixel_pitch (float): Pixel size, same length unit as ``defocus``.
        workers (int): FFT worker threads.

    Returns:
        ComplexField: The probe.

    """
    shape = (size, size) if isinstance(size, int) else (int(size[0]), int(size[1]))
    rows = np.arange(shape[0]) - shape[0] // 2
    cols = np.arange(shape[1]) - shape[1] // 2
    magnitude = np.exp(-(rows[:, None] ** 2 + cols[None, :] ** 2) / (2.0 * sigma**2))
    probe = magnitude.astype(np.complex128)
    return fresnel_propagate(probe, defocus, wavelength, pixel_pitch, workers)
