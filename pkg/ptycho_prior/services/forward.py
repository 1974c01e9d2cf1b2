"""The ptychographic forward model: exit waves, far-field intensities and the data-fidelity energy."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ptycho_prior.services.field import as_complex_field, fft2, ifft2
from ptycho_prior.services.scan import ScanError, ScanPlan

if TYPE_CHECKING:
    from collections.abc import Sequence

    from ptycho_prior.services.field import ComplexField

logger = logging.getLogger(__name__)

EPS_MAG = 1e-12


@dataclass(frozen=True, eq=False)
class DiffractionSet:
    """Far-field intensity patterns aligned with the positions of a scan plan.

    ``patterns`` is a ``(len(plan), probe_rows, probe_cols)`` stack with the zero
    frequency at index ``(0, 0)`` of every pattern.
    """

    plan: ScanPlan
    patterns: np.ndarray

    def __post_init__(self) -> None:
        """Check the pattern count, shape and nonnegativity invariants."""
        expected = (len(self.plan), *self.plan.probe_shape)
        if self.patterns.shape != expected:
            msg = f"patterns have shape {self.patterns.shape}, expected {expected}"
            raise ValueError(msg)
        if not np.all(np.isfinite(self.patterns)) or np.any(self.patterns < 0):
            msg = "diffraction intensities must be finite and nonnegative"
            raise ValueError(msg)

    def __len__(self) -> int:
        """Return the number of patterns."""
        return self.patterns.shape[0]


def _check_position(object_shape: tuple[int, int], probe_shape: tuple[int, int], pos: tuple[int, int]) -> None:
    row, col = pos
    if not (0 <= row <= object_shape[0] - probe_shape[0] and 0 <= col <= object_shape[1] - probe_shape[1]):
        msg = f"position {pos} puts a {probe_shape} window outside the {object_shape} object"
        raise ScanError(msg)


def object_windows(obj: np.ndarray, positions: Sequence[tuple[int, int]], probe_shape: tuple[int, int]) -> np.ndarray:
    """Gather the probe-sized object windows at ``positions`` into a stack."""
    if len(positions) == 0:
        return np.zeros((0, *probe_shape), dtype=obj.dtype)
    for pos in positions:
        _check_position(obj.shape, probe_shape, pos)
    rows, cols = np.asarray(positions, dtype=int).T
    return sliding_window_view(obj, probe_shape)[rows, cols]


def scatter_windows(
    windows: np.ndarray,
    positions: Sequence[tuple[int, int]],
    object_shape: tuple[int, int],
) -> np.ndarray:
    """Add a stack of window-shaped fields back onto an object grid, in position order."""
    out = np.zeros(object_shape, dtype=windows.dtype)
    pr, pc = windows.shape[-2:]
    for (row, col), window in zip(positions, windows, strict=True):
        out[row : row + pr, col : col + pc] += window
    return out


def exit_wave(obj: ComplexField, probe: ComplexField, pos: tuple[int, int]) -> ComplexField:
    """Return ``probe * object[window at pos]``.

    Raises:
        ScanError: If the probe window at ``pos`` leaves the object.

    """
    _check_position(obj.shape, probe.shape, pos)
    row, col = pos
    return probe * obj[row : row + probe.shape[0], col : col + probe.shape[1]]


def diffract(psi: np.ndarray, workers: int = 1) -> np.ndarray:
    """Return the far-field intensity ``|fft2(psi)|**2`` (stacks allowed)."""
    spectrum = fft2(psi, workers)
    return spectrum.real**2 + spectrum.imag**2


def simulate(  # noqa: PLR0913
    obj: ComplexField,
    probe: ComplexField,
    plan: ScanPlan,
    photons: float | None = None,
    seed: int = 0,
    workers: int = 1,
) -> DiffractionSet:
    """Simulate the diffraction patterns of ``obj`` scanned by ``probe`` along ``plan``.

    Args:
        obj (ComplexField): Object transmission function, object-sized.
        probe (ComplexField): Probe, probe-sized.
        plan (ScanPlan): Probe positions.
        photons (float | None): Expected photon count of the mean pattern; Poisson noise
            is applied when set, the patterns are noiseless when None.
        seed (int): Seed of the noise generator.
        workers (int): FFT worker threads.

    Returns:
        DiffractionSet: One pattern per plan position.

    Raises:
        FieldError: If the object or probe is not a finite 2-D field.

    """
    obj, probe = as_complex_field(obj), as_complex_field(probe)
    if len(plan) == 0:
        return DiffractionSet(plan=plan, patterns=np.zeros((0, *probe.shape)))
    windows = object_windows(obj, plan.positions, probe.shape)
    patterns = diffract(probe[None, :, :] * windows, workers)

    if photons is not None:
        mean_energy = float(patterns.sum(axis=(-2, -1)).mean())
        if mean_energy > 0:
            scale = photons / mean_energy
            rng = np.random.default_rng(seed)
            patterns = rng.poisson(patterns * scale).astype(np.float64) / scale
            logger.debug("Applied Poisson noise at %g photons per pattern", photons)

    logger.info("Simulated %d diffraction patterns of shape %s", len(plan), probe.shape)
    return DiffractionSet(plan=plan, patterns=np.ascontiguousarray(patterns, dtype=np.float64))


def _check_batch(dataset: DiffractionSet, batch: Sequence[int]) -> None:
    if len(batch) == 0:
        msg = "batch must contain at least one pattern index"
        raise ValueError(msg)
    for i in batch:
        if not 0 <= i < len(dataset):
            msg = f"batch index {i} is outside the dataset of {len(dataset)} patterns"
            raise IndexError(msg)


def pattern_energies(
    obj: ComplexField,
    probe: ComplexField,
    dataset: DiffractionSet,
    batch: Sequence[int],
    workers: int = 1,
) -> np.ndarray:
    """Per-pattern amplitude misfit ``sum_k (|F[P * O_i]| - sqrt(I_i))**2`` for the batch."""
    _check_batch(dataset, batch)
    positions = [dataset.plan.positions[i] for i in batch]
    spectrum = fft2(probe[None, :, :] * object_windows(obj, positions, probe.shape), workers)
    amplitude = np.sqrt(spectrum.real**2 + spectrum.imag**2 + EPS_MAG**2)
    residual = amplitude - np.sqrt(dataset.patterns[list(batch)])
    return np.sum(residual**2, axis=(-2, -1))


def data_fidelity(
    obj: ComplexField,
    probe: ComplexField,
    dataset: DiffractionSet,
    batch: Sequence[int],
    workers: int = 1,
) -> float:
    """Mean amplitude misfit over the batch.

    Args:
        obj (ComplexField): Object estimate.
        probe (ComplexField): Probe estimate.
        dataset (DiffractionSet): Measured patterns.
        batch (Sequence[int]): Pattern indices, non-empty.
        workers (int): FFT worker threads; the reduction order does not depend on it.

    Returns:
        float: ``(1/|batch|) * sum_i sum_k (|F[P * O_i]|_k - sqrt(I_i,k))**2``.

    Raises:
        ValueError: If the batch is empty.

    """
    return float(pattern_energies(obj, probe, dataset, batch, workers).sum() / len(batch))


def data_fidelity_gradient(
    obj: ComplexField,
    probe: ComplexField,
    dataset: DiffractionSet,
    batch: Sequence[int],
    workers: int = 1,
) -> tuple[float, ComplexField, ComplexField]:
    """Data fidelity and its gradients with respect to the object and probe samples.

    Gradients are returned as ``dE/dRe + 1j * dE/dIm`` per sample.

    Returns:
        tuple[float, ComplexField, ComplexField]: ``(energy, object_gradient, probe_gradient)``.

    """
    _check_batch(dataset, batch)
    positions = [dataset.plan.positions[i] for i in batch]
    windows = object_windows(obj, positions, probe.shape)
    spectrum = fft2(probe[None, :, :] * windows, workers)
    amplitude = np.sqrt(spectrum.real**2 + spectrum.imag**2 + EPS_MAG**2)
    residual = amplitude - np.sqrt(dataset.patterns[list(batch)])
    energy = float(np.sum(residual**2, axis=(-2, -1)).sum() / len(batch))

    grad_exit = ifft2(2.0 * residual * spectrum / amplitude, workers) / len(batch)
    grad_windows = grad_exit * np.conj(probe)[None, :, :]
    grad_probe = np.sum(grad_exit * np.conj(windows), axis=0)
    grad_obj = scatter_windows(grad_windows, positions, obj.shape)
    return energy, grad_obj, grad_probe
