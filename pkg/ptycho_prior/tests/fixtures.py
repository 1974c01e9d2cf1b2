"""Small deterministic problems shared by the tests."""
import numpy as np

from ptycho_prior.services.forward import simulate
from ptycho_prior.services.phantom import chip_phantom, gaussian_probe
from ptycho_prior.services.scan import ScanPlan, raster_plan


def random_object(rows, cols, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.5, 1.0, size=(rows, cols)) * np.exp(1j * rng.uniform(-0.5, 0.5, size=(rows, cols)))


def random_probe(size, seed=1):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))


def tiny_problem(seed=0):
    """16x16 object, 8x8 probe, 3 overlapping positions."""
    obj = random_object(16, 16, seed)
    probe = random_probe(8, seed + 1)
    plan = ScanPlan(((0, 0), (4, 6), (8, 8)), (8, 8), (16, 16))
    return obj, probe, simulate(obj, probe, plan)


def chip_problem(object_size=48, probe_size=16, sigma=4.0, step=4, seed=0):
    """Chip phantom scanned by a defocused Gaussian probe along a raster."""
    obj = chip_phantom(object_size, seed=seed)
    probe = gaussian_probe(probe_size, sigma, defocus=2e-3)
    plan = raster_plan(object_size, probe_size, step)
    return obj, probe, simulate(obj, probe, plan)
