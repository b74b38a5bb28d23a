import numpy as np
import pytest

from scatteriht.forward import assemble_operators, vg_norms
from scatteriht.geometry import build_grid, sphere_directions


def random_physical_instance(rng, n_side=4, n_meas=6, n_src=5, s=2, vg_target=None, four_pi=True):
    """Small grid, Fibonacci directions and a random s-sparse potential.

    With ``vg_target`` the potential is rescaled so ``||V Gamma||_1`` equals it.
    """
    side = rng.uniform(0.5, 2.0)
    grid = build_grid(side, n_side)
    A, B, G = assemble_operators(grid, sphere_directions(n_meas), sphere_directions(n_src),
                                 four_pi=four_pi)
    v = np.zeros(grid.n_voxels, dtype=complex)
    S = np.sort(rng.choice(grid.n_voxels, s, replace=False))
    v[S] = rng.uniform(0.5, 1.5, s) * np.exp(1j * rng.uniform(-0.3, 0.3, s))
    if vg_target is not None:
        v *= vg_target / vg_norms(v, G)[1]
    return grid, A, B, G, v


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
