"""Scatterer models evaluated on arbitrary voxel grids."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError
from ..forward import PotentialField
from ..geometry import VoxelGrid

TWO_SPHERES = "two-spheres"
RADIAL_SPHERE = "radial-sphere"
RANDOM_VOXELS = "random-voxels"
KINDS = (TWO_SPHERES, RADIAL_SPHERE, RANDOM_VOXELS)

# membership slack so centers exactly on a sphere surface count as inside
_TOL = 1e-9


@dataclass
class ScattererModel:
    """Model kind plus its geometry and strength parameters (lengths in wavelengths).

    two-spheres: ``eta0``, ``radius`` (0.5), ``separation`` between centers
    (1.5), ``center`` of the pair (domain center), ``axis`` ((1, 0, 0)).
    radial-sphere: ``eta0``, ``radius`` (1.25), ``center``; strength grows
    linearly from 0 at the center to ``eta0`` at the surface.
    random-voxels: ``eta0``, ``s``, ``seed``.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def build(self, grid: VoxelGrid) -> PotentialField:
        return build_model(self.kind, self.params, grid)


def _center(params, grid):
    c = params.get("center")
    return grid.center if c is None else np.asarray(c, dtype=float)


def _check_inside(grid, center, radius):
    L = grid.side_length
    if np.any(center - radius < -_TOL) or np.any(center + radius > L + _TOL):
        raise InvalidArgumentError(
            f"sphere of radius {radius} at {center.tolist()} does not fit in [0, {L}]^3")


def _eta0(params):
    if "eta0" not in params:
        raise InvalidArgumentError("model parameters need eta0")
    return params["eta0"]


def build_model(kind, params, grid: VoxelGrid) -> PotentialField:
    """Sample a scatterer model on ``grid`` by voxel-center membership."""
    params = dict(params or {})
    r = grid.centers
    if kind == TWO_SPHERES:
        eta0 = _eta0(params)
        radius = float(params.get("radius", 0.5))
        sep = float(params.get("separation", 1.5))
        axis = np.asarray(params.get("axis", (1.0, 0.0, 0.0)), dtype=float)
        axis = axis / np.linalg.norm(axis)
        c = _center(params, grid)
        centers = [c - 0.5 * sep * axis, c + 0.5 * sep * axis]
        if radius < 0 or sep < 0:
            raise InvalidArgumentError("radius and separation must be non-negative")
        inside = np.zeros(grid.n_voxels, dtype=bool)
        if radius > 0:
            for cc in centers:
                _check_inside(grid, cc, radius)
                inside |= np.linalg.norm(r - cc, axis=1) <= radius + _TOL
        eta = np.where(inside, eta0, 0.0)
    elif kind == RADIAL_SPHERE:
        eta0 = _eta0(params)
        radius = float(params.get("radius", 1.25))
        if radius < 0:
            raise InvalidArgumentError("radius must be non-negative")
        c = _center(params, grid)
        eta = np.zeros(grid.n_voxels)
        if radius > 0:
            _check_inside(grid, c, radius)
            rho = np.linalg.norm(r - c, axis=1)
            inside = rho <= radius + _TOL
            eta[inside] = eta0 * np.minimum(rho[inside] / radius, 1.0)
    elif kind == RANDOM_VOXELS:
        eta0 = _eta0(params)
        s = int(params.get("s", 0))
        if not 0 <= s <= grid.n_voxels:
            raise InvalidArgumentError(f"s must lie in [0, {grid.n_voxels}], got {s}")
        rng = np.random.default_rng(params.get("seed", 0))
        eta = np.zeros(grid.n_voxels)
        eta[rng.choice(grid.n_voxels, s, replace=False)] = eta0
    else:
        raise InvalidArgumentError(f"unknown model kind {kind!r}; choose from {', '.join(KINDS)}")
    return PotentialField.from_dense(grid, eta)


def random_support(rng, n_voxels, s) -> np.ndarray:
    """Sorted support of ``s`` voxels drawn uniformly without replacement."""
    return np.sort(rng.choice(n_voxels, s, replace=False))


def central_slice(values, grid: VoxelGrid, axis=2, index=None) -> np.ndarray:
    """``n x n`` slice of a voxel vector through the middle plane normal to ``axis``."""
    n = grid.n_per_side
    index = n // 2 if index is None else index
    if not 0 <= index < n:
        raise InvalidArgumentError(f"slice index {index} outside [0, {n})")
    if isinstance(values, PotentialField):
        values = values.dense()
    # reshape to (z, y, x) because x varies fastest
    cube = np.asarray(values).reshape(n, n, n)
    if axis == 2:
        return cube[index]
    if axis == 1:
        return cube[:, index, :]
    if axis == 0:
        return cube[:, :, index]
    raise InvalidArgumentError(f"axis must be 0, 1 or 2, got {axis}")
