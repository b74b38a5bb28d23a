"""Voxel grids and direction sets describing a far-field scattering experiment.

Lengths are measured in wavelengths, so the wavenumber is always ``2*pi``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

WAVENUMBER = 2.0 * np.pi

FULL_SPHERE = "full"
HEMISPHERE = "hemisphere"


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Regular ``n_per_side**3`` lattice of voxel centers filling ``[0, L]^3``.

    Centers are ordered lexicographically with x varying fastest, i.e. the
    voxel ``(ix, iy, iz)`` has flat index ``ix + n*iy + n*n*iz``.
    """

    side_length: float
    n_per_side: int
    centers: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return self.side_length / self.n_per_side

    @property
    def k(self) -> float:
        return WAVENUMBER

    @property
    def kh(self) -> float:
        return self.k * self.h

    @property
    def n_voxels(self) -> int:
        return self.n_per_side ** 3

    def __len__(self):
        return self.n_voxels

    @property
    def center(self) -> np.ndarray:
        return np.full(3, 0.5 * self.side_length)

    def index(self, ix, iy, iz):
        n = self.n_per_side
        return ix + n * iy + n * n * iz


@dataclass(frozen=True, eq=False)
class DirectionSet:
    directions: np.ndarray = field(repr=False)
    coverage: str = FULL_SPHERE

    def __len__(self):
        return self.directions.shape[0]


def build_grid(side_length: float, n_per_side: int) -> VoxelGrid:
    """Voxel centers at the cell midpoints of a cube of side ``side_length``."""
    if not side_length > 0:
        raise InvalidArgumentError(f"side_length must be positive, got {side_length}")
    if int(n_per_side) != n_per_side or n_per_side < 1:
        raise InvalidArgumentError(f"n_per_side must be a positive integer, got {n_per_side}")
    n = int(n_per_side)
    h = side_length / n
    ticks = (np.arange(n) + 0.5) * h
    z, y, x = np.meshgrid(ticks, ticks, ticks, indexing="ij")
    centers = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    centers.setflags(write=False)
    return VoxelGrid(float(side_length), n, centers)


def grid_for_kh(kh: float, n_per_side: int) -> VoxelGrid:
    """Grid whose spacing gives the dimensionless parameter ``kh``."""
    h = kh / WAVENUMBER
    return build_grid(h * n_per_side, n_per_side)


def sphere_directions(count: int, coverage: str = FULL_SPHERE) -> DirectionSet:
    """Deterministic quasi-uniform unit vectors from a Fibonacci spiral.

    For ``coverage="hemisphere"`` the full-sphere spiral is folded onto the
    upper half by reflecting points with negative third component.
    """
    if int(count) != count or count < 1:
        raise InvalidArgumentError(f"count must be a positive integer, got {count}")
    if coverage not in (FULL_SPHERE, HEMISPHERE):
        raise InvalidArgumentError(f"unknown coverage {coverage!r}")
    i = np.arange(int(count)) + 0.5
    z = 1.0 - 2.0 * i / count
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    dirs = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    # renormalize to remove rounding drift in rho
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if coverage == HEMISPHERE:
        dirs[:, 2] = np.abs(dirs[:, 2])
    dirs.setflags(write=False)
    return DirectionSet(dirs, coverage)
