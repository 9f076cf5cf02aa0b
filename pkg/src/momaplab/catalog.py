"""Reusable initial-data recipes: families, weights, ensembles, fields.

Everything here is deterministic given its parameters (and a seed where
randomness is involved), so scenario files can name a recipe and the run
manifest reproduces the data exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInput
from .grids import ParameterGrid, WeightDensity, uniform_weight
from .mixtures import WaveFamily

TWO_PI = 2.0 * np.pi


def periodic_square_grid(n: int, length: float = TWO_PI) -> ParameterGrid:
    return ParameterGrid(((0.0, length), (0.0, length)), (n, n), "periodic")


# --------------------------------------------------------------------------
# wavefunction families on parameter grids
# --------------------------------------------------------------------------

def constant_family(grid: ParameterGrid, psi0, hbar: float = 1.0) -> WaveFamily:
    psi0 = np.asarray(psi0, dtype=complex)
    return WaveFamily(grid, np.broadcast_to(psi0, grid.shape + psi0.shape), hbar)


def plane_phase_family(grid: ParameterGrid, k, psi0=None,
                       hbar: float = 1.0) -> WaveFamily:
    """psi(r) = exp(i k . r) psi0 with a unit reference state."""
    k = np.asarray(k, dtype=float)
    if k.size != grid.ndim:
        raise InvalidInput("wavevector dimension must match the grid")
    if psi0 is None:
        psi0 = np.array([1.0, 0.0], dtype=complex)
    psi0 = np.asarray(psi0, dtype=complex)
    psi0 = psi0 / np.linalg.norm(psi0)
    meshes = grid.meshes()
    phase = np.zeros(grid.shape)
    for kj, mesh in zip(k, meshes):
        phase = phase + kj * mesh
    vals = np.exp(1j * phase)[..., None] * psi0
    return WaveFamily(grid, vals, hbar)


def bloch_band_family(grid: ParameterGrid, mass: float = 1.0,
                      hbar: float = 1.0):
    """Lower-band eigenvector family of d(r) . sigma on a periodic square.

    d(r) = (sin r1, sin r2, mass - cos r1 - cos r2); for 0 < mass < 2 the
    family winds once around the Bloch sphere, so the Wilson flux is
    -2 pi hbar (Chern number -1 for this orientation).  The stored gauge
        psi = (dx - i dy, -( |d| + dz )) / sqrt(2 |d| (|d| + dz))
    is smooth except where d points to the south pole, which for
    0 < mass < 2 happens only at r = (0, 0) modulo the period.

    Returns ``(family, singular_points)`` with the singular parameter
    values of the gauge formula listed explicitly so callers can mask
    their neighborhoods.
    """
    if grid.ndim != 2 or not grid.periodic:
        raise InvalidInput("the Bloch band family lives on a periodic 2-D grid")
    if not 0.0 < mass < 2.0:
        raise InvalidInput("mass must lie in (0, 2) for a unit winding number")
    r1, r2 = grid.meshes()
    # rescale so any box length plays the role of one Brillouin zone; the
    # map keeps r = 0 (mod L) at the Bloch south pole
    L1 = grid.extents[0][1] - grid.extents[0][0]
    L2 = grid.extents[1][1] - grid.extents[1][0]
    s1 = TWO_PI * r1 / L1
    s2 = TWO_PI * r2 / L2
    dx, dy = np.sin(s1), np.sin(s2)
    dz = mass - np.cos(s1) - np.cos(s2)
    dn = np.sqrt(dx**2 + dy**2 + dz**2)
    denom = 2.0 * dn * (dn + dz)
    if np.any(denom <= 1e-14):
        raise InvalidInput(
            "grid node hit the gauge singularity at r = (0, 0) mod L; "
            "offset the grid by half a cell")
    comp1 = (dx - 1j * dy) / np.sqrt(denom)
    comp2 = -(dn + dz) / np.sqrt(denom)
    vals = np.stack([comp1, comp2], axis=-1)
    sing1 = L1 * np.ceil(grid.extents[0][0] / L1 - 1e-12)
    sing2 = L2 * np.ceil(grid.extents[1][0] / L2 - 1e-12)
    return WaveFamily(grid, vals, hbar), [(float(sing1), float(sing2))]


def offset_periodic_grid(n: int, length: float = TWO_PI) -> ParameterGrid:
    """Periodic square grid with nodes shifted half a cell off the origin."""
    h = length / n
    return ParameterGrid(((0.5 * h, length + 0.5 * h),
                          (0.5 * h, length + 0.5 * h)), (n, n), "periodic")


def singular_point_mask(grid: ParameterGrid, points, radius: float):
    """Plaquette masks that exclude disks around the given parameter points.

    Distances are measured between plaquette centers and the points, with
    periodic wrap; returns one boolean block per axis pair (True = keep).
    """
    if grid.ndim != 2:
        raise InvalidInput("mask builder supports 2-D grids")
    h1, h2 = grid.spacings
    c1 = grid.axis_coords(0) + 0.5 * h1
    c2 = grid.axis_coords(1) + 0.5 * h2
    shape = grid.plaquette_shape((0, 1))
    C1, C2 = np.meshgrid(c1[: shape[0]], c2[: shape[1]], indexing="ij")
    keep = np.ones(shape, dtype=bool)
    L1 = grid.extents[0][1] - grid.extents[0][0]
    L2 = grid.extents[1][1] - grid.extents[1][0]
    for (p1, p2) in points:
        d1 = np.abs(C1 - p1)
        d2 = np.abs(C2 - p2)
        if grid.periodic:
            d1 = np.minimum(d1, L1 - d1)
            d2 = np.minimum(d2, L2 - d2)
        keep &= d1**2 + d2**2 > radius**2
    return (keep,)


def smooth_two_level_family(grid: ParameterGrid, hbar: float = 1.0) -> WaveFamily:
    """Smooth periodic two-level family with zero winding but rich curvature."""
    r1, r2 = grid.meshes()
    theta = 0.8 + 0.35 * np.sin(r1) + 0.25 * np.cos(r2)
    phi = 0.4 * np.sin(r1 + r2) + 0.3 * np.cos(r1)
    vals = np.stack([np.cos(theta / 2) * np.exp(0.5j * phi),
                     np.sin(theta / 2) * np.exp(-0.5j * phi)], axis=-1)
    return WaveFamily(grid, vals, hbar)


# --------------------------------------------------------------------------
# weights and stream data
# --------------------------------------------------------------------------

def trig_weight(grid: ParameterGrid, amplitude: float = 0.3) -> WeightDensity:
    """Strictly positive smooth periodic weight."""
    meshes = grid.meshes()
    expo = np.zeros(grid.shape)
    for j, mesh in enumerate(meshes):
        expo = expo + amplitude * np.sin(mesh + 0.4 * j) / (j + 1)
    return WeightDensity(grid, np.exp(expo))


def gaussian_bump_two_form(grid: ParameterGrid, center, sigma: float,
                           amplitude: float = 1.0):
    """2-cochain whose plaquette potential is a periodic Gaussian bump."""
    from .berry import Cochain  # local import to avoid a cycle

    if grid.ndim != 2:
        raise InvalidInput("bump stream data is 2-D only")
    h1, h2 = grid.spacings
    shape = grid.plaquette_shape((0, 1))
    c1 = grid.axis_coords(0)[: shape[0]] + 0.5 * h1
    c2 = grid.axis_coords(1)[: shape[1]] + 0.5 * h2
    C1, C2 = np.meshgrid(c1, c2, indexing="ij")
    L1 = grid.extents[0][1] - grid.extents[0][0]
    L2 = grid.extents[1][1] - grid.extents[1][0]
    d1 = np.abs(C1 - center[0])
    d2 = np.abs(C2 - center[1])
    if grid.periodic:
        d1 = np.minimum(d1, L1 - d1)
        d2 = np.minimum(d2, L2 - d2)
    g = amplitude * np.exp(-(d1**2 + d2**2) / (2 * sigma**2))
    return Cochain(grid, 2, (g * h1 * h2,))


def random_fourier_samples(grid: ParameterGrid, rng: np.random.Generator,
                           modes: int = 3, amplitude: float = 1.0,
                           complex_valued: bool = False) -> np.ndarray:
    """Smooth periodic random field built from a few Fourier modes."""
    meshes = grid.meshes()
    scaled = []
    for j, mesh in enumerate(meshes):
        a, b = grid.extents[j]
        scaled.append(TWO_PI * (mesh - a) / (b - a))
    out = np.zeros(grid.shape, dtype=complex if complex_valued else float)
    n_draws = modes if grid.ndim == 1 else modes * grid.ndim
    for _ in range(n_draws):
        ks = rng.integers(-modes, modes + 1, size=grid.ndim)
        phase = rng.uniform(0, TWO_PI)
        wave = np.zeros(grid.shape)
        for kj, sj in zip(ks, scaled):
            wave = wave + kj * sj
        coeff = rng.normal() * amplitude / n_draws
        if complex_valued:
            out = out + coeff * np.exp(1j * (wave + phase))
        else:
            out = out + coeff * np.cos(wave + phase)
    return out


__all__ = [
    "periodic_square_grid", "offset_periodic_grid", "constant_family",
    "plane_phase_family", "bloch_band_family", "smooth_two_level_family",
    "singular_point_mask", "trig_weight", "gaussian_bump_two_form",
    "random_fourier_samples", "uniform_weight",
]
