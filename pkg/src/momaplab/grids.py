"""Uniform parameter grids and weight densities.

A :class:`ParameterGrid` is a tensor-product grid on a box in R^n
(n = 1, 2 or 3) that is either fully periodic or fully open.  Node
placement follows the cell convention: a periodic axis with N nodes
covers [a, b) with spacing (b - a)/N (node b is identified with node a),
while an open axis places its N nodes on [a, b] inclusive with spacing
(b - a)/(N - 1), so that trapezoid quadrature sees both endpoints.

A :class:`WeightDensity` samples a nonnegative measure w(r) d^n r on the
nodes; its quadrature rule is the plain Riemann sum on periodic grids and
the trapezoid rule on open grids.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidInput

BOUNDARY_MODES = ("open", "periodic")

#: open-boundary weight mass within one cell of the box edge above this
#: fraction of the total triggers a truncation warning
BOUNDARY_MASS_TOL = 1e-8


@dataclass(frozen=True)
class ParameterGrid:
    """Uniform grid on a box in R^n with open or periodic boundaries."""

    extents: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]
    boundary: str = "open"

    def __post_init__(self):
        extents = tuple((float(a), float(b)) for a, b in self.extents)
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "counts", counts)
        if self.boundary not in BOUNDARY_MODES:
            raise InvalidInput(f"unknown boundary mode {self.boundary!r}")
        if not 1 <= len(extents) <= 3 or len(counts) != len(extents):
            raise InvalidInput("grid dimension must be 1, 2 or 3")
        if any(c < 4 for c in counts):
            raise InvalidInput("grids need at least 4 nodes per axis")
        if any(b <= a for a, b in extents):
            raise InvalidInput("axis extent must satisfy a < b")

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def spacings(self) -> tuple[float, ...]:
        cells = [c if self.periodic else c - 1 for c in self.counts]
        return tuple((b - a) / m for (a, b), m in zip(self.extents, cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    def axis_coords(self, axis: int) -> np.ndarray:
        a, b = self.extents[axis]
        n = self.counts[axis]
        if self.periodic:
            return a + (b - a) * np.arange(n) / n
        return np.linspace(a, b, n)

    def meshes(self) -> tuple[np.ndarray, ...]:
        """Node coordinate arrays of shape ``self.shape`` (ij indexing)."""
        return tuple(np.meshgrid(*(self.axis_coords(j) for j in range(self.ndim)),
                                 indexing="ij"))

    def quad_weights(self) -> np.ndarray:
        """Tensor-product quadrature weights (Riemann / trapezoid)."""
        axes = []
        for j, h in enumerate(self.spacings):
            w = np.full(self.counts[j], h)
            if not self.periodic:
                w[0] *= 0.5
                w[-1] *= 0.5
            axes.append(w)
        out = axes[0]
        for w in axes[1:]:
            out = np.multiply.outer(out, w)
        return out

    def integrate(self, samples: np.ndarray):
        """Quadrature of a node-sampled function."""
        if samples.shape[: self.ndim] != self.shape:
            raise DimensionMismatch("samples do not match grid shape")
        w = self.quad_weights()
        extra = samples.ndim - self.ndim
        if extra:
            w = w.reshape(w.shape + (1,) * extra)
        return (w * samples).sum(axis=tuple(range(self.ndim)))

    # --- cell bookkeeping used by the cochain machinery -------------------

    def edge_shape(self, axis: int) -> tuple[int, ...]:
        """Shape of the directed-edge array along ``axis``."""
        s = list(self.counts)
        if not self.periodic:
            s[axis] -= 1
        return tuple(s)

    def plaquette_shape(self, pair: tuple[int, int]) -> tuple[int, ...]:
        s = list(self.counts)
        if not self.periodic:
            for ax in pair:
                s[ax] -= 1
        return tuple(s)

    def axis_pairs(self) -> tuple[tuple[int, int], ...]:
        n = self.ndim
        return tuple((j, k) for j in range(n) for k in range(j + 1, n))

    def forward_shift(self, arr: np.ndarray, axis: int) -> np.ndarray:
        """Values at node i + e_axis; drops the last slice on open axes."""
        if self.periodic:
            return np.roll(arr, -1, axis=axis)
        lead = (slice(None),) * axis
        return arr[lead + (slice(1, None),)]

    def drop_last(self, arr: np.ndarray, axis: int) -> np.ndarray:
        """Values at node i restricted to where i + e_axis exists."""
        if self.periodic:
            return arr
        lead = (slice(None),) * axis
        return arr[lead + (slice(0, -1),)]


@dataclass(frozen=True)
class WeightDensity:
    """Nonnegative measure w(r) d^n r sampled on a :class:`ParameterGrid`."""

    grid: ParameterGrid
    values: np.ndarray
    total: float = field(init=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DimensionMismatch("weight samples do not match grid shape")
        if not np.all(np.isfinite(vals)):
            raise InvalidInput("weight density has non-finite entries")
        if np.any(vals < 0):
            raise InvalidInput("weight density must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "total", float(self.grid.integrate(vals)))
        self._check_boundary_mass()

    def _check_boundary_mass(self):
        # truncated-box diagnostic: the model integral runs over all of R^n
        if self.grid.periodic or self.total == 0.0:
            return
        mask = np.zeros(self.grid.shape, dtype=bool)
        for ax in range(self.grid.ndim):
            lead = (slice(None),) * ax
            mask[lead + (0,)] = True
            mask[lead + (-1,)] = True
        edge_mass = float(self.grid.integrate(np.where(mask, self.values, 0.0)))
        if edge_mass > BOUNDARY_MASS_TOL * self.total:
            warnings.warn(
                f"weight mass {edge_mass:.3e} within one cell of an open "
                "boundary; the truncated-box integral may be inaccurate",
                stacklevel=3,
            )

    def integrate(self, field_samples: np.ndarray):
        """Quadrature of w(r) * field(r)."""
        return self.grid.integrate(self.values * field_samples
                                   if field_samples.ndim == self.grid.ndim
                                   else self.values[..., None] * field_samples)


def uniform_weight(grid: ParameterGrid, total: float = 1.0) -> WeightDensity:
    """Constant weight density normalized to the requested total mass."""
    box = 1.0
    for (a, b) in grid.extents:
        box *= (b - a)
    return WeightDensity(grid, np.full(grid.shape, total / box))
