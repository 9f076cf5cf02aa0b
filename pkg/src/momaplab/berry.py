"""Cochain calculus on parameter grids and the geometric-phase momentum map.

Real k-cochains (k = 0, 1, 2) store one value per node, directed edge or
oriented plaquette; the exterior derivative is the forward-difference
coboundary, so d(d(.)) telescopes to zero identically.  The connection
one-form of a wavefunction family uses the link phase

    A_edge = hbar * Im <psi(tail) | psi(head) - psi(tail)>,

a first-order cochain whose coboundary ("fd" backend) is the curvature
seen by the momentum-map pairing.  The "wilson" backend instead takes
hbar * arg of the overlap product around each plaquette; on closed grids
its total flux is 2 pi hbar times an integer, which makes it the
quantization oracle for the fd backend.

Incompressible reparameterization generators enter through a plaquette
stream function gamma: the node field xi = w^{-1} (d2 g, -d1 g) with
g = gamma / (h1 h2) satisfies div(w xi) = 0 exactly in the matched
staggered stencil, and pairing d(A) against gamma reproduces
-(1/2) Omega(xi(psi), psi) up to O(h^2).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidInput
from .grids import ParameterGrid, WeightDensity
from .mixtures import WaveFamily, family_symplectic_form

#: connection realness / gauge claims assume the PNC at this tolerance
CONNECTION_PNC_TOL = 1e-6


@dataclass(frozen=True)
class Cochain:
    """Real k-cochain on a :class:`ParameterGrid`.

    Storage blocks: degree 0 has a single node array, degree 1 one edge
    array per axis, degree 2 one plaquette array per ordered axis pair.
    Open grids simply store no cells touching the missing boundary links.
    """

    grid: ParameterGrid
    degree: int
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise InvalidInput("cochain degree must be 0, 1 or 2")
        expected = self._expected_shapes(self.grid, self.degree)
        blocks = tuple(np.array(b, dtype=float) for b in self.blocks)
        if len(blocks) != len(expected):
            raise DimensionMismatch(
                f"degree-{self.degree} cochain needs {len(expected)} blocks")
        for b, shape in zip(blocks, expected):
            if b.shape != shape:
                raise DimensionMismatch(
                    f"cochain block shape {b.shape} != expected {shape}")
            if not np.all(np.isfinite(b)):
                raise InvalidInput("cochain has non-finite entries")
            b.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @staticmethod
    def _expected_shapes(grid, degree):
        if degree == 0:
            return (grid.shape,)
        if degree == 1:
            return tuple(grid.edge_shape(j) for j in range(grid.ndim))
        return tuple(grid.plaquette_shape(p) for p in grid.axis_pairs())

    def max_abs(self) -> float:
        return max((float(np.abs(b).max()) if b.size else 0.0)
                   for b in self.blocks)

    def __add__(self, other: "Cochain") -> "Cochain":
        self._compat(other)
        return Cochain(self.grid, self.degree,
                       tuple(a + b for a, b in zip(self.blocks, other.blocks)))

    def __sub__(self, other: "Cochain") -> "Cochain":
        self._compat(other)
        return Cochain(self.grid, self.degree,
                       tuple(a - b for a, b in zip(self.blocks, other.blocks)))

    def __mul__(self, c: float) -> "Cochain":
        return Cochain(self.grid, self.degree,
                       tuple(float(c) * b for b in self.blocks))

    __rmul__ = __mul__

    def _compat(self, other):
        if self.grid != other.grid or self.degree != other.degree:
            raise DimensionMismatch("cochains live on different complexes")


@dataclass(frozen=True)
class VolVectorField:
    """Node-sampled vector field generating a w-volume-preserving flow."""

    grid: ParameterGrid
    components: tuple[np.ndarray, ...]
    weight: WeightDensity
    div_residual: float = field(init=False)

    def __post_init__(self):
        comps = tuple(np.array(c, dtype=float) for c in self.components)
        if len(comps) != self.grid.ndim:
            raise DimensionMismatch("one component per grid axis required")
        for c in comps:
            if c.shape != self.grid.shape:
                raise DimensionMismatch("component shape must match the grid")
            c.setflags(write=False)
        object.__setattr__(self, "components", comps)
        if self.grid.ndim == 2:
            res = weighted_divergence_residual(self.grid, comps,
                                               self.weight.values)
        else:
            res = float("nan")
        object.__setattr__(self, "div_residual", res)


# --------------------------------------------------------------------------
# exterior derivative
# --------------------------------------------------------------------------

def exterior_derivative(c: Cochain) -> Cochain:
    """Forward-difference coboundary; degree-2 input is out of storage."""
    grid = c.grid
    if c.degree == 2:
        raise InvalidInput("no 3-form storage on grids of dimension <= 3")
    if c.degree == 0:
        theta = c.blocks[0]
        blocks = tuple(grid.forward_shift(theta, j) - grid.drop_last(theta, j)
                       for j in range(grid.ndim))
        return Cochain(grid, 1, blocks)
    blocks = []
    for (j, k) in grid.axis_pairs():
        aj, ak = c.blocks[j], c.blocks[k]
        blocks.append(grid.drop_last(aj, k) + grid.forward_shift(ak, j)
                      - grid.forward_shift(aj, k) - grid.drop_last(ak, j))
    return Cochain(grid, 2, tuple(blocks))


def zero_form(grid: ParameterGrid, samples: np.ndarray) -> Cochain:
    return Cochain(grid, 0, (np.asarray(samples, dtype=float),))


# --------------------------------------------------------------------------
# connection and curvature
# --------------------------------------------------------------------------

def _link_overlaps(fam: WaveFamily, axis: int) -> np.ndarray:
    """<psi(i) | psi(i + e_axis)> on the directed edges of one axis."""
    grid = fam.grid
    tail = grid.drop_last(fam.values, axis)
    head = grid.forward_shift(fam.values, axis)
    return np.sum(tail.conj() * head, axis=-1)


def berry_connection(fam: WaveFamily) -> Cochain:
    """Connection cochain A_edge = hbar Im <tail | head - tail>."""
    if fam.pnc_defect > CONNECTION_PNC_TOL:
        warnings.warn(
            f"family PNC defect {fam.pnc_defect:.3e} exceeds "
            f"{CONNECTION_PNC_TOL:.0e}; the link phase is no longer the "
            "geometric connection", stacklevel=2)
    # Im<t|h - t> == Im<t|h> since <t|t> is real
    blocks = tuple(fam.hbar * _link_overlaps(fam, j).imag
                   for j in range(fam.grid.ndim))
    return Cochain(fam.grid, 1, blocks)


def berry_curvature(fam: WaveFamily, backend: str = "fd") -> Cochain:
    """Curvature 2-cochain.

    backend "fd": coboundary of the connection cochain (the momentum-map
    side object; total flux telescopes to zero on closed grids).
    backend "wilson": plaquette value hbar * arg of the oriented overlap
    product (gauge invariant; integer total flux / 2 pi hbar on closed
    grids).
    """
    if backend == "fd":
        return exterior_derivative(berry_connection(fam))
    if backend != "wilson":
        raise InvalidInput(f"unknown curvature backend {backend!r}")
    grid = fam.grid
    overlaps = [_link_overlaps(fam, j) for j in range(grid.ndim)]
    blocks = []
    for (j, k) in grid.axis_pairs():
        oj, ok = overlaps[j], overlaps[k]
        loop = (grid.drop_last(oj, k) * grid.forward_shift(ok, j)
                * grid.forward_shift(oj, k).conj()
                * grid.drop_last(ok, j).conj())
        if np.any(np.abs(loop) == 0.0):
            raise InvalidInput("Wilson loop undefined: zero-norm node state")
        blocks.append(fam.hbar * np.angle(loop))
    return Cochain(grid, 2, tuple(blocks))


def gauge_shift(fam: WaveFamily, theta: np.ndarray) -> WaveFamily:
    """Local phase action psi(r) -> exp(i theta(r) / hbar) psi(r)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != fam.grid.shape:
        raise DimensionMismatch("gauge samples must match the grid")
    phase = np.exp(1j * theta / fam.hbar)
    return WaveFamily(fam.grid, fam.values * phase[..., None], fam.hbar)


def holonomies(one_form: Cochain) -> np.ndarray:
    """Mean winding of a 1-cochain around each periodic axis.

    On a periodic grid closed non-exact cochains exist; the pairing
    machinery is restricted to exact stream data, and this diagnostic
    reports the harmonic remainder separately.
    """
    if one_form.degree != 1:
        raise InvalidInput("holonomy needs a 1-cochain")
    if not one_form.grid.periodic:
        raise InvalidInput("holonomy is defined on periodic grids")
    out = []
    for j, block in enumerate(one_form.blocks):
        line_sums = block.sum(axis=j)
        out.append(float(np.mean(line_sums)))
    return np.array(out)


# --------------------------------------------------------------------------
# stream functions and w-divergence-free fields (n = 2)
# --------------------------------------------------------------------------

def _dual_scalar(gamma: Cochain) -> np.ndarray:
    if gamma.degree != 2 or gamma.grid.ndim != 2:
        raise InvalidInput("stream machinery requires a 2-cochain on a 2-D grid")
    h1, h2 = gamma.grid.spacings
    return gamma.blocks[0] / (h1 * h2)


def stream_vector_field(gamma: Cochain, w: WeightDensity) -> VolVectorField:
    """xi = w^{-1} (d2 g, -d1 g) with g the plaquette potential of gamma."""
    grid = gamma.grid
    if w.grid != grid:
        raise DimensionMismatch("weight lives on a different grid")
    if np.any(w.values == 0.0):
        raise InvalidInput("stream field is singular where the weight vanishes")
    g = _dual_scalar(gamma)
    h1, h2 = grid.spacings
    if grid.periodic:
        gm1 = np.roll(g, 1, axis=0)   # g(i-1, j)
        gm2 = np.roll(g, 1, axis=1)   # g(i, j-1)
        gm12 = np.roll(gm1, 1, axis=1)
        xi1 = (g + gm1 - gm2 - gm12) / (2.0 * h2)
        xi2 = -(g + gm2 - gm1 - gm12) / (2.0 * h1)
    else:
        _warn_if_near_boundary(g, grid)
        xi1 = np.zeros(grid.shape)
        xi2 = np.zeros(grid.shape)
        # interior nodes have all four surrounding plaquettes
        xi1[1:-1, 1:-1] = (g[1:, 1:] + g[:-1, 1:]
                           - g[1:, :-1] - g[:-1, :-1]) / (2.0 * h2)
        xi2[1:-1, 1:-1] = -(g[1:, 1:] + g[1:, :-1]
                            - g[:-1, 1:] - g[:-1, :-1]) / (2.0 * h1)
    return VolVectorField(grid, (xi1 / w.values, xi2 / w.values), w)


def _warn_if_near_boundary(g, grid):
    edge = np.zeros(g.shape, dtype=bool)
    edge[:2, :] = edge[-2:, :] = True
    edge[:, :2] = edge[:, -2:] = True
    if g.size and np.abs(np.where(edge, g, 0.0)).max() > 1e-12 * max(np.abs(g).max(), 1e-300):
        warnings.warn("stream data within two cells of an open boundary; "
                      "the divergence identity degrades there", stacklevel=3)


def weighted_divergence_residual(grid: ParameterGrid, xi, w_values) -> float:
    """Relative residual of div(w xi) in the matched staggered stencil."""
    f1 = w_values * xi[0]
    f2 = w_values * xi[1]
    h1, h2 = grid.spacings
    if grid.periodic:
        f1p = np.roll(f1, -1, axis=0)
        f2p = np.roll(f2, -1, axis=1)
        t1 = (f1p + np.roll(f1p, -1, axis=1) - f1 - np.roll(f1, -1, axis=1)) / (2 * h1)
        t2 = (f2p + np.roll(f2p, -1, axis=0) - f2 - np.roll(f2, -1, axis=0)) / (2 * h2)
    else:
        t1 = (f1[1:, :-1] + f1[1:, 1:] - f1[:-1, :-1] - f1[:-1, 1:]) / (2 * h1)
        t2 = (f2[:-1, 1:] + f2[1:, 1:] - f2[:-1, :-1] - f2[1:, :-1]) / (2 * h2)
    div = t1 + t2
    scale = max(float(np.abs(f1).max()), float(np.abs(f2).max()), 1e-300)
    return float(np.abs(div).max()) * min(h1, h2) / scale


# --------------------------------------------------------------------------
# pairings, fluxes, kinematic identity
# --------------------------------------------------------------------------

def pair_two_forms(B: Cochain, gamma: Cochain) -> float:
    """L2 pairing of two 2-cochains, sum B_p gamma_p / cell volume."""
    if B.grid != gamma.grid or B.degree != 2 or gamma.degree != 2:
        raise DimensionMismatch("pairing needs two 2-cochains on one grid")
    vol = B.grid.cell_volume
    return float(sum((b * g).sum() for b, g in zip(B.blocks, gamma.blocks)) / vol)


def _centered_difference(grid: ParameterGrid, values: np.ndarray, axis: int):
    h = grid.spacings[axis]
    if grid.periodic:
        return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2 * h)
    out = np.empty_like(values)
    lead = (slice(None),) * axis
    out[lead + (slice(1, -1),)] = (values[lead + (slice(2, None),)]
                                   - values[lead + (slice(0, -2),)]) / (2 * h)
    out[lead + (0,)] = (-3 * values[lead + (0,)] + 4 * values[lead + (1,)]
                        - values[lead + (2,)]) / (2 * h)
    out[lead + (-1,)] = (3 * values[lead + (-1,)] - 4 * values[lead + (-2,)]
                         + values[lead + (-3,)]) / (2 * h)
    return out


def transport_family(fam: WaveFamily, xi: VolVectorField) -> WaveFamily:
    """Infinitesimal reparameterization action psi -> iota_xi d psi."""
    if xi.grid != fam.grid:
        raise DimensionMismatch("field and family live on different grids")
    out = np.zeros_like(fam.values)
    for j, comp in enumerate(xi.components):
        out += comp[..., None] * _centered_difference(fam.grid, fam.values, j)
    return WaveFamily(fam.grid, out, fam.hbar)


def right_leg_pairing_check(fam: WaveFamily, w: WeightDensity,
                            gamma: Cochain) -> tuple[float, float]:
    """Both sides of <dA, gamma> = -(1/2) Omega(xi_gamma(psi), psi).

    Returns (lhs, rhs); their gap shrinks at second order in the spacing
    for smooth periodic data.
    """
    if fam.grid.ndim != 2:
        raise InvalidInput("pairing check is implemented for 2-D grids")
    lhs = pair_two_forms(berry_curvature(fam, backend="fd"), gamma)
    xi = stream_vector_field(gamma, w)
    rhs = -0.5 * family_symplectic_form(w, transport_family(fam, xi), fam)
    return lhs, rhs


def total_flux(B: Cochain, region=None) -> float:
    """Sum of plaquette values over a region (all plaquettes by default)."""
    if B.degree != 2:
        raise InvalidInput("total flux needs a 2-cochain")
    if region is None or (isinstance(region, str) and region == "all"):
        return float(sum(b.sum() for b in B.blocks))
    masks = (region,) if isinstance(region, np.ndarray) else tuple(region)
    if len(masks) != len(B.blocks):
        raise DimensionMismatch("one region mask per plaquette block required")
    if not any(np.any(m) for m in masks):
        raise InvalidInput("empty flux region")
    out = 0.0
    for b, m in zip(B.blocks, masks):
        if m.shape != b.shape:
            raise DimensionMismatch("region mask shape does not match block")
        out += float(b[m].sum())
    return out


def faraday_residual(A_series, dt: float) -> float:
    """max norm of d(dA/dt) - d/dt(dA) with centered time differences.

    Zero to rounding since the coboundary is linear, but both sides are
    computed honestly.
    """
    if len(A_series) < 3:
        raise InvalidInput("kinematic identity needs at least 3 time samples")
    resid = 0.0
    for k in range(1, len(A_series) - 1):
        dAdt = (1.0 / (2 * dt)) * (A_series[k + 1] - A_series[k - 1])
        side1 = exterior_derivative(dAdt)
        side2 = (1.0 / (2 * dt)) * (exterior_derivative(A_series[k + 1])
                                    - exterior_derivative(A_series[k - 1]))
        resid = max(resid, (side1 - side2).max_abs())
    return resid


# --------------------------------------------------------------------------
# cochain dump format: cell type, multi-index, value
# --------------------------------------------------------------------------

_CELL_LABELS = {0: ["node"], 1: ["edge1", "edge2", "edge3"],
                2: ["plaq12", "plaq13", "plaq23"]}


def save_cochain_csv(path, c: Cochain) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell", "multi_index", "value"])
        for label, block in zip(_CELL_LABELS[c.degree], c.blocks):
            for idx in np.ndindex(block.shape):
                writer.writerow([label, " ".join(map(str, idx)),
                                 f"{block[idx]:.17g}"])
