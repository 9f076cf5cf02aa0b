"""Discrete and continuous quantum mixtures.

A discrete mixture is a weighted list of pure states assembling the
density operator ``rho = sum_k w_k psi_k psi_k^dagger``.  Its continuum
cousin is a wavefunction family psi(r) on a parameter grid carrying a
weight density w(r), with ``rho = int w(r) psi(r) psi(r)^dagger d^n r``
evaluated by the grid quadrature.  Families also provide the weighted
symplectic form ``2 hbar Im int w <dpsi1|dpsi2>`` that makes -i hbar rho a
momentum map for the node-wise unitary action, and the partial traces of
a product wavefunction chi(r) psi(r) (nuclear kernel and electronic
density operator).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidInput
from .grids import ParameterGrid, WeightDensity
from .quantum import (DensityOperator, HermitianOperator, WaveFunction,
                      unitary_propagator)

#: families with a partial-normalization defect above this emit warnings
#: on operations whose exactness claims rely on the PNC
PNC_TOL = 1e-8


@dataclass(frozen=True)
class DiscreteMixture:
    """Positive weights w_k and equal-dimension pure states psi_k."""

    weights: np.ndarray
    states: tuple[WaveFunction, ...]
    total_weight: float = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        states = tuple(self.states)
        if w.size == 0 or w.size != len(states):
            raise InvalidInput("need one weight per state")
        if np.any(w <= 0):
            raise InvalidInput("mixture weights must be positive")
        dims = {s.dim for s in states}
        hbars = {s.hbar for s in states}
        if len(dims) != 1 or len(hbars) != 1:
            raise DimensionMismatch("mixture states must share dimension and hbar")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "total_weight", float(w.sum()))

    @property
    def dim(self) -> int:
        return self.states[0].dim

    @property
    def is_admissible(self) -> bool:
        norms_ok = all(abs(s.norm_sq - 1.0) <= 1e-10 for s in self.states)
        return norms_ok and abs(self.total_weight - 1.0) <= 1e-10


@dataclass(frozen=True)
class WaveFamily:
    """One wavefunction of fixed dimension m per grid node."""

    grid: ParameterGrid
    values: np.ndarray  # shape grid.shape + (m,)
    hbar: float = 1.0
    pnc_defect: float = field(init=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim != self.grid.ndim + 1 or v.shape[:-1] != self.grid.shape:
            raise DimensionMismatch("family values must have shape grid.shape + (m,)")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("family has non-finite entries")
        if not self.hbar > 0:
            raise InvalidInput("hbar must be positive")
        v.setflags(write=False)
        norms = np.sum(np.abs(v) ** 2, axis=-1)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "hbar", float(self.hbar))
        object.__setattr__(self, "pnc_defect", float(np.abs(norms - 1.0).max()))

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    def node_norms_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.values) ** 2, axis=-1)


@dataclass(frozen=True)
class MultiFamily:
    """Several (weight, family) pairs sharing one grid and one dimension."""

    members: tuple[tuple[WeightDensity, WaveFamily], ...]

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise InvalidInput("multi-family needs at least one member")
        grid = members[0][1].grid
        dim = members[0][1].dim
        hbar = members[0][1].hbar
        for w, fam in members:
            if w.grid != grid or fam.grid != grid:
                raise DimensionMismatch("multi-family members must share the grid")
            if fam.dim != dim or fam.hbar != hbar:
                raise DimensionMismatch("multi-family members must share dimension")
        object.__setattr__(self, "members", members)


@dataclass(frozen=True)
class NuclearAmplitude:
    """Complex amplitude chi(r) sampled on the grid."""

    grid: ParameterGrid
    values: np.ndarray
    norm_sq: float = field(init=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise DimensionMismatch("amplitude samples do not match grid shape")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("amplitude has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "norm_sq",
                           float(self.grid.integrate(np.abs(v) ** 2).real))


# --------------------------------------------------------------------------
# density assembly
# --------------------------------------------------------------------------

def density_from_mixture(m: DiscreteMixture) -> DensityOperator:
    """rho = sum_k w_k psi_k psi_k^dagger."""
    rho = np.zeros((m.dim, m.dim), dtype=complex)
    for w, s in zip(m.weights, m.states):
        rho += w * np.outer(s.components, s.components.conj())
    return DensityOperator(rho)


def density_from_family(w: WeightDensity, fam: WaveFamily) -> DensityOperator:
    """Quadrature of w(r) psi(r) psi(r)^dagger over the grid."""
    if w.grid != fam.grid:
        raise DimensionMismatch("weight and family live on different grids")
    qw = (w.values * fam.grid.quad_weights()).reshape(-1)
    flat = fam.values.reshape(-1, fam.dim)
    rho = (flat.conj().T * qw) @ flat
    # contraction above builds rho^T = sum qw conj(psi) psi^T
    return DensityOperator(rho.T)


def density_from_multifamily(mf: MultiFamily) -> DensityOperator:
    """Sum of per-member family densities."""
    rho = None
    for w, fam in mf.members:
        part = density_from_family(w, fam).entries
        rho = part if rho is None else rho + part
    return DensityOperator(rho)


def family_symplectic_form(w: WeightDensity, dpsi1: WaveFamily,
                           dpsi2: WaveFamily) -> float:
    """Weighted symplectic form 2 hbar Im int w <dpsi1|dpsi2> d^n r."""
    if dpsi1.grid != dpsi2.grid or w.grid != dpsi1.grid:
        raise DimensionMismatch("operands live on different grids")
    if dpsi1.dim != dpsi2.dim or dpsi1.hbar != dpsi2.hbar:
        raise DimensionMismatch("families have different dimension or hbar")
    overlap = np.sum(dpsi1.values.conj() * dpsi2.values, axis=-1)
    return float(2.0 * dpsi1.hbar * w.integrate(overlap).imag)


def apply_unitary(fam: WaveFamily, U: np.ndarray) -> WaveFamily:
    """Node-wise left action psi(r) -> U psi(r)."""
    if U.shape != (fam.dim, fam.dim):
        raise DimensionMismatch("unitary does not match family dimension")
    return WaveFamily(fam.grid, fam.values @ U.T, fam.hbar)


def evolve_family(fam: WaveFamily, H: HermitianOperator, t: float) -> WaveFamily:
    """Advance every node with the same propagator exp(-i H t / hbar)."""
    if H.dim != fam.dim:
        raise DimensionMismatch("Hamiltonian does not match family dimension")
    return apply_unitary(fam, unitary_propagator(H, t, fam.hbar))


def bo_partial_traces(chi: NuclearAmplitude, fam: WaveFamily):
    """Nuclear kernel and electronic density of the product chi(r) psi(r).

    Returns ``(rho_n, rho_e)``.  The electronic operator is the family
    density with weight |chi|^2; the nuclear kernel
    ``rho_n(r, r') = chi(r) chi*(r') <psi(r')|psi(r)>`` is materialized only
    on 1-D grids (N^2 entries), otherwise ``rho_n`` is None.
    """
    if chi.grid != fam.grid:
        raise DimensionMismatch("amplitude and family live on different grids")
    if fam.pnc_defect > PNC_TOL:
        warnings.warn(
            f"partial normalization defect {fam.pnc_defect:.3e} exceeds "
            f"{PNC_TOL:.0e}; Tr(rho_e) = |chi|^2 mass only holds approximately",
            stacklevel=2,
        )
    w = WeightDensity(chi.grid, np.abs(chi.values) ** 2)
    rho_e = density_from_family(w, fam)
    rho_n = None
    if chi.grid.ndim == 1:
        overlaps = fam.values.conj() @ fam.values.T  # <psi(r_j)|psi(r_i)> at [j, i]
        rho_n = np.outer(chi.values, chi.values.conj()) * overlaps.T
    return rho_n, rho_e


# --------------------------------------------------------------------------
# grid-data file format: one row per node,
# index, r_1..r_n, w, Re psi_1, Im psi_1, ..., Re psi_m, Im psi_m
# --------------------------------------------------------------------------

def save_family_csv(path, w: WeightDensity, fam: WaveFamily) -> None:
    grid = fam.grid
    meta = {
        "extents": [list(e) for e in grid.extents],
        "counts": list(grid.counts),
        "boundary": grid.boundary,
        "dim": fam.dim,
        "hbar": fam.hbar,
    }
    meshes = grid.meshes()
    coords = np.stack([m.reshape(-1) for m in meshes], axis=1)
    wflat = w.values.reshape(-1)
    vflat = fam.values.reshape(-1, fam.dim)
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(meta) + "\n")
        writer = csv.writer(fh)
        header = (["index"] + [f"r{j + 1}" for j in range(grid.ndim)] + ["w"]
                  + sum(([f"re{k + 1}", f"im{k + 1}"] for k in range(fam.dim)), []))
        writer.writerow(header)
        for i in range(coords.shape[0]):
            row = [i] + [f"{c:.17g}" for c in coords[i]] + [f"{wflat[i]:.17g}"]
            for k in range(fam.dim):
                row += [f"{vflat[i, k].real:.17g}", f"{vflat[i, k].imag:.17g}"]
            writer.writerow(row)


def load_family_csv(path):
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise InvalidInput("family file is missing its metadata header")
        meta = json.loads(first[2:])
        reader = csv.reader(fh)
        next(reader)  # column header
        rows = [r for r in reader if r]
    grid = ParameterGrid(tuple(tuple(e) for e in meta["extents"]),
                         tuple(meta["counts"]), meta["boundary"])
    m = int(meta["dim"])
    n_nodes = int(np.prod(grid.shape))
    if len(rows) != n_nodes:
        raise InvalidInput("family file row count does not match the grid")
    w = np.empty(n_nodes)
    vals = np.empty((n_nodes, m), dtype=complex)
    base = 1 + grid.ndim
    for row in rows:
        i = int(row[0])
        w[i] = float(row[base])
        for k in range(m):
            vals[i, k] = complex(float(row[base + 1 + 2 * k]),
                                 float(row[base + 2 + 2 * k]))
    weight = WeightDensity(grid, w.reshape(grid.shape))
    fam = WaveFamily(grid, vals.reshape(grid.shape + (m,)), float(meta["hbar"]))
    return weight, fam
