"""Finite-dimensional Hilbert space core.

States live in C^n with the canonical symplectic structure
``omega(psi1, psi2) = 2 hbar Im <psi1|psi2>``; skew-Hermitian matrices play
the role of both infinitesimal generators and (via the trace pairing
``<mu, xi> = Re Tr(mu^dagger xi)``) of dual momenta.  The pure-state
momentum map for the left unitary action is ``psi -> -i hbar psi psi^dagger``
and mixed states evolve by conjugation with ``U(t) = exp(-i H t / hbar)``.

Propagators are built from a dense eigendecomposition, which is exact up
to rounding at desk scale; no time stepping happens on the quantum side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidInput

#: relative tolerance for the (skew-)Hermitian structure checks
HERMITICITY_RTOL = 1e-12

#: dense eigendecompositions are capped at this dimension
MAX_DENSE_DIM = 256

#: admissibility thresholds (flags, never silently enforced)
NORM_TOL = 1e-10
PSD_TOL = -1e-10


def _as_square(entries, name: str) -> np.ndarray:
    m = np.array(entries, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInput(f"{name} must be a square matrix")
    if m.shape[0] > MAX_DENSE_DIM:
        raise InvalidInput(
            f"dimension {m.shape[0]} exceeds the dense cap {MAX_DENSE_DIM}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput(f"{name} has non-finite entries")
    return m


def _max_abs(m: np.ndarray) -> float:
    return float(np.abs(m).max()) if m.size else 0.0


@dataclass(frozen=True)
class WaveFunction:
    """State vector in C^n.  Normalization is recorded, not enforced."""

    components: np.ndarray
    hbar: float = 1.0
    norm_sq: float = field(init=False)

    def __post_init__(self):
        v = np.array(self.components, dtype=complex).reshape(-1)
        if v.size == 0 or v.size > MAX_DENSE_DIM:
            raise InvalidInput(f"state dimension must be in [1, {MAX_DENSE_DIM}]")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("wavefunction has non-finite entries")
        if not self.hbar > 0:
            raise InvalidInput("hbar must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "components", v)
        object.__setattr__(self, "hbar", float(self.hbar))
        object.__setattr__(self, "norm_sq", float(np.vdot(v, v).real))

    @property
    def dim(self) -> int:
        return self.components.size

    @property
    def is_normalized(self) -> bool:
        return abs(self.norm_sq - 1.0) <= NORM_TOL


@dataclass(frozen=True)
class HermitianOperator:
    """Hermitian matrix, validated to ``HERMITICITY_RTOL``."""

    entries: np.ndarray

    def __post_init__(self):
        m = _as_square(self.entries, "HermitianOperator")
        defect = _max_abs(m - m.conj().T)
        if defect > HERMITICITY_RTOL * max(_max_abs(m), 1e-300):
            raise InvalidInput(f"matrix is not Hermitian (defect {defect:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SkewHermitianMoment:
    """Skew-Hermitian matrix with units of action (dual momentum / generator)."""

    entries: np.ndarray

    def __post_init__(self):
        m = _as_square(self.entries, "SkewHermitianMoment")
        defect = _max_abs(m + m.conj().T)
        if defect > HERMITICITY_RTOL * max(_max_abs(m), 1e-300):
            raise InvalidInput(f"matrix is not skew-Hermitian (defect {defect:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def density_part(self, hbar: float = 1.0) -> np.ndarray:
        """The Hermitian matrix rho with entries = -i hbar rho.

        Both presentations of the momentum map are exposed: ``entries``
        carries units of action, this accessor strips them.
        """
        return (1j / hbar) * self.entries


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian (ideally PSD, unit-trace) mixed-state operator."""

    entries: np.ndarray
    trace: float = field(init=False)
    min_eigenvalue: float = field(init=False)

    def __post_init__(self):
        m = _as_square(self.entries, "DensityOperator")
        defect = _max_abs(m - m.conj().T)
        if defect > HERMITICITY_RTOL * max(_max_abs(m), 1e-300):
            raise InvalidInput(f"density operator not Hermitian (defect {defect:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "trace", float(np.trace(m).real))
        object.__setattr__(self, "min_eigenvalue",
                           float(np.linalg.eigvalsh(m)[0]))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def is_admissible(self) -> bool:
        """Positive within tolerance and unit trace within tolerance."""
        return self.min_eigenvalue >= PSD_TOL and abs(self.trace - 1.0) <= NORM_TOL

    def purity_defect(self) -> float:
        """Frobenius norm of rho^2 - rho (zero exactly on pure states)."""
        m = self.entries
        return float(np.linalg.norm(m @ m - m))

    def spectrum(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------

def symplectic_form(psi1: WaveFunction, psi2: WaveFunction) -> float:
    """Canonical symplectic form 2 hbar Im <psi1|psi2>."""
    if psi1.dim != psi2.dim:
        raise DimensionMismatch("states have different dimensions")
    if psi1.hbar != psi2.hbar:
        raise DimensionMismatch("states carry different hbar")
    return float(2.0 * psi1.hbar * np.vdot(psi1.components, psi2.components).imag)


def dual_pairing(mu: SkewHermitianMoment, xi: SkewHermitianMoment) -> float:
    """Real trace pairing Re Tr(mu^dagger xi)."""
    if mu.dim != xi.dim:
        raise DimensionMismatch("pairing operands have different dimensions")
    return float(np.trace(mu.entries.conj().T @ xi.entries).real)


def momentum_map_pure(psi: WaveFunction) -> SkewHermitianMoment:
    """Momentum map of the left unitary action: -i hbar psi psi^dagger."""
    v = psi.components
    return SkewHermitianMoment(-1j * psi.hbar * np.outer(v, v.conj()))


def unitary_propagator(H: HermitianOperator, t: float, hbar: float = 1.0) -> np.ndarray:
    """exp(-i H t / hbar) via eigendecomposition."""
    if not hbar > 0:
        raise InvalidInput("hbar must be positive")
    evals, vecs = np.linalg.eigh(H.entries)
    phases = np.exp(-1j * evals * (t / hbar))
    return (vecs * phases) @ vecs.conj().T


def evolve_density(rho0: DensityOperator, H: HermitianOperator, t: float,
                   hbar: float = 1.0) -> DensityOperator:
    """Solve i hbar d(rho)/dt = [H, rho] as rho(t) = U rho0 U^dagger."""
    if rho0.dim != H.dim:
        raise DimensionMismatch("density and Hamiltonian dimensions differ")
    U = unitary_propagator(H, t, hbar)
    return DensityOperator(U @ rho0.entries @ U.conj().T)


def noether_series(rho_traj, xi: SkewHermitianMoment, hbar: float = 1.0) -> np.ndarray:
    """Pairing series s_t = <-i hbar rho(t), xi> along a density trajectory.

    Constant whenever the generator xi commutes with the Hamiltonian that
    produced the trajectory.
    """
    out = np.empty(len(rho_traj))
    for k, rho in enumerate(rho_traj):
        if rho.dim != xi.dim:
            raise DimensionMismatch("trajectory and generator dimensions differ")
        mu = SkewHermitianMoment(-1j * hbar * rho.entries)
        out[k] = dual_pairing(mu, xi)
    return out


# --------------------------------------------------------------------------
# seeded random elements (shared by tests, the verifier and the CLI)
# --------------------------------------------------------------------------

def random_state(n: int, rng: np.random.Generator, hbar: float = 1.0,
                 normalized: bool = True) -> WaveFunction:
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    if normalized:
        v = v / np.linalg.norm(v)
    return WaveFunction(v, hbar)


def random_hermitian(n: int, rng: np.random.Generator) -> HermitianOperator:
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return HermitianOperator(0.5 * (m + m.conj().T))


def random_skew_moment(n: int, rng: np.random.Generator) -> SkewHermitianMoment:
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return SkewHermitianMoment(0.5 * (m - m.conj().T))


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(m)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def pauli(name: str) -> HermitianOperator:
    mats = {
        "x": np.array([[0, 1], [1, 0]], dtype=complex),
        "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    if name not in mats:
        raise InvalidInput(f"unknown Pauli matrix {name!r}")
    return HermitianOperator(mats[name])
