"""Phase-space wavefunction mechanics on a 2-D (q, p) grid.

Conventions, fixed as one interlocking triple and validated by the
density-transport consistency check in the test suite:

    {a, b}  = da/dq db/dp - da/dp db/dq          (canonical bracket)
    L_H     = i hbar {H, .}                      (Liouvillian)
    L(H)    = p dH/dp - H                        (phase-rate multiplier)
    preq_H  = L_H - L(H)                         (prequantum operator)

Three evolution modes share one discretization (centered differences in
space, classic RK4 in time, CFL-gated):

    kvn:        i hbar dpsi/dt = L_H psi         (transport only)
    kvh:        i hbar dpsi/dt = preq_H psi      (transport + phase)
    liouville:  df/dt = {H, f}

Density reconstructions from a wavefunction: the bracket momentum map
``i hbar {psi, psi*}`` (polar form: {D, S}); the modulus map ``|psi|^2``;
and the full map ``|psi|^2 + div(|psi|^2 J A) + i hbar {psi, psi*}``
with ``A = -p dq`` and ``J = [[0, 1], [-1, 0]]``, which integrates to
``int |psi|^2`` because the extra terms are divergences.

The sign of L(H) is the one that closes the commutator algebra
``[preq_H, preq_K] = i hbar preq_{H,K}``, transports the reconstructed
density along the Liouville flow, and reproduces the cocycle phase of the
integrated flow action; the opposite (Legendre-mirrored) choice fails all
three, which is exactly what the falsification controls check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .classical import CanonicalMap, HamiltonianSpec, cocycle_integral
from .errors import (BoundaryLeakage, CflViolation, DimensionMismatch,
                     InvalidInput)

#: advection stability margin for RK4 + centered stencils
CFL_LIMIT = 0.5

#: boundary-band mass fraction that aborts a run
LEAKAGE_ABORT = 1e-4

#: admissible runs keep the band mass below this fraction
LEAKAGE_WARN = 1e-6


@dataclass(frozen=True)
class PhaseGrid2D:
    """Tensor grid on [q-, q+] x [p-, p+]; open or periodic in q."""

    q_extent: tuple[float, float]
    p_extent: tuple[float, float]
    nq: int
    np_: int
    boundary: str = "open"

    def __post_init__(self):
        if self.boundary not in ("open", "periodic_q"):
            raise InvalidInput("boundary must be 'open' or 'periodic_q'")
        if self.nq < 16 or self.np_ < 16:
            raise InvalidInput("phase grids need at least 16 nodes per axis")
        if self.q_extent[1] <= self.q_extent[0] or self.p_extent[1] <= self.p_extent[0]:
            raise InvalidInput("extents must be increasing")

    @property
    def q_periodic(self) -> bool:
        return self.boundary == "periodic_q"

    @property
    def hq(self) -> float:
        span = self.q_extent[1] - self.q_extent[0]
        return span / (self.nq if self.q_periodic else self.nq - 1)

    @property
    def hp(self) -> float:
        return (self.p_extent[1] - self.p_extent[0]) / (self.np_ - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nq, self.np_)

    def q_coords(self) -> np.ndarray:
        if self.q_periodic:
            return self.q_extent[0] + self.hq * np.arange(self.nq)
        return np.linspace(*self.q_extent, self.nq)

    def p_coords(self) -> np.ndarray:
        return np.linspace(*self.p_extent, self.np_)

    def meshes(self):
        return np.meshgrid(self.q_coords(), self.p_coords(), indexing="ij")

    def quad_weights(self) -> np.ndarray:
        wq = np.full(self.nq, self.hq)
        if not self.q_periodic:
            wq[0] *= 0.5
            wq[-1] *= 0.5
        wp = np.full(self.np_, self.hp)
        wp[0] *= 0.5
        wp[-1] *= 0.5
        return np.multiply.outer(wq, wp)

    def integrate(self, samples: np.ndarray):
        if samples.shape != self.shape:
            raise DimensionMismatch("samples do not match the phase grid")
        return (self.quad_weights() * samples).sum()

    def norm_l2(self, values: np.ndarray) -> float:
        return float(np.sqrt(self.integrate(np.abs(values) ** 2).real))

    def boundary_band_fraction(self, values: np.ndarray, cells: int = 2) -> float:
        """Mass fraction within ``cells`` nodes of an open boundary."""
        dens = np.abs(values) ** 2
        total = self.integrate(dens)
        if total == 0.0:
            return 0.0
        mask = np.zeros(self.shape, dtype=bool)
        if not self.q_periodic:
            mask[:cells, :] = mask[-cells:, :] = True
        mask[:, :cells] = mask[:, -cells:] = True
        return float(self.integrate(np.where(mask, dens, 0.0)) / total)

    def interior_mask(self, cells: int) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        if not self.q_periodic:
            mask[:cells, :] = mask[-cells:, :] = False
        mask[:, :cells] = mask[:, -cells:] = False
        return mask


@dataclass(frozen=True)
class ClassicalWaveFunction:
    grid: PhaseGrid2D
    values: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise DimensionMismatch("field shape does not match the grid")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("wavefunction has non-finite entries")
        if not self.hbar > 0:
            raise InvalidInput("hbar must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "hbar", float(self.hbar))

    def norm(self) -> float:
        return self.grid.norm_l2(self.values)

    def boundary_leakage(self) -> float:
        return self.grid.boundary_band_fraction(self.values)


@dataclass(frozen=True)
class PhaseDensity:
    grid: PhaseGrid2D
    values: np.ndarray
    total: float = field(init=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise DimensionMismatch("field shape does not match the grid")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("density has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "total", float(self.grid.integrate(v)))


@dataclass(frozen=True)
class SymplecticPotential:
    """A = -p dq sampled componentwise, with the canonical matrix J."""

    grid: PhaseGrid2D
    a_q: np.ndarray = field(init=False)
    a_p: np.ndarray = field(init=False)
    area_defect: float = field(init=False)

    def __post_init__(self):
        Q, P = self.grid.meshes()
        a_q = -P
        a_p = np.zeros_like(P)
        a_q.setflags(write=False)
        a_p.setflags(write=False)
        object.__setattr__(self, "a_q", a_q)
        object.__setattr__(self, "a_p", a_p)
        # exact edge integrals: q-edges carry -p_j hq, p-edges carry 0;
        # each plaquette coboundary must equal the cell area hq hp
        hq, hp = self.grid.hq, self.grid.hp
        p = self.grid.p_coords()
        d_a = hq * (p[1:] - p[:-1])
        object.__setattr__(self, "area_defect",
                           float(np.abs(d_a - hq * hp).max() / (hq * hp)))
        if self.area_defect > 1e-12:
            raise InvalidInput("discrete dA does not reproduce the area form")

    @property
    def jmat(self) -> np.ndarray:
        return np.array([[0.0, 1.0], [-1.0, 0.0]])


# --------------------------------------------------------------------------
# finite-difference stencils
# --------------------------------------------------------------------------

def _diff_axis(values: np.ndarray, axis: int, h: float, periodic: bool,
               order: int) -> np.ndarray:
    # Open axes close the centered stencil with zero ghost values (the
    # compact-support convention).  This keeps the derivative matrix
    # exactly antisymmetric, so the advection generator stays skew and the
    # evolution norm-stable; one-sided closures are weakly unstable under
    # inflow and were rejected.  Boundary rows are inconsistent for fields
    # that do not vanish there, which is why all pointwise stencil claims
    # are interior claims.
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    if order == 2:
        if periodic:
            out = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) / (2 * h)
        else:
            out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
            out[0] = v[1] / (2 * h)
            out[-1] = -v[-2] / (2 * h)
    elif order == 4:
        if periodic:
            out = (np.roll(v, 2, axis=0) - 8 * np.roll(v, 1, axis=0)
                   + 8 * np.roll(v, -1, axis=0) - np.roll(v, -2, axis=0)) / (12 * h)
        else:
            out[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
            out[0] = (8 * v[1] - v[2]) / (12 * h)
            out[1] = (-8 * v[0] + 8 * v[2] - v[3]) / (12 * h)
            out[-1] = (v[-3] - 8 * v[-2]) / (12 * h)
            out[-2] = (v[-4] - 8 * v[-3] + 8 * v[-1]) / (12 * h)
    else:
        raise InvalidInput("stencil order must be 2 or 4")
    return np.moveaxis(out, 0, axis)


def d_dq(grid: PhaseGrid2D, values: np.ndarray, order: int = 2) -> np.ndarray:
    return _diff_axis(values, 0, grid.hq, grid.q_periodic, order)


def d_dp(grid: PhaseGrid2D, values: np.ndarray, order: int = 2) -> np.ndarray:
    return _diff_axis(values, 1, grid.hp, False, order)


def poisson_bracket(grid: PhaseGrid2D, a: np.ndarray, b: np.ndarray,
                    order: int = 2) -> np.ndarray:
    """{a, b} = da/dq db/dp - da/dp db/dq with centered stencils."""
    if a.shape != grid.shape or b.shape != grid.shape:
        raise DimensionMismatch("bracket operands do not match the grid")
    return (d_dq(grid, a, order) * d_dp(grid, b, order)
            - d_dp(grid, a, order) * d_dq(grid, b, order))


# --------------------------------------------------------------------------
# operators
# --------------------------------------------------------------------------

def _h_meshes(H: HamiltonianSpec, grid: PhaseGrid2D):
    Q, P = grid.meshes()
    return H.value_mesh(Q, P), H.dq_mesh(Q, P), H.dp_mesh(Q, P)


def liouvillian_apply(H: HamiltonianSpec, psi: ClassicalWaveFunction,
                      order: int = 2) -> ClassicalWaveFunction:
    """L_H psi = i hbar {H, psi}, exact dH, centered dpsi."""
    grid = psi.grid
    _, hq_, hp_ = _h_meshes(H, grid)
    bracket = hq_ * d_dp(grid, psi.values, order) - hp_ * d_dq(grid, psi.values, order)
    return ClassicalWaveFunction(grid, 1j * psi.hbar * bracket, psi.hbar)


def lagrangian_field(H: HamiltonianSpec, grid: PhaseGrid2D) -> np.ndarray:
    """Phase-rate multiplier L = p dH/dp - H on the grid nodes."""
    Q, P = grid.meshes()
    return P * H.dp_mesh(Q, P) - H.value_mesh(Q, P)


def prequantum_apply(H: HamiltonianSpec, psi: ClassicalWaveFunction,
                     order: int = 2) -> ClassicalWaveFunction:
    """preq_H psi = L_H psi - L psi."""
    lpsi = liouvillian_apply(H, psi, order)
    lag = lagrangian_field(H, psi.grid)
    return ClassicalWaveFunction(psi.grid, lpsi.values - lag * psi.values,
                                 psi.hbar)


def commutator_defect(H: HamiltonianSpec, K: HamiltonianSpec,
                      psi: ClassicalWaveFunction, order: int = 2) -> float:
    """|| [preq_H, preq_K] psi - i hbar preq_{H,K} psi || / ||psi||.

    The bracket {H, K} is formed symbolically; norms are taken on the
    interior (away from one-sided boundary rows).
    """
    hk = H.bracket_with(K)
    a = prequantum_apply(H, prequantum_apply(K, psi, order), order)
    b = prequantum_apply(K, prequantum_apply(H, psi, order), order)
    c = prequantum_apply(hk, psi, order)
    defect = a.values - b.values - 1j * psi.hbar * c.values
    mask = psi.grid.interior_mask(2 * order)
    if not mask.any():
        raise InvalidInput("grid too small for an interior defect norm")
    num = np.sqrt(psi.grid.integrate(np.where(mask, np.abs(defect) ** 2, 0.0)))
    den = np.sqrt(psi.grid.integrate(np.where(mask, np.abs(psi.values) ** 2, 0.0)))
    return float(num / den)


# --------------------------------------------------------------------------
# time evolution
# --------------------------------------------------------------------------

@dataclass
class KoopmanRun:
    grid: PhaseGrid2D
    mode: str
    dt: float
    order: int
    n_steps: int
    cfl_ratio: float
    times: np.ndarray
    snapshots: list
    norm_series: np.ndarray
    leakage_series: np.ndarray
    final: object


def cfl_ratio(grid: PhaseGrid2D, H: HamiltonianSpec, dt: float) -> float:
    Q, P = grid.meshes()
    speed = max(float(np.abs(H.dp_mesh(Q, P)).max()),
                float(np.abs(H.dq_mesh(Q, P)).max()))
    return dt * speed / min(grid.hq, grid.hp)


def evolve(state, H: HamiltonianSpec, t: float, dt: float, mode: str,
           order: int = 2, store_every: int | None = None,
           leakage_abort: float = LEAKAGE_ABORT) -> KoopmanRun:
    """RK4 time stepping of the kvn / kvh / liouville generator.

    Aborts when mass reaches an open boundary beyond ``leakage_abort``;
    the run records L2-norm (or total-mass) and leakage series at the
    sampled times.
    """
    if mode not in ("kvn", "kvh", "liouville"):
        raise InvalidInput(f"unknown evolution mode {mode!r}")
    if mode == "liouville":
        if not isinstance(state, PhaseDensity):
            raise InvalidInput("liouville mode evolves a PhaseDensity")
        hbar = 1.0
    else:
        if not isinstance(state, ClassicalWaveFunction):
            raise InvalidInput(f"{mode} mode evolves a ClassicalWaveFunction")
        hbar = state.hbar
    grid = state.grid
    if dt <= 0 or t < 0:
        raise InvalidInput("need dt > 0 and t >= 0")
    ratio = cfl_ratio(grid, H, dt)
    if ratio > CFL_LIMIT + 1e-12:
        bound = dt * CFL_LIMIT / ratio
        raise CflViolation(
            f"dt = {dt:g} exceeds the advection stability bound {bound:g} "
            f"(ratio {ratio:.3f} > {CFL_LIMIT})")

    _, hq_, hp_ = _h_meshes(H, grid)
    lag = lagrangian_field(H, grid) if mode == "kvh" else None

    def rhs(u):
        out = hq_ * d_dp(grid, u, order) - hp_ * d_dq(grid, u, order)
        if lag is not None:
            out = out + (1j / hbar) * lag * u
        return out

    u = state.values.astype(complex if mode != "liouville" else float).copy()

    def measure(u):
        if mode == "liouville":
            size = float(grid.integrate(u))
        else:
            size = grid.norm_l2(u)
        return size, grid.boundary_band_fraction(u)

    n_full = int(np.floor(t / dt + 1e-12))
    rem = t - n_full * dt
    has_rem = rem > 1e-12 * max(t, 1.0)
    total_steps = n_full + int(has_rem)
    check_every = max(1, total_steps // 50) if total_steps else 1

    times, snaps, norms, leaks = [0.0], [u.copy()], [], []
    size0, leak0 = measure(u)
    norms.append(size0)
    leaks.append(leak0)

    def rk4_step(u, step_dt):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * step_dt * k1)
        k3 = rhs(u + 0.5 * step_dt * k2)
        k4 = rhs(u + step_dt * k3)
        return u + step_dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

    now = 0.0
    for k in range(1, total_steps + 1):
        step_dt = dt if k <= n_full else rem
        u = rk4_step(u, step_dt)
        now += step_dt
        sampled = (store_every and k % store_every == 0) or k == total_steps
        if sampled or k % check_every == 0:
            size, leak = measure(u)
            if not np.all(np.isfinite(u)):
                raise BoundaryLeakage("field diverged during the run")
            if leak > leakage_abort:
                raise BoundaryLeakage(
                    f"boundary band holds {leak:.3e} of the mass at "
                    f"t = {now:.4f} (abort threshold {leakage_abort:g})")
            if sampled:
                times.append(now)
                snaps.append(u.copy())
                norms.append(size)
                leaks.append(leak)

    final = (PhaseDensity(grid, u.real) if mode == "liouville"
             else ClassicalWaveFunction(grid, u, hbar))
    return KoopmanRun(grid, mode, dt, order, total_steps, ratio,
                      np.array(times), snaps, np.array(norms),
                      np.array(leaks), final)


# --------------------------------------------------------------------------
# density reconstructions
# --------------------------------------------------------------------------

def clebsch_density(psi: ClassicalWaveFunction, mode: str = "kvh",
                    order: int = 2) -> PhaseDensity:
    """Reconstruct a phase-space density from the wavefunction.

    mode "bracket": i hbar {psi, psi*} (equals {D, S} in polar form; not
    normalizable, integrates to ~0).  mode "modulus": |psi|^2.  mode
    "kvh": |psi|^2 + d/dp(|psi|^2 p) + i hbar {psi, psi*}, whose extra
    terms are divergences, so the total mass equals int |psi|^2.
    """
    grid = psi.grid
    dens = np.abs(psi.values) ** 2
    if mode == "modulus":
        return PhaseDensity(grid, dens)
    bracket = 1j * psi.hbar * poisson_bracket(grid, psi.values,
                                              psi.values.conj(), order)
    residue = float(np.abs(bracket.imag).max())
    scale = max(float(np.abs(bracket.real).max()), 1e-300)
    if residue > 1e-10 * scale:
        warnings.warn(f"imaginary residue {residue:.3e} discarded from the "
                      "bracket density", stacklevel=2)
    if mode == "bracket":
        return PhaseDensity(grid, bracket.real)
    if mode != "kvh":
        raise InvalidInput(f"unknown reconstruction mode {mode!r}")
    _, P = grid.meshes()
    div_term = d_dp(grid, dens * P, order)
    return PhaseDensity(grid, dens + div_term + bracket.real)


# --------------------------------------------------------------------------
# strict-contact group action
# --------------------------------------------------------------------------

def kvh_group_action(psi: ClassicalWaveFunction, g: CanonicalMap,
                     interp_order: int = 3) -> ClassicalWaveFunction:
    """psi -> exp(i [kappa + int_0^z (eta* A - A)] / hbar) psi(eta(z)).

    The pullback is cubic interpolation on the grid; the phase comes from
    the classical cocycle integral at every node.
    """
    from scipy.ndimage import map_coordinates

    grid = psi.grid
    if g.d != 1:
        raise DimensionMismatch("phase-space maps must have one dof here")
    if grid.q_periodic:
        raise InvalidInput("group-action interpolation supports open grids")
    Q, P = grid.meshes()
    nodes = np.stack([Q.reshape(-1), P.reshape(-1)], axis=1)
    targets = g.apply(nodes)
    iq = (targets[:, 0] - grid.q_extent[0]) / grid.hq
    ip = (targets[:, 1] - grid.p_extent[0]) / grid.hp
    outside = ((iq < 0) | (iq > grid.nq - 1) | (ip < 0) | (ip > grid.np_ - 1))
    coords = np.stack([np.clip(iq, 0, grid.nq - 1),
                       np.clip(ip, 0, grid.np_ - 1)])
    re = map_coordinates(psi.values.real, coords, order=interp_order,
                         mode="nearest")
    im = map_coordinates(psi.values.imag, coords, order=interp_order,
                         mode="nearest")
    pulled = re + 1j * im
    if outside.any():
        edge_amp = np.abs(pulled[outside]).max()
        if edge_amp > 1e-6 * max(np.abs(psi.values).max(), 1e-300):
            raise InvalidInput(
                "map carries wavefunction support outside the grid "
                f"(edge amplitude {edge_amp:.3e})")
        pulled[outside] = 0.0
    phase = np.exp(1j * (g.kappa + cocycle_integral(g, nodes)) / psi.hbar)
    return ClassicalWaveFunction(grid, (phase * pulled).reshape(grid.shape),
                                 psi.hbar)


def fit_global_phase(reference: np.ndarray, candidate: np.ndarray) -> complex:
    """Unit phase factor minimizing ||reference - phase * candidate||."""
    overlap = np.vdot(candidate, reference)
    if overlap == 0:
        return 1.0 + 0.0j
    return overlap / abs(overlap)


# --------------------------------------------------------------------------
# polar-form residuals
# --------------------------------------------------------------------------

def polar_residuals(psi_traj, H: HamiltonianSpec, dt: float,
                    order: int = 2) -> tuple[float, float]:
    """Max-norm residuals of dS/dt = {H, S} + L and dD/dt = {H, D}.

    The phase is unwrapped along time per node; the residual is evaluated
    where |psi| stays above 1e-3 of its maximum (and away from open
    boundaries), at every interior time sample.
    """
    if len(psi_traj) < 3:
        raise InvalidInput("polar residuals need at least 3 time samples")
    grid = psi_traj[0].grid
    hbar = psi_traj[0].hbar
    stack = np.stack([f.values for f in psi_traj])
    S = hbar * np.unwrap(np.angle(stack), axis=0)
    D = np.abs(stack) ** 2
    lag = lagrangian_field(H, grid)
    interior = grid.interior_mask(2)
    res_s = res_d = 0.0
    for k in range(1, len(psi_traj) - 1):
        amp = np.abs(stack[k])
        mask = interior & (amp > 1e-3 * amp.max())
        if not mask.any():
            raise InvalidInput("polar mask is empty: field amplitude too small")
        dS = (S[k + 1] - S[k - 1]) / (2 * dt)
        dD = (D[k + 1] - D[k - 1]) / (2 * dt)
        _, hq_, hp_ = _h_meshes(H, grid)
        rhs_s = (hq_ * d_dp(grid, S[k], order)
                 - hp_ * d_dq(grid, S[k], order)) + lag
        rhs_d = (hq_ * d_dp(grid, D[k], order)
                 - hp_ * d_dq(grid, D[k], order))
        res_s = max(res_s, float(np.abs(np.where(mask, dS - rhs_s, 0.0)).max()))
        res_d = max(res_d, float(np.abs(np.where(mask, dD - rhs_d, 0.0)).max()))
    return res_s, res_d


# --------------------------------------------------------------------------
# initial data and snapshots
# --------------------------------------------------------------------------

def gaussian_packet(grid: PhaseGrid2D, q0: float = 0.0, p0: float = 0.0,
                    sigma_q: float = 1.0, sigma_p: float = 1.0,
                    kq: float = 0.0, kp: float = 0.0, hbar: float = 1.0,
                    normalized: bool = True) -> ClassicalWaveFunction:
    """Gaussian amplitude with an optional linear phase ramp."""
    Q, P = grid.meshes()
    amp = np.exp(-((Q - q0) ** 2) / (4 * sigma_q ** 2)
                 - ((P - p0) ** 2) / (4 * sigma_p ** 2))
    phase = np.exp(1j * (kq * Q + kp * P) / hbar)
    vals = amp * phase
    if normalized:
        vals = vals / grid.norm_l2(vals)
    return ClassicalWaveFunction(grid, vals, hbar)


def save_field_csv(path, psi: ClassicalWaveFunction | None,
                   f: PhaseDensity | None = None) -> None:
    """Grid dump: node index, q, p, Re psi, Im psi, f."""
    grid = psi.grid if psi is not None else f.grid
    Q, P = grid.meshes()
    qf, pf = Q.reshape(-1), P.reshape(-1)
    psf = (psi.values.reshape(-1) if psi is not None
           else np.zeros(qf.size, dtype=complex))
    ff = f.values.reshape(-1) if f is not None else np.zeros(qf.size)
    with open(path, "w", newline="") as fh:
        fh.write("index,q,p,re_psi,im_psi,f\n")
        for i in range(qf.size):
            fh.write(f"{i},{qf[i]:.17g},{pf[i]:.17g},{psf[i].real:.17g},"
                     f"{psf[i].imag:.17g},{ff[i]:.17g}\n")
