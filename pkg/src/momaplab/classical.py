"""Classical phase space: Hamiltonians, flows, ensembles, cocycles.

Phase points, weighted point ensembles and grid-parameterized point
families are advanced by symplectic (or RK4) one-particle flows; the
weighted equations of motion for an ensemble reduce to the same
one-particle flow per point, with weights riding along unchanged.
Liouville statements are checked weakly against test functions, never by
gridding delta measures.

Canonical transformations come from an affine catalog (translations,
phase-space rotations, shears, general linear symplectic maps and their
compositions).  Each map carries a circle phase; composition accumulates
the group cocycle ``int_0^{eta2(0)} (eta1^* A - A)`` with ``A = -p dq``,
evaluated by adaptive Gauss quadrature along straight paths with a
two-path independence assertion at every call.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .errors import (DimensionMismatch, InvalidInput, LabError,
                     QuadratureError)
from .grids import ParameterGrid, WeightDensity

TWO_PI = 2.0 * np.pi

#: symbolic gradients are cross-checked against finite differences at
#: construction to this relative tolerance
GRADIENT_CHECK_RTOL = 1e-6

#: catalog maps must satisfy ||M^T J M - J|| below this bound
SYMPLECTIC_TOL = 1e-10

#: two-path agreement required from the cocycle line integrals
PATH_INDEPENDENCE_TOL = 1e-8


# --------------------------------------------------------------------------
# phase-space functions with exact gradients
# --------------------------------------------------------------------------

class HamiltonianSpec:
    """Closed-form scalar on phase space with exact gradient evaluators.

    Wraps a sympy expression in ``q1..qd, p1..pd``; doubles as the
    test-function container for weak-form checks (any smooth observable
    with exact gradients fits).  Gradients are validated against central
    finite differences at construction.
    """

    def __init__(self, expr, d: int = 1, name: str = ""):
        self.d = int(d)
        if not 1 <= self.d <= 3:
            raise InvalidInput("supported degrees of freedom: 1..3")
        self.q_syms = sp.symbols(f"q1:{self.d + 1}", real=True)
        self.p_syms = sp.symbols(f"p1:{self.d + 1}", real=True)
        self.expr = sp.sympify(expr)
        free = self.expr.free_symbols - set(self.q_syms) - set(self.p_syms)
        if free:
            raise InvalidInput(f"unknown symbols in Hamiltonian: {free}")
        self.name = name or str(self.expr)
        args = (*self.q_syms, *self.p_syms)
        self._val = sp.lambdify(args, self.expr, modules="numpy")
        self._dq = [sp.lambdify(args, sp.diff(self.expr, s), modules="numpy")
                    for s in self.q_syms]
        self._dp = [sp.lambdify(args, sp.diff(self.expr, s), modules="numpy")
                    for s in self.p_syms]
        # scalar fast path for long d=1 runs
        if self.d == 1:
            self._val_s = sp.lambdify(args, self.expr, modules="math")
            self._dq_s = sp.lambdify(args, sp.diff(self.expr, self.q_syms[0]),
                                     modules="math")
            self._dp_s = sp.lambdify(args, sp.diff(self.expr, self.p_syms[0]),
                                     modules="math")
        self._check_gradients()

    # -- catalog ------------------------------------------------------------

    @classmethod
    def harmonic(cls, d: int = 1, omega: float = 1.0) -> "HamiltonianSpec":
        qs = sp.symbols(f"q1:{d + 1}", real=True)
        ps = sp.symbols(f"p1:{d + 1}", real=True)
        expr = sum(sp.Rational(1, 2) * omega * (q**2 + p**2)
                   for q, p in zip(qs, ps))
        return cls(expr, d, name="harmonic")

    @classmethod
    def free(cls, d: int = 1, mass: float = 1.0) -> "HamiltonianSpec":
        ps = sp.symbols(f"p1:{d + 1}", real=True)
        return cls(sum(p**2 for p in ps) / (2 * mass), d, name="free")

    @classmethod
    def pendulum(cls) -> "HamiltonianSpec":
        q, p = sp.symbols("q1 p1", real=True)
        return cls(p**2 / 2 - sp.cos(q), 1, name="pendulum")

    @classmethod
    def quartic(cls) -> "HamiltonianSpec":
        q, p = sp.symbols("q1 p1", real=True)
        return cls(p**2 / 2 + q**4 / 4, 1, name="quartic")

    @classmethod
    def linear(cls, alpha: float = 1.0, beta: float = 0.0) -> "HamiltonianSpec":
        q, p = sp.symbols("q1 p1", real=True)
        return cls(alpha * q + beta * p, 1, name="linear")

    @classmethod
    def polynomial(cls, coeffs: dict) -> "HamiltonianSpec":
        """d = 1 polynomial from monomial coefficients {(i, j): c} for q^i p^j."""
        q, p = sp.symbols("q1 p1", real=True)
        expr = sum(c * q**i * p**j for (i, j), c in coeffs.items())
        return cls(expr, 1, name="polynomial")

    # -- evaluation ----------------------------------------------------------

    def _splat(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        if q.shape != p.shape or q.shape[-1:] != (self.d,):
            raise DimensionMismatch("phase arguments must have shape (..., d)")
        return ([q[..., a] for a in range(self.d)]
                + [p[..., a] for a in range(self.d)], q.shape[:-1])

    @staticmethod
    def _fill(res, shape):
        res = np.asarray(res, dtype=float)
        return np.broadcast_to(res, shape).copy() if res.shape != shape else res

    def value(self, q, p) -> np.ndarray:
        args, shape = self._splat(q, p)
        return self._fill(self._val(*args), shape)

    def dq(self, q, p) -> np.ndarray:
        args, shape = self._splat(q, p)
        return np.stack([self._fill(f(*args), shape) for f in self._dq], axis=-1)

    def dp(self, q, p) -> np.ndarray:
        args, shape = self._splat(q, p)
        return np.stack([self._fill(f(*args), shape) for f in self._dp], axis=-1)

    # d = 1 mesh evaluation (phase-space grids pass 2-D coordinate arrays)

    def _mesh(self, fns, Q, P):
        if self.d != 1:
            raise InvalidInput("mesh evaluation requires one degree of freedom")
        res = np.asarray(fns(Q, P), dtype=float)
        return np.broadcast_to(res, np.shape(Q)).copy() if res.shape != np.shape(Q) else res

    def value_mesh(self, Q, P):
        return self._mesh(self._val, Q, P)

    def dq_mesh(self, Q, P):
        return self._mesh(self._dq[0], Q, P)

    def dp_mesh(self, Q, P):
        return self._mesh(self._dp[0], Q, P)

    # -- structure -----------------------------------------------------------

    @property
    def is_separable(self) -> bool:
        return all(sp.simplify(sp.diff(self.expr, qs, ps)) == 0
                   for qs in self.q_syms for ps in self.p_syms)

    def bracket_with(self, other: "HamiltonianSpec") -> "HamiltonianSpec":
        """Canonical Poisson bracket {self, other} as a new closed form."""
        if other.d != self.d:
            raise DimensionMismatch("bracket operands differ in dimension")
        expr = sum(sp.diff(self.expr, qs) * sp.diff(other.expr, ps)
                   - sp.diff(self.expr, ps) * sp.diff(other.expr, qs)
                   for qs, ps in zip(self.q_syms, self.p_syms))
        return HamiltonianSpec(sp.expand(expr), self.d,
                               name=f"{{{self.name},{other.name}}}")

    def _check_gradients(self):
        rng = np.random.default_rng(1234)
        pts_q = rng.uniform(-1.5, 1.5, (8, self.d))
        pts_p = rng.uniform(-1.5, 1.5, (8, self.d))
        eps = 1e-6
        scale = max(1.0, float(np.abs(self.value(pts_q, pts_p)).max()))
        for a in range(self.d):
            e = np.zeros(self.d)
            e[a] = eps
            fd_q = (self.value(pts_q + e, pts_p) - self.value(pts_q - e, pts_p)) / (2 * eps)
            fd_p = (self.value(pts_q, pts_p + e) - self.value(pts_q, pts_p - e)) / (2 * eps)
            if (np.abs(fd_q - self.dq(pts_q, pts_p)[..., a]).max()
                    > GRADIENT_CHECK_RTOL * scale
                    or np.abs(fd_p - self.dp(pts_q, pts_p)[..., a]).max()
                    > GRADIENT_CHECK_RTOL * scale):
                raise InvalidInput("gradient evaluators disagree with finite "
                                   "differences at construction")

    def __repr__(self):
        return f"HamiltonianSpec({self.name!r}, d={self.d})"


# --------------------------------------------------------------------------
# states
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.array(self.q, dtype=float))
        p = np.atleast_1d(np.array(self.p, dtype=float))
        if q.shape != p.shape or q.ndim != 1:
            raise DimensionMismatch("q and p must be equal-length vectors")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise InvalidInput("phase point has non-finite entries")
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def d(self) -> int:
        return self.q.size


@dataclass(frozen=True)
class WeightedEnsemble:
    """Klimontovich sample: positive weights carried by phase points."""

    weights: np.ndarray
    qs: np.ndarray
    ps: np.ndarray
    total_weight: float = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        qs = np.array(self.qs, dtype=float)
        ps = np.array(self.ps, dtype=float)
        if qs.ndim == 1:
            qs = qs[:, None]
        if ps.ndim == 1:
            ps = ps[:, None]
        if qs.shape != ps.shape or qs.shape[0] != w.size:
            raise DimensionMismatch("weights, qs and ps sizes disagree")
        if np.any(w <= 0):
            raise InvalidInput("ensemble weights must be positive")
        for arr in (w, qs, ps):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "qs", qs)
        object.__setattr__(self, "ps", ps)
        object.__setattr__(self, "total_weight", float(w.sum()))

    @property
    def n_points(self) -> int:
        return self.weights.size

    @property
    def d(self) -> int:
        return self.qs.shape[1]

    @property
    def is_admissible(self) -> bool:
        return abs(self.total_weight - 1.0) <= 1e-10


@dataclass(frozen=True)
class ParamPointFamily:
    """Grid-parameterized phase points (qbar(r), pbar(r)) with weight w(r)."""

    grid: ParameterGrid
    weight: WeightDensity
    qbar: np.ndarray
    pbar: np.ndarray

    def __post_init__(self):
        qb = np.array(self.qbar, dtype=float)
        pb = np.array(self.pbar, dtype=float)
        if qb.ndim == self.grid.ndim:
            qb = qb[..., None]
        if pb.ndim == self.grid.ndim:
            pb = pb[..., None]
        if (qb.shape != pb.shape or qb.shape[:-1] != self.grid.shape
                or self.weight.grid != self.grid):
            raise DimensionMismatch("family arrays must share the grid")
        qb.setflags(write=False)
        pb.setflags(write=False)
        object.__setattr__(self, "qbar", qb)
        object.__setattr__(self, "pbar", pb)

    @property
    def d(self) -> int:
        return self.qbar.shape[-1]


# --------------------------------------------------------------------------
# integrators
# --------------------------------------------------------------------------

def _step_verlet(q, p, dt, H):
    p_half = p - 0.5 * dt * H.dq(q, p)
    q_new = q + dt * H.dp(q, p_half)
    p_new = p_half - 0.5 * dt * H.dq(q_new, p_half)
    return q_new, p_new


def _step_rk4(q, p, dt, H):
    def rhs(qq, pp):
        return H.dp(qq, pp), -H.dq(qq, pp)

    k1q, k1p = rhs(q, p)
    k2q, k2p = rhs(q + 0.5 * dt * k1q, p + 0.5 * dt * k1p)
    k3q, k3p = rhs(q + 0.5 * dt * k2q, p + 0.5 * dt * k2p)
    k4q, k4p = rhs(q + dt * k3q, p + dt * k3p)
    return (q + dt * (k1q + 2 * k2q + 2 * k3q + k4q) / 6,
            p + dt * (k1p + 2 * k2p + 2 * k3p + k4p) / 6)


def _step_midpoint(q, p, dt, H, tol=1e-13, max_iter=100):
    qn, pn = q.copy(), p.copy()
    scale = max(float(np.abs(q).max()), float(np.abs(p).max()), 1.0)
    for _ in range(max_iter):
        qm, pm = 0.5 * (q + qn), 0.5 * (p + pn)
        q_next = q + dt * H.dp(qm, pm)
        p_next = p - dt * H.dq(qm, pm)
        delta = max(float(np.abs(q_next - qn).max()),
                    float(np.abs(p_next - pn).max()))
        qn, pn = q_next, p_next
        if delta <= tol * scale:
            return qn, pn
    raise LabError("implicit midpoint iteration failed to converge")


_STEPPERS = {"verlet": _step_verlet, "midpoint": _step_midpoint, "rk4": _step_rk4}


def _verlet_scalar(q, p, n_steps, dt, H):
    # plain-float loop: keeps million-step drift studies affordable
    dq_s, dp_s = H._dq_s, H._dp_s
    q, p = float(q), float(p)
    half = 0.5 * dt
    energies = np.empty(n_steps + 1)
    val = H._val_s
    energies[0] = val(q, p)
    for k in range(n_steps):
        p -= half * dq_s(q, p)
        q += dt * dp_s(q, p)
        p -= half * dq_s(q, p)
        energies[k + 1] = val(q, p)
    return q, p, energies


def _integrate(q, p, H, t, dt, integrator):
    if dt <= 0:
        raise InvalidInput("dt must be positive")
    if integrator not in _STEPPERS:
        raise InvalidInput(f"unknown integrator {integrator!r}")
    if integrator == "verlet" and not H.is_separable:
        raise InvalidInput("verlet requires a separable Hamiltonian")
    step = _STEPPERS[integrator]
    n_full = int(np.floor(t / dt + 1e-12))
    for _ in range(n_full):
        q, p = step(q, p, dt, H)
    rem = t - n_full * dt
    if rem > 1e-12 * max(abs(t), 1.0):
        q, p = step(q, p, rem, H)
    return q, p


def hamilton_flow(state, H: HamiltonianSpec, t: float, dt: float,
                  integrator: str = "verlet"):
    """Advance a point, ensemble or point family under Hamilton's equations.

    Weights are untouched: the collective Hamiltonian sum w_k H(z_k)
    produces exactly the one-particle flow per sample point.
    """
    if isinstance(state, PhasePoint):
        if state.d != H.d:
            raise DimensionMismatch("state and Hamiltonian dimensions differ")
        q, p = _integrate(state.q[None, :].copy(), state.p[None, :].copy(),
                          H, t, dt, integrator)
        return PhasePoint(q[0], p[0])
    if isinstance(state, WeightedEnsemble):
        if state.d != H.d:
            raise DimensionMismatch("ensemble and Hamiltonian dimensions differ")
        q, p = _integrate(state.qs.copy(), state.ps.copy(), H, t, dt, integrator)
        return WeightedEnsemble(state.weights, q, p)
    if isinstance(state, ParamPointFamily):
        if state.d != H.d:
            raise DimensionMismatch("family and Hamiltonian dimensions differ")
        flat_q = state.qbar.reshape(-1, state.d).copy()
        flat_p = state.pbar.reshape(-1, state.d).copy()
        q, p = _integrate(flat_q, flat_p, H, t, dt, integrator)
        return ParamPointFamily(state.grid, state.weight,
                                q.reshape(state.qbar.shape),
                                p.reshape(state.pbar.shape))
    raise InvalidInput("unsupported state type for hamilton_flow")


def verlet_energy_series(z0: PhasePoint, H: HamiltonianSpec, n_steps: int,
                         dt: float) -> np.ndarray:
    """Energy after each of n_steps verlet steps (d = 1 fast path)."""
    if H.d != 1 or z0.d != 1:
        raise InvalidInput("energy series fast path is d = 1 only")
    if not H.is_separable:
        raise InvalidInput("verlet requires a separable Hamiltonian")
    _, _, energies = _verlet_scalar(z0.q[0], z0.p[0], n_steps, dt, H)
    return energies


def flow_samples(state, H, n_steps: int, dt: float, integrator: str = "verlet",
                 sample_every: int = 1):
    """States after 0, sample_every, 2*sample_every, ... steps."""
    out = [state]
    current = state
    for k in range(1, n_steps + 1):
        current = hamilton_flow(current, H, dt, dt, integrator)
        if k % sample_every == 0:
            out.append(current)
    return out


# --------------------------------------------------------------------------
# weak-form Liouville machinery
# --------------------------------------------------------------------------

def ensemble_pairing(e: WeightedEnsemble, phi) -> float:
    """<f, phi> = sum_k w_k phi(z_k)."""
    if isinstance(phi, HamiltonianSpec):
        vals = phi.value(e.qs, e.ps)
    else:
        vals = np.asarray(phi(e.qs, e.ps), dtype=float)
    return float(np.sum(e.weights * vals))


def bracket_pairing(e: WeightedEnsemble, phi: HamiltonianSpec,
                    H: HamiltonianSpec) -> float:
    """<f, {phi, H}> with exact gradients."""
    br = (np.sum(phi.dq(e.qs, e.ps) * H.dp(e.qs, e.ps), axis=-1)
          - np.sum(phi.dp(e.qs, e.ps) * H.dq(e.qs, e.ps), axis=-1))
    return float(np.sum(e.weights * br))


def weak_liouville_residual(e0: WeightedEnsemble, H: HamiltonianSpec,
                            phi: HamiltonianSpec, t: float, dt: float,
                            integrator: str = "verlet") -> float:
    """|d/dt <f, phi> - <f, {phi, H}>| at time t, centered differences.

    The derivative is estimated from the integrator's own samples at
    t - dt, t, t + dt, so the residual converges at the integrator order.
    """
    n = int(round(t / dt))
    if n < 1:
        raise InvalidInput("need t >= dt for the centered difference")
    e_prev = hamilton_flow(e0, H, (n - 1) * dt, dt, integrator)
    e_mid = hamilton_flow(e_prev, H, dt, dt, integrator)
    e_next = hamilton_flow(e_mid, H, dt, dt, integrator)
    dpair = (ensemble_pairing(e_next, phi) - ensemble_pairing(e_prev, phi)) / (2 * dt)
    return abs(dpair - bracket_pairing(e_mid, phi, H))


def pushforward_ensemble(e: WeightedEnsemble, eta: "CanonicalMap") -> WeightedEnsemble:
    """Relocate sample points; unit Jacobian means weights are untouched."""
    z = eta.apply(np.concatenate([e.qs, e.ps], axis=1))
    d = e.d
    return WeightedEnsemble(e.weights, z[:, :d], z[:, d:])


# --------------------------------------------------------------------------
# classical right leg: dqbar ^ dpbar per plaquette
# --------------------------------------------------------------------------

def param_right_leg(fam: ParamPointFamily):
    """Plaquette 2-cochain sum_a d qbar^a wedge d pbar_a via corner means."""
    from .berry import Cochain  # shared cochain machinery

    grid = fam.grid
    if grid.ndim != 2:
        raise InvalidInput("the classical right leg needs a 2-D parameter grid")

    def corner_deltas(arr):
        a00 = grid.drop_last(grid.drop_last(arr, 0), 1)
        a10 = grid.drop_last(grid.forward_shift(arr, 0), 1)
        a01 = grid.forward_shift(grid.drop_last(arr, 0), 1)
        a11 = grid.forward_shift(grid.forward_shift(arr, 0), 1)
        d1 = 0.5 * (a10 + a11 - a00 - a01)
        d2 = 0.5 * (a01 + a11 - a00 - a10)
        return d1, d2

    d1q, d2q = corner_deltas(fam.qbar)
    d1p, d2p = corner_deltas(fam.pbar)
    block = np.sum(d1q * d2p - d2q * d1p, axis=-1)
    return Cochain(grid, 2, (block,))


# --------------------------------------------------------------------------
# canonical maps, cocycles, group law
# --------------------------------------------------------------------------

def _canonical_J(d: int) -> np.ndarray:
    J = np.zeros((2 * d, 2 * d))
    J[:d, d:] = np.eye(d)
    J[d:, :d] = -np.eye(d)
    return J


@dataclass(frozen=True)
class CanonicalMap:
    """Affine symplectic map z -> M z + c with a circle phase kappa."""

    matrix: np.ndarray
    shift: np.ndarray
    kappa: float = 0.0
    label: str = "linear"

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        c = np.array(self.shift, dtype=float).reshape(-1)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
            raise InvalidInput("map matrix must be square of even size")
        if c.size != M.shape[0]:
            raise DimensionMismatch("shift size does not match the matrix")
        d = M.shape[0] // 2
        J = _canonical_J(d)
        defect = np.abs(M.T @ J @ M - J).max()
        if defect > SYMPLECTIC_TOL:
            raise InvalidInput(f"map is not symplectic (defect {defect:.3e})")
        M.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "matrix", M)
        object.__setattr__(self, "shift", c)
        object.__setattr__(self, "kappa", float(self.kappa) % TWO_PI)

    @property
    def d(self) -> int:
        return self.matrix.shape[0] // 2

    def apply(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return z @ self.matrix.T + self.shift

    def inverse(self) -> "CanonicalMap":
        Minv = np.linalg.inv(self.matrix)
        return CanonicalMap(Minv, -Minv @ self.shift, 0.0,
                            label=f"inv({self.label})")

    # -- catalog -------------------------------------------------------------

    @staticmethod
    def identity(d: int = 1, kappa: float = 0.0) -> "CanonicalMap":
        return CanonicalMap(np.eye(2 * d), np.zeros(2 * d), kappa, "identity")

    @staticmethod
    def translation(a, b, kappa: float = 0.0) -> "CanonicalMap":
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if a.shape != b.shape:
            raise DimensionMismatch("translation components disagree")
        d = a.size
        return CanonicalMap(np.eye(2 * d), np.concatenate([a, b]), kappa,
                            "translation")

    @staticmethod
    def rotation(theta: float, d: int = 1, kappa: float = 0.0) -> "CanonicalMap":
        ct, st = np.cos(theta), np.sin(theta)
        M = np.block([[ct * np.eye(d), st * np.eye(d)],
                      [-st * np.eye(d), ct * np.eye(d)]])
        return CanonicalMap(M, np.zeros(2 * d), kappa, "rotation")

    @staticmethod
    def shear(s: float, kind: str = "q", d: int = 1,
              kappa: float = 0.0) -> "CanonicalMap":
        M = np.eye(2 * d)
        if kind == "q":       # free-flight: q -> q + s p
            M[:d, d:] = s * np.eye(d)
        elif kind == "p":     # kick: p -> p + s q
            M[d:, :d] = s * np.eye(d)
        else:
            raise InvalidInput("shear kind must be 'q' or 'p'")
        return CanonicalMap(M, np.zeros(2 * d), kappa, f"shear_{kind}")

    @staticmethod
    def linear(M, kappa: float = 0.0) -> "CanonicalMap":
        M = np.asarray(M, dtype=float)
        return CanonicalMap(M, np.zeros(M.shape[0]), kappa, "linear")


def _base_one_form(z: np.ndarray) -> np.ndarray:
    """Coefficients of A = -p . dq at points z = (..., 2d)."""
    d = z.shape[-1] // 2
    out = np.zeros_like(z)
    out[..., :d] = -z[..., d:]
    return out


def _pullback_one_form(eta: CanonicalMap, z: np.ndarray) -> np.ndarray:
    """Coefficients of eta^* A = -P(z) . dQ(z)."""
    d = eta.d
    P = eta.apply(z)[..., d:]
    Aq = eta.matrix[:d, :]          # dQ_a = Aq[a, :] . dz
    return -P @ Aq


def _gauss_panel(f_coeff, z0, z1, nodes, weights):
    """integral over one straight segment of f(z(s)) . (z1 - z0) ds."""
    dz = z1 - z0
    acc = 0.0
    for x, w in zip(nodes, weights):
        s = 0.5 * (x + 1.0)
        pts = z0 + s * dz
        acc += w * np.sum(f_coeff(pts) * dz, axis=-1)
    return 0.5 * acc


_G8 = np.polynomial.legendre.leggauss(8)
_G16 = np.polynomial.legendre.leggauss(16)


def _line_integral(f_coeff, z0, z1, depth: int = 0):
    """Adaptive Gauss quadrature along a straight segment (vectorized)."""
    coarse = _gauss_panel(f_coeff, z0, z1, *_G8)
    fine = _gauss_panel(f_coeff, z0, z1, *_G16)
    err = np.max(np.abs(fine - coarse))
    scale = max(float(np.max(np.abs(fine))), 1.0)
    if err <= 1e-12 * scale:
        return fine
    if depth >= 12:
        raise QuadratureError("cocycle line integral did not converge")
    mid = 0.5 * (z0 + z1)
    return (_line_integral(f_coeff, z0, mid, depth + 1)
            + _line_integral(f_coeff, mid, z1, depth + 1))


def cocycle_integral(eta: CanonicalMap, z, check_paths: bool = True):
    """Phase integral int_0^z (eta^* A - A) with A = -p dq.

    Accepts a single phase point (length 2d) or a batch (..., 2d).
    The integrand is closed for symplectic eta, so the value is path
    independent; a straight path and an axis-aligned two-segment path are
    both evaluated and must agree to ``PATH_INDEPENDENCE_TOL``.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    if z.shape[-1] != 2 * eta.d:
        raise DimensionMismatch("point dimension does not match the map")

    def f_coeff(pts):
        return _pullback_one_form(eta, pts) - _base_one_form(pts)

    zero = np.zeros_like(z)
    straight = _line_integral(f_coeff, zero, z)
    if check_paths:
        d = eta.d
        corner = z.copy()
        corner[..., d:] = 0.0   # (q_z, 0)
        two_leg = (_line_integral(f_coeff, zero, corner)
                   + _line_integral(f_coeff, corner, z))
        gap = np.max(np.abs(straight - two_leg))
        scale = max(float(np.max(np.abs(straight))), 1.0)
        if gap > PATH_INDEPENDENCE_TOL * scale:
            raise QuadratureError(
                f"cocycle paths disagree by {gap:.3e}; map is not strict")
    return float(straight) if single else straight


def group_compose(g1: CanonicalMap, g2: CanonicalMap) -> CanonicalMap:
    """(eta1, k1)(eta2, k2) with the central-extension phase cocycle."""
    if g1.d != g2.d:
        raise DimensionMismatch("maps act on different phase spaces")
    M = g1.matrix @ g2.matrix
    c = g1.matrix @ g2.shift + g1.shift
    phase = cocycle_integral(g1, g2.apply(np.zeros(2 * g2.d)))
    kappa = (g1.kappa + g2.kappa + phase) % TWO_PI
    return CanonicalMap(M, c, kappa, label=f"{g1.label}*{g2.label}")


def circle_distance(a: float, b: float) -> float:
    """Distance of two phases on the circle."""
    gap = (a - b) % TWO_PI
    return min(gap, TWO_PI - gap)


# --------------------------------------------------------------------------
# ensemble CSV I/O: w, q..., p...
# --------------------------------------------------------------------------

def save_ensemble_csv(path, e: WeightedEnsemble) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["w"] + [f"q{a + 1}" for a in range(e.d)]
                        + [f"p{a + 1}" for a in range(e.d)])
        for k in range(e.n_points):
            writer.writerow([f"{e.weights[k]:.17g}"]
                            + [f"{v:.17g}" for v in e.qs[k]]
                            + [f"{v:.17g}" for v in e.ps[k]])


def load_ensemble_csv(path) -> WeightedEnsemble:
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = (len(header) - 1) // 2
        rows = [list(map(float, r)) for r in reader if r]
    data = np.array(rows)
    return WeightedEnsemble(data[:, 0], data[:, 1:1 + d], data[:, 1 + d:])
