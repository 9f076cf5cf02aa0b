"""Classical flows, weak Liouville checks, canonical maps and cocycles."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from momaplab import classical as cl
from momaplab.errors import DimensionMismatch, InvalidInput, QuadratureError
from momaplab.grids import ParameterGrid, WeightDensity, uniform_weight

RNG = np.random.default_rng(90210)


class TestHamiltonianSpec:
    def test_catalog_members_and_gradients(self):
        for H in (cl.HamiltonianSpec.harmonic(), cl.HamiltonianSpec.free(),
                  cl.HamiltonianSpec.pendulum(), cl.HamiltonianSpec.quartic(),
                  cl.HamiltonianSpec.linear(0.5, -0.3),
                  cl.HamiltonianSpec.polynomial({(2, 0): 1.0, (1, 1): 0.5})):
            q = RNG.uniform(-1, 1, (4, 1))
            p = RNG.uniform(-1, 1, (4, 1))
            assert H.value(q, p).shape == (4,)
            assert H.dq(q, p).shape == (4, 1)

    def test_separability(self):
        assert cl.HamiltonianSpec.pendulum().is_separable
        assert cl.HamiltonianSpec.linear(1.0, 2.0).is_separable
        assert not cl.HamiltonianSpec.polynomial({(1, 1): 1.0}).is_separable

    def test_symbolic_bracket(self):
        q2 = cl.HamiltonianSpec.polynomial({(2, 0): 1.0})
        p2 = cl.HamiltonianSpec.polynomial({(0, 2): 1.0})
        br = q2.bracket_with(p2)  # {q^2, p^2} = 4 q p
        pts_q = RNG.uniform(-1, 1, (5, 1))
        pts_p = RNG.uniform(-1, 1, (5, 1))
        np.testing.assert_allclose(br.value(pts_q, pts_p),
                                   4 * pts_q[:, 0] * pts_p[:, 0], atol=1e-12)

    def test_unknown_symbols_rejected(self):
        import sympy as sp
        with pytest.raises(InvalidInput):
            cl.HamiltonianSpec(sp.Symbol("x") ** 2, 1)


class TestHamiltonFlow:
    def test_zero_hamiltonian_identity(self):
        H = cl.HamiltonianSpec.polynomial({(0, 0): 0.0})
        z = cl.hamilton_flow(cl.PhasePoint([1.3], [-0.2]), H, 1.0, 0.01, "rk4")
        np.testing.assert_allclose([z.q[0], z.p[0]], [1.3, -0.2], atol=1e-14)

    def test_harmonic_quarter_turn(self):
        H = cl.HamiltonianSpec.harmonic()
        dt = 1e-3
        z = cl.hamilton_flow(cl.PhasePoint([1.0], [0.0]), H, np.pi / 2, dt,
                             "verlet")
        assert abs(z.q[0] - 0.0) <= 10 * dt ** 2 + 1e-6
        assert abs(z.p[0] + 1.0) <= 10 * dt ** 2 + 1e-6

    def test_verlet_rejects_nonseparable(self):
        H = cl.HamiltonianSpec.polynomial({(1, 1): 1.0})
        with pytest.raises(InvalidInput):
            cl.hamilton_flow(cl.PhasePoint([1.0], [0.0]), H, 0.1, 0.01, "verlet")

    def test_pendulum_midpoint_energy_drift(self):
        H = cl.HamiltonianSpec.pendulum()
        z0 = cl.PhasePoint([1.1], [0.3])
        e0 = float(H.value(z0.q[None, :], z0.p[None, :])[0])
        zt = cl.hamilton_flow(z0, H, 10.0, 1e-3, "midpoint")
        et = float(H.value(zt.q[None, :], zt.p[None, :])[0])
        assert abs(et - e0) / abs(e0) <= 1e-6
        # independent trajectory oracle
        sol = solve_ivp(lambda t, y: [y[1], -np.sin(y[0])], (0, 10),
                        [1.1, 0.3], rtol=1e-12, atol=1e-12, dense_output=True)
        ref = sol.y[:, -1]
        assert abs(zt.q[0] - ref[0]) <= 1e-5
        assert abs(zt.p[0] - ref[1]) <= 1e-5

    def test_verlet_million_step_energy_bound(self):
        # bounded oscillation, no secular drift
        H = cl.HamiltonianSpec.harmonic()
        dt = 1e-3
        E = cl.verlet_energy_series(cl.PhasePoint([1.0], [0.0]), H, 1_000_000, dt)
        dev = np.abs(E - E[0])
        assert dev.max() <= 0.5 * dt ** 2  # amplitude O(dt^2), E0 = 1/2
        tenth = len(E) // 10
        assert dev[-tenth:].max() <= 1.5 * dev[:tenth].max()

    def test_ensemble_and_family_shapes(self):
        H = cl.HamiltonianSpec.harmonic()
        e = cl.WeightedEnsemble([0.5, 0.5], [[1.0], [0.0]], [[0.0], [1.0]])
        e2 = cl.hamilton_flow(e, H, 0.3, 0.01, "rk4")
        assert e2.n_points == 2 and e2.total_weight == 1.0
        grid = ParameterGrid(((0, 1), (0, 1)), (4, 4), "open")
        fam = cl.ParamPointFamily(grid, uniform_weight(grid),
                                  RNG.uniform(-1, 1, grid.shape),
                                  RNG.uniform(-1, 1, grid.shape))
        fam2 = cl.hamilton_flow(fam, H, 0.3, 0.01, "rk4")
        assert fam2.qbar.shape == fam.qbar.shape


class TestEnsemblePairing:
    def test_total_mass(self):
        e = cl.WeightedEnsemble([0.2, 0.3, 0.5], RNG.uniform(-1, 1, (3, 1)),
                                RNG.uniform(-1, 1, (3, 1)))
        one = cl.HamiltonianSpec.polynomial({(0, 0): 1.0})
        assert cl.ensemble_pairing(e, one) == pytest.approx(1.0)

    def test_delta_evaluation(self):
        e = cl.WeightedEnsemble([1.0], [[0.7]], [[-0.2]])
        phi = cl.HamiltonianSpec.polynomial({(2, 0): 1.0, (0, 1): 1.0})
        assert cl.ensemble_pairing(e, phi) == pytest.approx(0.7**2 - 0.2)

    def test_symmetric_pair(self):
        e = cl.WeightedEnsemble([0.5, 0.5], [[1.0], [-1.0]], [[0.0], [0.0]])
        q2 = cl.HamiltonianSpec.polynomial({(2, 0): 1.0})
        assert cl.ensemble_pairing(e, q2) == pytest.approx(1.0)


class TestWeakLiouville:
    def test_energy_is_casimir(self):
        # implicit midpoint conserves quadratic invariants to solver tolerance
        H = cl.HamiltonianSpec.harmonic()
        e0 = cl.WeightedEnsemble([0.6, 0.4], [[1.0], [0.2]], [[-0.3], [0.8]])
        res = cl.weak_liouville_residual(e0, H, H, t=0.5, dt=1e-3,
                                         integrator="midpoint")
        assert res <= 1e-8

    def test_mass_exact(self):
        H = cl.HamiltonianSpec.harmonic()
        e0 = cl.WeightedEnsemble([1.0], [[0.9]], [[0.1]])
        one = cl.HamiltonianSpec.polynomial({(0, 0): 1.0})
        res = cl.weak_liouville_residual(e0, H, one, t=0.5, dt=1e-2)
        assert res == 0.0

    def test_refinement_slope_two(self):
        H = cl.HamiltonianSpec.harmonic()
        e0 = cl.WeightedEnsemble([1.0], [[1.0]], [[0.0]])
        phi = cl.HamiltonianSpec.polynomial({(0, 1): 1.0})  # phi = p
        dts = np.array([4e-2, 2e-2, 1e-2])
        res = np.array([cl.weak_liouville_residual(e0, H, phi, 1.0, dt)
                        for dt in dts])
        slope = np.polyfit(np.log(dts), np.log(res), 1)[0]
        assert 1.7 <= slope <= 2.3

    def test_position_observable_is_discretely_exact(self):
        # verlet identity: (q_{n+1} - q_{n-1}) / 2dt == dT/dp at p_n for
        # quadratic kinetic energy, so the phi = q residual sits at rounding
        H = cl.HamiltonianSpec.harmonic()
        e0 = cl.WeightedEnsemble([1.0], [[1.0]], [[0.0]])
        phi = cl.HamiltonianSpec.polynomial({(1, 0): 1.0})
        assert cl.weak_liouville_residual(e0, H, phi, 1.0, 2e-2) <= 1e-12

    def test_left_leg_equivariance_exact(self):
        # pairing of the pushed ensemble == pairing against the pulled test
        # function; unit Jacobian of eta keeps weights untouched
        rng = np.random.default_rng(8)
        e = cl.WeightedEnsemble(rng.uniform(0.1, 1, 16),
                                rng.uniform(-1, 1, (16, 1)),
                                rng.uniform(-1, 1, (16, 1)))
        eta = cl.group_compose(cl.CanonicalMap.rotation(0.9),
                               cl.CanonicalMap.translation([0.4], [-0.7]))
        phi = cl.HamiltonianSpec.polynomial({(2, 0): 1.0, (1, 1): 0.5})
        pushed = cl.pushforward_ensemble(e, eta)

        def phi_after(qs, ps):
            z = eta.apply(np.concatenate([qs, ps], axis=1))
            return phi.value(z[:, :1], z[:, 1:])

        assert cl.ensemble_pairing(pushed, phi) == cl.ensemble_pairing(e, phi_after)


class TestParamRightLeg:
    def grid(self, n=12, boundary="periodic"):
        return ParameterGrid(((0.0, 2 * np.pi), (0.0, 2 * np.pi)), (n, n),
                             boundary)

    def test_constant_family_vanishes(self):
        g = self.grid()
        fam = cl.ParamPointFamily(g, uniform_weight(g),
                                  np.full(g.shape, 0.3), np.full(g.shape, -0.1))
        assert cl.param_right_leg(fam).max_abs() == 0.0

    def test_identity_chart(self):
        g = ParameterGrid(((0.0, 1.0), (0.0, 2.0)), (8, 8), "open")
        r1, r2 = g.meshes()
        fam = cl.ParamPointFamily(g, uniform_weight(g), r1, r2)
        B = cl.param_right_leg(fam)
        h1, h2 = g.spacings
        np.testing.assert_allclose(B.blocks[0], h1 * h2, atol=1e-14)

    def test_jacobian_determinant_oracle(self):
        # qbar = r1^2, pbar = r2: exact Jacobian 2 r1 at plaquette centers
        g = ParameterGrid(((0.0, 1.0), (0.0, 1.0)), (16, 16), "open")
        r1, r2 = g.meshes()
        fam = cl.ParamPointFamily(g, uniform_weight(g), r1**2, r2)
        B = cl.param_right_leg(fam)
        h1, h2 = g.spacings
        centers = g.axis_coords(0)[:-1] + h1 / 2
        oracle = 2 * centers[:, None] * h1 * h2
        np.testing.assert_allclose(B.blocks[0], np.broadcast_to(oracle, B.blocks[0].shape),
                                   atol=1e-13)

    def test_nonlinear_family_second_order(self):
        errs = []
        for n in (8, 16, 32):
            g = ParameterGrid(((0.0, 1.0), (0.0, 1.0)), (n, n), "open")
            r1, r2 = g.meshes()
            qb, pb = np.sin(r1 + r2), r2 + 0.3 * np.cos(r1)
            fam = cl.ParamPointFamily(g, uniform_weight(g), qb, pb)
            B = cl.param_right_leg(fam)
            h1, h2 = g.spacings
            c1 = g.axis_coords(0)[:-1] + h1 / 2
            c2 = g.axis_coords(1)[:-1] + h2 / 2
            C1, C2 = np.meshgrid(c1, c2, indexing="ij")
            jac = (np.cos(C1 + C2) * 1.0
                   - np.cos(C1 + C2) * (-0.3 * np.sin(C1)))
            errs.append(np.abs(B.blocks[0] / (h1 * h2) - jac).max())
        slope = np.polyfit(np.log([8, 16, 32]), np.log(errs), 1)[0]
        assert -2.4 <= slope <= -1.6

    def test_shift_equivariance(self):
        g = self.grid(10)
        r1, r2 = g.meshes()
        qb, pb = np.sin(r1) * np.cos(r2), np.cos(r1 + r2)
        w = uniform_weight(g)
        fam = cl.ParamPointFamily(g, w, qb, pb)
        B = cl.param_right_leg(fam).blocks[0]
        fam_s = cl.ParamPointFamily(g, w, np.roll(qb, (2, 3), (0, 1)),
                                    np.roll(pb, (2, 3), (0, 1)))
        Bs = cl.param_right_leg(fam_s).blocks[0]
        assert np.abs(Bs - np.roll(B, (2, 3), (0, 1))).max() <= 1e-15

    def test_requires_2d(self):
        g = ParameterGrid(((0.0, 1.0),), (8,), "open")
        fam = cl.ParamPointFamily(g, uniform_weight(g),
                                  np.zeros(g.shape), np.zeros(g.shape))
        with pytest.raises(InvalidInput):
            cl.param_right_leg(fam)


class TestCanonicalMaps:
    def test_symplectic_jacobians(self):
        for g in (cl.CanonicalMap.identity(), cl.CanonicalMap.rotation(0.6),
                  cl.CanonicalMap.translation([1.0], [2.0]),
                  cl.CanonicalMap.shear(0.8, "q"), cl.CanonicalMap.shear(-0.5, "p"),
                  cl.CanonicalMap.rotation(0.4, d=2)):
            J = cl._canonical_J(g.d)
            assert np.abs(g.matrix.T @ J @ g.matrix - J).max() <= 1e-10

    def test_non_symplectic_rejected(self):
        with pytest.raises(InvalidInput):
            cl.CanonicalMap(np.diag([2.0, 2.0]), np.zeros(2))

    def test_identity_cocycle(self):
        eta = cl.CanonicalMap.identity()
        assert cl.cocycle_integral(eta, np.array([1.0, 2.0])) == 0.0

    def test_translation_cocycle_closed_form(self):
        # eta^* A - A = -b dq, so the integral is -b q(z)
        eta = cl.CanonicalMap.translation([0.3], [0.7])
        z = np.array([2.0, 1.3])
        assert cl.cocycle_integral(eta, z) == pytest.approx(-0.7 * 2.0, abs=1e-12)

    def test_rotation_cocycle_closed_form(self):
        # straight-path integral of an affine pullback has a quadratic
        # antiderivative: value = (p q - P(z) . Q'(z)-contraction) / 2
        theta, q0, p0 = 0.8, 1.2, -0.4
        eta = cl.CanonicalMap.rotation(theta)
        P = -q0 * np.sin(theta) + p0 * np.cos(theta)
        Q = q0 * np.cos(theta) + p0 * np.sin(theta)
        expect = 0.5 * (p0 * q0 - P * Q)
        got = cl.cocycle_integral(eta, np.array([q0, p0]))
        assert got == pytest.approx(expect, abs=1e-12)

    def test_path_independence_batch(self):
        eta = cl.CanonicalMap.rotation(1.1)
        pts = RNG.uniform(-2, 2, (40, 2))
        vals = cl.cocycle_integral(eta, pts, check_paths=True)
        assert vals.shape == (40,)

    def test_group_identity_element(self):
        g1 = cl.CanonicalMap.rotation(0.5, kappa=1.2)
        gid = cl.CanonicalMap.identity()
        out = cl.group_compose(g1, gid)
        np.testing.assert_allclose(out.matrix, g1.matrix, atol=1e-14)
        assert cl.circle_distance(out.kappa, g1.kappa) <= 1e-12

    def test_two_translations(self):
        # eta1 = (a1, b1), eta2 = (a2, b2): cocycle = -b1 a2 from -b1 dq
        g1 = cl.CanonicalMap.translation([0.4], [0.9], kappa=0.3)
        g2 = cl.CanonicalMap.translation([-0.6], [0.2], kappa=0.5)
        out = cl.group_compose(g1, g2)
        np.testing.assert_allclose(out.shift, [-0.2, 1.1], atol=1e-14)
        expect = (0.3 + 0.5 + (-0.9) * (-0.6)) % (2 * np.pi)
        assert cl.circle_distance(out.kappa, expect) <= 1e-12

    def test_cocycle_associativity(self):
        rng = np.random.default_rng(17)
        mk = [lambda r: cl.CanonicalMap.rotation(r.uniform(0, 2), kappa=r.uniform(0, 6)),
              lambda r: cl.CanonicalMap.translation([r.normal()], [r.normal()],
                                                    kappa=r.uniform(0, 6)),
              lambda r: cl.CanonicalMap.shear(r.normal(), "q", kappa=r.uniform(0, 6)),
              lambda r: cl.CanonicalMap.shear(r.normal(), "p", kappa=r.uniform(0, 6))]
        for _ in range(10):
            g1, g2, g3 = (mk[rng.integers(len(mk))](rng) for _ in range(3))
            left = cl.group_compose(cl.group_compose(g1, g2), g3)
            right = cl.group_compose(g1, cl.group_compose(g2, g3))
            assert np.abs(left.matrix - right.matrix).max() <= 1e-12
            assert np.abs(left.shift - right.shift).max() <= 1e-10
            assert cl.circle_distance(left.kappa, right.kappa) <= 1e-8


def test_ensemble_csv_round_trip(tmp_path):
    e = cl.WeightedEnsemble([0.25, 0.75], [[1.0, 2.0], [3.0, 4.0]],
                            [[-1.0, 0.5], [0.0, 0.25]])
    path = tmp_path / "ensemble.csv"
    cl.save_ensemble_csv(path, e)
    e2 = cl.load_ensemble_csv(path)
    np.testing.assert_allclose(e2.weights, e.weights, atol=0)
    np.testing.assert_allclose(e2.qs, e.qs, atol=0)
    np.testing.assert_allclose(e2.ps, e.ps, atol=0)
