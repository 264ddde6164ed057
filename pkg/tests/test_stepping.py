import numpy as np
import pytest

from chimex.model import ModelParams, Symport, f_eval, g_eval
from chimex.monitors import lyapunov_energy
from chimex.spectral import (
    NEUMANN,
    Field,
    basis_mode,
    forward,
    inner,
    inverse,
    make_grid,
    norm,
    solve_implicit,
)
from chimex.stepping import (
    BlowUpError,
    GuardViolation,
    SolverConfig,
    Trajectory,
    imex_step,
    interpolants,
    make_initial,
    run,
)

P = ModelParams(1.0, Symport(1.0, 1.0))
PG0 = ModelParams(1.0)


def dense_step_oracle(u, params, dt):
    """Brute-force dense linear-algebra step on the same sine basis.

    Coefficients are obtained by solving against the explicit synthesis
    matrix and the implicit system is assembled and solved densely, so the
    only shared ingredient with the production path is the basis itself.
    """
    g = u.grid
    n = g.modes[0]
    L = g.lengths[0]
    x = g.points()[0]
    kappa = np.arange(1, n + 1)
    synth = np.sin(np.outer(x, kappa) * np.pi / L)
    lam = (kappa * np.pi / L) ** 2
    c = np.linalg.solve(synth, u.values)
    fc = np.linalg.solve(synth, f_eval(u.values, params))
    gc = np.linalg.solve(synth, g_eval(u.values, params))
    rhs = c - dt * (lam * fc + gc)
    system = np.eye(n) + dt * np.diag(lam ** 2)
    return synth @ np.linalg.solve(system, rhs)


class TestImexStep:
    def test_zero_is_fixed_point(self):
        g = make_grid(1, [1.0], [32])
        z = Field(g, np.zeros(32))
        assert np.all(imex_step(z, P, 0.1).values == 0.0)

    def test_linearized_single_mode(self):
        # harness with the nonlinearity and source dropped: the step reduces
        # to the diagonal implicit solve
        g = make_grid(1, [1.0], [31])
        u = basis_mode(g, 1)
        out = inverse(solve_implicit(forward(u), 0.1))
        c = forward(out).coeffs
        assert c[0] == pytest.approx(0.0931019, abs=1e-7)
        assert np.max(np.abs(c[1:])) <= 1e-12

    def test_matches_dense_oracle_on_spec_case(self):
        g = make_grid(1, [1.0], [64])
        x = g.points()[0]
        u = Field(g, 0.1 * np.sin(np.pi * x))
        ours = imex_step(u, P, 1e-3).values
        theirs = dense_step_oracle(u, P, 1e-3)
        assert np.max(np.abs(ours - theirs)) <= 1e-10 * max(1.0, np.max(np.abs(theirs)))

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_dense_oracle_on_random_states(self, seed):
        g = make_grid(1, [1.0], [64])
        rng = np.random.default_rng(seed)
        u = Field(g, rng.standard_normal(64))
        ours = imex_step(u, P, 2e-3).values
        theirs = dense_step_oracle(u, P, 2e-3)
        assert np.max(np.abs(ours - theirs)) <= 1e-10 * max(1.0, np.max(np.abs(theirs)))

    def test_scheme_residual_in_dual_norm(self):
        g = make_grid(1, [1.0], [48])
        u = make_initial(g, "random_smooth", seed=9, amplitude=1.0)
        dt = 5e-3
        un1 = imex_step(u, P, dt)
        c0, c1 = forward(u).coeffs, forward(un1).coeffs
        lam = g.eigenvalues
        fh = forward(Field(g, f_eval(u.values, P))).coeffs
        gh = forward(Field(g, g_eval(u.values, P))).coeffs
        resid = (c1 - c0) / dt + lam ** 2 * c1 + lam * fh + gh
        w = g.coeff_weights()
        dual = np.sqrt(np.sum(w * lam ** -2 * resid ** 2))
        scale = np.sqrt(np.sum(w * lam ** -2 * ((c1 - c0) / dt) ** 2))
        assert dual <= 1e-12 * max(scale, 1.0)

    def test_rejects_nonpositive_dt(self):
        g = make_grid(1, [1.0], [16])
        with pytest.raises(ValueError):
            imex_step(Field(g, np.zeros(16)), P, -0.1)


class TestSquareIdentity:
    # (a - b, a) = (|a|^2 - |b|^2 + |a - b|^2) / 2 for random fields
    @pytest.mark.parametrize("seed", range(3))
    def test_identity(self, seed):
        g = make_grid(1, [2.0], [40])
        rng = np.random.default_rng(seed)
        a = Field(g, rng.standard_normal(40))
        b = Field(g, rng.standard_normal(40))
        lhs = inner(a - b, a)
        rhs = 0.5 * (norm(a) ** 2 - norm(b) ** 2 + norm(a - b) ** 2)
        assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(rhs)))


class TestRun:
    def test_zero_steps_returns_initial(self):
        g = make_grid(1, [1.0], [16])
        u0 = make_initial(g, "random_smooth", seed=1)
        traj = run(u0, P, SolverConfig(dt=0.1, steps=0))
        assert len(traj) == 1
        assert np.array_equal(traj.fields[0].values, u0.values)
        assert np.array_equal(traj.final.values, u0.values)

    def test_deterministic_bitwise(self):
        g = make_grid(1, [1.0], [32])
        u0 = make_initial(g, "random_smooth", seed=2)
        cfg = SolverConfig(dt=1e-3, steps=50)
        a, b = run(u0, P, cfg), run(u0, P, cfg)
        assert np.array_equal(a.final.values, b.final.values)
        assert np.array_equal(a.series.l2, b.series.l2)

    def test_matches_manual_composition(self):
        g = make_grid(1, [1.0], [32])
        u0 = make_initial(g, "random_smooth", seed=3)
        traj = run(u0, P, SolverConfig(dt=1e-3, steps=9))
        u = u0
        for _ in range(9):
            u = imex_step(u, P, 1e-3)
        assert np.array_equal(traj.final.values, u.values)

    def test_snapshot_stride_and_horizon(self):
        g = make_grid(1, [1.0], [16])
        u0 = make_initial(g, "random_smooth", seed=4)
        traj = run(u0, P, SolverConfig(dt=0.25, horizon=1.0, stride=2))
        assert traj.config.step_count == 4
        assert np.allclose(traj.times, [0.0, 0.5, 1.0])

    def test_overflow_guard_aborts(self):
        g = make_grid(1, [1.0], [16])
        u0 = Field(g, np.full(16, 5e12))
        with pytest.raises(BlowUpError) as err:
            run(u0, P, SolverConfig(dt=1e-3, steps=5))
        assert err.value.t == 0.0

    def test_strict_guard_rejects_large_dt(self):
        g = make_grid(1, [1.0], [16])
        u0 = make_initial(g, "random_smooth", seed=5)
        with pytest.raises(GuardViolation):
            run(u0, P, SolverConfig(dt=0.51, steps=1))
        # boundary value is allowed
        run(u0, P, SolverConfig(dt=0.5, steps=1))
        # source-free model has no guard
        run(u0, PG0, SolverConfig(dt=10.0, steps=1))

    def test_neumann_requires_source_free(self):
        g = make_grid(1, [1.0], [16], NEUMANN)
        u0 = make_initial(g, "random_smooth", seed=6)
        with pytest.raises(ValueError):
            run(u0, P, SolverConfig(dt=1e-3, steps=1))

    def test_rejects_nonfinite_initial(self):
        g = make_grid(1, [1.0], [16])
        vals = np.zeros(16)
        vals[3] = np.nan
        with pytest.raises(ValueError):
            run(Field(g, vals), P, SolverConfig(dt=1e-3, steps=1))


class TestEnergyDecay:
    def test_lyapunov_nonincreasing_source_free(self):
        g = make_grid(1, [1.5 * np.pi], [64])
        u0 = make_initial(g, "random_smooth", seed=7, amplitude=0.8)
        traj = run(u0, PG0, SolverConfig(dt=1e-3, steps=400))
        e = lyapunov_energy(traj)
        tol = 1e-10 * max(1.0, abs(e[0]))
        assert np.all(np.diff(e) <= tol)


class TestDifferenceGrowth:
    @pytest.mark.parametrize("seed", range(5))
    def test_lipschitz_bound_on_pairs(self, seed):
        g = make_grid(1, [1.5 * np.pi], [48])
        rng = np.random.default_rng(seed)
        v0 = make_initial(g, "random_smooth", seed=int(rng.integers(1 << 30)), amplitude=1.0)
        w0 = make_initial(g, "random_smooth", seed=int(rng.integers(1 << 30)), amplitude=1.0)
        dt, steps = 1e-2, 60
        rate = 2 * P.lipschitz_f ** 2 + 4 * P.lipschitz_g
        tv = run(v0, P, SolverConfig(dt=dt, steps=steps))
        tw = run(w0, P, SolverConfig(dt=dt, steps=steps))
        d0 = norm(v0 - w0) ** 2
        for n in (1, 10, 30, 60):
            dn = norm(tv.fields[n] - tw.fields[n]) ** 2
            assert dn <= np.exp(rate * n * dt) * d0 * (1 + 1e-9)


class TestRegularityChain:
    def test_per_step_biharmonic_bounds(self):
        # exact Hilbert-space algebra of the step plus the chain-rule bound on
        # the explicit part, with fully explicit 1D embedding constants
        g = make_grid(1, [1.5 * np.pi], [64])
        L = g.lengths[0]
        lam1 = g.constants.lambda_min
        u0 = make_initial(g, "random_smooth", seed=8, amplitude=2.0)
        dt = 1e-3
        traj = run(u0, P, SolverConfig(dt=dt, steps=200, stride=1))
        lam = g.eigenvalues
        w = g.coeff_weights()
        c_grad4 = np.sqrt(L / 3.0) / np.sqrt(lam1)  # |grad u|_{L4}^2 <= c |D u|^2
        c_h = 3.0 * (
            P.lipschitz_f ** 2
            + (P.curvature_bound * c_grad4) ** 2
            + P.source_bound ** 2
        )
        for n in range(200):
            cn = forward(traj.fields[n]).coeffs
            cn1 = forward(traj.fields[n + 1]).coeffs
            fh = forward(Field(g, f_eval(traj.fields[n].values, P))).coeffs
            gh = forward(Field(g, g_eval(traj.fields[n].values, P))).coeffs
            h2n = np.sum(w * lam ** 2 * cn ** 2)
            h2n1 = np.sum(w * lam ** 2 * cn1 ** 2)
            a2n1 = np.sum(w * lam ** 4 * cn1 ** 2)
            hn = np.sum(w * (lam * fh + gh) ** 2)
            slack = 1 + 1e-9
            # exact algebraic consequences of the diagonal step
            assert dt * a2n1 <= (2.0 * h2n + 4.0 * dt * hn) * slack
            assert h2n1 <= (h2n + dt * hn) * slack
            # explicit-part bound and the assembled quartic forms
            assert hn <= c_h * (h2n ** 2 + 1.0) * slack
            assert dt * a2n1 <= (2.0 * h2n + 4.0 * c_h * dt * (h2n ** 2 + 1.0)) * slack
            assert h2n1 <= (h2n + c_h * dt * (h2n ** 2 + 1.0)) * slack


class TestInterpolants:
    def _traj(self):
        g = make_grid(1, [1.0], [24])
        u0 = make_initial(g, "random_smooth", seed=10)
        return run(u0, P, SolverConfig(dt=0.01, steps=10))

    def test_grid_point_values(self):
        traj = self._traj()
        lin, right, left = interpolants(traj, 0.05)
        assert np.array_equal(lin.values, traj.fields[5].values)
        assert np.array_equal(left.values, traj.fields[5].values)
        assert np.array_equal(right.values, traj.fields[6].values)

    def test_midpoint_average(self):
        traj = self._traj()
        lin, _, _ = interpolants(traj, 0.055)
        mid = 0.5 * (traj.fields[5].values + traj.fields[6].values)
        assert np.allclose(lin.values, mid, rtol=0, atol=1e-15)

    def test_subinterval_distance_bound(self):
        traj = self._traj()
        step = norm(traj.fields[6] - traj.fields[5])
        for t in (0.051, 0.055, 0.0599):
            lin, _, left = interpolants(traj, t)
            assert norm(lin - left) <= step * (1 + 1e-12)

    def test_endpoint_and_range_checks(self):
        traj = self._traj()
        lin, right, left = interpolants(traj, 0.1)
        assert np.array_equal(lin.values, traj.fields[10].values)
        assert np.array_equal(right.values, traj.fields[10].values)
        with pytest.raises(ValueError):
            interpolants(traj, 0.11)
        strided = run(traj.fields[0], P, SolverConfig(dt=0.01, steps=10, stride=2))
        with pytest.raises(ValueError):
            interpolants(strided, 0.05)


class TestMakeInitial:
    def test_single_mode_samples(self):
        g = make_grid(1, [1.0], [31])
        u = make_initial(g, "single_mode", mode=1, amplitude=1.0)
        x = g.points()[0]
        assert np.allclose(u.values, np.sin(np.pi * x), atol=1e-13)

    def test_random_smooth_reproducible_and_regular(self):
        g = make_grid(1, [1.0], [64])
        a = make_initial(g, "random_smooth", seed=11, amplitude=2.0)
        b = make_initial(g, "random_smooth", seed=11, amplitude=2.0)
        assert np.array_equal(a.values, b.values)
        assert norm(a) == pytest.approx(2.0, rel=1e-12)
        assert np.isfinite(norm(a, 1.0))

    def test_decay_rate_guard(self):
        g = make_grid(1, [1.0], [16])
        with pytest.raises(ValueError):
            make_initial(g, "random_smooth", seed=0, decay=1.5)

    def test_from_file_round_trip(self, tmp_path):
        from chimex.snapshots import save_field

        g = make_grid(1, [1.0], [32])
        u = make_initial(g, "random_smooth", seed=12)
        path = tmp_path / "state.chf"
        save_field(path, u)
        v = make_initial(g, "from_file", path=path)
        assert np.array_equal(u.values, v.values)

    def test_unknown_kind(self):
        g = make_grid(1, [1.0], [16])
        with pytest.raises(ValueError):
            make_initial(g, "lattice")
