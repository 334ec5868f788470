import dataclasses
import math

import numpy as np
import pytest
from conftest import random_smooth, smooth_driver

from fracvia import solver as sv
from fracvia.errors import ConvergenceError, NonFiniteError
from fracvia.fraccalc import holder_norm
from fracvia.grid import GridFunction

ALPHA = 0.3


def ident(n=257):
    return GridFunction.from_callable(lambda s: s, 0, 1, n)


def exp_solution(g, a, x0=1.0):
    return x0 * np.exp(a * (g.values[:, 0] - g.values[0, 0]))


class TestCoefficients:
    def test_builtin_lookup(self):
        assert sv.builtin("sin", amplitude=2.0).M0 == 2.0
        with pytest.raises(ValueError):
            sv.builtin("cubic")

    @pytest.mark.parametrize("field", ["beta", "delta", "mu"])
    def test_exponent_range(self, field):
        with pytest.raises(ValueError):
            dataclasses.replace(sv.linear_coefficients(), **{field: 0.0})

    def test_alpha0(self):
        c = dataclasses.replace(sv.linear_coefficients(), beta=0.9, delta=0.5)
        assert c.alpha0 == pytest.approx(1 / 3)

    def test_fd_gradient_matches_analytic(self):
        c = sv.sin_coefficients()
        fd = dataclasses.replace(c, gradient=None)
        for x in (-1.2, 0.3, 2.5):
            assert fd.grad_sigma(0.0, [x])[0, 0, 0] == pytest.approx(math.cos(x), abs=1e-8)

    def test_ball_sigma_vanishes_on_boundary(self):
        c = sv.ball_coefficients(0.5)
        assert c.sigma(0, [2.0])[0, 0] == 0.0
        assert c.sigma(0, [-2.0])[0, 0] == 0.0
        assert c.sigma(0, [0.0])[0, 0] == 0.5

    def test_nonfinite_values(self):
        bad = dataclasses.replace(sv.linear_coefficients(), drift_batch=None,
                                  drift=lambda t, x: x / 0.0 if x[0] == 0 else x)
        with np.errstate(divide="ignore", invalid="ignore"):
            with pytest.raises(NonFiniteError) as info:
                bad.drift_values(np.array([0.0, 0.5, 1.0]), np.array([1.0, 0.0, 2.0]))
        assert info.value.index == 1


class TestDriftOperator:
    def test_zero(self):
        assert sv.drift_operator(ident(), sv.zero_coefficients(), 0, 1)[0] == 0.0

    def test_constant(self):
        c = sv.linear_coefficients(drift_offset=2.5)
        assert sv.drift_operator(ident(), c, 0.25, 0.75)[0] == pytest.approx(1.25)

    def test_identity_drift(self):
        c = sv.linear_coefficients(drift_slope=1.0)
        assert sv.drift_operator(ident(), c, 0, 1)[0] == pytest.approx(0.5, rel=1e-12)


class TestDiffusionOperator:
    def test_zero(self, smooth):
        f = GridFunction(smooth.times, np.ones(smooth.n))
        assert sv.diffusion_operator(f, smooth, sv.zero_coefficients(), ALPHA, 0, 1)[0] == 0.0

    def test_identity_matrix(self):
        ts = np.linspace(0, 1, 129)
        g = GridFunction(ts, np.column_stack([np.sin(ts), ts**2]))
        c = sv.CoefficientPair(
            drift=lambda t, x: np.zeros(2), diffusion=lambda t, x: np.eye(2),
            dim=2, channels=2, M0=0.0, L0=0.0, MR=lambda R: 0.0, LR=lambda R: 0.0)
        f = GridFunction(ts, np.zeros((129, 2)))
        val = sv.diffusion_operator(f, g, c, ALPHA, 0, 1)
        np.testing.assert_allclose(val, g.values[-1] - g.values[0], atol=1e-12)

    def test_linear_matches_riemann_stieltjes(self):
        g = smooth_driver(1025)
        f = GridFunction(g.times, np.cos(g.times))
        val = sv.diffusion_operator(f, g, sv.linear_coefficients(), ALPHA, 0, 1)[0]
        fv = f.values.ravel()
        rs = np.sum(0.5 * (fv[1:] + fv[:-1]) * np.diff(g.values[:, 0]))
        assert val == pytest.approx(rs, abs=1e-4)


class TestLedger:
    @pytest.fixture
    def ledger(self):
        return sv.compute_ledger(sv.linear_coefficients(0.5, 0, 0.5), smooth_driver(), ALPHA, 0, 1)

    def test_finite_nonnegative(self, ledger):
        for name, value in ledger.as_dict().items():
            if name in ("C0",):
                continue
            assert np.isfinite(value) and value >= 0, name

    def test_lambda0_condition(self, ledger):
        lhs = (ledger.C0b2 + ledger.Lambda * ledger.C0s2) / ledger.lambda0 ** (1 - 2 * ALPHA)
        assert lhs <= 0.5 * (1 + 1e-9)

    def test_displayed_constants(self, ledger):
        R, Th = ledger.radius, ledger.horizon
        assert ledger.C0b1 == pytest.approx(0.5 * (Th + Th**ALPHA))
        assert ledger.CR1 == pytest.approx((R + 1 + Th) * 0.5)
        assert ledger.CR3 == pytest.approx(2 * (1 + R) * 0.5)
        assert ledger.A1 <= 4 + 3 * Th

    def test_rejects_large_alpha(self):
        with pytest.raises(ValueError):
            sv.compute_ledger(sv.linear_coefficients(), smooth_driver(), 0.5, 0, 1)

    def test_apriori_bound_affine(self, ledger):
        b0 = sv.apriori_log_bound(0.0, ledger)
        assert b0 == pytest.approx(ledger.log_C0)
        assert sv.apriori_log_bound(1.0, ledger) > b0
        assert sv.apriori_log_bound(-3.0, ledger) == pytest.approx(ledger.log_C0 + math.log(4))


class TestPicard:
    def test_zero_coefficients(self, smooth):
        sol = sv.solve_picard(sv.zero_coefficients(), smooth, 1.7, 0, 1, sv.SolverConfig(ALPHA))
        assert np.all(sol.path.values == 1.7)

    def test_classical_ode(self, smooth):
        c = sv.linear_coefficients(drift_slope=-1.0, diffusion_slope=0.0)
        sol = sv.solve_picard(c, smooth, 2.0, 0, 1, sv.SolverConfig(ALPHA))
        np.testing.assert_allclose(sol.path.values[:, 0], 2 * np.exp(-smooth.times), rtol=1e-5)

    @pytest.mark.parametrize("n", [257, 513, 1025])
    def test_exponential_smooth(self, n):
        g = smooth_driver(n)
        sol = sv.solve_picard(sv.linear_coefficients(diffusion_slope=0.5), g, 1.0, 0, 1,
                              sv.SolverConfig(ALPHA))
        err = np.abs(sol.path.values[:, 0] - exp_solution(g, 0.5)).max()
        assert err < 1.0 / n

    def test_exponential_fbm(self, fbm_driver):
        sol = sv.solve_picard(sv.linear_coefficients(diffusion_slope=0.5), fbm_driver, 1.0,
                              0, 1, sv.SolverConfig(ALPHA, hurst=0.75))
        err = np.abs(sol.path.values[:, 0] - exp_solution(fbm_driver, 0.5)).max()
        assert err < 5e-2

    def test_residual_and_contraction(self, fbm_driver):
        cfg = sv.SolverConfig(ALPHA)
        sol = sv.solve_picard(sv.sin_coefficients(0.8, -0.5), fbm_driver, 0.4, 0, 1, cfg)
        assert sol.residual <= 10 * cfg.picard_tol
        assert sol.contraction_ratios and sol.max_contraction_ratio <= 0.75

    def test_stitching_pieces_cover_window(self, fbm_driver):
        sol = sv.solve_picard(sv.linear_coefficients(diffusion_slope=0.5), fbm_driver, 1.0,
                              0, 1, sv.SolverConfig(ALPHA))
        assert sol.pieces[0].t == 0.0 and sol.pieces[-1].T == 1.0
        for a, b in zip(sol.pieces, sol.pieces[1:]):
            assert a.T == b.t
        assert all(p.lambda0 <= sv.LAMBDA_STITCH or (p.T - p.t) * 512 < 2 * sv.MIN_PIECE_CELLS
                   for p in sol.pieces)

    def test_fixed_lambda(self, smooth):
        sol = sv.solve_picard(sv.linear_coefficients(diffusion_slope=0.5), smooth, 1.0, 0, 1,
                              sv.SolverConfig(ALPHA, lambda_strategy=5.0))
        assert len(sol.pieces) == 1 and sol.lambda0 == 5.0

    def test_nonconvergence_carries_history(self, smooth):
        cfg = sv.SolverConfig(ALPHA, picard_max_iter=2)
        with pytest.raises(ConvergenceError) as info:
            sv.solve_picard(sv.linear_coefficients(diffusion_slope=0.5), smooth, 1.0, 0, 1, cfg)
        assert len(info.value.history) == 2

    def test_grid_mismatch(self, smooth):
        with pytest.raises(ValueError):
            sv.solve_picard(sv.zero_coefficients(), smooth, 0.0, 0, 1,
                            sv.SolverConfig(ALPHA, grid_points=100))

    def test_alpha_gate(self):
        with pytest.raises(ValueError):
            sv.SolverConfig(0.2, hurst=0.75)

    def test_flow_locality(self, fbm_driver):
        c = sv.sin_coefficients(0.8, -0.5)
        cfg = sv.SolverConfig(ALPHA)
        full = sv.solve_picard(c, fbm_driver, 0.4, 0, 1, cfg).path
        half = sv.solve_picard(c, fbm_driver.window(0, 0.5), 0.4, 0, 0.5, cfg).path
        np.testing.assert_allclose(full.window(0, 0.5).values, half.values, atol=1e-8)


class TestEuler:
    def test_zero(self, smooth):
        out = sv.solve_euler(sv.zero_coefficients(), smooth, -0.3, 0, 1)
        assert np.all(out.values == -0.3)

    def test_subgrid(self, smooth):
        out = sv.solve_euler(sv.linear_coefficients(diffusion_slope=0.5), smooth, 1.0, 0, 1, n=65)
        assert out.n == 65
        with pytest.raises(ValueError):
            sv.solve_euler(sv.zero_coefficients(), smooth, 0.0, 0, 1, n=100)

    def test_first_order_convergence(self):
        errs = []
        for n in (257, 1025):
            g = smooth_driver(n)
            out = sv.solve_euler(sv.linear_coefficients(diffusion_slope=0.5), g, 1.0, 0, 1)
            errs.append(np.abs(out.values[:, 0] - exp_solution(g, 0.5)).max())
        rate = math.log(errs[0] / errs[1]) / math.log(1024 / 256)
        assert rate > 0.9

    def test_blowup_index(self):
        g = GridFunction.from_callable(lambda s: 400 * s, 0, 1, 33)
        c = sv.CoefficientPair(drift=lambda t, x: np.zeros(1), diffusion=lambda t, x: x**2,
                               dim=1, channels=1, M0=1, L0=0, MR=lambda R: 1, LR=lambda R: 0)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(NonFiniteError) as info:
                sv.solve_euler(c, g, 1.0, 0, 1)
        assert 0 < info.value.index < 33

    def test_agreement_with_picard(self, fbm_driver):
        c = sv.linear_coefficients(diffusion_slope=0.5)
        exact = exp_solution(fbm_driver, 0.5)
        pic = sv.solve_picard(c, fbm_driver, 1.0, 0, 1, sv.SolverConfig(ALPHA)).path.values[:, 0]
        eul = sv.solve_euler(c, fbm_driver, 1.0, 0, 1).values[:, 0]
        e_p, e_e = np.abs(pic - exact).max(), np.abs(eul - exact).max()
        assert np.abs(pic - eul).max() <= 5 * max(e_p, e_e)


class TestAprioriBound:
    @pytest.mark.parametrize("coeffs", [sv.linear_coefficients(0.5, 0, 0.5),
                                        sv.sin_coefficients(0.8, -0.5)],
                             ids=["linear", "sin"])
    @pytest.mark.parametrize("x0", [0.0, 1.5])
    def test_holder_norm_below_bound(self, coeffs, x0, fbm_driver):
        sol = sv.solve_picard(coeffs, fbm_driver, x0, 0, 1, sv.SolverConfig(ALPHA))
        measured = holder_norm(sol.path, 1 - ALPHA, 0, 1)
        # x0 = 0 is a fixed point of both families, so the norm can vanish
        assert measured == 0.0 or math.log(measured) <= sv.apriori_log_bound(x0, sol.ledger)


class TestOperatorEstimates:
    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("lam", [1.0, 16.0])
    def test_random_pairs_pass(self, seed, lam):
        rng = np.random.default_rng(seed)
        f, h, g = (random_smooth(rng, 257) for _ in range(3))
        reps = sv.verify_operator_estimates(f, h, g, sv.linear_coefficients(0.7, 0.2, 0.6, 0.1),
                                            ALPHA, lam, 0, 1)
        assert len(reps) == 6
        assert all(r.passed for r in reps), [r.as_dict() for r in reps if not r.passed]

    def test_equal_pair_has_zero_differences(self, smooth, rng):
        f = random_smooth(rng, smooth.n)
        reps = {r.name: r for r in sv.verify_operator_estimates(
            f, f, smooth, sv.linear_coefficients(0.5, 0, 0.5), ALPHA, 4.0, 0, 1)}
        for name in ("lemma1-lipschitz", "lemma2-lipschitz"):
            assert reps[name].lhs == 0.0 and reps[name].rhs == 0.0 and reps[name].passed

    def test_lambda_sweep_ratio_grows(self, smooth, rng):
        f, h = random_smooth(rng, smooth.n), random_smooth(rng, smooth.n)
        c = sv.linear_coefficients(0.5, 0, 0.5)
        ratios = []
        for lam in (1.0, 4.0, 16.0, 64.0, 256.0):
            r = {x.name: x for x in sv.verify_operator_estimates(f, h, smooth, c, ALPHA, lam, 0, 1)}
            ratios.append(r["cor1-weighted"].rhs / r["cor1-weighted"].lhs)
        # the weight needs a few units of lambda before the decay dominates
        assert ratios[-1] > ratios[0]
        assert all(b > a for a, b in zip(ratios[1:], ratios[2:]))


class TestAuxEstimates:
    def test_constant_path_autonomous(self, smooth):
        Y = GridFunction(smooth.times, np.full(smooth.n, 0.7))
        reps = {r.name: r for r in sv.verify_aux_estimates(
            Y, sv.linear_coefficients(0.5, 0, 0.5), smooth, ALPHA, 0, R=1.0)}
        assert reps["lemma3-drift-growth"].lhs == 0.0

    @pytest.mark.parametrize("coeffs", [sv.linear_coefficients(-0.5, 0, 0.5),
                                        sv.sin_coefficients(0.8, -0.5)], ids=["linear", "sin"])
    def test_solved_path_passes(self, coeffs, fbm_driver):
        Y = sv.solve_picard(coeffs, fbm_driver, 0.5, 0, 1, sv.SolverConfig(ALPHA)).path
        reps = sv.verify_aux_estimates(Y, coeffs, fbm_driver, ALPHA, 0)
        assert all(r.passed for r in reps), [r.as_dict() for r in reps if not r.passed]

    def test_radius_too_small(self, smooth):
        with pytest.raises(ValueError):
            sv.verify_aux_estimates(smooth, sv.linear_coefficients(), smooth, ALPHA, 0, R=0.1)


class TestAssumptions:
    def test_all_gates_pass(self):
        c = dataclasses.replace(sv.linear_coefficients(0.5, 0, 0.5), beta=0.9)
        rep = sv.check_assumptions(c, 0.3, 0.75)
        assert rep.passed and all(m > 0 for m in rep.gates.values())

    def test_beta_gate_fails(self):
        c = dataclasses.replace(sv.linear_coefficients(), beta=0.1)
        rep = sv.check_assumptions(c, 0.09, 0.6)
        assert not rep.passed and rep.gates["1-H<beta"] < 0

    def test_sin_lipschitz_lattice(self):
        rep = sv.check_assumptions(sv.sin_coefficients(), 0.3, 0.75)
        assert rep.lattice["H1-i"] >= 0 and rep.passed

    def test_understated_constant_caught(self):
        c = dataclasses.replace(sv.sin_coefficients(), M0=0.5)
        rep = sv.check_assumptions(c, 0.3, 0.75)
        assert not rep.passed and rep.tightest_margin < 0

    def test_mu_gates(self):
        c = dataclasses.replace(sv.linear_coefficients(), mu=0.6)
        rep = sv.check_assumptions(c, 0.3, 0.75)
        assert rep.gates["mu>1-alpha0"] > 0 and rep.gates["1-mu<alpha"] < 0
        assert not rep.passed
