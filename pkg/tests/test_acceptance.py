"""Acceptance criteria, one test each, with a printed PASS/FAIL line per criterion."""

import math
import time

import numpy as np
from conftest import random_smooth, smooth_driver

from fracvia import cli
from fracvia import fraccalc as fc
from fracvia import solver as sv
from fracvia import viability as vb
from fracvia.errors import ViabilityViolation
from fracvia.fbm import FbmSpec, covariance, sample_fbm_circulant, sample_paths
from fracvia.grid import GridFunction


def announce(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")


def test_01_fbm_law(capsys):
    start = time.perf_counter()
    worst = {}
    for hurst in (0.6, 0.75, 0.9):
        spec = FbmSpec(hurst, grid_points=16, seed=2024)
        ana = covariance(spec.times[:, None], spec.times[None, :], hurst)
        for method in ("cholesky", "circulant"):
            arr = sample_paths(spec, 10_000, method)[:, :, 0]
            worst[(hurst, method)] = float(np.abs(arr.T @ arr / arr.shape[0] - ana).max())
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 0.05 and elapsed < 30
    announce(capsys, 1, ok, f"max |cov error| = {max(worst.values()):.4f} (< 0.05), "
                            f"runtime {elapsed:.1f}s (< 30s)")
    assert ok, worst


def test_02_integral_calibration(capsys):
    rng = np.random.default_rng(2)
    n = 512
    rel = []
    for _ in range(20):
        g = random_smooth(rng, n)
        exact = g.values[-1, 0] - g.values[0, 0]
        val = fc.stieltjes_integral(GridFunction(g.times, np.ones(n)), g, 0.3, 0, 1)[0]
        rel.append(abs(val - exact) / abs(exact))
    g = smooth_driver(1024)
    chain = fc.stieltjes_integral(g, g, 0.3, 0, 1)[0]
    exact = (g.values[-1, 0] ** 2 - g.values[0, 0] ** 2) / 2
    chain_rel = abs(chain - exact) / abs(exact)
    ok = max(rel) < 10 / n and chain_rel < 0.02
    announce(capsys, 2, ok, f"calibration max rel error {max(rel):.2e} (< {10 / n:.2e}), "
                            f"chain rule rel error {chain_rel:.2e} (< 0.02)")
    assert ok


def test_03_closed_form_seminorms(capsys):
    ident = GridFunction.from_callable(lambda s: s, 0, 1, 1024)
    lam_err, norm_err = {}, {}
    for a in (0.1, 0.25, 0.4):
        target = 1 / (math.gamma(1 + a) * math.gamma(1 - a))
        lam_err[a] = abs(fc.lambda_alpha(ident, a, 0, 1) / target - 1)
        target = 1 + 1 / (1 - a)
        norm_err[a] = abs(fc.norm_alpha_infty(ident, a, 0, 1) / target - 1)
    ok = max(lam_err.values()) < 0.02 and max(norm_err.values()) < 0.01
    announce(capsys, 3, ok, f"Lambda rel error {max(lam_err.values()):.2e} (< 2%), "
                            f"alpha-infinity norm rel error {max(norm_err.values()):.2e} (< 1%)")
    assert ok


def test_04_inequality_battery(capsys):
    a, n = 0.3, 257
    rng = np.random.default_rng(4)
    coeffs = sv.linear_coefficients(0.7, 0.2, 0.6, 0.1)
    a1, a2 = fc.prop1_constants(a, 1.0)
    constants_ok = a1 <= 4 + 3 * 1.0 and math.isclose(a2, 4 / (1 - 2 * a) * (2 / a + 1))
    failed, total = [], 0
    for trial in range(20):
        f, h, g = (random_smooth(rng, n) for _ in range(3))
        reports = [fc.verify_integral_bound(f, g, a, 0, 1)]
        for lam in (1.0, 4.0, 16.0):
            reports += fc.verify_prop1_bounds(f, g, a, lam, 0, 1)
            reports += sv.verify_operator_estimates(f, h, g, coeffs, a, lam, 0, 1)
        Y = sv.solve_picard(coeffs, g, float(rng.uniform(-1, 1)), 0, 1, sv.SolverConfig(a)).path
        reports += sv.verify_aux_estimates(Y, coeffs, g, a, 0)
        total += len(reports)
        failed += [(trial, r.name) for r in reports if not r.passed]
    ok = constants_ok and not failed
    announce(capsys, 4, ok, f"{total - len(failed)}/{total} checks pass, "
                            f"A1 = {a1:.3f} <= 7, A2 matches closed form: {constants_ok}")
    assert ok, failed[:10]


def test_05_solver_correctness(capsys):
    a, cfg = 0.5, sv.SolverConfig(0.3)
    coeffs = sv.linear_coefficients(diffusion_slope=a)
    errs = {}
    for n in (257, 513, 1025, 2049):
        g = smooth_driver(n)
        X = sv.solve_picard(coeffs, g, 1.0, 0, 1, cfg).path.values[:, 0]
        errs[n] = float(np.abs(X - np.exp(a * (g.values[:, 0] - g.values[0, 0]))).max())
    C = errs[257] * 256
    rate_ok = all(errs[n] < C / (n - 1) for n in (513, 1025, 2049))

    g = sample_fbm_circulant(FbmSpec(0.75, grid_points=2049, seed=3))
    exact = np.exp(a * (g.values[:, 0] - g.values[0, 0]))
    sol = sv.solve_picard(coeffs, g, 1.0, 0, 1, cfg)
    e_pic = float(np.abs(sol.path.values[:, 0] - exact).max())
    eul = sv.solve_euler(coeffs, g, 1.0, 0, 1).values[:, 0]
    e_eul = float(np.abs(eul - exact).max())
    gap = float(np.abs(sol.path.values[:, 0] - eul).max())
    ok = (rate_ok and errs[2049] < 1e-3 and e_pic < 5e-2
          and sol.residual <= 10 * cfg.picard_tol and gap <= 5 * max(e_pic, e_eul))
    announce(capsys, 5, ok,
             f"smooth C = {C:.3e} (errors {', '.join(f'{e:.1e}' for e in errs.values())}), "
             f"n=2048 smooth {errs[2049]:.1e} (< 1e-3), fBm {e_pic:.1e} (< 5e-2, "
             f"C = {e_pic * 2048:.2f}), residual {sol.residual:.1e}, "
             f"Picard-Euler gap {gap:.1e} <= 5 x {max(e_pic, e_eul):.1e}")
    assert ok


def test_06_apriori_bound(capsys):
    a = 0.3
    drivers = [smooth_driver()] + [sample_fbm_circulant(FbmSpec(0.75, grid_points=513, seed=s))
                                   for s in range(3)]
    families = [sv.linear_coefficients(0.5, 0.0, 0.5), sv.linear_coefficients(-0.7, 0.2, 0.6, 0.1),
                sv.sin_coefficients(1.0), sv.sin_coefficients(0.8, -0.5)]
    violations, total, tightest = 0, 0, -math.inf
    for g in drivers:
        for coeffs in families:
            for x0 in (0.5, -1.0, 1.5):
                sol = sv.solve_picard(coeffs, g, x0, 0, 1, sv.SolverConfig(a))
                measured = fc.holder_norm(sol.path, 1 - a, 0, 1)
                gap = math.log(measured) - sv.apriori_log_bound(x0, sol.ledger)
                tightest = max(tightest, gap)
                violations += gap > 0
                total += 1
    ok = violations == 0
    announce(capsys, 6, ok, f"{violations} violations over {total} solves, "
                            f"tightest log-margin {tightest:.1f}")
    assert ok


def test_07_positive_control(capsys):
    g = sample_fbm_circulant(FbmSpec(0.75, grid_points=513, seed=7))
    coeffs, tube = sv.ball_coefficients(0.5), vb.ball(2.0)
    details, ok = [], True
    for eps in (0.1, 0.05, 0.025):
        sol = vb.build_viable_solution(0.0, 0.0, coeffs, g, tube, eps, 0.3)
        inside = np.mean([tube.contains(s, x) for s, x in zip(sol.X.times, sol.X.values)])
        lag = sol.X.times - sol.t
        xi_ok = np.mean(np.linalg.norm(sol.xi.values, axis=1) <= eps * lag + 1e-13)
        ok &= inside == 1.0 and xi_ok == 1.0
        details.append(f"eps={eps}: membership {inside:.0%}, xi bound {xi_ok:.0%}")
    announce(capsys, 7, ok, "; ".join(details))
    assert ok


def test_08_negative_control(capsys, tmp_path):
    gamma = min(1 - 0.3, 1 - 2 * 0.3)
    code = cli.run(["viability", "--tube", "ball:2", "--coeffs", "builtin:outward",
                    "--x0", "1.99", "--driver", "fbm:0.75", "--seed", "1", "--alpha", "0.3",
                    "--out", str(tmp_path / "neg.csv")])
    exponents = {}
    for seed in (1, 5, 6, 7):
        g = sample_fbm_circulant(FbmSpec(0.75, grid_points=513, seed=seed))
        try:
            vb.build_viable_solution(0.0, 1.99, sv.outward_coefficients(), g, vb.ball(2.0),
                                     0.05, 0.3)
            exponents[seed] = math.inf
        except ViabilityViolation as exc:
            exponents[seed] = exc.q_growth_exponent
    ok = code == cli.EXIT_VIOLATION and all(e < 1 + gamma for e in exponents.values())
    shown = ", ".join(f"seed {s}: {e:.2f}" for s, e in exponents.items())
    announce(capsys, 8, ok, f"exit code {code} (expect 2), |Q| exponents {shown} "
                            f"(< 1+gamma = {1 + gamma:.2f})")
    assert ok


def test_09_convergence_rate(capsys):
    a = 0.25
    g = sample_fbm_circulant(FbmSpec(0.75, grid_points=513, seed=7))
    start = time.perf_counter()
    _, report = vb.refine_to_limit(0.0, 1.0, sv.linear_coefficients(-0.5, 0, 0.5), g,
                                   vb.whole_space(), a, [0.4, 0.2, 0.1, 0.05, 0.025])
    elapsed = time.perf_counter() - start
    lo, hi = 0.8 * (0.5 - a), 1.5 * (0.5 - a)
    rate = report.rate_exponent
    ok = lo <= rate <= hi and elapsed < 120
    announce(capsys, 9, ok, f"fitted exponent {rate:.3f} (window [{lo:.2f}, {hi:.2f}]), "
                            f"distances {', '.join(f'{d:.2e}' for d in report.distances)}, "
                            f"runtime {elapsed:.1f}s (< 120s)")
    assert ok


def test_10_determinism(capsys, tmp_path, monkeypatch):
    runs = {
        "fbm": ["fbm", "--hurst", "0.75", "--n", "257", "--paths", "8", "--channels", "2",
                "--long", "--seed", "10", "--out"],
        "solve": ["solve", "--coeffs", "builtin:sin", "--driver", "fbm:0.75", "--seed", "10",
                  "--n", "257", "--out"],
        "viability": ["viability", "--tube", "ball:2", "--coeffs", "builtin:ball",
                      "--driver", "fbm:0.75", "--seed", "10", "--n", "257", "--out"],
    }
    same = {}
    for name, argv in runs.items():
        out = tmp_path / f"{name}.csv"
        monkeypatch.setenv("FRACVIA_THREADS", "1")
        assert cli.run(argv + [str(out)]) == 0
        monkeypatch.setenv("FRACVIA_THREADS", "4")
        code = cli.run(["replay", str(out) + ".manifest.json", "--out-dir", str(tmp_path / "r")])
        same[name] = code == 0 and (tmp_path / "r" / out.name).read_bytes() == out.read_bytes()
    ok = all(same.values())
    announce(capsys, 10, ok, "bit-identical replay at 4 threads: "
                             + ", ".join(f"{k} {v}" for k, v in same.items()))
    assert ok
