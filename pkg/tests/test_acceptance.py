"""Acceptance suite: one test per criterion, one printed verdict line each.

Run with ``pytest tests/test_acceptance.py -v -s``. The benchmark
criteria use the wine/waveform files materialized by the session fixture
(offline-capable); glass and vehicle run only when their files have been
fetched with scripts/fetch_uci.py.
"""

import math
import os
import time

import numpy as np
import pytest

from conftest import DATA_DIR, require_dataset

from bmsvm.data import load_csv, leave_one_out, random_splits
from bmsvm.harness import SamplerTrainer, predict_labels
from bmsvm.kernels import KernelMatrix, build_kernel_matrix, pseudo_inverse
from bmsvm.map_fit import MapConfig, map_fit, primal_objective, subgradient
from bmsvm.model import (
    Coefficients,
    Hyperparams,
    LatentState,
    TrainingSet,
    log_prior_W,
    neg_log_likelihood,
    training_decision_values,
)
from bmsvm.sampler import (
    KernelWorkspace,
    SamplerSchedule,
    draw_betas,
    draw_sigma2,
    draw_tau,
    forward_draw_latents,
    init_state,
    prior_draw_coefficients,
    prior_draw_sigma2_tau,
    run_chain,
    sigma2_gamma_params,
    tau_gamma_params,
)

SEED = 20240817
JOBS = min(os.cpu_count() or 1, 8)


def verdict(tag, ok, detail):
    print(f"\n[{tag}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{tag} failed: {detail}"


def batch_se(x, n_batch=100):
    size = len(x) // n_batch
    means = x[: size * n_batch].reshape(n_batch, size).mean(axis=1)
    return means.std(ddof=1) / math.sqrt(n_batch)


class TestCriterion1PriorDensityIdentity:
    def test_singular_matrix_normal_oracle(self):
        rng = np.random.default_rng(SEED)
        t0 = time.time()
        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(2, 9))
            c = int(rng.integers(2, 5))
            a = rng.standard_normal((n, n))
            kmat = a @ a.T + n * np.eye(n)
            lam = float(rng.uniform(0.2, 3.0))
            b = rng.standard_normal((n, c))
            w = b - b.mean(axis=1, keepdims=True)
            k = KernelMatrix.from_entries(kmat)
            h = np.eye(c) - np.ones((c, c)) / c
            cov = np.kron(np.linalg.inv(lam * kmat), h)
            vals = np.linalg.eigvalsh(cov)
            nz = vals[vals > cov.shape[0] * np.finfo(float).eps * vals.max()]
            quad = w.reshape(-1) @ np.linalg.pinv(cov, hermitian=True) @ w.reshape(-1)
            oracle = -0.5 * float(np.sum(np.log(nz))) - 0.5 * float(quad)
            worst = max(worst, abs(log_prior_W(w, k, lam) - oracle))
        elapsed = time.time() - t0
        verdict("AC1", worst < 1e-8 and elapsed < 5.0,
                f"50 instances, worst |difference| {worst:.2e} (tol 1e-8), "
                f"{elapsed:.2f}s (budget 5s)")


class TestCriterion2MapPrimalEquivalence:
    def test_joint_differences_equal_primal_differences(self):
        rng = np.random.default_rng(SEED + 1)
        t0 = time.time()
        n, c = 7, 3
        labels = np.array([1, 2, 3, 1, 2, 3, 1])
        ts = TrainingSet.from_labels(rng.standard_normal((n, 2)), labels, c)
        k = build_kernel_matrix(ts.inputs, 1.8)
        lam = 1.4

        def neg_log_joint(coef):
            f = training_decision_values(coef, k)
            return neg_log_likelihood(f, ts) - log_prior_W(coef.W, k, lam)

        worst = 0.0
        for _ in range(20):
            c1 = Coefficients(b0=rng.standard_normal(c), B=rng.standard_normal((n, c)))
            c2 = Coefficients(b0=rng.standard_normal(c), B=rng.standard_normal((n, c)))
            lhs = neg_log_joint(c1) - neg_log_joint(c2)
            rhs = primal_objective(c1, k, ts, lam) - primal_objective(c2, k, ts, lam)
            worst = max(worst, abs(lhs - rhs))
        elapsed = time.time() - t0
        verdict("AC2", worst < 1e-8 and elapsed < 1.0,
                f"20 coefficient pairs, worst |difference| {worst:.2e} (tol 1e-8), "
                f"{elapsed:.2f}s (budget 1s)")


class TestCriterion3ConjugacyOracles:
    def test_conditional_moments(self):
        rng_setup = np.random.default_rng(SEED + 2)
        n, p, c = 5, 2, 3
        ts = TrainingSet.from_labels(rng_setup.standard_normal((n, p)),
                                     [1, 2, 3, 1, 2], c)
        ws = KernelWorkspace.build(ts, 1.5)
        hyper = Hyperparams(a_sigma=6.0, b_sigma=4.0, a_tau=4.0, b_tau=2.0,
                            eta=4.0, theta_bounds=(0.1, 10.0))
        latent = LatentState.from_arrays(
            [rng_setup.standard_normal(ts.counts[j]) for j in range(c)])
        coef = Coefficients(b0=rng_setup.standard_normal(c),
                            B=rng_setup.standard_normal((n, c)))
        sigma2, tau = 0.8, 1.3
        n_draws = 20000
        t0 = time.time()
        checks = []

        # noise precision against its Gamma parameters
        rng = np.random.default_rng(SEED + 3)
        shape, rate = sigma2_gamma_params(latent, ws, hyper, tau)
        prec = np.array([1.0 / draw_sigma2(latent, ws, hyper, tau, rng)
                         for _ in range(n_draws)])
        se_m = prec.std(ddof=1) / math.sqrt(n_draws)
        checks.append(("sigma^-2 mean", abs(prec.mean() - shape / rate), 3 * se_m))
        var_target = shape / rate**2
        m4 = np.mean((prec - prec.mean()) ** 4)
        se_v = math.sqrt(max(m4 - prec.var(ddof=1) ** 2, 0.0) / n_draws)
        checks.append(("sigma^-2 var", abs(prec.var(ddof=1) - var_target), 3 * se_v))

        # regression columns against their Gaussian parameters
        rng = np.random.default_rng(SEED + 4)
        draws = np.stack([
            draw_betas(latent, ws, sigma2, tau, hyper.eta, rng).beta_matrix
            for _ in range(n_draws)
        ])
        kmat = ws.kernel.entries
        for j in range(c):
            kt = ws.aug.rows[ts.complements[j]]
            sig = np.zeros((n + 1, n + 1))
            sig[0, 0] = hyper.eta
            sig[1:, 1:] = tau * kmat
            psi = kt.T @ kt + sig
            mean = np.linalg.solve(psi, kt.T @ latent.s[j])
            cov = sigma2 * np.linalg.inv(psi)
            got = draws[:, :, j]
            mean_err = np.abs(got.mean(axis=0) - mean)
            mean_tol = 3 * np.sqrt(np.diag(cov) / n_draws)
            checks.append((f"beta_{j + 1} mean", float(np.max(mean_err - mean_tol)), 0.0))
            emp_cov = np.cov(got.T)
            cov_se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n_draws)
            checks.append((f"beta_{j + 1} cov",
                           float(np.max(np.abs(emp_cov - cov) - 3 * cov_se)), 0.0))

        # coefficient-scale parameter against its Gamma parameters
        rng = np.random.default_rng(SEED + 5)
        shape_t, rate_t = tau_gamma_params(coef, ws, sigma2, hyper)
        taus = np.array([draw_tau(coef, ws, sigma2, hyper, rng)
                         for _ in range(n_draws)])
        se_t = taus.std(ddof=1) / math.sqrt(n_draws)
        checks.append(("tau mean", abs(taus.mean() - shape_t / rate_t), 3 * se_t))

        elapsed = time.time() - t0
        failures = [nm for nm, err, tol in checks if err > tol]
        detail = (f"{len(checks)} moment checks over {n_draws} draws, "
                  f"{elapsed:.1f}s (budget 30s)")
        if failures:
            detail += f"; out of tolerance: {failures}"
        verdict("AC3", not failures and elapsed < 30.0, detail)


class TestCriterion4Geweke:
    def test_joint_distribution_agreement(self):
        # exact shape mode and a fixed kernel width; hyperparameters are
        # chosen with finite fourth moments so the second-moment
        # comparison has a valid Monte Carlo standard error
        rng_data = np.random.default_rng(2024)
        n, p, c = 6, 2, 3
        ts = TrainingSet.from_labels(rng_data.standard_normal((n, p)),
                                     [1, 1, 2, 2, 3, 3], c)
        ws = KernelWorkspace.build(ts, 1.0)
        hyper = Hyperparams(a_sigma=10.0, b_sigma=10.0, a_tau=4.0, b_tau=2.0,
                            eta=4.0, sigma2_shape_mode="exact",
                            theta_bounds=(0.1, 10.0))
        probes = [(0, 0), (1, 0), (3, 1), (6, 2), (4, 2)]
        m = 50000
        t0 = time.time()

        def stats(sig, tau, betas):
            return [sig, tau] + [betas[r, cc] for r, cc in probes]

        rng = np.random.default_rng(SEED + 6)
        fwd = np.zeros((m, 7))
        for t in range(m):
            sig, tau = prior_draw_sigma2_tau(hyper, rng)
            coef = prior_draw_coefficients(ws, hyper, sig, tau, rng)
            forward_draw_latents(coef, ws, sig, rng)
            fwd[t] = stats(sig, tau, coef.beta_matrix)

        rng = np.random.default_rng(SEED + 7)
        sig, tau = prior_draw_sigma2_tau(hyper, rng)
        coef = prior_draw_coefficients(ws, hyper, sig, tau, rng)
        suc = np.zeros((m, 7))
        for t in range(m):
            latent = forward_draw_latents(coef, ws, sig, rng)
            sig = draw_sigma2(latent, ws, hyper, tau, rng)
            coef = draw_betas(latent, ws, sig, tau, hyper.eta, rng)
            tau = draw_tau(coef, ws, sig, hyper, rng)
            suc[t] = stats(sig, tau, coef.beta_matrix)

        names = ["sigma2", "tau"] + [f"beta[{r},{cc}]" for r, cc in probes]
        worst_z = 0.0
        worst_name = ""
        for kidx, nm in enumerate(names):
            for moment in (1, 2):
                a = fwd[:, kidx] ** moment
                b = suc[:, kidx] ** moment
                se = math.sqrt(a.var(ddof=1) / m + batch_se(b) ** 2)
                z = abs(a.mean() - b.mean()) / se
                if z > worst_z:
                    worst_z, worst_name = z, f"{nm} m{moment}"
        elapsed = time.time() - t0
        verdict("AC4", worst_z < 4.0 and elapsed < 600.0,
                f"prior-forward vs successive-conditional over {m} draws, "
                f"worst |z| {worst_z:.2f} at {worst_name} (limit 4), "
                f"{elapsed:.0f}s (budget 600s)")


# Reduced benchmark schedule shared by criteria 5-7.
REDUCED = SamplerSchedule(2000, 1000, 10)


class TestCriterion5WineLOO:
    def test_wine_leave_one_out(self, data_dir):
        path = require_dataset(data_dir, "wine")
        ds = load_csv(path, label_column=0)
        trainer = SamplerTrainer(hyper=Hyperparams(), schedule=REDUCED,
                                 theta=3.5, fast_linalg=True)
        t0 = time.time()
        result = leave_one_out(ds, trainer, predict_labels, seed=SEED, jobs=JOBS)
        elapsed = time.time() - t0
        wrong = sum(result.per_split_errors)
        verdict("AC5", result.error_rate <= 0.04 and elapsed < 1800.0,
                f"wine LOO error {result.error_rate:.4f} ({wrong}/178, target <= 0.04, "
                f"reported full-schedule value 0.0169), {elapsed / 60:.1f} min")


class TestCriterion6GlassLOO:
    def test_glass_leave_one_out(self, data_dir):
        path = require_dataset(data_dir, "glass")
        ds = load_csv(path, label_column=0)
        trainer = SamplerTrainer(hyper=Hyperparams(), schedule=REDUCED,
                                 theta=10.0, fast_linalg=True)
        t0 = time.time()
        result = leave_one_out(ds, trainer, predict_labels, seed=SEED, jobs=JOBS)
        elapsed = time.time() - t0
        verdict("AC6", abs(result.error_rate - 0.2383) <= 0.07 and elapsed < 1800.0,
                f"glass LOO error {result.error_rate:.4f} "
                f"(target 0.2383 +/- 0.07), {elapsed / 60:.1f} min")


class TestCriterion7WaveformAndVehicle:
    def test_waveform_splits(self, data_dir):
        path = require_dataset(data_dir, "waveform")
        ds = load_csv(path, label_column=0)
        trainer = SamplerTrainer(hyper=Hyperparams(), schedule=REDUCED,
                                 theta=3.5, fast_linalg=True)
        t0 = time.time()
        result = random_splits(ds, n_train=300, n_repeats=3, trainer=trainer,
                               predictor=predict_labels, seed=SEED, jobs=JOBS)
        elapsed = time.time() - t0
        verdict("AC7", abs(result.error_rate - 0.1655) <= 0.04,
                f"waveform mean error over 3 splits {result.error_rate:.4f} "
                f"(target 0.1655 +/- 0.04), per split "
                f"{[round(e, 4) for e in result.per_split_errors]}, "
                f"{elapsed / 60:.1f} min")

    def test_vehicle_width_sampling_smoke(self, data_dir):
        # smoke only: chain runs with width sampling, its acceptance rate
        # is strictly inside (0, 1), predictions are produced; the
        # reported 0.0816 error is not gated
        vehicle = os.path.join(data_dir, "vehicle.csv")
        if os.path.exists(vehicle):
            ds = load_csv(vehicle, label_column=0)
            rng = np.random.default_rng(SEED)
            keep = rng.permutation(ds.n)[:120]
            x, labels = ds.features[keep], ds.labels[keep]
            source = "vehicle subsample (120 rows)"
        else:
            rng = np.random.default_rng(SEED)
            centers = rng.standard_normal((4, 18)) * 2.0
            x = np.vstack([ctr + rng.standard_normal((30, 18)) for ctr in centers])
            labels = np.repeat([1, 2, 3, 4], 30)
            source = "synthetic stand-in (vehicle.csv absent; same shape: 4 classes, p=18)"
        from bmsvm.data import standardize
        from bmsvm.predict import classify_batch

        xs, _, _ = standardize(x)
        ts = TrainingSet.from_labels(xs, labels, 4)
        hyper = Hyperparams(theta_bounds=(0.1, 200.0))
        rng = np.random.default_rng(SEED + 8)
        state = init_state(ts, hyper, rng, theta=5.0)
        out = run_chain(ts, hyper, SamplerSchedule(80, 40, 4), state, rng,
                        sample_theta=True, fast_linalg=False)
        predicted, scores = classify_batch(xs, out, ts.inputs)
        ok = (0.0 < out.theta_acceptance_rate < 1.0
              and predicted.shape == (ts.n,)
              and np.all(np.isfinite(scores)))
        verdict("AC7-smoke", ok,
                f"width-sampling chain on {source}: theta acceptance "
                f"{out.theta_acceptance_rate:.3f}, {ts.n} predictions produced")


class TestCriterion8PropertySuites:
    def test_key_invariants_quickly(self):
        t0 = time.time()
        rng = np.random.default_rng(SEED + 9)
        n, c = 6, 3
        labels = np.array([1, 2, 3, 1, 2, 3])
        ts = TrainingSet.from_labels(rng.standard_normal((n, 2)), labels, c)
        k = build_kernel_matrix(ts.inputs, 1.5)

        # constraint preservation through a short chain
        hyper = Hyperparams(eta=4.0, theta_bounds=(0.1, 10.0))
        rng2 = np.random.default_rng(SEED + 10)
        state = init_state(ts, hyper, rng2, theta=1.5)
        out = run_chain(ts, hyper, SamplerSchedule(30, 10, 4), state, rng2)
        assert np.max(np.abs(out.W.sum(axis=2))) < 1e-10
        assert np.max(np.abs(out.w0.sum(axis=1))) < 1e-10

        # likelihood groupings agree exactly
        f = rng.standard_normal((n, c))
        assert neg_log_likelihood(f, ts, "by_point") == \
            neg_log_likelihood(f, ts, "by_class")

        # subgradient against central finite differences away from kinks
        coef = None
        while coef is None:
            cand = Coefficients(b0=rng.standard_normal(c),
                                B=0.5 * rng.standard_normal((n, c)))
            margins = training_decision_values(cand, k) + ts.margin_offset
            if np.min(np.abs(margins)) > 1e-3:
                coef = cand
        g_b0, g_B = subgradient(coef, k, ts, 1.2)
        h = 1e-6
        for idx in range(c):
            e = np.zeros(c)
            e[idx] = h
            fd = (primal_objective(Coefficients(coef.b0 + e, coef.B), k, ts, 1.2)
                  - primal_objective(Coefficients(coef.b0 - e, coef.B), k, ts, 1.2)) / (2 * h)
            assert abs(g_b0[idx] - fd) <= 1e-5 * max(abs(fd), 1.0)
        e = np.zeros((n, c))
        e[2, 1] = h
        fd = (primal_objective(Coefficients(coef.b0, coef.B + e), k, ts, 1.2)
              - primal_objective(Coefficients(coef.b0, coef.B - e), k, ts, 1.2)) / (2 * h)
        assert abs(g_B[2, 1] - fd) <= 1e-5 * max(abs(fd), 1.0)

        # Moore-Penrose identities
        kp = pseudo_inverse(k)
        a = k.entries
        assert np.linalg.norm(a @ kp @ a - a) / np.linalg.norm(a) < 1e-8
        assert np.linalg.norm(kp @ a @ kp - kp) / np.linalg.norm(kp) < 1e-8

        # bitwise chain determinism
        rng3 = np.random.default_rng(SEED + 11)
        s3 = init_state(ts, hyper, rng3, theta=1.5)
        o3 = run_chain(ts, hyper, SamplerSchedule(20, 10, 5), s3, rng3)
        rng4 = np.random.default_rng(SEED + 11)
        s4 = init_state(ts, hyper, rng4, theta=1.5)
        o4 = run_chain(ts, hyper, SamplerSchedule(20, 10, 5), s4, rng4)
        assert np.array_equal(o3.W, o4.W) and np.array_equal(o3.sigma2, o4.sigma2)

        elapsed = time.time() - t0
        verdict("AC8", elapsed < 120.0,
                f"constraints, grouping identity, subgradient-vs-FD, "
                f"Moore-Penrose, determinism all hold, {elapsed:.1f}s (budget 120s)")
