"""Data-augmentation MCMC for the hierarchical hinge-likelihood model.

One sweep updates, in fixed order: (a) every free latent by a symmetric
random-walk Metropolis step, (b) the kernel width by Metropolis (when
enabled) and then the noise precision and regression columns from their
normal-gamma block, (c) the coefficient-scale hyperparameter from its
Gamma conditional. After a burn-in prefix, every m-th sweep is retained.

Chains are reproducible bit-for-bit from the seed: all randomness flows
through one ``numpy.random.Generator``, and the per-class regression
draws use spawned child streams so the per-class consumption pattern
cannot leak across classes.

The per-sweep conditionals admit two equivalent implementations: the
plain one factorizes the per-class capacitance and precision matrices
densely every sweep, while the fast one (``fast_linalg=True``)
pre-diagonalizes the tau-dependence once per kernel and samples the
regression columns through the matrix-inversion-lemma identity. Both
sample the same distributions; the fast route is worthwhile once n is in
the hundreds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import ParameterError, ShapeError
from .kernels import (
    AugmentedKernel,
    KernelMatrix,
    build_kernel_matrix,
    chol_factor_spd,
    chol_solve_spd,
    log_pseudo_det,
    pseudo_inverse,
    solve_lower,
    solve_upper_from_lower,
)
from .map_fit import MapConfig, map_fit
from .model import (
    Coefficients,
    Hyperparams,
    LatentState,
    TrainingSet,
    hinge,
    initial_latent,
    neg_log_likelihood,
    training_decision_values,
)


@dataclass(frozen=True)
class SamplerSchedule:
    """Total sweeps m1, burn-in m2, thinning stride m; retains (m1-m2)/m."""

    m1: int
    m2: int
    m: int

    def __post_init__(self):
        if not (0 <= self.m2 < self.m1):
            raise ParameterError(f"need 0 <= m2 < m1, got m1={self.m1}, m2={self.m2}")
        if self.m < 1 or (self.m1 - self.m2) % self.m != 0:
            raise ParameterError(
                f"thinning stride {self.m} must divide m1 - m2 = {self.m1 - self.m2}"
            )
        if self.retained < 1:
            raise ParameterError("schedule retains no samples")

    @property
    def retained(self) -> int:
        return (self.m1 - self.m2) // self.m


class _ClassFast:
    """Per-class precomputation for the fast conditional routes.

    With M = I + (1/eta) 11' and A the kernel-range block of the
    capacitance, Q(tau) = M + (1/tau) A. Whitening by M's Cholesky
    factor and diagonalizing leaves every tau-solve a pair of matvecs.
    """

    def __init__(self, aug_rows: np.ndarray, a_block: np.ndarray,
                 proj_cols: np.ndarray, eta: float):
        n_j = aug_rows.shape[0]
        m = np.eye(n_j) + np.full((n_j, n_j), 1.0 / eta)
        lower, _ = chol_factor_spd(m, jitter_scale=0.0)
        g = solve_lower(lower, a_block)
        g = solve_lower(lower, g.T).T
        g = (g + g.T) / 2.0
        gvals, gvecs = np.linalg.eigh(g)
        linv = solve_lower(lower, np.eye(n_j))
        self.whiten = gvecs.T @ linv          # rows are U' L^-1
        self.gvals = np.maximum(gvals, 0.0)
        self.proj_cols = proj_cols            # pinv(K) K(:, rows of this class)

    def quad(self, s: np.ndarray, tau: float) -> float:
        t = self.whiten @ s
        return float(np.sum(t * t / (1.0 + self.gvals / tau)))

    def solve(self, x: np.ndarray, tau: float) -> np.ndarray:
        t = self.whiten @ x
        t /= 1.0 + self.gvals / tau
        return self.whiten.T @ t


class KernelWorkspace:
    """Kernel-derived quantities for one width value and one training set.

    Holds the kernel matrix, the augmented matrix [1, K], the per-class
    row blocks, and (lazily) the pseudo-inverse, log-pseudo-determinant
    and the fast-route precomputations. Immutable once built; rebuilt
    whenever a width move is accepted.
    """

    def __init__(self, kernel: KernelMatrix, ts: TrainingSet):
        if kernel.n != ts.n:
            raise ShapeError(f"kernel size {kernel.n} does not match n={ts.n}")
        self.kernel = kernel
        self.ts = ts
        self.aug = AugmentedKernel.from_kernel(kernel)
        self.aug_rows = tuple(self.aug.rows[idx] for idx in ts.complements)
        self._fast: dict[float, tuple[_ClassFast, ...]] = {}

    @classmethod
    def build(cls, ts: TrainingSet, theta: float) -> "KernelWorkspace":
        return cls(build_kernel_matrix(ts.inputs, theta), ts)

    @property
    def theta(self) -> float:
        return self.kernel.theta

    @cached_property
    def pinv(self) -> np.ndarray:
        return pseudo_inverse(self.kernel)

    @cached_property
    def lpd(self) -> float:
        return log_pseudo_det(self.kernel)

    @cached_property
    def ktk(self) -> tuple:
        """Per-class Gram blocks of the augmented rows, (n+1) x (n+1)."""
        return tuple(a.T @ a for a in self.aug_rows)

    @cached_property
    def a_blocks(self) -> tuple:
        """Per-class K_j pinv(K) K_j' blocks of the capacitance matrix."""
        out = []
        for idx in self.ts.complements:
            kj = self.kernel.entries[idx]
            out.append(kj @ self.pinv @ kj.T)
        return tuple(out)

    @cached_property
    def prior_coef_factor(self) -> np.ndarray:
        """n x rank factor F with F F' = pinv(K), for prior coefficient draws."""
        keep = self.kernel.eigvals > self.kernel.rank_tol
        return self.kernel.eigvecs[:, keep] * self.kernel.eigvals[keep] ** -0.5

    def fast_classes(self, eta: float) -> tuple:
        key = float(eta)
        if key not in self._fast:
            self._fast[key] = tuple(
                _ClassFast(self.aug_rows[j], self.a_blocks[j],
                           self.pinv @ self.kernel.entries[:, self.ts.complements[j]],
                           key)
                for j in range(self.ts.n_classes)
            )
        return self._fast[key]


@dataclass(frozen=True)
class ChainState:
    """One point of the chain: latents, coefficients, scales, kernel width."""

    latent: LatentState
    coef: Coefficients
    sigma2: float
    tau: float
    theta: float
    workspace: KernelWorkspace

    def __post_init__(self):
        if self.sigma2 <= 0 or self.tau <= 0:
            raise ParameterError("sigma2 and tau must be positive")
        if self.workspace.theta != self.theta:
            raise ParameterError(
                f"workspace width {self.workspace.theta} does not match theta {self.theta}"
            )


@dataclass(frozen=True)
class PosteriorSamples:
    """Thinned chain output: per-sample (w0, W, sigma2, tau, theta).

    Acceptance counters cover the whole run including burn-in.
    """

    w0: np.ndarray      # (T, c)
    W: np.ndarray       # (T, n, c)
    sigma2: np.ndarray  # (T,)
    tau: np.ndarray     # (T,)
    theta: np.ndarray   # (T,)
    accept_z: int
    total_z: int
    accept_theta: int
    total_theta: int

    @property
    def retained(self) -> int:
        return self.w0.shape[0]

    @property
    def z_acceptance_rate(self) -> float:
        return self.accept_z / self.total_z if self.total_z else float("nan")

    @property
    def theta_acceptance_rate(self) -> float:
        return self.accept_theta / self.total_theta if self.total_theta else float("nan")

    @classmethod
    def from_map(cls, coef: Coefficients, theta: float) -> "PosteriorSamples":
        """Wrap a deterministic fit as a single-sample record."""
        return cls(
            w0=coef.w0[None, :], W=coef.W[None, :, :],
            sigma2=np.array([float("nan")]), tau=np.array([float("nan")]),
            theta=np.array([theta]),
            accept_z=0, total_z=0, accept_theta=0, total_theta=0,
        )


def z_log_accept_ratio(z, z_star, mean, sigma2: float, offset: float):
    """Log MH ratio for the latent move z -> z_star (symmetric proposal).

    exp of this is the hinge-likelihood ratio times the Gaussian
    regression ratio; elementwise on arrays.
    """
    return (hinge(z + offset) - hinge(z_star + offset)) \
        + ((z - mean) ** 2 - (z_star - mean) ** 2) / (2.0 * sigma2)


def mh_update_z(latent: LatentState, coef: Coefficients, sigma2: float,
                ws: KernelWorkspace, ts: TrainingSet, hyper: Hyperparams,
                rng: np.random.Generator) -> tuple[LatentState, int]:
    """Random-walk Metropolis over every free latent, class by class.

    Free latents are conditionally independent given the coefficients,
    so each class's block is proposed and accepted as a vector; draws
    follow the fixed (class, row) order.
    """
    means = ws.aug.rows @ coef.beta_matrix
    offset = ts.margin_offset
    new_s = []
    accepted = 0
    for j in range(ts.n_classes):
        z = latent.s[j]
        mean_j = means[ts.complements[j], j]
        z_star = z + hyper.z_proposal_sd * rng.standard_normal(z.shape[0])
        log_ratio = z_log_accept_ratio(z, z_star, mean_j, sigma2, offset)
        accept = np.log(rng.random(z.shape[0])) < log_ratio
        accepted += int(accept.sum())
        new_s.append(np.where(accept, z_star, z))
    return LatentState.from_arrays(new_s), accepted


def capacitance_quad_forms(latent: LatentState, ws: KernelWorkspace,
                           eta: float, tau: float, fast: bool = False) -> float:
    """sum_j s_j' Q_j^-1 s_j with Q_j = I + K~_j Sigma^-1 K~_j'.

    Sigma^-1 = blockdiag(1/eta, (1/tau) pinv(K)), so
    Q_j = I + (1/eta) 11' + (1/tau) K_j pinv(K) K_j'.
    """
    total = 0.0
    if fast:
        for fc, s in zip(ws.fast_classes(eta), latent.s):
            total += fc.quad(s, tau)
        return total
    for j, s in enumerate(latent.s):
        n_j = s.shape[0]
        q = np.eye(n_j) + np.full((n_j, n_j), 1.0 / eta) + ws.a_blocks[j] / tau
        x, _ = chol_solve_spd(q, s)
        total += float(s @ x)
    return total


def sigma2_gamma_params(latent: LatentState, ws: KernelWorkspace,
                        hyper: Hyperparams, tau: float,
                        fast: bool = False) -> tuple[float, float]:
    """Shape and rate of the noise-precision Gamma conditional."""
    n, c = ws.ts.n, ws.ts.n_classes
    if hyper.sigma2_shape_mode == "paper":
        shape = (hyper.a_sigma + n * c) / 2.0
    else:
        shape = (hyper.a_sigma + (c - 1) * n) / 2.0
    rate = (hyper.b_sigma + capacitance_quad_forms(latent, ws, hyper.eta, tau, fast)) / 2.0
    return shape, rate


def draw_sigma2(latent: LatentState, ws: KernelWorkspace, hyper: Hyperparams,
                tau: float, rng: np.random.Generator, fast: bool = False) -> float:
    """Draw the noise variance: 1 over a Gamma precision draw."""
    shape, rate = sigma2_gamma_params(latent, ws, hyper, tau, fast)
    return 1.0 / float(rng.gamma(shape, 1.0 / rate))


def beta_conditional_mean(ws: KernelWorkspace, j: int, s_j: np.ndarray,
                          tau: float, eta: float) -> np.ndarray:
    """Posterior mean of one regression column: Psi_j^-1 K~_j' s_j."""
    psi = _psi_matrix(ws, j, tau, eta)
    mean, _ = chol_solve_spd(psi, ws.aug_rows[j].T @ s_j)
    return mean


def _psi_matrix(ws: KernelWorkspace, j: int, tau: float, eta: float) -> np.ndarray:
    n = ws.ts.n
    psi = ws.ktk[j].copy()
    psi[0, 0] += eta
    psi[1:, 1:] += tau * ws.kernel.entries
    return psi


def draw_betas(latent: LatentState, ws: KernelWorkspace, sigma2: float,
               tau: float, eta: float, rng: np.random.Generator,
               fast: bool = False) -> Coefficients:
    """Draw all regression columns from their Gaussian conditionals.

    Column j is N(Psi_j^-1 K~_j' s_j, sigma2 Psi_j^-1) with
    Psi_j = K~_j' K~_j + blockdiag(eta, tau K). Each class consumes an
    independent child stream of ``rng``.
    """
    ts = ws.ts
    n, c = ts.n, ts.n_classes
    children = rng.spawn(c)
    b0 = np.zeros(c)
    B = np.zeros((n, c))
    sd = math.sqrt(sigma2)
    if fast:
        fcs = ws.fast_classes(eta)
        factor = ws.prior_coef_factor
        rank = factor.shape[1]
        for j, child in enumerate(children):
            delta0 = sd / math.sqrt(eta) * child.standard_normal()
            delta_b = (sd / math.sqrt(tau)) * (factor @ child.standard_normal(rank))
            noise = sd * child.standard_normal(latent.s[j].shape[0])
            fitted = ws.aug_rows[j][:, 0] * delta0 + ws.aug_rows[j][:, 1:] @ delta_b
            w = fcs[j].solve(latent.s[j] - fitted - noise, tau)
            b0[j] = delta0 + float(np.sum(w)) / eta
            B[:, j] = delta_b + (fcs[j].proj_cols @ w) / tau
        return Coefficients(b0=b0, B=B)
    for j, child in enumerate(children):
        psi = _psi_matrix(ws, j, tau, eta)
        lower, _ = chol_factor_spd(psi)
        rhs = ws.aug_rows[j].T @ latent.s[j]
        mean = solve_upper_from_lower(lower, solve_lower(lower, rhs))
        noise = solve_upper_from_lower(lower, child.standard_normal(n + 1))
        beta = mean + sd * noise
        b0[j] = beta[0]
        B[:, j] = beta[1:]
    return Coefficients(b0=b0, B=B)


def tau_gamma_params(coef: Coefficients, ws: KernelWorkspace, sigma2: float,
                     hyper: Hyperparams) -> tuple[float, float]:
    """Shape and rate of the coefficient-scale Gamma conditional."""
    n, c = ws.ts.n, ws.ts.n_classes
    quad = float(np.sum(coef.B * (ws.kernel.entries @ coef.B)))
    return (hyper.a_tau + n * c) / 2.0, (hyper.b_tau + quad / sigma2) / 2.0


def draw_tau(coef: Coefficients, ws: KernelWorkspace, sigma2: float,
             hyper: Hyperparams, rng: np.random.Generator) -> float:
    shape, rate = tau_gamma_params(coef, ws, sigma2, hyper)
    return float(rng.gamma(shape, 1.0 / rate))


def theta_log_marginals(latent: LatentState, coef: Coefficients,
                        ws: KernelWorkspace, hyper: Hyperparams,
                        tau: float) -> float:
    """Sum over classes of the two width-dependent log marginals.

    Per class: the heavy-tailed residual density of the latents given
    the column (noise precision integrated out) plus the matching
    marginal of the column itself, whose normalizer carries the
    pseudo-determinant of K. Constants independent of the kernel width
    are dropped consistently.
    """
    ts = ws.ts
    n = ts.n
    betas = coef.beta_matrix
    log_det_sigma = math.log(hyper.eta) + n * math.log(tau) + ws.lpd
    total = 0.0
    for j in range(ts.n_classes):
        beta = betas[:, j]
        resid = latent.s[j] - ws.aug_rows[j] @ beta
        n_j = resid.shape[0]
        total -= 0.5 * (hyper.a_sigma + n_j) * math.log(hyper.b_sigma + float(resid @ resid))
        quad = hyper.eta * beta[0] ** 2 \
            + tau * float(beta[1:] @ (ws.kernel.entries @ beta[1:]))
        total += 0.5 * log_det_sigma \
            - 0.5 * (hyper.a_sigma + n + 1) * math.log(hyper.b_sigma + quad)
    return total


def reflect_into(value: float, lo: float, hi: float) -> float:
    """Fold a real number into [lo, hi] by reflection at both ends."""
    width = hi - lo
    t = math.fmod(value - lo, 2.0 * width)
    if t < 0:
        t += 2.0 * width
    return lo + (2.0 * width - t if t > width else t)


def mh_update_theta(latent: LatentState, coef: Coefficients, ws: KernelWorkspace,
                    ts: TrainingSet, hyper: Hyperparams, tau: float,
                    rng: np.random.Generator) -> tuple[float, KernelWorkspace, bool]:
    """Metropolis move of the kernel width on a reflected log scale.

    The proposal random-walks log(theta) and reflects at the log bounds,
    which keeps it symmetric in the log domain; the acceptance ratio
    therefore carries a theta*/theta change-of-variables factor on top
    of the per-class marginal ratios, matching the uniform prior on the
    original scale. The candidate workspace is returned on acceptance.
    """
    lo, hi = math.log(hyper.theta_bounds[0]), math.log(hyper.theta_bounds[1])
    u_cur = math.log(ws.theta)
    u_prop = reflect_into(u_cur + hyper.theta_proposal_sd * float(rng.standard_normal()),
                          lo, hi)
    if not (lo - 1e-12 <= u_prop <= hi + 1e-12):
        raise RuntimeError("reflected proposal left the bounds; this is a bug")
    theta_star = math.exp(u_prop)
    ws_star = KernelWorkspace(build_kernel_matrix(ts.inputs, theta_star), ts)
    log_ratio = theta_log_marginals(latent, coef, ws_star, hyper, tau) \
        - theta_log_marginals(latent, coef, ws, hyper, tau) \
        + (u_prop - u_cur)
    if math.log(rng.random()) < log_ratio:
        return theta_star, ws_star, True
    return ws.theta, ws, False


def prior_draw_sigma2_tau(hyper: Hyperparams,
                          rng: np.random.Generator) -> tuple[float, float]:
    """Draw (sigma2, tau) from their Gamma priors (precision drawn first)."""
    precision = float(rng.gamma(hyper.a_sigma / 2.0, 2.0 / hyper.b_sigma))
    tau = float(rng.gamma(hyper.a_tau / 2.0, 2.0 / hyper.b_tau))
    return 1.0 / precision, tau


def prior_draw_coefficients(ws: KernelWorkspace, hyper: Hyperparams,
                            sigma2: float, tau: float,
                            rng: np.random.Generator) -> Coefficients:
    """Draw (b0, B) from the prior given the scales.

    Intercepts are N(0, sigma2/eta); columns of B are zero-mean
    Gaussians with covariance (sigma2/tau) pinv(K), drawn in the kernel
    eigenbasis.
    """
    ts = ws.ts
    sd = math.sqrt(sigma2)
    b0 = sd / math.sqrt(hyper.eta) * rng.standard_normal(ts.n_classes)
    factor = ws.prior_coef_factor
    B = (sd / math.sqrt(tau)) * (factor @ rng.standard_normal((factor.shape[1],
                                                               ts.n_classes)))
    return Coefficients(b0=b0, B=B)


def forward_draw_latents(coef: Coefficients, ws: KernelWorkspace, sigma2: float,
                         rng: np.random.Generator) -> LatentState:
    """Generate free latents from the regression model given coefficients."""
    ts = ws.ts
    means = ws.aug.rows @ coef.beta_matrix
    sd = math.sqrt(sigma2)
    return LatentState.from_arrays([
        means[ts.complements[j], j] + sd * rng.standard_normal(ts.counts[j])
        for j in range(ts.n_classes)
    ])


def init_state(ts: TrainingSet, hyper: Hyperparams, rng: np.random.Generator,
               theta: float | None = None, workspace: KernelWorkspace | None = None,
               warm_start: bool = False, map_cfg: MapConfig | None = None) -> ChainState:
    """Starting point of a chain.

    Free latents begin at -1/(c-1) (own-class entries complete to 1),
    the scales are drawn from their priors, coefficients start at zero
    or at a regularized fit with weight tau/sigma2 when warm-starting.
    The width defaults to the midpoint of its bounds.
    """
    if workspace is not None:
        theta = workspace.theta
    elif theta is None:
        theta = (hyper.theta_bounds[0] + hyper.theta_bounds[1]) / 2.0
    ws = workspace or KernelWorkspace.build(ts, theta)
    sigma2, tau = prior_draw_sigma2_tau(hyper, rng)
    if warm_start:
        cfg = replace(map_cfg or MapConfig(), lam=tau / sigma2)
        coef = map_fit(ts, ws.kernel, cfg)
    else:
        coef = Coefficients.zeros(ts.n, ts.n_classes)
    return ChainState(latent=initial_latent(ts), coef=coef, sigma2=sigma2,
                      tau=tau, theta=theta, workspace=ws)


def run_chain(ts: TrainingSet, hyper: Hyperparams, schedule: SamplerSchedule,
              init: ChainState, rng: np.random.Generator,
              sample_theta: bool = False, fast_linalg: bool = False,
              trace_path=None) -> PosteriorSamples:
    """Run m1 sweeps, discard the first m2, retain every m-th after.

    Sweep order: latent block, then (optionally) the width move, then
    the precision/column block, then the scale hyperparameter. The
    returned record keeps the centered coefficients per retained sweep
    plus acceptance counters; a trace CSV row per retained sweep is
    written when ``trace_path`` is given.
    """
    latent, coef = init.latent, init.coef
    sigma2, tau, theta, ws = init.sigma2, init.tau, init.theta, init.workspace
    n_free = sum(ts.counts)
    t_count = schedule.retained
    w0s = np.zeros((t_count, ts.n_classes))
    ws_out = np.zeros((t_count, ts.n, ts.n_classes))
    sig_out = np.zeros(t_count)
    tau_out = np.zeros(t_count)
    theta_out = np.zeros(t_count)
    accept_z = 0
    accept_theta = 0
    trace_rows = []
    kept = 0
    for sweep in range(1, schedule.m1 + 1):
        latent, acc = mh_update_z(latent, coef, sigma2, ws, ts, hyper, rng)
        accept_z += acc
        if sample_theta:
            theta, ws, ok = mh_update_theta(latent, coef, ws, ts, hyper, tau, rng)
            accept_theta += int(ok)
        sigma2 = draw_sigma2(latent, ws, hyper, tau, rng, fast=fast_linalg)
        coef = draw_betas(latent, ws, sigma2, tau, hyper.eta, rng, fast=fast_linalg)
        tau = draw_tau(coef, ws, sigma2, hyper, rng)
        if sweep > schedule.m2 and (sweep - schedule.m2) % schedule.m == 0:
            w0s[kept] = coef.w0
            ws_out[kept] = coef.W
            sig_out[kept] = sigma2
            tau_out[kept] = tau
            theta_out[kept] = theta
            if trace_path is not None:
                loglik = -neg_log_likelihood(training_decision_values(coef, ws.kernel), ts)
                trace_rows.append((sweep, sigma2, tau, theta, loglik))
            kept += 1
    if trace_path is not None:
        with open(trace_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sweep", "sigma2", "tau", "theta", "log_likelihood"])
            writer.writerows(trace_rows)
    return PosteriorSamples(
        w0=w0s, W=ws_out, sigma2=sig_out, tau=tau_out, theta=theta_out,
        accept_z=accept_z, total_z=schedule.m1 * n_free,
        accept_theta=accept_theta,
        total_theta=schedule.m1 if sample_theta else 0,
    )
