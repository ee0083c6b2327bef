"""Prior-aided EM with Bayesian tempering.

The engine alternates a tempered E-step, which scores each candidate
source by a Laplace-approximated relevant marginal against a null
density and corrects the prior in logit space, with an M-step that
blends source MLEs into the target estimate. Two M-step variants are
provided: an exact precision-weighted blend that reuses Hessians frozen
at the MLEs, and a small-spread surrogate that reduces to a sample-size
weighted average. Convergence is judged on the weight vector.

All per-source summaries (MLE, Hessian at the MLE, size, cross
log-likelihoods) are computed once up front and never mutated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, logit, logsumexp

from .errors import (
    DegenerateNullError,
    InsufficientDataError,
    InvalidConfigurationError,
    NonFiniteLikelihoodError,
    SingularFitError,
)
from .likelihood import Dataset, LikelihoodFamily, clamp_psd

__all__ = [
    "WEIGHT_CLAMP",
    "NullSpec",
    "EmConfig",
    "SufficientStats",
    "EmState",
    "EmRunReport",
    "build_sufficient_stats",
    "relevant_marginal_loglik",
    "null_loglik",
    "tempering_schedule",
    "e_step",
    "m_step_exact",
    "m_step_surrogate",
    "run_em",
    "write_em_report",
]

# weights are clamped to [WEIGHT_CLAMP, 1 - WEIGHT_CLAMP] before any
# logit-space arithmetic so saturation cannot produce infinities
WEIGHT_CLAMP = 1e-12

VARIANTS = ("exact_hessian_reuse", "small_tau_surrogate")
TEMPERING_MODES = ("trace_exact", "fisher_ratio")
NULL_KINDS = ("empirical_bayes_mixture", "parametric_pooled", "fixed")


@dataclass(frozen=True)
class NullSpec:
    """How the irrelevant-source density is scored.

    ``empirical_bayes_mixture`` scores dataset k under the mixture of
    the other sources' fitted models, down-weighted by their current
    relevance; ``parametric_pooled`` scores it under a single model fit
    to all sources pooled; ``fixed`` looks values up from a supplied
    per-source table.
    """

    kind: str = "empirical_bayes_mixture"
    table: Mapping[int, float] | None = None

    def __post_init__(self):
        if self.kind not in NULL_KINDS:
            raise InvalidConfigurationError(
                f"unknown null kind {self.kind!r}; expected one of {NULL_KINDS}",
                key="null_spec.kind",
            )
        if self.kind == "fixed":
            if self.table is None:
                raise InvalidConfigurationError(
                    "fixed null requires a per-source table",
                    key="null_spec.table",
                )
            # sequences are read as values for sources 1..K in order
            if not isinstance(self.table, Mapping):
                seq = tuple(float(v) for v in self.table)
                object.__setattr__(
                    self, "table", {k + 1: v for k, v in enumerate(seq)}
                )
            else:
                object.__setattr__(
                    self,
                    "table",
                    {int(k): float(v) for k, v in self.table.items()},
                )


@dataclass(frozen=True)
class EmConfig:
    """Knobs for one EM run.

    tau is the relevant-cluster spread in parameter units; nu the
    tempering rate per iteration. When ``tempering_mode`` is left unset
    it follows the variant: trace_exact for the exact blend,
    fisher_ratio for the surrogate.
    """

    tau: float = 0.0
    nu: float = 0.05
    variant: str = "exact_hessian_reuse"
    null_spec: NullSpec = field(default_factory=NullSpec)
    max_iters: int = 1000
    tol: float = 1e-3
    patience: int = 5
    tempering_mode: str | None = None
    init_at_target_mle: bool = False

    def __post_init__(self):
        if not self.tau >= 0:
            raise InvalidConfigurationError("tau must be >= 0", key="tau")
        if not self.nu > 0:
            raise InvalidConfigurationError("nu must be > 0", key="nu")
        if self.variant not in VARIANTS:
            raise InvalidConfigurationError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}",
                key="variant",
            )
        if not isinstance(self.null_spec, NullSpec):
            raise InvalidConfigurationError(
                "null_spec must be a NullSpec", key="null_spec"
            )
        if int(self.max_iters) < 1:
            raise InvalidConfigurationError(
                "max_iters must be a positive integer", key="max_iters"
            )
        if not self.tol > 0:
            raise InvalidConfigurationError("tol must be > 0", key="tol")
        if int(self.patience) < 1:
            raise InvalidConfigurationError(
                "patience must be a positive integer", key="patience"
            )
        if self.tempering_mode is None:
            resolved = (
                "trace_exact"
                if self.variant == "exact_hessian_reuse"
                else "fisher_ratio"
            )
            object.__setattr__(self, "tempering_mode", resolved)
        if self.tempering_mode not in TEMPERING_MODES:
            raise InvalidConfigurationError(
                f"unknown tempering_mode {self.tempering_mode!r}; "
                f"expected one of {TEMPERING_MODES}",
                key="tempering_mode",
            )


class SufficientStats:
    """Per-dataset summaries computed once and reused across iterations.

    Index 0 is the target; 1..K are the candidate sources. Holds each
    dataset's MLE, PSD Hessian at the MLE, size, and the cross
    log-likelihood table loglik(theta_hat_j; D_k) needed by the
    mixture null. Arrays are frozen after construction.
    """

    def __init__(
        self,
        model: LikelihoodFamily,
        datasets: Sequence[Dataset],
        theta_hat: np.ndarray,
        hessians: np.ndarray,
        sizes: np.ndarray,
        crossloglik: np.ndarray,
    ):
        self.model = model
        self.datasets = tuple(datasets)
        self.theta_hat = theta_hat
        self.hessians = hessians
        self.sizes = sizes
        self.crossloglik = crossloglik
        for arr in (self.theta_hat, self.hessians, self.sizes, self.crossloglik):
            arr.setflags(write=False)
        self._pooled_theta: np.ndarray | None = None

    @property
    def n_sources(self) -> int:
        return len(self.datasets) - 1

    @property
    def dim(self) -> int:
        return self.theta_hat.shape[1]

    def per_sample_loglik(self, k: int, theta: np.ndarray) -> np.ndarray:
        """Per-observation log-likelihood vector for dataset k."""
        data = self.datasets[k]
        return np.array(
            [self.model.per_sample_loglik(theta, row) for row in data.points]
        )

    def pooled_theta(self) -> np.ndarray:
        """MLE on the concatenation of all source datasets, cached."""
        if self._pooled_theta is None:
            pooled = Dataset.concat(self.datasets[1:])
            theta = np.asarray(self.model.mle(pooled), dtype=float)
            theta.setflags(write=False)
            self._pooled_theta = theta
        return self._pooled_theta


def build_sufficient_stats(
    model: LikelihoodFamily, datasets: Sequence[Dataset]
) -> SufficientStats:
    """Fit every dataset once and tabulate the reusable summaries."""
    datasets = [d if isinstance(d, Dataset) else Dataset(d) for d in datasets]
    if len(datasets) < 2:
        raise InsufficientDataError("need a target dataset and at least one source")
    if len(datasets[0]) == 0:
        raise InsufficientDataError("target dataset is empty")
    n = len(datasets)
    theta_hat = np.empty((n, model.dim))
    hessians = np.empty((n, model.dim, model.dim))
    sizes = np.empty(n, dtype=int)
    for k, data in enumerate(datasets):
        theta = np.asarray(model.mle(data), dtype=float)
        theta_hat[k] = theta
        hessians[k] = clamp_psd(model.hessian(theta, data))
        sizes[k] = len(data)
    crossloglik = np.empty((n, n))
    for j in range(n):
        for k in range(n):
            crossloglik[j, k] = model.loglik(theta_hat[j], datasets[k])
    return SufficientStats(model, datasets, theta_hat, hessians, sizes, crossloglik)


@dataclass
class EmState:
    """Mutable snapshot of the EM iterate."""

    theta: np.ndarray
    weights: np.ndarray
    t: int
    beta: np.ndarray
    history: list = field(default_factory=list)


@dataclass
class EmRunReport:
    """Trajectory and convergence status of one run.

    History arrays have one row per iteration counter value, starting
    at t = 0 (prior weights, initial theta). Weight columns follow the
    kept sources in their original order; indices of sources dropped
    for being empty are listed separately.
    """

    converged: bool
    iterations: int
    config: EmConfig
    weight_history: np.ndarray
    theta_history: np.ndarray
    beta_history: np.ndarray
    delta_w_history: np.ndarray
    dropped_sources: tuple[int, ...] = ()


def relevant_marginal_loglik(
    model: LikelihoodFamily, data: Dataset, theta: np.ndarray, tau: float
) -> float:
    """Laplace-approximated log marginal of a dataset near theta.

    Integrates the likelihood against an isotropic Gaussian of spread
    tau centered at theta, using the curvature at theta:

        loglik + (tau^2/2) g' (I + tau^2 H)^{-1} g
               - (1/2) logdet(I + tau^2 H)

    At tau = 0 the plain log-likelihood is returned directly, without
    forming the gradient or Hessian.
    """
    if not tau >= 0:
        raise InvalidConfigurationError("tau must be >= 0", key="tau")
    value = float(model.loglik(theta, data))
    if not np.isfinite(value):
        raise NonFiniteLikelihoodError("log-likelihood is not finite")
    if tau == 0:
        return value
    g = model.gradient(theta, data)
    h = clamp_psd(model.hessian(theta, data))
    a = np.eye(model.dim) + tau**2 * h
    factor = cho_factor(a)
    quad = 0.5 * tau**2 * float(g @ cho_solve(factor, g))
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    out = value + quad - 0.5 * logdet
    if not np.isfinite(out):
        raise NonFiniteLikelihoodError("marginal log-likelihood is not finite")
    return out


def null_loglik(
    null_spec: NullSpec,
    k: int,
    stats: SufficientStats,
    weights_prev: np.ndarray,
) -> float:
    """Log-density of dataset k under the irrelevance hypothesis.

    The mixture form averages the other sources' fitted models with
    responsibilities (1 - w_j) lagged from the previous iteration,
    evaluated with a log-sum-exp; k indexes sources from 1.
    """
    n_sources = stats.n_sources
    if not 1 <= k <= n_sources:
        raise InvalidConfigurationError(f"source index {k} out of range", key="k")
    if null_spec.kind == "fixed":
        if k not in null_spec.table:
            raise InvalidConfigurationError(
                f"fixed null table has no entry for source {k}",
                key="null_spec.table",
            )
        return float(null_spec.table[k])
    if null_spec.kind == "parametric_pooled":
        return float(stats.model.loglik(stats.pooled_theta(), stats.datasets[k]))
    if n_sources < 2:
        raise InvalidConfigurationError(
            "the mixture null needs at least two sources", key="null_spec.kind"
        )
    weights_prev = np.asarray(weights_prev, dtype=float)
    others = [j for j in range(1, n_sources + 1) if j != k]
    survival = 1.0 - weights_prev[[j - 1 for j in others]]
    if np.all(survival <= 0.0):
        raise DegenerateNullError(
            f"every mixture component for source {k} has zero responsibility; "
            "fall back to the parametric_pooled null"
        )
    with np.errstate(divide="ignore"):
        terms = np.log(survival) + stats.crossloglik[others, k]
    value = float(logsumexp(terms) - np.log(n_sources - 1))
    if not np.isfinite(value):
        raise DegenerateNullError(
            f"mixture null for source {k} is degenerate; "
            "fall back to the parametric_pooled null"
        )
    return value


def tempering_schedule(
    t: int, stats: SufficientStats, mode: str, nu: float
) -> np.ndarray:
    """Per-source tempering multipliers beta_k at iteration t.

    beta_k = (1 - exp(-nu t)) / eps_k with eps_k^2 the relative
    information of source k against the target: Tr(H0^{-1} H_k) in
    trace_exact mode, d N_k / N0 in fisher_ratio mode. A singular
    target Hessian downgrades trace_exact to fisher_ratio with a
    warning.
    """
    if t < 0:
        raise InvalidConfigurationError("t must be >= 0", key="t")
    if mode not in TEMPERING_MODES:
        raise InvalidConfigurationError(
            f"unknown tempering_mode {mode!r}", key="tempering_mode"
        )
    n_sources = stats.n_sources
    ramp = -np.expm1(-nu * t)
    if ramp == 0.0:
        return np.zeros(n_sources)
    eps_sq = np.empty(n_sources)
    if mode == "trace_exact":
        try:
            factor = cho_factor(stats.hessians[0])
            for k in range(1, n_sources + 1):
                eps_sq[k - 1] = np.trace(cho_solve(factor, stats.hessians[k]))
        except np.linalg.LinAlgError:
            warnings.warn(
                "target Hessian is singular; tempering falls back to "
                "the fisher_ratio scale",
                RuntimeWarning,
                stacklevel=2,
            )
            mode = "fisher_ratio"
    if mode == "fisher_ratio":
        eps_sq = stats.dim * stats.sizes[1:] / stats.sizes[0]
    eps = np.sqrt(np.maximum(eps_sq, 0.0))
    eps = np.maximum(eps, 1e-12)
    return ramp / eps


def e_step(
    state: EmState, stats: SufficientStats, pi: np.ndarray, config: EmConfig
) -> np.ndarray:
    """Tempered relevance weights for the current iterate.

    w_k = sigmoid(beta_k [rel_k - null_k] + logit(pi_k)), where rel_k
    is the relevant marginal of dataset k at the current theta and
    null_k the irrelevance score. With beta identically zero (t = 0)
    the prior is returned exactly and no likelihood is evaluated.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (stats.n_sources,):
        raise InvalidConfigurationError(
            f"pi must have one entry per source, got shape {pi.shape}", key="pi"
        )
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise InvalidConfigurationError(
            "prior probabilities must lie strictly inside (0, 1)", key="pi"
        )
    beta = np.asarray(state.beta, dtype=float)
    if np.all(beta == 0.0):
        return pi.copy()
    clamped = np.clip(pi, WEIGHT_CLAMP, 1.0 - WEIGHT_CLAMP)
    prev = np.clip(
        np.asarray(state.weights, dtype=float), WEIGHT_CLAMP, 1.0 - WEIGHT_CLAMP
    )
    z = np.empty(stats.n_sources)
    for k in range(1, stats.n_sources + 1):
        try:
            rel = relevant_marginal_loglik(
                stats.model, stats.datasets[k], state.theta, config.tau
            )
        except NonFiniteLikelihoodError as exc:
            raise NonFiniteLikelihoodError(
                f"relevant marginal for source {k} is not finite",
                source_index=k,
            ) from exc
        null = null_loglik(config.null_spec, k, stats, prev)
        ratio = rel - null
        if not np.isfinite(ratio):
            raise NonFiniteLikelihoodError(
                f"log-ratio for source {k} is not finite", source_index=k
            )
        z[k - 1] = beta[k - 1] * ratio + logit(clamped[k - 1])
    return expit(z)


def _solve_with_jitter(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # escalate diagonal jitter only when the plain solve fails
    scale = 1.0 + abs(np.trace(lhs)) / lhs.shape[0]
    for jitter in (0.0, 1e-12, 1e-10, 1e-8, 1e-6):
        try:
            return np.linalg.solve(lhs + jitter * scale * np.eye(lhs.shape[0]), rhs)
        except np.linalg.LinAlgError:
            continue
    raise SingularFitError("blend system is singular even after jitter")


def m_step_exact(
    stats: SufficientStats, weights: np.ndarray, tau: float
) -> np.ndarray:
    """Precision-weighted blend of the target and source MLEs.

    Solves (H0 + sum_k w_k C_k) theta = H0 theta0 + sum_k w_k C_k theta_k
    with C_k = (I + tau^2 H_k)^{-1} H_k, which is the normal-equation
    form of the blend theta = (I + sum Lambda_k)^{-1}(theta0 +
    sum Lambda_k theta_k), Lambda_k = w_k H0^{-1} C_k, multiplied
    through by H0. One d x d solve, no explicit inverses.
    """
    weights = np.asarray(weights, dtype=float)
    d = stats.dim
    h0 = stats.hessians[0]
    lhs = h0.copy()
    rhs = h0 @ stats.theta_hat[0]
    eye = np.eye(d)
    for k in range(1, stats.n_sources + 1):
        hk = stats.hessians[k]
        if tau == 0:
            ck = hk
        else:
            ck = np.linalg.solve(eye + tau**2 * hk, hk)
            ck = 0.5 * (ck + ck.T)
        lhs = lhs + weights[k - 1] * ck
        rhs = rhs + weights[k - 1] * (ck @ stats.theta_hat[k])
    return _solve_with_jitter(lhs, rhs)


def m_step_surrogate(stats: SufficientStats, weights: np.ndarray) -> np.ndarray:
    """Sample-size weighted average of the target and source MLEs."""
    weights = np.asarray(weights, dtype=float)
    n0 = stats.sizes[0]
    if n0 < 1:
        raise InsufficientDataError("target dataset is empty")
    numer = n0 * stats.theta_hat[0].copy()
    denom = float(n0)
    for k in range(1, stats.n_sources + 1):
        mass = weights[k - 1] * stats.sizes[k]
        numer += mass * stats.theta_hat[k]
        denom += mass
    return numer / denom


def run_em(
    datasets: Sequence[Dataset],
    model: LikelihoodFamily,
    pi: Sequence[float],
    config: EmConfig,
) -> tuple[EmState, EmRunReport]:
    """Full tempered EM loop over a target and its candidate sources.

    ``datasets[0]`` is the target, the rest are sources aligned with
    ``pi``. Sufficient statistics are computed once; each iteration
    refreshes the tempering multipliers, re-scores the weights, and
    blends a new theta. Convergence is declared when the weight vector
    moves less than ``config.tol`` in the max norm for
    ``config.patience`` consecutive iterations; hitting max_iters is
    reported, not raised.
    """
    datasets = list(datasets)
    if len(datasets) < 2:
        raise InsufficientDataError("need a target dataset and at least one source")
    if len(datasets[0]) == 0:
        raise InsufficientDataError("target dataset is empty")
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (len(datasets) - 1,):
        raise InvalidConfigurationError(
            "pi must have one entry per source", key="pi"
        )

    kept = [k for k in range(1, len(datasets)) if len(datasets[k]) > 0]
    dropped = tuple(k for k in range(1, len(datasets)) if len(datasets[k]) == 0)
    if dropped:
        warnings.warn(
            f"dropping empty source datasets {list(dropped)}",
            RuntimeWarning,
            stacklevel=2,
        )
    if not kept:
        raise InsufficientDataError("every source dataset is empty")

    if config.null_spec.kind == "fixed":
        missing = [
            k for k in range(1, len(datasets)) if k not in config.null_spec.table
        ]
        if missing:
            raise InvalidConfigurationError(
                f"fixed null table missing sources {missing}",
                key="null_spec.table",
            )
        if dropped:
            # dropping compacts source indices, so realign the table
            remapped = {
                new: config.null_spec.table[orig]
                for new, orig in enumerate(kept, start=1)
            }
            config = replace(config, null_spec=NullSpec("fixed", remapped))

    datasets = [datasets[0]] + [datasets[k] for k in kept]
    pi = pi[[k - 1 for k in kept]]

    if config.null_spec.kind == "empirical_bayes_mixture" and len(kept) < 2:
        raise InvalidConfigurationError(
            "the mixture null needs at least two sources; "
            "use parametric_pooled or fixed",
            key="null_spec.kind",
        )

    stats = build_sufficient_stats(model, datasets)
    n_sources = stats.n_sources
    theta0 = (
        stats.theta_hat[0].copy()
        if config.init_at_target_mle
        else np.zeros(stats.dim)
    )
    state = EmState(
        theta=theta0,
        weights=pi.copy(),
        t=0,
        beta=np.zeros(n_sources),
    )
    state.weights = e_step(state, stats, pi, config)

    weight_rows = [state.weights.copy()]
    theta_rows = [state.theta.copy()]
    beta_rows = [state.beta.copy()]
    delta_rows = [np.inf]
    state.history.append(
        {
            "t": 0,
            "beta": state.beta.copy(),
            "weights": state.weights.copy(),
            "theta": state.theta.copy(),
        }
    )

    converged = False
    streak = 0
    iterations = 0
    for t in range(1, config.max_iters + 1):
        state.t = t
        state.beta = tempering_schedule(t, stats, config.tempering_mode, config.nu)
        new_weights = e_step(state, stats, pi, config)
        delta = float(np.max(np.abs(new_weights - state.weights)))
        state.weights = new_weights
        if config.variant == "exact_hessian_reuse":
            state.theta = m_step_exact(stats, state.weights, config.tau)
        else:
            state.theta = m_step_surrogate(stats, state.weights)
        iterations = t
        weight_rows.append(state.weights.copy())
        theta_rows.append(state.theta.copy())
        beta_rows.append(state.beta.copy())
        delta_rows.append(delta)
        state.history.append(
            {
                "t": t,
                "beta": state.beta.copy(),
                "weights": state.weights.copy(),
                "theta": state.theta.copy(),
            }
        )
        streak = streak + 1 if delta <= config.tol else 0
        if streak >= config.patience:
            converged = True
            break

    report = EmRunReport(
        converged=converged,
        iterations=iterations,
        config=config,
        weight_history=np.array(weight_rows),
        theta_history=np.array(theta_rows),
        beta_history=np.array(beta_rows),
        delta_w_history=np.array(delta_rows),
        dropped_sources=dropped,
    )
    return state, report


def _config_echo(config: EmConfig) -> str:
    null = config.null_spec
    null_text = null.kind
    if null.kind == "fixed":
        null_text += f"[{len(null.table)} entries]"
    parts = [
        f"variant={config.variant}",
        f"tau={config.tau:.12g}",
        f"nu={config.nu:.12g}",
        f"null={null_text}",
        f"tempering_mode={config.tempering_mode}",
        f"max_iters={config.max_iters}",
        f"tol={config.tol:.12g}",
        f"patience={config.patience}",
        f"init_at_target_mle={config.init_at_target_mle}",
    ]
    return " ".join(parts)


def write_em_report(report: EmRunReport, path) -> None:
    """Write the run artifact: config echo plus one iteration per row."""
    n_iters, n_sources = report.weight_history.shape
    dim = report.theta_history.shape[1]
    lines = [
        "# em run report",
        f"# {_config_echo(report.config)}",
        f"# converged={str(report.converged).lower()} iterations={report.iterations}",
    ]
    if report.dropped_sources:
        lines.append(f"# dropped_sources={list(report.dropped_sources)}")
    header = (
        ["t"]
        + [f"beta_{k}" for k in range(1, n_sources + 1)]
        + [f"w_{k}" for k in range(1, n_sources + 1)]
        + [f"theta_{i}" for i in range(1, dim + 1)]
        + ["delta_w"]
    )
    lines.append("# columns: " + " ".join(header))
    for t in range(n_iters):
        row = [str(t)]
        row += [f"{v:.12g}" for v in report.beta_history[t]]
        row += [f"{v:.12g}" for v in report.weight_history[t]]
        row += [f"{v:.12g}" for v in report.theta_history[t]]
        row.append(f"{report.delta_w_history[t]:.12g}")
        lines.append(" ".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
