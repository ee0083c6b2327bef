"""Preference-elicited priors over candidate sources.

A judge is shown subgroups S of candidate sources plus an always-present
"none of these" null option and picks one winner per query.  Each source k
carries a worth alpha_k and the null carries alpha_0; the probability that
the judge picks option k from subgroup S is the conditional logit

    p(k | S) = exp(alpha_k) / (exp(alpha_0) + sum_{j in S} exp(alpha_j)).

Fitting the worths on a record set M = {(S_m, k_m)} minimizes the negative
log-likelihood plus a quadratic pull of every source worth toward
logit(p0); the null worth is never regularized.  The fitted per-source
prior is pi_k = sigmoid(alpha_k), read against the convention alpha_0 = 0.

File formats
------------
Records: one query per line, ``subgroup=1,4,7;choice=4`` (choice 0 means
the null won).  Prior files: a ``K=<int>`` header followed by either
``alpha_<k>=<float>`` lines for k = 0..K or ``pi_<k>=<float>`` lines for
k = 1..K.  Both are UTF-8 text.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit, logit

from .errors import (
    InvalidChoiceError,
    InvalidConfigurationError,
    OptimizationFailureError,
    ParseError,
)

__all__ = [
    "ChoiceRecord",
    "ElicitationSet",
    "WorthVector",
    "Lip",
    "choice_probability",
    "nll_objective",
    "fit_lip",
    "minimize_worths",
    "NewtonResult",
    "sample_subgroups",
    "simulated_judge",
    "simulate_elicitation",
    "drop_and_reindex",
    "read_records",
    "write_records",
]


@dataclass(frozen=True)
class ChoiceRecord:
    """One judged query: the subgroup shown and the winning option.

    ``subgroup`` holds distinct source indices in {1..K}, stored sorted
    ascending; ``choice`` is a member of the subgroup, or 0 for the null.
    """

    subgroup: tuple[int, ...]
    choice: int

    def __post_init__(self):
        sub = tuple(sorted(int(i) for i in self.subgroup))
        if len(sub) == 0:
            raise InvalidConfigurationError("subgroup must be nonempty")
        if len(set(sub)) != len(sub):
            raise InvalidConfigurationError(f"subgroup has repeated indices: {sub}")
        if any(i < 1 for i in sub):
            raise InvalidConfigurationError(f"source indices must be >= 1, got {sub}")
        ch = int(self.choice)
        if ch != 0 and ch not in sub:
            raise InvalidChoiceError(f"choice {ch} is not in subgroup {sub} or the null")
        object.__setattr__(self, "subgroup", sub)
        object.__setattr__(self, "choice", ch)


ElicitationSet = list  # list[ChoiceRecord]; the record set M


@dataclass(frozen=True)
class WorthVector:
    """Worths (alpha_0, alpha_1, ..., alpha_K); index 0 is the null."""

    alpha: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.alpha, dtype=float).reshape(-1)
        if arr.size < 1:
            raise InvalidConfigurationError("worth vector must include the null entry")
        object.__setattr__(self, "alpha", arr)

    @property
    def n_sources(self) -> int:
        return self.alpha.size - 1


@dataclass(frozen=True)
class Lip:
    """Per-source prior relevance probabilities pi_k = sigmoid(alpha_k).

    ``provenance`` records where the numbers came from: "fitted" (from
    records), "uniform" (every source at p0), or "file" (loaded).  When
    the full worth vector is known it is kept alongside so round trips
    preserve it.
    """

    pi: np.ndarray
    provenance: str
    alpha: np.ndarray | None = None

    _PROVENANCES = ("fitted", "uniform", "file")

    def __post_init__(self):
        arr = np.asarray(self.pi, dtype=float).reshape(-1)
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise InvalidConfigurationError("prior probabilities must lie strictly in (0, 1)")
        if self.provenance not in self._PROVENANCES:
            raise InvalidConfigurationError(
                f"provenance must be one of {self._PROVENANCES}, got {self.provenance!r}"
            )
        object.__setattr__(self, "pi", arr)
        if self.alpha is not None:
            al = np.asarray(self.alpha, dtype=float).reshape(-1)
            if al.size != arr.size + 1:
                raise InvalidConfigurationError("alpha must have one more entry than pi")
            object.__setattr__(self, "alpha", al)

    @property
    def n_sources(self) -> int:
        return self.pi.size

    @staticmethod
    def uniform(n_sources: int, p0: float) -> "Lip":
        if not (0.0 < p0 < 1.0):
            raise InvalidConfigurationError("p0 must lie strictly in (0, 1)")
        return Lip(np.full(n_sources, p0), "uniform")

    @staticmethod
    def from_worths(worths: WorthVector) -> "Lip":
        return Lip(expit(worths.alpha[1:]), "fitted", alpha=worths.alpha.copy())

    def write(self, path) -> None:
        lines = [f"K={self.n_sources}"]
        if self.alpha is not None:
            lines += [f"alpha_{k}={float(self.alpha[k])!r}" for k in range(self.alpha.size)]
        else:
            lines += [f"pi_{k + 1}={float(self.pi[k])!r}" for k in range(self.n_sources)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @staticmethod
    def read(path) -> "Lip":
        text = Path(path).read_text(encoding="utf-8")
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("K="):
            raise ParseError(f"{path}: first line must be 'K=<int>'", line_number=1)
        try:
            k = int(lines[0][2:])
        except ValueError as exc:
            raise ParseError(f"{path}: bad K header {lines[0]!r}", line_number=1) from exc
        alpha = {}
        pi = {}
        for lineno, line in enumerate(lines[1:], start=2):
            name, sep, value = line.partition("=")
            if not sep:
                raise ParseError(f"{path}: expected name=value on line {lineno}", lineno)
            try:
                val = float(value)
            except ValueError as exc:
                raise ParseError(f"{path}: bad float {value!r} on line {lineno}", lineno) from exc
            if name.startswith("alpha_"):
                alpha[int(name[6:])] = val
            elif name.startswith("pi_"):
                pi[int(name[3:])] = val
            else:
                raise ParseError(f"{path}: unknown entry {name!r} on line {lineno}", lineno)
        if alpha and pi:
            raise ParseError(f"{path}: mixes alpha_ and pi_ entries")
        if alpha:
            if sorted(alpha) != list(range(k + 1)):
                raise ParseError(f"{path}: need alpha_0..alpha_{k}, got {sorted(alpha)}")
            vec = np.array([alpha[i] for i in range(k + 1)])
            return Lip(expit(vec[1:]), "file", alpha=vec)
        if sorted(pi) != list(range(1, k + 1)):
            raise ParseError(f"{path}: need pi_1..pi_{k}, got {sorted(pi)}")
        return Lip(np.array([pi[i] for i in range(1, k + 1)]), "file")


# ---------------------------------------------------------------------------
# Choice model
# ---------------------------------------------------------------------------


def _option_indices(record: ChoiceRecord) -> np.ndarray:
    # option 0 (the null) always participates
    return np.array((0,) + record.subgroup, dtype=int)


def choice_probability(worths: WorthVector, subgroup, choice: int) -> float:
    """Probability the judge picks ``choice`` from ``subgroup`` plus null.

    The softmax is evaluated after subtracting the maximum participating
    worth, so worths of any magnitude are safe.
    """
    record = ChoiceRecord(tuple(subgroup), choice)
    if max(record.subgroup) > worths.n_sources:
        raise InvalidConfigurationError(
            f"subgroup {record.subgroup} references a source beyond K={worths.n_sources}"
        )
    opts = _option_indices(record)
    vals = worths.alpha[opts]
    shifted = np.exp(vals - vals.max())
    position = 0 if record.choice == 0 else opts.tolist().index(record.choice)
    return float(shifted[position] / shifted.sum())


def nll_objective(
    worths: WorthVector,
    records: Sequence[ChoiceRecord],
    p0: float = 0.01,
    eps: float = 0.1,
) -> tuple[float, np.ndarray]:
    """Regularized negative log-likelihood of the records, with gradient.

    Value: -sum_m log p(k_m | S_m) + eps * sum_{k>=1} (alpha_k - logit(p0))^2.
    The null worth alpha_0 carries no regularization.
    """
    if not (0.0 < p0 < 1.0):
        raise InvalidConfigurationError("p0 must lie strictly in (0, 1)")
    if eps < 0.0:
        raise InvalidConfigurationError("eps must be nonnegative")
    alpha = worths.alpha
    anchor = float(logit(p0))
    value = 0.0
    grad = np.zeros_like(alpha)
    for rec in records:
        if max(rec.subgroup) > worths.n_sources:
            raise InvalidConfigurationError(
                f"record subgroup {rec.subgroup} exceeds K={worths.n_sources}"
            )
        opts = _option_indices(rec)
        vals = alpha[opts]
        shift = vals.max()
        ex = np.exp(vals - shift)
        denom = ex.sum()
        probs = ex / denom
        value += math.log(denom) + shift - alpha[rec.choice]
        grad[opts] += probs
        grad[rec.choice] -= 1.0
    dev = alpha[1:] - anchor
    value += eps * float(dev @ dev)
    grad[1:] += 2.0 * eps * dev
    return value, grad


def _nll_hessian(
    worths: WorthVector, records: Sequence[ChoiceRecord], eps: float
) -> np.ndarray:
    alpha = worths.alpha
    hess = np.zeros((alpha.size, alpha.size))
    for rec in records:
        opts = _option_indices(rec)
        vals = alpha[opts]
        ex = np.exp(vals - vals.max())
        probs = ex / ex.sum()
        block = np.diag(probs) - np.outer(probs, probs)
        hess[np.ix_(opts, opts)] += block
    hess[1:, 1:] += 2.0 * eps * np.eye(alpha.size - 1)
    return hess


@dataclass(frozen=True)
class NewtonResult:
    worths: WorthVector
    objective: float
    gradient_norm: float
    iterations: int
    objective_trace: tuple[float, ...]


def minimize_worths(
    records: Sequence[ChoiceRecord],
    n_sources: int,
    p0: float = 0.01,
    eps: float = 0.1,
    tol: float = 1e-8,
    max_iters: int = 200,
) -> NewtonResult:
    """Damped Newton descent on the regularized choice likelihood.

    Starts every source worth at logit(p0) and the null worth at 0,
    takes Newton steps with a backtracking (Armijo) line search, and
    stops when the gradient infinity norm falls to ``tol``.  The
    objective is convex, so the trace is monotone nonincreasing.
    """
    alpha = np.concatenate(([0.0], np.full(n_sources, float(logit(p0)))))
    worths = WorthVector(alpha)
    value, grad = nll_objective(worths, records, p0, eps)
    trace = [value]
    for iteration in range(max_iters):
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= tol:
            return NewtonResult(worths, value, gnorm, iteration, tuple(trace))
        hess = _nll_hessian(worths, records, eps)
        # tiny ridge keeps the flat null direction solvable
        jitter = 1e-10 * (1.0 + float(np.trace(hess)) / hess.shape[0])
        try:
            step = np.linalg.solve(hess + jitter * np.eye(hess.shape[0]), -grad)
        except np.linalg.LinAlgError:
            step = -grad
        # cap the step so a flat valley (e.g. an unregularized null worth
        # on win-only records) is walked down until the gradient test
        # trips, instead of jumped past into sigmoid saturation
        longest = float(np.max(np.abs(step)))
        if longest > 10.0:
            step = step * (10.0 / longest)
        slope = float(grad @ step)
        if slope >= 0.0:  # not a descent direction; fall back to steepest descent
            step = -grad
            slope = float(grad @ step)
        # near the optimum the Armijo decrease sinks below the float
        # resolution of the objective; tolerate that much noise so the
        # full Newton step still lands and polishes the gradient
        noise = 64.0 * np.finfo(float).eps * max(1.0, abs(value))
        scale = 1.0
        for _ in range(60):
            cand = WorthVector(worths.alpha + scale * step)
            cand_value, cand_grad = nll_objective(cand, records, p0, eps)
            if cand_value <= value + 1e-4 * scale * slope + noise:
                break
            scale *= 0.5
        worths, value, grad = cand, cand_value, cand_grad
        trace.append(value)
    gnorm = float(np.max(np.abs(grad)))
    if gnorm <= tol:
        return NewtonResult(worths, value, gnorm, max_iters, tuple(trace))
    raise OptimizationFailureError(
        f"no convergence after {max_iters} iterations (|grad|_inf={gnorm:.3e})",
        last_iterate=worths,
    )


def fit_lip(
    records: Sequence[ChoiceRecord],
    n_sources: int,
    p0: float = 0.01,
    eps: float = 0.1,
    tol: float = 1e-8,
    max_iters: int = 200,
) -> tuple[WorthVector, Lip]:
    """Fit worths to judged records and read off the per-source prior.

    With zero records the initializer is already stationary, so the
    returned prior is exactly p0 for every source.
    """
    if n_sources < 1:
        raise InvalidConfigurationError("need at least one source")
    result = minimize_worths(records, n_sources, p0=p0, eps=eps, tol=tol, max_iters=max_iters)
    return result.worths, Lip.from_worths(result.worths)


# ---------------------------------------------------------------------------
# Query sampling and simulated judging
# ---------------------------------------------------------------------------


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_subgroups(
    n_sources: int, sizes: Sequence[int], count: int, rng
) -> list[tuple[int, ...]]:
    """Draw ``count`` subgroups: size uniform over ``sizes``, members
    distinct and uniform over {1..K}."""
    sizes = sorted(set(int(s) for s in sizes))
    if not sizes or sizes[0] < 1:
        raise InvalidConfigurationError("subgroup sizes must be positive")
    if sizes[-1] > n_sources:
        raise InvalidConfigurationError(
            f"largest subgroup size {sizes[-1]} exceeds K={n_sources}"
        )
    gen = _as_rng(rng)
    out = []
    for _ in range(count):
        size = sizes[gen.integers(len(sizes))]
        members = gen.choice(n_sources, size=size, replace=False) + 1
        out.append(tuple(sorted(int(i) for i in members)))
    return out


def simulated_judge(true_worths: WorthVector, subgroup, rng) -> int:
    """Sample a choice from the model's own probabilities at known worths."""
    gen = _as_rng(rng)
    options = [0] + sorted(int(i) for i in subgroup)
    probs = np.array([choice_probability(true_worths, subgroup, c) for c in options])
    probs = probs / probs.sum()
    return int(options[gen.choice(len(options), p=probs)])


def simulate_elicitation(
    true_worths: WorthVector,
    sizes: Sequence[int],
    count: int,
    rng,
) -> list[ChoiceRecord]:
    """Sample subgroups and judge each one with the simulated judge."""
    gen = _as_rng(rng)
    subgroups = sample_subgroups(true_worths.n_sources, sizes, count, gen)
    return [ChoiceRecord(s, simulated_judge(true_worths, s, gen)) for s in subgroups]


def drop_and_reindex(
    records: Iterable[ChoiceRecord], excluded: int, n_sources: int
) -> list[ChoiceRecord]:
    """Remove queries mentioning one source and compact the index space.

    Drops every record whose subgroup contains ``excluded`` and renames
    the surviving indices onto 1..K-1 by ascending original index.  Used
    when one candidate is promoted to target and the remaining responses
    are reused for the source pool.
    """
    if not (1 <= excluded <= n_sources):
        raise InvalidConfigurationError(f"excluded index {excluded} outside 1..{n_sources}")
    remap = {}
    new = 1
    for orig in range(1, n_sources + 1):
        if orig == excluded:
            continue
        remap[orig] = new
        new += 1
    out = []
    for rec in records:
        if excluded in rec.subgroup:
            continue
        sub = tuple(remap[i] for i in rec.subgroup)
        choice = 0 if rec.choice == 0 else remap[rec.choice]
        out.append(ChoiceRecord(sub, choice))
    return out


# ---------------------------------------------------------------------------
# Records file round trip
# ---------------------------------------------------------------------------


def write_records(path, records: Iterable[ChoiceRecord]) -> None:
    lines = [
        "subgroup=" + ",".join(str(i) for i in rec.subgroup) + f";choice={rec.choice}"
        for rec in records
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_records(path) -> list[ChoiceRecord]:
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            parts = line.split(";")
            if len(parts) != 2:
                raise ValueError("expected 'subgroup=...;choice=...'")
            sub_part, choice_part = parts
            if not sub_part.startswith("subgroup=") or not choice_part.startswith("choice="):
                raise ValueError("missing subgroup=/choice= fields")
            subgroup = tuple(int(i) for i in sub_part[len("subgroup="):].split(","))
            choice = int(choice_part[len("choice="):])
            out.append(ChoiceRecord(subgroup, choice))
        except (ValueError, InvalidConfigurationError, InvalidChoiceError) as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}", line_number=lineno) from exc
    return out
