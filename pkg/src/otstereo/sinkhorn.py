"""Scaling iterations for entropic transport on one scanline.

The solver alternates diagonal scalings against the Gibbs kernel.
Both a plain-domain and a log-domain variant are provided; they share
the same fixed point, but only the log domain survives small blur
values where kernel entries underflow. The unbalanced variant reads
the even and odd iterate limits, which differ exactly by the mass
quotient of the inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyScanlineError,
    InfeasibleProjectionError,
    NumericalUnderflowError,
    WrongPathError,
)
from .kernel import GibbsKernel
from .measures import ScanlineMeasure

STOP_CONVERGED = "converged"
STOP_MAX_ITERATIONS = "max-iterations"


@dataclass(frozen=True)
class SinkhornConfig:
    """Knobs for one scaling solve.

    stop_tolerance > 0 enables the early stop on the summed Hilbert
    step of the two scaling vectors; zero reproduces a fixed
    iteration count. epsilon must match the kernel the solve runs
    against.
    """

    epsilon: float
    max_iterations: int = 1000
    stop_tolerance: float = 0.0
    log_domain: bool = False

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.stop_tolerance < 0.0:
            raise ValueError("stop_tolerance must be nonnegative")


@dataclass(frozen=True)
class TransportPlan:
    """Mass assignment between source columns (rows) and target columns."""

    entries: np.ndarray
    row_marginal: np.ndarray = field(init=False)
    col_marginal: np.ndarray = field(init=False)
    mass: float = field(init=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "row_marginal", entries.sum(axis=1))
        object.__setattr__(self, "col_marginal", entries.sum(axis=0))
        object.__setattr__(self, "mass", float(entries.sum()))


@dataclass(frozen=True)
class ScalingVectors:
    """Diagonal scalings that reproduce a plan against the kernel.

    In log mode u and v hold logarithms, with -inf marking columns
    outside the support.
    """

    u: np.ndarray
    v: np.ndarray
    log_domain: bool = False

    def reconstruct(self, kernel: GibbsKernel) -> np.ndarray:
        if self.log_domain:
            with np.errstate(invalid="ignore"):
                exponent = self.u[:, None] + kernel.log_entries + self.v[None, :]
            # -inf + -inf stays -inf; nan can only come from inf - inf
            exponent = np.where(np.isnan(exponent), -np.inf, exponent)
            return np.exp(exponent)
        return self.u[:, None] * kernel.entries * self.v[None, :]


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-solve diagnostics.

    hilbert_u and hilbert_v hold the Hilbert-metric step of each
    update, measured on the positive support. marginal_violation is
    the max-norm gap between the returned plan's column sums and the
    target measure.
    """

    iterations: int
    hilbert_u: list[float]
    hilbert_v: list[float]
    marginal_violation: float
    lam: float
    stop_reason: str


@dataclass(frozen=True)
class ShiftedLimits:
    """Even and odd limits of the unbalanced scaling iteration."""

    even: TransportPlan
    odd: TransportPlan
    report: ConvergenceReport


@dataclass(frozen=True)
class IterationRecord:
    """Convergence probes for one iteration of a traced solve.

    u_error and profile_error compare against a caller-supplied
    reference (typically a longer run) and are NaN when no reference
    was given.
    """

    iteration: int
    hilbert_u_step: float
    hilbert_v_step: float
    u_error: float
    profile_error: float


def _as_values(measure) -> np.ndarray:
    if isinstance(measure, ScanlineMeasure):
        return measure.values
    return np.asarray(measure, dtype=float)


def _as_entries(plan) -> np.ndarray:
    if isinstance(plan, TransportPlan):
        return plan.entries
    return np.asarray(plan, dtype=float)


def _oscillation(delta: np.ndarray) -> float:
    """Variation seminorm of a finite vector; zero when empty."""
    if delta.size == 0:
        return 0.0
    return float(delta.max() - delta.min())


def _check_inputs(nu0, nu1, kernel: GibbsKernel):
    a = _as_values(nu0)
    b = _as_values(nu1)
    if a.shape != (kernel.d,) or b.shape != (kernel.d,):
        raise DimensionMismatchError(
            f"measures of length {a.shape} and {b.shape} against a kernel of width {kernel.d}"
        )
    if a.sum() <= 0.0 or b.sum() <= 0.0:
        raise EmptyScanlineError("both scanlines must carry positive mass")
    if np.any(a < 0.0) or np.any(b < 0.0):
        raise ValueError("measures must be nonnegative")
    return a, b


def _log_kernel_block(support0: np.ndarray, support1: np.ndarray, epsilon: float) -> np.ndarray:
    diff = support0[:, None].astype(float) - support1[None, :].astype(float)
    return -(diff * diff) / epsilon


def _iterate_plain(a_sub, K_sub, b_sub, drift):
    """Yield (u, v_prev, v_raw, v, du, dv) per plain-domain iteration.

    v is rescaled by the mass quotient after every update so that the
    vectors stay bounded for unbalanced inputs; the rescale cancels
    out of every plan built from matching iterates.
    """
    u = np.ones_like(a_sub)
    v = np.ones_like(b_sub)
    while True:
        Kv = K_sub @ v
        if not np.all(Kv > 0.0):
            raise NumericalUnderflowError(
                "kernel application underflowed to zero; rerun with log_domain=True"
            )
        u_new = a_sub / Kv
        KTu = K_sub.T @ u_new
        if not np.all(KTu > 0.0):
            raise NumericalUnderflowError(
                "kernel application underflowed to zero; rerun with log_domain=True"
            )
        v_raw = b_sub / KTu
        v_new = v_raw * drift
        du = _oscillation(np.log(u_new) - np.log(u))
        dv = _oscillation(np.log(v_new) - np.log(v))
        yield u_new, v, v_raw, v_new, du, dv
        u, v = u_new, v_new


def _lse(matrix: np.ndarray, axis: int) -> np.ndarray:
    """Log-sum-exp reduction with max shift; inputs are finite."""
    shift = matrix.max(axis=axis, keepdims=True)
    total = np.exp(matrix - shift).sum(axis=axis)
    return shift.reshape(total.shape) + np.log(total)

def _iterate_log(la_sub, logK_sub, lb_sub, log_drift):
    """Log-domain twin of _iterate_plain, yielding log vectors."""
    lu = np.zeros_like(la_sub)
    lv = np.zeros_like(lb_sub)
    while True:
        lu_new = la_sub - _lse(logK_sub + lv[None, :], axis=1)
        lv_raw = lb_sub - _lse(logK_sub + lu_new[:, None], axis=0)
        lv_new = lv_raw + log_drift
        du = _oscillation(lu_new - lu)
        dv = _oscillation(lv_new - lv)
        yield lu_new, lv, lv_raw, lv_new, du, dv
        lu, lv = lu_new, lv_new


def _scatter_plan(block: np.ndarray, support0, support1, d: int) -> TransportPlan:
    entries = np.zeros((d, d))
    entries[np.ix_(support0, support1)] = block
    return TransportPlan(entries)


@dataclass
class _Prepared:
    """Support-restricted problem plus a live iteration generator."""

    a: np.ndarray
    b: np.ndarray
    support0: np.ndarray
    support1: np.ndarray
    block: np.ndarray
    steps: object
    log_domain: bool


def _prepare(nu0, nu1, kernel: GibbsKernel, config: SinkhornConfig, log_domain: bool) -> _Prepared:
    a, b = _check_inputs(nu0, nu1, kernel)
    if abs(config.epsilon - kernel.epsilon) > 1e-12 * max(config.epsilon, kernel.epsilon):
        raise ValueError(
            f"config epsilon {config.epsilon} does not match kernel epsilon {kernel.epsilon}"
        )
    support0 = np.flatnonzero(a > 0.0)
    support1 = np.flatnonzero(b > 0.0)
    a_sub = a[support0]
    b_sub = b[support1]
    if log_domain:
        block = _log_kernel_block(support0, support1, kernel.epsilon)
        log_drift = np.log(a_sub.sum()) - np.log(b_sub.sum())
        steps = _iterate_log(np.log(a_sub), block, np.log(b_sub), log_drift)
    else:
        block = kernel.entries[np.ix_(support0, support1)]
        drift = a_sub.sum() / b_sub.sum()
        steps = _iterate_plain(a_sub, block, b_sub, drift)
    return _Prepared(
        a=a, b=b, support0=support0, support1=support1,
        block=block, steps=steps, log_domain=log_domain,
    )


def _run(nu0, nu1, kernel: GibbsKernel, config: SinkhornConfig, log_domain: bool):
    """Drive the scaling iteration and package plans plus report.

    Returns (odd_plan, even_plan, vectors, report); the odd plan pairs
    the final u with the previous v, so its row marginal is exactly
    nu0, while the even plan's column marginal is exactly nu1.
    """
    prep = _prepare(nu0, nu1, kernel, config, log_domain)
    b = prep.b
    support0, support1 = prep.support0, prep.support1
    steps = prep.steps
    d = kernel.d

    hilbert_u: list[float] = []
    hilbert_v: list[float] = []
    stop_reason = STOP_MAX_ITERATIONS
    u = v_prev = v_raw = None
    iterations = 0
    for u, v_prev, v_raw, v, du, dv in steps:
        iterations += 1
        hilbert_u.append(du)
        hilbert_v.append(dv)
        if config.stop_tolerance > 0.0 and du + dv <= config.stop_tolerance:
            stop_reason = STOP_CONVERGED
            break
        if iterations >= config.max_iterations:
            break

    if log_domain:
        odd_block = np.exp(u[:, None] + prep.block + v_prev[None, :])
        even_block = np.exp(u[:, None] + prep.block + v_raw[None, :])
        u_full = np.full(d, -np.inf)
        v_full = np.full(d, -np.inf)
    else:
        odd_block = u[:, None] * prep.block * v_prev[None, :]
        even_block = u[:, None] * prep.block * v_raw[None, :]
        u_full = np.zeros(d)
        v_full = np.zeros(d)
    u_full[support0] = u
    v_full[support1] = v_prev
    odd = _scatter_plan(odd_block, support0, support1, d)
    even = _scatter_plan(even_block, support0, support1, d)
    violation = float(np.abs(odd.col_marginal - b).max())
    report = ConvergenceReport(
        iterations=iterations,
        hilbert_u=hilbert_u,
        hilbert_v=hilbert_v,
        marginal_violation=violation,
        lam=kernel.lam,
        stop_reason=stop_reason,
    )
    vectors = ScalingVectors(u=u_full, v=v_full, log_domain=log_domain)
    return odd, even, vectors, report


def sinkhorn(nu0, nu1, kernel: GibbsKernel, config: SinkhornConfig):
    """Solve the balanced scanline matching by diagonal scaling.

    Args:
        nu0: source measure, the rows of the returned plan.
        nu1: target measure, the columns.
        kernel: Gibbs kernel built for the same width and epsilon.
        config: iteration budget and stopping rule; its log_domain
            flag dispatches to sinkhorn_log.

    Returns:
        (TransportPlan, ScalingVectors, ConvergenceReport). The plan
        is the odd iterate, whose row marginal equals nu0 exactly;
        the report records how far its column marginal is from nu1.
    """
    if config.log_domain:
        return sinkhorn_log(nu0, nu1, kernel, config)
    odd, _, vectors, report = _run(nu0, nu1, kernel, config, log_domain=False)
    return odd, vectors, report


def sinkhorn_log(nu0, nu1, kernel: GibbsKernel, config: SinkhornConfig):
    """Log-domain scaling solve; same fixed point as sinkhorn.

    Works entirely with exponents, so it tolerates epsilon values for
    which the plain kernel underflows. Returns the same triple as
    sinkhorn, with log-domain ScalingVectors.
    """
    odd, _, vectors, report = _run(nu0, nu1, kernel, config, log_domain=True)
    return odd, vectors, report


def shifted_sinkhorn(nu0, nu1, kernel: GibbsKernel, config: SinkhornConfig) -> ShiftedLimits:
    """Unbalanced solve for a source carrying more mass than the target.

    Requires m(nu0) > 1 with nu1 a probability vector. The iteration
    is the same as in the balanced case; the even iterates converge
    to the entropic projection of the kernel for the rescaled source
    nu0 / m0 (column marginal exactly nu1), and the odd iterates to
    m0 times that plan (row marginal exactly nu0). Both limits share
    one disparity profile.
    """
    a, b = _check_inputs(nu0, nu1, kernel)
    m0 = float(a.sum())
    m1 = float(b.sum())
    if abs(m1 - 1.0) > 1e-6:
        raise ValueError(f"target must be a probability vector, its mass is {m1!r}")
    if m0 <= 1.0:
        raise WrongPathError(
            f"source mass {m0} does not exceed the target's; use sinkhorn or swap roles"
        )
    odd, even, _, report = _run(a, b, kernel, config, log_domain=config.log_domain)
    return ShiftedLimits(even=even, odd=odd, report=report)


def iteration_trace(
    nu0,
    nu1,
    kernel: GibbsKernel,
    config: SinkhornConfig,
    reference_vectors: ScalingVectors | None = None,
    reference_profile: np.ndarray | None = None,
) -> tuple[list[IterationRecord], TransportPlan]:
    """Run a solve while recording per-iteration convergence probes.

    Per iteration this captures the Hilbert step of each scaling
    update and, when references are given, the Hilbert distance of u
    to reference_vectors and the sup-norm gap between the iterate's
    disparity values and reference_profile (a full-width vector, NaN
    where undefined). References typically come from a separate run
    with a larger budget. Returns the records and the final odd plan.
    """
    prep = _prepare(nu0, nu1, kernel, config, config.log_domain)
    rows = prep.support0.astype(float)
    cols = prep.support1.astype(float)

    ref_lu = None
    if reference_vectors is not None:
        ref_u = reference_vectors.u[prep.support0]
        ref_lu = ref_u if reference_vectors.log_domain else np.log(ref_u)
    ref_f = None
    if reference_profile is not None:
        ref_f = np.asarray(reference_profile, dtype=float)[prep.support0]

    records: list[IterationRecord] = []
    u = v_prev = None
    iterations = 0
    for u, v_prev, v_raw, v, du, dv in prep.steps:
        iterations += 1
        if prep.log_domain:
            odd_block = np.exp(u[:, None] + prep.block + v_prev[None, :])
            lu = u
        else:
            odd_block = u[:, None] * prep.block * v_prev[None, :]
            lu = np.log(u)
        u_error = float("nan")
        if ref_lu is not None:
            u_error = _oscillation(lu - ref_lu)
        profile_error = float("nan")
        if ref_f is not None:
            f = (odd_block @ cols) / odd_block.sum(axis=1) - rows
            good = np.isfinite(ref_f) & np.isfinite(f)
            profile_error = float(np.abs(f[good] - ref_f[good]).max()) if good.any() else 0.0
        records.append(
            IterationRecord(
                iteration=iterations,
                hilbert_u_step=du,
                hilbert_v_step=dv,
                u_error=u_error,
                profile_error=profile_error,
            )
        )
        if config.stop_tolerance > 0.0 and du + dv <= config.stop_tolerance:
            break
        if iterations >= config.max_iterations:
            break
    if prep.log_domain:
        final_block = np.exp(u[:, None] + prep.block + v_prev[None, :])
    else:
        final_block = u[:, None] * prep.block * v_prev[None, :]
    plan = _scatter_plan(final_block, prep.support0, prep.support1, kernel.d)
    return records, plan


def project_rows(gamma, mu) -> TransportPlan:
    """Scale each row of a plan to match the row marginal mu.

    This is the Kullback-Leibler projection onto the set of plans
    with row sums mu. Rows where mu vanishes are zeroed; a positive
    mu entry on a row without mass is infeasible.
    """
    entries = _as_entries(gamma)
    target = _as_values(mu)
    if entries.shape[0] != target.shape[0]:
        raise DimensionMismatchError(
            f"plan with {entries.shape[0]} rows against a marginal of length {target.shape[0]}"
        )
    sums = entries.sum(axis=1)
    bad = (target > 0.0) & (sums == 0.0)
    if np.any(bad):
        raise InfeasibleProjectionError(
            f"rows {np.flatnonzero(bad).tolist()} have no mass to carry the requested marginal"
        )
    scale = np.zeros_like(target)
    positive = sums > 0.0
    scale[positive] = target[positive] / sums[positive]
    return TransportPlan(entries * scale[:, None])


def project_cols(gamma, nu) -> TransportPlan:
    """Column mirror of project_rows."""
    entries = _as_entries(gamma)
    target = _as_values(nu)
    if entries.shape[1] != target.shape[0]:
        raise DimensionMismatchError(
            f"plan with {entries.shape[1]} columns against a marginal of length {target.shape[0]}"
        )
    sums = entries.sum(axis=0)
    bad = (target > 0.0) & (sums == 0.0)
    if np.any(bad):
        raise InfeasibleProjectionError(
            f"columns {np.flatnonzero(bad).tolist()} have no mass to carry the requested marginal"
        )
    scale = np.zeros_like(target)
    positive = sums > 0.0
    scale[positive] = target[positive] / sums[positive]
    return TransportPlan(entries * scale[None, :])


def kl_divergence(gamma, alpha) -> float:
    """Kullback-Leibler divergence sum gamma * log(gamma / alpha).

    Zero entries of gamma contribute nothing; mass on a zero entry of
    alpha makes the divergence infinite.
    """
    g = _as_entries(gamma)
    ref = _as_entries(alpha)
    if g.shape != ref.shape:
        raise DimensionMismatchError(f"incompatible shapes {g.shape} and {ref.shape}")
    if np.any(g < 0.0) or np.any(ref < 0.0):
        raise ValueError("inputs must be nonnegative")
    pos = g > 0.0
    if np.any(ref[pos] == 0.0):
        return float("inf")
    return float(np.sum(g[pos] * (np.log(g[pos]) - np.log(ref[pos]))))


def transport_cost(gamma) -> float:
    """Quadratic transport cost sum gamma_ij * (i - j)^2."""
    entries = _as_entries(gamma)
    n, m = entries.shape
    diff = np.arange(n, dtype=float)[:, None] - np.arange(m, dtype=float)[None, :]
    return float(np.sum(entries * diff * diff))


def regularized_cost(gamma, epsilon: float) -> float:
    """Transport cost minus epsilon times the entropy of the plan.

    The entropy is -sum gamma (log gamma - 1) with 0 log 0 = 0. For
    any plan this equals epsilon * (KL(gamma | K) - mass(gamma))
    against the Gibbs kernel K for the same epsilon.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    entries = _as_entries(gamma)
    pos = entries > 0.0
    entropy = -float(np.sum(entries[pos] * (np.log(entries[pos]) - 1.0)))
    return transport_cost(entries) - epsilon * entropy
