"""Regret accounting, runtime checks of the concentration/survival/gap
properties, and evaluators for the closed-form regret and round bounds.

Log conventions follow :mod:`blin.sequences`: ``logs.sample`` is the base of
every bare ``log T`` factor and ``logs.exponent`` the base of round counts.
Ratios such as log log T / log(1/eta) do not depend on the base.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import RunTrace
from .environments import RewardInstance, zooming_table
from .geometry import StandardCube, contains
from .sequences import DEFAULT_LOGS, InvalidParameterError, LogBases, _check_dims, _check_horizon

STATIC_LB_CONSTANT = 1.0 / (128.0 * math.exp(1.0 / 16.0))
STATIC_LB_RAW_CONSTANT = 1.0 / (32.0 * math.exp(1.0 / 16.0))
ADAPTIVE_LB_CONSTANT = 1.0 / 1024.0
ADAPTIVE_LB_RAW_CONSTANT = 1.0 / 256.0
DBLIN_CONSTANT = 528.0

# absolute slack for float comparisons in the runtime checks
_TOL = 1e-9


# -- regret ---------------------------------------------------------------------------


def cumulative_regret(trace: RunTrace, instance: RewardInstance) -> np.ndarray:
    """Prefix sums of mu_star - mean(x_t) over the logged arms."""
    gaps = np.maximum(instance.gap(trace.arms), 0.0)
    return np.cumsum(gaps)


def final_regret(trace: RunTrace, instance: RewardInstance) -> float:
    series = cumulative_regret(trace, instance)
    return float(series[-1]) if len(series) else 0.0


# -- runtime checks -------------------------------------------------------------------


@dataclass
class Violation:
    batch: int
    cube_index: tuple[int, ...]
    estimate: float
    mean_min: float
    mean_max: float
    radius: float

    @property
    def excess(self) -> float:
        return max(self.mean_max - self.estimate, self.estimate - self.mean_min) - self.radius


def check_event_E(trace: RunTrace, instance: RewardInstance, logs: LogBases = DEFAULT_LOGS):
    """Concentration check over every completed batch.

    Estimates are recomputed from the pull log.  A cube violates the event when
    some point of it has mean farther than r_m + sqrt(16 log T / n_m) from the
    cube's estimate; cube extrema make this a check over all points.
    Returns (ok, violations).
    """
    violations: list[Violation] = []
    log_T = logs.sample_log(trace.T)
    for rec in trace.completed_batches:
        span = slice(rec.start, rec.end)
        idx = trace.cube_index[span]
        rewards = trace.rewards[span]
        cubes, inverse = np.unique(idx, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        sums = np.bincount(inverse, weights=rewards, minlength=len(cubes))
        counts = np.bincount(inverse, minlength=len(cubes))
        est = sums / counts
        radius = rec.r + np.sqrt(16.0 * log_T / counts)
        lo, hi = instance.cube_extrema(rec.depth, cubes)
        bad = np.maximum(hi - est, est - lo) > radius + _TOL
        for i in np.flatnonzero(bad):
            violations.append(Violation(rec.m, tuple(int(k) for k in cubes[i]),
                                        float(est[i]), float(lo[i]), float(hi[i]), float(radius[i])))
    return not violations, violations


def _containing(cubes: np.ndarray, depth: int, x_star: np.ndarray) -> bool:
    for row in cubes:
        if any(contains(StandardCube(depth, tuple(row)), x) for x in x_star):
            return True
    return False


def check_optimal_survival(trace: RunTrace, instance: RewardInstance) -> bool:
    """True iff a cube containing an optimal arm is active entering every
    completed batch and survives it."""
    x_star = np.atleast_2d(instance.x_star)
    for rec in trace.completed_batches:
        idx = rec.active.indices
        if not _containing(idx, rec.depth, x_star):
            return False
        if not _containing(idx[rec.survived], rec.depth, x_star):
            return False
    return True


def gap_bound_per_pull(trace: RunTrace) -> np.ndarray:
    """8 r_{m-1} for each pull, with r_0 = 1.

    Cleanup pulls use the edge length of the last completed batch, whose
    elimination step their cube survived.
    """
    bound = np.full(trace.T, np.inf)
    prev = 1.0
    for rec in trace.batches:
        bound[rec.start:rec.end] = 8.0 * prev
        if rec.completed:
            prev = rec.r
    if trace.cleanup_start is not None:
        bound[trace.cleanup_start:] = 8.0 * prev
    return bound


def check_gap_bound(trace: RunTrace, instance: RewardInstance):
    """(ok, indices of pulls whose gap exceeds 8 r_{m-1})."""
    gaps = instance.gap(trace.arms)
    bad = np.flatnonzero(gaps > gap_bound_per_pull(trace) + _TOL)
    return bad.size == 0, bad


def pull_conservation(trace: RunTrace) -> bool:
    """Completed + truncated + cleanup pulls add up to T and match the log."""
    total = sum(rec.end - rec.start for rec in trace.batches)
    if trace.cleanup_start is not None:
        total += trace.T - trace.cleanup_start
    for rec in trace.completed_batches:
        if rec.end - rec.start != rec.n * len(rec.active):
            return False
    return total == trace.T == len(trace.arms)


# -- upper bounds ---------------------------------------------------------------------


def _rate(dz: float, T: int, logs: LogBases) -> float:
    """T^{(dz+1)/(dz+2)} (log T)^{1/(dz+2)}."""
    return T ** ((dz + 1) / (dz + 2)) * logs.sample_log(T) ** (1.0 / (dz + 2))


def dblin_bounds(d: int, dz: float, T: int, logs: LogBases = DEFAULT_LOGS) -> tuple[float, float]:
    """(528 (log T)^{1/(dz+2)} T^{(dz+1)/(dz+2)}, (log T - log log T)/(dz+2) + 2)."""
    _check_dims(d, dz)
    _check_horizon(T)
    regret = DBLIN_CONSTANT * _rate(dz, T, logs)
    lg = logs.exponent_log
    rounds = (lg(T) - lg(logs.sample_log(T))) / (dz + 2) + 2.0
    return regret, rounds


def _log_inv_eta(d: int, dz: float) -> float:
    return math.log((d + 2) / (d + 1 - dz))


def _loglog_ratio(d: int, dz: float, T: int, logs: LogBases) -> float:
    """log log T / log((d+2)/(d+1-dz)), base-free."""
    return math.log(logs.sample_log(T)) / _log_inv_eta(d, dz)


@dataclass(frozen=True)
class ABLiNBounds:
    regret: float
    rounded_regret: float
    rounds: float
    rounded_rounds: float


def ablin_bounds(d: int, dz: float, Cz: float, T: int, logs: LogBases = DEFAULT_LOGS) -> ABLiNBounds:
    _check_dims(d, dz)
    _check_horizon(T)
    if Cz <= 0:
        raise InvalidParameterError("zooming constant must be positive")
    ratio = _loglog_ratio(d, dz, T, logs)
    rate = _rate(dz, T, logs)
    lead = 128.0 * Cz * ratio
    return ABLiNBounds(
        regret=(lead + 8.0 * math.e) * rate,
        rounded_regret=(lead + 512.0 * Cz + 8.0 * math.e) * rate,
        rounds=ratio + 1.0,
        rounded_rounds=2.0 * ratio + 1.0,
    )


# -- lower bounds ---------------------------------------------------------------------


@dataclass(frozen=True)
class LowerBound:
    bound: float  # constant-carrying form with R_z(T) at its upper estimate
    raw: float  # raw exponent form
    exponent: float  # T-exponent of both forms


def lower_bound_exponent(d: int, B: int) -> float:
    """(1 - 1/(d+2)) / (1 - (1/(d+2))^B)."""
    if B < 1:
        raise InvalidParameterError("B must be >= 1")
    eps = 1.0 / (d + 2)
    return (1.0 - eps) / (1.0 - eps ** B)


def _lower_bound(d: int, T: int, B: int, c: float, raw_c: float, logs: LogBases) -> LowerBound:
    _check_horizon(T)
    exponent = lower_bound_exponent(d, B)
    eps = 1.0 / (d + 2)
    power = 1.0 / (1.0 - eps**B)
    log_T = logs.sample_log(T)
    bound = c * log_T ** (-eps * power) * rz_upper(d, T, logs) ** power
    return LowerBound(bound=bound, raw=raw_c * T ** exponent, exponent=exponent)


def lower_bound_static(d: int, T: int, B: int, logs: LogBases = DEFAULT_LOGS) -> LowerBound:
    return _lower_bound(d, T, B, STATIC_LB_CONSTANT, STATIC_LB_RAW_CONSTANT, logs)


def lower_bound_adaptive(d: int, T: int, B: int, logs: LogBases = DEFAULT_LOGS) -> LowerBound:
    if B < 1:
        raise InvalidParameterError("B must be >= 1")
    return _lower_bound(d, T, B, ADAPTIVE_LB_CONSTANT / B**2, ADAPTIVE_LB_RAW_CONSTANT / B**2, logs)


def min_rounds_for_optimality(d: int, C: float, T: int) -> float:
    """log[(d+1)/((d+2) log C) log T + 1] / log(d+2), natural logs."""
    _check_horizon(T)
    if C <= 1:
        raise InvalidParameterError(f"need C > 1, got {C}")
    inner = (d + 1) / ((d + 2) * math.log(C)) * math.log(T) + 1.0
    return math.log(inner) / math.log(d + 2)


# -- R_z(T) ---------------------------------------------------------------------------


def rz_from_counts(counts, T: int, logs: LogBases = DEFAULT_LOGS) -> tuple[float, float]:
    """min over r0 = 2^-i of r0 T + sum_{j<=i} N_{2^-j} 2^j log T.

    ``counts[j]`` is N_r at r = 2^-j starting from j = 0.  Returns (value, r0).
    """
    log_T = logs.sample_log(T)
    best, best_r0, acc = math.inf, 1.0, 0.0
    for i, n in enumerate(counts):
        acc += n * 2.0 ** i * log_T
        value = 2.0 ** -i * T + acc
        if value < best:
            best, best_r0 = value, 2.0 ** -i
    return best, best_r0


def rz_budget(instance: RewardInstance, T: int, i_max: int, logs: LogBases = DEFAULT_LOGS):
    """(R_z(T), argmin r0) over dyadic r0 down to 2^-i_max (or the oracle floor)."""
    rows, _ = zooming_table(instance, i_max, min_depth=0)
    return rz_from_counts([n for _, _, n in rows], T, logs)


def rz_upper(d: int, T: int, logs: LogBases = DEFAULT_LOGS) -> float:
    """2 (log T)^{1/(d+2)} T^{(d+1)/(d+2)}."""
    return 2.0 * logs.sample_log(T) ** (1.0 / (d + 2)) * T ** ((d + 1) / (d + 2))


# -- report ---------------------------------------------------------------------------


@dataclass
class BoundReport:
    d: int
    dz: float
    Cz: float
    T: int
    B: int
    dblin_regret_bound: float
    ablin_regret_bound: float
    rounded_ablin_regret_bound: float
    dblin_rounds: float
    ablin_rounds: float
    static_lower_bound: float
    adaptive_lower_bound: float
    min_rounds_lower: float
    logs: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    BOUND_FIELDS = (
        "dblin_regret_bound",
        "ablin_regret_bound",
        "rounded_ablin_regret_bound",
        "dblin_rounds",
        "ablin_rounds",
        "static_lower_bound",
        "adaptive_lower_bound",
        "min_rounds_lower",
    )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def bound_report(d: int, dz: float, Cz: float, T: int, B: int, C: float = math.e,
                 logs: LogBases = DEFAULT_LOGS) -> BoundReport:
    """Every bound at one parameter point; ``C`` is the base of the round floor."""
    dbl_regret, dbl_rounds = dblin_bounds(d, dz, T, logs)
    ab = ablin_bounds(d, dz, Cz, T, logs)
    st = lower_bound_static(d, T, B, logs)
    ad = lower_bound_adaptive(d, T, B, logs)
    return BoundReport(
        d=d, dz=dz, Cz=Cz, T=T, B=B,
        dblin_regret_bound=dbl_regret,
        ablin_regret_bound=ab.regret,
        rounded_ablin_regret_bound=ab.rounded_regret,
        dblin_rounds=dbl_rounds,
        ablin_rounds=ab.rounds,
        static_lower_bound=st.bound,
        adaptive_lower_bound=ad.bound,
        min_rounds_lower=min_rounds_for_optimality(d, C, T),
        logs=logs.as_dict(),
        extra={
            "rounded_ablin_rounds": ab.rounded_rounds,
            "static_lower_raw": st.raw,
            "adaptive_lower_raw": ad.raw,
            "lower_bound_exponent": st.exponent,
            "min_rounds_C": C,
        },
    )
