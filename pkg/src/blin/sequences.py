"""Edge-length schedules, per-batch sample counts and batch budgets.

Log conventions: the sample count n_m = 16 log T / r_m^2 uses the natural log
(the Gaussian tail step needs it); exponent algebra for the ACE increments and
the batch budgets uses base 2, so that 2^{c_1 (d+2)} = (T / log T)^{(dz+1)/(dz+2)}.
Both are carried in a :class:`LogBases` record and can be overridden.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

from .geometry import ScheduleMismatchError, depth_of_edge

# Slack for ceil() on quantities that are integers up to float noise.
_CEIL_SLACK = 1e-9

# Partial sums closer than this to an integer are treated as that integer when
# rounding ACE exponents.
_ROUND_SLACK = 1e-12

# Hard stop on generated ACE terms; the increments decay geometrically, so this
# is never reached for eta < 1 - 1e-3.
_MAX_ACE_TERMS = 100_000


class InvalidHorizonError(ValueError):
    pass


class InvalidParameterError(ValueError):
    pass


@dataclass(frozen=True)
class LogBases:
    sample: float = math.e
    exponent: float = 2.0

    def sample_log(self, x: float) -> float:
        return math.log(x) / math.log(self.sample)

    def exponent_log(self, x: float) -> float:
        return math.log(x) / math.log(self.exponent)

    def as_dict(self) -> dict:
        return {"sample": _base_name(self.sample), "exponent": _base_name(self.exponent)}


def _base_name(b: float):
    return "e" if b == math.e else b


DEFAULT_LOGS = LogBases()


def _check_dims(d: int, dz: float) -> None:
    if d < 1:
        raise InvalidParameterError(f"dimension must be >= 1, got {d}")
    if dz < 0:
        raise InvalidParameterError(f"zooming dimension must be >= 0, got {dz}")
    if dz >= d + 1:
        raise InvalidParameterError(f"need dz < d + 1 (eta > 0), got d={d}, dz={dz}")


def _check_horizon(T: int) -> None:
    if T < 2:
        raise InvalidHorizonError(f"horizon T must be >= 2, got {T}")


@dataclass(frozen=True)
class ACEParams:
    d: int
    dz: float
    T: int
    logs: LogBases = DEFAULT_LOGS

    def __post_init__(self):
        _check_dims(self.d, self.dz)
        _check_horizon(self.T)

    @property
    def eta(self) -> float:
        return (self.d + 1 - self.dz) / (self.d + 2)

    @property
    def c1(self) -> float:
        T = self.T
        ratio = T / self.logs.sample_log(T)
        return (self.dz + 1) / ((self.d + 2) * (self.dz + 2)) * self.logs.exponent_log(ratio)

    @property
    def exponent_limit(self) -> float:
        """lim_m sum_{i<=m} c_i = c1 / (1 - eta)."""
        return self.c1 / (1.0 - self.eta)


def c_increment(params: ACEParams, i: int) -> float:
    if i < 1:
        raise ValueError("batch index starts at 1")
    return params.c1 * params.eta ** (i - 1)


def ace_partial_sums(params: ACEParams, m: int) -> list[float]:
    """sum_{i<=k} c_i for k = 1..m."""
    out, acc = [], 0.0
    for i in range(1, m + 1):
        acc += c_increment(params, i)
        out.append(acc)
    return out


def _floor(x: float) -> int:
    n = round(x)
    return n if abs(x - n) < _ROUND_SLACK else math.floor(x)


def _ceil(x: float) -> int:
    n = round(x)
    return n if abs(x - n) < _ROUND_SLACK else math.ceil(x)


def rounded_exponents(partial_sums: Sequence[float]) -> tuple[list[int], list[int]]:
    """Rounded-ACE depths before and after the skip rule.

    Pre-skip: floor(S_1), ceil(S_1), floor(S_2), ceil(S_2), ...  An entry is
    skipped when some earlier edge length is <= it, i.e. its depth does not
    exceed the deepest depth emitted so far.
    """
    pre = []
    for s in partial_sums:
        pre.extend((_floor(s), _ceil(s)))
    post, deepest = [], -1
    for a in pre:
        if a > deepest:
            post.append(a)
            deepest = a
    return pre, post


def round_partial_sums(partial_sums: Sequence[float]) -> tuple[list[float], list[float]]:
    pre, post = rounded_exponents(partial_sums)
    return [2.0 ** -a for a in pre], [2.0 ** -a for a in post]


KINDS = ("doubling", "ace", "rounded-ace", "custom")


@dataclass(frozen=True)
class EdgeLengthSchedule:
    """Generator of r_1 > r_2 > ... ; finite for rounded-ace and custom."""

    kind: str
    params: ACEParams | None = None
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown schedule kind {self.kind!r}")
        if self.kind in ("ace", "rounded-ace") and self.params is None:
            raise InvalidParameterError(f"{self.kind} schedule needs ACEParams")
        if self.kind == "custom":
            if not self.values:
                raise InvalidParameterError("custom schedule needs a nonempty list")
            vals = tuple(float(v) for v in self.values)
            if any(not 0 < v <= 1 for v in vals):
                raise InvalidParameterError("custom edge lengths must lie in (0, 1]")
            if any(b >= a for a, b in zip(vals, vals[1:])):
                raise InvalidParameterError("custom edge lengths must strictly decrease")
            object.__setattr__(self, "values", vals)

    @classmethod
    def doubling(cls) -> "EdgeLengthSchedule":
        return cls("doubling")

    @classmethod
    def ace(cls, params: ACEParams) -> "EdgeLengthSchedule":
        return cls("ace", params=params)

    @classmethod
    def rounded_ace(cls, params: ACEParams) -> "EdgeLengthSchedule":
        return cls("rounded-ace", params=params)

    @classmethod
    def custom(cls, values: Sequence[float]) -> "EdgeLengthSchedule":
        return cls("custom", values=tuple(values))

    def __iter__(self) -> Iterator[float]:
        if self.kind == "doubling":
            m = 0
            while True:
                yield math.ldexp(1.0, -m)
                m += 1
        elif self.kind == "ace":
            for s in _ace_sums(self.params):
                yield 2.0 ** -s
        elif self.kind == "rounded-ace":
            for a in self._rounded_depths():
                yield math.ldexp(1.0, -a)
        else:
            yield from self.values

    def _rounded_depths(self) -> Iterator[int]:
        deepest = -1
        for s, last in _ace_sums(self.params, with_stop=True):
            for a in (_floor(s), _ceil(s)):
                if a > deepest:
                    deepest = a
                    yield a
            if last:
                return

    def depths(self) -> Iterator[int]:
        """Integer depths -log2 r_m; ScheduleMismatchError if some r_m is not dyadic."""
        if self.kind == "doubling":
            m = 0
            while True:
                yield m
                m += 1
        elif self.kind == "rounded-ace":
            yield from self._rounded_depths()
        else:
            for r in self:
                yield depth_of_edge(r)

    @property
    def partitionable(self) -> bool:
        """True when every consecutive ratio is a power of two."""
        if self.kind in ("doubling", "rounded-ace"):
            return True
        if self.kind == "ace":
            return False
        try:
            list(self.depths())
        except ScheduleMismatchError:
            return False
        return True

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.params is not None:
            p = self.params
            out.update(d=p.d, dz=p.dz, T=p.T, c1=p.c1, eta=p.eta, logs=p.logs.as_dict())
        if self.values is not None:
            out["values"] = list(self.values)
        return out


def _ace_sums(params: ACEParams, with_stop: bool = False):
    """Partial sums of the ACE increments.

    With ``with_stop`` the generator yields (sum, last) and marks the term after
    which floor/ceil of the sums can no longer change.
    """
    limit = params.exponent_limit
    top = _ceil(limit)
    acc = 0.0
    for i in range(1, _MAX_ACE_TERMS + 1):
        acc += c_increment(params, i)
        if not with_stop:
            yield acc
            continue
        # floor and ceil have reached their limiting values once acc > top - 1
        yield acc, acc > top - 1 + _ROUND_SLACK or i == _MAX_ACE_TERMS


def edge_length(schedule: EdgeLengthSchedule, m: int) -> float:
    """r_m (1-based, after the skip rule for rounded-ace)."""
    if m < 1:
        raise ValueError("batch index starts at 1")
    for i, r in enumerate(schedule, start=1):
        if i == m:
            return r
    raise IndexError(f"schedule has fewer than {m} entries")


def samples_per_cube(r_m: float, T: int, logs: LogBases = DEFAULT_LOGS) -> int:
    """n_m = ceil(16 log T / r_m^2), at least 1."""
    _check_horizon(T)
    if not 0 < r_m <= 1:
        raise ValueError(f"edge length must lie in (0, 1], got {r_m}")
    return max(1, math.ceil(16.0 * logs.sample_log(T) / (r_m * r_m)))


def dblin_bstar(dz: float, T: int, logs: LogBases = DEFAULT_LOGS) -> float:
    """B* = 1 + log(T / log T) / (dz + 2)."""
    _check_horizon(T)
    return 1.0 + logs.exponent_log(T / logs.sample_log(T)) / (dz + 2)


def ablin_bstar(d: int, dz: float, T: int, logs: LogBases = DEFAULT_LOGS) -> float:
    """B* = (log log T - log(dz + 2)) / log((d + 2) / (d + 1 - dz))."""
    _check_dims(d, dz)
    _check_horizon(T)
    lg = logs.exponent_log
    return (lg(logs.sample_log(T)) - lg(dz + 2)) / lg((d + 2) / (d + 1 - dz))


def _ceil_int(x: float) -> int:
    return math.ceil(x - _CEIL_SLACK)


def batch_budget(kind: str, d: int, dz: float, T: int, logs: LogBases = DEFAULT_LOGS) -> int:
    """Communication rounds sufficient for the optimal rate under ``kind``."""
    _check_dims(d, dz)
    if kind == "doubling":
        return max(1, _ceil_int(dblin_bstar(dz, T, logs))) + 1
    if kind == "ace":
        return max(1, _ceil_int(ablin_bstar(d, dz, T, logs))) + 1
    if kind == "rounded-ace":
        return max(1, _ceil_int(2 * ablin_bstar(d, dz, T, logs))) + 1
    raise InvalidParameterError(f"no batch budget for schedule kind {kind!r}")
