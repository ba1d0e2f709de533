"""Largest certifiably stable inflow, its necessary-condition bound, and parameter sweeps."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .ctmc import GeneratorMatrix, stationary_distribution, validate_generator
from .errors import EmptyBox, ValidationError
from .netmodel import NetworkParams, Topology
from .regions import region_minima
from .stability import Witness, sufficient_check

DEFAULT_TOL = 0.5
AXES = ("mu", "delta_c")


def _ray(params: NetworkParams, ray) -> np.ndarray:
    if params.topology is not Topology.MERGE:
        return np.ones(1)
    r = np.ones(2) if ray is None else np.asarray(ray, dtype=float)
    if r.shape != (2,) or np.any(r < 0) or r.sum() <= 0:
        raise ValidationError(f"inflow ray must be two nonnegative numbers, not all zero; got {ray}")
    return r


def necessary_bound(params: NetworkParams, p, ray=None) -> float:
    """Largest inflow scale meeting every queue's average-capacity condition.

    For a merge the inflows are ``t * ray`` and the returned value is ``t``.
    """
    avg = params.capacities @ np.asarray(p, dtype=float)
    if params.topology is not Topology.MERGE:
        return float(avg.min())
    r = _ray(params, ray)
    limits = [avg[2] / r.sum()]
    limits += [avg[j] / r[j] for j in range(2) if r[j] > 0]
    return float(min(limits))


@dataclass(eq=False)
class ThroughputResult:
    a_n: float
    a_s: float
    witness: Witness | None
    trace: list = field(default_factory=list)
    ray: tuple = (1.0,)
    certified: bool = False

    @property
    def no_feasible_point(self) -> bool:
        return not self.certified and self.a_n > 0

    @property
    def inflows_at_a_s(self) -> tuple:
        return tuple(self.a_s * r for r in self.ray)

    def to_dict(self) -> dict:
        return {
            "a_n": self.a_n,
            "a_s": self.a_s,
            "ray": list(self.ray),
            "inflows_at_a_s": list(self.inflows_at_a_s),
            "certified": self.certified,
            "no_feasible_point": self.no_feasible_point,
            "witness": None if self.witness is None else self.witness.to_dict(),
            "trace": [{"a": a, "certified": ok} for a, ok in self.trace],
        }


def certify_at(
    params: NetworkParams,
    generator: GeneratorMatrix,
    scale: float,
    ray=None,
    check_oracle: bool = False,
    oracle_n_max: int | None = None,
    **search,
):
    """``(certified, witness)`` for inflow ``scale * ray``.

    Box and minima are rebuilt for that inflow. A single queue has an exact
    criterion and no witness. ``search`` goes to :func:`sufficient_check`.
    """
    r = _ray(params, ray)
    trial = params.with_inflows(scale * r)
    if params.topology is Topology.SINGLE:
        p = stationary_distribution(generator)
        mean_capacity = float(params.capacities[0] @ p)
        return scale < mean_capacity, None
    try:
        minima = region_minima(trial, check_oracle=check_oracle, oracle_n_max=oracle_n_max)
    except EmptyBox:
        return False, None
    result = sufficient_check(trial, minima, generator, **search)
    return (True, result) if result.feasible else (False, None)


def max_stable_inflow(
    params: NetworkParams, generator: GeneratorMatrix, tolerance: float = DEFAULT_TOL, ray=None, **options
) -> ThroughputResult:
    """Bisect on ``[0, a_n)`` for the largest inflow with a certificate.

    The lower end of the bracket is always certified and the upper end never is;
    ``a_n`` itself is not tried.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    r = _ray(params, ray)
    a_n = necessary_bound(params, stationary_distribution(generator), r)
    trace = []
    if a_n <= 0:
        return ThroughputResult(a_n, 0.0, None, trace, tuple(r))
    ok, best = certify_at(params, generator, 0.0, r, **options)
    trace.append((0.0, ok))
    if not ok:
        return ThroughputResult(a_n, 0.0, None, trace, tuple(r))
    lo, hi = 0.0, a_n
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        ok, w = certify_at(params, generator, mid, r, **options)
        trace.append((mid, ok))
        if ok:
            lo, best = mid, w
        else:
            hi = mid
    return ThroughputResult(a_n, lo, best, trace, tuple(r), certified=True)


def bisection_steps(a_n: float, tolerance: float) -> int:
    return max(0, math.ceil(math.log2(a_n / tolerance))) if a_n > 0 else 0


@dataclass(frozen=True)
class SweepRow:
    param: float
    a_n: float
    a_s: float
    result: ThroughputResult = field(compare=False, repr=False)


@dataclass(frozen=True)
class SweepTable:
    axis: str
    rows: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("param,a_n,a_s\n")
        for row in self.rows:
            buf.write(f"{row.param:.2f},{row.a_n:.2f},{row.a_s:.2f}\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "rows": [{"param": r.param, "a_n": r.a_n, "a_s": r.a_s} for r in self.rows],
        }


def mu_generator(mu: float) -> GeneratorMatrix:
    """Two modes leaving mode 0 at rate ``mu`` and mode 1 at rate 1."""
    return validate_generator([[-mu, mu], [1.0, -1.0]])


def _delta_capacities(params: NetworkParams, delta: float) -> np.ndarray:
    cap = np.array(params.capacities)
    row = min(1, cap.shape[0] - 1)
    center = float(cap[row].mean())
    if delta >= center:
        raise ValidationError(f"delta_c {delta:g} >= {center:g} leaves a nonpositive capacity")
    cap[row] = [center - delta, center + delta]
    return cap


def sweep(
    params: NetworkParams,
    axis: str,
    values,
    tolerance: float = DEFAULT_TOL,
    generator: GeneratorMatrix | None = None,
    ray=None,
    **options,
) -> SweepTable:
    """Throughput bounds across transition intensity ``mu`` or fluctuation ``delta_c``.

    ``mu`` rows use generator ``[[-mu, mu], [1, -1]]``. ``delta_c`` rows put the
    second queue's capacities (the only queue of a single link) at
    ``center -/+ delta_c`` around their template mean and use ``generator``
    (symmetric unit rates when omitted).
    """
    if axis not in AXES:
        raise ValidationError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    values = [float(x) for x in values]
    if not values:
        raise ValidationError("sweep grid is empty")
    if any(x < 0 or not math.isfinite(x) for x in values):
        raise ValidationError("sweep values must be finite and nonnegative")
    if params.m != 2:
        raise ValidationError("sweeps are defined for two-mode networks")
    rows = []
    for x in values:
        if axis == "mu":
            if x <= 0:
                raise ValidationError("mu must be positive")
            g, trial = mu_generator(x), params
        else:
            g = generator if generator is not None else validate_generator([[-1.0, 1.0], [1.0, -1.0]])
            trial = params.with_capacities(_delta_capacities(params, x))
        res = max_stable_inflow(trial, g, tolerance, ray, **options)
        rows.append(SweepRow(x, res.a_n, res.a_s, res))
    return SweepTable(axis, tuple(rows))
