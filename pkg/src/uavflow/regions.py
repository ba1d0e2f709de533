"""Invariant boxes and region-wise minima of total served flow.

The boxes bound the reachable queue space of tandem and merge links; the
minima of the summed flows over their sub-regions feed the drift gaps of the
stability certificates.

Region numbering. Tandem: ``Q1 = [q_c, inf) x [q2_lo, q2_hi]`` and
``Q2 = [q1_lo, q_c] x [q2_lo, q2_hi]``. Merge: ``Q1`` has both upstream queues
below ``q_c``, ``Q2`` only queue 1 below, ``Q3`` only queue 2 below, ``Q4``
neither. The unbounded regions (tandem Q1, merge Q2-Q4) carry the
certificate; the bounded one only enters the additive drift constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyBox, InvalidNetwork
from .netmodel import NetworkParams, Topology

# Stand-in for an infinite coordinate when evaluating limits on the grid.
FAR = 1e12
ORACLE_TOL = 0.5


@dataclass(frozen=True, eq=False)
class InvariantBox:
    lower: np.ndarray
    upper: np.ndarray
    q_c: float
    topology: Topology

    def regions(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Sub-regions as ``name -> (lower, upper)``."""
        lo, hi, qc = self.lower, self.upper, self.q_c
        inf = math.inf
        if self.topology is Topology.TANDEM:
            return {
                "Q1": (np.array([qc, lo[1]]), np.array([inf, hi[1]])),
                "Q2": (np.array([lo[0], lo[1]]), np.array([qc, hi[1]])),
            }
        return {
            "Q1": (np.array([lo[0], lo[1], lo[2]]), np.array([qc, qc, hi[2]])),
            "Q2": (np.array([lo[0], qc, lo[2]]), np.array([qc, inf, hi[2]])),
            "Q3": (np.array([qc, lo[1], lo[2]]), np.array([inf, qc, hi[2]])),
            "Q4": (np.array([qc, qc, lo[2]]), np.array([inf, inf, hi[2]])),
        }

    @property
    def certificate_regions(self) -> tuple[str, ...]:
        return ("Q1",) if self.topology is Topology.TANDEM else ("Q2", "Q3", "Q4")

    @property
    def bounded_region(self) -> str:
        return "Q2" if self.topology is Topology.TANDEM else "Q1"

    def contains(self, q, tol: float = 0.0) -> bool:
        q = np.asarray(q)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def to_dict(self) -> dict:
        return {
            "lower": self.lower.tolist(),
            "upper": [None if math.isinf(x) else float(x) for x in self.upper],
            "q_c": self.q_c,
        }


def tandem_invariant_box(params: NetworkParams, a: float | None = None) -> InvariantBox:
    if params.topology is not Topology.TANDEM:
        raise InvalidNetwork("tandem_invariant_box needs a tandem network")
    a = params.inflows[0] if a is None else float(a)
    v, w, theta = params.v, params.w, params.theta
    c1_min, c2_min = params.c_min
    q1_lo = min(a / v, params.c_max / v)
    q2_lo = min(q1_lo, c1_min / v)
    q2_hi = theta - c2_min / w
    if q2_lo > q2_hi:
        raise EmptyBox(f"downstream bounds empty: {q2_lo:g} > {q2_hi:g}")
    return InvariantBox(
        np.array([q1_lo, q2_lo]), np.array([math.inf, q2_hi]), params.q_c, Topology.TANDEM
    )


def merge_invariant_box(params: NetworkParams, a1: float | None = None, a2: float | None = None) -> InvariantBox:
    if params.topology is not Topology.MERGE:
        raise InvalidNetwork("merge_invariant_box needs a merge network")
    a1 = params.inflows[0] if a1 is None else float(a1)
    a2 = params.inflows[1] if a2 is None else float(a2)
    v, w, theta = params.v, params.w, params.theta
    c1_min, c2_min, c3_min = params.c_min
    q1_lo = min(a1 / v, params.c_max / v)
    q2_lo = min(a2 / v, params.c_max / v)
    q3_lo = min(q1_lo + q2_lo, c1_min / v + q2_lo, c2_min / v + q1_lo, c1_min / v + c2_min / v)
    q3_hi = theta - c3_min / w
    if q3_lo > q3_hi:
        raise EmptyBox(f"downstream bounds empty: {q3_lo:g} > {q3_hi:g}")
    return InvariantBox(
        np.array([q1_lo, q2_lo, q3_lo]), np.array([math.inf, math.inf, q3_hi]), params.q_c, Topology.MERGE
    )


def invariant_box(params: NetworkParams) -> InvariantBox:
    if params.topology is Topology.TANDEM:
        return tandem_invariant_box(params)
    if params.topology is Topology.MERGE:
        return merge_invariant_box(params)
    raise InvalidNetwork("the single queue has no invariant box")


def _flow_sum(params: NetworkParams, mode: int, q) -> float:
    f = np.empty(params.n_queues)
    v, w, theta, cap, inflow = params.kernel_args()
    _kernels.flows_into(params.topology.code, mode, np.asarray(q, dtype=float), v, w, theta, cap, inflow, f)
    return float(f.sum())


def _tandem_inf(params: NetworkParams, mode: int, lo, hi) -> float:
    # nondecreasing in q1, concave in q2
    return min(_flow_sum(params, mode, [lo[0], q2]) for q2 in (lo[1], hi[1]))


def _share_plus_linear(v, R, own_lo, own_hi, other_lo):
    """inf over own in [own_lo, own_hi] of v*own + R*other_lo/(own + other_lo)."""
    if other_lo <= 0.0:
        return v * own_lo
    star = math.sqrt(R * other_lo / v) - other_lo
    x = min(max(star, own_lo), own_hi)
    return v * x + R * other_lo / (x + other_lo)


def _share_only(R, own_lo, other_hi):
    """inf of R*own/(own + other) with own at its lower end and other at its upper end."""
    if own_lo <= 0.0 or math.isinf(other_hi):
        return 0.0
    return R * own_lo / (own_lo + other_hi)


def _upstream_pair_inf(c1, c2, v, R, lo, hi) -> float:
    """Infimum of f13 + f23 over an upstream rectangle for fixed receiving flow R.

    Each flow is a min of three terms, so their sum is the min over the nine
    pairings; every pairing is minimised in closed form and the smallest wins.
    """
    l1, l2 = lo
    u1, u2 = hi
    terms = [
        v * (l1 + l2),
        v * l1 + c2,
        c1 + v * l2,
        c1 + c2,
        _share_plus_linear(v, R, l1, u1, l2),
        _share_plus_linear(v, R, l2, u2, l1),
        c2 + _share_only(R, l1, u2),
        c1 + _share_only(R, l2, u1),
    ]
    if u1 > 0.0 or u2 > 0.0:
        terms.append(R)
    return min(terms)


def _merge_inf(params: NetworkParams, mode: int, lo, hi) -> float:
    c1, c2, c3 = params.capacities[:, mode]
    v, w, theta = params.v, params.w, params.theta
    best = math.inf
    # every pairing is affine in q3, so q3 sits at an end of its interval
    for q3 in (lo[2], hi[2]):
        R = w * (theta - q3)
        pair = _upstream_pair_inf(c1, c2, v, R, lo[:2], hi[:2])
        best = min(best, pair + min(v * q3, c3))
    return best


def region_infimum(params: NetworkParams, mode: int, lower, upper) -> float:
    """Exact infimum of the summed flows over an axis-aligned region."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if params.topology is Topology.TANDEM:
        return _tandem_inf(params, mode, lower, upper)
    if params.topology is Topology.MERGE:
        return _merge_inf(params, mode, lower, upper)
    raise InvalidNetwork("region minima are defined for tandem and merge links")


def corner_candidate(params: NetworkParams, mode: int, lower, upper) -> float:
    """Smallest flow sum over upstream lower corners and both downstream ends.

    This is the enumeration that is exact when the flow sum increases in the
    upstream densities; for the merge it can overshoot the true infimum.
    """
    b = params.topology.bounded_queue
    best = math.inf
    for qb in (lower[b], upper[b]):
        q = np.array(lower, dtype=float)
        q[b] = qb
        best = min(best, _flow_sum(params, mode, q))
    return best


def _axis(lo, hi, n, scale):
    u = np.linspace(0.0, 1.0, n + 1)
    if math.isinf(hi):
        with np.errstate(divide="ignore"):
            g = lo + scale * u / (1.0 - u)
        g[-1] = lo + FAR
        return g
    return lo + (hi - lo) * u


def _grid_min(params, mode, lower, upper, n):
    scale = params.q_c + params.theta
    axes = [_axis(lower[j], upper[j], n, scale) for j in range(len(lower))]
    g3 = axes[2] if len(axes) == 3 else np.zeros(1)
    v, w, theta, cap, inflow = params.kernel_args()
    return _kernels.flow_sum_grid(params.topology.code, mode, axes[0], axes[1], g3, v, w, theta, cap, inflow)


def brute_force_region_min(
    mode: int,
    params: NetworkParams,
    lower,
    upper,
    n_start: int = 8,
    tol: float = ORACLE_TOL,
    n_max: int | None = None,
    cap_upper: float | None = None,
) -> float:
    """Grid minimum of the summed flows, refined until two resolutions agree.

    Infinite upper bounds are handled by a compactifying change of variable
    whose last node stands in for the limit at infinity. Passing ``cap_upper``
    instead truncates them at that value. Grids are nested, so refinement can
    only lower the value.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float).copy()
    if cap_upper is not None:
        upper[np.isinf(upper)] = cap_upper
    if n_max is None:
        n_max = 1024 if lower.size == 2 else 256
    n = n_start
    prev = math.inf
    while True:
        val, _ = _grid_min(params, mode, lower, upper, n)
        if prev - val <= tol or n >= n_max:
            return float(val)
        prev = val
        n *= 2


@dataclass(eq=False)
class RegionMinima:
    """Per-mode minima of the summed flows on each sub-region of a box."""

    box: InvariantBox
    values: dict[str, np.ndarray]
    corner: dict[str, np.ndarray]
    certificate: np.ndarray
    bounded: np.ndarray
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "box": self.box.to_dict(),
            "values": {k: v.tolist() for k, v in self.values.items()},
            "corner_candidates": {k: v.tolist() for k, v in self.corner.items()},
            "certificate": self.certificate.tolist(),
            "bounded": self.bounded.tolist(),
            "flags": list(self.flags),
        }


def region_minima(
    params: NetworkParams,
    box: InvariantBox | None = None,
    check_oracle: bool = False,
    oracle_n_max: int | None = None,
) -> RegionMinima:
    """Region minima for every mode.

    With ``check_oracle`` each value is cross-checked against the grid oracle;
    a disagreement beyond the oracle tolerance keeps the oracle value and
    records a flag.
    """
    if box is None:
        box = invariant_box(params)
    values: dict[str, np.ndarray] = {}
    corner: dict[str, np.ndarray] = {}
    flags: list[str] = []
    for name, (lo, hi) in box.regions().items():
        vals = np.empty(params.m)
        corners = np.empty(params.m)
        for i in range(params.m):
            vals[i] = region_infimum(params, i, lo, hi)
            corners[i] = corner_candidate(params, i, lo, hi)
            if check_oracle:
                oracle = brute_force_region_min(i, params, lo, hi, n_max=oracle_n_max)
                if abs(oracle - vals[i]) > ORACLE_TOL:
                    flags.append(f"oracle override {name} mode {i}: {vals[i]:.3f} -> {oracle:.3f}")
                    vals[i] = oracle
            if corners[i] - vals[i] > ORACLE_TOL:
                flags.append(
                    f"corner enumeration overshoots on {name} mode {i}: corner {corners[i]:.3f} > infimum {vals[i]:.3f}"
                )
        values[name] = vals
        corner[name] = corners
    certificate = np.min([values[k] for k in box.certificate_regions], axis=0)
    return RegionMinima(box, values, corner, certificate, values[box.bounded_region].copy(), flags)


def region_flow_min_tandem(mode: int, params: NetworkParams, box: InvariantBox) -> tuple[float, float]:
    """``(F1, F2)``: flow-sum minima on the unbounded and bounded tandem regions."""
    regs = box.regions()
    return region_infimum(params, mode, *regs["Q1"]), region_infimum(params, mode, *regs["Q2"])


def region_flow_min_merge(mode: int, params: NetworkParams, box: InvariantBox) -> tuple[float, float, float, float]:
    """``(F2, F3, F4, Fm)`` for the merge, ``Fm`` being the smallest of the three."""
    regs = box.regions()
    f2, f3, f4 = (region_infimum(params, mode, *regs[k]) for k in ("Q2", "Q3", "Q4"))
    return f2, f3, f4, min(f2, f3, f4)
