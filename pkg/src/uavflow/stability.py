"""Necessary conditions, Lyapunov certificates and drift-condition audits.

The certificate for tandem and merge links uses ``V(i, q) = alpha_i * exp(beta * h @ q)``
with ``h = [2, 1]`` (tandem) or ``[2, 2, 1]`` (merge). A pair ``(alpha, beta)``
certifies stability when, in every mode ``i``,

    alpha_i * beta * gap_i + sum_j rates[i, j] * (alpha_j - alpha_i) <= -1,

where ``gap_i = 2 * total_inflow - F(i)`` and ``F(i)`` is the worst-case served
flow on the unbounded part of the invariant box.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .ctmc import GeneratorMatrix
from .lp import phase_one
from .netmodel import NetworkParams, Topology, drift_many
from .regions import InvariantBox, RegionMinima

ALPHA_MIN = 1e-3
BETA_MIN = 1e-5
BETA_MAX = 10.0
N_BETA = 120
N_REFINE = 41
RESIDUAL_TOL = 1e-9

LYAPUNOV_WEIGHTS = {
    Topology.TANDEM: np.array([2.0, 1.0]),
    Topology.MERGE: np.array([2.0, 2.0, 1.0]),
}


class Verdict(str, enum.Enum):
    STABLE = "stable"
    MARGINAL = "marginal"
    UNSTABLE = "unstable"


def _is_equal(x, y):
    return abs(x - y) <= 1e-9 * max(1.0, abs(x), abs(y))


def single_queue_stability(a: float, capacities, p) -> Verdict:
    """Compare the inflow with the time-averaged capacity of a single queue.

    Exact equality is reported as marginal and never certified stable.
    """
    mean_capacity = float(np.dot(p, capacities))
    if _is_equal(mean_capacity, a):
        warnings.warn("inflow equals the average capacity; not certifying a critical queue", stacklevel=2)
        return Verdict.MARGINAL
    return Verdict.STABLE if mean_capacity > a else Verdict.UNSTABLE


@dataclass(frozen=True)
class NecessaryEntry:
    label: str
    inflow: float
    capacity_average: float

    @property
    def margin(self) -> float:
        return self.capacity_average - self.inflow

    @property
    def passed(self) -> bool:
        return self.margin >= 0 or _is_equal(self.capacity_average, self.inflow)

    @property
    def marginal(self) -> bool:
        return _is_equal(self.capacity_average, self.inflow)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "inflow": self.inflow,
            "capacity_average": self.capacity_average,
            "margin": self.margin,
            "passed": self.passed,
            "marginal": self.marginal,
        }


@dataclass(frozen=True)
class NecessaryReport:
    entries: tuple[NecessaryEntry, ...]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "entries": [e.to_dict() for e in self.entries]}


def necessary_check(params: NetworkParams, p) -> NecessaryReport:
    """Every queue's inflow must not exceed its time-averaged capacity."""
    avg = params.capacities @ np.asarray(p, dtype=float)
    a = params.inflows
    if params.topology is Topology.MERGE:
        rows = [("queue 1", a[0], avg[0]), ("queue 2", a[1], avg[1]), ("queue 3", a[0] + a[1], avg[2])]
    else:
        rows = [(f"queue {j + 1}", a[0], avg[j]) for j in range(params.n_queues)]
    return NecessaryReport(tuple(NecessaryEntry(lbl, float(x), float(c)) for lbl, x, c in rows))


def drift_gaps(params: NetworkParams, minima: RegionMinima) -> np.ndarray:
    return 2.0 * params.total_inflow - minima.certificate


def certificate_lhs(alpha, beta: float, gaps, generator: GeneratorMatrix) -> np.ndarray:
    """Per-mode left-hand side of the certificate inequality."""
    alpha = np.asarray(alpha, dtype=float)
    rates = generator.rates
    transition = (rates * (alpha[None, :] - alpha[:, None])).sum(axis=1)
    return alpha * beta * np.asarray(gaps, dtype=float) + transition


def _solve_slice(beta, gaps, generator, alpha_min):
    # alpha = alpha_min + x with x >= 0
    A = beta * np.diag(np.asarray(gaps, dtype=float)) + generator.rates
    b = -1.0 - alpha_min * A.sum(axis=1)
    x, infeasibility = phase_one(A, b, tol=RESIDUAL_TOL)
    if x is None:
        return None, infeasibility
    alpha = alpha_min + x
    lhs = certificate_lhs(alpha, beta, gaps, generator)
    excess = lhs.max() + 1.0
    if excess > RESIDUAL_TOL * max(1.0, float(np.abs(lhs).max())):
        return None, max(infeasibility, excess)
    if excess > 0:
        # absorb round-off so the inequality holds exactly
        alpha = alpha * (1.0 + 2 * excess)
    return alpha, 0.0


def lp_feasibility_at_beta(beta: float, gaps, generator: GeneratorMatrix, alpha_min: float = ALPHA_MIN):
    """For fixed ``beta`` the certificate is linear in ``alpha``; return a feasible alpha or None."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    alpha, _ = _solve_slice(beta, gaps, generator, alpha_min)
    return alpha


@dataclass(eq=False)
class Witness:
    alpha: np.ndarray
    beta: float
    c: float
    d: float
    gaps: np.ndarray
    lhs: np.ndarray
    rates: np.ndarray
    h: np.ndarray

    @property
    def feasible(self) -> bool:
        return True

    def to_dict(self) -> dict:
        return {
            "feasible": True,
            "alpha": self.alpha.tolist(),
            "beta": self.beta,
            "c": self.c,
            "d": self.d,
            "gaps": self.gaps.tolist(),
            "lhs": self.lhs.tolist(),
        }


@dataclass(eq=False)
class Infeasible:
    gaps: np.ndarray
    best_beta: float
    min_violation: float
    n_tried: int

    @property
    def feasible(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {
            "feasible": False,
            "gaps": self.gaps.tolist(),
            "best_beta": self.best_beta,
            "min_violation": self.min_violation,
            "n_tried": self.n_tried,
        }


def _bounded_constant(params, minima, generator, alpha, beta, c):
    """Additive drift constant collecting the bounded sub-region of the box."""
    h = LYAPUNOV_WEIGHTS[params.topology]
    box = minima.box
    _, hi = box.regions()[box.bounded_region]
    bracket = c * alpha + certificate_lhs(alpha, beta, 2.0 * params.total_inflow - minima.bounded, generator)
    v_ratio = math.exp(beta * float(h @ hi)) * alpha.max() / alpha.min()
    return v_ratio * float(np.abs(bracket).max())


def _witness(params, minima, generator, alpha, beta, gaps):
    c = 1.0 / alpha.max()
    d = _bounded_constant(params, minima, generator, alpha, beta, c)
    return Witness(
        alpha=alpha,
        beta=float(beta),
        c=c,
        d=d,
        gaps=gaps,
        lhs=certificate_lhs(alpha, beta, gaps, generator),
        rates=generator.rates,
        h=LYAPUNOV_WEIGHTS[params.topology],
    )


def sufficient_check(
    params: NetworkParams,
    minima: RegionMinima,
    generator: GeneratorMatrix,
    beta_min: float = BETA_MIN,
    beta_max: float = BETA_MAX,
    n_beta: int = N_BETA,
    alpha_min: float = ALPHA_MIN,
):
    """Search for a certificate ``(alpha, beta)``.

    Scans ``beta`` on a log grid (smallest feasible value wins). If nothing on
    the grid is feasible, one finer pass between the neighbours of the least
    violated grid point is tried before giving up with :class:`Infeasible`.
    """
    gaps = drift_gaps(params, minima)
    betas = np.geomspace(beta_min, beta_max, n_beta)
    violations = np.empty(n_beta)
    for k, beta in enumerate(betas):
        alpha, violations[k] = _solve_slice(beta, gaps, generator, alpha_min)
        if alpha is not None:
            return _witness(params, minima, generator, alpha, beta, gaps)
    k = int(np.argmin(violations))
    fine = np.geomspace(betas[max(k - 1, 0)], betas[min(k + 1, n_beta - 1)], N_REFINE)
    best_beta, best_violation = betas[k], violations[k]
    for beta in fine:
        alpha, viol = _solve_slice(beta, gaps, generator, alpha_min)
        if alpha is not None:
            return _witness(params, minima, generator, alpha, beta, gaps)
        if viol < best_violation:
            best_beta, best_violation = beta, viol
    return Infeasible(gaps, float(best_beta), float(best_violation), n_beta + N_REFINE)


@dataclass(frozen=True)
class DriftAudit:
    max_residual: float
    worst_mode: int
    worst_state: tuple

    def to_dict(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "worst_mode": self.worst_mode,
            "worst_state": list(self.worst_state),
        }


def _audit_grid(box: InvariantBox, params: NetworkParams, resolution: int) -> np.ndarray:
    cap = params.q_c + params.theta
    axes = []
    for lo, hi in zip(box.lower, box.upper):
        hi = max(cap, lo) if math.isinf(hi) else hi
        axes.append(np.linspace(lo, hi, resolution))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def drift_condition_audit(witness: Witness, params: NetworkParams, box: InvariantBox, resolution: int = 50) -> DriftAudit:
    """Largest value of ``(LV + cV - d) / V`` over a grid of the box, all modes.

    Dividing by ``V`` keeps the exponential from overflowing; a certificate is
    sound on the grid when the result is not positive. Unbounded coordinates
    are cut at ``q_c + theta``.
    """
    Q = _audit_grid(box, params, resolution)
    hq = Q @ witness.h
    alpha = witness.alpha
    worst = (-math.inf, 0, ())
    for i in range(params.m):
        qdot = drift_many(i, Q, params)
        switching = float(witness.rates[i] @ alpha) / alpha[i]
        with np.errstate(under="ignore", over="ignore"):
            tail = witness.d * np.exp(-witness.beta * hq) / alpha[i]
        r = witness.beta * (qdot @ witness.h) + switching + witness.c - tail
        k = int(np.argmax(r))
        if r[k] > worst[0]:
            worst = (float(r[k]), i, tuple(float(x) for x in Q[k]))
    return DriftAudit(*worst)


@dataclass(frozen=True)
class CertificateEvaluation:
    alpha: tuple
    beta: float
    lhs: tuple
    satisfied: tuple

    def to_dict(self) -> dict:
        return {
            "alpha": list(self.alpha),
            "beta": self.beta,
            "lhs": list(self.lhs),
            "satisfied": list(self.satisfied),
            "all_satisfied": all(self.satisfied),
        }


def evaluate_certificate(alpha, beta: float, gaps, generator: GeneratorMatrix) -> CertificateEvaluation:
    """Check a given ``(alpha, beta)`` mode by mode without searching."""
    lhs = certificate_lhs(alpha, beta, gaps, generator)
    return CertificateEvaluation(
        tuple(float(a) for a in alpha),
        float(beta),
        tuple(float(x) for x in lhs),
        tuple(bool(x <= -1.0 + RESIDUAL_TOL) for x in lhs),
    )
