"""Single, tandem and merge fluid-queue networks with mode-dependent capacities.

Flow vectors are ordered ``[f]`` (single), ``[f12, f2]`` (tandem) and
``[f13, f23, f3]`` (merge). Single-queue states are vehicle counts; tandem and
merge states are link densities.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidNetwork, StateOutOfDomain


class Topology(str, enum.Enum):
    SINGLE = "single"
    TANDEM = "tandem"
    MERGE = "merge"

    @property
    def code(self) -> int:
        return {"single": _kernels.SINGLE, "tandem": _kernels.TANDEM, "merge": _kernels.MERGE}[self.value]

    @property
    def n_queues(self) -> int:
        return {"single": 1, "tandem": 2, "merge": 3}[self.value]

    @property
    def n_inflows(self) -> int:
        return 2 if self is Topology.MERGE else 1

    @property
    def bounded_queue(self) -> int | None:
        """Index of the finite-buffer queue, if any."""
        return {"single": None, "tandem": 1, "merge": 2}[self.value]


FLOW_LABELS = {
    Topology.SINGLE: ("f",),
    Topology.TANDEM: ("f12", "f2"),
    Topology.MERGE: ("f13", "f23", "f3"),
}


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """Topology, fundamental-diagram constants, per-mode capacities and inflows.

    ``capacities[j, i]`` is the capacity of queue ``j`` in mode ``i``.
    ``v``, ``w`` and ``theta`` are unused by the single queue and may be None there.
    """

    topology: Topology
    capacities: np.ndarray
    inflows: tuple
    v: float | None = None
    w: float | None = None
    theta: float | None = None

    def __post_init__(self):
        topo = Topology(self.topology)
        object.__setattr__(self, "topology", topo)
        cap = np.array(self.capacities, dtype=float)
        if cap.ndim == 1 and topo is Topology.SINGLE:
            cap = cap[None, :]
        if cap.ndim != 2 or cap.shape[1] < 1:
            raise InvalidNetwork(f"capacities must be a (queues x modes) matrix, got shape {cap.shape}")
        if cap.shape[0] != topo.n_queues:
            raise InvalidNetwork(
                f"{topo.value} topology needs {topo.n_queues} capacity rows, got {cap.shape[0]}"
            )
        cap.setflags(write=False)
        object.__setattr__(self, "capacities", cap)
        inflows = tuple(float(x) for x in np.atleast_1d(self.inflows))
        if len(inflows) != topo.n_inflows:
            raise InvalidNetwork(f"{topo.value} topology needs {topo.n_inflows} inflow(s), got {len(inflows)}")
        object.__setattr__(self, "inflows", inflows)
        for name in ("v", "w", "theta"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, float(val))
        _check_hard(self)

    @property
    def m(self) -> int:
        return self.capacities.shape[1]

    @property
    def n_queues(self) -> int:
        return self.topology.n_queues

    @property
    def total_inflow(self) -> float:
        return float(sum(self.inflows))

    @property
    def c_max(self) -> float:
        return float(self.capacities.max())

    @property
    def c_min(self) -> np.ndarray:
        return self.capacities.min(axis=1)

    @property
    def q_c(self) -> float:
        """Critical density: the density at which sending flow saturates."""
        return self.c_max / self.v

    def with_inflows(self, inflows) -> NetworkParams:
        return dataclasses.replace(self, inflows=tuple(np.atleast_1d(inflows)))

    def with_capacities(self, capacities) -> NetworkParams:
        return dataclasses.replace(self, capacities=np.array(capacities, dtype=float))

    def kernel_args(self):
        v = self.v if self.v is not None else 0.0
        w = self.w if self.w is not None else 0.0
        theta = self.theta if self.theta is not None else 0.0
        return (v, w, theta, np.ascontiguousarray(self.capacities), np.array(self.inflows))

    def to_dict(self) -> dict:
        out = {"topology": self.topology.value}
        for name in ("v", "w", "theta"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        out["capacities"] = self.capacities.tolist()
        out["inflows"] = list(self.inflows)
        return out

    def __eq__(self, other):
        return isinstance(other, NetworkParams) and self.to_dict() == other.to_dict()


def _check_hard(params: NetworkParams) -> None:
    if params.topology is not Topology.SINGLE:
        for name in ("v", "w", "theta"):
            val = getattr(params, name)
            if val is None:
                raise InvalidNetwork(f"{params.topology.value} topology requires {name}")
            if not np.isfinite(val) or val <= 0:
                raise InvalidNetwork(f"{name} must be positive, got {val}")
    if not np.all(np.isfinite(params.capacities)) or np.any(params.capacities <= 0):
        raise InvalidNetwork("all capacities must be positive")
    if any(not np.isfinite(a) or a < 0 for a in params.inflows):
        raise InvalidNetwork("inflows must be nonnegative")


def validate_network(params: NetworkParams) -> list[str]:
    """Return warnings for ``params``; hard violations raise InvalidNetwork.

    The critical-flow bound ``c_max <= v*w*theta/(v+w)`` is only a warning.
    """
    _check_hard(params)
    warnings = []
    if params.topology is not Topology.SINGLE:
        bound = params.v * params.w * params.theta / (params.v + params.w)
        if params.c_max > bound:
            warnings.append(
                f"critical-flow assumption violated: c_max {params.c_max:g} > v*w*theta/(v+w) {bound:g}"
            )
    return warnings


def check_state(params: NetworkParams, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (params.n_queues,):
        raise StateOutOfDomain(f"state must have length {params.n_queues}, got shape {q.shape}")
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise StateOutOfDomain(f"state {q} has negative or non-finite components")
    b = params.topology.bounded_queue
    if b is not None and q[b] > params.theta:
        raise StateOutOfDomain(f"q{b + 1}={q[b]:g} exceeds jam density {params.theta:g}")
    return q


def _check_mode(params, mode):
    if not 0 <= mode < params.m:
        raise ValueError(f"mode {mode} outside 0..{params.m - 1}")


def flows(mode: int, q, params: NetworkParams) -> np.ndarray:
    """Flow vector for ``params.topology`` at state ``q`` in ``mode``."""
    _check_mode(params, mode)
    q = check_state(params, q)
    out = np.empty(params.n_queues)
    v, w, theta, cap, inflow = params.kernel_args()
    _kernels.flows_into(params.topology.code, mode, q, v, w, theta, cap, inflow, out)
    return out


def single_flow(mode: int, q: float, params: NetworkParams) -> float:
    if params.topology is not Topology.SINGLE:
        raise InvalidNetwork("single_flow needs a single-queue network")
    return float(flows(mode, [q], params)[0])


def tandem_flows(mode: int, q, params: NetworkParams) -> np.ndarray:
    if params.topology is not Topology.TANDEM:
        raise InvalidNetwork("tandem_flows needs a tandem network")
    return flows(mode, q, params)


def merge_flows(mode: int, q, params: NetworkParams) -> np.ndarray:
    if params.topology is not Topology.MERGE:
        raise InvalidNetwork("merge_flows needs a merge network")
    return flows(mode, q, params)


def drift(mode: int, q, params: NetworkParams) -> np.ndarray:
    """Time derivative of the state by mass conservation."""
    _check_mode(params, mode)
    q = check_state(params, q)
    v, w, theta, cap, inflow = params.kernel_args()
    fbuf = np.empty(params.n_queues)
    out = np.empty(params.n_queues)
    _kernels.drift_into(params.topology.code, mode, q, v, w, theta, cap, inflow, fbuf, out)
    return out


def flows_many(modes, Q, params: NetworkParams) -> np.ndarray:
    """Vectorised :func:`flows` over rows of ``Q`` (no domain checks)."""
    Q = np.ascontiguousarray(Q, dtype=float)
    modes = np.broadcast_to(np.asarray(modes, dtype=np.int64), (Q.shape[0],)).copy()
    return _kernels.flows_batch(params.topology.code, modes, Q, *params.kernel_args())


def drift_many(modes, Q, params: NetworkParams) -> np.ndarray:
    Q = np.ascontiguousarray(Q, dtype=float)
    modes = np.broadcast_to(np.asarray(modes, dtype=np.int64), (Q.shape[0],)).copy()
    return _kernels.drift_batch(params.topology.code, modes, Q, *params.kernel_args())
