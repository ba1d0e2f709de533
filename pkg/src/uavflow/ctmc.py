"""Continuous-time Markov chain for weather-mode switching.

Modes are indexed from 0 throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    NegativeOffDiagonal,
    Reducible,
    RowSumNonzero,
    SingularBeyondRankOne,
    ValidationError,
)

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Validated CTMC generator; build it with :func:`validate_generator`."""

    rates: np.ndarray

    @property
    def m(self) -> int:
        return self.rates.shape[0]

    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.rates)

    def __eq__(self, other):
        return isinstance(other, GeneratorMatrix) and np.array_equal(self.rates, other.rates)

    def __hash__(self):
        return hash(self.rates.tobytes())


@dataclass(frozen=True)
class ModePath:
    jump_times: np.ndarray
    modes: np.ndarray
    horizon: float
    seed: int | None = None

    def mode_at(self, t: float) -> int:
        """Mode at time ``t`` (right-continuous at jumps)."""
        k = np.searchsorted(self.jump_times, t, side="right")
        return int(self.modes[k])

    def segments(self):
        """Yield ``(start, end, mode)`` for each constant-mode piece up to the horizon."""
        edges = np.concatenate(([0.0], self.jump_times, [self.horizon]))
        for k, mode in enumerate(self.modes):
            yield float(edges[k]), float(edges[k + 1]), int(mode)

    def occupation_times(self, m: int) -> np.ndarray:
        out = np.zeros(m)
        for start, end, mode in self.segments():
            out[mode] += end - start
        return out


def _strongly_connected(support: np.ndarray) -> bool:
    m = support.shape[0]

    def reach(adj):
        seen = np.zeros(m, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adj[i]):
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        return seen.all()

    return reach(support) and reach(support.T)


def validate_generator(rates) -> GeneratorMatrix:
    """Check ``rates`` is an irreducible CTMC generator and wrap it.

    Raises NegativeOffDiagonal, RowSumNonzero or Reducible.
    """
    arr = np.array(rates, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise ValidationError(f"generator must be a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("generator has non-finite entries")
    m = arr.shape[0]
    off = arr[~np.eye(m, dtype=bool)]
    if np.any(off < 0):
        raise NegativeOffDiagonal("off-diagonal jump rates must be nonnegative")
    scale = max(1.0, float(np.abs(arr).max()))
    row_sums = arr.sum(axis=1)
    bad = np.flatnonzero(np.abs(row_sums) > ROW_SUM_TOL * scale)
    if bad.size:
        i = int(bad[0])
        raise RowSumNonzero(f"row {i} sums to {row_sums[i]:.3g}, expected 0")
    if m > 1:
        support = (arr > 0) & ~np.eye(m, dtype=bool)
        if not _strongly_connected(support):
            raise Reducible("mode-switching chain is not irreducible")
    arr.setflags(write=False)
    return GeneratorMatrix(arr)


def stationary_distribution(g: GeneratorMatrix) -> np.ndarray:
    """Solve ``p @ rates = 0`` with ``sum(p) = 1``.

    Uses the least-squares solution of the stacked system ``[rates.T; 1] p = [0; 1]``.
    """
    m = g.m
    A = np.vstack([g.rates.T, np.ones((1, m))])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    p, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < m:
        raise SingularBeyondRankOne("generator null space has dimension > 1")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def sample_path(g: GeneratorMatrix, i0: int, horizon: float, seed=None) -> ModePath:
    """Sample a mode trajectory on ``[0, horizon)`` starting from mode ``i0``."""
    if not 0 <= i0 < g.m:
        raise ValidationError(f"initial mode {i0} outside 0..{g.m - 1}")
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    rng = np.random.default_rng(seed)
    exit_rates = g.exit_rates()
    jump = np.clip(g.rates, 0.0, None)
    np.fill_diagonal(jump, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cum = np.cumsum(jump, axis=1) / jump.sum(axis=1, keepdims=True)
    times: list[float] = []
    modes = [i0]
    t = 0.0
    i = i0
    while exit_rates[i] > 0:
        t += rng.exponential(1.0 / exit_rates[i])
        if t >= horizon:
            break
        i = min(int(np.searchsorted(cum[i], rng.random(), side="right")), g.m - 1)
        times.append(t)
        modes.append(i)
    return ModePath(np.array(times), np.array(modes, dtype=np.int64), float(horizon), seed)
