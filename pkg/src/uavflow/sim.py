"""Sample-path simulation, tail-slope stability verdicts and empirical distributions."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ctmc import GeneratorMatrix, ModePath, sample_path, stationary_distribution
from .errors import ClampBudgetExceeded, EmptyBox, InvalidNetwork, TooFewSamples, UnstableQueue
from .netmodel import FLOW_LABELS, NetworkParams, Topology, check_state, flows_many
from .regions import invariant_box
from .stability import Verdict, single_queue_stability

DEFAULT_DT = 1e-3
DEFAULT_HORIZON = 200.0
CLAMP_BUDGET = 1e-3  # times theta
MIN_TAIL_SAMPLES = 10
UPSTREAM_CAP_FACTOR = 10.0


@dataclass(eq=False)
class Trajectory:
    t: np.ndarray
    modes: np.ndarray
    q: np.ndarray
    f: np.ndarray
    dt: float
    seed: int | None
    params: NetworkParams
    mode_path: ModePath
    clamp: np.ndarray  # signed projection applied to each queue, summed over steps
    clamp_total: float

    def __len__(self):
        return self.t.size

    def to_csv(self) -> str:
        n = self.q.shape[1]
        header = ["t", "mode"] + [f"q{j + 1}" for j in range(n)] + list(FLOW_LABELS[self.params.topology])
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for k in range(self.t.size):
            vals = [f"{self.t[k]:.6g}", str(int(self.modes[k]))]
            vals += [f"{x:.6g}" for x in self.q[k]]
            vals += [f"{x:.6g}" for x in self.f[k]]
            buf.write(",".join(vals) + "\n")
        return buf.getvalue()


def simulate(
    params: NetworkParams,
    generator: GeneratorMatrix,
    q0,
    i0: int = 0,
    horizon: float = DEFAULT_HORIZON,
    dt: float = DEFAULT_DT,
    seed=None,
    record_stride: int = 1,
) -> Trajectory:
    """Integrate the queue dynamics along one sampled mode path.

    RK4 with fixed step ``dt`` inside each constant-mode piece; the last step of
    a piece is shortened to land on the jump. After each step the state is
    projected onto the domain. The single queue uses its exact reflected
    step instead, so its projection is part of the dynamics and exempt from
    the clamp budget.
    """
    if generator.m != params.m:
        raise InvalidNetwork(f"generator has {generator.m} modes, capacities have {params.m}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if horizon < dt:
        raise ValueError("horizon must be at least dt")
    if record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    q0 = check_state(params, q0)
    path = sample_path(generator, i0, horizon, seed)
    edges = np.concatenate(([0.0], path.jump_times, [float(horizon)]))
    n_steps = sum(_kernels.segment_steps(edges[k], edges[k + 1], dt) for k in range(path.modes.size))
    n_rec = 1 + n_steps // record_stride
    k = params.n_queues
    out_t = np.empty(n_rec)
    out_mode = np.empty(n_rec, dtype=np.int64)
    out_q = np.empty((n_rec, k))
    out_f = np.empty((n_rec, k))
    clamp = np.zeros(k)
    v, w, theta, cap, inflow = params.kernel_args()
    clamp_total = _kernels.integrate(
        params.topology.code, v, w, theta, cap, inflow, q0.copy(), edges, path.modes,
        float(dt), int(record_stride), out_t, out_mode, out_q, out_f, clamp,
    )
    if params.topology is not Topology.SINGLE and clamp_total > CLAMP_BUDGET * params.theta:
        raise ClampBudgetExceeded(
            f"cumulative clamping {clamp_total:.3g} exceeds {CLAMP_BUDGET * params.theta:.3g}; reduce dt"
        )
    return Trajectory(out_t, out_mode, out_q, out_f, float(dt), seed, params, path, clamp, float(clamp_total))


def _hac_slope(t: np.ndarray, y: np.ndarray, bandwidth: int) -> tuple[float, float]:
    """OLS slope of ``y`` on ``t`` with a Bartlett-kernel (Newey-West) standard error."""
    tc = t - t.mean()
    sxx = float(tc @ tc)
    slope = float(tc @ (y - y.mean())) / sxx
    u = tc * (y - y.mean() - slope * tc)
    n = u.size
    ft = np.fft.rfft(u, 2 * n)
    acov = np.fft.irfft(ft * np.conj(ft), 2 * n)[: bandwidth + 1]
    weights = 1.0 - np.arange(1, bandwidth + 1) / (bandwidth + 1)
    s = acov[0] + 2.0 * float(weights @ acov[1:])
    return slope, math.sqrt(max(s, 0.0)) / sxx


@dataclass(frozen=True, eq=False)
class StabilityVerdict:
    slopes: np.ndarray
    stderr: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    tail_max: np.ndarray
    caps: np.ndarray  # nan where no cap applies
    bounded: bool

    def to_dict(self) -> dict:
        return {
            "bounded": self.bounded,
            "slopes": self.slopes.tolist(),
            "stderr": self.stderr.tolist(),
            "band": [list(p) for p in zip(self.band_lo.tolist(), self.band_hi.tolist())],
            "tail_max": self.tail_max.tolist(),
            "caps": [None if math.isnan(c) else c for c in self.caps.tolist()],
        }


def upstream_caps(params: NetworkParams) -> np.ndarray:
    """Divergence thresholds ``10 * (lower + q_c)`` for queues without a jam bound."""
    caps = np.full(params.n_queues, np.nan)
    if params.topology is Topology.SINGLE:
        return caps
    try:
        box = invariant_box(params)
    except EmptyBox:
        return caps
    for j in range(params.n_queues):
        if j != params.topology.bounded_queue:
            caps[j] = UPSTREAM_CAP_FACTOR * (box.lower[j] + box.q_c)
    return caps


def _tail(traj: Trajectory, tail_fraction: float):
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail fraction must be in (0, 1]")
    start = int(math.floor((1.0 - tail_fraction) * len(traj)))
    t, q = traj.t[start:], traj.q[start:]
    if t.size < MIN_TAIL_SAMPLES:
        raise TooFewSamples(f"tail has {t.size} samples, need {MIN_TAIL_SAMPLES}")
    return t, q


def _within_caps(tail_max, caps):
    return bool(np.all(np.isnan(caps) | (tail_max <= caps)))


def stability_metric(traj: Trajectory, tail_fraction: float = 0.5) -> StabilityVerdict:
    """Tail slope of every queue with a +/-2 standard-error band.

    Bounded when every band contains 0 and no upstream queue passes its cap.
    """
    t, q = _tail(traj, tail_fraction)
    bw = max(1, t.size // 10)
    est = [_hac_slope(t, q[:, j], bw) for j in range(q.shape[1])]
    slopes = np.array([s for s, _ in est])
    se = np.array([e for _, e in est])
    lo, hi = slopes - 2 * se, slopes + 2 * se
    tail_max = q.max(axis=0)
    caps = upstream_caps(traj.params)
    bounded = bool(np.all((lo <= 0) & (hi >= 0))) and _within_caps(tail_max, caps)
    return StabilityVerdict(slopes, se, lo, hi, tail_max, caps, bounded)


@dataclass(frozen=True, eq=False)
class EnsembleVerdict:
    slopes: np.ndarray  # (paths, queues)
    mean_slope: np.ndarray
    spread: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    tail_max: np.ndarray
    tail_mean: np.ndarray
    caps: np.ndarray
    bounded: bool

    def to_dict(self) -> dict:
        return {
            "bounded": self.bounded,
            "n_paths": int(self.slopes.shape[0]),
            "mean_slope": self.mean_slope.tolist(),
            "slope_spread": self.spread.tolist(),
            "band": [list(p) for p in zip(self.band_lo.tolist(), self.band_hi.tolist())],
            "tail_max": self.tail_max.tolist(),
            "tail_mean": self.tail_mean.tolist(),
            "caps": [None if math.isnan(c) else c for c in self.caps.tolist()],
        }


def ensemble_stability(trajs, tail_fraction: float = 0.5) -> EnsembleVerdict:
    """Verdict over independent paths.

    The band is the mean tail slope +/- 2 standard deviations of the per-path
    slopes, i.e. the spread of a single path rather than of the mean, which
    keeps false "unbounded" calls rare when many scenarios are screened.
    """
    trajs = list(trajs)
    if len(trajs) < 2:
        raise TooFewSamples("an ensemble needs at least two paths")
    slopes, tmax, tmean = [], [], []
    for tr in trajs:
        t, q = _tail(tr, tail_fraction)
        tc = t - t.mean()
        slopes.append((tc @ (q - q.mean(axis=0))) / (tc @ tc))
        tmax.append(q.max(axis=0))
        tmean.append(q.mean(axis=0))
    slopes = np.array(slopes)
    mean = slopes.mean(axis=0)
    spread = slopes.std(axis=0, ddof=1)
    lo, hi = mean - 2 * spread, mean + 2 * spread
    tail_max = np.max(tmax, axis=0)
    caps = upstream_caps(trajs[0].params)
    bounded = bool(np.all((lo <= 0) & (hi >= 0))) and _within_caps(tail_max, caps)
    return EnsembleVerdict(slopes, mean, spread, lo, hi, tail_max, np.mean(tmean, axis=0), caps, bounded)


def mass_balance_audit(traj: Trajectory) -> float:
    """Largest per-queue gap between the net change and the integrated net inflow.

    Trapezoid rule; the right end of each interval is re-evaluated in the
    interval's own mode so jumps do not smear. Recorded clamping is credited.
    Exact only for ``record_stride == 1``.
    """
    params = traj.params
    if len(traj) < 2:
        return 0.0
    f_right = flows_many(traj.modes[:-1], traj.q[1:], params)
    f_mid = 0.5 * (traj.f[:-1] + f_right)
    h = np.diff(traj.t)
    flow_int = (f_mid * h[:, None]).sum(axis=0)
    inflow_int = np.array(params.inflows) * (traj.t[-1] - traj.t[0])
    net = np.empty(params.n_queues)
    _kernels.net_from_flows(params.topology.code, flow_int, inflow_int, net)
    resid = traj.q[-1] - traj.q[0] - net - traj.clamp
    return float(np.abs(resid).max())


@dataclass(frozen=True, eq=False)
class EmpiricalCdf:
    grid: np.ndarray
    values: np.ndarray  # (len(grid), m)
    total_time: float

    def marginal(self) -> np.ndarray:
        return self.values.sum(axis=1)


def _occupation_below(grid, start_q, rate, duration):
    """Time each linear piece spends at or below each grid level; shape (pieces, grid)."""
    end_q = start_q + rate * duration
    low = np.minimum(start_q, end_q)[:, None]
    span = np.abs(end_q - start_q)[:, None]
    x = grid[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(span > 0, np.clip((x - low) / span, 0.0, 1.0), (x >= low).astype(float))
    return frac * duration[:, None]


def _single_pieces(params, path: ModePath, burn_in: float):
    a = params.inflows[0]
    c = params.capacities[0]
    q = 0.0
    starts, rates, durs, modes = [], [], [], []
    for t0, t1, mode in path.segments():
        r = a - c[mode]
        pieces = []
        h = t1 - t0
        if r < 0 and q + r * h < 0:
            hit = q / -r
            pieces = [(t0, hit, q, r), (t0 + hit, h - hit, 0.0, 0.0)]
            q_end = 0.0
        else:
            if q <= 0 and r <= 0:
                pieces = [(t0, h, 0.0, 0.0)]
                q_end = 0.0
            else:
                pieces = [(t0, h, q, r)]
                q_end = q + r * h
        for s, d, q_s, r_s in pieces:
            if s + d <= burn_in or d <= 0:
                continue
            if s < burn_in:
                cut = burn_in - s
                q_s, d = q_s + r_s * cut, d - cut
            starts.append(q_s)
            rates.append(r_s)
            durs.append(d)
            modes.append(mode)
        q = q_end
    return np.array(starts), np.array(rates), np.array(durs), np.array(modes, dtype=np.int64)


def empirical_cdf(
    params: NetworkParams,
    generator: GeneratorMatrix,
    grid,
    n_paths: int = 4,
    horizon: float = 5000.0,
    burn_in: float = 500.0,
    seed=None,
    i0: int = 0,
) -> EmpiricalCdf:
    """Time-averaged ``P(Q <= x, mode = j)`` for a single queue, started empty.

    Occupation times are exact because the queue is piecewise linear between
    mode jumps.
    """
    if params.topology is not Topology.SINGLE:
        raise InvalidNetwork("empirical_cdf needs a single-queue network")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if not 0 <= burn_in < horizon:
        raise ValueError("burn-in must lie in [0, horizon)")
    verdict = single_queue_stability(params.inflows[0], params.capacities[0], stationary_distribution(generator))
    if verdict is not Verdict.STABLE:
        raise UnstableQueue(f"queue is {verdict.value}; no stationary distribution")
    grid = np.asarray(grid, dtype=float)
    acc = np.zeros((grid.size, params.m))
    total = 0.0
    for child in np.random.SeedSequence(seed).spawn(n_paths):
        path = sample_path(generator, i0, horizon, int(child.generate_state(1)[0]))
        q0, r, d, modes = _single_pieces(params, path, burn_in)
        occ = _occupation_below(grid, q0, r, d)
        for j in range(params.m):
            acc[:, j] += occ[modes == j].sum(axis=0)
        total += float(d.sum())
    return EmpiricalCdf(grid, acc / total, total)
