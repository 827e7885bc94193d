"""Monte Carlo engine.

Replications are split into fixed-size blocks; each block derives its own
noise streams from (seed, block index, noise kind) and simulates all of
its replications as (block, n) arrays.  Per-block partial statistics are
merged in block order, so results are bit-identical for any thread count,
and two runs with the same plan consume identical noise (common random
numbers) because every policy draws the same shapes in the same order.

Per-round statistics treat the replication as the sampling unit: the
reported variance / mean-absolute-stretch are means over replications of
the per-replication agent averages, and standard errors come from the
replication-level spread of those averages.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from . import streams
from .analysis import var_limit
from .kalman import AlphaSchedule
from .model import ModelConfig, stretch_values
from .policies import PolicyFn, PolicySpec, make_policy

DEFAULT_BLOCK_SIZE = 20_000


@dataclass(frozen=True)
class RunPlan:
    """One Monte Carlo job: a scenario, a policy, and replication count.

    horizon defaults to cfg.horizon.  block_size is part of the result's
    identity (changing it reorders float reductions); threads is not.
    """

    cfg: ModelConfig
    policy: Union[PolicySpec, PolicyFn]
    replications: int
    policy_b: Union[PolicySpec, PolicyFn, None] = None
    horizon: Optional[int] = None
    record_com: bool = False
    record_traces: bool = False
    record_moments: bool = False
    stat_agent: Optional[int] = None
    threads: int = 1
    block_size: int = DEFAULT_BLOCK_SIZE

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if self.block_size < 1:
            raise ValueError(f"block_size must be >= 1, got {self.block_size}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.horizon is not None and self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        if self.stat_agent is not None and not 0 <= self.stat_agent < self.cfg.n:
            raise ValueError(f"stat_agent must be in [0, {self.cfg.n}), got {self.stat_agent}")

    @property
    def rounds(self) -> int:
        return self.cfg.horizon if self.horizon is None else self.horizon


@dataclass
class RoundStats:
    """Cross-replication statistics of the stretch at the start of a round."""

    round: int
    var_stretch: float
    mean_abs_stretch: float
    std_error: float
    var_std_error: float
    skewness: Optional[float] = None
    excess_kurtosis: Optional[float] = None
    center_of_mass: Optional[float] = None


@dataclass
class RunResult:
    rounds: List[RoundStats]
    # per-round max over replications of |sum of stretches|; zero in exact arithmetic
    max_abs_stretch_sum: np.ndarray = field(repr=False)
    com_traces: Optional[np.ndarray] = None  # (rounds+1, reps) when traced
    stretch_traces: Optional[np.ndarray] = None  # (rounds+1, reps, n) when traced

    def __iter__(self):
        return iter(self.rounds)

    def __len__(self):
        return len(self.rounds)

    def __getitem__(self, i):
        return self.rounds[i]


@dataclass
class PairedRunResult:
    """CRN-paired traces of two policies under one plan.

    diff_* summarize the replication-level difference (policy_b minus
    policy_a) of the per-round mean absolute stretch.  shift_* summarize
    the per-agent move difference (policy_a minus policy_b): its common
    value, its spread across agents, and, when a shift rule is supplied,
    the worst deviation from the rule's prediction.
    """

    stats_a: List[RoundStats]
    stats_b: List[RoundStats]
    max_stretch_diff: np.ndarray
    diff_mean: np.ndarray
    diff_se: np.ndarray
    shift_mean: np.ndarray
    shift_spread: np.ndarray
    shift_rule_dev: Optional[np.ndarray]
    com_traces_a: Optional[np.ndarray] = None
    com_traces_b: Optional[np.ndarray] = None
    stretch_traces_a: Optional[np.ndarray] = None
    stretch_traces_b: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SweepPoint:
    rho: float
    var_empirical: float
    var_closed_form: float


def _blocks(replications: int, block_size: int):
    """Deterministic partition of replication indices into blocks."""
    out = []
    start = 0
    index = 0
    while start < replications:
        count = min(block_size, replications - start)
        out.append((index, count))
        start += count
        index += 1
    return out


def _compile(plan: RunPlan, which: str = "a") -> PolicyFn:
    policy = plan.policy if which == "a" else plan.policy_b
    if isinstance(policy, PolicySpec):
        schedule = AlphaSchedule(plan.cfg, plan.rounds)
        return make_policy(policy, plan.cfg, schedule)
    if not callable(policy):
        raise ValueError(f"policy must be a PolicySpec or callable, got {policy!r}")
    return policy


class _Accumulator:
    """Per-block sums for one policy's per-round statistics."""

    def __init__(self, rounds: int, plan: RunPlan):
        shape = rounds + 1
        self.sum_sq = np.zeros(shape)
        self.sum_sq2 = np.zeros(shape)
        self.sum_abs = np.zeros(shape)
        self.sum_abs2 = np.zeros(shape)
        self.max_zero_sum = np.zeros(shape)
        self.plan = plan
        if plan.record_moments:
            self.pow_sums = np.zeros((shape, 4))
        else:
            self.pow_sums = None
        if plan.record_com:
            self.com_sum = np.zeros(shape)
        else:
            self.com_sum = None

    def record(self, t: int, st: np.ndarray, pos: np.ndarray):
        plan = self.plan
        if plan.stat_agent is None:
            sq = np.einsum("ij,ij->i", st, st) / st.shape[1]
            ab = np.abs(st).mean(axis=1)
        else:
            col = st[:, plan.stat_agent]
            sq = col * col
            ab = np.abs(col)
        self.sum_sq[t] = sq.sum()
        self.sum_sq2[t] = (sq * sq).sum()
        self.sum_abs[t] = ab.sum()
        self.sum_abs2[t] = (ab * ab).sum()
        self.max_zero_sum[t] = np.abs(st.sum(axis=1)).max()
        if self.pow_sums is not None:
            st2 = st * st
            self.pow_sums[t] = (st.sum(), st2.sum(), (st2 * st).sum(), (st2 * st2).sum())
        if self.com_sum is not None:
            self.com_sum[t] = pos.mean(axis=1).sum()
        return ab

    def merge(self, other: "_Accumulator"):
        self.sum_sq += other.sum_sq
        self.sum_sq2 += other.sum_sq2
        self.sum_abs += other.sum_abs
        self.sum_abs2 += other.sum_abs2
        np.maximum(self.max_zero_sum, other.max_zero_sum, out=self.max_zero_sum)
        if self.pow_sums is not None:
            self.pow_sums += other.pow_sums
        if self.com_sum is not None:
            self.com_sum += other.com_sum


def _mean_and_se(total: np.ndarray, total_sq: np.ndarray, count: int):
    mean = total / count
    if count < 2:
        return mean, np.zeros_like(mean)
    var = np.maximum(total_sq - count * mean * mean, 0.0) / (count - 1)
    return mean, np.sqrt(var / count)


def _finalize(acc: _Accumulator, count: int, n: int) -> List[RoundStats]:
    var, var_se = _mean_and_se(acc.sum_sq, acc.sum_sq2, count)
    mabs, mabs_se = _mean_and_se(acc.sum_abs, acc.sum_abs2, count)
    rounds = []
    for t in range(len(var)):
        skew = kurt = com = None
        if acc.pow_sums is not None:
            skew, kurt = _shape_moments(acc.pow_sums[t], count * n)
        if acc.com_sum is not None:
            com = acc.com_sum[t] / count
        rounds.append(RoundStats(
            round=t,
            var_stretch=float(var[t]),
            mean_abs_stretch=float(mabs[t]),
            std_error=float(mabs_se[t]),
            var_std_error=float(var_se[t]),
            skewness=skew,
            excess_kurtosis=kurt,
            center_of_mass=com,
        ))
    return rounds


def _shape_moments(pows: np.ndarray, count: int):
    """Skewness and excess kurtosis from pooled power sums."""
    p1, p2, p3, p4 = pows / count
    m2 = p2 - p1 * p1
    if m2 <= 0:
        return 0.0, 0.0
    m3 = p3 - 3 * p1 * p2 + 2 * p1 ** 3
    m4 = p4 - 4 * p1 * p3 + 6 * p1 * p1 * p2 - 3 * p1 ** 4
    return float(m3 / m2 ** 1.5), float(m4 / (m2 * m2) - 3.0)


def _run_block(plan: RunPlan, policy: PolicyFn, index: int, count: int):
    cfg = plan.cfg
    rounds = plan.rounds
    gen_init = streams.substream(cfg.seed, index, streams.INIT)
    gen_meas = streams.substream(cfg.seed, index, streams.MEASURE)
    gen_drift = streams.substream(cfg.seed, index, streams.DRIFT)

    acc = _Accumulator(rounds, plan)
    traces = _TraceBuffer(plan, rounds, count) if plan.record_traces else None
    pos = gen_init.normal(0.0, cfg.sigma0, (count, cfg.n))
    for t in range(rounds + 1):
        st = stretch_values(pos)
        acc.record(t, st, pos)
        if traces is not None:
            traces.record(t, st, pos, 0)
        if t == rounds:
            break
        y = st + gen_meas.normal(0.0, cfg.sigma_m, (count, cfg.n))
        pos = pos + policy(y, t) + gen_drift.normal(0.0, cfg.sigma_d, (count, cfg.n))
    return acc, traces


class _TraceBuffer:
    """Full per-replication traces; only sensible for small runs."""

    LIMIT = 50_000_000

    def __init__(self, plan: RunPlan, rounds: int, count: int, pair: bool = False):
        lanes = 2 if pair else 1
        self.stretch = np.empty((lanes, rounds + 1, count, plan.cfg.n))
        self.com = np.empty((lanes, rounds + 1, count))

    def record(self, t: int, st: np.ndarray, pos: np.ndarray, lane: int):
        self.stretch[lane, t] = st
        self.com[lane, t] = pos.mean(axis=1)


def _merge_traces(traces, axis_reps: int = 2):
    if traces[0] is None:
        return None
    return np.concatenate([tr for tr in traces], axis=axis_reps)


def _check_trace_size(plan: RunPlan, pair: bool) -> None:
    """Reject whole-run trace requests that would not fit in memory."""
    if not plan.record_traces:
        return
    cells = (plan.rounds + 1) * plan.replications * plan.cfg.n * (2 if pair else 1)
    if cells > _TraceBuffer.LIMIT:
        raise ValueError(
            f"trace recording would allocate {cells} cells "
            f"(limit {_TraceBuffer.LIMIT}); reduce replications or horizon")


def _dispatch(plan: RunPlan, worker):
    """Run one worker per block and merge results in block order."""
    blocks = _blocks(plan.replications, plan.block_size)
    if plan.threads == 1 or len(blocks) == 1:
        return [worker(index, count) for index, count in blocks]
    with ThreadPoolExecutor(max_workers=plan.threads) as pool:
        return list(pool.map(lambda bc: worker(*bc), blocks))


def run(plan: RunPlan) -> RunResult:
    """Simulate the plan and return per-round statistics."""
    _check_trace_size(plan, pair=False)
    policy = _compile(plan)
    parts = _dispatch(plan, lambda index, count: _run_block(plan, policy, index, count))

    total = parts[0][0]
    for acc, _ in parts[1:]:
        total.merge(acc)
    rounds = _finalize(total, plan.replications, plan.cfg.n)

    result = RunResult(rounds=rounds, max_abs_stretch_sum=total.max_zero_sum)
    if plan.record_traces:
        stretch = np.concatenate([tr.stretch for _, tr in parts], axis=2)
        com = np.concatenate([tr.com for _, tr in parts], axis=2)
        result.stretch_traces = stretch[0]
        result.com_traces = com[0]
    return result


def _run_block_paired(plan: RunPlan, policy_a: PolicyFn, policy_b: PolicyFn,
                      shift_rule, index: int, count: int):
    cfg = plan.cfg
    rounds = plan.rounds
    gen_init = streams.substream(cfg.seed, index, streams.INIT)
    gen_meas = streams.substream(cfg.seed, index, streams.MEASURE)
    gen_drift = streams.substream(cfg.seed, index, streams.DRIFT)

    acc_a = _Accumulator(rounds, plan)
    acc_b = _Accumulator(rounds, plan)
    max_diff = np.zeros(rounds + 1)
    diff_sum = np.zeros(rounds + 1)
    diff_sum2 = np.zeros(rounds + 1)
    shift_sum = np.zeros(rounds + 1)
    shift_spread = np.zeros(rounds + 1)
    rule_dev = np.zeros(rounds + 1) if shift_rule is not None else None
    traces = _TraceBuffer(plan, rounds, count, pair=True) if plan.record_traces else None

    pos_a = gen_init.normal(0.0, cfg.sigma0, (count, cfg.n))
    pos_b = pos_a.copy()
    for t in range(rounds + 1):
        st_a = stretch_values(pos_a)
        st_b = stretch_values(pos_b)
        ab_a = acc_a.record(t, st_a, pos_a)
        ab_b = acc_b.record(t, st_b, pos_b)
        max_diff[t] = np.abs(st_a - st_b).max()
        d = ab_b - ab_a
        diff_sum[t] = d.sum()
        diff_sum2[t] = (d * d).sum()
        if traces is not None:
            traces.record(t, st_a, pos_a, 0)
            traces.record(t, st_b, pos_b, 1)
        if t == rounds:
            break
        noise_m = gen_meas.normal(0.0, cfg.sigma_m, (count, cfg.n))
        y_a = st_a + noise_m
        y_b = st_b + noise_m
        mv_a = policy_a(y_a, t)
        mv_b = policy_b(y_b, t)
        move_diff = mv_a - mv_b
        common = move_diff.mean(axis=1)
        shift_sum[t] = common.sum()
        shift_spread[t] = np.abs(move_diff - common[:, np.newaxis]).max()
        if rule_dev is not None:
            rule_dev[t] = np.abs(common - shift_rule(y_a, t)).max()
        drift = gen_drift.normal(0.0, cfg.sigma_d, (count, cfg.n))
        pos_a = pos_a + mv_a + drift
        pos_b = pos_b + mv_b + drift
    return (acc_a, acc_b, max_diff, diff_sum, diff_sum2, shift_sum,
            shift_spread, rule_dev, traces)


def run_paired(plan: RunPlan, shift_rule=None) -> PairedRunResult:
    """Simulate plan.policy and plan.policy_b under identical noise.

    shift_rule, when given, is a callable (measurements, t) -> predicted
    common move shift per replication; the result reports the worst
    per-round deviation of the observed shift from the prediction.
    """
    if plan.policy_b is None:
        raise ValueError("run_paired needs plan.policy_b")
    _check_trace_size(plan, pair=True)
    policy_a = _compile(plan, "a")
    policy_b = _compile(plan, "b")
    parts = _dispatch(
        plan,
        lambda index, count: _run_block_paired(plan, policy_a, policy_b,
                                               shift_rule, index, count))

    acc_a, acc_b = parts[0][0], parts[0][1]
    max_diff, diff_sum, diff_sum2 = parts[0][2], parts[0][3], parts[0][4]
    shift_sum, shift_spread, rule_dev = parts[0][5], parts[0][6], parts[0][7]
    for part in parts[1:]:
        acc_a.merge(part[0])
        acc_b.merge(part[1])
        np.maximum(max_diff, part[2], out=max_diff)
        diff_sum += part[3]
        diff_sum2 += part[4]
        shift_sum += part[5]
        np.maximum(shift_spread, part[6], out=shift_spread)
        if rule_dev is not None:
            np.maximum(rule_dev, part[7], out=rule_dev)

    reps = plan.replications
    diff_mean, diff_se = _mean_and_se(diff_sum, diff_sum2, reps)
    result = PairedRunResult(
        stats_a=_finalize(acc_a, reps, plan.cfg.n),
        stats_b=_finalize(acc_b, reps, plan.cfg.n),
        max_stretch_diff=max_diff,
        diff_mean=diff_mean,
        diff_se=diff_se,
        shift_mean=shift_sum / reps,
        shift_spread=shift_spread,
        shift_rule_dev=rule_dev,
    )
    if plan.record_traces:
        stretch = np.concatenate([part[8].stretch for part in parts], axis=2)
        com = np.concatenate([part[8].com for part in parts], axis=2)
        result.stretch_traces_a, result.stretch_traces_b = stretch[0], stretch[1]
        result.com_traces_a, result.com_traces_b = com[0], com[1]
    return result


def steady_state_variance(result: Union[RunResult, Sequence[RoundStats]]) -> float:
    """Average per-round variance over the final 10% of rounds."""
    rounds = list(result)
    tail = max(1, len(rounds) // 10)
    return float(np.mean([r.var_stretch for r in rounds[-tail:]]))


def sweep_rho(cfg: ModelConfig, grid: Sequence[float], replications: int,
              horizon: Optional[int] = None, threads: int = 1,
              block_size: int = DEFAULT_BLOCK_SIZE) -> List[SweepPoint]:
    """Steady-state stretch variance under W(rho) for each grid value.

    All grid points share the scenario seed, so their noise realizations
    are common random numbers and the empirical curve inherits the shape
    of the true one far below the single-point noise level.  Points whose
    closed form is infinite (rho = 0) are still simulated; their tail
    estimate is a horizon artifact, not a steady state.
    """
    points = []
    for rho in grid:
        plan = RunPlan(cfg=cfg, policy=PolicySpec(kind="weighted", rho=float(rho)),
                       replications=replications, horizon=horizon,
                       threads=threads, block_size=block_size)
        points.append(SweepPoint(rho=float(rho),
                                 var_empirical=steady_state_variance(run(plan)),
                                 var_closed_form=var_limit(rho, cfg)))
    return points
