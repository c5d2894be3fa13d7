"""Episode protocol, training-length and user-density sweeps, CSV output.

An episode runs ``J`` blocks over one user drop. Block 0 trains every user
with a dedicated warm-up length ``K`` and is not rated; blocks ``1..J-1``
select users with the policy under test at the common training length.

Sweeps split work into ``(drop, realization)`` units. Each unit draws its
channel trajectory once and replays it for every policy and training length,
so all policies are compared on identical channels, drops and (at equal
``tau``) identical training noise.
"""

from __future__ import annotations

import dataclasses
import io
import math
from typing import Sequence

import numpy as np

from . import _kernels
from .channel import channel_trajectory
from .config import RateUnit, SystemConfig
from .csi import CsiState, conserve, train_block
from .errors import InfeasibleError
from .geometry import UserDrop, sample_user_drop
from .rate import (DEFAULT_MAX_ITER, DEFAULT_TOL, DetEqProblem, block_rate_sample, det_eq_rate,
                   equivalent_noise, normalized_variances, solve_fixed_point)
from .selection import (Policy, SelectionOutcome, score_users, select_all, select_closest, select_dus,
                        select_random)
from .streams import EpisodeStreams, derive_stream

CSV_COLUMNS = ("policy", "tau", "k_users", "n_antennas", "block_length", "mc_rate_mean",
               "mc_rate_stderr", "deteq_rate_mean", "n_drops", "n_realizations",
               "is_tau_star")


@dataclasses.dataclass(frozen=True)
class BlockRecord:
    block: int
    selected: tuple[int, ...]
    beta: float
    mc_rate: float | None
    deteq_rate: float | None


@dataclasses.dataclass(frozen=True)
class EpisodeResult:
    policy: Policy
    tau: int
    warmup: BlockRecord
    blocks: tuple[BlockRecord, ...]

    @property
    def mean_rate(self) -> float:
        return float(np.mean([b.mc_rate for b in self.blocks]))

    @property
    def mean_deteq(self) -> float:
        return float(np.mean([b.deteq_rate for b in self.blocks]))


def check_feasible(policy: Policy, tau: int, config: SystemConfig) -> None:
    if not 0 <= tau <= config.block_length:
        raise InfeasibleError(f"tau={tau} outside [0, {config.block_length}]")
    if policy is Policy.FT and tau < config.n_users:
        raise InfeasibleError(f"FT needs tau >= K ({tau} < {config.n_users})")


def select_users(policy: Policy, csi: CsiState, drop: UserDrop, c: float, tau: int,
                 streams, block: int):
    """Training set for one selective block (0-based user indices)."""
    k = drop.n_users
    if policy is Policy.FT:
        return select_all(k, tau)
    if policy is Policy.US:
        return select_closest(drop, tau)
    if policy is Policy.RUS:
        return select_random(k, tau, streams("select", block))
    if tau == 0:
        return SelectionOutcome((), Policy.DUS)
    return select_dus(score_users(csi, drop, c, tau), tau, k)


def run_episode(config: SystemConfig, drop: UserDrop, policy, tau: int,
                streams: EpisodeStreams, channels=None, noiseless: bool = False,
                deteq: bool = True) -> EpisodeResult:
    """Simulate one ``J``-block episode and rate every selective block.

    ``channels`` may carry a precomputed trajectory (sweeps reuse it across
    policies). ``noiseless`` drops the training noise (test hook). Rates are
    in nats.
    """
    policy = Policy.parse(policy) if isinstance(policy, str) else policy
    check_feasible(policy, tau, config)
    n, k, c = config.n_antennas, config.n_users, config.temporal_corr
    t0 = config.block_length
    if channels is None:
        channels = channel_trajectory(drop, n, config.n_blocks, c, streams)

    def noise(block, length):
        return None if noiseless else streams.training_noise(block, n, length)

    csi = CsiState.empty(drop, n)
    everyone = np.arange(k)
    csi = train_block(csi, channels[0], everyone, drop, c, k, None, noise(0, k))
    warmup = BlockRecord(0, tuple(range(k)), equivalent_noise(csi).beta, None, None)

    records = []
    for b in range(1, config.n_blocks):
        outcome = select_users(policy, csi, drop, c, tau, streams, b)
        sel = outcome.indices
        csi = train_block(csi, channels[b], sel, drop, c, tau, None, noise(b, tau))
        served = sel if policy is Policy.US else None
        eq_noise = equivalent_noise(csi, served)
        h_used = csi.h_hat if served is None else csi.h_hat[:, served]
        mc = block_rate_sample(h_used, eq_noise, tau, t0, k)
        de = None
        if deteq:
            problem = normalized_variances(csi, n, tau, t0, served)
            de = det_eq_rate(problem, solve_fixed_point(problem))
        records.append(BlockRecord(b, outcome.trained, eq_noise.beta, mc, de))
    return EpisodeResult(policy, tau, warmup, tuple(records))


def deteq_episode(config: SystemConfig, drop: UserDrop, policy, tau: int,
                  streams: EpisodeStreams | None = None) -> float:
    """Mean deterministic-equivalent rate over the selective blocks of one
    episode, from tracked variances only (no channel or noise draws).

    Only RUS consumes randomness, from the same ``select`` streams
    :func:`run_episode` uses.
    """
    policy = Policy.parse(policy) if isinstance(policy, str) else policy
    check_feasible(policy, tau, config)
    n, k, c = config.n_antennas, config.n_users, config.temporal_corr
    t0 = config.block_length
    v = np.ascontiguousarray(drop.variances, dtype=np.float64)
    if policy is Policy.DUS:
        vhat_blocks = _kernels.dus_vhat(v, c, tau, k, config.n_blocks)
        served_blocks = [None] * config.n_blocks
    else:
        vhat_blocks = np.empty((config.n_blocks, k))
        vhat_blocks[0] = conserve(v, v - v / (1.0 + k * v))[0]
        served_blocks = [None] * config.n_blocks
        for b in range(1, config.n_blocks):
            if policy is Policy.RUS:
                sel = select_random(k, tau, streams("select", b)).indices
            elif policy is Policy.US:
                sel = select_closest(drop, tau).indices
                served_blocks[b] = sel
            else:
                sel = np.arange(k)
            vhat_blocks[b] = conserve(v, c * c * vhat_blocks[b - 1])[0]
            vhat_blocks[b, sel] = conserve(v[sel], v[sel] - v[sel] / (1.0 + tau * v[sel]))[0]
    frac = 1.0 - tau / t0
    if frac == 0.0:
        return 0.0
    total = 0.0
    for b in range(1, config.n_blocks):
        v_hat = vhat_blocks[b]
        v_tilde = v - v_hat
        served = served_blocks[b]
        if served is None:
            beta = float(np.sum(v_tilde))
            vbar = v_hat / (1.0 + beta)
        else:
            mask = np.zeros(k, dtype=bool)
            mask[served] = True
            beta = float(np.sum(v_tilde[mask]))
            vbar = np.where(mask, v_hat, 0.0) / (1.0 + beta)
        t, _, res, ok = _kernels.fixed_point(vbar, float(n), float(k), DEFAULT_TOL,
                                             DEFAULT_MAX_ITER)
        if not ok:
            # Re-run through the checked API to raise the proper error.
            solve_fixed_point(DetEqProblem(vbar, n, k, tau, t0))
        total += frac * max(_kernels.deteq_bracket(vbar, t, float(n), float(k)), 0.0) / k
    return total / (config.n_blocks - 1)


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class SweepSpec:
    config: SystemConfig
    policies: tuple[Policy, ...] = (Policy.DUS, Policy.RUS, Policy.US, Policy.FT)
    taus: tuple[int, ...] | None = None
    k_values: tuple[int, ...] | None = None
    n_drops: int = 1
    n_realizations: int = 100
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "policies",
                           tuple(Policy.parse(p) if isinstance(p, str) else p
                                 for p in self.policies))
        taus = self.taus
        if taus is None:
            taus = tuple(range(self.config.block_length + 1))
        object.__setattr__(self, "taus", tuple(int(t) for t in taus))
        if self.k_values is not None:
            object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
            if not self.k_values or min(self.k_values) < 1:
                raise ValueError("K grid must be non-empty and positive")
        if not self.policies:
            raise ValueError("policy list is empty")
        if not self.taus:
            raise ValueError("tau grid is empty")
        if min(self.taus) < 0 or max(self.taus) > self.config.block_length:
            raise ValueError(f"tau grid must lie in [0, {self.config.block_length}]")
        if self.n_drops < 1 or self.n_realizations < 1:
            raise ValueError("n_drops and n_realizations must be >= 1")


@dataclasses.dataclass(frozen=True)
class SweepRow:
    policy: Policy
    tau: int
    k_users: int
    n_antennas: int
    block_length: int
    mc_rate_mean: float
    mc_rate_stderr: float
    deteq_rate_mean: float
    n_drops: int
    n_realizations: int
    is_tau_star: bool = False


@dataclasses.dataclass
class SweepResult:
    """Table rows plus the per-unit episode means behind them (nats).

    ``samples[(policy, k_users, tau)]`` is an ``(n_drops, n_realizations)``
    array, unit-aligned across keys, for paired statistics.
    """

    rows: list[SweepRow]
    samples: dict
    unit: RateUnit = RateUnit.NATS

    def row(self, policy, tau=None, k_users=None) -> SweepRow:
        policy = Policy.parse(policy) if isinstance(policy, str) else policy
        for r in self.rows:
            if r.policy is policy and (tau is None or r.tau == tau) and \
                    (k_users is None or r.k_users == k_users):
                return r
        raise KeyError((policy, tau, k_users))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        conv = self.unit.convert
        for r in self.rows:
            fields = (r.policy.value, r.tau, r.k_users, r.n_antennas, r.block_length,
                      _fmt(conv(r.mc_rate_mean)), _fmt(conv(r.mc_rate_stderr)),
                      _fmt(conv(r.deteq_rate_mean)), r.n_drops, r.n_realizations,
                      int(r.is_tau_star))
            buf.write(",".join(str(f) for f in fields) + "\n")
        return buf.getvalue()


def _fmt(x: float) -> str:
    return repr(float(x))


def _stats(samples: np.ndarray) -> tuple[float, float]:
    flat = samples.ravel()
    mean = float(np.mean(flat))
    if flat.size < 2:
        return mean, math.nan
    return mean, float(np.std(flat, ddof=1) / math.sqrt(flat.size))


def drop_for(config: SystemConfig, drop_index: int) -> UserDrop:
    return sample_user_drop(config, derive_stream(config.rng_seed, "drop", drop_index))


def _run_unit(config: SystemConfig, drop: UserDrop, d: int, r: int, jobs_list):
    """All requested (policy, tau) episodes of one (drop, realization) unit.

    Returns ``(mc, deteq)`` arrays aligned with ``jobs_list``.
    """
    streams = EpisodeStreams(config.rng_seed, d, r)
    channels = channel_trajectory(drop, config.n_antennas, config.n_blocks,
                                  config.temporal_corr, streams)
    mc = np.empty(len(jobs_list))
    de = np.empty(len(jobs_list))
    last_tau = None
    for i in sorted(range(len(jobs_list)), key=lambda i: jobs_list[i][1]):
        policy, tau = jobs_list[i]
        if tau != last_tau:
            streams.clear_cache()
            last_tau = tau
        ep = run_episode(config, drop, policy, tau, streams, channels=channels)
        mc[i] = ep.mean_rate
        de[i] = ep.mean_deteq
    return mc, de


def _run_units(config, drops, jobs_list, n_realizations, jobs):
    """Evaluate every unit; results come back in (drop, realization) order."""
    tasks = [(d, r) for d in range(len(drops)) for r in range(n_realizations)]
    if jobs == 1:
        out = [_run_unit(config, drops[d], d, r, jobs_list) for d, r in tasks]
    else:
        from joblib import Parallel, delayed
        out = Parallel(n_jobs=jobs)(
            delayed(_run_unit)(config, drops[d], d, r, jobs_list) for d, r in tasks)
    mc = np.stack([o[0] for o in out]).reshape(len(drops), n_realizations, len(jobs_list))
    de = np.stack([o[1] for o in out]).reshape(len(drops), n_realizations, len(jobs_list))
    return mc, de


def _mark_tau_star(rows: list[SweepRow]) -> list[SweepRow]:
    best = {}
    for i, r in enumerate(rows):
        key = (r.policy, r.k_users)
        j = best.get(key)
        if j is None or r.deteq_rate_mean > rows[j].deteq_rate_mean or (
                r.deteq_rate_mean == rows[j].deteq_rate_mean and r.tau < rows[j].tau):
            best[key] = i
    chosen = set(best.values())
    return [dataclasses.replace(r, is_tau_star=(i in chosen)) for i, r in enumerate(rows)]


def sweep_tau(spec: SweepSpec) -> SweepResult:
    """Mean Monte Carlo and deterministic-equivalent rate per (policy, tau).

    FT rows below ``tau = K`` are omitted.
    """
    config = spec.config
    jobs_list = [(p, t) for p in spec.policies for t in spec.taus
                 if not (p is Policy.FT and t < config.n_users)]
    drops = [drop_for(config, d) for d in range(spec.n_drops)]
    mc, de = _run_units(config, drops, jobs_list, spec.n_realizations, spec.jobs)
    rows, samples = [], {}
    for i, (p, t) in enumerate(jobs_list):
        mean, se = _stats(mc[:, :, i])
        samples[(p, config.n_users, t)] = mc[:, :, i]
        rows.append(SweepRow(p, t, config.n_users, config.n_antennas, config.block_length,
                             mean, se, float(np.mean(de[:, :, i])), spec.n_drops,
                             spec.n_realizations))
    return SweepResult(_mark_tau_star(rows), samples, config.rate_unit)


def search_tau_star(config: SystemConfig, policy: Policy, taus, n_drops: int,
                    n_realizations: int = 1) -> tuple[int, dict]:
    """Training length maximizing the drop-averaged deterministic equivalent.

    Returns ``(tau_star, {tau: mean det-eq rate})``; ties go to the smaller tau.
    RUS averages over ``n_realizations`` selection draws per drop.
    """
    drops = [drop_for(config, d) for d in range(n_drops)]
    reps = n_realizations if policy is Policy.RUS else 1
    curve = {}
    for tau in taus:
        if policy is Policy.FT and tau < config.n_users:
            continue
        vals = [deteq_episode(config, drops[d], policy, tau,
                              EpisodeStreams(config.rng_seed, d, r))
                for d in range(n_drops) for r in range(reps)]
        curve[tau] = float(np.mean(vals))
    if not curve:
        raise InfeasibleError(f"no feasible tau for {policy.value} at K={config.n_users}")
    tau_star = max(curve, key=lambda t: (curve[t], -t))
    return tau_star, curve


def sweep_density(spec: SweepSpec) -> SweepResult:
    """Per (policy, K): pick tau* from the deterministic equivalent averaged over
    drops, then run Monte Carlo episodes at tau*.

    One row per (policy, K), marked as tau*.
    """
    base = spec.config
    k_values = spec.k_values or (base.n_users,)
    rows, samples = [], {}
    for k in k_values:
        config = base.replace(n_users=k)
        stars = {}
        for p in spec.policies:
            stars[p], _ = search_tau_star(config, p, spec.taus, spec.n_drops,
                                          spec.n_realizations)
        jobs_list = [(p, stars[p]) for p in spec.policies]
        drops = [drop_for(config, d) for d in range(spec.n_drops)]
        mc, de = _run_units(config, drops, jobs_list, spec.n_realizations, spec.jobs)
        for i, (p, t) in enumerate(jobs_list):
            mean, se = _stats(mc[:, :, i])
            samples[(p, k, t)] = mc[:, :, i]
            rows.append(SweepRow(p, t, k, config.n_antennas, config.block_length, mean, se,
                                 float(np.mean(de[:, :, i])), spec.n_drops,
                                 spec.n_realizations, True))
    return SweepResult(rows, samples, base.rate_unit)


def paired_difference(a: np.ndarray, b: np.ndarray, cluster_by_drop: bool = False):
    """Mean and standard error of ``a - b`` over matched units.

    With ``cluster_by_drop`` the unit is a whole drop (realizations averaged
    first), which is conservative when drops differ a lot.
    """
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if cluster_by_drop:
        diff = diff.reshape(diff.shape[0], -1).mean(axis=1)
    return _stats(diff)


def write_csv(result: SweepResult, path=None) -> str:
    text = result.to_csv()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def policies_from_csv(text: str | Sequence[str]) -> tuple[Policy, ...]:
    items = text.split(",") if isinstance(text, str) else text
    return tuple(Policy.parse(s) for s in items if s.strip())
