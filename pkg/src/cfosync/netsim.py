"""Experiment orchestration: iteration loop, packet loss, dynamic topology.

Every source of randomness flows through a named, seeded stream derived from
the master seed, so whole experiments are bit-reproducible:

    truth     [master_seed, 1]        shared by all trials
    noise     [master_seed, 2, trial] measurement noise, redrawn per trial
    loss      [master_seed, 3, trial] packet delivery and broadcast skips
    schedule  [master_seed, 4, trial] asynchronous update order
    joiners   [master_seed, 1, id]    true offset of an agent joining mid-run

Timeline semantics: an event stamped k fires at the boundary after round k
has been recorded, so its first visible effect is in row k+1.  A joining
agent broadcasts for the first time in round k+1.  Trials stop early once
the per-round change falls below the configured tolerances and no timeline
events remain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bp import BpEngine
from .config import (ExperimentConfig, join_radius, parse_sigma_overrides,
                     parse_topology, validate_config)
from .errors import ConfigError
from .graph import Graph
from .lsbp import BeliefInit, LsbpEngine, step_delta
from .metrics import IterationRow, MetricError, RunTrace, avg_mse, count_flat
from .model import (GroundTruth, MeasurementSet, draw_joiner_offset,
                    generate_measurements, generate_truth)
from . import oracle as oracle_mod
from .lsbp import variance_fixed_point

STREAM_TRUTH = 1
STREAM_NOISE = 2
STREAM_LOSS = 3
STREAM_SCHEDULE = 4


@dataclass(frozen=True)
class NetworkModel:
    """Lossy broadcast medium: each (sender, receiver, iteration) triple is
    an independent Bernoulli(pdr) delivery; with probability skip_prob an
    agent skips broadcasting for one iteration (one-round staleness, the
    cache makes a delayed message equivalent to drop-then-deliver)."""

    pdr: float = 1.0
    skip_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.pdr <= 1.0:
            raise ValueError("pdr must lie in [0, 1]")
        if not 0.0 <= self.skip_prob < 1.0:
            raise ValueError("skip_prob must lie in [0, 1)")


def deliver(sender: int, receivers, model: NetworkModel, rng) -> dict[int, bool]:
    """Per-receiver delivery decisions for one broadcast."""
    return {r: bool(rng.random() < model.pdr) for r in sorted(receivers)}


@dataclass(frozen=True)
class TimelineEvent:
    iteration: int
    kind: str                       # "leave" | "join"
    agent: int | None = None        # leave target
    position: tuple[float, float] | None = None  # join placement


def parse_timeline(text: str) -> list[TimelineEvent]:
    events = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(":")
        if len(pieces) != 3:
            raise ConfigError(f"bad timeline entry {part!r}")
        when, kind, payload = pieces
        try:
            iteration = int(when)
        except ValueError:
            raise ConfigError(f"bad timeline iteration {when!r}")
        if iteration < 0:
            raise ConfigError(f"timeline iteration must be >= 0: {part!r}")
        if kind == "leave":
            try:
                events.append(TimelineEvent(iteration, "leave", agent=int(payload)))
            except ValueError:
                raise ConfigError(f"bad leave target {payload!r}")
        elif kind == "join":
            try:
                x, y = (float(s) for s in payload.split(","))
            except ValueError:
                raise ConfigError(f"bad join position {payload!r}")
            events.append(TimelineEvent(iteration, "join", position=(x, y)))
        else:
            raise ConfigError(f"unknown timeline event kind {kind!r}")
    if any(b.iteration < a.iteration for a, b in zip(events, events[1:])):
        raise ConfigError("timeline iterations must be non-decreasing")
    return events


def validate_timeline(events: list[TimelineEvent], graph: Graph,
                      cfg: ExperimentConfig) -> None:
    """Replay the id evolution so bad leave targets fail before the run."""
    sim = graph
    for ev in events:
        if ev.kind == "leave":
            if ev.agent not in sim.agents:
                raise ConfigError(f"timeline removes unknown agent {ev.agent}")
            if ev.agent == sim.reference:
                raise ConfigError("timeline may not remove the reference agent")
            sim = sim.remove_agent(ev.agent)
        else:
            if sim.positions is None:
                raise ConfigError("timeline joins require a positioned topology")
            join_radius(cfg)  # raises if unavailable
            sim, _ = sim.add_agent(ev.position, join_radius(cfg))


@dataclass
class MessageCounters:
    broadcasts_sent: int = 0
    point_to_point_sent: int = 0
    deliveries: int = 0
    drops: int = 0

    @property
    def sends(self) -> int:
        return self.broadcasts_sent or self.point_to_point_sent


@dataclass
class _TrialResult:
    rows: list[IterationRow]
    converged_at: int | None
    diverged: bool
    final_graph: Graph
    final_meas: MeasurementSet
    truth: GroundTruth


def _make_engine(cfg: ExperimentConfig, graph: Graph, meas: MeasurementSet,
                 truth: GroundTruth):
    if cfg.algorithm == "lsbp":
        init = BeliefInit(mode=cfg.init_mode, variance=cfg.init_variance,
                          mean=cfg.init_mean)
        return LsbpEngine(graph, meas, init, truth.reference_value,
                          cfg.reference_precision)
    return BpEngine(graph, meas, truth.reference_value, cfg.reference_precision)


def _record(iteration: int, engine, graph: Graph, truth: GroundTruth,
            cfg: ExperimentConfig, counters: MessageCounters) -> IterationRow:
    estimates = engine.estimates()
    variances = {a: (None if v == float("inf") else v)
                 for a, v in engine.variances().items()}
    try:
        mse = avg_mse(estimates, truth.offsets, cfg.mse_normalization)
    except MetricError:
        mse = float("nan")
    isolated = tuple(sorted(a for a in graph.agents
                            if a != graph.reference and graph.degree(a) == 0))
    return IterationRow(
        iteration=iteration, means=estimates, variances=variances,
        avg_mse=mse, broadcasts=counters.sends,
        deliveries=counters.deliveries, drops=counters.drops,
        n_flat=count_flat(estimates), unobservable=isolated)


def _apply_event(ev: TimelineEvent, cfg: ExperimentConfig, graph: Graph,
                 truth: GroundTruth, meas: MeasurementSet, engine, trial: int):
    if ev.kind == "leave":
        graph = graph.remove_agent(ev.agent)
        meas = meas.without_agent(ev.agent)
    else:
        graph, new_id = graph.add_agent(ev.position, join_radius(cfg))
        truth = truth.with_offset(
            new_id, draw_joiner_offset([cfg.master_seed, STREAM_TRUTH], new_id,
                                       cfg.max_offset))
        new_edges = [e for e in graph.edges if new_id in e]
        fresh = generate_measurements(
            graph, truth, cfg.sigma,
            seed=[cfg.master_seed, STREAM_NOISE, trial, new_id],
            sigma_overrides=parse_sigma_overrides(cfg.sigma_overrides),
            edges=new_edges)
        meas = meas.merged_with(fresh)
    engine = engine.rebuilt(graph, meas)
    return graph, truth, meas, engine


def _run_trial(cfg: ExperimentConfig, graph: Graph, truth: GroundTruth,
               events: list[TimelineEvent], trial: int) -> _TrialResult:
    meas = generate_measurements(
        graph, truth, cfg.sigma, seed=[cfg.master_seed, STREAM_NOISE, trial],
        sigma_overrides=parse_sigma_overrides(cfg.sigma_overrides))
    engine = _make_engine(cfg, graph, meas, truth)
    loss_rng = np.random.default_rng([cfg.master_seed, STREAM_LOSS, trial])
    sched_rng = np.random.default_rng([cfg.master_seed, STREAM_SCHEDULE, trial])

    rows = [_record(0, engine, graph, truth, cfg, MessageCounters())]
    prev = engine.snapshot()
    converged_at = None
    diverged = False
    pending = list(events)

    for l in range(1, cfg.l_max + 1):
        while pending and pending[0].iteration <= l - 1:
            ev = pending.pop(0)
            graph, truth, meas, engine = _apply_event(
                ev, cfg, graph, truth, meas, engine, trial)
            prev = engine.snapshot()
            converged_at = None

        n = engine.n
        skip = None
        if cfg.skip_prob > 0:
            skip = loss_rng.random(n) < cfg.skip_prob
        delivered = None
        if cfg.pdr < 1.0:
            delivered = loss_rng.random((n, n)) < cfg.pdr

        if cfg.algorithm == "lsbp" and cfg.schedule == "asynchronous":
            order = [engine.ids[k] for k in sched_rng.permutation(n)]
            engine.async_round(order, delivered, skip)
        else:
            engine.sync_round(delivered, skip)

        counters = _count_messages(cfg, engine, delivered, skip)
        rows.append(_record(l, engine, graph, truth, cfg, counters))

        if getattr(engine, "diverged", False):
            diverged = True
            break
        cur = engine.snapshot()
        dmean, dprec = step_delta(prev, cur)
        prev = cur
        if converged_at is None and dmean < cfg.mean_tol and \
                dprec < cfg.prec_tol and not engine.has_pending_information():
            converged_at = l
        if converged_at is not None and not pending:
            break

    return _TrialResult(rows=rows, converged_at=converged_at, diverged=diverged,
                        final_graph=graph, final_meas=meas, truth=truth)


def _count_messages(cfg: ExperimentConfig, engine, delivered, skip) -> MessageCounters:
    adj = engine.adj
    n = engine.n
    active = np.ones(n, dtype=bool) if skip is None else ~skip
    intended = adj & active[None, :]
    n_intended = int(intended.sum())
    if delivered is None:
        n_delivered = n_intended
    else:
        n_delivered = int((intended & delivered).sum())
    c = MessageCounters(deliveries=n_delivered, drops=n_intended - n_delivered)
    if cfg.algorithm == "lsbp":
        c.broadcasts_sent = int(active.sum())
    else:
        c.point_to_point_sent = n_intended
    return c


def _aggregate(trials: list[_TrialResult], cfg: ExperimentConfig) -> RunTrace:
    horizon = max(len(t.rows) for t in trials)
    rows = []
    for l in range(horizon):
        per_trial = [t.rows[min(l, len(t.rows) - 1)] for t in trials]
        agents = sorted(per_trial[0].means)
        means, variances = {}, {}
        for a in agents:
            mvals = [r.means[a] for r in per_trial if r.means.get(a) is not None]
            vvals = [r.variances[a] for r in per_trial
                     if r.variances.get(a) is not None]
            means[a] = float(np.mean(mvals)) if mvals else None
            variances[a] = float(np.mean(vvals)) if vvals else None
        rows.append(IterationRow(
            iteration=l,
            means=means,
            variances=variances,
            avg_mse=float(np.mean([r.avg_mse for r in per_trial])),
            broadcasts=float(np.mean([r.broadcasts for r in per_trial])),
            deliveries=float(np.mean([r.deliveries for r in per_trial])),
            drops=float(np.mean([r.drops for r in per_trial])),
            n_flat=int(round(np.mean([r.n_flat for r in per_trial]))),
            unobservable=per_trial[0].unobservable,
        ))
    per_conv = [t.converged_at for t in trials]
    converged_at = None if any(c is None for c in per_conv) else max(per_conv)
    return RunTrace(
        rows=rows,
        converged_at=converged_at,
        diverged=any(t.diverged for t in trials),
        final_estimates=rows[-1].means if rows else {},
        per_trial_converged_at=per_conv,
        per_trial_final_mse=[t.rows[-1].avg_mse for t in trials],
    )


def _attach_oracle(trace: RunTrace, trials: list[_TrialResult],
                   cfg: ExperimentConfig) -> None:
    final_graph = trials[0].final_graph
    truth = trials[0].truth
    pstar = variance_fixed_point(final_graph, trials[0].final_meas,
                                 cfg.reference_precision)
    wls_acc: dict[int, list[float]] = {}
    for t in trials:
        sys = oracle_mod.build_linear_system(t.final_graph, t.final_meas,
                                             truth.reference_value)
        for a, v in oracle_mod.wls_solve(sys).items():
            wls_acc.setdefault(a, []).append(v)
    sys0 = oracle_mod.build_linear_system(final_graph, trials[0].final_meas,
                                          truth.reference_value)
    fps = oracle_mod.build_fixed_point_system(
        final_graph, trials[0].final_meas, pstar, truth.reference_value,
        cfg.reference_precision)
    trace.oracle = {
        "rho_K": oracle_mod.spectral_radius(fps.K),
        "crlb": oracle_mod.crlb(sys0),
        "crlb_avg": oracle_mod.avg_crlb(sys0, cfg.mse_normalization),
        "wls_mean": {a: float(np.mean(vs)) for a, vs in sorted(wls_acc.items())},
    }


def run_experiment(cfg: ExperimentConfig) -> RunTrace:
    """Run the configured experiment across its Monte-Carlo trials.

    Trials share the topology and true offsets; noise, loss, and schedule
    streams are trial-indexed.  Rows are averaged across trials (a trial
    that stopped early holds its final state).  The reported converged_at
    is the max over trials of each trial's first convergence after its last
    timeline event, or None if any trial never converged.
    """
    validate_config(cfg)
    graph = parse_topology(cfg)
    events = parse_timeline(cfg.timeline)
    validate_timeline(events, graph, cfg)
    overrides = parse_sigma_overrides(cfg.sigma_overrides)
    for edge in overrides:
        if edge not in graph.edges:
            raise ConfigError(f"sigma override for non-edge {edge}")
    truth = generate_truth(graph, cfg.max_offset,
                           seed=[cfg.master_seed, STREAM_TRUTH, 0])
    trials = [_run_trial(cfg, graph, truth, events, t)
              for t in range(cfg.trials)]
    trace = _aggregate(trials, cfg)
    if cfg.oracle:
        _attach_oracle(trace, trials, cfg)
    return trace
