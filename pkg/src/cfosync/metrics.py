"""Error metrics and run traces.

The headline metric is the normalized average mean-square error over agents
that currently hold an estimate: mean of ((estimate - truth)/B)^2 with a
configurable scale constant B.  Traces hold one record per iteration with
per-agent state, the metric, and message counters; they serialize to a CSV
whose floats round-trip exactly, plus a JSON summary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MetricError


def avg_mse(estimates: dict[int, float | None], truth: dict[int, float],
            mse_normalization: float = 1.0) -> float:
    """Average of ((estimate - truth)/B)^2 over agents with an estimate.

    Agents whose estimate is None (flat belief) are excluded; callers that
    need the excluded count use `count_flat`.  Raises MetricError when no
    agent has an estimate.
    """
    if mse_normalization <= 0:
        raise MetricError("mse_normalization must be > 0")
    errs = []
    for agent, value in estimates.items():
        if value is None:
            continue
        errs.append(((value - truth[agent]) / mse_normalization) ** 2)
    if not errs:
        raise MetricError("no agent holds an estimate; metric undefined")
    return sum(errs) / len(errs)


def count_flat(estimates: dict[int, float | None]) -> int:
    return sum(1 for v in estimates.values() if v is None)


@dataclass
class IterationRow:
    """State after one iteration: per-agent estimate/variance (None while
    flat), the MSE over defined estimates, and message counters.  Counters
    are 'messages sent' in the algorithm's own unit: broadcasts for the
    linear-scaling variant, directed sends for per-edge BP."""

    iteration: int
    means: dict[int, float | None]
    variances: dict[int, float | None]
    avg_mse: float
    broadcasts: float = 0.0
    deliveries: float = 0.0
    drops: float = 0.0
    n_flat: int = 0
    unobservable: tuple[int, ...] = ()


@dataclass
class RunTrace:
    """Complete record of one experiment (trial-averaged when the config
    requests Monte-Carlo trials)."""

    rows: list[IterationRow] = field(default_factory=list)
    converged_at: int | None = None
    diverged: bool = False
    final_estimates: dict[int, float | None] = field(default_factory=dict)
    per_trial_converged_at: list[int | None] = field(default_factory=list)
    per_trial_final_mse: list[float] = field(default_factory=list)
    oracle: dict | None = None

    @property
    def final_mse(self) -> float:
        if not self.rows:
            raise MetricError("empty trace")
        return self.rows[-1].avg_mse


TRACE_COLUMNS = ("iteration", "agent", "mean", "variance", "avg_mse",
                 "broadcasts", "deliveries", "drops")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def trace_to_csv(trace: RunTrace) -> str:
    lines = [",".join(TRACE_COLUMNS)]
    for row in trace.rows:
        for agent in sorted(row.means):
            lines.append(",".join([
                str(row.iteration),
                str(agent),
                _fmt(row.means[agent]),
                _fmt(row.variances[agent]),
                repr(float(row.avg_mse)),
                _fmt(float(row.broadcasts)),
                _fmt(float(row.deliveries)),
                _fmt(float(row.drops)),
            ]))
    return "\n".join(lines) + "\n"


def write_trace(trace: RunTrace, path) -> None:
    Path(path).write_text(trace_to_csv(trace), encoding="utf-8")


def read_trace_csv(text: str) -> list[dict]:
    """Parse trace CSV back into row dicts; floats round-trip exactly."""
    lines = [ln for ln in text.splitlines() if ln]
    header = lines[0].split(",")
    if tuple(header) != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace header {header}")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        rec = dict(zip(header, parts))
        rec["iteration"] = int(rec["iteration"])
        rec["agent"] = int(rec["agent"])
        for k in ("mean", "variance"):
            rec[k] = float(rec[k]) if rec[k] else None
        for k in ("avg_mse", "broadcasts", "deliveries", "drops"):
            rec[k] = float(rec[k])
        out.append(rec)
    return out


def rows_from_trace(trace: RunTrace) -> list[dict]:
    """The same flat records trace_to_csv emits, straight from memory."""
    out = []
    for row in trace.rows:
        for agent in sorted(row.means):
            mean = row.means[agent]
            var = row.variances[agent]
            out.append({
                "iteration": row.iteration,
                "agent": agent,
                "mean": None if mean is None else float(mean),
                "variance": None if var is None else float(var),
                "avg_mse": float(row.avg_mse),
                "broadcasts": float(row.broadcasts),
                "deliveries": float(row.deliveries),
                "drops": float(row.drops),
            })
    return out


def summary_dict(trace: RunTrace) -> dict:
    out = {
        "final_estimates": {str(a): trace.final_estimates[a]
                            for a in sorted(trace.final_estimates)},
        "converged_at": trace.converged_at,
        "diverged": trace.diverged,
        "mse_avg": trace.final_mse if trace.rows else None,
        "iterations": trace.rows[-1].iteration if trace.rows else 0,
        "per_trial_converged_at": trace.per_trial_converged_at,
    }
    if trace.oracle is not None:
        out["rho_K"] = trace.oracle.get("rho_K")
        out["crlb_avg"] = trace.oracle.get("crlb_avg")
        out["wls_mean"] = {str(a): v for a, v in
                           sorted(trace.oracle.get("wls_mean", {}).items())}
        out["crlb"] = {str(a): v for a, v in
                       sorted(trace.oracle.get("crlb", {}).items())}
    return out


def write_summary(trace: RunTrace, path) -> None:
    text = json.dumps(summary_dict(trace), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")
