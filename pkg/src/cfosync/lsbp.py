"""Broadcast belief propagation with linear message scaling.

Instead of per-neighbor cavity messages, every agent broadcasts its full
belief once per round; receivers convert the cached neighbor belief into an
incoming message through the shared edge measurement and multiply.  One
round therefore costs one message per agent.

The belief-variance recursion induced by this update is a monotone map on
precision vectors; from a feasible start (the map moves every coordinate
the same way) the per-agent variance trajectory is monotone and converges
to a unique fixed point regardless of the start.  Belief means then follow
a linear contraction whose iteration matrix is substochastic for connected
graphs, so they converge from arbitrary initial means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .gaussian import FLAT, Gaussian1D, edge_message
from .graph import Graph
from .model import MeasurementSet

DEFAULT_REFERENCE_PRECISION = 1e12
DEFAULT_MEAN_TOL = 1e-9
DEFAULT_PREC_TOL = 1e-12

ZERO_PRECISION = "zero_precision"
UNIFORM_VARIANCE = "uniform"


@dataclass(frozen=True)
class BeliefInit:
    """Initial belief for every non-reference agent.

    zero_precision starts flat (the always-feasible choice); uniform starts
    every agent at N(mean, variance), reproducing fixed-variance sweeps.
    """

    mode: str = ZERO_PRECISION
    variance: float = 1.0
    mean: float = 0.0

    def __post_init__(self):
        if self.mode not in (ZERO_PRECISION, UNIFORM_VARIANCE):
            raise ValueError(f"unknown init mode {self.mode!r}")
        if self.mode == UNIFORM_VARIANCE and self.variance <= 0:
            raise ValueError("uniform init requires variance > 0")

    def as_gaussian(self) -> Gaussian1D:
        if self.mode == ZERO_PRECISION:
            return FLAT
        return Gaussian1D.from_moments(self.mean, self.variance)


def incoming_message(cached: Gaussian1D, r: float, sigma2: float) -> Gaussian1D:
    """Message into f_i from a cached neighbor belief over f_j: variance
    grows by sigma2, mean is r minus the neighbor mean; flat stays flat."""
    return edge_message(r, sigma2, cached)


def combine_incoming(messages) -> Gaussian1D:
    """Belief = product of incoming messages; empty or all-flat input
    stays flat."""
    out = FLAT
    for m in messages:
        out = out * m
    return out


def nonref_agents(graph: Graph) -> list[int]:
    return sorted(graph.agents - {graph.reference})


def variance_map(graph: Graph, meas: MeasurementSet, p: np.ndarray,
                 ref_precision: float = DEFAULT_REFERENCE_PRECISION) -> np.ndarray:
    """One application of the belief-precision update.

    `p` holds precisions of non-reference agents in sorted-id order; entry 0
    encodes an infinite-variance (flat) neighbor.  The reference agent is
    pinned at `ref_precision` and is not part of the vector.  Pure function,
    shared by the simulator's tests and the feasibility check.
    """
    ids = nonref_agents(graph)
    if len(p) != len(ids):
        raise ValueError(f"expected {len(ids)} entries, got {len(p)}")
    if np.any(np.asarray(p) < 0):
        raise ValueError("precisions must be >= 0")
    var = {a: (1.0 / pa if pa > 0 else math.inf) for a, pa in zip(ids, p)}
    var[graph.reference] = 1.0 / ref_precision
    out = np.zeros(len(ids))
    for k, i in enumerate(ids):
        acc = 0.0
        for j in graph.neighbors(i):
            vj = var[j]
            if math.isinf(vj):
                continue
            acc += 1.0 / (meas.sigma2(i, j) + vj)
        out[k] = acc
    return out


def variance_map_bound(graph: Graph, meas: MeasurementSet,
                       ref_precision: float = DEFAULT_REFERENCE_PRECISION) -> np.ndarray:
    """Elementwise upper bound of the precision update: the image of
    zero-variance (perfectly known) neighbors, i.e. sum_j 1/sigma2_ij.

    Every finite-precision input maps strictly below this bound in each
    coordinate that has at least one non-reference neighbor.
    """
    ids = nonref_agents(graph)
    out = np.zeros(len(ids))
    for k, i in enumerate(ids):
        acc = 0.0
        for j in graph.neighbors(i):
            s2 = meas.sigma2(i, j)
            if j == graph.reference:
                s2 += 1.0 / ref_precision
            acc += 1.0 / s2
        out[k] = acc
    return out


def is_feasible_start(graph: Graph, meas: MeasurementSet, p0: np.ndarray,
                      ref_precision: float = DEFAULT_REFERENCE_PRECISION,
                      slack: float = 1e-12) -> bool:
    """True iff the precision update moves every coordinate of p0 the same
    way (elementwise >= or elementwise <=), the start condition under which
    the variance trajectory is monotone."""
    diff = variance_map(graph, meas, p0, ref_precision) - np.asarray(p0)
    return bool(np.all(diff >= -slack) or np.all(diff <= slack))


def variance_fixed_point(graph: Graph, meas: MeasurementSet,
                         ref_precision: float = DEFAULT_REFERENCE_PRECISION,
                         tol: float = 1e-14, max_iter: int = 100000) -> np.ndarray:
    """Iterate the precision update from the flat start until stationary.
    Returns precisions of non-reference agents in sorted-id order."""
    p = np.zeros(len(nonref_agents(graph)))
    for _ in range(max_iter):
        p_next = variance_map(graph, meas, p, ref_precision)
        if np.max(np.abs(p_next - p), initial=0.0) <= tol:
            return p_next
        p = p_next
    raise NumericError(f"variance iteration did not settle within {max_iter} steps")


# ---------------------------------------------------------------------------
# Simulation engine
# ---------------------------------------------------------------------------

class LsbpEngine:
    """Vectorized round engine for the broadcast algorithm.

    State is held in dense arrays indexed by position in the sorted agent-id
    list: belief precision/mean per agent, and per-receiver caches of the
    last successfully received neighbor belief.  Caches start at each
    neighbor's declared initial belief (flat under zero_precision init) and
    are only overwritten by successful deliveries, which is what makes the
    update well-defined under packet loss.
    """

    def __init__(self, graph: Graph, meas: MeasurementSet, init: BeliefInit,
                 reference_value: float,
                 reference_precision: float = DEFAULT_REFERENCE_PRECISION):
        self.graph = graph
        self.meas = meas
        self.init = init
        self.reference_value = float(reference_value)
        self.reference_precision = float(reference_precision)

        self.ids = sorted(graph.agents)
        self.index = {a: k for k, a in enumerate(self.ids)}
        n = len(self.ids)
        self.n = n
        self.ref = self.index[graph.reference]

        self.adj = np.zeros((n, n), dtype=bool)
        self.sig2 = np.zeros((n, n))
        self.r = np.zeros((n, n))
        for (i, j) in graph.edges:
            a, b = self.index[i], self.index[j]
            m = meas.get(i, j)
            for (x, y) in ((a, b), (b, a)):
                self.adj[x, y] = True
                self.sig2[x, y] = m.sigma2
                self.r[x, y] = m.r

        g0 = init.as_gaussian()
        self.prec = np.full(n, g0.precision)
        self.mean = np.full(n, 0.0 if g0.is_flat else g0.mean())
        self.prec[self.ref] = self.reference_precision
        self.mean[self.ref] = self.reference_value

        # cache[i, j]: receiver i's copy of sender j's belief
        self.cache_prec = np.zeros((n, n))
        self.cache_mean = np.zeros((n, n))
        if not g0.is_flat:
            self.cache_prec[self.adj] = g0.precision
            self.cache_mean[self.adj] = g0.mean()
            # the reference's declared initial belief is its pin
            refcol = self.adj[:, self.ref]
            self.cache_prec[refcol, self.ref] = self.reference_precision
            self.cache_mean[refcol, self.ref] = self.reference_value

    # -- state views --------------------------------------------------------

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        """(means with NaN at flat agents, precisions), aligned to self.ids."""
        means = self.mean.copy()
        means[self.prec == 0.0] = np.nan
        return means, self.prec.copy()

    def has_pending_information(self) -> bool:
        """True while some agent's belief is still flat even though its
        inbox holds an informative entry; a zero-delta round in that state
        is start-up lag, not convergence."""
        flat = self.prec == 0.0
        inbox_informative = (self.cache_prec > 0.0).any(axis=1)
        return bool(np.any(flat & inbox_informative))

    def estimates(self) -> dict[int, float | None]:
        return {a: (float(self.mean[k]) if self.prec[k] > 0 else None)
                for a, k in self.index.items()}

    def variances(self) -> dict[int, float]:
        return {a: (1.0 / float(self.prec[k]) if self.prec[k] > 0 else math.inf)
                for a, k in self.index.items()}

    def beliefs(self) -> dict[int, Gaussian1D]:
        out = {}
        for a, k in self.index.items():
            p = float(self.prec[k])
            out[a] = Gaussian1D(p, p * float(self.mean[k])) if p > 0 else FLAT
        return out

    # -- rounds --------------------------------------------------------------

    def _receive(self, delivered_mask: np.ndarray) -> None:
        self.cache_prec = np.where(delivered_mask, self.prec[None, :], self.cache_prec)
        self.cache_mean = np.where(delivered_mask, self.mean[None, :], self.cache_mean)

    def _recompute_rows(self, rows: np.ndarray) -> None:
        """Recompute beliefs of the agents selected by boolean mask `rows`
        from the current caches (the reference is never recomputed)."""
        with np.errstate(divide="ignore"):
            var = np.where(self.cache_prec > 0, 1.0 / self.cache_prec, np.inf)
        w = np.where(self.adj, 1.0 / (self.sig2 + var), 0.0)
        prec_new = w.sum(axis=1)
        num = (w * (self.r - self.cache_mean)).sum(axis=1)
        mean_new = np.divide(num, prec_new, out=np.zeros(self.n),
                             where=prec_new > 0)
        rows = rows.copy()
        rows[self.ref] = False
        self.prec[rows] = prec_new[rows]
        self.mean[rows] = mean_new[rows]

    def sync_round(self, delivered: np.ndarray | None = None,
                   skip: np.ndarray | None = None) -> None:
        """One synchronous round: every non-skipped agent broadcasts its
        current belief, deliveries land in the caches, then all agents
        recompute from the cache snapshot."""
        mask = self.adj.copy()
        if delivered is not None:
            mask &= delivered
        if skip is not None:
            mask &= ~skip[None, :]
        self._receive(mask)
        self._recompute_rows(np.ones(self.n, dtype=bool))

    def async_round(self, order: list[int],
                    delivered: np.ndarray | None = None,
                    skip: np.ndarray | None = None) -> None:
        """Agents update one at a time in `order` (agent ids); each updated
        agent broadcasts before the next one updates."""
        for a in order:
            k = self.index[a]
            if k != self.ref:
                sel = np.zeros(self.n, dtype=bool)
                sel[k] = True
                self._recompute_rows(sel)
            if skip is not None and skip[k]:
                continue
            col = self.adj[:, k].copy()
            if delivered is not None:
                col &= delivered[:, k]
            self.cache_prec[col, k] = self.prec[k]
            self.cache_mean[col, k] = self.mean[k]

    # -- dynamic topology ----------------------------------------------------

    def rebuilt(self, graph: Graph, meas: MeasurementSet) -> "LsbpEngine":
        """New engine for a changed topology, carrying over the beliefs and
        cache entries of surviving agents/pairs.  Departed agents' cache
        entries are purged with them; newly joined agents start from the
        declared initial belief."""
        new = LsbpEngine(graph, meas, self.init, self.reference_value,
                         self.reference_precision)
        for a in graph.agents:
            if a in self.index:
                k_old, k_new = self.index[a], new.index[a]
                new.prec[k_new] = self.prec[k_old]
                new.mean[k_new] = self.mean[k_old]
        for (i, j) in graph.edges:
            if i in self.index and j in self.index:
                oi, oj = self.index[i], self.index[j]
                if self.adj[oi, oj]:
                    ni, nj = new.index[i], new.index[j]
                    new.cache_prec[ni, nj] = self.cache_prec[oi, oj]
                    new.cache_mean[ni, nj] = self.cache_mean[oi, oj]
                    new.cache_prec[nj, ni] = self.cache_prec[oj, oi]
                    new.cache_mean[nj, ni] = self.cache_mean[oj, oi]
        return new


# ---------------------------------------------------------------------------
# Convergence detection
# ---------------------------------------------------------------------------

def step_delta(prev: tuple[np.ndarray, np.ndarray],
               cur: tuple[np.ndarray, np.ndarray]) -> tuple[float, float]:
    """(max mean change, max precision change) between two snapshots.
    An agent switching between flat and informative counts as an infinite
    mean change; flat-to-flat contributes nothing."""
    m0, p0 = prev
    m1, p1 = cur
    dprec = float(np.max(np.abs(p1 - p0), initial=0.0))
    flat0, flat1 = p0 == 0, p1 == 0
    if np.any(flat0 != flat1):
        return math.inf, dprec
    both = ~flat0
    dmean = float(np.max(np.abs(m1[both] - m0[both]), initial=0.0))
    return dmean, dprec


def detect_convergence(snapshots, mean_tol: float = DEFAULT_MEAN_TOL,
                       prec_tol: float = DEFAULT_PREC_TOL) -> int | None:
    """First iteration from which the recorded trace stays converged: every
    later step changes means by less than mean_tol and precisions by less
    than prec_tol.  Returns None when the final step still moves (or fewer
    than two snapshots exist).

    `snapshots` is a sequence of (means, precisions) pairs as produced by
    the engines' snapshot(), indexed by iteration starting at 0.
    """
    if len(snapshots) < 2:
        return None
    settled_from = 1
    for l in range(1, len(snapshots)):
        dmean, dprec = step_delta(snapshots[l - 1], snapshots[l])
        if not (dmean < mean_tol and dprec < prec_tol):
            settled_from = l + 1
    if settled_from >= len(snapshots):
        return None
    return settled_from


# ---------------------------------------------------------------------------
# Estimator front end
# ---------------------------------------------------------------------------

class LinearScalingBP:
    """Estimator-style front end for lossless runs on a static graph.

    Parameters mirror the engine; fit() iterates rounds until the per-round
    change falls below the tolerances or max_iter is reached, then exposes
    estimates_ (dict id -> Hz, None while flat), variances_, n_iter_,
    converged_.
    """

    def __init__(self, init: str = ZERO_PRECISION, init_variance: float = 1.0,
                 init_mean: float = 0.0, max_iter: int = 1000,
                 mean_tol: float = DEFAULT_MEAN_TOL,
                 prec_tol: float = DEFAULT_PREC_TOL,
                 reference_precision: float = DEFAULT_REFERENCE_PRECISION,
                 schedule: str = "synchronous", seed: int = 0):
        self.init = init
        self.init_variance = init_variance
        self.init_mean = init_mean
        self.max_iter = max_iter
        self.mean_tol = mean_tol
        self.prec_tol = prec_tol
        self.reference_precision = reference_precision
        self.schedule = schedule
        self.seed = seed

    _param_names = ("init", "init_variance", "init_mean", "max_iter",
                    "mean_tol", "prec_tol", "reference_precision",
                    "schedule", "seed")

    def get_params(self, deep: bool = True) -> dict:
        return {k: getattr(self, k) for k in self._param_names}

    def set_params(self, **params) -> "LinearScalingBP":
        for k, v in params.items():
            if k not in self._param_names:
                raise ValueError(f"unknown parameter {k!r}")
            setattr(self, k, v)
        return self

    def fit(self, graph: Graph, measurements: MeasurementSet,
            reference_value: float = 0.0) -> "LinearScalingBP":
        if self.schedule not in ("synchronous", "asynchronous"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        init = BeliefInit(mode=self.init, variance=self.init_variance,
                          mean=self.init_mean)
        engine = LsbpEngine(graph, measurements, init, reference_value,
                            self.reference_precision)
        rng = np.random.default_rng(self.seed)
        prev = engine.snapshot()
        self.converged_ = False
        self.n_iter_ = 0
        for l in range(1, self.max_iter + 1):
            if self.schedule == "synchronous":
                engine.sync_round()
            else:
                order = [engine.ids[k] for k in rng.permutation(engine.n)]
                engine.async_round(order)
            cur = engine.snapshot()
            self.n_iter_ = l
            dmean, dprec = step_delta(prev, cur)
            if dmean < self.mean_tol and dprec < self.prec_tol and \
                    not engine.has_pending_information():
                self.converged_ = True
                break
            prev = cur
        self.estimates_ = engine.estimates()
        self.variances_ = engine.variances()
        self.engine_ = engine
        return self

    def _check_fitted(self):
        if not hasattr(self, "estimates_"):
            raise RuntimeError("estimator is not fitted; call fit() first")

    def predict(self) -> dict[int, float | None]:
        self._check_fitted()
        return dict(self.estimates_)
