"""Ground-truth frequency offsets and noisy pairwise measurements.

Each agent i carries a pre-compensation shift f_i (Hz).  For every edge
{i, j} the system observes one measurement r = f_i + f_j + n with
n ~ N(0, sigma^2).  The reference agent's shift is known exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentStateError
from .graph import Graph, canonical_edge

DEFAULT_MAX_OFFSET_HZ = 200.0
# Noiseless generation still needs a positive variance so precision
# arithmetic stays finite.
NOISELESS_SIGMA2 = 1e-12


@dataclass(frozen=True)
class GroundTruth:
    """Per-agent true offsets; the reference agent's value is known to the
    system and pins the estimate."""

    offsets: dict[int, float]
    reference: int

    def __post_init__(self):
        if self.reference not in self.offsets:
            raise ValueError("reference agent has no offset")

    @property
    def reference_value(self) -> float:
        return self.offsets[self.reference]

    def with_offset(self, agent: int, value: float) -> "GroundTruth":
        offs = dict(self.offsets)
        offs[agent] = float(value)
        return GroundTruth(offsets=offs, reference=self.reference)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("i,f\n")
        for a in sorted(self.offsets):
            buf.write(f"{a},{self.offsets[a]!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, reference: int = 1) -> "GroundTruth":
        offsets = {}
        for line in text.splitlines()[1:]:
            if not line.strip():
                continue
            a, f = line.split(",")
            offsets[int(a)] = float(f)
        return cls(offsets=offsets, reference=reference)


@dataclass(frozen=True)
class Measurement:
    edge: tuple[int, int]
    r: float
    sigma2: float

    def __post_init__(self):
        if self.sigma2 <= 0.0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")
        object.__setattr__(self, "edge", canonical_edge(*self.edge))


@dataclass
class MeasurementSet:
    """One measurement per edge, queried symmetrically in (i, j)."""

    _by_edge: dict[tuple[int, int], Measurement] = field(default_factory=dict)

    def add(self, m: Measurement) -> None:
        self._by_edge[m.edge] = m

    def get(self, i: int, j: int) -> Measurement:
        try:
            return self._by_edge[canonical_edge(i, j)]
        except KeyError:
            raise InconsistentStateError(f"no measurement for edge {{{i},{j}}}")

    def r(self, i: int, j: int) -> float:
        return self.get(i, j).r

    def sigma2(self, i: int, j: int) -> float:
        return self.get(i, j).sigma2

    def edges(self) -> list[tuple[int, int]]:
        return sorted(self._by_edge)

    def __len__(self) -> int:
        return len(self._by_edge)

    def __iter__(self):
        return iter(self._by_edge.values())

    def without_agent(self, i: int) -> "MeasurementSet":
        """Retire all measurements incident to agent i."""
        return MeasurementSet({e: m for e, m in self._by_edge.items()
                               if i not in e})

    def merged_with(self, other: "MeasurementSet") -> "MeasurementSet":
        d = dict(self._by_edge)
        d.update(other._by_edge)
        return MeasurementSet(d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("i,j,r,sigma2\n")
        for (i, j) in self.edges():
            m = self._by_edge[(i, j)]
            buf.write(f"{i},{j},{m.r!r},{m.sigma2!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MeasurementSet":
        ms = cls()
        for line in text.splitlines()[1:]:
            if not line.strip():
                continue
            i, j, r, s2 = line.split(",")
            ms.add(Measurement(edge=(int(i), int(j)), r=float(r), sigma2=float(s2)))
        return ms


def generate_truth(graph: Graph, max_offset: float = DEFAULT_MAX_OFFSET_HZ,
                   seed=0) -> GroundTruth:
    """Draw each agent's offset i.i.d. uniform on [-max_offset, +max_offset].

    max_offset = 0 gives exactly-zero offsets.  Deterministic per seed;
    agents are assigned draws in sorted id order.
    """
    if max_offset < 0:
        raise ValueError("max_offset must be >= 0")
    rng = np.random.default_rng(seed)
    agents = sorted(graph.agents)
    draws = rng.uniform(-max_offset, max_offset, len(agents)) if max_offset > 0 \
        else np.zeros(len(agents))
    return GroundTruth(offsets={a: float(v) for a, v in zip(agents, draws)},
                       reference=graph.reference)


def draw_joiner_offset(truth_seed, agent_id: int,
                       max_offset: float = DEFAULT_MAX_OFFSET_HZ) -> float:
    """Offset for an agent joining mid-run, from a stream keyed by its fresh
    id so the value is reproducible and independent of join timing."""
    base = truth_seed if isinstance(truth_seed, (list, tuple)) else [truth_seed]
    rng = np.random.default_rng([*base, agent_id])
    return float(rng.uniform(-max_offset, max_offset)) if max_offset > 0 else 0.0


def generate_measurements(graph: Graph, truth: GroundTruth, sigma: float = 1.0,
                          seed=0, sigma_overrides: dict[tuple[int, int], float] | None = None,
                          edges=None) -> MeasurementSet:
    """One noisy measurement r = f_i + f_j + n per edge.

    sigma is the homogeneous noise std; per-edge stds may be overridden via
    sigma_overrides.  sigma = 0 is allowed for noiseless tests; the stored
    variance then falls back to NOISELESS_SIGMA2 so weights stay finite.
    Deterministic per seed; edges consume draws in sorted order.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    ms = MeasurementSet()
    edge_list = sorted(edges) if edges is not None else sorted(graph.edges)
    for (i, j) in edge_list:
        s = sigma
        if sigma_overrides:
            s = sigma_overrides.get(canonical_edge(i, j), sigma)
        noise = rng.normal(0.0, s) if s > 0 else 0.0
        ms.add(Measurement(
            edge=(i, j),
            r=truth.offsets[i] + truth.offsets[j] + noise,
            sigma2=s * s if s > 0 else NOISELESS_SIGMA2,
        ))
    return ms
