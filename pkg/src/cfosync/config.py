"""Experiment configuration: a flat key = value text format.

Every key is exactly a field name of ExperimentConfig; unknown keys are
rejected so typos fail closed.  Values with structure (topology, timeline,
per-edge noise overrides) are packed into single-line strings with their
own small grammars, documented on the fields.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError
from .graph import DEFAULT_COMM_RADIUS, Graph, canonical_edge, random_geometric


@dataclass
class ExperimentConfig:
    # "random:n=100,width=3000,height=4000,radius=1000,seed=0" or
    # "edges:1-2;1-3;2-3"
    topology: str = "random:n=100,width=3000,height=4000,radius=1000,seed=0"
    # agent positions for edges topologies, "1:x,y;2:x,y"; random topologies
    # carry their own
    positions: str = ""
    # communication radius used when agents join mid-run; 0 means "use the
    # random topology's radius"
    radius: float = 0.0
    reference: int = 1
    algorithm: str = "lsbp"              # "bp" | "lsbp"
    schedule: str = "synchronous"        # "synchronous" | "asynchronous"
    init_mode: str = "zero_precision"    # "zero_precision" | "uniform"
    init_variance: float = 1.0
    init_mean: float = 0.0
    max_offset: float = 200.0
    sigma: float = 1.0
    # per-edge noise std overrides, "1-2:2.0;2-3:0.5"
    sigma_overrides: str = ""
    pdr: float = 1.0
    skip_prob: float = 0.0
    # "5:leave:4;10:join:1500,2000" (iteration:kind:payload)
    timeline: str = ""
    l_max: int = 100
    mean_tol: float = 1e-9
    prec_tol: float = 1e-12
    mse_normalization: float = 1.0
    trials: int = 1
    master_seed: int = 0
    reference_precision: float = 1e12
    oracle: bool = False


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, text: str):
    kind = _FIELDS[name].type
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}")


def parse_config_text(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, val)
    return ExperimentConfig(**values)


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


# -- structured field grammars ------------------------------------------------

def parse_topology(cfg: ExperimentConfig) -> Graph:
    text = cfg.topology.strip()
    if text.startswith("random:"):
        params = {"radius": DEFAULT_COMM_RADIUS, "seed": 0.0, "retries": 50.0}
        for part in text[len("random:"):].split(","):
            if not part:
                continue
            if "=" not in part:
                raise ConfigError(f"bad topology parameter {part!r}")
            k, v = part.split("=", 1)
            try:
                params[k.strip()] = float(v)
            except ValueError:
                raise ConfigError(f"bad topology parameter {part!r}")
        for req in ("n", "width", "height"):
            if req not in params:
                raise ConfigError(f"random topology needs {req}=")
        return random_geometric(
            n=int(params["n"]), width=params["width"], height=params["height"],
            radius=params["radius"], seed=int(params["seed"]),
            retry_budget=int(params["retries"]), reference=cfg.reference)
    if text.startswith("edges:"):
        edges = []
        ids = set()
        for part in text[len("edges:"):].split(";"):
            part = part.strip()
            if not part:
                continue
            try:
                i, j = (int(s) for s in part.split("-"))
            except ValueError:
                raise ConfigError(f"bad edge {part!r}")
            edges.append((i, j))
            ids.update((i, j))
        if not edges:
            raise ConfigError("edges topology has no edges")
        positions = parse_positions(cfg.positions) if cfg.positions else None
        n = max(ids)
        return Graph.from_edges(n, edges, reference=cfg.reference,
                                positions=positions)
    raise ConfigError(f"topology must start with 'random:' or 'edges:', "
                      f"got {text!r}")


def parse_positions(text: str) -> dict[int, tuple[float, float]]:
    out = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            ident, coords = part.split(":")
            x, y = (float(s) for s in coords.split(","))
            out[int(ident)] = (x, y)
        except ValueError:
            raise ConfigError(f"bad position entry {part!r}")
    return out


def parse_sigma_overrides(text: str) -> dict[tuple[int, int], float]:
    out = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            edge, val = part.split(":")
            i, j = (int(s) for s in edge.split("-"))
            out[canonical_edge(i, j)] = float(val)
        except ValueError:
            raise ConfigError(f"bad sigma override {part!r}")
    return out


def join_radius(cfg: ExperimentConfig) -> float:
    if cfg.radius > 0:
        return cfg.radius
    text = cfg.topology.strip()
    if text.startswith("random:"):
        for part in text[len("random:"):].split(","):
            if part.startswith("radius="):
                return float(part.split("=", 1)[1])
        return DEFAULT_COMM_RADIUS
    raise ConfigError("timeline joins on an edges topology require radius=")


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.algorithm not in ("bp", "lsbp"):
        raise ConfigError(f"algorithm must be bp or lsbp, got {cfg.algorithm!r}")
    if cfg.schedule not in ("synchronous", "asynchronous"):
        raise ConfigError(f"unknown schedule {cfg.schedule!r}")
    if cfg.algorithm == "bp" and cfg.schedule == "asynchronous":
        raise ConfigError("asynchronous scheduling is only defined for lsbp")
    if cfg.init_mode not in ("zero_precision", "uniform"):
        raise ConfigError(f"unknown init_mode {cfg.init_mode!r}")
    if cfg.init_mode == "uniform" and cfg.init_variance <= 0:
        raise ConfigError("uniform init requires init_variance > 0")
    if not 0.0 <= cfg.pdr <= 1.0:
        raise ConfigError("pdr must lie in [0, 1]")
    if not 0.0 <= cfg.skip_prob < 1.0:
        raise ConfigError("skip_prob must lie in [0, 1)")
    if cfg.l_max < 0:
        raise ConfigError("l_max must be >= 0")
    if cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    if cfg.mse_normalization <= 0:
        raise ConfigError("mse_normalization must be > 0")
    if cfg.sigma < 0:
        raise ConfigError("sigma must be >= 0")
    if cfg.max_offset < 0:
        raise ConfigError("max_offset must be >= 0")
    if cfg.master_seed < 0:
        raise ConfigError("master_seed must be >= 0")
    if cfg.mean_tol <= 0 or cfg.prec_tol <= 0:
        raise ConfigError("tolerances must be > 0")
    if cfg.reference_precision <= 0:
        raise ConfigError("reference_precision must be > 0")
