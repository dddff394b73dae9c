"""Exception types shared across the package."""


class UnknownAgentError(ValueError):
    """An operation referenced an agent id that is not in the graph."""


class GenerationError(RuntimeError):
    """Random topology generation exhausted its retry budget."""


class InconsistentStateError(RuntimeError):
    """Simulator state is missing data it should hold (e.g. a measurement)."""


class UnobservableError(ValueError):
    """The linear system is rank deficient: some agents have no path of
    measurements anchoring them to the reference."""

    def __init__(self, agents):
        self.agents = sorted(agents)
        super().__init__(f"agents not anchored to the reference: {self.agents}")


class NumericError(ArithmeticError):
    """An iterative numeric routine failed to meet its tolerance."""


class MetricError(ValueError):
    """A metric is undefined for the given inputs."""


class ConfigError(ValueError):
    """Experiment configuration is invalid or unparseable."""
