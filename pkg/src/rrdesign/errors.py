class Unreachable(ValueError):
    """Requested event count cannot be reached by the enrolled population."""

    def __init__(self, requested: float, limit: float):
        self.requested = requested
        self.limit = limit
        super().__init__(
            f"{requested:g} events requested but at most {limit:.4f} are expected"
        )


class BracketError(RuntimeError):
    """Root bracket does not contain a sign change."""

    def __init__(self, message: str, lower: tuple[float, float], upper: tuple[float, float]):
        self.lower = lower
        self.upper = upper
        super().__init__(
            f"{message}: f({lower[0]:g})={lower[1]:.6g}, f({upper[0]:g})={upper[1]:.6g}"
        )


class DegenerateFit(ValueError):
    """Estimate undefined for the data supplied (e.g. no events in an arm)."""


class ConfigError(ValueError):
    """Invalid scenario configuration."""
