"""Exception types shared across the engine."""


class ArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class DomainError(ValueError):
    """A point lies outside the usable part of a chart."""


class DegenerateMetricError(ArithmeticError):
    """The metric matrix is singular or indefinite at a point."""

    def __init__(self, chart, point, detail=""):
        self.chart = chart
        self.point = point
        msg = f"degenerate metric on chart {chart!r} at point {list(point)}"
        super().__init__(msg + (f": {detail}" if detail else ""))


class ValidationError(ValueError):
    """An experiment configuration is malformed or out of range."""
