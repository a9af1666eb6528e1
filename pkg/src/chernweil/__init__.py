"""Numerical Chern-Weil and Chern-Simons engine with loop-group symbol calculus."""

__version__ = "0.1.0"

from .errors import ArgumentError, DegenerateMetricError, DomainError, ValidationError  # noqa: E402

__all__ = ["__version__", "ArgumentError", "DegenerateMetricError", "DomainError",
           "ValidationError"]
