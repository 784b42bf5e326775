"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class MVUError(Exception):
    """Base class for all errors raised by :mod:`mvu`."""


class InvalidParameter(MVUError, ValueError):
    """One or more model parameters violate their constraints.

    ``violations`` holds ``(name, value, constraint)`` triples so that a
    single exception can report every problem found during validation.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(f"{name}={value!r}: {constraint}" for name, value, constraint in self.violations)
        super().__init__(msg)


class OutOfHorizon(MVUError, ValueError):
    pass


class DomainError(MVUError, ValueError):
    pass


class NoConvergence(MVUError, RuntimeError):
    pass


class ZeroWealth(MVUError, ValueError):
    pass


class NegativeVariance(MVUError, ValueError):
    pass


class NonFinitePath(MVUError, FloatingPointError):
    def __init__(self, path_index, step):
        self.path_index = path_index
        self.step = step
        super().__init__(f"non-finite wealth on path {path_index} at step {step}")


class GridTooCoarse(MVUError, ValueError):
    pass


class UtilityMismatch(MVUError, ValueError):
    pass


class ConfigError(MVUError, ValueError):
    """Base class for configuration-file problems."""


class ParseError(ConfigError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class UnknownKey(ConfigError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown configuration key {name!r}")


class MissingKey(ConfigError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing required configuration key {name!r}")
