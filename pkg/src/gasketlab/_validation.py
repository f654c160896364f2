"""Exception types and small argument checks shared across the package."""

import numbers

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ResourceError(RuntimeError):
    """A problem size exceeds a configured guardrail."""


class NumericError(ArithmeticError):
    """A numerical routine failed or produced an inconsistent result."""


def check_alpha(alpha):
    if not isinstance(alpha, numbers.Real) or not (0.0 < alpha < 2.0):
        raise DomainError(f"alpha must lie in (0, 2), got {alpha!r}")
    return float(alpha)


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise DomainError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise DomainError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise DomainError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_nonneg_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 0:
        raise DomainError(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)


def as_rng(seed):
    """Return a ``numpy.random.Generator`` for an int seed, SeedSequence or Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)
