"""Exception hierarchy.

Two families matter to callers. ``CliqueFactoryError`` subclasses that are
also ``CertifiedFailure`` carry a machine-readable ``certificate`` explaining
why a construction could not be completed (the CLI maps them to exit code 2).
Everything else signals misuse: bad arguments or malformed instances.
"""
from __future__ import annotations

from typing import Any


class CliqueFactoryError(Exception):
    """Base class for all package errors."""


class InvalidArgument(CliqueFactoryError, ValueError):
    pass


class InvalidInstance(CliqueFactoryError, ValueError):
    pass


class DomainError(CliqueFactoryError, ValueError):
    pass


class TooLarge(CliqueFactoryError, ValueError):
    pass


class GeneratorError(CliqueFactoryError):
    pass


class InvariantViolation(CliqueFactoryError):
    pass


class CertifiedFailure(CliqueFactoryError):
    """A construction failed and the failure is documented by a certificate."""

    kind = "failure"

    def __init__(self, message: str, certificate: dict[str, Any] | None = None):
        super().__init__(message)
        self.certificate = certificate or {}

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "message": str(self), "certificate": self.certificate}


class InstanceTooSmall(CertifiedFailure):
    kind = "instance-too-small"


class ThresholdViolation(CertifiedFailure):
    kind = "threshold-violation"


class RegularSubgraphInfeasible(CertifiedFailure):
    kind = "regular-subgraph-infeasible"


class MatchingFailure(CertifiedFailure):
    kind = "matching-failure"


class DegeneratePair(CertifiedFailure):
    kind = "degenerate-pair"


class InstanceNotRegularEnough(CertifiedFailure):
    kind = "instance-not-regular-enough"


class RedistributionFailure(CertifiedFailure):
    kind = "redistribution-failure"


class RebalanceFailure(CertifiedFailure):
    kind = "rebalance-failure"


class EmbeddingFailure(CertifiedFailure):
    kind = "embedding-failure"
