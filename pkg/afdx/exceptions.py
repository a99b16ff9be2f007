"""
afd-explorer - Error Types

Every error raised by the services derives from ValueError so callers that
only care about "bad input" can keep catching that.
"""
from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:
    from afdx.schemas.scenario import Diagnostic


class AfdxError(ValueError):
    """Base class for afd-explorer errors."""


class ScenarioError(AfdxError):
    """A scenario document failed validation."""

    def __init__(self, diagnostics: Sequence["Diagnostic"]):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(f"{d.path}: {d.message}" for d in self.diagnostics)
        super().__init__(f"invalid scenario: {lines}")


class UncoveredShapeError(AfdxError):
    """Calibration table has no entry for a shape and fallback is disabled."""


class UnbalancedHostingError(AfdxError):
    """Experts cannot be spread evenly over the FFN ranks."""


class InvalidLayoutError(AfdxError):
    """A deployment layout does not fit the cluster or violates a layout rule."""


class UnreachableEndpointError(AfdxError):
    """A flow needs a network tier the topology does not have."""


class EmptyMicrobatchError(AfdxError):
    """More microbatches were requested than there are tokens."""


class UnmatchableSplitError(AfdxError):
    """No attention/FFN split satisfies the rate-matching constraints."""


class InfeasibleConfigError(AfdxError):
    """A derived configuration needs more GPUs than the cluster has."""
