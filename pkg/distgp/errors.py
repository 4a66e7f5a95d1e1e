from __future__ import annotations

from typing import Any, Dict


class DistGPError(Exception):
    """Base error. `code` is the machine-readable kind reported by the CLI."""

    code = "distgp-error"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"error": self.code, "message": self.message}
        out.update(self.details)
        return out


class InvalidParameter(DistGPError, ValueError):
    code = "invalid-parameter"


class InvalidInput(DistGPError, ValueError):
    code = "invalid-input"


class ParseError(DistGPError, ValueError):
    code = "parse-error"

    def __init__(self, message: str, row: int | None = None, **details: Any) -> None:
        super().__init__(message, row=row, **details)
        self.row = row


class DegenerateKernel(DistGPError):
    code = "degenerate-kernel"


class DegenerateAnchors(DistGPError):
    code = "degenerate-anchors"


class RankDeficient(DistGPError):
    code = "rank-deficient"


class UnsupportedClosedForm(DistGPError):
    code = "unsupported-closed-form"


class SingularNormalEquations(DistGPError):
    code = "singular-normal-equations"


class NumericalFailure(DistGPError):
    code = "numerical-failure"


class InfeasibleEpsilon(DistGPError):
    code = "infeasible-epsilon"


class InfeasibleConfiguration(DistGPError):
    code = "infeasible-configuration"


class TuningFailed(DistGPError):
    code = "tuning-failed"


class InsufficientData(DistGPError):
    code = "insufficient-data"


class InvalidTopology(DistGPError):
    code = "invalid-topology"


class InternalError(DistGPError):
    """Wraps an unexpected exception so the CLI still reports a JSON error document."""

    code = "internal-error"
