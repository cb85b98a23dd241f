"""Exception types raised across the harness."""

from __future__ import annotations


class FeedbenchError(Exception):
    """Base class for all harness errors."""


class ConfigError(FeedbenchError):
    pass


# action model
class InfeasibleCalibration(FeedbenchError, ValueError):
    pass


# user simulator
class UnknownDataset(FeedbenchError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class VerdictError(FeedbenchError):
    """Simulator output could not be turned into a verdict."""


class MalformedVerdict(VerdictError):
    pass


class InvalidBehavior(VerdictError):
    pass


class MissingResponse(VerdictError):
    pass


class JudgeUnavailable(FeedbenchError):
    pass


class UnparseableScore(FeedbenchError):
    pass


class SystemFailure(FeedbenchError):
    """The memory system under test raised while answering or ingesting."""


# memory systems
class BudgetUnsatisfiable(FeedbenchError):
    pass


# task provider
class SchemaViolation(FeedbenchError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDataset(FeedbenchError):
    pass


class UnknownCase(FeedbenchError):
    pass


class TestLeak(FeedbenchError):
    """A feedback log references a test-set case."""

    __test__ = False  # keep pytest from collecting this class


# evaluation
class MissingAnchor(FeedbenchError):
    pass


class MissingSlot(FeedbenchError):
    pass


class IncompleteCoverage(FeedbenchError):
    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        preview = ", ".join(self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"no score for {len(self.missing)} test case(s): {preview}{more}")


# gateway
class TransportError(FeedbenchError):
    """Retryable failure talking to a model endpoint."""


class GatewayExhausted(FeedbenchError):
    pass


class AuthFailure(FeedbenchError):
    pass


class DimensionMismatch(FeedbenchError):
    pass


class MockExhausted(FeedbenchError):
    """A scripted backend ran out of matching responses."""
