"""Exception types shared across the package."""

from __future__ import annotations


class AutomindError(Exception):
    """Base class for all errors raised by this package."""


class DuplicateIdError(AutomindError):
    """A node with this id is already present in the tree."""


class DanglingParentError(AutomindError):
    """A node references a parent id that does not exist in the tree."""


class MixedMetricDirectionError(AutomindError):
    """Valid nodes disagree on whether the metric is minimized or maximized.

    Signals verifier inconsistency that must be normalized upstream; the
    run loop coerces disagreeing nodes to buggy before they reach the tree.
    """


class MissingCorpusError(AutomindError):
    """The corpus root directory does not exist or has no corpus layout."""


class LlmFailure(AutomindError):
    """A model call could not produce a usable response after retries."""


class TransportFailure(LlmFailure):
    """The backend could not be reached or returned a malformed payload."""


class SchemaViolation(LlmFailure):
    """A structured response is missing required fields or has wrong types."""


class BudgetExceeded(AutomindError):
    """The run-level token cap was reached."""


class ReplayMiss(AutomindError):
    """A replayed request has no matching recorded exchange."""


class ParseFailure(AutomindError):
    """A model response could not be parsed into the expected structure."""


class WorkspaceMissingError(AutomindError):
    """The workspace or a required workspace directory does not exist."""


class IoFailure(AutomindError):
    """A filesystem operation required by the run failed."""


class ExecutorUnavailable(AutomindError):
    """No executor is available to run the solution script."""


class SessionLost(AutomindError):
    """The stateful execution session died and could not be recovered."""


class FatalConfigError(AutomindError):
    """Configuration could not be loaded; the run cannot start."""


class ValidationFailure(FatalConfigError):
    """A configuration value is out of range or a key is unknown."""
