"""Exception hierarchy shared across the framework."""

from __future__ import annotations


class TddgenError(Exception):
    """Base class for all framework errors."""

    code = "error"


class ConfigurationError(TddgenError):
    """Fatal misconfiguration (missing root, bad manifest, ...)."""

    code = "config-error"


class TargetNotFoundError(TddgenError):
    """A target locator matched no entity."""

    code = "target-not-found"


class AmbiguousTargetError(TddgenError):
    """A target locator matched more than one entity."""

    code = "ambiguous-target"

    def __init__(self, message: str, candidates: list[str]):
        super().__init__(message)
        self.candidates = candidates


class ScopeNotFoundError(TddgenError):
    """A scoped search named a file or class that is not indexed."""

    code = "scope-not-found"


class LineRangeError(TddgenError):
    """A line number falls outside the file."""

    code = "line-range-error"


class WorkspaceStateError(TddgenError):
    """An operation was attempted in the wrong workspace state."""

    code = "workspace-state-error"


class SpliceError(TddgenError):
    """Stubbing produced an unparsable file (fatal, includes a diff)."""

    code = "splice-error"


class CandidateSyntaxError(TddgenError):
    """A candidate body did not parse once spliced (refinement signal)."""

    code = "candidate-syntax-error"


class TestRunnerError(TddgenError):
    """The runner crashed or collected nothing; distinct from failing tests."""

    code = "test-runner-error"


class DebuggerSessionError(TddgenError):
    """Command on a dead session, or session startup failure."""

    code = "debugger-session-error"


class DebuggerTimeoutError(DebuggerSessionError):
    """A debugger command did not return a prompt in time."""

    code = "debugger-timeout"


class ProviderError(TddgenError):
    """Chat provider failed after retries."""

    code = "provider-error"


class ReplayExhaustedError(ProviderError):
    """Scripted provider ran out of recorded turns (a test bug signal)."""

    code = "replay-exhausted"


class ReplayMismatchError(ProviderError):
    """Scripted provider saw a prompt whose digest differs from the recording."""

    code = "replay-mismatch"


class NoCandidateError(TddgenError):
    """Assistant text contained no extractable candidate body."""

    code = "no-candidate"


class ProbeError(TddgenError):
    """Probe run crashed before producing a report."""

    code = "probe-error"
