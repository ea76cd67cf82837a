"""Exception types shared across the composer pipeline.

Every error carries a stable machine-readable ``code`` so that callers
(tests, the CLI, remote peers) can react without string matching.
"""


class ComposerError(Exception):
    code = "E_INTERNAL"

    def __init__(self, message, *, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ParseError(ComposerError):
    """Instance file is not well-formed (syntax, structure, duplicates)."""

    code = "E_SYNTAX"


class InstanceError(ComposerError):
    """A structurally parsed instance violates model invariants."""

    code = "E_INVALID_INSTANCE"

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        detail = "; ".join(
            f"{d.code} at {d.where}: {d.message}" for d in self.diagnostics
        )
        super().__init__(f"invalid instance: {detail}")


class NondetTargetError(ComposerError):
    code = "E_NONDET_TARGET"


class UnrealizableError(ComposerError):
    code = "E_UNREALIZABLE"


class UnrealizableFromHereError(ComposerError):
    code = "E_UNREALIZABLE_FROM_HERE"


class NoTargetTransitionError(ComposerError):
    code = "E_NO_TARGET_TRANSITION"


class ObservationRequiredError(ComposerError):
    code = "E_OBSERVATION_REQUIRED"


class ObservationMismatchError(ComposerError):
    code = "E_OBSERVATION_MISMATCH"


class ExecutorFailedError(ComposerError):
    code = "E_EXECUTOR_FAILED"
