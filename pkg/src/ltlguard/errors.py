"""Exception taxonomy shared across the package.

Everything raised on purpose derives from LtlGuardError so callers can
catch one base; parse problems get their own subtree because the CLI
reports them with token context.
"""

from __future__ import annotations


class LtlGuardError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(LtlGuardError):
    """A prefix-notation formula could not be parsed."""


class UnknownTokenError(ParseError):
    """Token is neither an operator, a constant, nor a resolvable proposition."""


class ArityError(ParseError):
    """The token stream ended while an operator still needed operands."""


class TrailingTokensError(ParseError):
    """Tokens remained after a complete formula was read."""


class UnassignedPropositionError(LtlGuardError):
    """A state assignment does not cover a proposition the formula needs."""


class BareAtomResidualError(LtlGuardError):
    """end_of_trace_accepting was handed a formula with a free atom."""


class AlphabetTooLargeError(LtlGuardError):
    """Formula mentions more propositions than the automaton cap allows."""


class StateExplosionError(LtlGuardError):
    """Automaton or product exploration exceeded its state budget."""


class TranslationError(LtlGuardError):
    """Base for natural-language-to-LTL pipeline failures."""


class NoCandidateAboveThresholdError(TranslationError):
    """Grounding found no vocabulary entry scoring above the threshold."""


class UnsupportedPatternError(TranslationError):
    """The deterministic fallback translator has no template for the utterance."""


class UnparseableTranslationError(TranslationError):
    """Backend returned text that is not a well-formed formula, even after retry."""


class UnverifiedConstraintError(TranslationError):
    """Strict assembly refused a constraint that has not been approved."""


class BackendError(LtlGuardError):
    """An LLM backend failed (HTTP error, bad payload, missing fixture)."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class BackendTimeoutError(BackendError):
    """The backend did not answer within the configured timeout."""


class FixtureMissError(BackendError):
    """Replay/mock backend had no recorded reply for a prompt."""


class CommitAfterViolationError(LtlGuardError):
    """commit() was called with a predicted state the monitor already rejected."""


class UnsatisfiableConstraintsError(LtlGuardError):
    """The constraint product is dead at the initial state; no run can satisfy it."""


class UnknownObjectError(LtlGuardError):
    """An action or proposition referenced an object the world does not contain."""
