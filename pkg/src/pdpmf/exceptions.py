"""Exception hierarchy for pdpmf."""


class PDPMFError(Exception):
    """Base class for every error raised by this package."""


class ParseError(PDPMFError, ValueError):
    """A ratings file line could not be parsed."""

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ValidationError(PDPMFError, ValueError):
    """Data or parameters violate a documented invariant."""


class DuplicateEntryError(ValidationError):
    """Two ratings were supplied for the same (user, item) pair."""


class DimensionMismatchError(ValidationError):
    """Model and data shapes disagree."""


class DivergenceError(PDPMFError, FloatingPointError):
    """Gradient descent produced a non-finite or exploding objective."""

    def __init__(self, iteration, value, phase="phase 1"):
        self.iteration = iteration
        self.value = value
        super().__init__(
            f"{phase} diverged at iteration {iteration} (objective={value!r}); "
            "use a smaller learning rate gamma"
        )


class PreconditionError(PDPMFError, ValueError):
    """An input violates a documented precondition (e.g. user norm bound)."""


class SpecificationCoverageError(PDPMFError, KeyError):
    """A rating has no privacy budget in the supplied specification."""


class PrivacyPolicyError(PDPMFError, PermissionError):
    """Refusal to release data that the privacy policy keeps confidential."""
