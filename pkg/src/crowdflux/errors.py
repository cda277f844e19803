class CrowdfluxError(Exception):
    pass


class DomainError(CrowdfluxError, ValueError):
    """A density (or other argument) lies outside the admissible range."""


class ConfigurationError(CrowdfluxError, ValueError):
    """Invalid scenario, grid or scheme setup.

    ``issues`` holds ``(field_path, reason)`` pairs when the error comes
    from validating a structured configuration.
    """

    def __init__(self, message: str = "", issues=None):
        self.issues = list(issues or [])
        if not message and self.issues:
            message = "; ".join(f"{path}: {reason}" for path, reason in self.issues)
        super().__init__(message)


class CFLError(ConfigurationError):
    pass


class SnapWarning(UserWarning):
    """A constraint position was moved noticeably to reach a mesh interface."""
