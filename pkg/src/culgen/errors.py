"""Exception hierarchy shared across the package."""


class CulgenError(Exception):
    """Base class for every error raised by culgen."""


class InvalidInputError(CulgenError, ValueError):
    pass


class ConfigurationError(CulgenError, ValueError):
    pass


class NotFoundError(CulgenError, LookupError):
    pass


class ManifestError(CulgenError, ValueError):
    """A manifest line could not be parsed or referenced a missing file."""


class ImageReadError(CulgenError, OSError):
    def __init__(self, path, reason=""):
        self.path = str(path)
        super().__init__(f"cannot read image {self.path}" + (f": {reason}" if reason else ""))


class TransportError(CulgenError):
    """A remote client failed; callers may retry."""

    retryable = True


class AnnotationError(CulgenError):
    def __init__(self, message, raw_response="", candidates=()):
        super().__init__(message)
        self.raw_response = raw_response
        self.candidates = list(candidates)


class AuditError(CulgenError):
    def __init__(self, message, raw_label=None):
        super().__init__(message)
        self.raw_label = raw_label


class NonFiniteLossError(CulgenError, FloatingPointError):
    def __init__(self, message, diagnostics):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


class ReportError(CulgenError, OSError):
    def __init__(self, path, reason=""):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}" if reason else self.path)

    def __str__(self):
        return self.args[0]
