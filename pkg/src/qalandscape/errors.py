from __future__ import annotations


class QALError(Exception):
    """Base class for library errors."""


class DomainError(QALError, ValueError):
    """A state or parameter lies outside the domain of a formula."""


class MalformedInstanceError(QALError, ValueError):
    pass


class ConvergenceError(QALError, RuntimeError):
    """A numerical solver failed to reach its tolerance."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
