"""Exception types with machine-readable codes.

Every domain failure carries a short upper-case ``code`` so that the CLI
(and test harnesses) can match on the failure kind without parsing
messages.
"""

from __future__ import annotations


class KreinGraphError(Exception):
    """Base class for all library errors."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class ParseError(KreinGraphError):
    """Malformed graph document (bad JSON, missing/ill-typed fields)."""

    def __init__(self, message: str, context: str = ""):
        detail = f"{message} [{context}]" if context else message
        super().__init__("PARSE_ERROR", detail)
        self.context = context


class ValidationError(KreinGraphError):
    """One or more graph invariants are violated.

    ``errors`` is a list of (code, message) pairs, one per violation.
    """

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = list(errors)
        codes = ",".join(code for code, _ in self.errors)
        first = self.errors[0][1] if self.errors else "invalid graph"
        super().__init__(codes or "VALIDATION_ERROR", first)


class SpectralError(KreinGraphError):
    """Failures of spectral operations (poles, incomplete scans, ...)."""


class SurgeryError(KreinGraphError):
    """Invalid surgery operation (unknown elements, disconnection, ...)."""
