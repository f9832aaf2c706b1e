"""Shared exception hierarchy.

Every module-specific error derives from EngineError so callers can catch
engine failures without enumerating modules. Specific classes live next to
the code that raises them.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class MalformedDocument(EngineError):
    """A catalog / model / scenario document failed structural validation."""
