"""Exception hierarchy for cutiga."""


class CutIGAError(Exception):
    """Base class for all package errors."""

    kind = "error"

    def to_record(self) -> dict:
        return {"type": self.kind, "message": str(self)}


class InvalidArgumentError(CutIGAError, ValueError):
    kind = "invalid-argument"


class UnknownBasisError(CutIGAError, KeyError):
    kind = "unknown-basis"

    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class DegenerateGeometryError(CutIGAError):
    kind = "degenerate-geometry"

    def __init__(self, message: str, element=None):
        super().__init__(message)
        self.element = element


class EmptyDomainError(CutIGAError):
    kind = "empty-domain"


class OverRemovalError(CutIGAError):
    kind = "over-removal"


class AssemblyError(CutIGAError):
    kind = "assembly"


class ConfigurationError(CutIGAError, ValueError):
    kind = "configuration"


class SingularSystemError(CutIGAError):
    kind = "singular-system"

    def __init__(self, message: str, pivot: float = 0.0):
        super().__init__(message)
        self.pivot = pivot

    def to_record(self) -> dict:
        rec = super().to_record()
        rec["pivot"] = self.pivot
        return rec
