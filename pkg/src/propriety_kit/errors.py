"""Exception hierarchy shared by every module of the package."""


class ProprietyError(Exception):
    """Base class for all package errors."""


class ModelValidationError(ProprietyError, ValueError):
    """The model document violates a structural invariant."""


class DimensionMismatch(ModelValidationError):
    pass


class ResponseOutOfRange(ModelValidationError):
    pass


class EmptyBlock(ModelValidationError):
    pass


class WrongFamily(ProprietyError):
    pass


class WrongLink(ProprietyError):
    pass


class WrongPriorKind(ProprietyError):
    pass


class DegenerateAllZero(ProprietyError):
    """Poisson responses are all zero, so the pseudo-binomial has no trials."""


class RankDeficient(ProprietyError):
    pass


class SeparationError(ProprietyError):
    """The GLM maximum likelihood estimate does not exist."""


class NonpositiveTau(ProprietyError, ValueError):
    pass


class OutOfScope(ProprietyError):
    pass


class ModeSearchFailed(ProprietyError, ArithmeticError):
    pass


class ScaleLimit(ProprietyError):
    """Problem dimensions exceed what desk-scale quadrature can handle."""


class ParseError(ProprietyError, ValueError):
    def __init__(self, message: str, *, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class NotConvergedWarning(RuntimeWarning):
    pass
