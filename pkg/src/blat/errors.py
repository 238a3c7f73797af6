"""Exception hierarchy shared by every blat module."""


class BlatError(Exception):
    """Base class for all library errors."""


class ShapeMismatch(BlatError, ValueError):
    pass


class NotPositiveDefinite(BlatError, ValueError):
    def __init__(self, name, detail=""):
        self.name = name
        msg = f"{name} is not symmetric positive-definite"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class OutOfRange(BlatError, ValueError):
    def __init__(self, field, value=None, allowed=""):
        self.field = field
        super().__init__(f"{field}={value!r} is out of range {allowed}".rstrip())


class SingularMatrix(BlatError, ArithmeticError):
    def __init__(self, name, cond=None):
        self.name = name
        self.cond = cond
        extra = f" (condition number {cond:.3g})" if cond is not None else ""
        super().__init__(f"{name} is numerically singular{extra}")


class NonInvertibleError(BlatError, ArithmeticError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"{name} is not invertible")


class InvalidDof(BlatError, ValueError):
    pass


class InvalidDelta(BlatError, ValueError):
    pass


class SamplerFailure(BlatError, RuntimeError):
    pass


class NoRoot(BlatError, ValueError):
    pass


class InsufficientData(BlatError, ValueError):
    pass


class InsufficientHistory(InsufficientData):
    pass


class SingularDesign(BlatError, ArithmeticError):
    pass


class ZeroVariance(BlatError, ZeroDivisionError):
    pass


class Bankrupt(BlatError, ArithmeticError):
    pass


class EmptyUniverse(BlatError, ValueError):
    pass


class ParseError(BlatError, ValueError):
    def __init__(self, line, detail):
        self.line = line
        super().__init__(f"line {line}: {detail}")


class InvariantViolation(BlatError, ValueError):
    def __init__(self, ticker, date, detail):
        self.ticker = ticker
        self.date = date
        super().__init__(f"{ticker} @ {date}: {detail}")


class ConfigError(BlatError, ValueError):
    pass
