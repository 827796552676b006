"""Exception hierarchy shared by the library modules."""


class QskrError(Exception):
    """Base class for all library errors."""


class DomainError(QskrError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class NonPhysicalStateError(DomainError):
    """A symplectic eigenvalue fell below the vacuum level of 1."""


class NumericalDomainError(QskrError, ArithmeticError):
    """A floating-point intermediate left its admissible range."""


class InfeasibleError(QskrError):
    """The power-allocation feasible set is empty or a point lies outside it."""


class DegenerateChannelError(QskrError):
    """A user ended up with zero transmittance."""


class ConfigError(QskrError):
    """Invalid configuration file or value.

    ``key`` and ``line`` point at the offending entry when known.
    """

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.key = key
        self.line = line

