"""Exception hierarchy shared by every layer of the package."""


class InstError(Exception):
    """Base class for all errors raised by normrules."""


# kernel


class NonGroundFact(InstError):
    pass


# constraints


class ArithmeticFailure(InstError):
    pass


class DivisionByZero(ArithmeticFailure, ZeroDivisionError):
    pass


class NonGround(ArithmeticFailure):
    pass


class UnknownFunctor(ArithmeticFailure):
    pass


class TypeMismatch(ArithmeticFailure, TypeError):
    pass


class UnsupportedConstraint(InstError):
    """The constraint set leaves the ground/interval/difference fragment."""


# parser


class ParseError(InstError):
    """One or more syntax diagnostics; ``diagnostics`` holds them in source order."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class DuplicateRuleId(InstError):
    pass


class ArityWarning(UserWarning):
    pass


# engine


class EngineError(InstError):
    pass


class UnknownBuiltin(EngineError):
    pass


class NonGroundBuiltinInput(EngineError):
    pass


class IstarDisabled(EngineError):
    pass


class ChainLimitExceeded(EngineError):
    pass


class NonGroundEvent(EngineError):
    pass


# harness


class SpecInvariantViolation(InstError):
    pass


class UnknownNeuron(EngineError):
    pass


class ArityMismatch(EngineError):
    pass
