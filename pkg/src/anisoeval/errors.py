"""Exception hierarchy.

Everything raised on purpose derives from :class:`AnisoEvalError`; the CLI
maps that to a JSON error document on stderr and a nonzero exit code.
"""


class AnisoEvalError(Exception):
    """Base class for all package errors."""


class ValidationError(AnisoEvalError, ValueError):
    pass


# core-model
class EmptyDataset(ValidationError):
    pass


class UnknownDimension(ValidationError):
    def __init__(self, what, dimension=None):
        self.what = what
        self.dimension = dimension
        msg = f"unknown dimension {dimension!r} ({what})" if dimension is not None else f"unknown dimension: {what}"
        super().__init__(msg)


class WeightSumInvalid(ValidationError):
    def __init__(self, actual):
        self.actual = actual
        super().__init__(f"weights sum to {actual!r}, expected 1")


class NegativeWeight(ValidationError):
    def __init__(self, dimension):
        self.dimension = dimension
        super().__init__(f"negative weight on {dimension!r}")


class DuplicateId(ValidationError):
    def __init__(self, sample_id, line=None):
        self.sample_id = sample_id
        self.line = line
        where = f" at line {line}" if line is not None else ""
        super().__init__(f"duplicate sample id {sample_id!r}{where}")


class ParseError(ValidationError):
    def __init__(self, line, cause):
        self.line = line
        super().__init__(f"line {line}: {cause}")


# scheduler
class DimensionMismatch(ValidationError):
    pass


class NonPositiveCost(ValidationError):
    pass


class InvalidRange(ValidationError):
    pass


class EmptyStratum(ValidationError):
    def __init__(self, dimension):
        self.dimension = dimension
        super().__init__(f"stratum {dimension!r} has no drawn samples")


class BudgetTooSmallForPilot(AnisoEvalError):
    def __init__(self, budget, pilot_cost):
        self.budget = budget
        self.pilot_cost = pilot_cost
        super().__init__(f"budget {budget} cannot cover pilot cost {pilot_cost}")


# responders
class ResponderFailure(AnisoEvalError):
    def __init__(self, sample_id, cause):
        self.sample_id = sample_id
        self.cause = cause
        super().__init__(f"responder failed on {sample_id!r}: {cause}")


class Timeout(ResponderFailure):
    pass


class HttpStatus(ResponderFailure):
    def __init__(self, sample_id, code):
        self.code = code
        super().__init__(sample_id, f"HTTP {code}")


class MalformedResponse(ResponderFailure):
    pass


# scoring
class OutOfRange(ValidationError):
    pass


class JudgeFailure(AnisoEvalError):
    pass


class LengthMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class EmptyGold(ValidationError):
    pass


# analytics
class TooFewModels(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class DegenerateMatrix(ValidationError):
    pass


class SchemeDimensionMismatch(ValidationError):
    pass


class MissingRank(ValidationError):
    def __init__(self, model_id, scheme):
        self.model_id = model_id
        self.scheme = scheme
        super().__init__(f"model {model_id!r} has no rank under scheme {scheme!r}")


class ZeroVariance(ValidationError):
    pass


# datapipe
class IndexNotBuilt(AnisoEvalError):
    pass


class EmbedderFailure(AnisoEvalError):
    pass


class SizeTooLarge(ValidationError):
    pass


# cli
class InconsistentDimensions(ValidationError):
    pass


class EmptyVector(EmptyInput):
    pass
