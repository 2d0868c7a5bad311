"""Exception taxonomy.

Each family maps onto one CLI exit status: input/format problems exit 2,
violated preconditions exit 3, failed construction premises exit 4.
"""


class ChainrecError(Exception):
    exit_code = 1

    def __init__(self, message="", **witness):
        super().__init__(message)
        self.witness = witness

    def to_json(self):
        out = {"error": type(self).__name__, "message": str(self)}
        if self.witness:
            out["witness"] = {k: _plain(v) for k, v in self.witness.items()}
        return out


def _plain(value):
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (int, float, str, bool)) or value is None:
        return value
    return str(value)


class InputError(ChainrecError):
    exit_code = 2


class PreconditionError(ChainrecError):
    exit_code = 3


class PremiseError(ChainrecError):
    exit_code = 4


class FormatError(InputError):
    pass


class DegenerateSimplex(InputError):
    pass


class DuplicateVertex(InputError):
    pass


class EmptyComplex(InputError):
    pass


class SubcomplexMismatch(InputError):
    pass


class PointOutsideComplex(InputError):
    pass


class PointNotInNet(InputError):
    pass


class NotSimplicial(InputError):
    pass


class AmbientDimUnsupported(InputError):
    pass


class EpsilonTooSmall(PreconditionError):
    pass


class InvalidPeriod(PreconditionError):
    pass


class NotARetraction(PreconditionError):
    pass


class BetaTooLarge(PreconditionError):
    pass


class PremiseViolated(PremiseError):
    pass


class ApproximationFailed(PremiseError):
    pass


class ChainNotFound(PremiseError):
    pass


class CellsCollide(PremiseError):
    pass


class BlendEscapesComplex(PremiseError):
    pass
