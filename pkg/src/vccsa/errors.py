"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
exit-code table without a lookup: 2 usage, 3 data, 4 numeric.
"""


class VccsaError(Exception):
    exit_code = 1


class UsageError(VccsaError):
    exit_code = 2


class InvalidConfig(UsageError):
    pass


class UnknownMode(UsageError):
    pass


class DataError(VccsaError):
    exit_code = 3


class BadMagic(DataError):
    pass


class Truncated(DataError):
    pass


class NonFinite(DataError):
    pass


class UnknownLabel(DataError):
    pass


class MissingField(DataError):
    pass


class DuplicateId(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class LengthMismatch(DataError):
    pass


class IntegrityError(DataError):
    """A comment points at a video the index does not know."""


class DanglingReferent(DataError):
    pass


class EmptyText(DataError):
    pass


class IdOutOfRange(DataError):
    pass


class MissingComment(DataError):
    pass


class ConfigMismatch(DataError):
    pass


class DimMismatch(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class NumericError(VccsaError):
    exit_code = 4


class NonFiniteLoss(NumericError):
    pass
