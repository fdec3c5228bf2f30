"""Exception hierarchy shared across the package.

``exit_code`` drives CLI behavior: 2 for input/validation problems the
user can fix in their data or arguments, 1 for runtime failures.
"""


class HiccapError(Exception):
    exit_code = 1


class DataError(HiccapError):
    """Base for problems with on-disk data or user-supplied inputs."""

    exit_code = 2


class MissingFileError(DataError):
    def __init__(self, clip_id: str, path: str):
        super().__init__(f"clip {clip_id!r}: missing file {path}")
        self.clip_id = clip_id
        self.path = path


class SchemaMismatchError(DataError):
    pass


class DimMismatchError(DataError):
    pass


class InvariantViolationError(DataError):
    def __init__(self, clip_id: str, violations):
        super().__init__(f"clip {clip_id!r}: " + "; ".join(violations))
        self.clip_id = clip_id
        self.violations = list(violations)


class EvenAnnotatorCountError(DataError):
    pass


class NoLabelsError(DataError):
    pass


class WrongModalityError(HiccapError):
    pass


class EmptySequenceError(HiccapError):
    pass


class ShapeMismatchError(HiccapError):
    pass


class NonFiniteLogitError(HiccapError):
    pass


class ZeroVectorError(HiccapError):
    pass


class EmptyPartitionError(DataError):
    pass


class NonFiniteLossError(HiccapError):
    pass


class AllMaskedError(HiccapError):
    pass


class LengthMismatchError(HiccapError):
    pass


class NoPositivesError(HiccapError):
    pass


class NoPositivesAnywhereError(HiccapError):
    pass


class DegenerateMarginalsError(HiccapError):
    pass
