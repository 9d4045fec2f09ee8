"""Exception hierarchy.

Validation rejections are *not* exceptions; they come back as
:class:`slicemem.ontology.ValidationResult` values. Everything here signals a
broken precondition, a bad input file, or a scheduler bug.
"""


class SliceMemError(Exception):
    """Base class for all package errors."""


class ConfigInvalid(SliceMemError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ScheduleInvalid(ConfigInvalid):
    pass


class SeqOutOfRange(SliceMemError):
    pass


class UnvalidatedUpdate(SliceMemError):
    pass


class UnknownCommit(SliceMemError):
    pass


class UnknownAgent(SliceMemError):
    pass


class DeadAgent(SliceMemError):
    pass


class MalformedTrace(SliceMemError):
    pass


class MissingSnapshots(MalformedTrace):
    pass


class ScopeNotCovered(SliceMemError):
    pass


class InsufficientData(SliceMemError):
    pass
