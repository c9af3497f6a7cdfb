"""Exceptions raised by hgdta.

Every error derives from `HGDTAError` and from the builtin it refines, so callers that
only know about `ValueError` / `KeyError` / `RuntimeError` still catch them.
"""


class HGDTAError(Exception):
    """Base class of all hgdta errors."""


class ContractViolation(HGDTAError, ValueError):
    """A function was called outside its contract (shapes, scalar loss, ranges)."""


class MissingGradientError(HGDTAError, RuntimeError):
    """A gradient was requested for a tensor that is not attached to the tape."""

    def __init__(self, name):
        super().__init__(f'no gradient recorded for {name!r} (tensor is detached)')
        self.name = name


class NonDeterministicError(HGDTAError, RuntimeError):
    """Replaying a forward computation gave a different result."""


class GraphError(HGDTAError, ValueError):
    """Invalid affinity or molecular graph input."""


class SmilesParseError(HGDTAError, ValueError):
    """A SMILES string could not be parsed; `position` is the 0-based column."""

    def __init__(self, message, position, smiles=''):
        super().__init__(f'{message} at position {position}')
        self.reason = message
        self.position = position
        self.smiles = smiles


class SequenceError(HGDTAError, ValueError):
    """Invalid protein sequence."""


class ContactMapError(HGDTAError, ValueError):
    """Invalid or mismatched contact map / PSSM file."""


class ColdStartError(HGDTAError, KeyError):
    """No similarity information is available for an unseen drug or target."""

    def __init__(self, entity, message=None):
        super().__init__(message or f'no similarity row for unseen entity {entity!r}')
        self.entity = entity

    def __str__(self):
        return self.args[0]


class UndefinedMetricError(HGDTAError, ValueError):
    """A metric is undefined for the given inputs (constant vector, one cluster, ...)."""


class SplitError(HGDTAError, ValueError):
    """A scenario split cannot be produced for the requested instance."""


class DatasetError(HGDTAError, ValueError):
    """A dataset file is missing or malformed."""

    def __init__(self, message, path=None, line=None):
        where = ''
        if path is not None:
            where = f'{path}'
            if line is not None:
                where += f':{line}'
            where += ': '
        super().__init__(where + message)
        self.path = path
        self.line = line


class ConfigError(HGDTAError, ValueError):
    """Unknown or malformed configuration entry."""


class CheckpointError(HGDTAError, RuntimeError):
    """A checkpoint is truncated, from another version, or incompatible."""


class DivergenceError(HGDTAError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss):
        super().__init__(f'training diverged at epoch {epoch} (loss={loss})')
        self.epoch = epoch
        self.loss = loss
