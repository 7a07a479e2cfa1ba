#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Exceptions raised by mgmd_gan.

Parameter validation reuses scikit-learn's ``InvalidParameterError``. The
classes below cover the failure modes that validation cannot see: shapes that
only disagree at run time, non-finite arithmetic, malformed files and broken
preconditions.
"""


class DimensionError(ValueError):
    """Shapes of the operands of a tensor operation do not conform."""


class NumericError(FloatingPointError):
    """An operation produced NaN or Inf.

    Examples
    --------
    >>> err = NumericError("op 3 (log) produced non-finite values", op_id=3)
    >>> err.op_id
    3
    """

    def __init__(self, message, *, op_id=None):
        super().__init__(message)
        self.op_id = op_id


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class ConfigError(ValueError):
    """A run configuration document is malformed."""


class FormatError(ValueError):
    """An IDX file is malformed. The message names the byte offset."""

    def __init__(self, message, *, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CheckpointError(ValueError):
    """A checkpoint file cannot be loaded."""
