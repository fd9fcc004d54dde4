"""Exception types shared across the detection pipeline."""


class MevLensError(Exception):
    """Base class for all package errors."""


class SchemaError(MevLensError):
    """A corpus line does not match the block schema."""

    def __init__(self, message, line=None, block=None):
        self.line = line
        self.block = block
        where = []
        if line is not None:
            where.append(f"line {line}")
        if block is not None:
            where.append(f"block {block}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class RangeEmpty(MevLensError):
    """No blocks were found inside the requested interval."""


class DuplicateTopic(MevLensError):
    """Two swap patterns share a topic0 but disagree on the field map."""


class DecodeError(MevLensError):
    """A log matched a known topic0 but could not be decoded."""

    def __init__(self, message, tx_hash=None, log_index=None, pattern_id=None):
        self.tx_hash = tx_hash
        self.log_index = log_index
        self.pattern_id = pattern_id
        super().__init__(message)


class EmptyTraderSet(MevLensError):
    """No trader address is left after removing irrelevant addresses."""


class NoRoute(MevLensError):
    """No exchange route connects the requested tokens."""


class ReplayUnavailable(MevLensError):
    """The replay oracle has no state or program for the requested transaction."""


class InsufficientLiquidity(MevLensError):
    """A simulated swap would return nothing."""


class SpecInfeasible(MevLensError):
    """An injection spec cannot be realised on the simulated chain."""


class PipelineError(MevLensError):
    """A detector failed on a block; the message carries block and transaction context."""
