"""Exception hierarchy shared by every stage of the pipeline."""


class FlowAccumError(Exception):
    """Base class for all errors raised by flowaccum."""


class ValidationError(FlowAccumError, ValueError):
    """A value (usually a flow-direction byte) is outside its legal range."""


class CyclicFlowError(FlowAccumError):
    """Flow directions contain a directed cycle."""


class FormatError(FlowAccumError):
    """A manifest or tile file is malformed or inconsistent with its layout."""


class ProtocolError(FlowAccumError):
    """A message between producer and consumer does not match the layout."""


class CacheError(FlowAccumError):
    """A cache spill is missing or corrupt."""


class StateError(FlowAccumError):
    """A consumer was asked to finalize a tile it holds no state for."""


class WorkerError(FlowAccumError):
    """A consumer failed while processing a tile; the job is aborted."""

    def __init__(self, tile, message):
        super().__init__(f"tile {tile}: {message}")
        self.tile = tile
