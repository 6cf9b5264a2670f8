class LoadcastError(Exception):
    """Base class for errors raised by loadcast."""


class ShapeError(LoadcastError, ValueError):
    pass


class NonFiniteError(LoadcastError, ValueError):
    pass


class DataError(LoadcastError, ValueError):
    """Raised when input data cannot be turned into usable series or windows."""


class TrainingDivergedError(LoadcastError, RuntimeError):
    def __init__(self, epoch, message="non-finite training loss"):
        self.epoch = epoch
        super().__init__(f"{message} at epoch {epoch}")


class CheckpointError(LoadcastError, ValueError):
    pass
