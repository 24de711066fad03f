"""Exception types shared across the package."""


class TinysplatError(Exception):
    pass


class ValidationError(TinysplatError):
    """A parameter array violates its domain (non-finite, zero-norm quaternion, ...)."""

    def __init__(self, channel: str, index, detail: str = ""):
        self.channel = channel
        self.index = index
        msg = f"invalid value in channel '{channel}' at index {index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class StaleSceneError(TinysplatError):
    """A backward pass was fed a forward context from an older scene generation."""


class ShapeMismatchError(TinysplatError):
    pass


class TrainingDiverged(TinysplatError):
    def __init__(self, epoch: int, view: int, loss):
        self.epoch = epoch
        self.view = view
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, view {view}")
