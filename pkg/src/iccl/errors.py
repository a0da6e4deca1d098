"""Exception types shared across the package."""


class ICCLError(Exception):
    """Base class for every error raised on purpose by :mod:`iccl`."""


class InvalidArgument(ICCLError, ValueError):
    pass


class PlacementFailure(ICCLError, RuntimeError):
    """Building rejection sampling ran out of attempts."""

    def __init__(self, placed, requested, budget):
        self.placed = placed
        self.requested = requested
        self.budget = budget
        super().__init__(
            f"placed {placed} of {requested} buildings before exhausting "
            f"the retry budget of {budget} attempts"
        )


class DegenerateGeometry(ICCLError, ArithmeticError):
    """Anchor layout does not pin down a unique position."""


class TrainingDiverged(ICCLError, FloatingPointError):
    def __init__(self, epoch, value):
        self.epoch = epoch
        self.value = value
        super().__init__(f"loss became non-finite ({value!r}) at epoch {epoch}")
