"""Exception hierarchy shared by every module of the package."""


class LancasterError(ValueError):
    """Base class for all package errors."""


class ZeroWeight(LancasterError):
    pass


class DegenerateSeed(LancasterError):
    pass


class UnscalableBasis(LancasterError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"basis row {row} has a zero entry in the last state")


class NegativeCell(LancasterError):
    def __init__(self, location, value):
        self.location = location
        self.value = value
        super().__init__(f"negative cell {value!r} at {location}")


class DegreeTooHigh(LancasterError):
    pass


class DomainError(LancasterError):
    pass


class OutOfSupport(LancasterError):
    pass


class DomainMismatch(LancasterError):
    pass


class InfeasibleBasis(LancasterError):
    pass


class NegativeQ(LancasterError):
    pass


class NoLancasterForm(LancasterError):
    pass


class InfeasibleKernel(LancasterError):
    pass


class NegativeRate(LancasterError):
    def __init__(self, i, j, rate):
        self.i, self.j, self.rate = i, j, rate
        super().__init__(f"type-change rate {i + 1}->{j + 1} is negative ({rate!r})")


class ConfigError(LancasterError):
    pass
