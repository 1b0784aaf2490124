class NetstressError(Exception):
    """Base class for errors raised by the package."""


class ValidationError(NetstressError):
    """Input data or arguments violate a documented invariant."""


class CollinearityError(NetstressError):
    """Design matrix is rank deficient after pruning."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__("collinear columns: " + ", ".join(self.columns))
