class NumericalAbort(Exception):
    """A simulation produced a non-finite state.

    ``position`` is the event index (finite system) or the step index (limit system).
    """

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position
