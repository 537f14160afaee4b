"""Exception types shared across modules.

Input/parameter problems derive from ``ValueError``; numerical failures from
``RuntimeError``.  The CLI maps the first group to exit code 2, the second to 1.
"""


class InvalidParameterError(ValueError):
    pass


class EmptyModelError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residuals=None, iterations=None):
        super().__init__(msg)
        self.residuals = residuals
        self.iterations = iterations


class FitError(RuntimeError):
    pass
