"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """Raised when inputs break an operation's preconditions (shapes, NaNs, ranges)."""


class ConvergenceError(RuntimeError):
    """Training stopped before reaching the gradient tolerance."""

    def __init__(self, message, grad_norm):
        super().__init__(f"{message} (final gradient inf-norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


class DivergenceError(RuntimeError):
    """The stochastic inverse-HVP recursion blew up."""


class NotPositiveDefinite(RuntimeError):
    """Dense Hessian could not be Cholesky-factorized."""
