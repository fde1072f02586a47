"""Exception hierarchy."""


class LQTurnpikeError(Exception):
    """Base class for all errors raised by the package."""


class DimensionError(LQTurnpikeError, ValueError):
    pass


class NotPSDError(LQTurnpikeError, ValueError):
    def __init__(self, name, eigenvalue):
        super().__init__(f"{name} is not positive semidefinite "
                         f"(smallest eigenvalue {eigenvalue:.3e})")
        self.eigenvalue = eigenvalue


class NotPDError(LQTurnpikeError, ValueError):
    def __init__(self, name, eigenvalue):
        super().__init__(f"{name} is not positive definite "
                         f"(smallest eigenvalue {eigenvalue:.3e})")
        self.eigenvalue = eigenvalue


class NonConvergenceError(LQTurnpikeError, RuntimeError):
    def __init__(self, what, residual, iterations):
        super().__init__(f"{what} did not converge after {iterations} "
                         f"iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


class InfeasibleError(LQTurnpikeError):
    """No admissible control exists for the given initial state and horizon."""

    def __init__(self, x0, N, gap):
        super().__init__(f"no admissible control from x0={[float(v) for v in x0]} over "
                         f"N={N} (set gap {gap:.3e})")
        self.x0 = x0
        self.N = N
        self.gap = gap


class InfeasibleSteadyStateError(LQTurnpikeError):
    pass


class HypothesisViolatedError(LQTurnpikeError):
    pass


class SingularReducedHessianError(LQTurnpikeError):
    pass


class StorageInfeasibleError(LQTurnpikeError):
    def __init__(self, s, margin):
        super().__init__(f"no storage matrix found for rate s={s:.3e} "
                         f"(best LMI margin {margin:.3e})")
        self.s = s
        self.margin = margin


class NoFeasibleRateError(LQTurnpikeError):
    pass


class NotDecayingError(LQTurnpikeError):
    pass


class ConfigError(LQTurnpikeError, ValueError):
    pass
