"""Error hierarchy of the lab.

Every error carries the process exit code the management commands map it to:
2 for invalid parameters, 3 for a violated property, 4 for a resource abort.
"""


class KacLabError(Exception):
    exit_code = 1


class ParameterError(KacLabError, ValueError):
    exit_code = 2


class PropertyViolation(KacLabError):
    exit_code = 3


class ResourceAbort(KacLabError):
    exit_code = 4


class EmptyConditionalEnsemble(ParameterError):
    """No walker satisfies A_k yet."""

    def __init__(self, step, walkers):
        super().__init__(
            f"no walker has used every coordinate pair by step {step} "
            f"({walkers} walkers); increase the number of steps or walkers"
        )
        self.step = step
        self.walkers = walkers


class ObserverError(KacLabError):
    def __init__(self, observer, step, cause):
        super().__init__(f"observer {observer!r} failed at step {step}: {cause}")
        self.observer = observer
        self.step = step


class QuadratureError(KacLabError):
    pass


class NoValidWindow(KacLabError):
    pass


class ScheduleOverflowError(ResourceAbort):
    def __init__(self, summand, message):
        super().__init__(f"{summand}: {message}")
        self.summand = summand


class GridResolutionError(ResourceAbort):
    pass


class TransportSizeError(ResourceAbort):
    pass
