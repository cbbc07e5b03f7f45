class ScoreFlowError(Exception):
    """
    Base class of all errors raised by scoreflow.
    """


class NumericalError(ScoreFlowError):
    """
    A computation produced a degenerate or non-finite quantity.
    """


class DegenerateTransitionError(NumericalError):
    """
    The transition kernel p_0t collapsed (std below the 1e-12 floor).
    """


class StiffnessError(NumericalError):
    """
    The adaptive ODE solver exceeded its step budget, typically because the start time epsilon is too small.
    """


class NonFiniteLossError(NumericalError):
    """
    Training produced a nan or inf loss.
    """


class ConfigValidationError(ScoreFlowError):
    """
    An experiment configuration contains unknown, missing or invalid keys.
    """


class CheckpointMismatchError(ScoreFlowError):
    """
    A checkpoint header does not match the layout requested by the configuration.
    """


class UnsupportedOperationError(ScoreFlowError):
    """
    The operation is not defined for this kind of object, e.g. a density of discrete data.
    """
