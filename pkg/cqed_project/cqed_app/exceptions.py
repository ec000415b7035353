class CqedError(Exception):
    """Base class for every error raised by the cavity QED toolkit.

    ``hint`` is a remediation shown by the correlator command; subclasses set a
    default and a raise site may pass a more specific one.
    """

    hint: str | None = None

    def __init__(self, *args, hint: str | None = None):
        super().__init__(*args)
        if hint is not None:
            self.hint = hint


# Invalid physical parameters (bad rates, atom count, truncation)
class ParameterError(CqedError, ValueError):
    pass


# Scenario configuration problems: unknown preset, bad keys, refusing to overwrite
class ScenarioError(CqedError):
    pass


class ConvergenceError(CqedError):
    """A numerical procedure did not reach its tolerance.

    Raised directly by the truncation sweep; subclasses narrow down where.
    """

    hint = "raise n_max or shrink the integration step"


class SteadyStateError(ConvergenceError):
    hint = "check the Liouvillian (null space must be one dimensional) or raise n_max"


class CalibrationError(ConvergenceError):
    hint = "the requested X is outside the reachable drive bracket [0, 20 kappa]"


class PropagationError(ConvergenceError):
    hint = "the Liouvillian eigenbasis is ill conditioned for this parameter set"


class TransformError(ConvergenceError):
    hint = "extend tau_max so that h(tau) has decayed to 1 at the end of the grid"


class StepSizeError(CqedError):
    hint = "shrink dt: a jump probability per step exceeded 0.01 or the norm collapsed"


class WeakFieldError(CqedError):
    pass


# Problems turning trajectory records into correlations
class CorrelatorError(CqedError):
    pass


# A jump channel fired on a state it annihilates
class CollapseError(CqedError):
    hint = "a collapse produced a zero-norm state; the jump probabilities are inconsistent"
