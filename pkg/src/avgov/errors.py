"""Exception types shared across the library.

The CLI maps these onto process exit codes: contract/validation problems
exit 2, guard refusals exit 3.
"""


class AvgovError(Exception):
    """Base class for all library errors."""


class ContractViolation(AvgovError):
    """An input violated a documented precondition (range, shape, index)."""


class NormalizationError(AvgovError):
    """A zero-weight expert carries a positive external reward, so the
    weight-normalized external reward is undefined."""


class DerivationError(AvgovError):
    """Reward-schedule derivation was asked for parameters outside the
    admissible region; the message names the violated condition."""


class GuardRefusal(AvgovError):
    """An exhaustive computation was refused because its search space
    exceeds the built-in desk-scale bound."""


class ScenarioError(AvgovError):
    """A scenario file failed to parse or validate; the message names the
    offending field."""
