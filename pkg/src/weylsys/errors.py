"""Exception hierarchy.

Every numerical failure carries a short ``invariant`` name so the CLI can
report which check broke and map it to an exit code.
"""


class WeylSysError(Exception):
    invariant = "generic"

    def __init__(self, message, **context):
        self.message = message
        self.context = dict(context)
        if context:
            extra = ", ".join(f"{k}={v}" for k, v in context.items())
            message = f"{message} [{extra}]"
        super().__init__(message)

    def add_context(self, **context):
        """Attach context (existing keys win) and rebuild the message."""
        for k, v in context.items():
            self.context.setdefault(k, v)
        extra = ", ".join(f"{k}={v}" for k, v in self.context.items())
        self.args = (f"{self.message} [{extra}]",)
        return self


class ValidationError(WeylSysError):
    """Input does not describe an admissible problem."""

    invariant = "validation"


class AssumptionViolated(ValidationError):
    invariant = "assumption1"

    def __init__(self, clause, message, **context):
        self.clause = clause
        super().__init__(f"{clause}: {message}", **context)


class ParseError(ValidationError):
    invariant = "parse"


class NumericalError(WeylSysError):
    invariant = "numerical"


class SolvabilityViolated(NumericalError):
    invariant = "solvability"


class DegenerateSystem(NumericalError):
    invariant = "degenerate_system"


class DegenerateSectorization(ValidationError):
    invariant = "sectorization"


class SeriesNotConverged(NumericalError):
    invariant = "series_convergence"


class NearIntegerResonance(NumericalError):
    invariant = "resonance"


class IntegrationDiverged(NumericalError):
    invariant = "integration"


class AsymptoticNotReached(NumericalError):
    invariant = "asymptotic_range"


class ConditionR0Violated(NumericalError):
    invariant = "condition_R0"


class BranchCrossing(NumericalError):
    invariant = "branch"


class NotConverged(NumericalError):
    invariant = "picard_convergence"


class EnvelopeViolated(NumericalError):
    invariant = "envelope"


class TailTooHeavy(NumericalError):
    invariant = "tail_mass"


class ExcessiveSpread(NumericalError):
    invariant = "x_spread"


class DeltaZero(NumericalError):
    invariant = "delta_nonzero"


class DeltaZeroAtOrigin(NumericalError):
    invariant = "delta_nonzero_origin"


class ConstructionsDisagree(NumericalError):
    invariant = "weyl_constructions"


class ConditionG0Violated(NumericalError):
    invariant = "condition_G0"
