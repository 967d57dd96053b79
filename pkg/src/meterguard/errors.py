"""Exception types shared across the package."""


class MeterGuardError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MeterGuardError, ValueError):
    """A configuration value violates its declared constraints."""


class InfeasibleTransition(MeterGuardError, ValueError):
    """A battery transition would leave demand unmet or overflow the battery."""


class NoFeasibleAction(MeterGuardError, ValueError):
    """No grid purchase satisfies the battery constraints for a state."""


class ZeroProbabilityObservation(MeterGuardError, ValueError):
    """A belief update was requested for an observation with zero predictive probability."""


class NonConvergence(MeterGuardError, RuntimeError):
    """Value iteration hit its iteration cap with the span still above tolerance."""


class HorizonTooLarge(MeterGuardError, RuntimeError):
    """An exact enumeration would exceed the configured node budget."""


class DomainError(MeterGuardError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateProcess(MeterGuardError, ValueError):
    """The renewable process never fires, so no finite truncation exists."""


class SchemaMismatch(MeterGuardError, ValueError):
    """A serialized artifact declares an unsupported schema version."""
