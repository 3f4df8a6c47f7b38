"""Exception types and warning categories used across the package."""


class StommelError(Exception):
    """Base class for errors raised by this package."""


class BlowupError(StommelError):
    """Integration produced non-finite values (numerical blow-up)."""


class EquilibriumNotFoundError(StommelError):
    """No equilibrium of the requested type exists for these parameters."""


class DecompositionError(StommelError):
    """The analysis-update eigendecomposition failed or is badly conditioned."""


class EmptySelectionError(StommelError):
    """A profile selection or box assignment produced an empty set."""


class UnphysicalStateWarning(UserWarning):
    """A trajectory left the physically meaningful region (e.g. negative salinity)."""
