"""Exception hierarchy shared by every stage of the pipeline."""


class EnsembleError(Exception):
    """Base class for all engine errors."""


class GeometryError(EnsembleError):
    """Invalid, unrepairable, or degenerate geometry."""

    def __init__(self, message, ident=None):
        if ident is not None:
            message = f"{message} (id={ident!r})"
        super().__init__(message)
        self.ident = ident


class RegionError(EnsembleError):
    """The region cannot support a chain (e.g. fewer than two districts)."""


class DegenerateRegionError(RegionError):
    """Region-wide entropy is zero, so the normalized index is undefined."""


class ContractError(EnsembleError, ValueError):
    """A caller broke an operation's precondition."""


class DegenerateVarianceError(EnsembleError, ValueError):
    """A statistic needs positive variance and got none."""


class StuckChainError(EnsembleError):
    """A chain hit its consecutive-reject ceiling or never accepted after burn-in."""


class IngestionError(EnsembleError):
    """Input files are missing or do not follow the expected schema."""
