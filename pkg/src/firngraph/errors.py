"""Exception types shared across the firngraph pipeline."""


class FirngraphError(Exception):
    """Base class for all validation and runtime errors raised by firngraph."""


class ColumnCountMismatch(FirngraphError):
    """Columns of a label mask disagree on the number of layer-top runs."""


class EmptyColumn(FirngraphError):
    """A label mask column contains no white pixel."""


class NonMonotonicTops(FirngraphError):
    """Layer tops are not strictly increasing down a column."""


class InsufficientLayers(FirngraphError):
    """A record has fewer layers than the modeling setup requires."""


class DegenerateChannel(FirngraphError):
    """A feature channel has zero variance; z-scoring is undefined."""


class ZeroGraph(FirngraphError):
    """Adjacency matrix is identically zero; no Laplacian exists."""


class ShapeMismatch(FirngraphError):
    """Operand shapes are incompatible."""


class DivergedTraining(FirngraphError):
    """Training loss became NaN or Inf."""
