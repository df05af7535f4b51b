"""Exception types raised across the package."""


class PredvarError(Exception):
    """Base class for all errors raised by this package."""


class NonFiniteInput(PredvarError):
    """An input array contains NaN or infinite entries."""


class NonSquare(PredvarError):
    """A square matrix was required."""


class RankDeficientDesign(PredvarError):
    """A design matrix does not have full column rank.

    Carries the estimated condition number of the offending design.
    """

    def __init__(self, message, cond=None):
        if cond is not None:
            message = f"{message} (condition estimate {cond:.3e})"
        super().__init__(message)
        self.cond = cond


class DimensionMismatch(PredvarError):
    """Array dimensions are inconsistent with the model or each other."""


class InsufficientHistory(PredvarError):
    """Too few time steps for the requested lag order."""


class InsufficientRows(PredvarError):
    """Too few samples to estimate the requested model."""


class UnstableDynamics(PredvarError):
    """The latent VAR companion matrix has spectral radius >= 1."""


class NotPsd(PredvarError):
    """A covariance matrix is not positive semi-definite."""


class SingularCrossProduct(PredvarError):
    """The weight/loadings cross product is numerically singular."""


class DegenerateData(PredvarError):
    """The sample covariance carries no usable variance."""


class EllExceedsRank(PredvarError):
    """Requested latent dimension exceeds the data covariance rank."""


class SingularInformation(PredvarError):
    """The information matrix of the loadings estimate is singular."""


class PenaltyDomain(PredvarError):
    """Model size penalty undefined: s * ell must be below the sample count."""


class AllCellsFailed(PredvarError):
    """Every cell of a model-size selection grid failed to fit."""


class RankDeficientBasis(PredvarError):
    """A subspace basis matrix does not have full column rank."""


class NonFiniteTrajectory(PredvarError):
    """Numerical integration diverged to non-finite values."""


class CsvParseError(PredvarError):
    """A CSV cell or row could not be parsed; carries coordinates."""

    def __init__(self, message, row=None, col=None):
        where = ""
        if row is not None:
            where = f" at row {row}" + (f", column {col}" if col is not None else "")
        super().__init__(message + where)
        self.row = row
        self.col = col


class InvalidFlags(PredvarError):
    """Command-line flags are out of range or inconsistent."""
