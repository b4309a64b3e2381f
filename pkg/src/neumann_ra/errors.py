"""Exception hierarchy shared across the package."""


class NeumannRAError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(NeumannRAError):
    """Covariate count incompatible with the population size."""


class RankDeficient(NeumannRAError):
    """Centered covariate covariance is numerically singular."""


class DegreeTooLarge(NeumannRAError):
    """Requested correction degree exceeds the configured cap."""


class SizeTooLarge(NeumannRAError):
    """Requested base set exceeds the partition enumeration cap."""


class BaseMismatch(NeumannRAError):
    """Partition base set does not match the object it is applied to."""


class PopulationTooSmall(NeumannRAError):
    """Closed-form weight requires n >= 3."""


class BudgetExceeded(NeumannRAError):
    """Brute-force enumeration would exceed the oracle budget."""


class SingularArmCovariance(NeumannRAError):
    """In-arm covariate covariance is numerically singular."""


class ArmTooSmall(NeumannRAError):
    """Arm has fewer than p + 2 units."""


class WeightArmMismatch(NeumannRAError):
    """Weight vector was computed for a sample size other than the arm size."""


class CacheCorrupt(NeumannRAError):
    """On-disk weight cache entry is truncated or inconsistent."""
