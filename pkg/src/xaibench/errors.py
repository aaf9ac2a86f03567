"""Exception and warning types raised across the benchmark."""


class BenchmarkError(Exception):
    """Base class for all benchmark errors."""


class DimensionMismatch(BenchmarkError, ValueError):
    pass


class DegenerateSplit(BenchmarkError, ValueError):
    pass


class TrajectoryDiverged(BenchmarkError, RuntimeError):
    """Every simulated trajectory left the admissible state region."""


class NonFiniteLoss(BenchmarkError, RuntimeError):
    pass


class PoolTooSmall(BenchmarkError, ValueError):
    pass


class BudgetTooSmall(BenchmarkError, ValueError):
    pass


class DimensionTooLarge(BenchmarkError, ValueError):
    pass


class ZeroVariance(BenchmarkError, ValueError):
    pass


class ConfigInvalid(BenchmarkError, ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class ResultsMalformed(BenchmarkError, ValueError):
    pass


class SingularDesign(UserWarning):
    """Design matrix was rank deficient; a tiny ridge penalty was applied."""


class EmptyCohortFeature(UserWarning):
    """A kNN cohort had zero spread along a feature; attribution set to 0."""


class SurrogateSingular(UserWarning):
    """LIME surrogate system was singular; the ridge penalty was increased."""
