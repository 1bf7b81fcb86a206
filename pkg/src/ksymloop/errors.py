"""Exception hierarchy. Every error carries the measured quantity that tripped it."""


class KSymLoopError(Exception):
    """Base class for all package errors."""


class NonUnitModulus(KSymLoopError, ValueError):
    pass


class WindowOverflow(KSymLoopError, ValueError):
    pass


class IncompatibleSampling(KSymLoopError, ValueError):
    pass


class NotPowerOfLambdaK(KSymLoopError, ValueError):
    def __init__(self, k, offending):
        super().__init__(f"loop is not a function of lambda^{k}: off-multiple coefficient norm {offending:.3e}")
        self.k = k
        self.offending = offending


class SingularLoop(KSymLoopError, ValueError):
    def __init__(self, lam, sigma_min):
        super().__init__(f"loop is singular at lambda={lam:.6g} (min singular value {sigma_min:.3e})")
        self.lam = lam
        self.sigma_min = sigma_min


class WrongMultiplicity(KSymLoopError, ValueError):
    pass


class NonUnitaryResult(KSymLoopError, ValueError):
    pass


class FactorizationFailed(KSymLoopError, RuntimeError):
    pass


class DimensionMismatch(KSymLoopError, ValueError):
    pass


class NotKSymmetric(KSymLoopError, ValueError):
    pass


class NotRootOfIdentity(KSymLoopError, ValueError):
    pass


class TwistRemovalFailed(KSymLoopError, ValueError):
    pass


class NotKSymmetricSubspace(KSymLoopError, ValueError):
    pass


class NotNested(KSymLoopError, ValueError):
    pass


class NotTwisted(KSymLoopError, ValueError):
    pass


class GridTooCoarse(KSymLoopError, ValueError):
    pass


class StepTooLarge(KSymLoopError, RuntimeError):
    pass


class LambdaMinusTwoLeak(KSymLoopError, ValueError):
    def __init__(self, norm):
        super().__init__(f"conjugated potential has a lambda^-2 (or lower) coefficient of norm {norm:.3e}")
        self.norm = norm


class RankUnstable(KSymLoopError, ValueError):
    pass


class NotNilconformal(KSymLoopError, ValueError):
    pass


class ParameterOutOfRange(KSymLoopError, ValueError):
    pass


class NotFull(KSymLoopError, ValueError):
    pass


class ConfigError(KSymLoopError, ValueError):
    pass


class IoError(KSymLoopError, OSError):
    pass
