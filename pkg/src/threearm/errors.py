"""Exception types raised across the package."""


class ThreeArmError(ValueError):
    """Base class for every error raised by :mod:`threearm`."""


class TrialProblem(ThreeArmError):
    """A single violated invariant of one trial arm."""

    def __init__(self, arm, message):
        self.arm = arm
        super().__init__(f"arm {arm}: {message}")


class EmptyArm(TrialProblem):
    def __init__(self, arm):
        super().__init__(arm, "no observations")


class TooFewObservations(TrialProblem):
    def __init__(self, arm, count):
        self.count = count
        super().__init__(arm, f"{count} observation(s), at least 2 required")


class NonFiniteInput(TrialProblem):
    def __init__(self, arm, index, value=None):
        self.index = index
        self.value = value
        super().__init__(arm, f"non-finite value {value!r} at index {index}")


class InvalidTrial(ThreeArmError):
    """Raised by trial validation; ``problems`` lists every violation found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(str(p) for p in self.problems))


class DegenerateVariance(ThreeArmError):
    """The variance estimator of the Wald statistic is zero."""


class DegeneratePermutation(DegenerateVariance):
    """A relabeled trial has zero estimated variance."""


class AllPermutationsDegenerate(DegenerateVariance):
    """Every permutation drawn or enumerated was degenerate."""


class EnumerationTooLarge(ThreeArmError):
    def __init__(self, count, threshold):
        self.count = count
        self.threshold = threshold
        super().__init__(
            f"{count} distinct group assignments exceed the enumeration limit {threshold}"
        )


class DomainError(ThreeArmError):
    """Argument outside the domain of a special function."""


class UnderdispersedInput(ThreeArmError):
    """Variance below the mean; no negative binomial matches the moments."""


class InvalidFamilyParams(ThreeArmError):
    pass


class AllocationMismatch(ThreeArmError):
    pass


class UnknownSelector(ThreeArmError):
    pass


class ParseError(ThreeArmError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")
