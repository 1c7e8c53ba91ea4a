"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class DrokitError(Exception):
    code = "error"


class Infeasible(DrokitError):
    code = "infeasible"


class DomainError(DrokitError):
    code = "domain"


class UnboundedEnvelope(DrokitError):
    code = "unbounded_envelope"


class NumericBracketFailure(DrokitError):
    code = "bracket_failure"


class BracketError(DrokitError):
    code = "bracket"


class NonFiniteObjective(DrokitError):
    code = "non_finite_objective"


class MissingDerivative(DrokitError):
    code = "missing_derivative"


class NoConvergence(DrokitError):
    code = "no_convergence"


class InvalidAlpha(DrokitError):
    code = "invalid_alpha"


class InfeasibleQ(DrokitError):
    code = "infeasible_q"


class InfiniteRegion(DrokitError):
    code = "infinite_region"
