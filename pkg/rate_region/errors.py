class InvalidParametersError(ValueError):
    """Raised when channel parameters, distortion targets or variable sets are malformed."""


class DegenerateConditioningError(ValueError):
    """Raised when a covariance block that has to be inverted or factored is singular."""


class NoFeasiblePointError(ValueError):
    """Raised when a search finds no parameter point meeting its constraints."""


class ConfigInfeasibleError(ValueError):
    """Raised when a simulator configuration cannot be realized."""
