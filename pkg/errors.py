"""Exception hierarchy shared by every module, plus the CLI exit-code mapping."""

from typing import Optional, Type


class VacSimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(VacSimError, ValueError):
    """Invalid configuration or unusable input artifact."""


class MarginalsLoadError(ConfigError):
    pass


class MissingAttributeError(MarginalsLoadError):
    pass


class NegativeProbabilityError(MarginalsLoadError):
    pass


class EmptyCategoryError(MarginalsLoadError):
    pass


class CorpusError(ConfigError):
    pass


class RiskSeriesLoadError(ConfigError):
    pass


class PersonaLoadError(ConfigError):
    pass


class EdgeListLoadError(ConfigError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ContractError(VacSimError, ValueError):
    """A caller broke an operation's precondition."""


class ProviderError(VacSimError, RuntimeError):
    """A chat or embedding provider failed (after retries, where applicable)."""

    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class PartialNetworkError(ProviderError):
    """Network generation aborted; ``graph`` holds the edges collected so far."""

    def __init__(self, message: str, graph, attempts: int = 0):
        super().__init__(message, attempts=attempts)
        self.graph = graph


class PartialCorpusError(ProviderError):
    """News generation aborted; ``items`` holds the articles generated so far."""

    def __init__(self, message: str, items, attempts: int = 0):
        super().__init__(message, attempts=attempts)
        self.items = items


class ProtocolError(VacSimError):
    """An evaluation protocol could not produce a valid result."""


class ComparisonError(VacSimError, ValueError):
    pass


class AggregationError(VacSimError, ValueError):
    pass


class JudgeParseError(VacSimError, ValueError):
    pass


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_PROTOCOL = 4

_EXIT_CODES: tuple[tuple[Type[BaseException], int], ...] = (
    (ConfigError, EXIT_CONFIG),
    (ProviderError, EXIT_PROVIDER),
    (ProtocolError, EXIT_PROTOCOL),
    (ComparisonError, EXIT_PROTOCOL),
    (AggregationError, EXIT_PROTOCOL),
    (ContractError, EXIT_CONFIG),
)


def exit_code_for(exc: BaseException) -> int:
    for exc_type, code in _EXIT_CODES:
        if isinstance(exc, exc_type):
            return code
    return 1
