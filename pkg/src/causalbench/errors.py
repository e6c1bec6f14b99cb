"""Exception hierarchy shared across the package."""


class CausalBenchError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CausalBenchError):
    """Invalid user-supplied configuration (bad grids, impossible sizes)."""


class ContractError(CausalBenchError):
    """An operation was called outside its documented preconditions."""


class LoadError(CausalBenchError):
    """A dataset or graph file could not be loaded."""


class ParseError(LoadError):
    """A file was found but its contents could not be parsed."""


class NumericalError(CausalBenchError):
    """A numerical routine failed beyond recoverable tolerance."""
