"""Exception hierarchy. The CLI maps each family onto an exit code."""


class LibvecError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LibvecError):
    """Bad configuration: unknown ecosystem, invalid parameter ranges."""


class DataError(LibvecError):
    """Input data is missing, empty or malformed."""


class UnknownLibraryError(DataError, KeyError):
    """A queried library name is not in the vocabulary."""

    def __init__(self, name, suggestions=()):
        self.name = name
        self.suggestions = list(suggestions)
        msg = f"unknown library {name!r}"
        if self.suggestions:
            msg += f" (did you mean: {', '.join(self.suggestions)})"
        super().__init__(msg)

    def __str__(self):
        return self.args[0]


class SamplingError(DataError):
    """Negative sampling could not find a true negative pair."""


class NumericalError(LibvecError):
    """Training diverged (NaN/Inf) or a vector operation is undefined."""
