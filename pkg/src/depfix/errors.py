"""Exception hierarchy shared by the pipeline stages."""


class DepfixError(Exception):
    pass


class MappingLoadError(DepfixError):
    """The mapping file is not valid JSON."""


class MappingValidationError(DepfixError):
    """A mapping entry violates the mapping contract."""


class SourceParseError(DepfixError):
    def __init__(self, message: str, lineno: int | None = None, col: int | None = None):
        super().__init__(message)
        self.lineno = lineno
        self.col = col


class BackendError(DepfixError):
    pass


class BackendConfigError(BackendError):
    pass


class TransportError(BackendError):
    """Network failure that survived the retry budget."""


class ScriptedMiss(BackendError):
    def __init__(self, key: str):
        super().__init__(f"no scripted response for {key!r}")
        self.key = key


class StrategyUnsupported(BackendError):
    """The backend cannot continue from a forced prefix."""


class FixError(DepfixError):
    pass


class UndefinedMetric(DepfixError):
    pass
