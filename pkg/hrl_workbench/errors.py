# hrl_workbench/errors.py


class WorkbenchError(RuntimeError):
    pass


class ConfigError(WorkbenchError):
    pass


class BackendError(WorkbenchError):
    """Raised when a relevance backend cannot produce an answer (retries exhausted, replay miss)."""


class UnknownTaskError(WorkbenchError):
    pass


class CacheFormatError(WorkbenchError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        location = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class CheckpointFormatError(CacheFormatError):
    pass


class CompareError(WorkbenchError):
    pass


class UnparsableAnswerWarning(UserWarning):
    """An LLM answer that is neither yes nor no; the skill is treated as not suggested."""
