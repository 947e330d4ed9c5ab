"""
Error hierarchy shared by the library and the CLI.

`InputError` maps to exit code 1 and `ComputationError` to exit code 2.
"""


class CentralityError(Exception):
    """Base class for all domain errors."""

    exit_code: int = 2


class InputError(CentralityError):
    """Missing, malformed or inconsistent input."""

    exit_code = 1


class MissingStageOutputError(InputError):
    """A stage ran before the stage whose artifacts it reads."""

    def __init__(self, path: str, command: str):
        super().__init__(f"missing {path}; run `{command}` first")
        self.path = path
        self.command = command


class ComputationError(CentralityError):
    """A numerical stage cannot produce a well-defined result."""

    exit_code = 2


class CollinearityError(ComputationError):
    """The regression design matrix is rank deficient."""

    def __init__(self, columns: list[str]):
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(columns)}")
        self.columns = columns
