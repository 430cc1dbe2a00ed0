"""Exception hierarchy shared by the whole package.

The CLI maps these onto exit codes: usage/config problems exit 1, data and
parse problems exit 2, numerical failures exit 3.
"""


class SeqLabelError(Exception):
    """Base class for all errors raised by seqlabel."""

    exit_code = 1


class ConfigError(SeqLabelError, ValueError):
    exit_code = 1


class ContractError(SeqLabelError, ValueError):
    """A caller violated an operation's precondition."""

    exit_code = 1


class DimensionError(ContractError):
    exit_code = 1


class DataError(SeqLabelError, ValueError):
    exit_code = 2


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class CheckpointError(SeqLabelError):
    exit_code = 2


class NumericalError(SeqLabelError, ArithmeticError):
    exit_code = 3
