class PipelineError(Exception):
    exit_code = 1
    stage = None  # set by the run pipeline when a stage fails


class ConfigError(PipelineError, ValueError):
    exit_code = 2


class DataError(PipelineError, ValueError):
    exit_code = 3


class NumericError(PipelineError, ArithmeticError):
    exit_code = 4
