"""Exception hierarchy. ``exit_code`` is what the CLI returns."""


class ProstMRIError(Exception):
    exit_code = 1


class DataError(ProstMRIError):
    exit_code = 1


class IngestionError(DataError):
    pass


class SchemaError(DataError):
    pass


class DecodeError(DataError):
    pass


class ContractError(DataError):
    """Incompatible inputs, e.g. feature dimension or source mismatch."""


class ConfigError(ProstMRIError):
    exit_code = 2


class NumericError(ProstMRIError):
    exit_code = 3


class TrainingError(NumericError):
    pass


class CalibrationError(NumericError):
    pass


class UndefinedMetricError(NumericError):
    pass


class LeakageError(NumericError):
    """A test-split id reached a training or threshold-selection step."""


class PipelineError(ProstMRIError):
    """Wraps a module error with the pipeline name and fold index."""

    def __init__(self, pipeline, fold, cause):
        self.pipeline = pipeline
        self.fold = fold
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        where = f"pipeline {pipeline!r}" + ("" if fold is None else f", fold {fold}")
        super().__init__(f"{where}: {cause}")
