"""Trainer error types."""


class TrainerError(Exception):
    pass


class DataError(TrainerError):
    """A preference file or pair set is unusable; message names the line."""


class TrainingError(TrainerError):
    """Training aborted, e.g. on a non-finite loss."""
