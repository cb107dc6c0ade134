"""Exceptions shared across file readers."""


class FileFormatError(ValueError):
    """An on-disk artifact (measurements, calibration, DB, report) is malformed."""
