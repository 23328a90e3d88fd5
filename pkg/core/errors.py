#!/usr/bin/env python3

from typing import Any, Optional


class AlertForgeError(Exception):
    """Base class for every error the toolkit raises on purpose."""

    exit_code = 1


class LogReadError(AlertForgeError):
    """An alert log could not be opened or read."""

    exit_code = 2


class EmptyDatasetError(AlertForgeError):
    """An operation received (or produced) no alerts."""

    exit_code = 3


class EncodingError(AlertForgeError):
    """A one-hot vector or feature index does not fit the feature space."""


class ShapeError(AlertForgeError):
    """Array dimensions do not chain through a network."""


class NumericsError(AlertForgeError):
    """
    Non-finite values appeared during optimisation.

    Training attaches the last checkpoint whose parameters were all finite so
    the caller can still persist it.
    """

    exit_code = 4

    def __init__(self, message: str, checkpoint: Optional[Any] = None):
        super().__init__(message)
        self.checkpoint = checkpoint


class MetricError(AlertForgeError):
    """A fidelity metric is undefined for its inputs."""


class SpecError(AlertForgeError):
    """A planted fixture specification is inconsistent."""


class MissingArtifactError(AlertForgeError):
    """A file produced by an earlier pipeline stage is missing."""

    exit_code = 5
