"""Recording-level data types shared by ingestion and feature extraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import ContractError

MODALITIES = ("imu", "video")
N_ACTIVITIES = 8


class ActivityLabel(NamedTuple):
    index: int
    name: str


@dataclass(frozen=True, eq=False)
class JointAngleSequence:
    """One recording: a ``T x J`` matrix of joint angles in degrees.

    ``times`` holds per-sample timestamps in seconds when the recording is not
    uniformly sampled; ``None`` means sample ``k`` was taken at
    ``k / sample_rate_hz``.
    """

    subject_id: str
    modality: str
    activity: ActivityLabel
    sample_rate_hz: float
    angles: np.ndarray
    channels: tuple = ()
    trial: int = 0
    times: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=np.float64)
        if angles.ndim != 2 or angles.shape[0] < 1 or angles.shape[1] < 1:
            raise ContractError(f"angles must be a non-empty T x J matrix, got shape {angles.shape}")
        if not np.isfinite(angles).all():
            raise ContractError(f"recording {self.subject_id}/{self.activity.name}: non-finite angle values")
        if self.modality not in MODALITIES:
            raise ContractError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if not 0 <= self.activity.index < N_ACTIVITIES:
            raise ContractError(f"activity index {self.activity.index} outside [0, {N_ACTIVITIES})")
        if not self.sample_rate_hz > 0:
            raise ContractError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if self.channels and len(self.channels) != angles.shape[1]:
            raise ContractError(f"{len(self.channels)} channel names for {angles.shape[1]} columns")
        if self.times is not None:
            times = np.asarray(self.times, dtype=np.float64)
            if times.shape != (angles.shape[0],) or (np.diff(times) <= 0).any():
                raise ContractError("times must be strictly increasing with one entry per sample")
            object.__setattr__(self, "times", times)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def n_samples(self) -> int:
        return self.angles.shape[0]

    @property
    def n_channels(self) -> int:
        return self.angles.shape[1]

    def timestamps(self) -> np.ndarray:
        if self.times is not None:
            return self.times
        return np.arange(self.n_samples) / self.sample_rate_hz
