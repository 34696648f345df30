"""Windowing and spectral features for joint-angle recordings.

A recording is resampled to the canonical rate, cut into fixed-length
windows, and each window becomes ``[raw angles | 2D DFT magnitude]`` stacked
along the channel axis, so a ``W x J`` window yields a ``W x 2J`` input.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence, Union

import numpy as np

from . import kernels
from .errors import ContractError, InsufficientDataError
from .records import ActivityLabel, JointAngleSequence

NORM_EPS = 1e-8


@dataclass(frozen=True)
class FeatureConfig:
    window_seconds: float = 2.0
    sample_rate_hz: float = 50.0
    stride_fraction: float = 0.5
    fft_enabled: bool = True

    def __post_init__(self):
        if not self.sample_rate_hz > 0 or not self.window_seconds > 0:
            raise ContractError("window_seconds and sample_rate_hz must be positive")
        if not 0.0 < self.stride_fraction <= 1.0:
            raise ContractError(f"stride_fraction must be in (0, 1], got {self.stride_fraction}")
        if self.window_length < 2:
            raise ContractError(f"window length {self.window_length} samples is below 2")

    @property
    def window_length(self) -> int:
        return int(round(self.window_seconds * self.sample_rate_hz))

    @property
    def stride(self) -> int:
        return max(1, int(round(self.window_length * self.stride_fraction)))

    def n_features(self, n_channels: int) -> int:
        return 2 * n_channels if self.fft_enabled else n_channels


@dataclass(frozen=True, eq=False)
class FeatureWindow:
    features: np.ndarray
    label: ActivityLabel
    subject_id: str
    modality: str


@dataclass(eq=False)
class WindowSet:
    """Stacked windows: ``X`` is ``(N, W, C)``, ``y`` and ``subjects`` are ``(N,)``."""

    X: np.ndarray
    y: np.ndarray
    subjects: np.ndarray
    modality: str = ""

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def from_windows(cls, windows: Sequence[FeatureWindow]) -> "WindowSet":
        if not windows:
            raise ContractError("cannot stack an empty window list")
        return cls(
            X=np.stack([w.features for w in windows]),
            y=np.array([w.label.index for w in windows], dtype=np.int64),
            subjects=np.array([w.subject_id for w in windows]),
            modality=windows[0].modality,
        )

    def select(self, mask) -> "WindowSet":
        return WindowSet(self.X[mask], self.y[mask], self.subjects[mask], self.modality)

    def of_subjects(self, subjects: Iterable[str]) -> "WindowSet":
        return self.select(np.isin(self.subjects, list(subjects)))

    @property
    def subject_set(self) -> set:
        return set(self.subjects.tolist())


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    eps: float = NORM_EPS


def resample(seq: JointAngleSequence, target_hz: float) -> JointAngleSequence:
    """Linearly interpolate every channel onto a uniform ``target_hz`` grid.

    The grid starts at the first timestamp and covers the original duration.
    """
    if seq.n_samples < 2:
        raise InsufficientDataError(f"cannot resample a {seq.n_samples}-sample recording")
    if not target_hz > 0:
        raise ContractError(f"target rate must be positive, got {target_hz}")
    if seq.times is None and seq.sample_rate_hz == target_hz:
        return replace(seq, angles=seq.angles.copy())
    t = seq.timestamps()
    n = int(np.floor((t[-1] - t[0]) * target_hz + 1e-9)) + 1
    grid = t[0] + np.arange(n) / target_hz
    out = np.empty((n, seq.n_channels))
    for j in range(seq.n_channels):
        out[:, j] = np.interp(grid, t, seq.angles[:, j])
    return replace(seq, angles=out, sample_rate_hz=float(target_hz), times=None)


def segment(seq: JointAngleSequence, cfg: FeatureConfig) -> list:
    """Cut a recording into ``W``-sample windows every ``S`` samples.

    Recordings shorter than one window produce no windows.
    """
    if seq.times is not None or not np.isclose(seq.sample_rate_hz, cfg.sample_rate_hz, rtol=0, atol=1e-9):
        raise ContractError(
            f"segment needs a uniform {cfg.sample_rate_hz} Hz recording; resample first "
            f"(got {seq.sample_rate_hz} Hz)"
        )
    w, s = cfg.window_length, cfg.stride
    if seq.n_samples < w:
        return []
    count = (seq.n_samples - w) // s + 1
    return [seq.angles[k * s : k * s + w].copy() for k in range(count)]


def dft2_magnitude(window: np.ndarray, method: str = "direct") -> np.ndarray:
    """``|F[u, v]|`` of the full-resolution 2D DFT of a ``W x J`` window.

    ``method="direct"`` evaluates the transform without an FFT; ``"fft"``
    uses ``numpy.fft.fft2`` and agrees to about 1e-12.
    """
    x = np.ascontiguousarray(window, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError(f"dft2_magnitude expects a 2-D window, got shape {x.shape}")
    if method == "fft":
        return np.abs(np.fft.fft2(x))
    if method != "direct":
        raise ContractError(f"unknown DFT method {method!r}")
    return kernels.dft2_magnitude(x)


def assemble(
    window: np.ndarray,
    cfg: FeatureConfig,
    label: ActivityLabel = ActivityLabel(0, "0"),
    subject_id: str = "",
    modality: str = "imu",
) -> FeatureWindow:
    raw = np.asarray(window, dtype=np.float64)
    if not np.isfinite(raw).all():
        raise ContractError("window contains non-finite values")
    feats = np.concatenate([raw, dft2_magnitude(raw)], axis=1) if cfg.fft_enabled else raw.copy()
    return FeatureWindow(feats, label, subject_id, modality)


def extract_windows(seq: JointAngleSequence, cfg: FeatureConfig) -> list:
    """Resample (when needed), segment and assemble one recording."""
    if seq.times is not None or seq.sample_rate_hz != cfg.sample_rate_hz:
        seq = resample(seq, cfg.sample_rate_hz)
    return [assemble(w, cfg, seq.activity, seq.subject_id, seq.modality) for w in segment(seq, cfg)]


def extract_dataset(sequences: Iterable[JointAngleSequence], cfg: FeatureConfig) -> WindowSet:
    windows = []
    for seq in sequences:
        windows.extend(extract_windows(seq, cfg))
    return WindowSet.from_windows(windows)


WindowsLike = Union[WindowSet, Sequence[FeatureWindow], np.ndarray]


def _as_array(windows: WindowsLike) -> np.ndarray:
    if isinstance(windows, WindowSet):
        return windows.X
    if isinstance(windows, np.ndarray):
        return windows
    return np.stack([w.features for w in windows]) if len(windows) else np.empty((0, 0, 0))


def fit_norm(train_windows: WindowsLike, eps: float = NORM_EPS) -> NormStats:
    """Per-column mean and floored population std over all rows of all windows."""
    x = _as_array(train_windows)
    if x.size == 0:
        raise ContractError("fit_norm needs at least one training window")
    rows = x.reshape(-1, x.shape[-1])
    return NormStats(rows.mean(axis=0), np.maximum(rows.std(axis=0), eps), eps)


def apply_norm(w, stats: NormStats):
    """Z-score a FeatureWindow, WindowSet or raw array with ``stats``."""
    if isinstance(w, FeatureWindow):
        return replace(w, features=(w.features - stats.mean) / stats.std)
    if isinstance(w, WindowSet):
        return WindowSet((w.X - stats.mean) / stats.std, w.y, w.subjects, w.modality)
    return (np.asarray(w) - stats.mean) / stats.std
