"""Joint-angle datasets: CSV ingestion, synthetic generation and subject folds.

CSV layout
----------
One recording per file, named ``S<subject>_A<activity>_T<trial>_<modality>.csv``
(for example ``S03_A05_T1_imu.csv``).  The header is
``time,<ch1>,...,<chJ>``; the first column is time in seconds and the others
are joint angles in degrees.  Values are written with the shortest repr that
round-trips, so write -> load -> write is byte-stable.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, LoadError
from .records import MODALITIES, N_ACTIVITIES, ActivityLabel, JointAngleSequence

log = logging.getLogger(__name__)

FILE_PATTERN = re.compile(r"^S(?P<subject>[A-Za-z0-9]+)_A(?P<activity>[A-Za-z0-9]+)_T(?P<trial>\d+)_(?P<modality>imu|video)\.csv$")


@dataclass(eq=False)
class Dataset:
    sequences: list
    subjects: tuple
    modality: str
    activity_names: tuple = ()

    def __post_init__(self):
        roster = set(self.subjects)
        for seq in self.sequences:
            if seq.subject_id not in roster:
                raise ContractError(f"sequence subject {seq.subject_id!r} not in roster")
            if seq.modality != self.modality:
                raise ContractError(f"mixed modalities: {seq.modality!r} in a {self.modality!r} dataset")
        if len(set(self.subjects)) != len(self.subjects):
            raise ContractError("duplicate subject ids in roster")

    def __len__(self) -> int:
        return len(self.sequences)

    def summary(self) -> dict:
        per_subject = {s: 0 for s in self.subjects}
        for seq in self.sequences:
            per_subject[seq.subject_id] += 1
        return {
            "modality": self.modality,
            "n_subjects": len(self.subjects),
            "n_recordings": len(self.sequences),
            "activities": list(self.activity_names),
            "recordings_per_subject": per_subject,
        }


# --------------------------------------------------------------------------- CSV


def _fmt(value: float) -> str:
    return repr(float(value))


def recording_filename(seq: JointAngleSequence) -> str:
    return f"{seq.subject_id}_A{seq.activity.name}_T{seq.trial}_{seq.modality}.csv"


def write_csv(seq: JointAngleSequence, path) -> None:
    channels = seq.channels or tuple(f"ch{j + 1}" for j in range(seq.n_channels))
    times = seq.timestamps()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("time", *channels))
        for t, row in zip(times, seq.angles):
            writer.writerow((_fmt(t), *map(_fmt, row)))


def write_csv_dir(dataset: Dataset, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for seq in dataset.sequences:
        path = out / recording_filename(seq)
        write_csv(seq, path)
        paths.append(path)
    return paths


def _read_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise LoadError(f"{path.name}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0].lower() != "time":
        raise LoadError(f"{path.name}: header must start with 'time' followed by angle columns")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=np.float64)
    except ValueError as exc:
        raise LoadError(f"{path.name}: unparseable value ({exc})") from None
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != len(header):
        raise LoadError(f"{path.name}: rows do not match the {len(header)}-column header")
    if not np.isfinite(data).all():
        raise LoadError(f"{path.name}: non-finite values")
    return header[1:], data


def load_csv_dir(path, modality: str, activities: Optional[Sequence[str]] = None, channels: Optional[Sequence[str]] = None) -> Dataset:
    """Load every matching recording of ``modality`` under ``path``.

    ``activities`` lists the activity tokens in label order; when omitted the
    sorted set of tokens found is used.  ``channels`` selects and orders the
    angle columns; other columns are ignored with a warning.  Without it the
    first file defines the channel set and every file must match it.
    """
    if modality not in MODALITIES:
        raise ContractError(f"modality must be one of {MODALITIES}")
    root = Path(path)
    if not root.is_dir():
        raise LoadError(f"{root}: not a directory")
    files = []
    for p in sorted(root.iterdir()):
        if p.suffix.lower() != ".csv":
            continue
        m = FILE_PATTERN.match(p.name)
        if m is None:
            raise LoadError(f"{p.name}: file name does not match S<subject>_A<activity>_T<trial>_<modality>.csv")
        if m["modality"] == modality:
            files.append((p, m))
    if not files:
        log.warning("no %s recordings found in %s", modality, root)
        return Dataset([], (), modality, tuple(activities or ()))

    tokens = list(activities) if activities is not None else sorted({m["activity"] for _, m in files})
    if len(tokens) > N_ACTIVITIES:
        raise LoadError(f"found {len(tokens)} activity tokens, at most {N_ACTIVITIES} supported: {tokens}")
    index = {tok: i for i, tok in enumerate(tokens)}

    want = list(channels) if channels is not None else None
    sequences = []
    for p, m in files:
        if m["activity"] not in index:
            raise LoadError(f"{p.name}: unknown activity token {m['activity']!r}")
        names, data = _read_csv(p)
        if want is None:
            want = names
        if channels is None and set(names) != set(want):
            raise LoadError(f"{p.name}: channel set {names} differs from {want}")
        missing = [c for c in want if c not in names]
        if missing:
            raise LoadError(f"{p.name}: missing channels {missing}")
        extra = [c for c in names if c not in want]
        if extra:
            log.warning("%s: ignoring extra columns %s", p.name, extra)
        cols = [names.index(c) + 1 for c in want]
        times = data[:, 0]
        dt = np.diff(times)
        if len(times) < 2 or (dt <= 0).any():
            raise LoadError(f"{p.name}: time column must be strictly increasing with at least 2 samples")
        med = float(np.median(dt))
        rate = round(1.0 / med, 6)
        uniform = np.abs(dt - med).max() <= 1e-6 * max(med, 1.0) and abs(times[0]) <= 1e-9
        sequences.append(
            JointAngleSequence(
                subject_id=f"S{m['subject']}",
                modality=modality,
                activity=ActivityLabel(index[m["activity"]], m["activity"]),
                sample_rate_hz=rate,
                angles=data[:, cols],
                channels=tuple(want),
                trial=int(m["trial"]),
                times=None if uniform else times,
            )
        )
    subjects = tuple(sorted({s.subject_id for s in sequences}))
    return Dataset(sequences, subjects, modality, tuple(tokens))


# --------------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the built-in stand-in for a real joint-angle dataset.

    Channel ``j`` of activity ``a`` for subject ``s`` is
    ``amp[a, j] * sin(2 pi freq[a] t + phase[s, j]) + offset[s, j] + noise``.
    ``subject_variability`` scales the spread of per-subject phases and
    offsets; at 0 every subject moves identically.
    """

    n_subjects: int = 16
    n_activities: int = N_ACTIVITIES
    n_channels: int = 14
    trials: int = 1
    duration_s: float = 3.0
    frequencies: Optional[tuple] = None
    amplitudes: Optional[tuple] = None
    amplitude_range: tuple = (0.5, 3.0)
    offset_deg: float = 20.0
    subject_variability: float = 1.0
    imu_rate_hz: float = 50.0
    video_rate_hz: float = 30.0
    imu_sigma: float = 1.0
    video_sigma: float = 3.0
    video_jitter_prob: float = 0.1
    modality: str = "imu"
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1 or self.n_channels < 1 or self.trials < 1:
            raise ContractError("n_subjects, n_channels and trials must be positive")
        if not 1 <= self.n_activities <= N_ACTIVITIES:
            raise ContractError(f"n_activities must be in [1, {N_ACTIVITIES}]")
        if self.imu_sigma < 0 or self.video_sigma < 0:
            raise ContractError("noise sigma must be non-negative")
        if not 0.0 <= self.video_jitter_prob <= 1.0:
            raise ContractError("video_jitter_prob must be in [0, 1]")
        if self.modality not in MODALITIES:
            raise ContractError(f"modality must be one of {MODALITIES}")
        if self.duration_s <= 0:
            raise ContractError("duration_s must be positive")
        freqs = self.activity_frequencies()
        if (freqs <= 0).any() or len(set(freqs.tolist())) != len(freqs):
            raise ContractError("activity frequencies must be positive and distinct")
        if self.amplitudes is not None and np.shape(self.amplitudes) != (self.n_activities, self.n_channels):
            raise ContractError("amplitudes must be n_activities x n_channels")

    def activity_frequencies(self) -> np.ndarray:
        if self.frequencies is not None:
            f = np.asarray(self.frequencies, dtype=np.float64)
            if f.shape != (self.n_activities,):
                raise ContractError(f"need {self.n_activities} frequencies, got {f.shape}")
            return f
        # half a DFT bin apart in a 2 s window: separable, but not trivially so
        return 0.5 + 0.25 * np.arange(self.n_activities)

    @property
    def sigma(self) -> float:
        return self.imu_sigma if self.modality == "imu" else self.video_sigma

    @property
    def rate_hz(self) -> float:
        return self.imu_rate_hz if self.modality == "imu" else self.video_rate_hz


def synth_structure(cfg: SynthConfig):
    """The noise-free part shared by both modalities: ``(freq, amp, phase, offset)``."""
    rng = np.random.default_rng([cfg.seed, 0])
    freq = cfg.activity_frequencies()
    lo, hi = cfg.amplitude_range
    amp = rng.uniform(lo, hi, size=(cfg.n_activities, cfg.n_channels))
    if cfg.amplitudes is not None:
        amp = np.asarray(cfg.amplitudes, dtype=np.float64)
    v = cfg.subject_variability
    phase = rng.uniform(0.0, 2.0 * math.pi, size=(cfg.n_subjects, cfg.n_channels)) * v
    offset = rng.uniform(-cfg.offset_deg, cfg.offset_deg, size=(cfg.n_subjects, cfg.n_channels)) * v
    return freq, amp, phase, offset


def synth_clean_signal(cfg: SynthConfig, subject: int, activity: int, t: np.ndarray) -> np.ndarray:
    freq, amp, phase, offset = synth_structure(cfg)
    arg = 2.0 * math.pi * freq[activity] * t[:, None] + phase[subject][None, :]
    return amp[activity][None, :] * np.sin(arg) + offset[subject][None, :]


def subject_name(index: int) -> str:
    return f"S{index + 1:02d}"


def activity_token(index: int) -> str:
    return f"{index + 1:02d}"


def synth_generate(cfg: SynthConfig) -> Dataset:
    """Seeded synthetic dataset; identical output for identical ``cfg``.

    Video recordings are sampled at ``video_rate_hz`` and each frame is, with
    probability ``video_jitter_prob``, captured up to one frame period away
    from its nominal timestamp (the file still records the nominal time).
    """
    freq, amp, phase, offset = synth_structure(cfg)
    noise_rng = np.random.default_rng([cfg.seed, 1 + MODALITIES.index(cfg.modality)])
    rate = cfg.rate_hz
    n = int(np.floor(cfg.duration_s * rate + 1e-9)) + 1
    t_nominal = np.arange(n) / rate
    channels = tuple(f"angle{j + 1:02d}" for j in range(cfg.n_channels))
    sequences = []
    for s in range(cfg.n_subjects):
        for a in range(cfg.n_activities):
            for trial in range(1, cfg.trials + 1):
                t = t_nominal
                if cfg.modality == "video" and cfg.video_jitter_prob > 0:
                    jitter = noise_rng.uniform(-1.0, 1.0, size=n) / rate
                    jitter *= noise_rng.random(n) < cfg.video_jitter_prob
                    t = t_nominal + jitter
                arg = 2.0 * math.pi * freq[a] * t[:, None] + phase[s][None, :]
                clean = amp[a][None, :] * np.sin(arg) + offset[s][None, :]
                noisy = clean + noise_rng.normal(0.0, 1.0, size=clean.shape) * cfg.sigma
                sequences.append(
                    JointAngleSequence(
                        subject_id=subject_name(s),
                        modality=cfg.modality,
                        activity=ActivityLabel(a, activity_token(a)),
                        sample_rate_hz=rate,
                        angles=noisy,
                        channels=channels,
                        trial=trial,
                    )
                )
    subjects = tuple(subject_name(s) for s in range(cfg.n_subjects))
    return Dataset(sequences, subjects, cfg.modality, tuple(activity_token(a) for a in range(cfg.n_activities)))


# ------------------------------------------------------------------------- folds


@dataclass(frozen=True)
class Fold:
    index: int
    test: tuple
    val: tuple
    train: tuple


@dataclass(frozen=True)
class FoldPlan:
    k: int
    n_val: int
    seed: int
    folds: tuple = field(default=())

    @property
    def roster(self) -> tuple:
        return tuple(sorted(s for f in self.folds for s in f.test))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        folds = tuple(Fold(f["index"], tuple(f["test"]), tuple(f["val"]), tuple(f["train"])) for f in d["folds"])
        return cls(int(d["k"]), int(d["n_val"]), int(d["seed"]), folds)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FoldPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def make_folds(roster: Sequence[str], k: int = 4, n_val: int = 2, seed: int = 0) -> FoldPlan:
    """Subject-wise k-fold plan with ``n_val`` validation subjects per fold.

    Subjects are shuffled with ``seed`` and sliced into ``k`` contiguous test
    groups whose sizes differ by at most one; each fold then draws its
    validation subjects from the remaining ones.
    """
    subjects = sorted(set(roster))
    if len(subjects) != len(roster):
        raise ContractError("roster contains duplicate subjects")
    n = len(subjects)
    if k < 2 or k > n:
        raise ContractError(f"k must be in [2, {n}] for {n} subjects, got {k}")
    if n_val < 0 or n_val > n - math.ceil(n / k):
        raise ContractError(f"n_val={n_val} too large: at most {n - math.ceil(n / k)} subjects remain outside a test group")
    rng = np.random.default_rng(seed)
    perm = [subjects[i] for i in rng.permutation(n)]
    groups = np.array_split(np.arange(n), k)
    folds = []
    for i, idx in enumerate(groups):
        test = sorted(perm[j] for j in idx)
        rest = [s for s in perm if s not in test]
        picked = rng.choice(len(rest), size=n_val, replace=False) if n_val else []
        val = sorted(rest[j] for j in picked)
        train = sorted(s for s in rest if s not in val)
        folds.append(Fold(i, tuple(test), tuple(val), tuple(train)))
    return FoldPlan(k, n_val, seed, tuple(folds))
