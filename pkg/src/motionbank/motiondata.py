"""Labeled motion data model, JSONL persistence, and the synthetic generator.

A synthetic "action class" is a deterministic per-coordinate pattern:
sinusoid with class-specific frequency, amplitude and phase, plus a
class-specific linear drift. A sample plays one class for the past segment
and another for the future, cross-faded over a short transition window, with
Gaussian noise on top. Classes are separable but share structure, so soft
retrieval over related classes has something to exploit.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


class MotionSequence:
    """Frames of equal dimension; stored as an (L, K) float64 array."""

    __slots__ = ("frames",)

    def __init__(self, frames):
        arr = np.asarray(frames, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(
                f"MotionSequence needs a nonempty (frames, dim) array, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError("MotionSequence contains non-finite values")
        self.frames = arr

    def __len__(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]

    def __eq__(self, other):
        return isinstance(other, MotionSequence) and np.array_equal(
            self.frames, other.frames
        )

    def __repr__(self):
        return f"MotionSequence(len={len(self)}, dim={self.dim})"


@dataclass(frozen=True)
class ActionLabel:
    index: int
    num_actions: int

    def __post_init__(self):
        if not 0 <= self.index < self.num_actions:
            raise ValidationError(
                f"action index {self.index} outside [0, {self.num_actions})"
            )


@dataclass
class LabeledSample:
    past: MotionSequence
    future: MotionSequence
    past_action: ActionLabel
    future_action: ActionLabel

    def __post_init__(self):
        if self.past.dim != self.future.dim:
            raise ValidationError(
                f"past dim {self.past.dim} != future dim {self.future.dim}"
            )
        if self.past_action.num_actions != self.future_action.num_actions:
            raise ValidationError("past/future labels disagree on class count")


@dataclass
class SyntheticSpec:
    classes: int = 4
    pose_dim: int = 16
    per_class: int = 100
    past_len: int = 10
    horizon: int = 25
    transition: int = 4
    noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("classes", "pose_dim", "per_class", "past_len", "horizon"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.transition < 0:
            raise ValidationError(f"transition must be >= 0, got {self.transition}")
        if self.noise < 0:
            raise ValidationError(f"noise must be >= 0, got {self.noise}")


def class_pattern(cls, times, pose_dim):
    """Noise-free pose trajectory of one class at the given frame indices."""
    t = np.asarray(times, dtype=np.float64)[:, None]
    d = np.arange(pose_dim)[None, :]
    amp = 1.0 + 0.15 * cls
    freq = 0.05 + 0.03 * cls
    phase = 2.0 * np.pi * d / pose_dim + cls * np.pi / 4.0
    drift = 0.005 * (cls + 1) * np.where((cls + d) % 2 == 0, 1.0, -1.0)
    return amp * np.sin(2.0 * np.pi * freq * t + phase) + drift * t


def generate_synthetic(spec):
    """Deterministic dataset: per future class c, per_class samples whose past
    class cycles through all classes, so every (past, future) pair occurs."""
    samples = []
    n, t_len = spec.past_len, spec.horizon
    for c in range(spec.classes):
        for i in range(spec.per_class):
            a_p = (c + i) % spec.classes
            rng = np.random.default_rng([spec.seed, c, i])
            past = class_pattern(a_p, np.arange(n), spec.pose_dim)
            fut_times = np.arange(n, n + t_len)
            future = class_pattern(c, fut_times, spec.pose_dim)
            if spec.transition > 0:
                w_len = min(spec.transition, t_len)
                old = class_pattern(a_p, fut_times[:w_len], spec.pose_dim)
                w = (np.arange(w_len, dtype=np.float64)[:, None] + 1.0) / (
                    spec.transition + 1.0
                )
                future[:w_len] = (1.0 - w) * old + w * future[:w_len]
            if spec.noise > 0:
                past = past + rng.normal(0.0, spec.noise, past.shape)
                future = future + rng.normal(0.0, spec.noise, future.shape)
            samples.append(
                LabeledSample(
                    past=MotionSequence(past),
                    future=MotionSequence(future),
                    past_action=ActionLabel(a_p, spec.classes),
                    future_action=ActionLabel(c, spec.classes),
                )
            )
    return samples


def save_dataset(samples, path):
    """One JSON object per line: past, future, past_action, future_action."""
    with open(path, "w") as fh:
        for s in samples:
            fh.write(
                json.dumps(
                    {
                        "past": s.past.frames.tolist(),
                        "future": s.future.frames.tolist(),
                        "past_action": s.past_action.index,
                        "future_action": s.future_action.index,
                    }
                )
            )
            fh.write("\n")


_REQUIRED_FIELDS = ("past", "future", "past_action", "future_action")


def load_dataset(path, num_actions=None):
    """Read JSONL samples. num_actions=None infers the class count from labels."""
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f"line {lineno}: invalid JSON: {e}") from e
            for f in _REQUIRED_FIELDS:
                if f not in obj:
                    raise ValidationError(f"line {lineno}: missing field {f!r}")
            records.append((lineno, obj))
    if not records:
        return []
    if num_actions is None:
        num_actions = 1 + max(
            max(int(o["past_action"]), int(o["future_action"])) for _, o in records
        )
    samples = []
    dim = None
    for lineno, obj in records:
        try:
            past = MotionSequence(obj["past"])
            future = MotionSequence(obj["future"])
            sample = LabeledSample(
                past=past,
                future=future,
                past_action=ActionLabel(int(obj["past_action"]), num_actions),
                future_action=ActionLabel(int(obj["future_action"]), num_actions),
            )
        except (ValidationError, TypeError, ValueError) as e:
            raise ValidationError(f"line {lineno}: {e}") from e
        if dim is None:
            dim = past.dim
        elif past.dim != dim:
            raise ValidationError(
                f"line {lineno}: pose dimension {past.dim} != {dim} seen earlier"
            )
        samples.append(sample)
    return samples


def downsample(seq, ratio):
    """Keep frames at indices 0, ratio, 2*ratio, ..."""
    if ratio < 1:
        raise ValidationError(f"downsample ratio must be >= 1, got {ratio}")
    return MotionSequence(seq.frames[::ratio])


def one_hot(label):
    v = np.zeros(label.num_actions)
    v[label.index] = 1.0
    return v
