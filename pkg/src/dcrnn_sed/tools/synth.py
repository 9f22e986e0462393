"""Synthetic polyphonic sound-event scenes with exact annotations.

Each class is a parametric signal generator (tone, chirp, noise burst or amplitude-modulated tone) confined to
its own frequency band. Scenes mix randomly placed events over white background noise under a polyphony cap.
"""

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy
from scipy import signal

from dcrnn_sed.common.exceptions import InputValidationError
from dcrnn_sed.common.log import get_logger
from dcrnn_sed.parsers.annotations import Event
from dcrnn_sed.tools.features import AudioClip, frame_centers_in_samples

LOGGER = get_logger(__name__)

KINDS = ("tone", "chirp", "noise-burst", "am-tone")
PEAK_LEVEL = 0.9
FADE_SECONDS = 0.01
PLACEMENT_ATTEMPTS = 20


@dataclass(frozen=True)
class EventTemplate:
    """Generator of one event class."""

    label: str
    kind: str
    frequency_range: Tuple[float, float]
    duration_range: Tuple[float, float] = (0.5, 2.0)
    amplitude_range: Tuple[float, float] = (0.3, 1.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputValidationError(f"unknown generator kind `{self.kind}`, expected one of {KINDS}")
        low, high = self.duration_range
        if not 0 < low <= high:
            raise InputValidationError(f"`{self.label}`: duration range must be positive, got {self.duration_range}")
        low, high = self.frequency_range
        if not 0 < low < high:
            raise InputValidationError(f"`{self.label}`: invalid frequency range {self.frequency_range}")
        low, high = self.amplitude_range
        if not 0 < low <= high:
            raise InputValidationError(f"`{self.label}`: invalid amplitude range {self.amplitude_range}")

    def check_sample_rate(self, sample_rate: int) -> None:
        if self.frequency_range[1] >= sample_rate / 2:
            raise InputValidationError(
                f"`{self.label}`: frequency {self.frequency_range[1]} Hz is not below the Nyquist frequency "
                f"of {sample_rate} Hz audio"
            )


@dataclass(frozen=True)
class SceneRecipe:
    """Parameters of one synthetic scene."""

    duration_seconds: float = 10.0
    max_polyphony: int = 3
    events_per_minute: float = 36.0
    snr_db: float = 20.0
    seed: int = 0
    sample_rate: int = 16000

    def __post_init__(self):
        if self.max_polyphony < 1:
            raise InputValidationError(f"`max_polyphony` must be at least 1, got {self.max_polyphony}")
        if self.duration_seconds < 1:
            raise InputValidationError(f"`duration_seconds` must be at least 1, got {self.duration_seconds}")
        if self.events_per_minute < 0:
            raise InputValidationError(f"`events_per_minute` must be non-negative, got {self.events_per_minute}")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_seconds * self.sample_rate))


class PlacedEvent(NamedTuple):
    template: EventTemplate
    start: int
    n_samples: int
    seed: int


def default_templates(n_classes: int = 4, sample_rate: int = 16000) -> List[EventTemplate]:
    """Templates cycling through the generator kinds, each class in its own log-spaced frequency band."""
    if n_classes < 1:
        raise InputValidationError(f"`n_classes` must be a positive integer, got {n_classes}")
    edges = numpy.geomspace(200.0, 0.4 * sample_rate, n_classes + 1)
    templates = []
    for index in range(n_classes):
        kind = KINDS[index % len(KINDS)]
        label = kind if index < len(KINDS) else f"{kind}-{index // len(KINDS) + 1}"
        low, high = edges[index], edges[index + 1]
        margin = 0.1 * (high - low)
        templates.append(EventTemplate(label, kind, (float(low + margin), float(high - margin))))
    return templates


def event_envelope(n_samples: int, sample_rate: int) -> numpy.ndarray:
    """Unit envelope with sine fades at both ends; strictly positive on every sample."""
    n_fade = max(1, min(int(round(FADE_SECONDS * sample_rate)), n_samples // 4))
    envelope = numpy.ones(n_samples)
    ramp = numpy.sin((numpy.arange(n_fade) + 0.5) / n_fade * numpy.pi / 2)
    envelope[:n_fade] = ramp
    envelope[n_samples - n_fade :] = numpy.minimum(envelope[n_samples - n_fade :], ramp[::-1])
    return envelope


def render_event(template: EventTemplate, n_samples: int, sample_rate: int, seed: int):
    """Render one event of ``n_samples`` samples.

    :return: tuple of the signal and its envelope.
    """
    rng = numpy.random.default_rng(seed)
    time = numpy.arange(n_samples) / sample_rate
    low, high = template.frequency_range
    amplitude = rng.uniform(*template.amplitude_range)

    if template.kind == "tone":
        base = numpy.sin(2 * numpy.pi * rng.uniform(low, high) * time + rng.uniform(0, 2 * numpy.pi))
    elif template.kind == "chirp":
        f0, f1 = (low, high) if rng.random() < 0.5 else (high, low)
        base = signal.chirp(time, f0=f0, t1=max(time[-1], 1.0 / sample_rate), f1=f1, method="linear")
    elif template.kind == "noise-burst":
        sos = signal.butter(4, [low, high], btype="bandpass", fs=sample_rate, output="sos")
        base = signal.sosfilt(sos, rng.standard_normal(n_samples))
        peak = numpy.abs(base).max()
        base = base / peak if peak > 0 else base
    else:
        rate = rng.uniform(4.0, 12.0)
        modulation = (1.0 + 0.8 * numpy.sin(2 * numpy.pi * rate * time)) / 1.8
        base = modulation * numpy.sin(2 * numpy.pi * rng.uniform(low, high) * time)

    envelope = event_envelope(n_samples, sample_rate)
    return amplitude * envelope * base, envelope


def place_events(recipe: SceneRecipe, templates: Sequence[EventTemplate]):
    """Draw event classes, durations and onsets under the polyphony cap.

    A class never overlaps itself. An event that cannot be placed within a few attempts is dropped.

    :return: tuple of the placed events (sorted by onset) and the number of dropped events.
    """
    if not templates:
        raise InputValidationError("at least one event template is required")
    rng = numpy.random.default_rng(recipe.seed)
    total = recipe.n_samples
    n_target = int(round(recipe.events_per_minute * recipe.duration_seconds / 60.0))
    polyphony = numpy.zeros(total, dtype=int)
    busy = {template.label: numpy.zeros(total, dtype=bool) for template in templates}

    placed, skipped = [], 0
    for _ in range(n_target):
        template = templates[rng.integers(len(templates))]
        n_samples = min(int(round(rng.uniform(*template.duration_range) * recipe.sample_rate)), total)
        seed = int(rng.integers(2**31))
        for _ in range(PLACEMENT_ATTEMPTS):
            start = int(rng.integers(0, total - n_samples + 1))
            span = slice(start, start + n_samples)
            if polyphony[span].max() < recipe.max_polyphony and not busy[template.label][span].any():
                polyphony[span] += 1
                busy[template.label][span] = True
                placed.append(PlacedEvent(template, start, n_samples, seed))
                break
        else:
            skipped += 1

    if skipped:
        LOGGER.warning(
            f"placed {len(placed)} of {n_target} events; {skipped} did not fit under polyphony {recipe.max_polyphony}"
        )
    return sorted(placed, key=lambda event: (event.start, event.template.label)), skipped


def synthesize_scene(recipe: SceneRecipe, templates: Optional[Sequence[EventTemplate]] = None):
    """Mix randomly placed events over background noise and peak-normalise the result.

    :return: tuple of the ``AudioClip`` and its exact annotations.
    """
    templates = list(templates) if templates is not None else default_templates(sample_rate=recipe.sample_rate)
    for template in templates:
        template.check_sample_rate(recipe.sample_rate)

    placed, _ = place_events(recipe, templates)
    mix = numpy.zeros(recipe.n_samples)
    covered = numpy.zeros(recipe.n_samples, dtype=bool)
    for event in placed:
        rendered, _ = render_event(event.template, event.n_samples, recipe.sample_rate, event.seed)
        mix[event.start : event.start + event.n_samples] += rendered
        covered[event.start : event.start + event.n_samples] = True

    noise_rng = numpy.random.default_rng([recipe.seed, 1])
    reference_power = numpy.mean(mix[covered] ** 2) if covered.any() else 0.01
    noise_std = numpy.sqrt(reference_power / 10 ** (recipe.snr_db / 10))
    mix += noise_std * noise_rng.standard_normal(recipe.n_samples)
    peak = numpy.abs(mix).max()
    if peak > 0:
        mix *= PEAK_LEVEL / peak

    events = [
        Event(
            event.start / recipe.sample_rate,
            (event.start + event.n_samples) / recipe.sample_rate,
            event.template.label,
        )
        for event in placed
    ]
    return AudioClip(mix, recipe.sample_rate), sorted(events)


def envelope_roll(placed: Sequence[PlacedEvent], labels: Sequence[str], n_frames: int, sample_rate: int):
    """Activity of each class at the center sample of every frame, read off the rendered envelopes."""
    centers = frame_centers_in_samples(n_frames, sample_rate)
    active = numpy.zeros((n_frames, len(labels)), dtype=bool)
    for event in placed:
        envelope = numpy.zeros(max(int(centers[-1]) + 1, event.start + event.n_samples))
        envelope[event.start : event.start + event.n_samples] = event_envelope(event.n_samples, sample_rate)
        active[:, list(labels).index(event.template.label)] |= envelope[centers] > 0
    return active


def split_corpus(scenes: Sequence, fractions=(0.6, 0.2, 0.2), seed: int = 0):
    """Randomly split ``scenes`` into disjoint train, validation and test lists.

    The train and validation sizes are ``round(fraction * n)``; the test split takes the rest.
    """
    if len(fractions) != 3 or any(fraction < 0 for fraction in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise InputValidationError(f"`fractions` must be three non-negative numbers summing to 1, got {fractions}")
    scenes = list(scenes)
    n_train = int(round(fractions[0] * len(scenes)))
    n_val = min(int(round(fractions[1] * len(scenes))), len(scenes) - n_train)
    order = numpy.random.default_rng(seed).permutation(len(scenes))
    picked = [scenes[index] for index in order]
    return picked[:n_train], picked[n_train : n_train + n_val], picked[n_train + n_val :]


class Chunk(NamedTuple):
    features: numpy.ndarray
    roll: numpy.ndarray
    mask: numpy.ndarray


def chunk_sequences(features, roll, chunk_frames: int = 256) -> List[Chunk]:
    """Cut a recording into consecutive chunks of ``chunk_frames`` frames.

    The last chunk is zero padded; its ``mask`` is ``True`` on the valid frames only.
    """
    features, roll = numpy.asarray(features), numpy.asarray(roll)
    if chunk_frames < 1:
        raise InputValidationError(f"`chunk_frames` must be a positive integer, got {chunk_frames}")
    if features.shape[0] != roll.shape[0]:
        raise InputValidationError(f"features have {features.shape[0]} frames but the roll has {roll.shape[0]}")
    chunks = []
    for start in range(0, features.shape[0], chunk_frames):
        valid = min(chunk_frames, features.shape[0] - start)
        feature_chunk = numpy.zeros((chunk_frames, features.shape[1]), dtype=numpy.float64)
        roll_chunk = numpy.zeros((chunk_frames, roll.shape[1]), dtype=bool)
        mask = numpy.zeros(chunk_frames, dtype=bool)
        feature_chunk[:valid] = features[start : start + valid]
        roll_chunk[:valid] = roll[start : start + valid]
        mask[:valid] = True
        chunks.append(Chunk(feature_chunk, roll_chunk, mask))
    return chunks
