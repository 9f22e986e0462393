"""Log mel-band energy features.

Audio is cut into Hamming-windowed frames of 20 ms with a 10 ms hop; each frame's power spectrum is pooled by a
triangular HTK mel filterbank and compressed with a natural logarithm.
"""

from dataclasses import dataclass

import librosa
import numpy
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal

from dcrnn_sed.common.exceptions import InputValidationError

FRAME_SECONDS = 0.020
HOP_SECONDS = 0.010
N_MELS = 40
FLOOR_EPSILON = 1e-10
MIN_SAMPLE_RATE = 8000


@dataclass
class AudioClip:
    """Mono audio: ``samples`` in ``[-1, 1]`` at ``sample_rate`` Hz."""

    samples: numpy.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = numpy.asarray(self.samples, dtype=numpy.float64)
        if self.samples.ndim != 1:
            raise InputValidationError(f"audio must be mono (1 dimension), got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise InputValidationError(f"`sample_rate` must be positive, got {self.sample_rate}")
        if not numpy.isfinite(self.samples).all():
            raise InputValidationError("audio samples must be finite")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class FeatureMatrix:
    """Log mel-band energies of one recording, one row per frame."""

    values: numpy.ndarray
    frame_hop_seconds: float = HOP_SECONDS
    frame_len_seconds: float = FRAME_SECONDS

    def __post_init__(self):
        self.values = numpy.asarray(self.values, dtype=numpy.float64)
        if self.values.ndim != 2:
            raise InputValidationError(f"features must be a (time, mel) matrix, got shape {self.values.shape}")
        if not numpy.isfinite(self.values).all():
            raise InputValidationError("features must be finite")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


def frame_lengths(sample_rate: int, frame_seconds: float = FRAME_SECONDS, hop_seconds: float = HOP_SECONDS):
    """Return the ``(frame_len, hop)`` in samples for ``sample_rate``."""
    return int(round(frame_seconds * sample_rate)), int(round(hop_seconds * sample_rate))


def frame_count(n_samples: int, frame_len: int, hop: int) -> int:
    return (n_samples - frame_len) // hop + 1


def frame_centers_in_samples(
    n_frames: int, sample_rate: int, frame_seconds: float = FRAME_SECONDS, hop_seconds: float = HOP_SECONDS
) -> numpy.ndarray:
    """Sample index of the center of each frame, ``k * hop + frame_len // 2``."""
    frame_len, hop = frame_lengths(sample_rate, frame_seconds, hop_seconds)
    return numpy.arange(n_frames) * hop + frame_len // 2


def frame_signal(clip: AudioClip, frame_seconds: float = FRAME_SECONDS, hop_seconds: float = HOP_SECONDS):
    """Cut ``clip`` into overlapping Hamming-windowed frames.

    :return: array of shape ``(n_frames, frame_len)`` with ``n_frames = floor((N - frame_len) / hop) + 1``.
    """
    frame_len, hop = frame_lengths(clip.sample_rate, frame_seconds, hop_seconds)
    if clip.samples.size < frame_len:
        raise InputValidationError(
            f"clip of {clip.samples.size} samples is shorter than one frame of {frame_len} samples"
        )
    window = signal.get_window("hamming", frame_len, fftbins=False)
    frames = sliding_window_view(clip.samples, frame_len)[::hop]
    return frames * window


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int = N_MELS) -> numpy.ndarray:
    """Triangular HTK mel filterbank with unit-peak triangles between 0 Hz and ``sample_rate / 2``.

    :return: matrix of shape ``(n_mels, n_fft // 2 + 1)``, rows ordered by ascending center frequency.
    """
    if n_mels < 1:
        raise InputValidationError(f"`n_mels` must be a positive integer, got {n_mels}")
    return librosa.filters.mel(
        sr=sample_rate,
        n_fft=n_fft,
        n_mels=n_mels,
        fmin=0.0,
        fmax=sample_rate / 2,
        htk=True,
        norm=None,
        dtype=numpy.float64,
    )


def mel_band_centers(sample_rate: int, n_mels: int = N_MELS) -> numpy.ndarray:
    """Center frequencies in Hz of the ``mel_filterbank`` triangles."""
    edges = librosa.mel_frequencies(n_mels=n_mels + 2, fmin=0.0, fmax=sample_rate / 2, htk=True)
    return edges[1:-1]


def fft_length(frame_len: int) -> int:
    """Smallest power of two not below ``frame_len``."""
    return 1 << (frame_len - 1).bit_length()


def logmel(
    clip: AudioClip,
    n_mels: int = N_MELS,
    floor_epsilon: float = FLOOR_EPSILON,
    frame_seconds: float = FRAME_SECONDS,
    hop_seconds: float = HOP_SECONDS,
) -> FeatureMatrix:
    """Compute the ``(n_frames, n_mels)`` log mel-band energies ``log(E + floor_epsilon)`` of ``clip``."""
    if clip.sample_rate < MIN_SAMPLE_RATE:
        raise InputValidationError(f"sample rate must be at least {MIN_SAMPLE_RATE} Hz, got {clip.sample_rate}")
    if n_mels < 1:
        raise InputValidationError(f"`n_mels` must be a positive integer, got {n_mels}")

    frames = frame_signal(clip, frame_seconds, hop_seconds)
    frame_len, hop = frame_lengths(clip.sample_rate, frame_seconds, hop_seconds)
    n_fft = fft_length(frame_len)
    power = numpy.abs(numpy.fft.rfft(frames, n=n_fft, axis=1)) ** 2
    energies = power @ mel_filterbank(clip.sample_rate, n_fft, n_mels).T
    return FeatureMatrix(
        numpy.log(energies + floor_epsilon),
        frame_hop_seconds=hop / clip.sample_rate,
        frame_len_seconds=frame_len / clip.sample_rate,
    )

