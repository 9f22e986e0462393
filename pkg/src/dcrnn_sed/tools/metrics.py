"""Frame-based and segment-based F1 score and error rate of multi-label event rolls.

Per frame ``k`` the false negatives and false positives over all classes give the substitutions
``S = min(FN, FP)``, deletions ``D = max(0, FN - FP)`` and insertions ``I = max(0, FP - FN)``; the tallies are then
summed over all frames, so F1 and ER are micro-averaged over frames and classes.
"""

from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy

from dcrnn_sed.common.exceptions import DataError, InputValidationError
from dcrnn_sed.parsers.annotations import Event
from dcrnn_sed.tools.features import FRAME_SECONDS, HOP_SECONDS

DEFAULT_THRESHOLD = 0.5
_TIME_TOLERANCE = 1e-9


@dataclass
class EventRoll:
    """Binary ``(time, class)`` activity matrix."""

    active: numpy.ndarray
    frame_hop_seconds: float = HOP_SECONDS

    def __post_init__(self):
        active = numpy.asarray(self.active)
        if active.ndim != 2:
            raise InputValidationError(f"an event roll must be a (time, class) matrix, got shape {active.shape}")
        if active.dtype != bool:
            if not numpy.isin(active, (0, 1)).all():
                raise InputValidationError("event roll entries must be 0 or 1")
            active = active.astype(bool)
        self.active = active

    @property
    def n_frames(self) -> int:
        return self.active.shape[0]

    @property
    def n_classes(self) -> int:
        return self.active.shape[1]


@dataclass
class MetricsReport:
    """Intermediate statistics of a comparison; the scores are derived from them."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    n_ref: int = 0

    @property
    def f1(self) -> float:
        denominator = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denominator if denominator else 0.0

    @property
    def er(self) -> Optional[float]:
        """Error rate ``(S + D + I) / N``; ``None`` when the reference has no active cell."""
        if self.n_ref == 0:
            return None
        return (self.substitutions + self.deletions + self.insertions) / self.n_ref

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    def __add__(self, other: "MetricsReport") -> "MetricsReport":
        return MetricsReport(*(a + b for a, b in zip(asdict(self).values(), asdict(other).values())))

    def as_dict(self) -> dict:
        """Tallies and scores, as written to the report files."""
        return {**asdict(self), "f1": self.f1, "er": self.er, "precision": self.precision, "recall": self.recall}


def _as_roll(value) -> EventRoll:
    return value if isinstance(value, EventRoll) else EventRoll(value)


def binarize(probabilities, threshold: float = DEFAULT_THRESHOLD, frame_hop_seconds: float = HOP_SECONDS):
    """Mark every cell with ``probability >= threshold`` as active."""
    return EventRoll(numpy.asarray(probabilities) >= threshold, frame_hop_seconds)


def frame_metrics(reference, estimate) -> MetricsReport:
    """Compare two rolls of identical shape frame by frame."""
    reference, estimate = _as_roll(reference), _as_roll(estimate)
    if reference.active.shape != estimate.active.shape:
        raise InputValidationError(
            f"reference roll has shape {reference.active.shape} but estimate has {estimate.active.shape}"
        )
    ref, est = reference.active, estimate.active
    fn_per_frame = (ref & ~est).sum(axis=1)
    fp_per_frame = (est & ~ref).sum(axis=1)
    return MetricsReport(
        tp=int((ref & est).sum()),
        fp=int(fp_per_frame.sum()),
        fn=int(fn_per_frame.sum()),
        substitutions=int(numpy.minimum(fn_per_frame, fp_per_frame).sum()),
        deletions=int(numpy.maximum(0, fn_per_frame - fp_per_frame).sum()),
        insertions=int(numpy.maximum(0, fp_per_frame - fn_per_frame).sum()),
        n_ref=int(ref.sum()),
    )


def pool_roll(roll, segment_frames: int) -> EventRoll:
    """Max-pool ``roll`` over consecutive windows of ``segment_frames`` frames; a short last window is kept."""
    roll = _as_roll(roll)
    if segment_frames < 1:
        raise InputValidationError(f"`segment_frames` must be a positive integer, got {segment_frames}")
    n_segments = -(-roll.n_frames // segment_frames)
    padded = numpy.zeros((n_segments * segment_frames, roll.n_classes), dtype=bool)
    padded[: roll.n_frames] = roll.active
    pooled = padded.reshape(n_segments, segment_frames, roll.n_classes).any(axis=1)
    return EventRoll(pooled, roll.frame_hop_seconds * segment_frames)


def segment_metrics(reference, estimate, segment_seconds: float = 1.0) -> MetricsReport:
    """``frame_metrics`` on rolls max-pooled over segments of ``segment_seconds``."""
    reference, estimate = _as_roll(reference), _as_roll(estimate)
    segment_frames = max(1, int(round(segment_seconds / reference.frame_hop_seconds)))
    return frame_metrics(pool_roll(reference, segment_frames), pool_roll(estimate, segment_frames))


def summed_metrics(pairs, segment_seconds: Optional[float] = None) -> MetricsReport:
    """Score every ``(reference, estimate)`` pair of a corpus on its own and add up the tallies.

    Frame-based without ``segment_seconds``; segments never span two recordings.
    """
    report = MetricsReport()
    for reference, estimate in pairs:
        if segment_seconds is None:
            report += frame_metrics(reference, estimate)
        else:
            report += segment_metrics(reference, estimate, segment_seconds)
    return report


def class_wise_metrics(reference, estimate, labels: Optional[Sequence[str]] = None) -> Dict:
    """One ``MetricsReport`` per class column, keyed by label (or column index without ``labels``)."""
    reference, estimate = _as_roll(reference), _as_roll(estimate)
    keys = list(labels) if labels is not None else list(range(reference.n_classes))
    if len(keys) != reference.n_classes:
        raise InputValidationError(f"{len(keys)} labels given for {reference.n_classes} classes")
    if reference.active.shape != estimate.active.shape:
        raise InputValidationError(
            f"reference roll has shape {reference.active.shape} but estimate has {estimate.active.shape}"
        )
    return {
        key: frame_metrics(reference.active[:, [index]], estimate.active[:, [index]])
        for index, key in enumerate(keys)
    }


def macro_f1(reports: Dict) -> float:
    """Unweighted mean of the per-class F1 scores."""
    if not reports:
        raise InputValidationError("no class-wise reports to average")
    return float(numpy.mean([report.f1 for report in reports.values()]))


def frame_centers(n_frames: int, frame_hop_seconds=HOP_SECONDS, frame_len_seconds=FRAME_SECONDS):
    return numpy.arange(n_frames) * frame_hop_seconds + frame_len_seconds / 2


def events_to_roll(
    events: Sequence[Event],
    labels: Sequence[str],
    n_frames: int,
    frame_hop_seconds: float = HOP_SECONDS,
    frame_len_seconds: float = FRAME_SECONDS,
) -> EventRoll:
    """Build the roll of ``events``: a frame is active when its center lies in ``[onset, offset)``."""
    index = {label: column for column, label in enumerate(labels)}
    centers = frame_centers(n_frames, frame_hop_seconds, frame_len_seconds)
    active = numpy.zeros((n_frames, len(labels)), dtype=bool)
    for event in events:
        if event.label not in index:
            raise DataError(f"event label `{event.label}` is not one of the classes {list(labels)}")
        inside = (centers >= event.onset - _TIME_TOLERANCE) & (centers < event.offset - _TIME_TOLERANCE)
        active[inside, index[event.label]] = True
    return EventRoll(active, frame_hop_seconds)


def roll_to_events(roll, labels: Sequence[str], frame_len_seconds: float = FRAME_SECONDS) -> List[Event]:
    """Convert every run of active frames into an event spanning half a hop around the run's frame centers.

    ``events_to_roll`` maps the returned events back onto the same roll.
    """
    roll = _as_roll(roll)
    if len(labels) != roll.n_classes:
        raise InputValidationError(f"{len(labels)} labels given for {roll.n_classes} classes")
    hop = roll.frame_hop_seconds
    centers = frame_centers(roll.n_frames, hop, frame_len_seconds)
    events = []
    for column, label in enumerate(labels):
        edges = numpy.diff(numpy.concatenate([[0], roll.active[:, column].astype(numpy.int8), [0]]))
        for start, stop in zip(numpy.flatnonzero(edges == 1), numpy.flatnonzero(edges == -1)):
            events.append(Event(float(centers[start] - hop / 2), float(centers[stop - 1] + hop / 2), label))
    return sorted(events)
