"""Speaker segment annotations, RTTM I/O and interval measures.

Times are continuous seconds stored as floats. Every measure in this module
is computed exactly with a sweep over segment boundaries.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Segment",
    "Annotation",
    "RttmParseError",
    "SpeakerCountFunction",
    "speaker_count_function",
    "parse_rttm",
    "write_rttm",
    "dataset_stats",
    "format_time",
]


class RttmParseError(ValueError):
    """Raised for malformed RTTM input; ``lineno`` is 1-based."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True, order=True)
class Segment:
    onset: float
    duration: float
    speaker: str

    def __post_init__(self):
        if not np.isfinite(self.onset) or self.onset < 0:
            raise ValueError(f"segment onset must be >= 0, got {self.onset}")
        if not np.isfinite(self.duration) or self.duration <= 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration}")

    @property
    def offset(self) -> float:
        return self.onset + self.duration


def _sort_key(seg: Segment):
    return (seg.onset, seg.speaker, seg.duration)


def _merge_self_overlaps(segments: Iterable[Segment], recording_id: str) -> list[Segment]:
    by_speaker: dict[str, list[Segment]] = {}
    for seg in segments:
        by_speaker.setdefault(seg.speaker, []).append(seg)
    out = []
    n_merged = 0
    for spk, segs in by_speaker.items():
        segs.sort(key=_sort_key)
        cur_on, cur_off = segs[0].onset, segs[0].offset
        cur = segs[0]
        for seg in segs[1:]:
            if seg.onset < cur_off:
                n_merged += 1
                if seg.offset > cur_off:
                    cur_off = seg.offset
                    cur = None
            else:
                out.append(cur if cur is not None else Segment(cur_on, cur_off - cur_on, spk))
                cur_on, cur_off, cur = seg.onset, seg.offset, seg
        out.append(cur if cur is not None else Segment(cur_on, cur_off - cur_on, spk))
    if n_merged:
        warnings.warn(
            f"{recording_id}: merged {n_merged} overlapping same-speaker segment(s)",
            stacklevel=3,
        )
    out.sort(key=_sort_key)
    return out


@dataclass(frozen=True)
class Annotation:
    """Who speaks when in one recording.

    Segments are kept sorted by ``(onset, speaker)``. Overlapping segments of
    the same speaker are merged on construction (with a warning); abutting
    ones are kept apart so that RTTM round trips are exact.
    """

    recording_id: str
    segments: tuple[Segment, ...] = field(default=())

    def __post_init__(self):
        segs = list(self.segments)
        if segs:
            segs = _merge_self_overlaps(segs, self.recording_id)
        object.__setattr__(self, "segments", tuple(segs))

    @classmethod
    def from_intervals(cls, recording_id: str, intervals: Iterable[tuple[float, float, str]]):
        """Build from ``(onset, offset, speaker)`` triples."""
        return cls(recording_id, tuple(Segment(on, off - on, spk) for on, off, spk in intervals))

    @property
    def speakers(self) -> list[str]:
        return sorted({s.speaker for s in self.segments})

    @property
    def end(self) -> float:
        return max((s.offset for s in self.segments), default=0.0)

    def speaker_intervals(self, speaker: str) -> list[tuple[float, float]]:
        return [(s.onset, s.offset) for s in self.segments if s.speaker == speaker]

    def total_duration(self) -> float:
        """Summed speaker time (overlapped regions counted once per speaker)."""
        return float(sum(s.duration for s in self.segments))

    def with_segments(self, segments: Iterable[Segment]) -> "Annotation":
        return Annotation(self.recording_id, tuple(segments))

    def __len__(self):
        return len(self.segments)


@dataclass(frozen=True)
class SpeakerCountFunction:
    """Piecewise-constant active-speaker multiset over time.

    ``breakpoints[i] = (t_i, speakers_i)`` means ``speakers_i`` (a sorted tuple,
    repeated labels allowed) is active on ``[t_i, t_{i+1})``. The last piece
    is always empty.
    """

    breakpoints: tuple[tuple[float, tuple[str, ...]], ...]

    def pieces(self):
        """Yield ``(start, end, speakers)`` for every finite piece."""
        bps = self.breakpoints
        for (t0, spk), (t1, _) in zip(bps[:-1], bps[1:]):
            yield t0, t1, spk

    def measure(self, predicate) -> float:
        """Total length of pieces whose speaker count satisfies ``predicate``."""
        return float(sum(t1 - t0 for t0, t1, spk in self.pieces() if predicate(len(spk))))


def _sweep(events: Sequence[tuple[float, int, object]]):
    """Sweep over ``(time, +1/-1, key)`` events.

    Yields ``(start, end, active)`` with ``active`` a Counter valid on
    ``[start, end)``; zero-length pieces are skipped.
    """
    events = sorted(events, key=lambda e: e[0])
    active: Counter = Counter()
    i = 0
    n = len(events)
    while i < n:
        t = events[i][0]
        while i < n and events[i][0] == t:
            _, delta, key = events[i]
            active[key] += delta
            if active[key] == 0:
                del active[key]
            i += 1
        if i < n:
            yield t, events[i][0], active


def speaker_count_function(annotation: Annotation) -> SpeakerCountFunction:
    events = []
    for s in annotation.segments:
        events.append((s.onset, 1, s.speaker))
        events.append((s.offset, -1, s.speaker))
    bps: list[tuple[float, tuple[str, ...]]] = []
    end = None
    for t0, t1, active in _sweep(events):
        spk = tuple(sorted(active.elements()))
        if not bps or bps[-1][1] != spk:
            bps.append((t0, spk))
        end = t1
    if end is not None:
        bps.append((end, ()))
    return SpeakerCountFunction(tuple(bps))


def format_time(x: float) -> str:
    """Shortest positional representation with at least 3 decimals."""
    return np.format_float_positional(float(x), unique=True, trim="k", min_digits=3)


def parse_rttm(text: bytes | str) -> list[Annotation]:
    """Parse RTTM ``SPEAKER`` lines into one Annotation per recording.

    Recordings are returned sorted by id. Lines starting with ``#`` and blank
    lines are skipped.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    grouped: dict[str, list[Segment]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        if len(fields) < 9:
            raise RttmParseError(lineno, f"expected >= 9 fields, got {len(fields)}")
        if fields[0] != "SPEAKER":
            raise RttmParseError(lineno, f"expected type SPEAKER, got {fields[0]!r}")
        try:
            onset = float(fields[3])
            dur = float(fields[4])
        except ValueError:
            raise RttmParseError(lineno, "onset/duration are not numbers") from None
        if not (np.isfinite(onset) and np.isfinite(dur)):
            raise RttmParseError(lineno, "non-finite onset/duration")
        if dur < 0:
            raise RttmParseError(lineno, f"negative duration {dur}")
        if dur == 0:
            raise RttmParseError(lineno, "zero-duration segment")
        if onset < 0:
            raise RttmParseError(lineno, f"negative onset {onset}")
        grouped.setdefault(fields[1], []).append(Segment(onset, dur, fields[7]))
    return [Annotation(rec, tuple(segs)) for rec, segs in sorted(grouped.items())]


def write_rttm(annotations: Iterable[Annotation]) -> bytes:
    lines = []
    for ann in annotations:
        for s in ann.segments:
            lines.append(
                f"SPEAKER {ann.recording_id} 1 {format_time(s.onset)} "
                f"{format_time(s.duration)} <NA> <NA> {s.speaker} <NA> <NA>\n"
            )
    return "".join(lines).encode("utf-8")


def dataset_stats(annotation: Annotation, total_duration: float) -> dict[str, float]:
    """Percentages of silence, single-speaker speech and overlap.

    >>> ann = Annotation.from_intervals("r", [(0, 10, "A")])
    >>> dataset_stats(ann, 10.0)
    {'silence_pct': 0.0, 'single_speaker_pct': 100.0, 'overlap_pct': 0.0}
    """
    if total_duration <= 0:
        raise ValueError("total_duration must be positive")
    if annotation.end > total_duration + 1e-9:
        raise ValueError(
            f"{annotation.recording_id}: total_duration {total_duration} shorter than "
            f"annotation extent {annotation.end}"
        )
    scf = speaker_count_function(annotation)
    single = scf.measure(lambda n: n == 1)
    overlap = scf.measure(lambda n: n >= 2)
    single_pct = 100.0 * single / total_duration
    overlap_pct = 100.0 * overlap / total_duration
    return {
        "silence_pct": max(0.0, 100.0 - single_pct - overlap_pct),
        "single_speaker_pct": single_pct,
        "overlap_pct": overlap_pct,
    }
