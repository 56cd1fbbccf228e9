"""Diarization scoring: optimal speaker mapping, DER, JER and MSCE."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .timeline import Annotation, _sweep

__all__ = [
    "SpeakerMapping",
    "DerBreakdown",
    "JerBreakdown",
    "ScoringError",
    "overlap_matrix",
    "optimal_mapping",
    "der",
    "jer",
    "msce",
]


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class SpeakerMapping:
    pairs: dict[str, str]
    unmapped_reference: tuple[str, ...] = ()
    unmapped_system: tuple[str, ...] = ()
    total_overlap: float = 0.0


@dataclass(frozen=True)
class DerBreakdown:
    miss: float
    fa: float
    confusion: float
    total_speech: float

    @property
    def der(self) -> float:
        return (self.miss + self.fa + self.confusion) / self.total_speech

    def __add__(self, other: "DerBreakdown") -> "DerBreakdown":
        return DerBreakdown(
            self.miss + other.miss,
            self.fa + other.fa,
            self.confusion + other.confusion,
            self.total_speech + other.total_speech,
        )


@dataclass(frozen=True)
class JerBreakdown:
    per_speaker: dict[str, float] = field(default_factory=dict)

    @property
    def jer(self) -> float:
        return float(np.mean(list(self.per_speaker.values())))


def _intersection(a: Sequence[tuple[float, float]], b: Sequence[tuple[float, float]]) -> float:
    """Length of the intersection of two sorted, internally disjoint interval lists."""
    i = j = 0
    total = 0.0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if hi > lo:
            total += hi - lo
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return total


def overlap_matrix(reference: Annotation, system: Annotation):
    """Pairwise overlap seconds; rows/columns follow sorted speaker labels."""
    ref_spk = reference.speakers
    sys_spk = system.speakers
    ref_iv = {s: reference.speaker_intervals(s) for s in ref_spk}
    sys_iv = {s: system.speaker_intervals(s) for s in sys_spk}
    w = np.zeros((len(ref_spk), len(sys_spk)))
    for i, r in enumerate(ref_spk):
        for j, h in enumerate(sys_spk):
            w[i, j] = _intersection(ref_iv[r], sys_iv[h])
    return ref_spk, sys_spk, w


def optimal_mapping(reference: Annotation, system: Annotation) -> SpeakerMapping:
    """1:1 reference-to-system mapping with maximal total overlap.

    Pairs with zero overlap are left unmapped; they cannot reduce any error.
    """
    ref_spk, sys_spk, w = overlap_matrix(reference, system)
    pairs: dict[str, str] = {}
    total = 0.0
    if w.size:
        rows, cols = linear_sum_assignment(w, maximize=True)
        for i, j in zip(rows, cols):
            if w[i, j] > 0:
                pairs[ref_spk[i]] = sys_spk[j]
                total += w[i, j]
    mapped_sys = set(pairs.values())
    return SpeakerMapping(
        pairs=pairs,
        unmapped_reference=tuple(r for r in ref_spk if r not in pairs),
        unmapped_system=tuple(h for h in sys_spk if h not in mapped_sys),
        total_overlap=float(total),
    )


def _collar_zones(reference: Annotation, collar: float) -> list[tuple[float, float]]:
    zones = []
    for s in reference.segments:
        for b in (s.onset, s.offset):
            zones.append((max(0.0, b - collar), b + collar))
    zones.sort()
    merged: list[list[float]] = []
    for lo, hi in zones:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def der(
    reference: Annotation,
    system: Annotation,
    collar: float = 0.0,
    score_overlap: bool = True,
    mapping: SpeakerMapping | None = None,
) -> DerBreakdown:
    """Diarization error components in seconds.

    The speaker mapping is always computed on the full, uncollared overlaps;
    the collar then removes ``[b - collar, b + collar]`` around every reference
    boundary ``b`` from scoring. With ``score_overlap=False`` only instants with
    at most one reference speaker are scored.
    """
    if collar < 0:
        raise ValueError("collar must be >= 0")
    if mapping is None:
        mapping = optimal_mapping(reference, system)
    events = []
    for s in reference.segments:
        events.append((s.onset, 1, ("r", s.speaker)))
        events.append((s.offset, -1, ("r", s.speaker)))
    for s in system.segments:
        events.append((s.onset, 1, ("s", s.speaker)))
        events.append((s.offset, -1, ("s", s.speaker)))
    if collar > 0:
        for lo, hi in _collar_zones(reference, collar):
            events.append((lo, 1, ("c", None)))
            events.append((hi, -1, ("c", None)))

    miss = fa = conf = total = 0.0
    for t0, t1, active in _sweep(events):
        if ("c", None) in active:
            continue
        ref = [k[1] for k in active if k[0] == "r"]
        hyp = {k[1] for k in active if k[0] == "s"}
        n_ref, n_sys = len(ref), len(hyp)
        if not score_overlap and n_ref > 1:
            continue
        dt = t1 - t0
        correct = sum(1 for r in ref if mapping.pairs.get(r) in hyp)
        miss += max(0, n_ref - n_sys) * dt
        fa += max(0, n_sys - n_ref) * dt
        conf += (min(n_ref, n_sys) - correct) * dt
        total += n_ref * dt
    if total <= 0:
        raise ScoringError(f"{reference.recording_id}: no scored reference speech, DER undefined")
    return DerBreakdown(miss=miss, fa=fa, confusion=conf, total_speech=total)


def _union_length(a, b) -> float:
    la = sum(hi - lo for lo, hi in a)
    lb = sum(hi - lo for lo, hi in b)
    return la + lb - _intersection(a, b)


def jer(reference: Annotation, system: Annotation, mapping: SpeakerMapping | None = None) -> JerBreakdown:
    """Per-reference-speaker Jaccard error, collar-free."""
    ref_spk = reference.speakers
    if not ref_spk:
        raise ScoringError(f"{reference.recording_id}: reference has no speakers, JER undefined")
    if mapping is None:
        mapping = optimal_mapping(reference, system)
    per = {}
    for r in ref_spk:
        h = mapping.pairs.get(r)
        if h is None:
            per[r] = 1.0
            continue
        ref_iv = reference.speaker_intervals(r)
        sys_iv = system.speaker_intervals(h)
        inter = _intersection(ref_iv, sys_iv)
        union = _union_length(ref_iv, sys_iv)
        # (FA + miss) / union == (union - intersection) / union
        per[r] = (union - inter) / union
    return JerBreakdown(per)


def msce(reference_counts: Sequence[int], system_counts: Sequence[int]) -> float:
    """Mean absolute speaker-count error over recordings."""
    if len(reference_counts) != len(system_counts):
        raise ValueError(
            f"length mismatch: {len(reference_counts)} reference vs {len(system_counts)} system counts"
        )
    if not reference_counts:
        raise ValueError("need at least one recording")
    ref = np.asarray(reference_counts, dtype=float)
    sys_ = np.asarray(system_counts, dtype=float)
    return float(np.mean(np.abs(ref - sys_)))
