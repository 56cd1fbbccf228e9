"""Synthetic diarization training data.

Two generators share one utterance pool:

* simulated mixtures (SM): every speaker gets an independent channel of
  consecutive source segments separated by exponential pauses, and the
  channels are summed;
* simulated conversations (SC): all segments of one utterance per speaker are
  interleaved into a single turn sequence whose pauses and overlaps are drawn
  from histograms estimated on real conversations.

Randomness comes from ``numpy.random.Generator`` (PCG64) seeded with plain
integers, which reproduces bit-for-bit across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve

from .timeline import Annotation, Segment, format_time

__all__ = [
    "Histogram",
    "SimStats",
    "Utterance",
    "UtterancePool",
    "Placement",
    "SimTimeline",
    "PoolExhausted",
    "estimate_stats",
    "interleave",
    "simulate_conversation",
    "simulate_mixture",
    "render_audio",
    "noise_scale",
    "read_wav",
    "write_wav",
    "load_stats",
    "save_stats",
    "load_pool_manifest",
    "save_pool_manifest",
    "pool_from_annotations",
]

DEFAULT_BIN_WIDTH = 0.01


class PoolExhausted(RuntimeError):
    pass


@dataclass
class Histogram:
    """Counts of lengths in bins ``[k*w, (k+1)*w)``."""

    bin_width: float
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def add(self, length: float) -> None:
        k = int(np.floor(length / self.bin_width + 1e-9))
        if k >= self.counts.size:
            self.counts = np.concatenate([self.counts, np.zeros(k + 1 - self.counts.size, dtype=np.int64)])
        self.counts[k] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def sample(self, rng: np.random.Generator) -> float:
        """Pick a bin proportionally to its count, then a uniform point inside it."""
        if self.total == 0:
            raise ValueError("cannot sample from an empty histogram")
        k = rng.choice(self.counts.size, p=self.counts / self.total)
        return float((k + rng.random()) * self.bin_width)

    def cdf(self, x):
        """CDF of the piecewise-uniform density the sampler draws from."""
        x = np.asarray(x, dtype=float)
        edges = np.arange(self.counts.size + 1) * self.bin_width
        cum = np.concatenate([[0.0], np.cumsum(self.counts) / self.total])
        return np.interp(x, edges, cum)

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        a, b = np.trim_zeros(self.counts, "b"), np.trim_zeros(other.counts, "b")
        return self.bin_width == other.bin_width and np.array_equal(a, b)


@dataclass
class SimStats:
    """Turn-taking statistics of real conversations.

    ``ds`` counts different-speaker pauses, ``ov`` overlaps; the probability
    of a pause (rather than an overlap) at a speaker change is ``ds/(ds+ov)``.
    """

    hist_same: Histogram
    hist_diff: Histogram
    hist_overlap: Histogram

    @property
    def bin_width(self) -> float:
        return self.hist_same.bin_width

    @property
    def ds(self) -> int:
        return self.hist_diff.total

    @property
    def ov(self) -> int:
        return self.hist_overlap.total

    @property
    def p_pause(self) -> float:
        return self.ds / (self.ds + self.ov)


def estimate_stats(annotations: Sequence[Annotation], bin_width: float = DEFAULT_BIN_WIDTH) -> SimStats:
    """Classify consecutive segment pairs of every recording and histogram their gaps."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if not annotations:
        raise ValueError("need at least one annotation")
    stats = SimStats(Histogram(bin_width), Histogram(bin_width), Histogram(bin_width))
    n_pairs = 0
    for ann in annotations:
        segs = ann.segments
        for prev, nxt in zip(segs[:-1], segs[1:]):
            n_pairs += 1
            gap = nxt.onset - prev.offset
            if gap >= 0:
                if prev.speaker == nxt.speaker:
                    stats.hist_same.add(gap)
                else:
                    stats.hist_diff.add(gap)
            else:
                stats.hist_overlap.add(min(prev.offset, nxt.offset) - nxt.onset)
    if n_pairs == 0:
        raise ValueError("annotations contain no consecutive segment pairs")
    if stats.ds + stats.ov == 0:
        raise ValueError("no speaker changes observed; pause probability is undefined")
    return stats


def save_stats(stats: SimStats, path) -> None:
    lines = [f"bin_width {stats.bin_width!r}"]
    for name in ("hist_same", "hist_diff", "hist_overlap"):
        lines.append(name)
        counts = getattr(stats, name).counts
        lines += [f"{k} {int(c)}" for k, c in enumerate(counts) if c]
    lines += [f"ds {stats.ds}", f"ov {stats.ov}"]
    Path(path).write_text("\n".join(lines) + "\n")


def load_stats(path) -> SimStats:
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0][0] != "bin_width":
        raise ValueError(f"{path}: first line must be 'bin_width <seconds>'")
    width = float(lines[0][1])
    hists = {name: Histogram(width) for name in ("hist_same", "hist_diff", "hist_overlap")}
    declared = {}
    current = None
    for fields in lines[1:]:
        if len(fields) == 1 and fields[0] in hists:
            current = hists[fields[0]]
        elif fields[0] in ("ds", "ov"):
            declared[fields[0]] = int(fields[1])
        elif current is not None and len(fields) == 2:
            k, c = int(fields[0]), int(fields[1])
            if c < 0:
                raise ValueError(f"{path}: negative count")
            if k >= current.counts.size:
                current.counts = np.concatenate([current.counts, np.zeros(k + 1 - current.counts.size, dtype=np.int64)])
            current.counts[k] += c
        else:
            raise ValueError(f"{path}: unexpected line {' '.join(fields)!r}")
    stats = SimStats(hists["hist_same"], hists["hist_diff"], hists["hist_overlap"])
    if declared.get("ds", stats.ds) != stats.ds or declared.get("ov", stats.ov) != stats.ov:
        raise ValueError(f"{path}: ds/ov counts disagree with histogram totals")
    return stats


@dataclass(frozen=True)
class Utterance:
    """Speech segments (``(onset, offset)`` in seconds) of one speaker in one source file."""

    source: str
    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        segs = tuple((float(a), float(b)) for a, b in self.segments)
        for (a0, b0), (a1, b1) in zip(segs, segs[1:]):
            if not a1 >= b0:
                raise ValueError(f"{self.source}: utterance segments must be increasing and disjoint")
        for a, b in segs:
            if not b > a >= 0:
                raise ValueError(f"{self.source}: bad segment ({a}, {b})")
        object.__setattr__(self, "segments", segs)


@dataclass(frozen=True)
class UtterancePool:
    utterances: Mapping[str, tuple[Utterance, ...]]

    @property
    def speakers(self) -> list[str]:
        return sorted(self.utterances)

    def n_utterances(self) -> int:
        return sum(len(v) for v in self.utterances.values())


def pool_from_annotations(annotations: Sequence[Annotation], sources: Mapping[str, str]) -> UtterancePool:
    """One utterance per (recording, speaker); ``sources`` maps recording id to audio path."""
    pool: dict[str, list[Utterance]] = {}
    for ann in annotations:
        for spk in ann.speakers:
            pool.setdefault(spk, []).append(Utterance(sources[ann.recording_id], tuple(ann.speaker_intervals(spk))))
    return UtterancePool({k: tuple(v) for k, v in pool.items()})


def save_pool_manifest(pool: UtterancePool, path) -> None:
    """One utterance per line: ``<speaker> <wav> <on>:<off> [<on>:<off> ...]``."""
    lines = []
    for spk in pool.speakers:
        for utt in pool.utterances[spk]:
            segs = " ".join(f"{format_time(a)}:{format_time(b)}" for a, b in utt.segments)
            lines.append(f"{spk} {utt.source} {segs}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_pool_manifest(path) -> UtterancePool:
    pool: dict[str, list[Utterance]] = {}
    base = Path(path).parent
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) < 3:
            raise ValueError(f"{path}:{lineno}: expected '<speaker> <wav> <onset>:<offset> ...'")
        spk, wav = fields[0], fields[1]
        if not Path(wav).is_absolute():
            wav = str(base / wav)
        try:
            segs = tuple(tuple(float(v) for v in tok.split(":")) for tok in fields[2:])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed segment token") from None
        if any(len(s) != 2 for s in segs):
            raise ValueError(f"{path}:{lineno}: segments must be '<onset>:<offset>'")
        pool.setdefault(spk, []).append(Utterance(wav, segs))
    return UtterancePool({k: tuple(v) for k, v in pool.items()})


@dataclass(frozen=True)
class Placement:
    speaker: str
    source: str
    src_onset: float
    src_offset: float
    onset: float

    @property
    def duration(self) -> float:
        return self.src_offset - self.src_onset

    @property
    def offset(self) -> float:
        return self.onset + self.duration


@dataclass(frozen=True)
class SimTimeline:
    """Placed segments of one synthetic recording.

    ``gaps`` records every sampled gap as ``(kind, value)`` with kind one of
    ``"same"``, ``"diff"``, ``"overlap"`` (SC) or ``"pause"`` (SM), before any
    clamping.
    """

    recording_id: str
    placements: tuple[Placement, ...]
    gaps: tuple[tuple[str, float], ...] = ()

    @property
    def end(self) -> float:
        return max((p.offset for p in self.placements), default=0.0)

    @property
    def annotation(self) -> Annotation:
        return Annotation(
            self.recording_id,
            tuple(Segment(p.onset, p.duration, p.speaker) for p in self.placements),
        )


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def interleave(per_speaker_segment_lists: Mapping[str, Sequence], seed) -> list[tuple[str, object]]:
    """Shuffle speaker turns while keeping each speaker's own order.

    The multiset of speaker labels (one per segment) is permuted uniformly;
    each label position then takes the next unused segment of that speaker.
    """
    rng = _rng(seed)
    speakers = sorted(per_speaker_segment_lists)
    labels = [s for s in speakers for _ in per_speaker_segment_lists[s]]
    order = rng.permutation(len(labels))
    cursor = {s: 0 for s in speakers}
    out = []
    for i in order:
        s = labels[i]
        out.append((s, per_speaker_segment_lists[s][cursor[s]]))
        cursor[s] += 1
    return out


def _pick_speakers(pool: UtterancePool, n_spk: int, rng, used) -> list[str]:
    available = [s for s in pool.speakers if any((s, i) not in used for i in range(len(pool.utterances[s])))]
    if len(available) < n_spk:
        raise PoolExhausted(f"need {n_spk} speakers with unused utterances, {len(available)} left")
    idx = rng.choice(len(available), size=n_spk, replace=False)
    return [available[i] for i in idx]


def simulate_conversation(
    pool: UtterancePool,
    n_spk: int,
    stats: SimStats,
    seed,
    used: set | None = None,
    recording_id: str = "sc",
) -> SimTimeline:
    """Build one simulated conversation.

    ``used`` holds ``(speaker, utterance_index)`` pairs already consumed in the
    current generation pass and is updated in place. Gaps that would make a
    speaker overlap their own earlier speech are pushed later, and overlaps
    never exceed the preceding segment's duration.
    """
    if n_spk < 1:
        raise ValueError("n_spk must be >= 1")
    rng = _rng(seed)
    used = set() if used is None else used
    speakers = _pick_speakers(pool, n_spk, rng, used)
    lists = {}
    for spk in speakers:
        free = [i for i in range(len(pool.utterances[spk])) if (spk, i) not in used]
        k = free[rng.integers(len(free))]
        used.add((spk, k))
        utt = pool.utterances[spk][k]
        lists[spk] = [(utt.source, a, b) for a, b in utt.segments]

    turns = interleave(lists, rng)
    placements = []
    gaps = []
    last_end: dict[str, float] = {}
    pos = 0.0
    prev_spk = None
    prev_dur = 0.0
    for n, (spk, (src, a, b)) in enumerate(turns):
        dur = b - a
        if n == 0:
            start = 0.0
        else:
            if spk == prev_spk:
                gap = stats.hist_same.sample(rng)
                gaps.append(("same", gap))
            elif rng.random() < stats.p_pause:
                gap = stats.hist_diff.sample(rng)
                gaps.append(("diff", gap))
            else:
                gap = -stats.hist_overlap.sample(rng)
                gaps.append(("overlap", gap))
                gap = max(gap, -prev_dur)
            start = max(pos + gap, last_end.get(spk, 0.0))
        placements.append(Placement(spk, src, a, b, start))
        pos = start + dur
        last_end[spk] = pos
        prev_spk, prev_dur = spk, dur
    return SimTimeline(recording_id, tuple(placements), tuple(gaps))


def simulate_mixture(
    pool: UtterancePool,
    n_spk: int,
    beta: float,
    n_umin: int,
    n_umax: int,
    seed,
    recording_id: str = "sm",
) -> SimTimeline:
    """Build one simulated mixture from independent per-speaker channels.

    Each channel takes ``N_u ~ U{n_umin..n_umax}`` consecutive segments of a
    random utterance (all of them if the utterance is shorter) and precedes
    every segment with an exponential pause of mean ``beta``.
    """
    if n_spk < 1:
        raise ValueError("n_spk must be >= 1")
    if not 1 <= n_umin <= n_umax:
        raise ValueError("need 1 <= n_umin <= n_umax")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    rng = _rng(seed)
    speakers = _pick_speakers(pool, n_spk, rng, set())
    placements = []
    gaps = []
    for spk in speakers:
        utts = pool.utterances[spk]
        utt = utts[rng.integers(len(utts))]
        n_u = int(rng.integers(n_umin, n_umax + 1))
        n_u = min(n_u, len(utt.segments))
        first = int(rng.integers(len(utt.segments) - n_u + 1))
        pos = 0.0
        for a, b in utt.segments[first : first + n_u]:
            d = float(rng.exponential(beta)) if beta > 0 else 0.0
            gaps.append(("pause", d))
            pos += d
            placements.append(Placement(spk, utt.source, a, b, pos))
            pos += b - a
    placements.sort(key=lambda p: (p.onset, p.speaker))
    return SimTimeline(recording_id, tuple(placements), tuple(gaps))


def read_wav(path) -> tuple[int, np.ndarray]:
    """Read a mono 16-bit PCM WAV file."""
    rate, data = wavfile.read(path)
    if data.dtype != np.int16 or data.ndim != 1:
        raise ValueError(f"{path}: only mono 16-bit PCM WAV is supported")
    return int(rate), data


def write_wav(path, rate: int, samples) -> None:
    samples = np.asarray(samples)
    if samples.dtype != np.int16 or samples.ndim != 1:
        raise ValueError("only mono int16 samples can be written")
    wavfile.write(path, rate, samples)


def _seconds_to_samples(t: float, rate: int) -> int:
    return int(round(t * rate))


def render_audio(
    timeline: SimTimeline,
    sources: Mapping[str, tuple[int, np.ndarray]],
    sample_rate: int,
    noise: tuple[int, np.ndarray] | None = None,
    snr_db: float | None = None,
    rirs: Sequence[tuple[int, np.ndarray]] | None = None,
    rir_prob: float = 0.5,
    seed=0,
) -> np.ndarray:
    """Mix a timeline into a mono int16 waveform.

    Each speaker is reverberated with one randomly chosen RIR with probability
    ``rir_prob``; reverberation tails past the end of the timeline are cut.
    Noise is tiled to the output length and scaled so that the whole-buffer
    power ratio is ``snr_db``. The result saturates at the int16 range.
    """
    rng = _rng(seed)
    n_out = _seconds_to_samples(timeline.end, sample_rate)
    out = np.zeros(n_out)

    for rate, _ in list(sources.values()) + list(rirs or []) + ([noise] if noise is not None else []):
        if rate != sample_rate:
            raise ValueError(f"sample-rate mismatch: {rate} != {sample_rate}")

    speakers = sorted({p.speaker for p in timeline.placements})
    speaker_rir = {}
    for spk in speakers:
        u = rng.random()
        if rirs and u < rir_prob:
            speaker_rir[spk] = np.asarray(rirs[int(rng.integers(len(rirs)))][1], dtype=float)

    for p in timeline.placements:
        if p.source not in sources:
            raise KeyError(f"source audio {p.source!r} not available")
        data = sources[p.source][1]
        lo = _seconds_to_samples(p.src_onset, sample_rate)
        hi = _seconds_to_samples(p.src_offset, sample_rate)
        if hi > data.shape[0]:
            raise ValueError(f"{p.source}: segment ends at sample {hi}, file has {data.shape[0]}")
        seg = data[lo:hi].astype(float)
        rir = speaker_rir.get(p.speaker)
        if rir is not None:
            seg = fftconvolve(seg, rir)
        start = _seconds_to_samples(p.onset, sample_rate)
        stop = min(n_out, start + seg.size)
        if stop > start:
            out[start:stop] += seg[: stop - start]

    if snr_db is not None:
        if noise is None or np.asarray(noise[1]).size == 0:
            raise ValueError("snr_db given without a non-empty noise signal")
        n = np.resize(np.asarray(noise[1], dtype=float), n_out)
        e_noise = np.mean(n**2) if n_out else 0.0
        if n_out and e_noise == 0:
            raise ValueError("noise signal is all zeros")
        if n_out:
            e_signal = np.mean(out**2)
            out += noise_scale(e_signal, e_noise, snr_db) * n

    return np.clip(np.rint(out), -32768, 32767).astype(np.int16)


def noise_scale(e_signal: float, e_noise: float, snr_db: float) -> float:
    """Gain ``p`` such that ``e_signal / (p**2 e_noise)`` equals ``snr_db`` in dB."""
    return float(np.sqrt(e_signal / (e_noise * 10.0 ** (snr_db / 10.0))))
