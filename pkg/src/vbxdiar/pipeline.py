"""x-vectors -> AHC initialization -> VBx -> speaker segments."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .ahc import DEFAULT_AHC_THRESHOLD, ahc_cluster, pairwise_similarity
from .plda import DiagTransform, transform
from .timeline import Annotation, Segment, speaker_count_function
from .vbx import VbxParams, run_vbx

__all__ = [
    "PipelineConfig",
    "PipelineError",
    "load_config",
    "diarize_recording",
    "labels_to_annotation",
    "assign_second_speaker",
]


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    lda_dim: int | None = None
    length_norm: bool = False
    ahc_metric: str = "plda_llr"
    ahc_threshold: float = DEFAULT_AHC_THRESHOLD
    vbx: VbxParams = field(default_factory=VbxParams)
    merge_gap: float = 0.0
    overlap: bool = False


_VBX_KEYS = {
    "fa": "F_A",
    "fb": "F_B",
    "loop_p": "p_loop",
    "max_iters": "max_iters",
    "elbo_tol": "elbo_tol",
    "init_smoothing": "init_smoothing",
    "max_speakers": "max_speakers",
    "drop_threshold": "drop_threshold",
}


def _parse_bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Read a flat ``key=value`` config; ``overrides`` (same keys) win over the file.

    Keys: lda_dim, length_norm, ahc_metric, ahc_threshold, merge_gap, overlap,
    and the VBx keys fa, fb, loop_p, max_iters, elbo_tol, init_smoothing,
    max_speakers, drop_threshold.
    """
    raw: dict[str, str] = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            raw[k] = v
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = str(v)

    vbx_types = {f.name: f.type for f in fields(VbxParams)}
    vbx_kw = {}
    kw: dict = {}
    for k, v in raw.items():
        if k in _VBX_KEYS:
            name = _VBX_KEYS[k]
            vbx_kw[name] = int(v) if vbx_types[name] in (int, "int") else float(v)
        elif k == "lda_dim":
            kw[k] = int(v)
        elif k in ("length_norm", "overlap"):
            kw[k] = _parse_bool(v)
        elif k in ("ahc_threshold", "merge_gap"):
            kw[k] = float(v)
        elif k == "ahc_metric":
            if v not in ("plda_llr", "cosine"):
                raise ValueError(f"unknown ahc_metric {v!r}")
            kw[k] = v
        else:
            raise ValueError(f"unknown config key {k!r}")
    return PipelineConfig(vbx=VbxParams(**vbx_kw), **kw)


def labels_to_annotation(recording_id: str, segments, labels, merge_gap: float = 0.0) -> Annotation:
    """Spread per-x-vector labels over their time segments.

    Where consecutive windows overlap, the boundary is moved to the middle of
    the shared region so each instant belongs to one x-vector. Same-speaker
    pieces separated by at most ``merge_gap`` seconds are joined.
    """
    segs = np.asarray(segments, dtype=float).reshape(-1, 2)
    order = np.argsort(segs[:, 0], kind="stable")
    segs = segs[order]
    labels = [labels[i] for i in order]
    starts = segs[:, 0].copy()
    ends = segs[:, 1].copy()
    for i in range(len(segs) - 1):
        if ends[i] > segs[i + 1, 0]:
            mid = 0.5 * (segs[i + 1, 0] + segs[i, 1])
            ends[i] = mid
            starts[i + 1] = mid
    pieces: list[list] = []
    for on, off, lab in zip(starts, ends, labels):
        if off <= on:
            continue
        if pieces and pieces[-1][2] == lab and on - pieces[-1][1] <= merge_gap:
            pieces[-1][1] = max(pieces[-1][1], off)
        else:
            pieces.append([on, off, lab])
    return Annotation.from_intervals(recording_id, [(a, b, str(lab)) for a, b, lab in pieces])


def diarize_recording(
    recording_id: str,
    xvectors,
    segments,
    diag: DiagTransform,
    config: PipelineConfig | None = None,
    overlap_regions=None,
) -> Annotation:
    """Cluster one recording's x-vectors and return its speaker segments.

    ``segments`` holds one ``(onset, offset)`` per x-vector row. Output
    speaker labels are ``spk<k>`` with ``k`` the VBx speaker index.
    """
    config = config or PipelineConfig()
    X = np.atleast_2d(np.asarray(xvectors, dtype=float))
    segments = np.asarray(segments, dtype=float).reshape(-1, 2)
    if X.shape[0] != segments.shape[0]:
        raise PipelineError(f"{recording_id}: {X.shape[0]} x-vectors but {segments.shape[0]} segments")
    if X.shape[0] == 0:
        return Annotation(recording_id)
    try:
        Xt = transform(X, diag, length_norm=config.length_norm)
        phi = diag.phi
        sim = pairwise_similarity(Xt, config.ahc_metric, phi)
        ahc = ahc_cluster(sim, config.ahc_threshold, max_clusters=config.vbx.max_speakers)
        result = run_vbx(Xt, phi, ahc.labels, config.vbx)
    except (ValueError, RuntimeError) as exc:
        raise PipelineError(f"{recording_id}: {exc}") from exc
    labels = [f"spk{k}" for k in result.labels]
    ann = labels_to_annotation(recording_id, segments, labels, config.merge_gap)
    if config.overlap and overlap_regions:
        ann = assign_second_speaker(ann, overlap_regions)
    return ann


def _nearest_boundary_distance(annotation: Annotation, speaker: str, t: float) -> float:
    return min(min(abs(s.onset - t), abs(s.offset - t)) for s in annotation.segments if s.speaker == speaker)


def assign_second_speaker(diarization: Annotation, overlap_regions) -> Annotation:
    """Add a second speaker label inside detected overlap regions.

    Each region is cut where the diarization's speaker changes. On every
    piece carried by exactly one speaker, the second label goes to the other
    speaker whose nearest segment boundary is closest to the region's
    midpoint (ties: smaller label). Pieces of silence or existing overlap are
    left untouched.
    """
    speakers = diarization.speakers
    if len(speakers) < 2:
        return diarization
    scf = speaker_count_function(diarization)
    added = []
    for lo, hi in overlap_regions:
        lo, hi = float(lo), float(hi)
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        cuts = [lo, hi]
        cuts += [t for t, _ in scf.breakpoints if lo < t < hi]
        cuts = sorted(set(cuts))
        for a, b in zip(cuts[:-1], cuts[1:]):
            active = _active_at(scf, 0.5 * (a + b))
            if len(active) != 1:
                continue
            primary = active[0]
            best = min(
                (s for s in speakers if s != primary),
                key=lambda s: (_nearest_boundary_distance(diarization, s, mid), s),
            )
            added.append(Segment(a, b - a, best))
    if not added:
        return diarization
    return _merge_into(diarization, added)


def _active_at(scf, t: float) -> tuple[str, ...]:
    active: tuple[str, ...] = ()
    for start, spk in scf.breakpoints:
        if start > t:
            break
        active = spk
    return active


def _merge_into(annotation: Annotation, extra) -> Annotation:
    """Union of segments per speaker, with abutting/overlapping pieces joined."""
    by_spk: dict[str, list[tuple[float, float]]] = {}
    for s in list(annotation.segments) + list(extra):
        by_spk.setdefault(s.speaker, []).append((s.onset, s.offset))
    out = []
    for spk, ivs in by_spk.items():
        ivs.sort()
        cur = list(ivs[0])
        for a, b in ivs[1:]:
            if a <= cur[1]:
                cur[1] = max(cur[1], b)
            else:
                out.append((cur[0], cur[1], spk))
                cur = [a, b]
        out.append((cur[0], cur[1], spk))
    return Annotation.from_intervals(annotation.recording_id, out)


def with_vbx(config: PipelineConfig, **vbx_overrides) -> PipelineConfig:
    return replace(config, vbx=replace(config.vbx, **vbx_overrides))
