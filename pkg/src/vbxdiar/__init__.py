"""Speaker diarization with VBx, diarization scoring, and synthetic conversation generation."""

from .timeline import Annotation, Segment, dataset_stats, parse_rttm, write_rttm
from .metrics import der, jer, msce, optimal_mapping
from .plda import DiagTransform, PldaModel, diagonalize, llr_score, transform
from .ahc import ahc_cluster, pairwise_similarity
from .vbx import VbxParams, run_vbx
from .pipeline import PipelineConfig, assign_second_speaker, diarize_recording
from .simcon import estimate_stats, render_audio, simulate_conversation, simulate_mixture

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "Segment",
    "dataset_stats",
    "parse_rttm",
    "write_rttm",
    "der",
    "jer",
    "msce",
    "optimal_mapping",
    "DiagTransform",
    "PldaModel",
    "diagonalize",
    "llr_score",
    "transform",
    "ahc_cluster",
    "pairwise_similarity",
    "VbxParams",
    "run_vbx",
    "PipelineConfig",
    "assign_second_speaker",
    "diarize_recording",
    "estimate_stats",
    "render_audio",
    "simulate_conversation",
    "simulate_mixture",
]
