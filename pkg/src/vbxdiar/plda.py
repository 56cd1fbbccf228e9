"""Two-covariance PLDA back-end.

The model is diagonalized once: ``E`` whitens the within-speaker covariance
and diagonalizes the between-speaker one, so that transformed x-vectors have
within-class covariance ``I`` and between-class covariance ``diag(phi)``.
This file also holds readers/writers for the PLDA text model and for the
binary x-vector archive consumed by the clustering pipeline.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "PldaError",
    "PldaModel",
    "DiagTransform",
    "diagonalize",
    "transform",
    "llr_score",
    "llr_matrix",
    "load_plda",
    "save_plda",
    "read_xvector_archive",
    "write_xvector_archive",
    "read_segments",
    "write_segments",
]

PHI_FLOOR = 1e-10
PSD_TOL = 1e-8


class PldaError(ValueError):
    pass


@dataclass(frozen=True)
class PldaModel:
    mean: np.ndarray
    within_cov: np.ndarray
    between_cov: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float)
        sw = np.asarray(self.within_cov, dtype=float)
        sb = np.asarray(self.between_cov, dtype=float)
        d = m.shape[0]
        if m.ndim != 1 or sw.shape != (d, d) or sb.shape != (d, d):
            raise PldaError(f"inconsistent shapes: mean {m.shape}, Sw {sw.shape}, Sb {sb.shape}")
        if not np.allclose(sw, sw.T, atol=1e-10, rtol=1e-8):
            raise PldaError("within-speaker covariance is not symmetric")
        if not np.allclose(sb, sb.T, atol=1e-10, rtol=1e-8):
            raise PldaError("between-speaker covariance is not symmetric")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "within_cov", 0.5 * (sw + sw.T))
        object.__setattr__(self, "between_cov", 0.5 * (sb + sb.T))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class DiagTransform:
    """Mean ``m`` (D,), basis ``E`` (D, R) and between-speaker variances ``phi`` (R,)."""

    mean: np.ndarray
    basis: np.ndarray
    phi: np.ndarray

    @property
    def dim(self) -> int:
        return self.phi.shape[0]

    @classmethod
    def identity(cls, dim: int, phi=None) -> "DiagTransform":
        phi = np.ones(dim) if phi is None else np.asarray(phi, dtype=float)
        return cls(np.zeros(dim), np.eye(dim), phi)


def diagonalize(model: PldaModel, R: int | None = None) -> DiagTransform:
    """Solve ``Sb E = Sw E Phi`` and keep the ``R`` largest eigenpairs.

    Cholesky-whitens ``Sw`` then runs a symmetric eigendecomposition of the
    whitened ``Sb``. Columns of ``E`` are signed so that their largest-magnitude
    entry is positive.
    """
    D = model.dim
    if R is None:
        R = D
    if not 1 <= R <= D:
        raise PldaError(f"R must be in [1, {D}], got {R}")
    try:
        chol = np.linalg.cholesky(model.within_cov)
    except np.linalg.LinAlgError:
        raise PldaError("within-speaker covariance is not positive definite") from None
    sb_eig = np.linalg.eigvalsh(model.between_cov)
    if sb_eig.min() < -PSD_TOL * max(1.0, abs(sb_eig).max()):
        raise PldaError(f"between-speaker covariance is not PSD (min eigenvalue {sb_eig.min():.3g})")

    # W = chol^-1, so W Sw W^T = I
    W = np.linalg.solve(chol, np.eye(D))
    M = W @ model.between_cov @ W.T
    M = 0.5 * (M + M.T)
    evals, evecs = np.linalg.eigh(M)
    order = np.argsort(-evals, kind="stable")
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    n_pos = int(np.sum(evals > PHI_FLOOR))
    if R > n_pos:
        raise PldaError(
            f"requested R={R} but only {n_pos} generalized eigenvalue(s) exceed {PHI_FLOOR:g}"
        )
    E = W.T @ evecs[:, :R]
    idx = np.argmax(np.abs(E), axis=0)
    signs = np.sign(E[idx, np.arange(R)])
    signs[signs == 0] = 1.0
    E = E * signs
    return DiagTransform(mean=model.mean.copy(), basis=E, phi=evals[:R].copy())


def transform(xvectors, t: DiagTransform, length_norm: bool = False) -> np.ndarray:
    """Project x-vectors (T, D) into the diagonalized space, giving (T, R).

    With ``length_norm`` each raw x-vector is first scaled to norm ``sqrt(D)``.
    """
    X = np.atleast_2d(np.asarray(xvectors, dtype=float))
    if X.shape[1] != t.mean.shape[0]:
        raise PldaError(f"x-vector dimension {X.shape[1]} does not match model dimension {t.mean.shape[0]}")
    if length_norm:
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise PldaError("cannot length-normalize a zero x-vector")
        X = X * (np.sqrt(X.shape[1]) / norms)
    return (X - t.mean) @ t.basis


def _llr_coefficients(phi):
    phi = np.asarray(phi, dtype=float)
    denom = 2.0 * phi + 1.0
    const = 0.5 * np.sum(np.log((phi + 1.0) ** 2 / denom))
    cross = phi / denom
    quad = phi**2 / (denom * (phi + 1.0))
    return const, cross, quad


def llr_score(x1, x2, phi) -> float:
    """Same- versus different-speaker log-likelihood ratio for two vectors.

    Model: ``y ~ N(0, I)``, ``x | y ~ N(diag(sqrt(phi)) y, I)``.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    const, cross, quad = _llr_coefficients(phi)
    return float(const + np.sum(cross * x1 * x2) - 0.5 * np.sum(quad * (x1**2 + x2**2)))


def llr_matrix(X, phi) -> np.ndarray:
    """All pairwise ``llr_score`` values for the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    const, cross, quad = _llr_coefficients(phi)
    sq = (X**2) @ quad
    S = const + (X * cross) @ X.T - 0.5 * (sq[:, None] + sq[None, :])
    return 0.5 * (S + S.T)


def load_plda(path) -> PldaModel:
    """Read the text model: ``D``, the mean, D rows of Sw, then D rows of Sb."""
    tokens = Path(path).read_text().split()
    try:
        D = int(tokens[0])
        vals = np.array([float(v) for v in tokens[1:]])
    except (IndexError, ValueError):
        raise PldaError(f"{path}: malformed PLDA model file") from None
    if D < 1 or vals.size != D + 2 * D * D:
        raise PldaError(f"{path}: expected {D + 2 * D * D} numbers after D={D}, found {vals.size}")
    mean = vals[:D]
    sw = vals[D : D + D * D].reshape(D, D)
    sb = vals[D + D * D :].reshape(D, D)
    return PldaModel(mean, sw, sb)


def save_plda(model: PldaModel, path) -> None:
    def row(v):
        return " ".join(repr(float(x)) for x in v)

    lines = [str(model.dim), row(model.mean)]
    lines += [row(r) for r in model.within_cov]
    lines += [row(r) for r in model.between_cov]
    Path(path).write_text("\n".join(lines) + "\n")


_HEADER = struct.Struct("<II")


def read_xvector_archive(path) -> np.ndarray:
    """Binary archive: ``<u4 T, <u4 D`` header, then T*D little-endian float32."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise PldaError(f"{path}: truncated x-vector archive header")
    T, D = _HEADER.unpack_from(data)
    body = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    if body.size != T * D:
        raise PldaError(f"{path}: header says {T}x{D} values, found {body.size}")
    return body.reshape(T, D).astype(np.float64)


def write_xvector_archive(xvectors, path) -> None:
    X = np.asarray(xvectors, dtype="<f4")
    if X.ndim != 2:
        X = X.reshape(0, 0) if X.size == 0 else np.atleast_2d(X)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*X.shape))
        fh.write(np.ascontiguousarray(X).tobytes())


def read_segments(path) -> list[tuple[str, float, float]]:
    """Segments file lines ``<recording_id> <onset> <offset>``, in file order."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3:
            raise PldaError(f"{path}:{lineno}: expected '<recording_id> <onset> <offset>'")
        try:
            on, off = float(fields[1]), float(fields[2])
        except ValueError:
            raise PldaError(f"{path}:{lineno}: onset/offset are not numbers") from None
        if not off > on >= 0:
            raise PldaError(f"{path}:{lineno}: need 0 <= onset < offset")
        out.append((fields[0], on, off))
    return out


def write_segments(segments, path) -> None:
    from .timeline import format_time

    Path(path).write_text(
        "".join(f"{rec} {format_time(on)} {format_time(off)}\n" for rec, on, off in segments)
    )
