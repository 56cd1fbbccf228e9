"""Bayesian HMM clustering of x-vector sequences (VBx).

Each HMM state is a speaker with a Gaussian latent ``y_s ~ N(0, I)``; an
x-vector in the diagonalized PLDA space is ``x_t ~ N(V y_s, I)`` with
``V = diag(sqrt(phi))``. Mean-field VB alternates between the speaker
posteriors ``q(y_s)``, the state responsibilities (forward-backward) and the
speaker priors ``pi``; redundant speakers get ``pi_s -> 0`` and are dropped.

All HMM recursions run in the log domain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "VbxParams",
    "SpeakerPosterior",
    "VbxResult",
    "VbxError",
    "init_gamma",
    "update_qy",
    "expected_loglik",
    "log_output_probs",
    "forward_backward",
    "update_pi",
    "elbo",
    "run_vbx",
]

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


class VbxError(RuntimeError):
    pass


@dataclass(frozen=True)
class VbxParams:
    """Inference hyperparameters.

    The defaults (F_A=0.3, F_B=17, p_loop=0.99) are starting points in the
    tradition of released VBx recipes, not tuned values for any corpus.
    """

    F_A: float = 0.3
    F_B: float = 17.0
    p_loop: float = 0.99
    max_iters: int = 40
    elbo_tol: float = 1e-4
    init_smoothing: float = 0.0
    max_speakers: int = 50
    drop_threshold: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.p_loop < 1.0:
            raise ValueError(f"p_loop must be in (0, 1), got {self.p_loop}")
        if self.F_A <= 0 or self.F_B <= 0:
            raise ValueError("F_A and F_B must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 <= self.init_smoothing < 1.0:
            raise ValueError("init_smoothing must be in [0, 1)")
        if self.max_speakers < 1:
            raise ValueError("max_speakers must be >= 1")


@dataclass(frozen=True)
class SpeakerPosterior:
    """``q(y_s) = N(alpha, diag(lam))``."""

    alpha: np.ndarray
    lam: np.ndarray


@dataclass
class VbxResult:
    labels: np.ndarray
    gamma: np.ndarray
    pi: np.ndarray
    posteriors: list[SpeakerPosterior]
    elbo_trace: list[float] = field(default_factory=list)
    n_iters: int = 0
    kept: np.ndarray | None = None

    @property
    def active_speakers(self) -> int:
        return int(self.pi.shape[0])


def init_gamma(labels, S: int, smoothing: float = 0.0) -> np.ndarray:
    """One-hot responsibilities from hard labels, optionally smoothed."""
    if S < 1:
        raise ValueError("S must be >= 1")
    if not 0.0 <= smoothing < 1.0:
        raise ValueError("smoothing must be in [0, 1)")
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 0 or labels.max() >= S):
        raise ValueError(f"labels must lie in 0..{S - 1}")
    if S == 1:
        return np.ones((labels.size, 1))
    gamma = np.full((labels.size, S), smoothing / (S - 1))
    gamma[np.arange(labels.size), labels] = 1.0 - smoothing
    return gamma


def update_qy(gamma, rho, phi, F_A: float, F_B: float) -> list[SpeakerPosterior]:
    """Speaker latent posteriors given responsibilities.

    ``L_s = I + (F_A/F_B) N_s Phi`` is diagonal, so the inverse ``lam`` is
    elementwise and ``alpha_s = (F_A/F_B) lam_s * sum_t gamma_ts rho_t``.
    """
    gamma = np.asarray(gamma, dtype=float)
    rho = np.asarray(rho, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ratio = F_A / F_B
    counts = gamma.sum(axis=0)
    lam = 1.0 / (1.0 + ratio * counts[:, None] * phi[None, :])
    alpha = ratio * lam * (gamma.T @ rho)
    return [SpeakerPosterior(alpha[s], lam[s]) for s in range(gamma.shape[1])]


def expected_loglik(rho_t, xnorm_t: float, post: SpeakerPosterior, phi, F_A: float,
                    include_constants: bool = True) -> float:
    """``F_A * E_q(y_s)[ln N(x_t; V y_s, I)]`` for a single frame."""
    phi = np.asarray(phi, dtype=float)
    val = post.alpha @ np.asarray(rho_t, dtype=float) - 0.5 * phi @ (post.lam + post.alpha**2)
    if include_constants:
        val += -0.5 * phi.size * LOG_2PI - 0.5 * xnorm_t
    return float(F_A * val)


def log_output_probs(rho, xnorm, posteriors, phi, F_A: float, include_constants: bool = True) -> np.ndarray:
    """Vectorized ``expected_loglik`` over all frames and speakers, shape (T, S)."""
    phi = np.asarray(phi, dtype=float)
    alpha = np.stack([p.alpha for p in posteriors])
    lam = np.stack([p.lam for p in posteriors])
    lls = rho @ alpha.T - 0.5 * ((lam + alpha**2) @ phi)[None, :]
    if include_constants:
        lls = lls - 0.5 * phi.size * LOG_2PI - 0.5 * np.asarray(xnorm)[:, None]
    return F_A * lls


def _lse(v: np.ndarray) -> float:
    m = v.max()
    if not np.isfinite(m):
        return m
    return m + np.log(np.sum(np.exp(v - m)))


def forward_backward(log_out_prob, pi, p_loop: float):
    """Posterior state marginals of the speaker HMM.

    Transitions are ``p(s | s') = (1 - p_loop) pi_s + [s == s'] p_loop`` and
    the initial distribution is ``pi``.

    Returns
    -------
    gamma : (T, S) array
    log_px : float, total log forward probability
    log_alpha, log_beta : (T, S) arrays
    """
    lls = np.asarray(log_out_prob, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if lls.ndim != 2 or lls.shape[0] == 0 or lls.shape[1] == 0:
        raise ValueError(f"log_out_prob must be a non-empty (T, S) array, got shape {lls.shape}")
    T, S = lls.shape
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
    log_loop = np.log(p_loop)
    # leaving a state re-enters s with probability (1 - p_loop) * pi_s
    log_reenter = np.log1p(-p_loop) + log_pi
    log_a = np.empty((T, S))
    log_b = np.empty((T, S))
    log_a[0] = log_pi + lls[0]
    for t in range(1, T):
        prev = log_a[t - 1]
        log_a[t] = np.logaddexp(log_loop + prev, log_reenter + _lse(prev)) + lls[t]
    log_b[-1] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = lls[t + 1] + log_b[t + 1]
        log_b[t] = np.logaddexp(log_loop + nxt, _lse(log_reenter + nxt))
    log_px = float(logsumexp(log_a[-1]))
    gamma = np.exp(log_a + log_b - log_px)
    gamma /= gamma.sum(axis=1, keepdims=True)
    return gamma, log_px, log_a, log_b


def update_pi(gamma, log_alpha, log_beta, log_out_prob, log_px: float, pi, p_loop: float) -> np.ndarray:
    """One fixed-point step for the speaker priors.

    ``pi_s <- gamma_1s + (1 - p_loop) pi_s / p(X) * sum_{t>=2} sum_s' A(t-1, s') p(x_t|s) B(t, s)``,
    then normalized.
    """
    pi = np.asarray(pi, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape[0] > 1:
        log_prev = logsumexp(log_alpha[:-1], axis=1, keepdims=True)
        log_terms = log_prev + log_out_prob[1:] + log_beta[1:] - log_px
        reentry = np.exp(logsumexp(log_terms, axis=0))
    else:
        reentry = np.zeros_like(pi)
    new = gamma[0] + (1.0 - p_loop) * pi * reentry
    return new / new.sum()


def elbo(log_px: float, posteriors, F_B: float, R: int | None = None) -> float:
    """Lower bound right after the q(Z) update.

    ``log_px + sum_s F_B/2 (R + sum log lam - sum lam - alpha.alpha)``; the
    second term is ``-F_B * KL(q(Y) || p(Y))`` and never positive.
    """
    kl_term = 0.0
    for p in posteriors:
        r = p.lam.size if R is None else R
        kl_term += 0.5 * F_B * (r + np.sum(np.log(p.lam)) - np.sum(p.lam) - p.alpha @ p.alpha)
    return float(log_px + kl_term)


def run_vbx(xvectors_transformed, phi, init_labels, params: VbxParams | None = None) -> VbxResult:
    """Run VB inference from an initial hard clustering.

    Each iteration updates q(Y), q(Z) (recording the ELBO right after it),
    then pi; speakers whose pi falls below ``params.drop_threshold`` are
    removed before the next iteration.
    """
    params = params or VbxParams()
    X = np.atleast_2d(np.asarray(xvectors_transformed, dtype=float))
    phi = np.asarray(phi, dtype=float)
    T, R = X.shape
    if T < 1:
        raise ValueError("need at least one x-vector")
    if phi.shape != (R,):
        raise ValueError(f"phi has shape {phi.shape}, expected ({R},)")
    if np.any(phi <= 0):
        raise ValueError("phi must be positive")
    init_labels = np.asarray(init_labels, dtype=int)
    if init_labels.shape != (T,):
        raise ValueError("init_labels must have one entry per x-vector")
    S = int(init_labels.max()) + 1
    if S > params.max_speakers:
        raise ValueError(f"initialization has {S} clusters, more than max_speakers={params.max_speakers}")

    rho = X * np.sqrt(phi)
    xnorm = np.sum(X**2, axis=1)
    gamma = init_gamma(init_labels, S, params.init_smoothing)
    pi = np.full(S, 1.0 / S)
    kept = np.arange(S)
    trace: list[float] = []
    posteriors: list[SpeakerPosterior] = []

    it = 0
    for it in range(1, params.max_iters + 1):
        posteriors = update_qy(gamma, rho, phi, params.F_A, params.F_B)
        lls = log_output_probs(rho, xnorm, posteriors, phi, params.F_A)
        gamma, log_px, log_a, log_b = forward_backward(lls, pi, params.p_loop)
        pi = update_pi(gamma, log_a, log_b, lls, log_px, pi, params.p_loop)
        value = elbo(log_px, posteriors, params.F_B, R)
        if not (np.isfinite(value) and np.all(np.isfinite(gamma)) and np.all(np.isfinite(pi))):
            raise VbxError(f"non-finite values at iteration {it}")
        trace.append(value)
        logger.debug("iter %d: ELBO %.6f, %d speakers", it, value, pi.size)

        converged = len(trace) > 1 and abs(trace[-1] - trace[-2]) < params.elbo_tol
        keep = pi >= params.drop_threshold
        if not keep.all() and keep.any():
            pi = pi[keep] / pi[keep].sum()
            gamma = gamma[:, keep]
            gamma /= gamma.sum(axis=1, keepdims=True)
            posteriors = [p for p, k in zip(posteriors, keep) if k]
            kept = kept[keep]
        if converged:
            break

    labels = np.argmax(gamma, axis=1)
    return VbxResult(
        labels=labels,
        gamma=gamma,
        pi=pi,
        posteriors=posteriors,
        elbo_trace=trace,
        n_iters=it,
        kept=kept,
    )
