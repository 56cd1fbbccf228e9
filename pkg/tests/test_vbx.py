import itertools
import time

import numpy as np
import pytest

from helpers import frame_error, hmm_enumerate, sample_vbx_sequence
from vbxdiar.ahc import ahc_cluster, pairwise_similarity
from vbxdiar.vbx import (
    SpeakerPosterior,
    VbxError,
    VbxParams,
    elbo,
    expected_loglik,
    forward_backward,
    init_gamma,
    log_output_probs,
    run_vbx,
    update_pi,
    update_qy,
)

LOG_2PI = np.log(2 * np.pi)


# ---------------------------------------------------------------- init_gamma


def test_init_gamma():
    np.testing.assert_array_equal(init_gamma([0, 1], 2), [[1, 0], [0, 1]])
    np.testing.assert_array_equal(init_gamma([0, 0, 0], 1), np.ones((3, 1)))
    g = init_gamma([2, 0, 1], 3, smoothing=0.3)
    np.testing.assert_allclose(g[0], [0.15, 0.15, 0.7])
    rng = np.random.default_rng(0)
    for _ in range(20):
        S = int(rng.integers(1, 6))
        g = init_gamma(rng.integers(0, S, 30), S, float(rng.uniform(0, 0.99)))
        np.testing.assert_allclose(g.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        init_gamma([0], 0)
    with pytest.raises(ValueError):
        init_gamma([3], 2)


# ---------------------------------------------------------------- update_qy


def test_update_qy_hand_case_and_prior():
    (p,) = update_qy(np.ones((1, 1)), np.array([[2.0]]), np.array([1.0]), 1.0, 1.0)
    assert p.lam[0] == pytest.approx(0.5)
    assert p.alpha[0] == pytest.approx(1.0)
    gamma = np.array([[1.0, 0.0], [1.0, 0.0]])
    posts = update_qy(gamma, np.ones((2, 3)), np.ones(3), 0.3, 17)
    np.testing.assert_array_equal(posts[1].alpha, 0.0)
    np.testing.assert_array_equal(posts[1].lam, 1.0)


def dense_qy(gamma, rho, phi, F_A, F_B):
    out = []
    for s in range(gamma.shape[1]):
        L = np.eye(phi.size) + (F_A / F_B) * gamma[:, s].sum() * np.diag(phi)
        Linv = np.linalg.inv(L)
        alpha = (F_A / F_B) * Linv @ (gamma[:, s] @ rho)
        out.append((alpha, np.diag(Linv)))
    return out


def test_update_qy_matches_dense_inverse():
    rng = np.random.default_rng(1)
    for _ in range(100):
        T, S, R = (int(rng.integers(1, n)) for n in (30, 6, 9))
        gamma = rng.dirichlet(np.ones(S), size=T)
        rho = rng.standard_normal((T, R)) * 3
        phi = rng.uniform(0.1, 50, R)
        F_A, F_B = rng.uniform(0.1, 2), rng.uniform(0.5, 20)
        for post, (alpha, lam) in zip(update_qy(gamma, rho, phi, F_A, F_B), dense_qy(gamma, rho, phi, F_A, F_B)):
            assert np.max(np.abs(post.alpha - alpha)) < 1e-10
            assert np.max(np.abs(post.lam - lam)) < 1e-10
            assert np.all((post.lam > 0) & (post.lam <= 1))


# ---------------------------------------------------------------- expected_loglik


def test_expected_loglik_arithmetic():
    post = SpeakerPosterior(np.zeros(1), np.ones(1))
    assert expected_loglik(np.zeros(1), 0.0, post, np.ones(1), 0.4, include_constants=False) == pytest.approx(-0.2)
    rng = np.random.default_rng(2)
    R = 4
    post = SpeakerPosterior(rng.standard_normal(R), rng.uniform(0.1, 1, R))
    phi = rng.uniform(1, 5, R)
    x = rng.standard_normal(R)
    on = expected_loglik(np.sqrt(phi) * x, x @ x, post, phi, 0.7)
    off = expected_loglik(np.sqrt(phi) * x, x @ x, post, phi, 0.7, include_constants=False)
    assert on - off == pytest.approx(0.7 * (-R / 2 * LOG_2PI - 0.5 * x @ x), abs=1e-12)


def test_expected_loglik_monte_carlo():
    rng = np.random.default_rng(3)
    R, F_A = 3, 0.6
    phi = rng.uniform(0.5, 4, R)
    post = SpeakerPosterior(rng.standard_normal(R), rng.uniform(0.05, 1, R))
    x = rng.standard_normal(R) * 2
    y = post.alpha + np.sqrt(post.lam) * rng.standard_normal((1_000_000, R))
    resid = x - np.sqrt(phi) * y
    samples = F_A * (-0.5 * R * LOG_2PI - 0.5 * np.sum(resid**2, axis=1))
    est, se = samples.mean(), samples.std() / np.sqrt(samples.size)
    got = expected_loglik(np.sqrt(phi) * x, x @ x, post, phi, F_A)
    assert abs(got - est) < 3 * se


def test_log_output_probs_vectorizes_expected_loglik():
    rng = np.random.default_rng(4)
    T, S, R = 7, 3, 4
    phi = rng.uniform(1, 3, R)
    X = rng.standard_normal((T, R))
    rho, xnorm = X * np.sqrt(phi), np.sum(X**2, axis=1)
    posts = [SpeakerPosterior(rng.standard_normal(R), rng.uniform(0.1, 1, R)) for _ in range(S)]
    lls = log_output_probs(rho, xnorm, posts, phi, 0.3)
    for t, s in itertools.product(range(T), range(S)):
        assert lls[t, s] == pytest.approx(expected_loglik(rho[t], xnorm[t], posts[s], phi, 0.3), abs=1e-12)


# ---------------------------------------------------------------- forward_backward


def test_forward_backward_trivial_cases():
    lls = np.array([[-1.0, -2.0, -0.5]])
    pi = np.array([0.2, 0.3, 0.5])
    gamma, log_px, _, _ = forward_backward(lls, pi, 0.9)
    w = pi * np.exp(lls[0])
    np.testing.assert_allclose(gamma[0], w / w.sum())
    assert log_px == pytest.approx(np.log(w.sum()))

    lls = np.array([[-1.0], [-2.5], [-0.3]])
    gamma, log_px, _, _ = forward_backward(lls, np.ones(1), 0.9)
    np.testing.assert_array_equal(gamma, 1.0)
    assert log_px == pytest.approx(lls.sum())
    with pytest.raises(ValueError):
        forward_backward(np.zeros((0, 2)), np.ones(2) / 2, 0.9)


def test_forward_backward_matches_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(100):
        T, S = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        lls = rng.normal(-3, 2, (T, S))
        pi = rng.dirichlet(np.ones(S))
        p_loop = float(rng.uniform(0.05, 0.99))
        gamma, log_px, _, _ = forward_backward(lls, pi, p_loop)
        g_ref, lp_ref, _ = hmm_enumerate(lls, pi, p_loop)
        assert np.max(np.abs(gamma - g_ref)) < 1e-9
        assert abs(log_px - lp_ref) < 1e-9
        np.testing.assert_allclose(gamma.sum(axis=1), 1.0, atol=1e-9)


def test_forward_backward_log_domain_long_sequence():
    rng = np.random.default_rng(6)
    lls = rng.normal(-500, 50, (20000, 4))
    gamma, log_px, _, _ = forward_backward(lls, np.full(4, 0.25), 0.99)
    assert np.isfinite(log_px)
    np.testing.assert_allclose(gamma.sum(axis=1), 1.0, atol=1e-9)


# ---------------------------------------------------------------- update_pi


def test_update_pi_trivial_cases():
    lls = np.array([[-1.0], [-2.0]])
    g, lp, la, lb = forward_backward(lls, np.ones(1), 0.9)
    np.testing.assert_array_equal(update_pi(g, la, lb, lls, lp, np.ones(1), 0.9), [1.0])
    lls = np.tile(np.array([[-1.0, -1.0]]), (5, 1))
    pi = np.array([0.5, 0.5])
    g, lp, la, lb = forward_backward(lls, pi, 0.9)
    np.testing.assert_allclose(update_pi(g, la, lb, lls, lp, pi, 0.9), [0.5, 0.5])


def test_update_pi_matches_enumerated_reentry_mass():
    rng = np.random.default_rng(7)
    for _ in range(100):
        T, S = int(rng.integers(1, 6)), int(rng.integers(1, 3))
        lls = rng.normal(-2, 1.5, (T, S))
        pi = rng.dirichlet(np.ones(S))
        p_loop = float(rng.uniform(0.1, 0.99))
        g, lp, la, lb = forward_backward(lls, pi, p_loop)
        got = update_pi(g, la, lb, lls, lp, pi, p_loop)
        g_ref, _, reentry = hmm_enumerate(lls, pi, p_loop)
        want = g_ref[0] + reentry
        assert np.max(np.abs(got - want / want.sum())) < 1e-9
        assert got.sum() == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- elbo


def test_elbo_at_prior_equals_log_px():
    posts = [SpeakerPosterior(np.zeros(4), np.ones(4)) for _ in range(3)]
    assert elbo(-123.456, posts, 17.0) == -123.456


def test_kl_term_never_positive():
    rng = np.random.default_rng(8)
    for _ in range(100):
        R = int(rng.integers(1, 6))
        posts = [SpeakerPosterior(rng.standard_normal(R), rng.uniform(1e-3, 1, R))]
        assert elbo(0.0, posts, float(rng.uniform(0.1, 20))) <= 0.0


def _gauss_kl_to_standard(alpha, lam):
    """KL(N(alpha, diag lam) || N(0, I)) from the dense general formula."""
    C = np.diag(lam)
    return 0.5 * (np.trace(C) + alpha @ alpha - alpha.size - np.log(np.linalg.det(C)))


def _expected_log_gauss(x, phi, alpha, lam):
    """E_{y ~ N(alpha, diag lam)} ln N(x; V y, I) via the Gaussian-integral identity."""
    V = np.diag(np.sqrt(phi))
    r = x - V @ alpha
    return -0.5 * x.size * LOG_2PI - 0.5 * (r @ r + np.trace(V @ np.diag(lam) @ V.T))


@pytest.mark.parametrize("S", [1, 2])
def test_elbo_matches_enumeration_oracle(S):
    rng = np.random.default_rng(9 + S)
    for _ in range(20):
        T, R = 2, 3
        F_A, F_B, p_loop = rng.uniform(0.2, 1.5), rng.uniform(0.5, 5), rng.uniform(0.2, 0.95)
        phi = rng.uniform(0.5, 5, R)
        X = rng.standard_normal((T, R)) * 2
        pi = rng.dirichlet(np.ones(S))
        gamma0 = rng.dirichlet(np.ones(S), size=T)
        posts = update_qy(gamma0, X * np.sqrt(phi), phi, F_A, F_B)
        lls = log_output_probs(X * np.sqrt(phi), np.sum(X**2, axis=1), posts, phi, F_A)
        _, log_px, _, _ = forward_backward(lls, pi, p_loop)
        got = elbo(log_px, posts, F_B, R)

        # enumerate Z, build the optimal q(Z) and evaluate E_q[ln p(X,Y,Z) - ln q(Y,Z)] term by term
        tr = (1 - p_loop) * np.tile(pi, (S, 1)) + p_loop * np.eye(S)
        paths = list(itertools.product(range(S), repeat=T))
        log_prior = np.array([np.log(pi[z[0]]) + sum(np.log(tr[z[t - 1], z[t]]) for t in range(1, T)) for z in paths])
        expected_lik = np.array(
            [sum(F_A * _expected_log_gauss(X[t], phi, posts[z[t]].alpha, posts[z[t]].lam) for t in range(T)) for z in paths]
        )
        log_q = log_prior + expected_lik
        log_q -= np.logaddexp.reduce(log_q)
        qz = np.exp(log_q)
        kl_y = sum(_gauss_kl_to_standard(p.alpha, p.lam) for p in posts)
        want = qz @ (expected_lik + log_prior - log_q) - F_B * kl_y
        assert abs(got - want) < 1e-8


# ---------------------------------------------------------------- run_vbx


def _ahc_init(X, phi, threshold=16.0):
    return ahc_cluster(pairwise_similarity(X, "plda_llr", phi), threshold, max_clusters=20).labels


def test_params_validation():
    for bad in ({"p_loop": 1.0}, {"F_A": 0.0}, {"max_iters": 0}, {"init_smoothing": 1.0}):
        with pytest.raises(ValueError):
            VbxParams(**bad)


def test_run_vbx_input_errors():
    X = np.zeros((3, 2))
    with pytest.raises(ValueError):
        run_vbx(X, np.ones(3), [0, 0, 0])
    with pytest.raises(ValueError):
        run_vbx(X, np.ones(2), [0, 1])
    with pytest.raises(ValueError):
        run_vbx(X, np.ones(2), [0, 1, 2], VbxParams(max_speakers=2))
    with pytest.raises(VbxError):
        run_vbx(np.array([[np.nan, 0.0]]), np.ones(2), [0])


def test_single_speaker_recovery():
    rng = np.random.default_rng(10)
    phi = np.full(10, 100.0)
    for seed in range(10):
        X, _ = sample_vbx_sequence(np.random.default_rng(seed), 1, 300, phi)
        k = 5 if seed % 2 else 10
        res = run_vbx(X, phi, rng.integers(0, k, 300))
        assert res.pi.max() >= 0.99


def test_three_speaker_recovery():
    phi = np.full(10, 100.0)
    for seed in range(10):
        X, z = sample_vbx_sequence(np.random.default_rng(100 + seed), 3, 300, phi)
        res = run_vbx(X, phi, _ahc_init(X, phi))
        assert frame_error(res.labels, z) < 0.05


def test_elbo_trace_non_decreasing():
    params = VbxParams(F_A=1.0, F_B=1.0, p_loop=0.9, max_iters=30, elbo_tol=1e-9)
    for seed in range(50):
        rng = np.random.default_rng(seed)
        phi = rng.uniform(1, 20, 5)
        X, _ = sample_vbx_sequence(rng, int(rng.integers(1, 4)), 100, phi, p_loop=0.9)
        res = run_vbx(X, phi, rng.integers(0, 5, 100), params)
        assert np.all(np.diff(res.elbo_trace) >= -1e-6)


def test_result_invariants():
    phi = np.full(6, 30.0)
    X, _ = sample_vbx_sequence(np.random.default_rng(11), 2, 120, phi)
    res = run_vbx(X, phi, np.random.default_rng(0).integers(0, 6, 120))
    np.testing.assert_allclose(res.gamma.sum(axis=1), 1.0, atol=1e-9)
    assert res.pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(res.pi >= VbxParams().drop_threshold)
    np.testing.assert_array_equal(res.labels, np.argmax(res.gamma, axis=1))
    assert res.active_speakers == len(res.posteriors) == res.pi.size == res.kept.size


def test_permutation_equivariance():
    phi = np.full(8, 50.0)
    for seed in range(5):
        rng = np.random.default_rng(200 + seed)
        X, _ = sample_vbx_sequence(rng, 3, 150, phi)
        init = rng.integers(0, 6, 150)
        perm = rng.permutation(6)
        a = run_vbx(X, phi, init)
        b = run_vbx(X, phi, perm[init])
        # speaker s of run a is speaker perm[s] of run b
        assert frame_error(a.labels, b.labels) == 0.0
        np.testing.assert_array_equal(np.sort(perm[a.kept]), np.sort(b.kept))


def test_larger_fb_never_adds_speakers():
    phi = np.full(10, 100.0)
    for seed in range(10):
        rng = np.random.default_rng(300 + seed)
        X, _ = sample_vbx_sequence(rng, int(rng.integers(2, 5)), 200, phi)
        init = _ahc_init(X, phi, threshold=30.0)
        counts = [run_vbx(X, phi, init, VbxParams(F_B=fb)).active_speakers for fb in (1, 5, 10, 20)]
        assert all(a >= b for a, b in zip(counts, counts[1:])), counts


def test_run_time_per_recording():
    phi = np.full(10, 100.0)
    X, _ = sample_vbx_sequence(np.random.default_rng(12), 3, 300, phi)
    init = _ahc_init(X, phi)
    t0 = time.perf_counter()
    run_vbx(X, phi, init)
    assert time.perf_counter() - t0 < 1.0
