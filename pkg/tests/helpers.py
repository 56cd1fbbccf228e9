"""Independent oracles shared by the test modules.

Nothing here calls into the code under test except for constructing inputs.
"""

import itertools

import numpy as np

from vbxdiar.simcon import Histogram, Utterance, UtterancePool
from vbxdiar.timeline import Annotation

FRAME = 0.001


def random_annotation(rng, rec="rec", n_spk=None, length=60.0, max_segs=8, grid=None):
    n_spk = int(rng.integers(1, 5)) if n_spk is None else n_spk
    triples = []
    for k in range(n_spk):
        n = int(rng.integers(1, max_segs + 1))
        pts = np.sort(rng.uniform(0, length, size=2 * n))
        if grid:
            pts = np.round(pts / grid) * grid
        for a, b in zip(pts[::2], pts[1::2]):
            if b - a > 1e-6:
                triples.append((float(a), float(b), f"S{k}"))
    if not triples:
        triples.append((0.0, 1.0, "S0"))
    return Annotation.from_intervals(rec, triples)


def rasterize(annotation, n_frames, frame=FRAME):
    """Boolean activity matrix (speaker, frame) sampled at frame centres."""
    spk = annotation.speakers
    centres = (np.arange(n_frames) + 0.5) * frame
    act = np.zeros((len(spk), n_frames), dtype=bool)
    for i, s in enumerate(spk):
        for on, off in annotation.speaker_intervals(s):
            act[i] |= (centres >= on) & (centres < off)
    return spk, act


def brute_force_mapping(weights):
    """Best total weight over all injective row->column maps (partial allowed)."""
    n_r, n_c = weights.shape
    best, best_map = 0.0, {}
    cols = list(range(n_c))
    for k in range(0, min(n_r, n_c) + 1):
        for rows in itertools.combinations(range(n_r), k):
            for perm in itertools.permutations(cols, k):
                w = sum(weights[r, c] for r, c in zip(rows, perm))
                if w > best + 1e-12:
                    best, best_map = w, dict(zip(rows, perm))
    return best, best_map


def raster_der(ref, hyp, frame=FRAME):
    n = int(np.ceil(max(ref.end, hyp.end) / frame)) + 1
    rs, ra = rasterize(ref, n, frame)
    hs, ha = rasterize(hyp, n, frame)
    w = (ra[:, None, :] & ha[None, :, :]).sum(axis=2).astype(float) if hs else np.zeros((len(rs), 0))
    _, m = brute_force_mapping(w)
    n_ref = ra.sum(axis=0)
    n_sys = ha.sum(axis=0) if hs else np.zeros(n, dtype=int)
    correct = np.zeros(n, dtype=int)
    for r, c in m.items():
        correct += ra[r] & ha[c]
    miss = np.maximum(0, n_ref - n_sys).sum() * frame
    fa = np.maximum(0, n_sys - n_ref).sum() * frame
    conf = (np.minimum(n_ref, n_sys) - correct).sum() * frame
    total = n_ref.sum() * frame
    return miss, fa, conf, total


def raster_stats(annotation, total, frame=FRAME):
    n = int(round(total / frame))
    _, act = rasterize(annotation, n, frame)
    cnt = act.sum(axis=0)
    return (100.0 * np.mean(cnt == 0), 100.0 * np.mean(cnt == 1), 100.0 * np.mean(cnt >= 2))


def hmm_enumerate(log_out_prob, pi, p_loop):
    """Posterior marginals, log evidence and expected re-entry mass by summing over all S**T paths."""
    T, S = log_out_prob.shape
    tr = (1 - p_loop) * np.tile(pi, (S, 1)) + p_loop * np.eye(S)
    paths = list(itertools.product(range(S), repeat=T))
    logw = np.empty(len(paths))
    for n, z in enumerate(paths):
        lw = np.log(pi[z[0]]) + log_out_prob[0, z[0]]
        for t in range(1, T):
            lw += np.log(tr[z[t - 1], z[t]]) + log_out_prob[t, z[t]]
        logw[n] = lw
    m = logw.max()
    log_px = m + np.log(np.exp(logw - m).sum())
    w = np.exp(logw - log_px)
    gamma = np.zeros((T, S))
    reentry = np.zeros(S)
    for wz, z in zip(w, paths):
        for t in range(T):
            gamma[t, z[t]] += wz
        for t in range(1, T):
            s_prev, s = z[t - 1], z[t]
            reentry[s] += wz * (1 - p_loop) * pi[s] / tr[s_prev, s]
    return gamma, log_px, reentry


def sample_vbx_sequence(rng, n_spk, T, phi, p_loop=0.95):
    """Draw speakers y_s ~ N(0, I), a sticky state path and x_t ~ N(V y_z, I)."""
    R = phi.size
    y = rng.standard_normal((n_spk, R))
    z = np.empty(T, dtype=int)
    z[0] = rng.integers(n_spk)
    for t in range(1, T):
        z[t] = z[t - 1] if rng.random() < p_loop else rng.integers(n_spk)
    X = (y * np.sqrt(phi))[z] + rng.standard_normal((T, R))
    return X, z


def frame_error(labels, truth):
    """Fraction of frames wrong under the best 1:1 label mapping (brute force)."""
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    ls, ts = np.unique(labels), np.unique(truth)
    w = np.array([[np.sum((labels == a) & (truth == b)) for b in ts] for a in ls], dtype=float)
    best, _ = brute_force_mapping(w)
    return 1.0 - best / labels.size


def random_plda(rng, D, between_scale=30.0):
    from vbxdiar.plda import PldaModel

    A = rng.standard_normal((D, D)) * 0.3
    B = rng.standard_normal((D, D))
    Sb = B @ B.T
    Sb *= between_scale / np.trace(Sb) * D
    return PldaModel(rng.standard_normal(D), A @ A.T + 0.5 * np.eye(D), Sb)


def synthetic_recording(rng, model, n_spk, n_windows, hop=0.25, win=1.5, mean_turn=30):
    """x-vectors drawn from a PLDA model along a random turn sequence on a sliding-window grid."""
    D = model.dim
    Lb = np.linalg.cholesky(model.between_cov)
    Lw = np.linalg.cholesky(model.within_cov)
    y = rng.standard_normal((n_spk, D)) @ Lb.T
    labels = np.empty(n_windows, dtype=int)
    t, cur = 0, int(rng.integers(n_spk))
    while t < n_windows:
        n = max(4, int(rng.poisson(mean_turn)))
        labels[t : t + n] = cur
        t += n
        if n_spk > 1:
            cur = int((cur + rng.integers(1, n_spk)) % n_spk)
    X = model.mean + y[labels] + rng.standard_normal((n_windows, D)) @ Lw.T
    starts = np.arange(n_windows) * hop
    segments = np.stack([starts, starts + win], axis=1)
    return X, segments, labels


def make_pool(seed=0, n_spk=6, n_utt=3, n_seg=15):
    rng = np.random.default_rng(seed)
    utts = {}
    for s in range(n_spk):
        spk = f"spk{s}"
        lst = []
        for u in range(n_utt):
            t, segs = 0.0, []
            for _ in range(n_seg):
                t += rng.uniform(0.2, 1.0)
                d = rng.uniform(1.0, 4.0)
                segs.append((round(t, 3), round(t + d, 3)))
                t += d
            lst.append(Utterance(f"{spk}_{u}.wav", tuple(segs)))
        utts[spk] = tuple(lst)
    return UtterancePool(utts)


def hist_from(values, width=0.01):
    h = Histogram(width)
    for v in values:
        h.add(v)
    return h


def oracle_cdf(counts, width, x):
    edges = np.arange(len(counts) + 1) * width
    cum = np.concatenate([[0.0], np.cumsum(counts)]) / np.sum(counts)
    return np.interp(x, edges, cum)


def ks_distance(samples, counts, width):
    x = np.sort(np.asarray(samples))
    n = x.size
    F = oracle_cdf(counts, width, x)
    i = np.arange(1, n + 1)
    return max(np.max(i / n - F), np.max(F - (i - 1) / n))
