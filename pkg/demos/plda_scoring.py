# %% [markdown]
# # A two-covariance PLDA backend
#
# We draw a random model, diagonalize it, and check that the
# log-likelihood ratio separates same-speaker pairs from
# different-speaker pairs.

# %%
import numpy as np

from vbxdiar import PldaModel, diagonalize, llr_score, transform

rng = np.random.default_rng(0)
D = 6
A = rng.standard_normal((D, D))
B = rng.standard_normal((D, D))
model = PldaModel(mean=np.zeros(D), within_cov=A @ A.T + np.eye(D), between_cov=10 * B @ B.T)

# %% [markdown]
# After the transform the within-speaker covariance is the identity and
# the between-speaker covariance is diagonal. Dimensions come out sorted
# by decreasing between-speaker variance.

# %%
diag = diagonalize(model)
E = diag.basis
print("E^T Sw E close to I:", np.allclose(E.T @ model.within_cov @ E, np.eye(D)))
print("phi:", np.round(diag.phi, 2))

# %%
def draw(n_speakers, per_speaker):
    centres = rng.multivariate_normal(np.zeros(D), model.between_cov, n_speakers)
    noise = rng.multivariate_normal(np.zeros(D), model.within_cov, (n_speakers, per_speaker))
    return centres[:, None, :] + noise

x = draw(200, 2)
same = [llr_score(*transform(pair, diag), diag.phi) for pair in x]
diff = [llr_score(*transform(np.stack([x[i, 0], x[i + 1, 0]]), diag), diag.phi) for i in range(0, 200, 2)]
print(f"mean LLR, same speaker      {np.mean(same):7.2f}")
print(f"mean LLR, different speaker {np.mean(diff):7.2f}")
