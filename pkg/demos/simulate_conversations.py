# %% [markdown]
# # Simulated conversations versus simulated mixtures
#
# A conversation is built by sampling pauses and overlaps from
# histograms estimated on real turn-taking. A mixture instead
# places each speaker's utterances independently with exponential
# pauses, which overlaps far more often than people do.

# %%
import numpy as np

from vbxdiar import Annotation, dataset_stats, estimate_stats, simulate_conversation, simulate_mixture
from vbxdiar.simcon import Utterance, UtterancePool

rng = np.random.default_rng(3)

# A stand-in for a real conversational corpus, used only to estimate gap statistics.
conversations = []
for c in range(20):
    t, triples, spk = 0.0, [], 0
    for _ in range(30):
        dur = rng.uniform(1, 5)
        triples.append((t, t + dur, f"S{spk}"))
        switch = rng.random() > 0.3
        spk = 1 - spk if switch else spk
        # only a change of speaker may start before the previous turn ends
        t += dur + (rng.gamma(2.0, 0.2) - 0.15 if switch else rng.gamma(2.0, 0.3))
        t = max(t, triples[-1][0] + 0.01)
    conversations.append(Annotation.from_intervals(f"c{c}", triples))
stats = estimate_stats(conversations)
print(f"P(pause between same-speaker turns) = {stats.p_pause:.2f}")

# %%
pool = UtterancePool({
    f"spk{k}": tuple(
        Utterance(f"spk{k}_{u}.wav", tuple((3.0 * i, 3.0 * i + rng.uniform(1, 2.5)) for i in range(15)))
        for u in range(3)
    )
    for k in range(6)
})

def overlap(timelines):
    return sum(dataset_stats(t.annotation, t.end)["overlap_pct"] * t.end for t in timelines) / sum(t.end for t in timelines)

sc = [simulate_conversation(pool, 2, stats, seed) for seed in range(30)]
sm = [simulate_mixture(pool, 2, 2.0, 10, 20, seed) for seed in range(30)]
print(f"overlap in simulated conversations: {overlap(sc):5.1f}%")
print(f"overlap in simulated mixtures:      {overlap(sm):5.1f}%")
