# %% [markdown]
# # End-to-end diarization of the toy recordings
#
# The test fixtures ship a small PLDA model, an x-vector archive and the
# matching segments file. This script runs the full pipeline on them and
# scores the output against the reference RTTM.

# %%
from pathlib import Path

import numpy as np

from vbxdiar import der, diagonalize, diarize_recording, parse_rttm
from vbxdiar.pipeline import load_config
from vbxdiar.plda import load_plda, read_segments, read_xvector_archive

data = Path(__file__).resolve().parent.parent / "tests" / "data"
model = load_plda(data / "toy_plda.txt")
xvectors = read_xvector_archive(data / "toy_xvecs.bin")
segments = read_segments(data / "toy_segments")
config = load_config(data / "toy_config.txt")
reference = {a.recording_id: a for a in parse_rttm((data / "toy_ref.rttm").read_bytes())}

# %%
diag = diagonalize(model, config.lda_dim)
recordings = sorted({rec for rec, _, _ in segments})
for rec in recordings:
    rows = [i for i, (r, _, _) in enumerate(segments) if r == rec]
    times = np.array([(segments[i][1], segments[i][2]) for i in rows])
    hyp = diarize_recording(rec, xvectors[rows], times, diag, config)
    print(f"{rec}: {len(hyp.speakers)} speakers found, DER {100 * der(reference[rec], hyp).der:.2f}%")
