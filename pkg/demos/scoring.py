# %% [markdown]
# # Scoring a diarization hypothesis
#
# A small interview with three reference speakers is scored against a
# two-speaker hypothesis. Because the hypothesis merged the two
# interviewees into one speaker, most of the error is confusion.

# %%
from vbxdiar import Annotation, der, jer, optimal_mapping

reference = Annotation.from_intervals(
    "interview",
    [
        (0.5, 2.5, "Interviewer"),
        (4.0, 7.0, "Interviewer"),
        (6.5, 10.0, "Interviewee1"),
        (10.5, 13.0, "Interviewee2"),
    ],
)
hypothesis = Annotation.from_intervals(
    "interview", [(0.5, 2.0, "Spk1"), (3.5, 7.0, "Spk1"), (7.0, 13.0, "Spk2")]
)

# %% [markdown]
# The speaker mapping maximizes total overlap. Reference speakers left
# without a partner count as confusion wherever they are spoken.

# %%
mapping = optimal_mapping(reference, hypothesis)
print("mapping:", mapping.pairs)
print("unmapped reference speakers:", mapping.unmapped_reference)

# %%
d = der(reference, hypothesis)
print(f"miss {d.miss:.2f} s, false alarm {d.fa:.2f} s, confusion {d.confusion:.2f} s")
print(f"DER = {100 * d.der:.1f}% of {d.total_speech:.1f} s of reference speech")

# %% [markdown]
# A collar forgives small boundary errors around each reference
# boundary. JER instead averages a per-speaker error, so the
# interviewee who was never found weighs as much as the interviewer.

# %%
print(f"DER with a 0.25 s collar = {100 * der(reference, hypothesis, collar=0.25).der:.1f}%")
j = jer(reference, hypothesis)
for speaker, value in j.per_speaker.items():
    print(f"  {speaker:13s} {value:.2f}")
print(f"JER = {100 * j.jer:.1f}%")
