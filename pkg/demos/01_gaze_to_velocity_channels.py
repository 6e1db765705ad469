# %% [markdown]
# # From gaze traces to fast and slow velocity channels
#
# Synthesise two subjects, look at what a recording is, and turn it into the
# paired (fast, slow) windows the network consumes.

# %%
import numpy as np

from emmixformer.data import random_profiles, synthesize, build_dataset
from emmixformer.preprocessing import (
    PreprocessConfig,
    split_fast_slow,
    truncation_mask,
    velocities,
)

np.set_printoptions(precision=3, suppress=True)

# %% [markdown]
# ## Synthetic subjects
# Each subject profile fixes saccade peak velocity, durations and tremor.
# The difficulty knob pulls every profile toward the middle of its range.

# %%
profiles = random_profiles(2, seed=0)
for p in profiles:
    print(p)

recs = synthesize(profiles, sessions=2, duration_s=20, rate_hz=50, seed=0)
rec = recs[0]
print(rec.subject_id, rec.session_id, len(rec), "samples")
print("first positions (deg):", np.c_[rec.x[:5], rec.y[:5]])

# %% [markdown]
# ## Velocities and the truncation mask
# Backward differences, with the first sample pinned to 0.  Samples slower
# than v_min belong to fixations and get flattened in the fast channel.

# %%
dx, dy = velocities(rec)
speed = np.hypot(dx, dy)
mask = truncation_mask(dx, dy, v_min=40)
print(f"peak speed {speed.max():.0f} deg/s, {mask.mean():.0%} of samples below 40 deg/s")

# %%
fast, slow = split_fast_slow(dx, dy)
print("fast channel range:", fast.min(axis=1), fast.max(axis=1))
print(f"slow channel max |value|: {np.abs(slow).max():.15f}")

# %% [markdown]
# ## Windows and the cross-session split
# The first session of each subject is for enrollment, the rest for probes.

# %%
ds = build_dataset(recs, PreprocessConfig(window_length=256, window_stride=128))
print(len(ds.train), "train windows,", len(ds.test), "test windows")
print("one window:", ds.train[0].fast.shape, ds.train[0].slow.shape)
