# %% [markdown]
# # Train a small model and measure verification error
#
# A reduced-width network on four synthetic subjects, trained for a handful
# of epochs, then scored with the enrollment-template protocol.

# %%
import numpy as np

from emmixformer.data import build_dataset, random_profiles, synthesize
from emmixformer.evaluation import eer, frr_at_far, score_verification
from emmixformer.model import EmMixformer, ModelConfig
from emmixformer.preprocessing import PreprocessConfig
from emmixformer.siamese import CnnConfig
from emmixformer.training import TrainConfig, train

# %%
recs = synthesize(random_profiles(4, seed=1), sessions=2, duration_s=60, rate_hz=50, seed=1)
ds = build_dataset(recs, PreprocessConfig(window_length=256, window_stride=256))
print(ds.subjects, len(ds.train), "train /", len(ds.test), "test windows")

# %% [markdown]
# ## Untrained baseline
# Random embeddings should sit near chance.

# %%
cfg = ModelConfig(n_subjects=len(ds.subjects), cnn=CnnConfig(channels=(8, 16, 24, 32)), seed=1)
model = EmMixformer(cfg).eval()
print(f"{model.num_parameters():,} parameters")
print("untrained EER:", round(eer(score_verification(model, ds))[0], 3))

# %% [markdown]
# ## Training
# Adam, lr 2e-4, batch 64, cross-entropy over subject labels.

# %%
model.train()
result = train(model, ds, TrainConfig(epochs=30, seed=1),
               callback=lambda r: r["epoch"] % 10 == 0 and print(r))

# %% [markdown]
# ## Cross-session verification
# Templates are mean first-session embeddings; probes are second-session
# windows scored by cosine similarity.

# %%
scores = score_verification(model, ds)
rate, threshold = eer(scores)
print(f"EER {rate:.3f} at threshold {threshold:.3f}")
for r in frr_at_far(scores):
    note = " (too few impostor scores)" if r.insufficient else ""
    print(f"FRR at FAR {r.target:g}: {r.frr:.3f}{note}")
print("genuine mean", np.mean(scores.genuine).round(3), "impostor mean", np.mean(scores.impostor).round(3))
