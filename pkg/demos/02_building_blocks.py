# %% [markdown]
# # The building blocks, one at a time
#
# Every component is plain numpy on top of a small autodiff engine.  Here we
# poke at each one and confirm its gradients with central differences.

# %%
import numpy as np

from emmixformer import numerics as nx
from emmixformer.attention import TransformerConfig, TransformerEncoder
from emmixformer.attlstm import attlstm
from emmixformer.fourierformer import FourierFormer, to_spectrum
from emmixformer.numerics import Tensor
from emmixformer.selfcheck import SUITES

rng = np.random.default_rng(0)

# %% [markdown]
# ## Unitary DFT
# Both directions carry 1/sqrt(T), so energy is preserved exactly.

# %%
x = rng.standard_normal(12)
spec = nx.dft(Tensor(x))
print("energy in :", np.sum(x**2))
print("energy out:", np.sum(spec.re.data**2 + spec.im.data**2))
print("round trip error:", np.abs(nx.idft(spec).data - x).max())

# %% [markdown]
# ## Fourier transformer
# Amplitude and phase each go through their own encoder.  With the encoders
# bypassed the block is an identity map.

# %%
cfg = TransformerConfig(model_dim=16, heads=2)
seq = Tensor(rng.standard_normal((1, 8, 16)))
sp = to_spectrum(seq)
print("phase range:", sp.phase.data.min(), sp.phase.data.max())
print("bypass error:", np.abs(FourierFormer(rng, cfg, bypass=True)(seq).data - seq.data).max())
print("output shape:", FourierFormer(rng, cfg)(seq).shape)

# %% [markdown]
# ## Attention LSTM
# Each d-vector is cut into 16 tokens, and the gates come from self- and
# cross-attention between input, hidden and cell tokens.

# %%
layer = attlstm(rng, 32, n_tokens=16)
h = layer(Tensor(rng.standard_normal((2, 5, 32))))
print("hidden states:", h.shape, "max |h|:", np.abs(h.data).max())

# %% [markdown]
# ## Transformer encoder
# Without positional encoding it is permutation equivariant.

# %%
enc = TransformerEncoder(rng, cfg)
tokens = rng.standard_normal((6, 16))
perm = rng.permutation(6)
diff = enc(Tensor(tokens[perm])).data - enc(Tensor(tokens)).data[perm]
print("equivariance error:", np.abs(diff).max())

# %% [markdown]
# ## Gradient checks
# Max relative error per module against central differences (h = 1e-5).
# Disagreements inside the rounding noise of the difference itself count as
# exact, so a correct module usually reports 0.

# %%
for name, suite in SUITES.items():
    if name == "model":
        continue  # the whole-model suite takes about half a minute
    errs = suite(0)
    print(f"{name:15s} {max(errs.values()):.2e} over {len(errs)} tensors")
