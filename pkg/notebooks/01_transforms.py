# Spectral building blocks: real FFT, its direct-sum oracle, Haar wavelets.
import numpy as np

from clgnet import Tensor, dft2_oracle, dwt2, idwt2, irfft2, rfft2
from clgnet.selfcheck import half_spectrum_energy

rng = np.random.default_rng(0)

# %% rfft2 keeps W//2 + 1 columns of the spectrum
x = rng.standard_normal((6, 8))
X = rfft2(Tensor(x))
X.re.shape, X.im.shape

# %% compare against the O(N^2) double sum
full = dft2_oracle(x)
print("max |fast - oracle|:", np.abs(X.to_complex() - full[:, :5]).max())

# %% a constant image only has a DC term
c = rfft2(Tensor(np.full((4, 4), 0.5))).to_complex()
print(np.round(c.real, 12))

# %% Parseval on the half spectrum: weight the mirrored columns twice
print(half_spectrum_energy(x), x.size * np.sum(x ** 2))

# %% inverse, with the 1/(HW) normalization
back = irfft2(X, (6, 8)).data
print("roundtrip err:", np.abs(back - x).max())

# %% one Haar level on a 2x2 block
s = dwt2(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]])))
[b.data.item() for b in s.bands()]   # LL, LH, HL, HH = 5, -2, -1, 0

# %% subbands keep the energy and invert exactly
img = rng.random((1, 1, 16, 16))
s = dwt2(Tensor(img))
print(sum(np.sum(b.data ** 2) for b in s.bands()), np.sum(img ** 2))
print("idwt err:", np.abs(idwt2(s).data - img).max())
