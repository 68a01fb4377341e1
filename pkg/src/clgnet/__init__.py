"""CLGNet: wavelet and Fourier residual network for undersampled MRI, in numpy."""

from .errors import (CLGNetError, ConfigurationError, ContractError, DimensionError,
                     IntegrityError, NumericError)
from .tensor import Tensor, backward, no_grad
from .spectral import ComplexGrid, WaveletSubbands, dft2_oracle, dwt2, idwt2, irfft2, rfft2
from .layers import (ModelParams, NetConfig, clgnet_forward, init_params, param_count,
                     sfl_forward, sfrb_forward, sfrir_forward, spatial_branch, wavelet_branch)
from .losses import PerceptualExtractor, contrastive_loss, l1_loss, total_loss
from .metrics import nmse, psnr, ssim
from .mrisim import SamplePair, SamplingMask, cartesian_mask, make_pair, phantom, zero_filled
from .trainer import AdamState, TrainConfig, adam_step, evaluate, train
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"
