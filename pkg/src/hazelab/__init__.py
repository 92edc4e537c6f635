"""hazelab: single-image dehazing toolkit.

Classical dark-channel-prior dehazing and transmission estimation, a
physically based haze synthesizer, a transmission-guided encoder-decoder
GAN with its training loop, and PSNR/SSIM evaluation machinery.
"""

from .dcp import DcpParams, dark_channel, dcp_dehaze, estimate_airlight, estimate_transmission, guided_filter, recover_radiance
from .hazesim import HazeParams, apply_haze, depth_to_transmission, sample_beta, synthesize_pair
from .losses import LossWeights, adversarial_loss, build_feature_extractor, critic_loss, integral_loss, mse_loss, perceptual_loss
from .metrics import MetricReport, evaluate_dirs, psnr, ssim
from .models import NetSpec, build_discriminator, build_generator, discriminator_forward, generator_forward, spp_block
from .nn import ParamStore, Tensor, adam_step, grad_check
from .trainer import SamplePair, TrainConfig, augment, load_checkpoint, lr_at, save_checkpoint, train_loop, train_step

__version__ = "0.1.0"
