"""Spatial and temporal quality metrics for video super-resolution, and the
beta-weighted joint loss used to trace their tradeoff."""

from .experiment import CorpusSpec, beta_sweep, check_monotone, evaluate_methods, make_corpus, noisy_static_pair
from .flow import read_flo, synth_translation_flow, warp_adjoint, warp_backward, write_flo
from .frame import bicubic_resize, degrade_x4, load_frame, load_video, rgb_to_luma, save_frame
from .joint_loss import LossBreakdown, LossConfig, joint_loss, joint_loss_grad, minimize
from .masks import ConsistencyConfig, fb_consistency_mask, soft_mask
from .metrics import MetricReport, aggregate_dataset, mse, ssim, warping_error_pair, warping_error_video

__version__ = "0.1.0"
