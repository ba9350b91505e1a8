"""Hyperspectral-image denoising with continuous-scan selective state
space models, built on a small numpy autodiff core.

Public surface: the autodiff :class:`Tensor`, cube scan permutations,
the state-space layers, the U-shaped denoising network, mixture noise
synthesis, reference metrics, training loops, and bit-exact cube /
checkpoint file formats.
"""

from .hsio import (DataError, load_checkpoint, load_cube, parse_config_text,
                   save_checkpoint, store_cube)
from .metrics import MetricsReport, evaluate_pair, psnr, sam, ssim
from .model import (ModelConfig, ModelWeights, denoise_cube, forward, init_model,
                    named_parameters, parameter_count, parameters)
from .noise import DegradeReport, NoiseSpec, degrade, synth_clean_cube
from .optim import Adam, clip_grad_norm, grad_check
from .rng import Rng
from .scan import (ALL_SCHEMES, SSCS_SCHEMES, ScanPermutation, build_permutation,
                   continuity_report, get_permutation, invert)
from .ssm import (DiscreteSsm, LtiSsm, SelectiveSsmWeights, discretize,
                  selective_scan, ssm_convolutional, ssm_kernel, ssm_recurrent)
from .tensor import NonFiniteError, Tensor
from .train import TrainConfig, TrainingDiverged, ablation_run, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "Adam", "ALL_SCHEMES", "DataError", "DegradeReport", "DiscreteSsm",
    "LtiSsm", "MetricsReport", "ModelConfig", "ModelWeights", "NoiseSpec",
    "NonFiniteError", "Rng", "SSCS_SCHEMES", "ScanPermutation",
    "SelectiveSsmWeights", "Tensor", "TrainConfig", "TrainingDiverged",
    "ablation_run", "build_permutation", "clip_grad_norm",
    "continuity_report", "degrade", "denoise_cube", "discretize",
    "evaluate", "evaluate_pair", "forward", "get_permutation", "grad_check",
    "init_model", "invert", "load_checkpoint", "load_cube",
    "named_parameters", "parameter_count", "parameters",
    "parse_config_text", "psnr", "sam", "save_checkpoint",
    "selective_scan", "ssim", "ssm_convolutional", "ssm_kernel",
    "ssm_recurrent", "store_cube", "synth_clean_cube", "train",
]
