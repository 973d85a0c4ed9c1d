"""Task-oriented feature compression and edge localization for multi-camera UAVs."""

from .channel import LinkParams, channel_gain, shannon_rate, simulate_link, transmission_delay
from .config import ExperimentConfig
from .dataset import Dataset, WorldConfig, generate_world, load_dataset, make_splits, save_dataset
from .locedge import GeoDatabase, HybridConfig, build_database, evaluate, hybrid_estimate, retrieve
from .numkernel import RngState, grad_check
from .ovib import (
    OvibModel,
    Schedule,
    ard_neg_kl_fit,
    ard_kl,
    composite_loss,
    decode,
    encode,
    latent_entropy,
    localize_head,
    orthogonality_penalty,
    prune,
    quantize,
    dequantize,
    train,
)

__version__ = "0.1.0"
