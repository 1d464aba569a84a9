"""Mask-pyramid GAN for projection completion (PC) and sinogram correction (SC)."""
from maskmar.gan.inference import complete_projections, correct_sinograms, infer_mar
from maskmar.gan.losses import (
    LAMBDA_CONTENT,
    compose_pc,
    compose_sc,
    loss_content,
    loss_disc,
    loss_gen,
    loss_gen_adv,
)
from maskmar.gan.model import ModelBundle, Normalizer, load_bundle, network_input, save_bundle
from maskmar.gan.networks import Discriminator, DiscriminatorConfig, Generator, GeneratorConfig
from maskmar.gan.train import (
    LOSS_COLUMNS,
    PairedSet,
    TrainConfig,
    TrainResult,
    continue_training,
    losses_csv,
    masked_l1,
    new_bundle,
    train,
    train_pc,
    train_sc,
    write_losses,
)

__all__ = [
    "LAMBDA_CONTENT",
    "LOSS_COLUMNS",
    "Discriminator",
    "DiscriminatorConfig",
    "Generator",
    "GeneratorConfig",
    "ModelBundle",
    "Normalizer",
    "PairedSet",
    "TrainConfig",
    "TrainResult",
    "complete_projections",
    "compose_pc",
    "compose_sc",
    "continue_training",
    "correct_sinograms",
    "infer_mar",
    "load_bundle",
    "loss_content",
    "loss_disc",
    "loss_gen",
    "loss_gen_adv",
    "losses_csv",
    "masked_l1",
    "network_input",
    "new_bundle",
    "save_bundle",
    "train",
    "train_pc",
    "train_sc",
    "write_losses",
]
