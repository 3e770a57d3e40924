//! Convolutional variational autoencoder: architecture, losses, training,
//! relooped generation and weight persistence.

mod arch;
mod loss;
mod model;
mod train;

pub use arch::{Architecture, Layer, ParamSpec, Shape};
pub use loss::{combine, loss_bce, loss_kl, loss_total, LossParts};
pub use model::{
    reparameterize, rescale, LatentVector, VaeModel, DEFAULT_ALPHA, DEFAULT_LATENT_DIM, DEFAULT_RELOOPS,
    DEFAULT_THRESHOLD, WEIGHTS_MAGIC,
};
pub use train::{
    batch_loss, batch_tensor, loss_and_gradients, read_loss_csv, train, train_with, write_loss_csv, EpochLoss,
    TrainConfig,
};
