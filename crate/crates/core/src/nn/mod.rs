//! Desk-scale trainable estimator: network, training, checkpoints, fold
//! ensembles and gradient checking.

pub mod checkpoint;
pub mod crossval;
pub mod ensemble;
pub mod gradcheck;
pub mod network;
pub mod train;

pub use checkpoint::{ModelCheckpoint, Provenance};
pub use ensemble::{angle_of_mean, majority_vote, Ensemble, EnsemblePrediction};
pub use network::{ConvBlock, HeadKind, Network, NetworkConfig, Target};
pub use train::{train, Example, TrainConfig, TrainOutcome};
pub use crossval::{cross_validate, CrossValConfig, CrossValOutcome, LabeledImage};
