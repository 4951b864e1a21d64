//! Optional TOML configuration. Every section and key may be omitted;
//! command-line flags take precedence over file values.

use std::path::Path;

use serde::Deserialize;
use tonemeter_core::audit::HistogramSpec;
use tonemeter_core::color::ItaBands;
use tonemeter_core::estimators::{DEFAULT_K, DEFAULT_PATCH_SIZE, DEFAULT_SOG_ORDER, DEFAULT_VARIANCE_CUTOFF};
use tonemeter_core::nn::network::{ConvBlock, HeadKind, NetworkConfig};
use tonemeter_core::nn::train::TrainConfig;
use tonemeter_core::synth::SynthDistribution;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub synth: SynthDistribution,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub estimator: EstimatorSection,
    pub audit: HistogramSpec,
    pub stats: StatsSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub input_size: Option<usize>,
    pub blocks: Option<Vec<ConvBlock>>,
    pub feature_dim: Option<usize>,
}

impl NetworkSection {
    pub fn build(&self, head: HeadKind, seed: u64) -> NetworkConfig {
        let base = NetworkConfig::desk_scale(head);
        NetworkConfig {
            input_size: self.input_size.unwrap_or(base.input_size),
            blocks: self.blocks.clone().unwrap_or(base.blocks),
            feature_dim: self.feature_dim.unwrap_or(base.feature_dim),
            seed,
            ..base
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub val_fraction: Option<f64>,
    pub folds: Option<usize>,
}

pub const DEFAULT_VAL_FRACTION: f64 = 0.2;

impl TrainSection {
    pub fn build(&self, head: HeadKind, seed: u64) -> TrainConfig {
        let base = TrainConfig::for_head(head);
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            max_epochs: self.max_epochs.unwrap_or(base.max_epochs),
            patience: self.patience.unwrap_or(base.patience),
            seed,
            ..base
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub k: usize,
    pub patch_size: usize,
    pub variance_cutoff: f64,
    pub white_balance_order: f64,
    pub ita_bands: ItaBands,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            patch_size: DEFAULT_PATCH_SIZE,
            variance_cutoff: DEFAULT_VARIANCE_CUTOFF,
            white_balance_order: DEFAULT_SOG_ORDER,
            ita_bands: ItaBands::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub bootstrap: usize,
    pub level: f64,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self { bootstrap: 1000, level: 0.95 }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                Ok(toml::from_str(&text)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let c: Config = toml::from_str("").unwrap();
        assert_eq!(c.estimator.k, DEFAULT_K);
        assert_eq!(c.synth, SynthDistribution::default());
    }

    #[test]
    fn sections_override() {
        let c: Config = toml::from_str(
            r#"
            [synth]
            images_per_subject = 4
            gain = [0.9, 1.1]
            [network]
            input_size = 16
            blocks = [{ channels = 4, kernel = 3, pool = 2 }]
            [train]
            max_epochs = 3
            [estimator]
            ita_bands = [50.0, 40.0, 30.0, 20.0, 10.0]
            "#,
        )
        .unwrap();
        assert_eq!(c.synth.images_per_subject, 4);
        assert_eq!(c.synth.gain, (0.9, 1.1));
        let net = c.network.build(HeadKind::Ordinal, 3);
        assert_eq!((net.input_size, net.blocks.len(), net.seed), (16, 1, 3));
        assert_eq!(c.train.build(HeadKind::Ordinal, 0).max_epochs, 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Config>("[train]\nlr = 1.0\n").is_err());
        assert!(toml::from_str::<Config>("[estimator]\nita_bands = [1.0, 2.0, 3.0, 4.0, 5.0]\n").is_err());
    }
}
