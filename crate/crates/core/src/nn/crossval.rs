//! Patient-level k-fold training with out-of-fold predictions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::ModelCheckpoint;
use super::network::{HeadKind, NetworkConfig, Target};
use super::train::{train, Example, TrainConfig, TrainError, TrainOutcome};
use crate::color::LabColor;
use crate::dataset::folds::{split_validation, FoldAssignment};
use crate::dataset::preprocess::{preprocess, NetInput, PreprocessConfig};
use crate::image::RgbImage;
use crate::ordinal::{argmax_rank, decode_rank, Fitzpatrick};

/// One training image with whatever supervision it carries.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub subject_id: String,
    pub image: RgbImage,
    pub fitzpatrick: Option<Fitzpatrick>,
    pub lab: Option<LabColor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValConfig {
    pub network: NetworkConfig,
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
    /// Share of each fold's training subjects held out for early stopping.
    pub val_fraction: f64,
}

impl CrossValConfig {
    pub fn target_of(&self, item: &LabeledImage) -> Option<Target> {
        match self.network.head {
            HeadKind::LabRegression => item.lab.map(Target::Lab),
            HeadKind::Ordinal | HeadKind::Classification => {
                item.fitzpatrick.map(|f| Target::Rank(f.rank() as usize))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct FoldModel {
    pub fold: u8,
    pub outcome: TrainOutcome,
    pub train_subjects: Vec<String>,
    pub val_subjects: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CrossValOutcome {
    pub models: Vec<FoldModel>,
    /// Raw network output for every input item from the model of its own
    /// (held-out) fold; `None` for items whose subject has no fold.
    pub oof: Vec<Option<Vec<f64>>>,
}

impl CrossValOutcome {
    pub fn checkpoints(&self) -> Vec<ModelCheckpoint> {
        self.models.iter().map(|m| m.outcome.checkpoint.clone()).collect()
    }
}

/// Decodes a raw output into a 1-based rank for rank heads.
pub fn output_rank(head: HeadKind, out: &[f64]) -> Option<usize> {
    match head {
        HeadKind::Ordinal => Some(decode_rank(out)),
        HeadKind::Classification => Some(argmax_rank(out)),
        HeadKind::LabRegression => None,
    }
}

pub fn output_lab(head: HeadKind, out: &[f64]) -> Option<LabColor> {
    (head == HeadKind::LabRegression).then(|| LabColor::new(out[0], out[1], out[2]))
}

/// Trains one model per fold. Fold `f` trains on the subjects of the other
/// folds minus a seeded validation share, with network seed
/// `network.seed + f` and shuffle seed `train.seed + f`. Items without a
/// target for the configured head are used only for out-of-fold prediction.
pub fn cross_validate(
    items: &[LabeledImage],
    folds: &FoldAssignment,
    cfg: &CrossValConfig,
) -> Result<CrossValOutcome, TrainError> {
    cfg.network.validate()?;
    let inputs: Vec<NetInput> = items.par_iter().map(|it| preprocess(&it.image, &cfg.preprocess)).collect();
    let fold_ids: Vec<u8> = (0..folds.n_folds as u8).filter(|&f| !folds.subjects_in(f).is_empty()).collect();

    let models: Vec<FoldModel> = fold_ids
        .par_iter()
        .map(|&f| {
            let others: Vec<String> = folds
                .folds
                .iter()
                .filter(|(_, &v)| v != f)
                .map(|(k, _)| k.clone())
                .collect();
            let (train_subjects, val_subjects) =
                split_validation(&others, cfg.val_fraction, cfg.train.seed.wrapping_add(f as u64));
            let collect = |subjects: &[String]| -> Vec<Example> {
                items
                    .iter()
                    .zip(&inputs)
                    .filter(|(it, _)| subjects.binary_search(&it.subject_id).is_ok())
                    .filter_map(|(it, inp)| cfg.target_of(it).map(|t| Example { input: inp.clone(), target: t }))
                    .collect()
            };
            let (tr, va) = (collect(&train_subjects), collect(&val_subjects));
            let network = NetworkConfig { seed: cfg.network.seed.wrapping_add(f as u64), ..cfg.network.clone() };
            let tcfg = TrainConfig { seed: cfg.train.seed.wrapping_add(f as u64), ..cfg.train.clone() };
            log::info!("fold {f}: {} train / {} validation examples", tr.len(), va.len());
            let outcome = train(&network, &cfg.preprocess, &tr, &va, &tcfg)?;
            Ok(FoldModel { fold: f, outcome, train_subjects, val_subjects })
        })
        .collect::<Result<_, TrainError>>()?;

    let nets: Vec<_> = models
        .iter()
        .map(|m| m.outcome.checkpoint.to_network().map(|n| (m.fold, n)))
        .collect::<Result<_, _>>()?;
    let oof = items
        .par_iter()
        .zip(&inputs)
        .map(|(it, inp)| {
            let Some(f) = folds.fold_of(&it.subject_id) else { return Ok(None) };
            match nets.iter().find(|(k, _)| *k == f) {
                Some((_, net)) => net.forward(inp).map(Some),
                None => Ok(None),
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(CrossValOutcome { models, oof })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::folds::make_folds_for_subjects;
    use crate::nn::network::ConvBlock;
    use crate::synth::{generate_samples, SynthDistribution};

    fn setup(head: HeadKind) -> (Vec<LabeledImage>, FoldAssignment, CrossValConfig) {
        let dist = SynthDistribution { size: 8, images_per_subject: 2, ..Default::default() };
        let recs = generate_samples(30, &dist, 3).unwrap();
        let items: Vec<LabeledImage> = recs
            .iter()
            .map(|r| LabeledImage {
                subject_id: r.subject_id.clone(),
                image: r.sample.image.image().clone(),
                fitzpatrick: Some(r.sample.truth_fp),
                lab: Some(r.sample.truth_lab),
            })
            .collect();
        let subjects = recs.iter().map(|r| (r.subject_id.clone(), Some(r.sample.truth_fp))).collect();
        let folds = make_folds_for_subjects(&subjects, 3, 1).unwrap();
        let network = NetworkConfig {
            input_size: 8,
            blocks: vec![ConvBlock { channels: 2, kernel: 3, pool: 2 }],
            feature_dim: 4,
            head,
            classes: 6,
            seed: 4,
        };
        let train = TrainConfig { max_epochs: 3, ..TrainConfig::for_head(head) };
        (items, folds, CrossValConfig { network, preprocess: PreprocessConfig::imagenet(8), train, val_fraction: 0.2 })
    }

    #[test]
    fn folds_hold_out_their_subjects() {
        let (items, folds, cfg) = setup(HeadKind::Ordinal);
        let out = cross_validate(&items, &folds, &cfg).unwrap();
        assert_eq!(out.models.len(), 3);
        for m in &out.models {
            let held: Vec<&str> = folds.subjects_in(m.fold);
            assert!(m.train_subjects.iter().chain(&m.val_subjects).all(|s| !held.contains(&s.as_str())));
            assert!(!m.val_subjects.is_empty());
        }
        assert!(out.oof.iter().all(|o| o.as_ref().is_some_and(|v| v.len() == 5)));
    }

    #[test]
    fn reproducible() {
        let (items, folds, cfg) = setup(HeadKind::LabRegression);
        let a = cross_validate(&items, &folds, &cfg).unwrap();
        let b = cross_validate(&items, &folds, &cfg).unwrap();
        assert_eq!(a.checkpoints(), b.checkpoints());
        assert_eq!(a.oof, b.oof);
    }

    #[test]
    fn decoders() {
        assert_eq!(output_rank(HeadKind::Ordinal, &[1.0, 0.5, -0.1]), Some(3));
        assert_eq!(output_rank(HeadKind::Classification, &[0.0, 2.0, 2.0]), Some(2));
        assert_eq!(output_lab(HeadKind::LabRegression, &[50.0, 1.0, 2.0]), Some(LabColor::new(50.0, 1.0, 2.0)));
        assert_eq!(output_lab(HeadKind::Ordinal, &[0.0]), None);
    }
}
