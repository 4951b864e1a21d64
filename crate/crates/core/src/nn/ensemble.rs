//! Fold-ensemble aggregation: majority vote for ranks, angle-of-mean for ITA.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::checkpoint::ModelCheckpoint;
use super::network::{HeadKind, NetError, Network};
use crate::color::{ita, ItaDegrees, LabColor};
use crate::image::RgbImage;
use crate::ordinal::{argmax_rank, decode_rank};

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("ensemble needs at least one checkpoint")]
    Empty,
    #[error("checkpoint {index} has a different architecture than checkpoint 0")]
    MixedArchitecture { index: usize },
    #[error("checkpoint {index} has a {found:?} head where a {expected} head is required")]
    WrongHead { index: usize, found: HeadKind, expected: &'static str },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Most frequent rank; ties resolve to the lowest tied rank.
pub fn majority_vote(ranks: &[usize]) -> Option<usize> {
    let max = *ranks.iter().max()?;
    let mut counts = vec![0usize; max + 1];
    for &r in ranks {
        counts[r] += 1;
    }
    let best = counts.iter().max().copied()?;
    counts.iter().position(|&c| c == best)
}

/// Averages the Lab predictions first, then takes the ITA of the mean.
pub fn angle_of_mean(labs: &[LabColor]) -> Option<(LabColor, ItaDegrees)> {
    let mean = LabColor::mean(labs)?;
    Some((mean, ita(&mean)))
}

fn check_group(
    ckpts: &[ModelCheckpoint],
    want_rank: bool,
    expected: &'static str,
) -> Result<(), EnsembleError> {
    for (index, c) in ckpts.iter().enumerate() {
        if c.network.head.predicts_rank() != want_rank {
            return Err(EnsembleError::WrongHead { index, found: c.network.head, expected });
        }
        if !c.network.same_architecture(&ckpts[0].network) || c.preprocess != ckpts[0].preprocess {
            return Err(EnsembleError::MixedArchitecture { index });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub fitzpatrick: Option<usize>,
    /// Individual fold votes, in checkpoint order.
    pub votes: Vec<usize>,
    pub lab: Option<LabColor>,
    pub ita: Option<ItaDegrees>,
}

/// Fold models for the rank head and/or the Lab head.
#[derive(Debug, Clone)]
pub struct Ensemble {
    rank_models: Vec<ModelCheckpoint>,
    lab_models: Vec<ModelCheckpoint>,
    rank_nets: Vec<Network>,
    lab_nets: Vec<Network>,
}

impl Ensemble {
    pub fn new(rank_models: Vec<ModelCheckpoint>, lab_models: Vec<ModelCheckpoint>) -> Result<Self, EnsembleError> {
        if rank_models.is_empty() && lab_models.is_empty() {
            return Err(EnsembleError::Empty);
        }
        check_group(&rank_models, true, "rank")?;
        check_group(&lab_models, false, "Lab")?;
        let rank_nets = rank_models.iter().map(|c| c.to_network()).collect::<Result<_, _>>()?;
        let lab_nets = lab_models.iter().map(|c| c.to_network()).collect::<Result<_, _>>()?;
        Ok(Self { rank_models, lab_models, rank_nets, lab_nets })
    }

    /// Splits a mixed list of checkpoints by head type.
    pub fn from_checkpoints(ckpts: Vec<ModelCheckpoint>) -> Result<Self, EnsembleError> {
        let (rank, lab) = ckpts.into_iter().partition(|c| c.network.head.predicts_rank());
        Self::new(rank, lab)
    }

    pub fn rank_models(&self) -> &[ModelCheckpoint] {
        &self.rank_models
    }

    pub fn lab_models(&self) -> &[ModelCheckpoint] {
        &self.lab_models
    }

    pub fn predict(&self, img: &RgbImage) -> Result<EnsemblePrediction, EnsembleError> {
        let mut votes = Vec::with_capacity(self.rank_models.len());
        for (c, net) in self.rank_models.iter().zip(&self.rank_nets) {
            let out = net.forward(&c.input_for(img))?;
            votes.push(match c.network.head {
                HeadKind::Ordinal => decode_rank(&out),
                _ => argmax_rank(&out),
            });
        }
        let mut labs = Vec::with_capacity(self.lab_models.len());
        for (c, net) in self.lab_models.iter().zip(&self.lab_nets) {
            let out = net.forward(&c.input_for(img))?;
            labs.push(LabColor::new(out[0], out[1], out[2]));
        }
        let (lab, ita) = match angle_of_mean(&labs) {
            Some((l, i)) => (Some(l), Some(i)),
            None => (None, None),
        };
        Ok(EnsemblePrediction { fitzpatrick: majority_vote(&votes), votes, lab, ita })
    }
}
