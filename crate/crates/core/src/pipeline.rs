//! Image-level inference shared by `estimate`, `eval` and `audit`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::color::{ita_to_band, ItaBands, LabColor};
use crate::dataset::manifest::{load_manifest, ManifestError, ManifestRow, Modality};
use crate::dataset::predictions::PredictionRow;
use crate::dataset::{resolve, ModalityFilter};
use crate::estimators::{kmeans_ita, patch_ita, shades_of_gray, EstimatorError};
use crate::image::{ImageError, PatchTensor};
use crate::nn::checkpoint::ModelCheckpoint;
use crate::nn::ensemble::{Ensemble, EnsembleError};
use crate::ordinal::Fitzpatrick;

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("{path}: {source}")]
    Image { path: String, source: ImageError },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Pixel baselines and the trained ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Kmeans { k: usize, seed: u64 },
    Patch { patch_size: usize, variance_cutoff: f64 },
    /// Fold ensemble; `checkpoints` holds SHA-256 hashes in load order.
    Network { checkpoints: Vec<String> },
}

/// Estimator plus pre-processing and reporting options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub estimator: EstimatorSpec,
    /// Shades-of-Gray order when white balancing is enabled.
    pub white_balance: Option<f64>,
    /// Maps ITA to a 1..6 band for estimators without a rank head.
    pub ita_bands: ItaBands,
}

#[derive(Debug, Clone)]
pub enum Estimator {
    Baseline(EstimatorConfig),
    Network { config: EstimatorConfig, ensemble: Box<Ensemble> },
}

impl Estimator {
    pub fn baseline(spec: EstimatorSpec, white_balance: Option<f64>, ita_bands: ItaBands) -> Self {
        Estimator::Baseline(EstimatorConfig { estimator: spec, white_balance, ita_bands })
    }

    pub fn network(
        checkpoints: Vec<ModelCheckpoint>,
        white_balance: Option<f64>,
        ita_bands: ItaBands,
    ) -> Result<Self, EnsembleError> {
        let hashes = checkpoints.iter().map(|c| c.sha256()).collect();
        let ensemble = Ensemble::from_checkpoints(checkpoints)?;
        Ok(Estimator::Network {
            config: EstimatorConfig {
                estimator: EstimatorSpec::Network { checkpoints: hashes },
                white_balance,
                ita_bands,
            },
            ensemble: Box::new(ensemble),
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        match self {
            Estimator::Baseline(c) => c,
            Estimator::Network { config, .. } => config,
        }
    }

    /// Same estimator with white balancing replaced.
    pub fn with_white_balance(&self, white_balance: Option<f64>) -> Self {
        let mut out = self.clone();
        match &mut out {
            Estimator::Baseline(c) => c.white_balance = white_balance,
            Estimator::Network { config, .. } => config.white_balance = white_balance,
        }
        out
    }

    /// Where predicted types come from: a rank head or the ITA bands.
    pub fn fitzpatrick_source(&self) -> &'static str {
        match self {
            Estimator::Network { ensemble, .. } if !ensemble.rank_models().is_empty() => "rank_head",
            _ => "ita_bands",
        }
    }

    pub fn estimate(&self, patch: &PatchTensor) -> Result<Estimate, EstimateFailure> {
        let cfg = self.config();
        let balanced;
        let patch = match cfg.white_balance {
            Some(p) => {
                balanced = shades_of_gray(patch, p).map_err(EstimateFailure::Estimator)?;
                &balanced.image
            }
            None => patch,
        };
        let (fp, lab) = match self {
            Estimator::Baseline(c) => {
                let r = match c.estimator {
                    EstimatorSpec::Kmeans { k, seed } => kmeans_ita(patch, k, seed),
                    EstimatorSpec::Patch { patch_size, variance_cutoff } => {
                        patch_ita(patch, patch_size, variance_cutoff)
                    }
                    EstimatorSpec::Network { .. } => unreachable!("baseline holds a network spec"),
                }
                .map_err(EstimateFailure::Estimator)?;
                (None, Some(r.lab))
            }
            Estimator::Network { ensemble, .. } => {
                let p = ensemble.predict(patch.image()).map_err(EstimateFailure::Ensemble)?;
                (p.fitzpatrick, p.lab)
            }
        };
        let ita = lab.map(|l| l.ita().0);
        let fitzpatrick = match fp {
            Some(r) => Fitzpatrick::from_rank(r).ok(),
            None => ita.map(|t| {
                Fitzpatrick::new(ita_to_band(crate::color::ItaDegrees(t), &cfg.ita_bands)).expect("band in 1..=6")
            }),
        };
        Ok(Estimate { fitzpatrick, lab, ita })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub fitzpatrick: Option<Fitzpatrick>,
    pub lab: Option<LabColor>,
    pub ita: Option<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum EstimateFailure {
    #[error(transparent)]
    Estimator(EstimatorError),
    #[error(transparent)]
    Ensemble(EnsembleError),
}

/// One image to run through an estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct InputItem {
    /// Path as written in the manifest (or relative to the scanned directory).
    pub image_path: String,
    pub subject_id: String,
    pub file: PathBuf,
    pub mask_file: Option<PathBuf>,
    pub row: Option<ManifestRow>,
}

impl InputItem {
    pub fn load(&self) -> Result<PatchTensor, PipelineError> {
        PatchTensor::load(&self.file, self.mask_file.as_deref())
            .map_err(|source| PipelineError::Image { path: self.image_path.clone(), source })
    }
}

/// Resolved input set with what is needed to describe it in a report.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSet {
    pub name: String,
    pub items: Vec<InputItem>,
    /// SHA-256 of the manifest file, when one was used.
    pub manifest_sha256: Option<String>,
    pub modality_filter: ModalityFilter,
}

pub fn sha256_file(path: &Path) -> Result<String, std::io::Error> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn items_from_manifest(rows: Vec<ManifestRow>, base: &Path, filter: ModalityFilter) -> Vec<InputItem> {
    let mut items: Vec<InputItem> = rows
        .into_iter()
        .filter(|r| filter.accepts(r.modality))
        .map(|r| InputItem {
            image_path: r.image_path.clone(),
            subject_id: r.subject_id.clone(),
            file: resolve(base, &r.image_path),
            mask_file: r.lesion_mask_path.as_deref().map(|m| resolve(base, m)),
            row: Some(r),
        })
        .collect();
    items.sort_by(|a, b| a.image_path.cmp(&b.image_path));
    items
}

/// Resolves a manifest file, a directory holding `manifest.csv`, or a plain
/// directory of PNG files (each file its own subject, treated as
/// dermatoscopic). Items are sorted by image path.
pub fn gather_inputs(path: &Path, filter: ModalityFilter) -> Result<InputSet, PipelineError> {
    let name = path
        .file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let manifest = if path.is_file() {
        Some(path.to_path_buf())
    } else if path.join(MANIFEST_FILE).is_file() {
        Some(path.join(MANIFEST_FILE))
    } else {
        None
    };
    if let Some(m) = manifest {
        let base = m.parent().map(Path::to_path_buf).unwrap_or_default();
        let rows = load_manifest(&m)?;
        let name = if path.is_dir() { name } else { base.file_name().map_or(name, |n| n.to_string_lossy().into_owned()) };
        return Ok(InputSet {
            name,
            items: items_from_manifest(rows, &base, filter),
            manifest_sha256: Some(sha256_file(&m)?),
            modality_filter: filter,
        });
    }
    let mut files: Vec<String> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|f| f.to_ascii_lowercase().ends_with(".png"))
        .collect();
    files.sort();
    let items = if filter.accepts(Modality::Dermatoscopic) {
        files
            .into_iter()
            .map(|f| InputItem {
                subject_id: f.rsplit_once('.').map_or(f.clone(), |(s, _)| s.to_string()),
                file: path.join(&f),
                mask_file: None,
                image_path: f,
                row: None,
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(InputSet { name, items, manifest_sha256: None, modality_filter: filter })
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Predicts every item in parallel; output order follows `items`. Images the
/// estimator cannot handle get empty prediction columns and are logged.
pub fn predict_items(items: &[InputItem], estimator: &Estimator) -> Result<Vec<PredictionRow>, PipelineError> {
    items
        .par_iter()
        .map(|it| {
            let patch = it.load()?;
            let est = match estimator.estimate(&patch) {
                Ok(e) => e,
                Err(e) => {
                    log::warn!("{}: no estimate ({e})", it.image_path);
                    Estimate { fitzpatrick: None, lab: None, ita: None }
                }
            };
            Ok(PredictionRow {
                image_path: it.image_path.clone(),
                subject_id: it.subject_id.clone(),
                pred_fp: est.fitzpatrick,
                pred_lab: est.lab,
                pred_ita: est.ita,
                fold: it.row.as_ref().and_then(|r| r.fold),
            })
        })
        .collect()
}
