//! Manifests, preprocessing, folds and label utilities.

pub mod folds;
pub mod labels;
pub mod manifest;
pub mod predictions;
pub mod preprocess;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use folds::{make_folds, split_validation, FoldAssignment, FoldError};
pub use labels::expand_grouped_labels;
pub use manifest::{
    load_manifest, write_manifest, FitzpatrickLabel, ManifestError, ManifestRow, Modality, Site,
};
pub use predictions::{load_predictions, write_predictions, PredictionRow};
pub use preprocess::{preprocess, NetInput, PreprocessConfig};

use crate::image::Mask;

/// Largest lesion-mask coverage for an image to count as normal skin.
pub const NORMAL_SKIN_MAX_COVERAGE: f64 = 0.01;

/// No mask, or a mask covering less than 1% of the pixels.
pub fn is_normal_skin(mask: Option<&Mask>) -> bool {
    mask.is_none_or(|m| m.coverage() < NORMAL_SKIN_MAX_COVERAGE)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityFilter {
    #[default]
    All,
    Dermatoscopic,
    Clinical,
}

impl ModalityFilter {
    pub fn accepts(self, m: Modality) -> bool {
        match self {
            ModalityFilter::All => true,
            ModalityFilter::Dermatoscopic => m == Modality::Dermatoscopic,
            ModalityFilter::Clinical => m == Modality::Clinical,
        }
    }

    pub fn apply(self, rows: &[ManifestRow]) -> Vec<ManifestRow> {
        rows.iter().filter(|r| self.accepts(r.modality)).cloned().collect()
    }
}

impl std::str::FromStr for ModalityFilter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Self::All),
            "dermatoscopic" => Ok(Self::Dermatoscopic),
            "clinical" => Ok(Self::Clinical),
            _ => Err(format!("unknown modality filter {s:?}")),
        }
    }
}

/// Resolves a manifest path relative to the manifest's directory.
pub fn resolve(manifest_dir: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_dir.join(p)
    }
}
