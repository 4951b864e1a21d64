//! Manifest CSV: one row per image.
//!
//! Columns, in this exact order:
//!
//! | column            | content                                                   |
//! |-------------------|-----------------------------------------------------------|
//! | `image_path`      | image file, relative to the manifest's directory          |
//! | `subject_id`      | non-empty subject identifier                              |
//! | `site`            | anatomical site (see [`Site`]) or empty                   |
//! | `modality`        | `dermatoscopic` or `clinical`                             |
//! | `fitzpatrick`     | `1`..`6`, `I`..`VI`, a group `I-II`/`III-IV`/`V-VI`, or empty |
//! | `colorimeter_L`   | mean colorimeter L*; the three Lab columns are all set or all empty |
//! | `colorimeter_a`   | mean colorimeter a*                                       |
//! | `colorimeter_b`   | mean colorimeter b*                                       |
//! | `lesion_mask_path`| optional mask PNG (nonzero = lesion)                      |
//! | `fold`            | optional fold index `0..=4`                               |

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::LabColor;
use crate::ordinal::Fitzpatrick;

pub const MANIFEST_COLUMNS: [&str; 10] = [
    "image_path",
    "subject_id",
    "site",
    "modality",
    "fitzpatrick",
    "colorimeter_L",
    "colorimeter_a",
    "colorimeter_b",
    "lesion_mask_path",
    "fold",
];

pub const MAX_FOLDS: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("{} invalid row(s): {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Rows(Vec<RowError>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Site {
    #[serde(rename = "anterior torso")]
    AnteriorTorso,
    #[serde(rename = "posterior torso")]
    PosteriorTorso,
    #[serde(rename = "lateral torso")]
    LateralTorso,
    #[serde(rename = "upper extremity")]
    UpperExtremity,
    #[serde(rename = "lower extremity")]
    LowerExtremity,
    #[serde(rename = "head/neck")]
    HeadNeck,
    #[serde(rename = "palms/soles")]
    PalmsSoles,
}

impl Site {
    pub const ALL: [Site; 7] = [
        Site::AnteriorTorso,
        Site::PosteriorTorso,
        Site::LateralTorso,
        Site::UpperExtremity,
        Site::LowerExtremity,
        Site::HeadNeck,
        Site::PalmsSoles,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Site::AnteriorTorso => "anterior torso",
            Site::PosteriorTorso => "posterior torso",
            Site::LateralTorso => "lateral torso",
            Site::UpperExtremity => "upper extremity",
            Site::LowerExtremity => "lower extremity",
            Site::HeadNeck => "head/neck",
            Site::PalmsSoles => "palms/soles",
        }
    }
}

impl FromStr for Site {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Site::ALL
            .into_iter()
            .find(|site| site.as_str() == s)
            .ok_or_else(|| format!("unknown site {s:?}"))
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Dermatoscopic,
    Clinical,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Dermatoscopic => "dermatoscopic",
            Modality::Clinical => "clinical",
        }
    }
}

impl FromStr for Modality {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dermatoscopic" => Ok(Modality::Dermatoscopic),
            "clinical" => Ok(Modality::Clinical),
            _ => Err(format!("unknown modality {s:?}")),
        }
    }
}

/// A single Fitzpatrick type or one of the grouped classes I–II, III–IV, V–VI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitzpatrickLabel {
    Single(Fitzpatrick),
    /// Inclusive rank range, e.g. `(1, 2)` for I–II.
    Grouped(u8, u8),
}

impl FitzpatrickLabel {
    pub fn single(self) -> Option<Fitzpatrick> {
        match self {
            FitzpatrickLabel::Single(f) => Some(f),
            FitzpatrickLabel::Grouped(..) => None,
        }
    }
}

fn roman_or_digit(s: &str) -> Option<u8> {
    match s {
        "1" | "I" => Some(1),
        "2" | "II" => Some(2),
        "3" | "III" => Some(3),
        "4" | "IV" => Some(4),
        "5" | "V" => Some(5),
        "6" | "VI" => Some(6),
        _ => None,
    }
}

impl FromStr for FitzpatrickLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Some(r) = roman_or_digit(t) {
            return Ok(FitzpatrickLabel::Single(Fitzpatrick::new(r).expect("1..=6")));
        }
        let parts: Vec<&str> = t.split(['-', '–']).collect();
        if let [lo, hi] = parts[..] {
            if let (Some(lo), Some(hi)) = (roman_or_digit(lo.trim()), roman_or_digit(hi.trim())) {
                if matches!((lo, hi), (1, 2) | (3, 4) | (5, 6)) {
                    return Ok(FitzpatrickLabel::Grouped(lo, hi));
                }
            }
        }
        Err(format!("unknown Fitzpatrick label {s:?}"))
    }
}

impl fmt::Display for FitzpatrickLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitzpatrickLabel::Single(x) => write!(f, "{}", x.rank()),
            FitzpatrickLabel::Grouped(lo, hi) => {
                let r = |v: u8| Fitzpatrick::new(v).expect("1..=6").roman();
                write!(f, "{}-{}", r(*lo), r(*hi))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub image_path: String,
    pub subject_id: String,
    pub site: Option<Site>,
    pub modality: Modality,
    pub fitzpatrick: Option<FitzpatrickLabel>,
    /// Mean of the triplicate colorimeter readings.
    pub colorimeter: Option<LabColor>,
    pub lesion_mask_path: Option<String>,
    pub fold: Option<u8>,
}

impl ManifestRow {
    pub fn new(image_path: impl Into<String>, subject_id: impl Into<String>) -> Self {
        Self {
            image_path: image_path.into(),
            subject_id: subject_id.into(),
            site: None,
            modality: Modality::Dermatoscopic,
            fitzpatrick: None,
            colorimeter: None,
            lesion_mask_path: None,
            fold: None,
        }
    }
}

fn opt(s: &str) -> Option<&str> {
    let t = s.trim();
    (!t.is_empty()).then_some(t)
}

fn parse_row(rec: &csv::StringRecord) -> Result<ManifestRow, Vec<String>> {
    let mut errs = Vec::new();
    let field = |i: usize| rec.get(i).unwrap_or("");
    let image_path = field(0).to_string();
    if image_path.trim().is_empty() {
        errs.push("image_path is empty".to_string());
    }
    let subject_id = field(1).trim().to_string();
    if subject_id.is_empty() {
        errs.push("subject_id is empty".to_string());
    }
    let site = opt(field(2)).map(Site::from_str).transpose().unwrap_or_else(|e| {
        errs.push(e);
        None
    });
    let modality = Modality::from_str(field(3).trim()).unwrap_or_else(|e| {
        errs.push(e);
        Modality::Dermatoscopic
    });
    let fitzpatrick = opt(field(4)).map(FitzpatrickLabel::from_str).transpose().unwrap_or_else(|e| {
        errs.push(e);
        None
    });
    let lab_raw = [field(5), field(6), field(7)].map(opt);
    let colorimeter = match lab_raw {
        [None, None, None] => None,
        [Some(l), Some(a), Some(b)] => {
            let parsed: Result<Vec<f64>, _> = [l, a, b].iter().map(|v| v.parse::<f64>()).collect();
            match parsed {
                Ok(v) => match LabColor::checked(v[0], v[1], v[2]) {
                    Ok(c) => Some(c),
                    Err(e) => {
                        errs.push(format!("colorimeter: {e}"));
                        None
                    }
                },
                Err(e) => {
                    errs.push(format!("colorimeter value: {e}"));
                    None
                }
            }
        }
        _ => {
            let missing: Vec<&str> = lab_raw
                .iter()
                .zip(&MANIFEST_COLUMNS[5..8])
                .filter(|(v, _)| v.is_none())
                .map(|(_, name)| *name)
                .collect();
            errs.push(format!("colorimeter Lab must be all present or all absent; missing {missing:?}"));
            None
        }
    };
    let lesion_mask_path = opt(field(8)).map(str::to_string);
    let fold = match opt(field(9)) {
        None => None,
        Some(v) => match v.parse::<u8>() {
            Ok(f) if f < MAX_FOLDS => Some(f),
            _ => {
                errs.push(format!("fold {v:?} not in 0..={}", MAX_FOLDS - 1));
                None
            }
        },
    };
    if errs.is_empty() {
        Ok(ManifestRow { image_path, subject_id, site, modality, fitzpatrick, colorimeter, lesion_mask_path, fold })
    } else {
        Err(errs)
    }
}

/// Reads and strictly validates a manifest; every invalid row is reported.
pub fn read_manifest<R: Read>(reader: R) -> Result<Vec<ManifestRow>, ManifestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let found: Vec<String> = headers.iter().map(str::to_string).collect();
    if found != MANIFEST_COLUMNS {
        return Err(ManifestError::Header {
            expected: MANIFEST_COLUMNS.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != MANIFEST_COLUMNS.len() {
            errors.push(RowError {
                line,
                message: format!("expected {} fields, found {}", MANIFEST_COLUMNS.len(), rec.len()),
            });
            continue;
        }
        match parse_row(&rec) {
            Ok(r) => rows.push(r),
            Err(msgs) => errors.extend(msgs.into_iter().map(|message| RowError { line, message })),
        }
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(ManifestError::Rows(errors))
    }
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRow>, ManifestError> {
    read_manifest(std::fs::File::open(path)?)
}

pub fn write_manifest_to<W: Write>(writer: W, rows: &[ManifestRow]) -> Result<(), ManifestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MANIFEST_COLUMNS)?;
    for r in rows {
        let lab = r.colorimeter.map(|c| [c.l, c.a, c.b].map(|v| v.to_string()));
        let lab_field = |i: usize| lab.as_ref().map(|v| v[i].clone()).unwrap_or_default();
        w.write_record([
            r.image_path.clone(),
            r.subject_id.clone(),
            r.site.map(|s| s.as_str().to_string()).unwrap_or_default(),
            r.modality.as_str().to_string(),
            r.fitzpatrick.map(|f| f.to_string()).unwrap_or_default(),
            lab_field(0),
            lab_field(1),
            lab_field(2),
            r.lesion_mask_path.clone().unwrap_or_default(),
            r.fold.map(|f| f.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), ManifestError> {
    write_manifest_to(std::fs::File::create(path)?, rows)
}
