//! Prediction CSV: `image_path, subject_id, pred_fp, pred_L, pred_a, pred_b, pred_ita, fold`.
//! Any prediction column may be empty.

use std::io::{Read, Write};
use std::path::Path;

use super::manifest::{ManifestError, RowError};
use crate::color::LabColor;
use crate::ordinal::Fitzpatrick;

pub const PREDICTION_COLUMNS: [&str; 8] =
    ["image_path", "subject_id", "pred_fp", "pred_L", "pred_a", "pred_b", "pred_ita", "fold"];

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub image_path: String,
    pub subject_id: String,
    pub pred_fp: Option<Fitzpatrick>,
    pub pred_lab: Option<LabColor>,
    pub pred_ita: Option<f64>,
    pub fold: Option<u8>,
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_predictions_to<W: Write>(writer: W, rows: &[PredictionRow]) -> Result<(), ManifestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PREDICTION_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.image_path.clone(),
            r.subject_id.clone(),
            fmt_opt(r.pred_fp.map(|f| f.rank())),
            fmt_opt(r.pred_lab.map(|c| c.l)),
            fmt_opt(r.pred_lab.map(|c| c.a)),
            fmt_opt(r.pred_lab.map(|c| c.b)),
            fmt_opt(r.pred_ita),
            fmt_opt(r.fold),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<(), ManifestError> {
    write_predictions_to(std::fs::File::create(path)?, rows)
}

fn parse_f64(s: &str, name: &str, errs: &mut Vec<String>) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        _ => {
            errs.push(format!("{name}: invalid number {t:?}"));
            None
        }
    }
}

pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<PredictionRow>, ManifestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != PREDICTION_COLUMNS {
        return Err(ManifestError::Header {
            expected: PREDICTION_COLUMNS.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != PREDICTION_COLUMNS.len() {
            errors.push(RowError { line, message: format!("expected 8 fields, found {}", rec.len()) });
            continue;
        }
        let mut errs = Vec::new();
        let subject_id = rec[1].trim().to_string();
        if subject_id.is_empty() {
            errs.push("subject_id is empty".to_string());
        }
        let pred_fp = match rec[2].trim() {
            "" => None,
            t => match t.parse::<usize>().ok().and_then(|r| Fitzpatrick::from_rank(r).ok()) {
                Some(f) => Some(f),
                None => {
                    errs.push(format!("pred_fp: invalid rank {t:?}"));
                    None
                }
            },
        };
        let lab = [3, 4, 5].map(|i| parse_f64(&rec[i], PREDICTION_COLUMNS[i], &mut errs));
        let pred_lab = match lab {
            [Some(l), Some(a), Some(b)] => Some(LabColor::new(l, a, b)),
            [None, None, None] => None,
            _ => {
                if errs.is_empty() {
                    errs.push("pred_L/pred_a/pred_b must be all present or all absent".into());
                }
                None
            }
        };
        let pred_ita = parse_f64(&rec[6], "pred_ita", &mut errs);
        let fold = match rec[7].trim() {
            "" => None,
            t => match t.parse::<u8>() {
                Ok(f) => Some(f),
                Err(_) => {
                    errs.push(format!("fold: invalid {t:?}"));
                    None
                }
            },
        };
        if errs.is_empty() {
            rows.push(PredictionRow { image_path: rec[0].to_string(), subject_id, pred_fp, pred_lab, pred_ita, fold });
        } else {
            errors.extend(errs.into_iter().map(|message| RowError { line, message }));
        }
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(ManifestError::Rows(errors))
    }
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRow>, ManifestError> {
    read_predictions(std::fs::File::open(path)?)
}
