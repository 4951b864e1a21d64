//! Swatch grids: one row per entry, cells `[thumbnail] [reference] [predicted]`
//! for prediction files or a single swatch per row for raw Lab values.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use tonemeter_core::color::{lab_to_srgb, LabColor, SrgbColor};
use tonemeter_core::dataset::predictions::load_predictions;
use tonemeter_core::dataset::preprocess::resize_bilinear;
use tonemeter_core::dataset::resolve;
use tonemeter_core::image::RgbImage;
use tonemeter_core::dataset::ModalityFilter;
use tonemeter_core::pipeline::gather_inputs;

use crate::commands::CliError;
use crate::SwatchArgs;

/// Fill for cells with nothing to show.
const EMPTY: SrgbColor = SrgbColor::new(0.5, 0.5, 0.5);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwatchCell {
    pub lab: LabColor,
    pub rgb8: [u8; 3],
    /// Lab value was outside the sRGB gamut and got clamped.
    pub clamped: bool,
}

impl SwatchCell {
    pub fn new(lab: LabColor) -> Self {
        let mapped = lab_to_srgb(&lab);
        Self { lab, rgb8: mapped.color.to_u8(), clamped: mapped.clamped }
    }

    fn color(&self) -> SrgbColor {
        SrgbColor::from_array(self.rgb8.map(|v| v as f64 / 255.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwatchRow {
    pub label: String,
    pub reference: Option<SwatchCell>,
    pub predicted: Option<SwatchCell>,
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    cell: usize,
    columns: Vec<&'static str>,
    rows: &'a [SwatchRow],
    any_clamped: bool,
}

pub fn parse_lab(s: &str) -> Result<LabColor, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [l, a, b] => LabColor::checked(l, a, b).map_err(|e| format!("{s:?}: {e}")),
        _ => Err(format!("{s:?}: expected L,a,b")),
    }
}

/// Paints the grid; `thumbs` (if given) fills the first column.
pub fn render_grid(rows: &[SwatchRow], thumbs: Option<&[Option<RgbImage>]>, cell: usize) -> RgbImage {
    let lab_only = thumbs.is_none();
    let cols = if lab_only { 1 } else { 3 };
    let small: Vec<Option<RgbImage>> = thumbs
        .map(|t| t.iter().map(|i| i.as_ref().map(|im| resize_bilinear(im, cell, cell))).collect())
        .unwrap_or_default();
    RgbImage::from_fn(cols * cell, rows.len() * cell, |x, y| {
        let (r, c) = (y / cell, x / cell);
        let row = &rows[r];
        let cell_of = |s: &Option<SwatchCell>| s.as_ref().map_or(EMPTY, SwatchCell::color);
        match (lab_only, c) {
            (true, _) => cell_of(&row.predicted),
            (false, 0) => small[r].as_ref().map_or(EMPTY, |im| im.pixel(x % cell, y % cell)),
            (false, 1) => cell_of(&row.reference),
            _ => cell_of(&row.predicted),
        }
    })
}

pub fn run(a: &SwatchArgs) -> Result<(), CliError> {
    if a.cell == 0 {
        return Err(CliError::Validation(anyhow::anyhow!("--cell must be positive")));
    }
    let (rows, thumbs) = if let Some(pred_path) = &a.predictions {
        let preds = load_predictions(pred_path)?;
        let (refs, base): (BTreeMap<String, (Option<LabColor>, String)>, _) = match &a.manifest {
            Some(m) => {
                let set = gather_inputs(m, ModalityFilter::All)?;
                let base = m.parent().map(Path::to_path_buf).unwrap_or_default();
                let refs = set
                    .items
                    .into_iter()
                    .filter_map(|it| it.row.map(|r| (it.image_path, (r.colorimeter, r.image_path))))
                    .collect();
                (refs, Some(base))
            }
            None => (BTreeMap::new(), None),
        };
        let mut rows = Vec::new();
        let mut thumbs = Vec::new();
        for p in &preds {
            let reference = refs.get(&p.image_path).and_then(|(lab, _)| *lab);
            rows.push(SwatchRow {
                label: p.image_path.clone(),
                reference: reference.map(SwatchCell::new),
                predicted: p.pred_lab.map(SwatchCell::new),
            });
            let thumb = match &base {
                Some(b) => Some(
                    RgbImage::load_png(&resolve(b, &p.image_path))
                        .with_context(|| format!("loading {}", p.image_path))?,
                ),
                None => None,
            };
            thumbs.push(thumb);
        }
        (rows, Some(thumbs))
    } else {
        let rows = a
            .lab
            .iter()
            .map(|s| {
                let lab = parse_lab(s).map_err(|e| CliError::Validation(anyhow::anyhow!(e)))?;
                Ok(SwatchRow { label: s.clone(), reference: None, predicted: Some(SwatchCell::new(lab)) })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        (rows, None)
    };
    if rows.is_empty() {
        return Err(CliError::Validation(anyhow::anyhow!("nothing to draw: give --lab or a non-empty --predictions")));
    }
    let grid = render_grid(&rows, thumbs.as_deref(), a.cell);
    grid.save_png(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let sidecar = Sidecar {
        cell: a.cell,
        columns: if thumbs.is_some() { vec!["input", "reference", "predicted"] } else { vec!["swatch"] },
        any_clamped: rows.iter().flat_map(|r| [&r.reference, &r.predicted]).flatten().any(|c| c.clamped),
        rows: &rows,
    };
    let side = a.out.with_extension("json");
    std::fs::write(&side, serde_json::to_string_pretty(&sidecar).map_err(anyhow::Error::from)? + "\n")
        .with_context(|| format!("writing {}", side.display()))?;
    println!("wrote {} swatch row(s) to {}", rows.len(), a.out.display());
    Ok(())
}
