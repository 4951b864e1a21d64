use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;
use tonemeter_core::audit::run_audit;
use tonemeter_core::dataset::folds::{make_folds, FoldAssignment, FoldError, DEFAULT_FOLDS};
use tonemeter_core::dataset::manifest::{load_manifest, ManifestError};
use tonemeter_core::dataset::predictions::{load_predictions, write_predictions, PredictionRow};
use tonemeter_core::dataset::preprocess::PreprocessConfig;
use tonemeter_core::dataset::{expand_grouped_labels, is_normal_skin, resolve, ModalityFilter};
use tonemeter_core::eval::{all_site_strata, join_pairs, run_eval, EvalConfig};
use tonemeter_core::image::{ImageError, Mask, RgbImage};
use tonemeter_core::nn::checkpoint::{CheckpointError, ModelCheckpoint};
use tonemeter_core::nn::crossval::{cross_validate, output_lab, output_rank, CrossValConfig, LabeledImage};
use tonemeter_core::nn::ensemble::EnsembleError;
use tonemeter_core::nn::network::HeadKind;
use tonemeter_core::nn::train::{EpochRecord, TrainError};
use tonemeter_core::ordinal::Fitzpatrick;
use tonemeter_core::pipeline::{
    gather_inputs, predict_items, with_threads, Estimator, EstimatorSpec, PipelineError,
};
use tonemeter_core::stats::{
    continuous_reports, rating_reports, reports_to_csv, stratified, AgreementReport, BootstrapConfig,
    MetricFamily, StatsError, ALL_STRATA,
};
use tonemeter_core::synth::{generate_corpus, SynthDistribution, SynthError};

use crate::config::{Config, DEFAULT_VAL_FRACTION};
use crate::{
    AuditArgs, Cli, Command, EstimateArgs, EstimatorArgs, EstimatorKind, EvalArgs, HeadArg, StatsArgs, SynthArgs,
    TrainArgs,
};

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Invalid input or configuration (exit 2).
    Validation(anyhow::Error),
    /// A statistic is undefined on the given data (exit 3).
    Degenerate(anyhow::Error),
    Other(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (CliError::Validation(e) | CliError::Degenerate(e) | CliError::Other(e)) = self;
        if f.alternate() {
            write!(f, "{e:#}")
        } else {
            write!(f, "{e}")
        }
    }
}

fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<ManifestError>()
            || c.is::<FoldError>()
            || c.is::<toml::de::Error>()
            || c.is::<CheckpointError>()
            || c.is::<EnsembleError>()
            || c.is::<ImageError>()
            || matches!(c.downcast_ref::<SynthError>(), Some(SynthError::Param(_) | SynthError::Thresholds(_) | SynthError::Melanin(_)))
            || matches!(
                c.downcast_ref::<TrainError>(),
                Some(TrainError::EmptyTrain | TrainError::EmptyValidation | TrainError::Config(_))
            )
            || matches!(c.downcast_ref::<PipelineError>(), Some(PipelineError::Manifest(_) | PipelineError::Image { .. } | PipelineError::Ensemble(_)))
    })
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        let e = e.into();
        if e.chain().any(|c| c.downcast_ref::<StatsError>().is_some_and(StatsError::is_degenerate)) {
            CliError::Degenerate(e)
        } else if is_validation(&e) {
            CliError::Validation(e)
        } else {
            CliError::Other(e)
        }
    }
}

fn invalid(msg: impl fmt::Display) -> CliError {
    CliError::Validation(anyhow!("{msg}"))
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    let config = Config::load(cli.config.as_deref()).map_err(|e| CliError::Validation(e.context("reading --config")))?;
    match &cli.command {
        Command::Synth(a) => synth(cli, &config, a),
        Command::Train(a) => train(cli, &config, a),
        Command::Estimate(a) => estimate(cli, &config, a),
        Command::Eval(a) => eval(cli, &config, a),
        Command::Stats(a) => stats(cli, &config, a),
        Command::Audit(a) => audit(cli, &config, a),
        Command::Swatch(a) => crate::swatch::run(a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(())
}

fn modality(s: &str) -> Result<ModalityFilter> {
    s.parse().map_err(invalid)
}

#[derive(Serialize)]
struct SynthSummary<'a> {
    n: usize,
    subjects: usize,
    seed: u64,
    distribution: &'a SynthDistribution,
}

fn synth(cli: &Cli, config: &Config, a: &SynthArgs) -> Result<()> {
    let mut dist = config.synth.clone();
    if let Some(k) = a.images_per_subject {
        dist.images_per_subject = k;
    }
    if let Some(s) = a.size {
        dist.size = s;
    }
    if let Some(p) = a.lesion_probability {
        dist.lesion_probability = p;
    }
    if a.identity_illumination {
        dist.gain = (1.0, 1.0);
        dist.max_ramp = 0.0;
        dist.cast_strength = 0.0;
    }
    dist.validate()?;
    create_dir(&a.out)?;
    let rows = with_threads(cli.threads, || generate_corpus(&a.out, a.n, &dist, cli.seed))??;
    let subjects = rows.iter().map(|r| r.subject_id.as_str()).collect::<std::collections::BTreeSet<_>>().len();
    write_json(&a.out.join("synth.json"), &SynthSummary { n: rows.len(), subjects, seed: cli.seed, distribution: &dist })?;
    println!("wrote {} images from {subjects} subjects to {}", rows.len(), a.out.display());
    Ok(())
}

fn head_kind(h: HeadArg) -> HeadKind {
    match h {
        HeadArg::Ordinal => HeadKind::Ordinal,
        HeadArg::Softmax => HeadKind::Classification,
        HeadArg::Lab => HeadKind::LabRegression,
    }
}

#[derive(Serialize)]
struct FoldSummary<'a> {
    fold: u8,
    checkpoint: String,
    sha256: String,
    best_epoch: usize,
    epochs_run: usize,
    stopped_early: bool,
    train_subjects: &'a [String],
    val_subjects: &'a [String],
    history: &'a [EpochRecord],
}

#[derive(Serialize)]
struct TrainReport<'a> {
    seed: u64,
    config: &'a CrossValConfig,
    manifest_sha256: String,
    n_images: usize,
    n_supervised: usize,
    folds: Vec<FoldSummary<'a>>,
}

fn train(cli: &Cli, config: &Config, a: &TrainArgs) -> Result<()> {
    let head = head_kind(a.head);
    let filter = modality(&a.modality)?;
    let n_folds = a.folds.or(config.train.folds).unwrap_or(DEFAULT_FOLDS);
    let rows = filter.apply(&load_manifest(&a.manifest)?);
    let rows = expand_grouped_labels(&rows, cli.seed);
    let folds = match FoldAssignment::from_manifest(&rows, n_folds)? {
        Some(f) => f,
        None => make_folds(&rows, n_folds, cli.seed)?,
    };
    let base = a.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let items: Vec<LabeledImage> = with_threads(cli.threads, || {
        use rayon::prelude::*;
        rows.par_iter()
            .map(|r| -> anyhow::Result<LabeledImage> {
                let image = RgbImage::load_png(&resolve(&base, &r.image_path))
                    .with_context(|| format!("loading {}", r.image_path))?;
                let mask = match &r.lesion_mask_path {
                    Some(m) => Some(Mask::load_png(&resolve(&base, m)).with_context(|| format!("loading {m}"))?),
                    None => None,
                };
                Ok(LabeledImage {
                    subject_id: r.subject_id.clone(),
                    image,
                    fitzpatrick: r.fitzpatrick.and_then(|l| l.single()),
                    // Lab supervision only from normal skin
                    lab: r.colorimeter.filter(|_| is_normal_skin(mask.as_ref())),
                })
            })
            .collect::<anyhow::Result<_>>()
    })??;
    let network = config.network.build(head, cli.seed);
    let cv = CrossValConfig {
        preprocess: PreprocessConfig::imagenet(network.input_size),
        network,
        train: config.train.build(head, cli.seed),
        val_fraction: config.train.val_fraction.unwrap_or(DEFAULT_VAL_FRACTION),
    };
    let n_supervised = items.iter().filter(|it| cv.target_of(it).is_some()).count();
    if n_supervised == 0 {
        return Err(invalid(format!("no images carry a target for the {:?} head", head)));
    }
    let outcome = with_threads(cli.threads, || cross_validate(&items, &folds, &cv))??;

    create_dir(&a.out)?;
    let mut summaries = Vec::new();
    for m in &outcome.models {
        let file = format!("fold{}.ckpt", m.fold);
        m.outcome.checkpoint.save(&a.out.join(&file))?;
        summaries.push(FoldSummary {
            fold: m.fold,
            sha256: m.outcome.checkpoint.sha256(),
            checkpoint: file,
            best_epoch: m.outcome.best_epoch,
            epochs_run: m.outcome.history.len(),
            stopped_early: m.outcome.stopped_early,
            train_subjects: &m.train_subjects,
            val_subjects: &m.val_subjects,
            history: &m.outcome.history,
        });
    }
    write_json(&a.out.join("folds.json"), &folds)?;
    let oof: Vec<PredictionRow> = rows
        .iter()
        .zip(&outcome.oof)
        .map(|(r, out)| {
            let rank = out.as_ref().and_then(|o| output_rank(head, o));
            let lab = out.as_ref().and_then(|o| output_lab(head, o));
            PredictionRow {
                image_path: r.image_path.clone(),
                subject_id: r.subject_id.clone(),
                pred_fp: rank.and_then(|k| Fitzpatrick::from_rank(k).ok()),
                pred_lab: lab,
                pred_ita: lab.map(|l| l.ita().0),
                fold: folds.fold_of(&r.subject_id),
            }
        })
        .collect();
    write_predictions(&a.out.join("oof_predictions.csv"), &oof)?;
    let manifest_sha256 = tonemeter_core::pipeline::sha256_file(&a.manifest).map_err(anyhow::Error::from)?;
    write_json(
        &a.out.join("train_report.json"),
        &TrainReport { seed: cli.seed, config: &cv, manifest_sha256, n_images: rows.len(), n_supervised, folds: summaries },
    )?;
    println!("trained {} fold model(s) into {}", outcome.models.len(), a.out.display());
    Ok(())
}

fn checkpoint_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "ckpt"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn build_estimator(cli: &Cli, config: &Config, a: &EstimatorArgs) -> Result<Estimator> {
    let cfg = &config.estimator;
    let wb = a.white_balance.then_some(cfg.white_balance_order);
    match a.estimator {
        EstimatorKind::Network => {
            let files = checkpoint_files(&a.checkpoints)?;
            if files.is_empty() {
                return Err(invalid("the network estimator needs --checkpoints"));
            }
            let ckpts = files
                .iter()
                .map(|f| ModelCheckpoint::load(f).with_context(|| format!("loading {}", f.display())))
                .collect::<anyhow::Result<Vec<_>>>()?;
            Ok(Estimator::network(ckpts, wb, cfg.ita_bands.clone())?)
        }
        EstimatorKind::Kmeans => {
            Ok(Estimator::baseline(EstimatorSpec::Kmeans { k: cfg.k, seed: cli.seed }, wb, cfg.ita_bands.clone()))
        }
        EstimatorKind::Patch => Ok(Estimator::baseline(
            EstimatorSpec::Patch { patch_size: cfg.patch_size, variance_cutoff: cfg.variance_cutoff },
            wb,
            cfg.ita_bands.clone(),
        )),
    }
}

fn estimate(cli: &Cli, config: &Config, a: &EstimateArgs) -> Result<()> {
    let set = gather_inputs(&a.input, modality(&a.estimator.modality)?)?;
    let est = build_estimator(cli, config, &a.estimator)?;
    let preds = with_threads(cli.threads, || predict_items(&set.items, &est))??;
    write_predictions(&a.out, &preds)?;
    println!("wrote {} predictions to {}", preds.len(), a.out.display());
    Ok(())
}

fn bootstrap_config(arg: Option<usize>, config: &Config, level: Option<f64>, seed: u64) -> Option<BootstrapConfig> {
    let resamples = arg.unwrap_or(config.stats.bootstrap);
    (resamples > 0).then_some(BootstrapConfig { resamples, level: level.unwrap_or(config.stats.level), seed })
}

fn eval(cli: &Cli, config: &Config, a: &EvalArgs) -> Result<()> {
    let set = gather_inputs(&a.manifest, modality(&a.estimator.modality)?)?;
    let est = build_estimator(cli, config, &a.estimator)?;
    let cfg = EvalConfig {
        bootstrap: bootstrap_config(a.bootstrap, config, None, cli.seed),
        white_balance_ablation: a.white_balance_ablation,
    };
    let (report, preds) = run_eval(&set, &est, &cfg, cli.threads)?;
    create_dir(&a.out)?;
    write_text(&a.out.join("eval_report.json"), &report.to_json())?;
    let all: Vec<AgreementReport> = report.reports().cloned().collect();
    write_text(&a.out.join("agreement.csv"), &reports_to_csv(&all))?;
    write_predictions(&a.out.join("predictions.csv"), &preds)?;
    if let Some(ab) = &report.white_balance_ablation {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fitzpatrick", "n", "bias_without", "bias_with"]).map_err(anyhow::Error::from)?;
        for r in &ab.rows {
            let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([r.fitzpatrick.to_string(), r.n.to_string(), o(r.bias_without), o(r.bias_with)])
                .map_err(anyhow::Error::from)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow!("{e}"))?;
        write_text(&a.out.join("wb_ablation.csv"), &String::from_utf8_lossy(&bytes))?;
    }
    println!("evaluated {} images into {}", report.n_images, a.out.display());
    Ok(())
}

fn stats(cli: &Cli, config: &Config, a: &StatsArgs) -> Result<()> {
    let family: MetricFamily = a.metric.parse().map_err(invalid)?;
    let strata = match a.by.as_deref() {
        None => None,
        Some("site") => Some(all_site_strata()),
        Some(other) => return Err(invalid(format!("unsupported --by {other:?} (only `site`)"))),
    };
    let set = gather_inputs(&a.manifest, ModalityFilter::All)?;
    let preds = load_predictions(&a.predictions)?;
    let (ratings, continuous) = join_pairs(&set, &preds);
    let boot = bootstrap_config(a.bootstrap, config, a.level, cli.seed);
    let strata = strata.unwrap_or_default();
    let mut reports = Vec::new();
    if family.is_categorical() {
        let groups = stratified(&ratings, &strata);
        let groups = if a.by.is_none() { &groups[..1] } else { &groups[..] };
        for (s, g) in groups {
            reports.extend(rating_reports(family, g, s, boot.as_ref()));
        }
    } else {
        let groups = stratified(&continuous, &strata);
        let groups = if a.by.is_none() { &groups[..1] } else { &groups[..] };
        for (s, g) in groups {
            reports.extend(continuous_reports(family, g, s, boot.as_ref()));
        }
    }
    if a.out.extension().is_some_and(|e| e == "csv") {
        write_text(&a.out, &reports_to_csv(&reports))?;
    } else {
        write_json(&a.out, &reports)?;
    }
    if let Some(r) = reports.iter().find(|r| r.stratum == ALL_STRATA && r.is_degenerate()) {
        return Err(CliError::Degenerate(anyhow!(
            "{} is undefined on this data: {}",
            r.metric,
            r.note.as_deref().unwrap_or("degenerate")
        )));
    }
    println!("wrote {} report(s) to {}", reports.len(), a.out.display());
    Ok(())
}

fn audit(cli: &Cli, config: &Config, a: &AuditArgs) -> Result<()> {
    let mut spec = config.audit;
    if let Some(v) = a.hist_lo {
        spec.lo = v;
    }
    if let Some(v) = a.hist_hi {
        spec.hi = v;
    }
    if let Some(v) = a.hist_width {
        spec.width = v;
    }
    spec.validate().map_err(invalid)?;
    let set = gather_inputs(&a.input, modality(&a.estimator.modality)?)?;
    let est = build_estimator(cli, config, &a.estimator)?;
    let (report, preds) = run_audit(&set, &est, &spec, cli.threads, cli.seed)?;
    create_dir(&a.out)?;
    write_text(&a.out.join("audit.json"), &report.to_json())?;
    write_text(&a.out.join("composition.csv"), &report.composition_csv())?;
    write_text(&a.out.join("histogram.csv"), &report.histogram_csv())?;
    write_predictions(&a.out.join("predictions.csv"), &preds)?;
    println!(
        "audited {} images: {:.2}% predicted as types V-VI; report in {}",
        report.n_images,
        report.dark_share(),
        a.out.display()
    );
    Ok(())
}
