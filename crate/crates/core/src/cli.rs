//! Command-line front end: config files, dotted overrides, subcommands and
//! exit codes.
//!
//! Every command resolves one [`CliConfig`] (file, then `--seed`,
//! `--output-dir` and `--override` in that order), writes it to
//! `effective_config.json` in the output directory and only writes below
//! that directory. Feeding the effective config back in reproduces the run.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::manifest::{read_manifest, MANIFEST_FILE};
use crate::data::{
    load_dataset, load_pfm, make_domains, save_pfm, write_dataset, DatasetHandle, DomainConfig, Domains,
};
use crate::distill::{
    predict_dataset, run_study, sweep_curve, sweep_shape, train_student, train_student_with_teacher, train_teacher,
    write_curve_csv, ExperimentConfig, Mode, Setting, SettingSummary, StudyConfig, TrainReport, TrainingSets,
};
use crate::error::{Error, Result};
use crate::losses::{AuxWeighting, KdWeight};
use crate::metrics::{
    depth_histogram, histogram_similarity, DepthHistogram, HistogramBins, MetricAccumulator, MetricReport,
};
use crate::nn::{load_checkpoint, save_checkpoint, DepthNet, ModelConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.json";

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Which auxiliary pool a distillation run draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxSource {
    #[default]
    Matched,
    Ood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default)]
    pub lambda: KdWeight,
    #[serde(default)]
    pub aux_weighting: AuxWeighting,
    pub epochs: usize,
    pub lr0: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub lr_drop_every: usize,
    pub lr_drop_to: f64,
    pub batch_size: usize,
    pub held_out_fraction: f64,
    /// Seeds of matrix and sweep runs; single runs use the first.
    pub seeds: Vec<u64>,
    pub sweep_multiples: Vec<f64>,
    #[serde(default)]
    pub auxiliary: AuxSource,
    #[serde(default)]
    pub histogram: HistogramBins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub schema: u32,
    pub data: DomainConfig,
    pub teacher: ModelConfig,
    pub student: ModelConfig,
    pub train: TrainSection,
    pub mode: Mode,
    pub output_dir: PathBuf,
}

impl Default for CliConfig {
    fn default() -> Self {
        let study = StudyConfig::default();
        let e = study.experiment;
        CliConfig {
            schema: SCHEMA_VERSION,
            data: study.domains,
            teacher: e.teacher,
            student: e.student,
            train: TrainSection {
                lambda: e.lambda,
                aux_weighting: e.aux_weighting,
                epochs: e.epochs,
                lr0: e.lr0,
                weight_decay: e.weight_decay,
                betas: e.betas,
                lr_drop_every: e.lr_drop_every,
                lr_drop_to: e.lr_drop_to,
                batch_size: e.batch_size,
                held_out_fraction: study.held_out_fraction,
                seeds: study.seeds,
                sweep_multiples: study.sweep_multiples,
                auxiliary: AuxSource::Matched,
                histogram: HistogramBins::default(),
            },
            mode: e.mode,
            output_dir: PathBuf::from("litedepth-out"),
        }
    }
}

impl CliConfig {
    pub fn from_value(value: Value) -> Result<Self> {
        let schema = value.get("schema").and_then(Value::as_u64);
        if schema != Some(SCHEMA_VERSION as u64) {
            return Err(Error::Config(format!(
                "unsupported config schema {}; expected {SCHEMA_VERSION}",
                value.get("schema").map_or("<missing>".to_string(), Value::to_string)
            )));
        }
        let cfg: CliConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.study().validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_value(value)
    }

    /// The config with `overrides` (`a.b.c=VALUE`) applied. Values parse as
    /// JSON and fall back to plain strings; every path must already exist.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn seed(&self) -> u64 {
        self.train.seeds.first().copied().unwrap_or(0)
    }

    pub fn experiment(&self, seed: u64) -> ExperimentConfig {
        let t = &self.train;
        ExperimentConfig {
            mode: self.mode,
            teacher: self.teacher.clone(),
            student: self.student.clone(),
            lambda: t.lambda,
            aux_weighting: t.aux_weighting,
            epochs: t.epochs,
            lr0: t.lr0,
            weight_decay: t.weight_decay,
            betas: t.betas,
            lr_drop_every: t.lr_drop_every,
            lr_drop_to: t.lr_drop_to,
            batch_size: t.batch_size,
            seed,
        }
    }

    pub fn study(&self) -> StudyConfig {
        StudyConfig {
            domains: self.data.clone(),
            held_out_fraction: self.train.held_out_fraction,
            experiment: self.experiment(self.seed()),
            seeds: self.train.seeds.clone(),
            sweep_multiples: self.train.sweep_multiples.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not KEY=VALUE")))?;
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("override key `{key}` does not exist")))?;
    }
    *node = new;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(
    name = "litedepth",
    version,
    about = "Compact depth networks and distillation with auxiliary data"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config file; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Replaces the seed list with this single seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Where outputs go; overrides `output_dir` of the config.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Dotted-path override, e.g. `train.epochs=5`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelRole {
    Teacher,
    Student,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the original, auxiliary and out-of-domain datasets to disk.
    Generate,
    /// Supervised training of a teacher or student on the original set.
    Train {
        #[arg(long, value_enum, default_value = "teacher")]
        model: ModelRole,
    },
    /// Train the student in the configured mode against a teacher checkpoint.
    Distill {
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Score a directory of predicted PFM maps against a dataset manifest.
    Evaluate {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gt_manifest: PathBuf,
    },
    /// Depth histograms of the generated domains, or of given manifests.
    Histogram {
        #[arg(long = "manifest")]
        manifests: Vec<PathBuf>,
    },
    /// Both teachers, the supervised student and KD settings 1 to 4.
    Matrix {
        /// Also run imitation on the out-of-domain set.
        #[arg(long)]
        ood: bool,
    },
    /// Setting 3 over the configured auxiliary sizes.
    Sweep,
}

/// Maps an error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::NonFinite(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Machine-readable error document printed on failure.
pub fn error_json(err: &Error) -> Value {
    let kind = match err {
        Error::Config(_) | Error::InvalidArgument(_) => "config",
        Error::NonFinite(_) => "numeric",
        Error::UnlabeledAccess(_) | Error::UnexpectedGroundTruth => "contract",
        _ => "data",
    };
    serde_json::json!({ "error": kind, "message": err.to_string(), "exit_code": exit_code(err) })
}

/// Builds the effective config from the common flags.
pub fn resolve_config(common: &CommonArgs) -> Result<CliConfig> {
    let mut cfg = match &common.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seeds = vec![seed];
    }
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    cfg.with_overrides(&common.overrides)
}

/// Runs a parsed command line; returns the JSON summary also printed to
/// stdout by the binary.
pub fn run(cli: &Cli) -> Result<Value> {
    let cfg = resolve_config(&cli.common)?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    cfg.write(&out.join(EFFECTIVE_CONFIG_FILE))?;
    match &cli.command {
        Command::Generate => cmd_generate(&cfg, &out),
        Command::Train { model } => cmd_train(&cfg, &out, *model),
        Command::Distill { teacher } => cmd_distill(&cfg, &out, teacher.as_deref()),
        Command::Evaluate { pred_dir, gt_manifest } => cmd_evaluate(&out, pred_dir, gt_manifest),
        Command::Histogram { manifests } => cmd_histogram(&cfg, &out, manifests),
        Command::Matrix { ood } => {
            let mut settings = Setting::MATRIX.to_vec();
            if *ood {
                settings.push(Setting::KdOod);
            }
            cmd_study(&cfg, &out, "matrix", &settings)
        }
        Command::Sweep => cmd_study(&cfg, &out, "sweep", &cfg.study().sweep_settings()),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            EXIT_OK
        }
        Err(err) => {
            eprintln!("{}", error_json(&err));
            exit_code(&err)
        }
    }
}

const DATASET_DIRS: [&str; 5] = ["train", "held_out", "auxiliary", "auxiliary_labeled", "ood"];

struct Prepared {
    domains: Domains,
    sets: TrainingSets,
}

fn prepare(cfg: &CliConfig, seed: u64) -> Result<Prepared> {
    let domains = make_domains(&cfg.data, seed)?;
    let (train, held_out) = domains.original.split(cfg.train.held_out_fraction, seed)?;
    Ok(Prepared {
        sets: TrainingSets::new(train, held_out),
        domains,
    })
}

fn cmd_generate(cfg: &CliConfig, out: &Path) -> Result<Value> {
    let p = prepare(cfg, cfg.seed())?;
    let sets: [&DatasetHandle; 5] = [
        &p.sets.original,
        &p.sets.held_out,
        &p.domains.auxiliary,
        &p.domains.auxiliary_labeled,
        &p.domains.ood,
    ];
    let mut counts = serde_json::Map::new();
    for (name, ds) in DATASET_DIRS.iter().zip(sets) {
        let entries = write_dataset(ds, out.join(name))?;
        counts.insert(name.to_string(), entries.len().into());
    }
    Ok(serde_json::json!({ "command": "generate", "seed": cfg.seed(), "samples": counts }))
}

/// Writes held-out predictions next to the held-out ground truth so that
/// `evaluate` can score them from disk.
fn write_predictions(net: &DepthNet<f32>, held_out: &DatasetHandle, out: &Path, name: &str) -> Result<PathBuf> {
    let gt_dir = out.join("held_out");
    if !gt_dir.join(MANIFEST_FILE).exists() {
        write_dataset(held_out, &gt_dir)?;
    }
    let dir = out.join(format!("{name}_predictions"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let preds = predict_dataset(net, held_out, 32)?;
    for (i, pred) in preds.iter().enumerate() {
        save_pfm(pred, dir.join(format!("depth_{i:05}.pfm")))?;
    }
    Ok(dir)
}

fn finish_run(
    net: &DepthNet<f32>,
    report: &TrainReport,
    held_out: &DatasetHandle,
    out: &Path,
    name: &str,
) -> Result<Value> {
    let ckpt = out.join(format!("{name}.ckpt"));
    save_checkpoint(net, &ckpt)?;
    report.write_json(&out.join(format!("{name}_report.json")))?;
    let preds = write_predictions(net, held_out, out, name)?;
    Ok(serde_json::json!({
        "checkpoint": ckpt,
        "predictions": preds,
        "final_metrics": report.final_metrics,
    }))
}

fn cmd_train(cfg: &CliConfig, out: &Path, model: ModelRole) -> Result<Value> {
    let seed = cfg.seed();
    let p = prepare(cfg, seed)?;
    let exp = cfg.experiment(seed).with_mode(Mode::Supervised);
    let (name, (net, report)) = match model {
        ModelRole::Teacher => ("teacher", train_teacher(&exp, &p.sets)?),
        ModelRole::Student => ("student", train_student(&exp, &p.sets, None)?),
    };
    let mut summary = finish_run(&net, &report, &p.sets.held_out, out, name)?;
    summary["command"] = "train".into();
    Ok(summary)
}

fn cmd_distill(cfg: &CliConfig, out: &Path, teacher: Option<&Path>) -> Result<Value> {
    let seed = cfg.seed();
    let exp = cfg.experiment(seed);
    let teacher_net = match (exp.mode.uses_teacher(), teacher) {
        (true, Some(path)) => Some(load_checkpoint::<f32>(path)?),
        (true, None) => {
            return Err(Error::Config(format!(
                "mode {:?} distills from a teacher; pass --teacher PATH",
                exp.mode
            )))
        }
        (false, _) => None,
    };
    let p = prepare(cfg, seed)?;
    let aux = match (exp.mode, cfg.train.auxiliary) {
        (Mode::Supervised | Mode::KdStandard, _) => None,
        (Mode::KdMixedLabeled, AuxSource::Matched) => Some(p.domains.auxiliary_labeled.clone()),
        (Mode::KdMixedLabeled, AuxSource::Ood) => Some(p.domains.ood.relabeled(true)),
        (_, AuxSource::Matched) => Some(p.domains.auxiliary.clone()),
        (_, AuxSource::Ood) => Some(p.domains.ood.clone()),
    };
    let sets = match aux {
        Some(a) => p.sets.with_auxiliary(a),
        None => p.sets.clone(),
    };
    let (net, report) = match &teacher_net {
        Some(t) => train_student_with_teacher(&exp, &sets, t)?,
        None => train_student(&exp, &sets, None)?,
    };
    let mut summary = finish_run(&net, &report, &p.sets.held_out, out, "student")?;
    summary["command"] = "distill".into();
    Ok(summary)
}

/// Scores `pred_dir/<depth file name>` against every labeled entry of the
/// manifest.
pub fn evaluate_directory(pred_dir: &Path, gt_manifest: &Path) -> Result<MetricReport> {
    let entries = read_manifest(gt_manifest)?;
    let base = gt_manifest.parent().unwrap_or(Path::new("."));
    let mut acc = MetricAccumulator::new();
    for e in &entries {
        let rel = e.depth_path.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "{}: entry {} has no ground truth",
                gt_manifest.display(),
                e.rgb_path
            ))
        })?;
        let gt = load_pfm(base.join(rel))?;
        let name = Path::new(rel).file_name().unwrap_or_default();
        let pred = load_pfm(pred_dir.join(name))?;
        let mask = gt.mapv(|d| d > 0.0);
        acc.add(pred.view(), gt.view(), mask.view())?;
    }
    acc.finish()
}

fn cmd_evaluate(out: &Path, pred_dir: &Path, gt_manifest: &Path) -> Result<Value> {
    let report = evaluate_directory(pred_dir, gt_manifest)?;
    let path = out.join("metrics.json");
    fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::json!({ "command": "evaluate", "metrics": report }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramAudit {
    pub name: String,
    pub argmax_bin: usize,
    /// Intersection with the first histogram of the audit.
    pub similarity_to_reference: f64,
    pub histogram: DepthHistogram,
}

fn cmd_histogram(cfg: &CliConfig, out: &Path, manifests: &[PathBuf]) -> Result<Value> {
    let datasets: Vec<(String, DatasetHandle)> = if manifests.is_empty() {
        let d = make_domains(&cfg.data, cfg.seed())?;
        vec![
            ("original".into(), d.original),
            ("auxiliary".into(), d.auxiliary_labeled),
            ("ood".into(), d.ood.relabeled(true)),
        ]
    } else {
        manifests
            .iter()
            .map(|m| Ok((m.display().to_string(), load_dataset(m, cfg.seed())?)))
            .collect::<Result<_>>()?
    };
    let hists = datasets
        .iter()
        .map(|(_, ds)| depth_histogram(ds, cfg.train.histogram))
        .collect::<Result<Vec<_>>>()?;
    let audits = datasets
        .iter()
        .zip(&hists)
        .map(|((name, _), h)| {
            Ok(HistogramAudit {
                name: name.clone(),
                argmax_bin: h.argmax_bin(),
                similarity_to_reference: histogram_similarity(&hists[0], h)?,
                histogram: h.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = out.join("histograms.json");
    fs::write(&path, serde_json::to_string_pretty(&audits)?).map_err(|e| Error::io(&path, e))?;
    let brief: Vec<Value> = audits
        .iter()
        .map(|a| serde_json::json!({"name": a.name, "argmax_bin": a.argmax_bin, "similarity": a.similarity_to_reference}))
        .collect();
    Ok(serde_json::json!({ "command": "histogram", "datasets": brief }))
}

fn cmd_study(cfg: &CliConfig, out: &Path, name: &str, settings: &[Setting]) -> Result<Value> {
    let study = cfg.study();
    let results = run_study(&study, settings, |s, seed, r| {
        eprintln!("{s} seed {seed}: δ1 {:.4}", r.final_metrics.delta1);
    })?;
    write_curve_csv(&out.join(format!("{name}.csv")), &results.rows(settings))?;
    let summary: Vec<SettingSummary> = results.summary(settings);
    let mut doc = serde_json::json!({ "command": name, "settings": summary });
    if name == "sweep" {
        let curve = sweep_curve(&results, settings);
        let d: Vec<f64> = curve.iter().map(|c| c.1).collect();
        let (non_decreasing, plateau) = sweep_shape(&d, 0.01);
        doc["curve"] = serde_json::to_value(&curve)?;
        doc["non_decreasing"] = non_decreasing.into();
        doc["plateau"] = plateau.into();
    }
    let path = out.join(format!("{name}_summary.json"));
    fs::write(&path, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::io(&path, e))?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_roundtrips() {
        let cfg = CliConfig::default();
        let back = CliConfig::from_value(serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let cfg = CliConfig::default()
            .with_overrides(&[
                "train.epochs=3".into(),
                "mode=kd_aux_only".into(),
                "data.resolution.0=16".into(),
            ])
            .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.mode, Mode::KdAuxOnly);
        assert_eq!(cfg.data.resolution.0, 16);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let base = CliConfig::default();
        for o in ["train.nope=1", "mode=sideways", "train.lambda=2.0", "noequals"] {
            let err = base.with_overrides(&[o.into()]).unwrap_err();
            assert_eq!(exit_code(&err), EXIT_CONFIG, "{o}: {err}");
        }
        let mut v = serde_json::to_value(&base).unwrap();
        v["extra"] = 1.into();
        assert!(matches!(CliConfig::from_value(v), Err(Error::Config(_))));
    }

    #[test]
    fn schema_version_is_checked() {
        let mut v = serde_json::to_value(CliConfig::default()).unwrap();
        v["schema"] = 99.into();
        assert!(matches!(CliConfig::from_value(v.clone()), Err(Error::Config(_))));
        v.as_object_mut().unwrap().remove("schema");
        assert!(matches!(CliConfig::from_value(v), Err(Error::Config(_))));
    }

    #[test]
    fn lambda_defaults_when_omitted() {
        let mut v = serde_json::to_value(CliConfig::default()).unwrap();
        v["train"].as_object_mut().unwrap().remove("lambda");
        assert_eq!(CliConfig::from_value(v).unwrap().train.lambda.get(), 0.1);
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::NonFinite("x".into())), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::io("p", std::io::Error::other("x"))), EXIT_DATA);
        assert_eq!(error_json(&Error::NonFinite("x".into()))["exit_code"], 4);
    }
}
