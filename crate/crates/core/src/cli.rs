//! Command-line front end. `main` parses arguments, runs one subcommand and
//! maps failures to exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | internal error |
//! | 2 | invalid configuration or arguments |
//! | 3 | invalid or missing data |
//! | 4 | training diverged |
//!
//! Failures also print a one-line JSON error report on stderr.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{derive_seeds, RunConfig};
use crate::data::{self, DomainDataset, MatrixFormat, Scenario, ScenarioSpec, TargetHoldout, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::eval::{self, Evaluation, Experiment, SweepParameter};
use crate::io::write_atomic_str;
use crate::models::{Architecture, ExtractorSpec, ModelSet};
use crate::pipeline::{self, TrainState};

#[derive(Debug, Parser)]
#[command(name = "sdcda", version, about = "Pruned contrastive pre-training and boundary-aware adversarial domain adaptation")]
pub struct Cli {
    /// TOML (or .json) run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "SDCDA_OUT", default_value = "sdcda-out")]
    pub out: PathBuf,
    /// Worker threads for ablation and sweep runs.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic source and target domains.
    Synth {
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
    /// Contrastive pre-training of the extractor.
    Pretrain {
        /// Directory holding `source.*` and `target.*`; synthetic data when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Adversarial adaptation, preceded by pre-training when the variant needs it.
    Adapt {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint directory from `pretrain`, used instead of pre-training again.
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// Score a checkpoint on the labeled target domain.
    Eval {
        /// Checkpoint directory.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Settings x variants ablation on synthetic data.
    Ablate,
    /// One-parameter sensitivity sweep on synthetic data.
    Sweep {
        #[arg(long, value_enum)]
        parameter: Option<ParameterArg>,
        /// Comma-separated, strictly ascending grid.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Binary,
}

impl FormatArg {
    fn format(self) -> MatrixFormat {
        match self {
            FormatArg::Csv => MatrixFormat::Csv,
            FormatArg::Binary => MatrixFormat::Binary,
        }
    }

    fn extension(self) -> &'static str {
        match self {
            FormatArg::Csv => "csv",
            FormatArg::Binary => "bin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParameterArg {
    AlphaD,
    LambdaBd,
}

impl From<ParameterArg> for SweepParameter {
    fn from(p: ParameterArg) -> Self {
        match p {
            ParameterArg::AlphaD => SweepParameter::AlphaD,
            ParameterArg::LambdaBd => SweepParameter::LambdaBd,
        }
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    divergence: Option<&'a crate::error::DivergenceReport>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Domain(_) | Error::Io(_) => 3,
        Error::Divergence(_) => 4,
        Error::Internal(_) => 1,
    }
}

/// One-line JSON description of `err` for stderr.
pub fn error_report(err: &Error) -> String {
    let divergence = match err {
        Error::Divergence(d) => Some(d.as_ref()),
        _ => None,
    };
    let report = ErrorReport { error: err.kind(), message: err.to_string(), divergence };
    serde_json::to_string(&report).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", err.kind()))
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_report(&e));
            exit_code(&e)
        }
    }
}

#[derive(Serialize)]
struct Timing {
    command: &'static str,
    seconds: f64,
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.threads == 0 {
        return Err(Error::config("--threads must be at least 1"));
    }
    if let Command::Sweep { parameter, grid } = &cli.command {
        if let Some(p) = parameter {
            cfg.sweep.parameter = (*p).into();
        }
        if !grid.is_empty() {
            cfg.sweep.grid = grid.clone();
        }
    }
    cfg.validate()?;
    for w in cfg.warnings() {
        log::warn!("{w}");
    }

    let out = &cli.out;
    std::fs::create_dir_all(out)?;
    write_atomic_str(&out.join("config.toml"), &cfg.to_toml()?)?;
    let start = Instant::now();
    let name = match &cli.command {
        Command::Synth { format } => {
            synth(&cfg, out, *format)?;
            "synth"
        }
        Command::Pretrain { data } => {
            pretrain_cmd(&cfg, out, data.as_deref())?;
            "pretrain"
        }
        Command::Adapt { data, pretrained } => {
            adapt_cmd(&cfg, out, data.as_deref(), pretrained.as_deref())?;
            "adapt"
        }
        Command::Eval { model, data } => {
            eval_cmd(&cfg, out, model, data.as_deref())?;
            "eval"
        }
        Command::Ablate => {
            ablate_cmd(&cfg, out, cli.threads)?;
            "ablate"
        }
        Command::Sweep { .. } => {
            sweep_cmd(&cfg, out, cli.threads)?;
            "sweep"
        }
    };
    let timing = Timing { command: name, seconds: start.elapsed().as_secs_f64() };
    eval::write_json(&out.join("timing.json"), &timing)
}

fn synth(cfg: &RunConfig, out: &Path, format: FormatArg) -> Result<()> {
    let spec = data::SyntheticSpec { seed: cfg.seed, ..cfg.experiment.synthetic.clone() };
    let (source, target) = data::synth_domains(&spec)?;
    let dir = out.join("data");
    std::fs::create_dir_all(&dir)?;
    for (name, ds) in [("source", &source), ("target", &target)] {
        let path = dir.join(format!("{name}.{}", format.extension()));
        match format {
            FormatArg::Csv => data::save_csv(ds, &path)?,
            FormatArg::Binary => data::save_binary(ds, &path)?,
        }
    }
    let report = serde_json::json!({
        "command": "synth",
        "seed": cfg.seed,
        "source": { "samples": source.len(), "class_counts": data::count_table(&source.class_counts()), "digest": source.digest() },
        "target": { "samples": target.len(), "class_counts": data::count_table(&target.class_counts()), "digest": target.digest() },
    });
    eval::write_json(&out.join("report.json"), &report)
}

/// Source, unlabeled target and (when the target carries labels) the holdout.
struct RunData {
    source: DomainDataset,
    target: UnlabeledDataset,
    holdout: Option<TargetHoldout>,
    digest: String,
}

fn find_matrix(dir: &Path, stem: &str) -> Result<(PathBuf, MatrixFormat)> {
    for f in [FormatArg::Csv, FormatArg::Binary] {
        let p = dir.join(format!("{stem}.{}", f.extension()));
        if p.exists() {
            return Ok((p, f.format()));
        }
    }
    Err(Error::data(format!("no {stem}.csv or {stem}.bin in {}", dir.display())))
}

fn load_data(cfg: &RunConfig, dir: Option<&Path>) -> Result<RunData> {
    let scenario = match dir {
        None => cfg.experiment.scenario(cfg.setting, cfg.seed)?,
        Some(dir) => {
            let (sp, sf) = find_matrix(dir, "source")?;
            let (tp, tf) = find_matrix(dir, "target")?;
            let source = data::load_matrix(&sp, sf)?;
            let mut target = data::load_matrix(&tp, tf)?;
            target.domain = data::Domain::Target;
            if source.labels.is_none() {
                return Err(Error::data("the source domain must be labeled"));
            }
            if target.labels.is_none() {
                let digest = source.digest();
                return Ok(RunData {
                    source,
                    target: UnlabeledDataset { features: target.features, domain: data::Domain::Target },
                    holdout: None,
                    digest,
                });
            }
            if target.classes != source.classes {
                target.classes = source.classes;
                target.validate()?;
            }
            let k = source.classes.unwrap_or(0);
            let spec = if cfg.experiment.imbalance.len() == k {
                ScenarioSpec::with_imbalance(cfg.setting, &cfg.experiment.imbalance, cfg.seed)
            } else {
                ScenarioSpec::standard(cfg.setting, k, cfg.seed)
            };
            data::make_scenario(&source, &target, &spec)?
        }
    };
    let digest = scenario.digest();
    let Scenario { source, target, holdout } = scenario;
    Ok(RunData { source, target, holdout: Some(holdout), digest })
}

/// Model layouts for `ds`: the configured extractor, or one inferred from the sample shape.
fn architecture_for(exp: &Experiment, ds: &DomainDataset) -> Result<Architecture> {
    let sample = &ds.features.shape()[1..];
    let extractor = match &exp.extractor {
        Some(e) => e.clone(),
        None => match sample {
            [n] => ExtractorSpec::fnn(*n),
            [1, h, w] => ExtractorSpec::cnn(*h, *w),
            s => return Err(Error::data(format!("no default extractor for sample shape {s:?}"))),
        },
    };
    if extractor.input_shape() != sample {
        return Err(Error::config(format!(
            "extractor expects samples of shape {:?}, data has {sample:?}",
            extractor.input_shape()
        )));
    }
    let classes = ds.classes.ok_or_else(|| Error::data("the source domain must be labeled"))?;
    Ok(Architecture {
        extractor,
        head_hidden: exp.head_hidden,
        projection_dim: exp.projection_dim,
        classes,
    })
}

fn pretrain_cmd(cfg: &RunConfig, out: &Path, data_dir: Option<&Path>) -> Result<()> {
    let d = load_data(cfg, data_dir)?;
    let mut models = ModelSet::build(&architecture_for(&cfg.experiment, &d.source)?, cfg.seed)?;
    let exp = &cfg.experiment;
    let state = pipeline::iaclr_pretrain(&mut models, &d.source.features, &d.target.features, &exp.pretrain, cfg.seed)?;
    pipeline::save_checkpoint(&out.join("checkpoints").join("pretrain"), &models, &state)?;
    let report = serde_json::json!({
        "command": "pretrain",
        "seed": cfg.seed,
        "data_digest": d.digest,
        "iterations": state.iteration,
        "traces": state.traces,
        "bottlenecks": state.bottlenecks,
        "warnings": exp.pretrain.warnings(),
        "params_digest": models.params_digest(),
    });
    eval::write_json(&out.join("report.json"), &report)
}

fn adapt_cmd(cfg: &RunConfig, out: &Path, data_dir: Option<&Path>, pretrained: Option<&Path>) -> Result<()> {
    let d = load_data(cfg, data_dir)?;
    let exp = &cfg.experiment;
    let template = ModelSet::build(&architecture_for(exp, &d.source)?, cfg.seed)?;
    let (models, pretrain, adapt, warnings): (ModelSet, Option<TrainState>, TrainState, Vec<String>) =
        match pretrained {
            Some(dir) => {
                let (models, state) = pipeline::load_checkpoint(dir, &template)?;
                let (models, adapt) =
                    pipeline::adapt_from_pretrained(models, &d.source, &d.target, &exp.adapt, cfg.variant, cfg.seed)?;
                (models, Some(state), adapt, exp.adapt.warnings())
            }
            None => {
                let o = pipeline::sdcda_train(
                    template,
                    &d.source,
                    &d.target,
                    &exp.pretrain,
                    &exp.adapt,
                    cfg.variant,
                    cfg.seed,
                )?;
                (o.models, o.pretrain, o.adapt, o.warnings)
            }
        };
    let ckpt = out.join("checkpoints");
    pipeline::save_checkpoint(&ckpt.join("adapt"), &models, &adapt)?;
    let evaluation = match &d.holdout {
        Some(h) => Some(eval::evaluate(&models, &d.target.features, h)?),
        None => None,
    };
    if let Some(e) = &evaluation {
        write_eval_artifacts(out, e, cfg.variant.label())?;
    }
    let report = serde_json::json!({
        "command": "adapt",
        "variant": cfg.variant,
        "setting": cfg.setting,
        "seed": cfg.seed,
        "data_digest": d.digest,
        "pretrain_traces": pretrain.as_ref().map(|p| &p.traces),
        "adapt_traces": adapt.traces,
        "evaluation": evaluation,
        "warnings": warnings,
        "params_digest": models.params_digest(),
    });
    eval::write_json(&out.join("report.json"), &report)
}

fn eval_cmd(cfg: &RunConfig, out: &Path, model: &Path, data_dir: Option<&Path>) -> Result<()> {
    let d = load_data(cfg, data_dir)?;
    let holdout = d.holdout.as_ref().ok_or_else(|| Error::data("evaluation needs target labels"))?;
    let template = ModelSet::build(&architecture_for(&cfg.experiment, &d.source)?, cfg.seed)?;
    let (models, state) = pipeline::load_checkpoint(model, &template)?;
    let evaluation = eval::evaluate(&models, &d.target.features, holdout)?;
    write_eval_artifacts(out, &evaluation, cfg.variant.label())?;
    let report = serde_json::json!({
        "command": "eval",
        "checkpoint_phase": state.phase,
        "data_digest": d.digest,
        "evaluation": evaluation,
        "params_digest": models.params_digest(),
    });
    eval::write_json(&out.join("report.json"), &report)
}

fn write_eval_artifacts(out: &Path, e: &Evaluation, title: &str) -> Result<()> {
    std::fs::create_dir_all(out.join("tables"))?;
    std::fs::create_dir_all(out.join("plots"))?;
    write_atomic_str(&out.join("tables").join("confusion.csv"), &eval::confusion_csv(e))?;
    write_atomic_str(&out.join("plots").join("class_accuracy.svg"), &eval::class_accuracy_svg(e, title))
}

fn ablate_cmd(cfg: &RunConfig, out: &Path, threads: usize) -> Result<()> {
    let seeds = derive_seeds(cfg.seed, cfg.ablation.seeds);
    let table = eval::ablation_run(&cfg.experiment, &cfg.ablation.settings, &cfg.ablation.variants, &seeds, threads)?;
    std::fs::create_dir_all(out.join("tables"))?;
    write_atomic_str(&out.join("tables").join("ablation.csv"), &table.to_csv())?;
    write_atomic_str(&out.join("tables").join("ablation_wide.csv"), &table.to_wide_csv())?;
    eval::write_json(&out.join("report.json"), &table)
}

fn sweep_cmd(cfg: &RunConfig, out: &Path, threads: usize) -> Result<()> {
    let s = &cfg.sweep;
    let seeds = derive_seeds(cfg.seed, s.seeds);
    let curve = eval::sweep(&cfg.experiment, s.parameter, &s.effective_grid(), s.setting, s.variant, &seeds, threads)?;
    std::fs::create_dir_all(out.join("tables"))?;
    std::fs::create_dir_all(out.join("plots"))?;
    write_atomic_str(&out.join("tables").join("sweep.csv"), &curve.to_csv())?;
    write_atomic_str(&out.join("plots").join("sweep.svg"), &eval::sweep_svg(&curve))?;
    eval::write_json(&out.join("report.json"), &curve)
}

