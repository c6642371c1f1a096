//! Target-domain metrics, run reports, the variant × setting ablation grid
//! and one-parameter sweeps, with JSON / CSV / SVG writers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, Scenario, ScenarioSpec, Setting, SyntheticSpec, TargetHoldout};
use crate::error::{Error, Result};
use crate::models::{Architecture, ExtractorSpec, ModelSet, Reduction, DEFAULT_HEAD_HIDDEN};
use crate::pipeline::{self, BaAdaConfig, IaClrConfig, LossTraces, Variant};
use crate::tensor::Tensor;

/// Accuracy figures for one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Recall of each class; `None` for classes absent from the holdout.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub class_counts: Vec<usize>,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Scores class predictions (0-based) against true labels.
pub fn score(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Evaluation> {
    if predictions.len() != labels.len() {
        return Err(Error::config("prediction and label counts differ"));
    }
    if labels.is_empty() {
        return Err(Error::data("empty evaluation set"));
    }
    let mut confusion = vec![vec![0; classes]; classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= classes || y >= classes {
            return Err(Error::config(format!("class id outside 1..={classes}")));
        }
        confusion[y][p] += 1;
    }
    let class_counts: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let correct: usize = (0..classes).map(|k| confusion[k][k]).sum();
    let per_class_accuracy = (0..classes)
        .map(|k| (class_counts[k] > 0).then(|| confusion[k][k] as f64 / class_counts[k] as f64))
        .collect();
    Ok(Evaluation {
        accuracy: correct as f64 / labels.len() as f64,
        per_class_accuracy,
        confusion,
        class_counts,
    })
}

/// Predicts with `C(G(x))` in eval mode and scores against the holdout.
pub fn evaluate(models: &ModelSet, features: &Tensor, holdout: &TargetHoldout) -> Result<Evaluation> {
    let k = models.classifier.spec.output_shape()?[0];
    if k != holdout.classes {
        return Err(Error::config(format!(
            "classifier predicts {k} classes, holdout has {}",
            holdout.classes
        )));
    }
    let probs = models.predict_proba(features)?;
    let preds: Vec<usize> = (0..probs.rows()).map(|i| argmax(probs.row(i))).collect();
    score(&preds, &holdout.labels, k)
}

/// Index of the smallest count (lowest index on ties).
pub fn scarcest_class(counts: &[usize]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c < counts[best] {
            best = k;
        }
    }
    best
}

/// Outcome of one training run, evaluated on the target holdout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: Variant,
    pub setting: Option<Setting>,
    pub seed: u64,
    pub evaluation: Evaluation,
    /// 1-based id of the class with the fewest samples over both domains.
    pub scarcest_class: usize,
    pub scarcest_recall: Option<f64>,
    pub pretrain_traces: Option<LossTraces>,
    pub adapt_traces: LossTraces,
    pub bottlenecks: Vec<usize>,
    pub warnings: Vec<String>,
    pub scenario_digest: String,
    pub initial_params_digest: String,
    pub final_params_digest: String,
    pub config_digest: String,
    pub config: serde_json::Value,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything needed to run one cell of the benchmark on synthetic data.
///
/// The default is the tuned synthetic benchmark: larger step sizes, more
/// epochs, mean-reduced adversarial loss and a boundary weight scaled to that
/// reduction. The per-phase config defaults keep the published values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Experiment {
    pub synthetic: SyntheticSpec,
    /// Keep ratios of an imbalanced domain (reversed for the target side).
    pub imbalance: Vec<f64>,
    /// Defaults to the FNN layout sized to the synthetic dimension.
    pub extractor: Option<ExtractorSpec>,
    pub head_hidden: usize,
    pub projection_dim: usize,
    pub pretrain: IaClrConfig,
    pub adapt: BaAdaConfig,
}

impl Default for Experiment {
    fn default() -> Self {
        let synthetic = SyntheticSpec::default();
        Experiment {
            imbalance: data::default_imbalance(synthetic.classes),
            synthetic,
            extractor: None,
            head_hidden: DEFAULT_HEAD_HIDDEN,
            projection_dim: 16,
            pretrain: IaClrConfig { learning_rate: 0.01, epochs: 20, ..IaClrConfig::default() },
            adapt: BaAdaConfig {
                learning_rate: 0.03,
                epochs: 60,
                reduction: Reduction::Mean,
                lambda_d: 0.1,
                lambda_bd: 10.0,
                ..BaAdaConfig::default()
            },
        }
    }
}

impl Experiment {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            extractor: self
                .extractor
                .clone()
                .unwrap_or_else(|| ExtractorSpec::fnn(self.synthetic.dim)),
            head_hidden: self.head_hidden,
            projection_dim: self.projection_dim,
            classes: self.synthetic.classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        if self.imbalance.len() != self.synthetic.classes {
            return Err(Error::config(format!(
                "imbalance has {} ratios for {} classes",
                self.imbalance.len(),
                self.synthetic.classes
            )));
        }
        if self.head_hidden < 2 || self.projection_dim == 0 {
            return Err(Error::config("head_hidden must be >= 2 and projection_dim >= 1"));
        }
        let arch = self.architecture();
        if arch.extractor.input_shape() != [self.synthetic.dim] {
            return Err(Error::config("extractor input does not match the synthetic dimension"));
        }
        self.pretrain.validate()?;
        self.adapt.validate()?;
        ScenarioSpec::with_imbalance(Setting::I2I, &self.imbalance, 0).validate()
    }

    pub fn digest(&self) -> String {
        crate::tensor::sha256_hex(serde_json::to_string(self).unwrap().as_bytes())
    }

    /// Synthetic domains and the scenario for `setting`, all drawn from `seed`.
    pub fn scenario(&self, setting: Setting, seed: u64) -> Result<Scenario> {
        let spec = SyntheticSpec { seed, ..self.synthetic.clone() };
        let (s, t) = data::synth_domains(&spec)?;
        data::make_scenario(&s, &t, &ScenarioSpec::with_imbalance(setting, &self.imbalance, seed))
    }

    /// Trains `variant` on the scenario and evaluates it on the holdout.
    pub fn run(&self, scenario: &Scenario, variant: Variant, seed: u64) -> Result<RunReport> {
        self.validate()?;
        let models = ModelSet::build(&self.architecture(), seed)?;
        let initial = models.params_digest();
        let out = pipeline::sdcda_train(
            models,
            &scenario.source,
            &scenario.target,
            &self.pretrain,
            &self.adapt,
            variant,
            seed,
        )?;
        let evaluation = evaluate(&out.models, &scenario.target.features, &scenario.holdout)?;
        let combined: Vec<usize> = scenario
            .source
            .class_counts()
            .iter()
            .zip(&evaluation.class_counts)
            .map(|(a, b)| a + b)
            .collect();
        let scarce = scarcest_class(&combined);
        let mut bottlenecks = Vec::new();
        if let Some(p) = &out.pretrain {
            bottlenecks.extend(&p.bottlenecks);
        }
        Ok(RunReport {
            variant,
            setting: None,
            seed,
            scarcest_class: scarce + 1,
            scarcest_recall: evaluation.per_class_accuracy[scarce],
            evaluation,
            pretrain_traces: out.pretrain.map(|p| p.traces),
            adapt_traces: out.adapt.traces,
            bottlenecks,
            warnings: out.warnings,
            scenario_digest: scenario.digest(),
            initial_params_digest: initial,
            final_params_digest: out.models.params_digest(),
            config_digest: self.digest(),
            config: serde_json::to_value(self).unwrap(),
        })
    }

    pub fn run_cell(&self, setting: Setting, variant: Variant, seed: u64) -> Result<RunReport> {
        let scenario = self.scenario(setting, seed)?;
        let mut r = self.run(&scenario, variant, seed)?;
        r.setting = Some(setting);
        Ok(r)
    }
}

/// Result of one seed in a cell: a report, or the reason it diverged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedOutcome {
    Completed { accuracy: f64, scarcest_recall: Option<f64>, pairing_digest: String },
    Diverged { reason: String },
}

/// Mean and sample standard deviation over completed seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub completed: usize,
    pub diverged: usize,
}

pub fn summarize(values: &[Option<f64>]) -> Summary {
    let done: Vec<f64> = values.iter().flatten().copied().collect();
    let n = done.len();
    let mean = (n > 0).then(|| done.iter().sum::<f64>() / n as f64);
    let std = mean.map(|m| {
        if n < 2 {
            0.0
        } else {
            (done.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        }
    });
    Summary { mean, std, completed: n, diverged: values.len() - n }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub setting: Setting,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub outcomes: Vec<SeedOutcome>,
    pub accuracy: Summary,
    pub scarcest_recall: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub settings: Vec<Setting>,
    pub variants: Vec<Variant>,
    pub cells: Vec<AblationCell>,
    /// Per setting and seed, the scenario + initial-parameter digest shared by
    /// every variant.
    pub pairing: BTreeMap<String, Vec<String>>,
}

impl AblationTable {
    pub fn cell(&self, setting: Setting, variant: Variant) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.setting == setting && c.variant == variant)
    }

    /// Long format: one row per cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("setting,variant,mean_accuracy,std_accuracy,completed,diverged,mean_scarcest_recall\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                c.setting,
                c.variant.label(),
                opt(c.accuracy.mean),
                opt(c.accuracy.std),
                c.accuracy.completed,
                c.accuracy.diverged,
                opt(c.scarcest_recall.mean)
            );
        }
        s
    }

    /// Wide format: variants as rows, settings as columns, seed-mean accuracy.
    pub fn to_wide_csv(&self) -> String {
        let mut s = String::from("variant");
        for st in &self.settings {
            let _ = write!(s, ",{st}");
        }
        s.push('\n');
        for &v in &self.variants {
            s.push_str(v.label());
            for &st in &self.settings {
                let m = self.cell(st, v).and_then(|c| c.accuracy.mean);
                let _ = write!(s, ",{}", opt(m));
            }
            s.push('\n');
        }
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "diverged".to_string(), |x| format!("{x:.6}"))
}

fn pairing_digest(r: &RunReport) -> String {
    format!("{}/{}", r.scenario_digest, r.initial_params_digest)
}

fn outcome(r: Result<RunReport>) -> Result<(SeedOutcome, Option<RunReport>)> {
    match r {
        Ok(rep) => Ok((
            SeedOutcome::Completed {
                accuracy: rep.evaluation.accuracy,
                scarcest_recall: rep.scarcest_recall,
                pairing_digest: pairing_digest(&rep),
            },
            Some(rep),
        )),
        Err(e @ Error::Divergence(_)) => Ok((SeedOutcome::Diverged { reason: e.to_string() }, None)),
        Err(e) => Err(e),
    }
}

/// Runs `jobs` on `threads` workers (1 = sequential). Each job is internally
/// deterministic, so the thread count never changes any result.
fn run_jobs<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if threads <= 1 {
        return (0..n).map(&f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::internal(e.to_string()))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Every variant × setting, each over all `seeds`. Within a setting and seed,
/// all variants see identical data and initial parameters.
pub fn ablation_run(
    exp: &Experiment,
    settings: &[Setting],
    variants: &[Variant],
    seeds: &[u64],
    threads: usize,
) -> Result<AblationTable> {
    exp.validate()?;
    if seeds.is_empty() {
        return Err(Error::config("ablation needs at least one seed"));
    }
    let jobs: Vec<(Setting, Variant, u64)> = settings
        .iter()
        .flat_map(|&s| variants.iter().flat_map(move |&v| seeds.iter().map(move |&x| (s, v, x))))
        .collect();
    let results = run_jobs(jobs.len(), threads, |i| {
        let (s, v, seed) = jobs[i];
        outcome(exp.run_cell(s, v, seed))
    })?;

    let mut cells = Vec::new();
    let mut pairing: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut it = results.into_iter();
    for &setting in settings {
        let mut per_seed: Vec<Option<String>> = vec![None; seeds.len()];
        for &variant in variants {
            let mut outcomes = Vec::new();
            let mut acc = Vec::new();
            let mut rec = Vec::new();
            for (j, _) in seeds.iter().enumerate() {
                let (o, rep) = it.next().unwrap();
                if let Some(rep) = &rep {
                    let d = pairing_digest(rep);
                    match &per_seed[j] {
                        None => per_seed[j] = Some(d),
                        Some(prev) if *prev != d => {
                            return Err(Error::internal(format!(
                                "variants of {setting} seed {} saw different data or initialization",
                                seeds[j]
                            )))
                        }
                        _ => {}
                    }
                }
                acc.push(rep.as_ref().map(|r| r.evaluation.accuracy));
                rec.push(rep.as_ref().and_then(|r| r.scarcest_recall));
                outcomes.push(o);
            }
            cells.push(AblationCell {
                setting,
                variant,
                seeds: seeds.to_vec(),
                outcomes,
                accuracy: summarize(&acc),
                scarcest_recall: summarize(&rec),
            });
        }
        pairing.insert(setting.to_string(), per_seed.into_iter().flatten().collect());
    }
    Ok(AblationTable { settings: settings.to_vec(), variants: variants.to_vec(), cells, pairing })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    AlphaD,
    LambdaBd,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::AlphaD => "alpha_d",
            SweepParameter::LambdaBd => "lambda_bd",
        }
    }

    /// The published grids: alpha_d 0.1..0.6, lambda_bd 1e-9..1e-5.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParameter::AlphaD => vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            SweepParameter::LambdaBd => vec![1e-9, 1e-8, 1e-7, 1e-6, 1e-5],
        }
    }

    fn apply(self, cfg: &mut BaAdaConfig, v: f64) {
        match self {
            SweepParameter::AlphaD => cfg.alpha_d = v,
            SweepParameter::LambdaBd => cfg.lambda_bd = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub outcomes: Vec<SeedOutcome>,
    pub accuracy: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub parameter: SweepParameter,
    pub setting: Setting,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    /// Grid value with the highest mean accuracy (first on ties).
    pub fn best(&self) -> Option<&SweepPoint> {
        let mut best: Option<&SweepPoint> = None;
        for p in &self.points {
            if let Some(m) = p.accuracy.mean {
                if best.and_then(|b| b.accuracy.mean).is_none_or(|bm| m > bm) {
                    best = Some(p);
                }
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},mean_accuracy,std_accuracy,completed,diverged\n", self.parameter.name());
        for p in &self.points {
            let _ = writeln!(
                s,
                "{:e},{},{},{},{}",
                p.value,
                opt(p.accuracy.mean),
                opt(p.accuracy.std),
                p.accuracy.completed,
                p.accuracy.diverged
            );
        }
        s
    }
}

/// Mean target accuracy of `variant` at each grid value. Divergent seeds are
/// recorded as such and left out of the means.
pub fn sweep(
    exp: &Experiment,
    parameter: SweepParameter,
    grid: &[f64],
    setting: Setting,
    variant: Variant,
    seeds: &[u64],
    threads: usize,
) -> Result<SweepCurve> {
    if grid.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("sweep grid must be strictly ascending"));
    }
    if seeds.is_empty() {
        return Err(Error::config("sweep needs at least one seed"));
    }
    let mut experiments = Vec::new();
    for &v in grid {
        let mut e = exp.clone();
        parameter.apply(&mut e.adapt, v);
        e.validate()?;
        experiments.push(e);
    }
    let jobs: Vec<(usize, u64)> =
        (0..grid.len()).flat_map(|g| seeds.iter().map(move |&s| (g, s))).collect();
    let results = run_jobs(jobs.len(), threads, |i| {
        let (g, seed) = jobs[i];
        outcome(experiments[g].run_cell(setting, variant, seed))
    })?;
    let mut it = results.into_iter();
    let mut points = Vec::new();
    for &value in grid {
        let mut outcomes = Vec::new();
        let mut acc = Vec::new();
        for _ in seeds {
            let (o, rep) = it.next().unwrap();
            acc.push(rep.map(|r| r.evaluation.accuracy));
            outcomes.push(o);
        }
        points.push(SweepPoint { value, outcomes, accuracy: summarize(&acc) });
    }
    Ok(SweepCurve { parameter, setting, variant, seeds: seeds.to_vec(), points })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::internal(e.to_string()))?;
    crate::io::write_atomic_str(path, &(text + "\n"))
}

/// Confusion matrix as CSV with 1-based class ids.
pub fn confusion_csv(eval: &Evaluation) -> String {
    let k = eval.confusion.len();
    let mut s = String::from("true\\predicted");
    for j in 1..=k {
        let _ = write!(s, ",{j}");
    }
    s.push('\n');
    for (i, row) in eval.confusion.iter().enumerate() {
        let _ = write!(s, "{}", i + 1);
        for c in row {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
    }
    s
}

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

fn svg_frame(title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">0</text>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">1</text>\n\
         {body}</svg>\n",
        W / 2.0,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD,
        PAD - 14.0,
        H - PAD,
        PAD - 14.0,
        PAD + 4.0,
    )
}

fn y_of(acc: f64) -> f64 {
    H - PAD - acc.clamp(0.0, 1.0) * (H - 2.0 * PAD)
}

/// Line plot of mean accuracy over the grid; diverged points drawn as crosses.
pub fn sweep_svg(curve: &SweepCurve) -> String {
    let n = curve.points.len();
    let x_of = |i: usize| {
        if n == 1 {
            W / 2.0
        } else {
            PAD + i as f64 * (W - 2.0 * PAD) / (n - 1) as f64
        }
    };
    let mut body = String::new();
    let pts: Vec<String> = curve
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.accuracy.mean.map(|m| format!("{:.1},{:.1}", x_of(i), y_of(m))))
        .collect();
    let _ = writeln!(body, "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>", pts.join(" "));
    for (i, p) in curve.points.iter().enumerate() {
        let x = x_of(i);
        match p.accuracy.mean {
            Some(m) => {
                let _ = writeln!(body, "<circle cx=\"{x:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"steelblue\"/>", y_of(m));
            }
            None => {
                let y = H - PAD - 8.0;
                let _ = writeln!(
                    body,
                    "<path d=\"M{:.1} {:.1} l8 8 m0 -8 l-8 8\" stroke=\"crimson\"/>",
                    x - 4.0,
                    y - 4.0
                );
            }
        }
        let _ = writeln!(
            body,
            "<text x=\"{x:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            H - PAD + 14.0,
            p.value
        );
    }
    svg_frame(&format!("target accuracy vs {}", curve.parameter.name()), &body)
}

/// Bar chart of per-class recall.
pub fn class_accuracy_svg(eval: &Evaluation, title: &str) -> String {
    let k = eval.per_class_accuracy.len().max(1);
    let slot = (W - 2.0 * PAD) / k as f64;
    let mut body = String::new();
    for (i, a) in eval.per_class_accuracy.iter().enumerate() {
        let x = PAD + i as f64 * slot + slot * 0.15;
        if let Some(a) = a {
            let y = y_of(*a);
            let _ = writeln!(
                body,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"darkorange\"/>",
                slot * 0.7,
                H - PAD - y
            );
        }
        let _ = writeln!(
            body,
            "<text x=\"{:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            x + slot * 0.35,
            H - PAD + 14.0,
            i + 1
        );
    }
    svg_frame(title, &body)
}
