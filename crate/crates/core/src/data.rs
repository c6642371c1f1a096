//! Datasets, bi-imbalanced scenario construction, synthetic two-domain
//! generators and matrix ingestion.
//!
//! Labels are stored as 0-based class indices in memory and written as
//! `1..=K` in every external format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::tensor::{ParameterSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

/// A labeled (or unlabeled) sample matrix from one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub features: Tensor,
    pub labels: Option<Vec<usize>>,
    pub classes: Option<usize>,
    pub domain: Domain,
}

impl DomainDataset {
    pub fn labeled(features: Tensor, labels: Vec<usize>, classes: usize, domain: Domain) -> Result<Self> {
        let ds = DomainDataset { features, labels: Some(labels), classes: Some(classes), domain };
        ds.validate()?;
        Ok(ds)
    }

    pub fn unlabeled(features: Tensor, domain: Domain) -> Self {
        DomainDataset { features, labels: None, classes: None, domain }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(labels) = &self.labels {
            if labels.len() != self.features.rows() {
                return Err(Error::data(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    self.features.rows()
                )));
            }
            let k = self.classes.ok_or_else(|| Error::data("labeled dataset without class count"))?;
            if k < 2 {
                return Err(Error::data("need at least 2 classes"));
            }
            if let Some((i, y)) = labels.iter().enumerate().find(|(_, &y)| y >= k) {
                return Err(Error::data(format!("sample {i}: label {} outside 1..={k}", y + 1)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let (Some(labels), Some(k)) = (&self.labels, self.classes) else {
            return Vec::new();
        };
        let mut counts = vec![0; k];
        for &y in labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn digest(&self) -> String {
        let mut p = ParameterSet::new();
        p.insert("features", self.features.clone()).unwrap();
        if let Some(labels) = &self.labels {
            let l = labels.iter().map(|&y| (y + 1) as f64).collect();
            p.insert("labels", Tensor::from_parts(vec![labels.len()], l)).unwrap();
        }
        p.digest()
    }
}

/// Trainer-facing view of the target domain. It has no label field.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledDataset {
    pub features: Tensor,
    pub domain: Domain,
}

impl UnlabeledDataset {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Target labels kept aside for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetHoldout {
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl TargetHoldout {
    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }
}

/// Source data, label-free target data and the evaluation-only target labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub source: DomainDataset,
    pub target: UnlabeledDataset,
    pub holdout: TargetHoldout,
}

impl Scenario {
    /// Splits a labeled target dataset into the trainer view and the holdout.
    pub fn from_labeled(source: DomainDataset, target: DomainDataset) -> Result<Self> {
        let (Some(labels), Some(classes)) = (target.labels, target.classes) else {
            return Err(Error::data("target dataset carries no labels for the holdout"));
        };
        if source.classes != Some(classes) {
            return Err(Error::data("source and target disagree on class count"));
        }
        Ok(Scenario {
            source,
            target: UnlabeledDataset { features: target.features, domain: target.domain },
            holdout: TargetHoldout { labels, classes },
        })
    }

    pub fn digest(&self) -> String {
        let target = DomainDataset {
            features: self.target.features.clone(),
            labels: Some(self.holdout.labels.clone()),
            classes: Some(self.holdout.classes),
            domain: Domain::Target,
        };
        format!("{}:{}", self.source.digest(), target.digest())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    B2B,
    B2I,
    I2B,
    I2I,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::B2B, Setting::B2I, Setting::I2B, Setting::I2I];

    pub fn source_imbalanced(self) -> bool {
        matches!(self, Setting::I2B | Setting::I2I)
    }

    pub fn target_imbalanced(self) -> bool {
        matches!(self, Setting::B2I | Setting::I2I)
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::B2B => "B2B",
            Setting::B2I => "B2I",
            Setting::I2B => "I2B",
            Setting::I2I => "I2I",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "b2b" => Ok(Setting::B2B),
            "b2i" => Ok(Setting::B2I),
            "i2b" => Ok(Setting::I2B),
            "i2i" => Ok(Setting::I2I),
            _ => Err(Error::config(format!("unknown setting {s:?}"))),
        }
    }
}

/// Default keep-ratio vector for an imbalanced domain: `[1.0, 0.1, 0.05, ...]`.
pub fn default_imbalance(classes: usize) -> Vec<f64> {
    (0..classes)
        .map(|k| match k {
            0 => 1.0,
            1 => 0.1,
            _ => 0.05,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub setting: Setting,
    /// Per-class keep ratios, class 1 first.
    pub source_ratios: Vec<f64>,
    pub target_ratios: Vec<f64>,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Balanced sides keep everything; an imbalanced source uses `imbalance`,
    /// an imbalanced target uses it reversed so the minority pattern flips
    /// between domains.
    pub fn with_imbalance(setting: Setting, imbalance: &[f64], seed: u64) -> Self {
        let k = imbalance.len();
        let source_ratios =
            if setting.source_imbalanced() { imbalance.to_vec() } else { vec![1.0; k] };
        let target_ratios = if setting.target_imbalanced() {
            imbalance.iter().rev().copied().collect()
        } else {
            vec![1.0; k]
        };
        ScenarioSpec { setting, source_ratios, target_ratios, seed }
    }

    pub fn standard(setting: Setting, classes: usize, seed: u64) -> Self {
        Self::with_imbalance(setting, &default_imbalance(classes), seed)
    }

    pub fn validate(&self) -> Result<()> {
        for (side, ratios, imbalanced) in [
            ("source", &self.source_ratios, self.setting.source_imbalanced()),
            ("target", &self.target_ratios, self.setting.target_imbalanced()),
        ] {
            if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
                return Err(Error::config(format!("{side} ratio {r} outside (0, 1]")));
            }
            if imbalanced {
                if !ratios.iter().any(|&r| r <= 0.5) {
                    return Err(Error::config(format!(
                        "{side} is imbalanced in {} but has no ratio <= 0.5",
                        self.setting
                    )));
                }
            } else if ratios.iter().any(|&r| r != 1.0) {
                return Err(Error::config(format!(
                    "{side} is balanced in {} but has ratios below 1",
                    self.setting
                )));
            }
        }
        if self.source_ratios.len() != self.target_ratios.len() {
            return Err(Error::config("source and target ratio vectors differ in length"));
        }
        Ok(())
    }
}

/// `round(ratio * n)` with halves rounded up.
pub fn keep_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 0.5).floor() as usize
}

/// Subsamples each class of both domains according to `spec`, and splits the
/// target labels off into the evaluation holdout.
pub fn make_scenario(
    source: &DomainDataset,
    target: &DomainDataset,
    spec: &ScenarioSpec,
) -> Result<Scenario> {
    spec.validate()?;
    let k = spec.source_ratios.len();
    for (name, ds) in [("source", source), ("target", target)] {
        if ds.labels.is_none() {
            return Err(Error::config(format!("{name} dataset must be labeled")));
        }
        if ds.classes != Some(k) {
            return Err(Error::config(format!(
                "{name} has {:?} classes but ratios cover {k}",
                ds.classes
            )));
        }
    }
    let s = subsample(source, &spec.source_ratios, spec.seed, 22)?;
    let t = subsample(target, &spec.target_ratios, spec.seed, 23)?;
    Scenario::from_labeled(s, t)
}

fn subsample(ds: &DomainDataset, ratios: &[f64], seed: u64, stream: u64) -> Result<DomainDataset> {
    let labels = ds.labels.as_ref().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut kept = Vec::new();
    for (c, &ratio) in ratios.iter().enumerate() {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let n = keep_count(ratio, members.len());
        if n == 0 {
            return Err(Error::config(format!(
                "ratio {ratio} leaves no samples of class {} ({} available)",
                c + 1,
                members.len()
            )));
        }
        for j in rand::seq::index::sample(&mut rng, members.len(), n) {
            kept.push(members[j]);
        }
    }
    kept.sort_unstable();
    let features = ds.features.select_rows(&kept);
    let labels = kept.iter().map(|&i| labels[i]).collect();
    DomainDataset::labeled(features, labels, ratios.len(), ds.domain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    GaussianMixture,
    TwoMoons,
}

/// Rotation of the first coordinate plane followed by a translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainShift {
    /// Radians.
    pub rotation: f64,
    /// Added to the leading coordinates; missing entries are zero.
    pub translation: Vec<f64>,
    /// Per-coordinate scale applied before rotation; missing entries are one.
    #[serde(default)]
    pub scale: Vec<f64>,
}

impl DomainShift {
    pub fn none() -> Self {
        DomainShift { rotation: 0.0, translation: Vec::new(), scale: Vec::new() }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == 0.0
            && self.translation.iter().all(|&t| t == 0.0)
            && self.scale.iter().all(|&s| s == 1.0)
    }

    pub fn apply(&self, x: &mut [f64]) {
        for (v, s) in x.iter_mut().zip(&self.scale) {
            *v *= s;
        }
        if self.rotation != 0.0 && x.len() >= 2 {
            let (s, c) = self.rotation.sin_cos();
            let (a, b) = (x[0], x[1]);
            x[0] = c * a - s * b;
            x[1] = s * a + c * b;
        }
        for (v, t) in x.iter_mut().zip(&self.translation) {
            *v += t;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub classes: usize,
    pub samples_per_class: usize,
    /// Ambient dimension; class structure lives in the first two coordinates.
    pub dim: usize,
    /// Radius of the circle the class means sit on (moons: overall scale).
    pub separation: f64,
    pub noise: f64,
    pub shift: DomainShift,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            generator: Generator::GaussianMixture,
            classes: 4,
            samples_per_class: 1000,
            dim: 8,
            separation: 4.0,
            noise: 1.0,
            shift: DomainShift { rotation: 0.4, translation: vec![0.8, -0.5], scale: Vec::new() },
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("synthetic data needs at least 2 classes"));
        }
        if self.generator == Generator::TwoMoons && self.classes != 2 {
            return Err(Error::config("two-moons generates exactly 2 classes"));
        }
        if self.dim < 2 {
            return Err(Error::config("synthetic dimension must be at least 2"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::config("samples_per_class must be positive"));
        }
        let finite = [self.separation, self.noise, self.shift.rotation]
            .iter()
            .chain(&self.shift.translation)
            .chain(&self.shift.scale)
            .all(|v| v.is_finite());
        if !finite || self.noise < 0.0 {
            return Err(Error::config("synthetic parameters must be finite, noise >= 0"));
        }
        Ok(())
    }

    /// Source-domain class means of the Gaussian mixture.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        (0..self.classes)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / self.classes as f64;
                let mut m = vec![0.0; self.dim];
                m[0] = self.separation * angle.cos();
                m[1] = self.separation * angle.sin();
                m
            })
            .collect()
    }

    fn draw(&self, class: usize, rng: &mut ChaCha8Rng, means: &[Vec<f64>]) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                self.noise * z
            })
            .collect();
        match self.generator {
            Generator::GaussianMixture => {
                for (v, m) in x.iter_mut().zip(&means[class]) {
                    *v += m;
                }
            }
            Generator::TwoMoons => {
                let t = rng.random_range(0.0..std::f64::consts::PI);
                let (px, py) = if class == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                x[0] += self.separation * px;
                x[1] += self.separation * py;
            }
        }
        x
    }
}

/// Draws a labeled source domain and a shifted labeled target domain.
pub fn synth_domains(spec: &SyntheticSpec) -> Result<(DomainDataset, DomainDataset)> {
    spec.validate()?;
    let means = spec.class_means();
    let mut out = Vec::with_capacity(2);
    for (domain, stream) in [(Domain::Source, 20u64), (Domain::Target, 21)] {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        let n = spec.classes * spec.samples_per_class;
        let mut data = Vec::with_capacity(n * spec.dim);
        let mut labels = Vec::with_capacity(n);
        for c in 0..spec.classes {
            for _ in 0..spec.samples_per_class {
                let mut x = spec.draw(c, &mut rng, &means);
                if domain == Domain::Target {
                    spec.shift.apply(&mut x);
                }
                data.extend(x);
                labels.push(c);
            }
        }
        let features = Tensor::new(vec![n, spec.dim], data)?;
        out.push(DomainDataset::labeled(features, labels, spec.classes, domain)?);
    }
    let target = out.pop().unwrap();
    let source = out.pop().unwrap();
    Ok((source, target))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    Csv,
    Binary,
}

/// Sidecar manifest: plain `key=value` lines, `#` comments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    /// Per-sample shape, e.g. `[24]` or `[18, 18]`.
    pub shape: Option<Vec<usize>>,
    pub label_column: bool,
    pub class_count: Option<usize>,
    pub header: bool,
    pub domain: Option<Domain>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Manifest> {
        let mut m = Manifest::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::data(format!("manifest line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || Error::data(format!("manifest line {}: bad value {value:?} for {key}", lineno + 1));
            match key {
                "shape" => {
                    let dims: std::result::Result<Vec<usize>, _> =
                        value.split(['x', 'X', ',']).map(|d| d.trim().parse::<usize>()).collect();
                    let dims = dims.map_err(|_| bad())?;
                    if dims.is_empty() || dims.contains(&0) {
                        return Err(bad());
                    }
                    m.shape = Some(dims);
                }
                "label_column" => {
                    m.label_column = match value {
                        "last" => true,
                        "none" => false,
                        _ => return Err(bad()),
                    }
                }
                "class_count" => m.class_count = Some(value.parse().map_err(|_| bad())?),
                "header" => m.header = value.parse().map_err(|_| bad())?,
                "domain" => {
                    m.domain = Some(match value {
                        "source" => Domain::Source,
                        "target" => Domain::Target,
                        _ => return Err(bad()),
                    })
                }
                _ => {
                    return Err(Error::data(format!(
                        "manifest line {}: unknown key {key:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(m)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        if let Some(shape) = &self.shape {
            let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
            s.push_str(&format!("shape={}\n", dims.join("x")));
        }
        s.push_str(&format!("label_column={}\n", if self.label_column { "last" } else { "none" }));
        if let Some(k) = self.class_count {
            s.push_str(&format!("class_count={k}\n"));
        }
        s.push_str(&format!("header={}\n", self.header));
        if let Some(d) = self.domain {
            let name = match d {
                Domain::Source => "source",
                Domain::Target => "target",
            };
            s.push_str(&format!("domain={name}\n"));
        }
        s
    }
}

pub fn manifest_path(data_path: &Path) -> PathBuf {
    let mut p = data_path.as_os_str().to_owned();
    p.push(".manifest");
    PathBuf::from(p)
}

/// Loads a sample matrix. The sidecar `<path>.manifest` is optional; without
/// it a CSV is read as unlabeled, headerless, flat rows.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<DomainDataset> {
    let mpath = manifest_path(path);
    let manifest = if mpath.exists() {
        Manifest::parse(&std::fs::read_to_string(&mpath)?)?
    } else {
        Manifest::default()
    };
    match format {
        MatrixFormat::Csv => parse_csv(&std::fs::read_to_string(path)?, &manifest),
        MatrixFormat::Binary => parse_binary(&std::fs::read(path)?, &manifest),
    }
}

pub fn parse_csv(text: &str, manifest: &Manifest) -> Result<DomainDataset> {
    let mut rows: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && manifest.header {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row = lineno + 1;
        let mut fields: Vec<&str> = line.split(',').collect();
        let label = if manifest.label_column {
            let raw = fields.pop().unwrap().trim();
            let y: usize = raw
                .parse()
                .map_err(|_| Error::data(format!("row {row}: label {raw:?} is not a class id")))?;
            if y == 0 || manifest.class_count.is_some_and(|k| y > k) {
                return Err(Error::data(format!("row {row}: label {y} out of range")));
            }
            Some(y - 1)
        } else {
            None
        };
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::data(format!(
                    "row {row}: {} feature columns, expected {w}",
                    fields.len()
                )))
            }
            _ => {}
        }
        for f in fields {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::data(format!("row {row}: cannot parse {f:?} as a number")))?;
            if !v.is_finite() {
                return Err(Error::data(format!("row {row}: non-finite value {f:?}")));
            }
            rows.push(v);
        }
        labels.extend(label);
        n += 1;
    }
    let width = width.ok_or_else(|| Error::data("no data rows"))?;
    let features = shaped(rows, n, width, manifest)?;
    finish(features, manifest.label_column.then_some(labels), manifest)
}

fn parse_binary(bytes: &[u8], manifest: &Manifest) -> Result<DomainDataset> {
    let (_, tensors) = container::decode(bytes)?;
    let features = tensors
        .get("features")
        .ok_or_else(|| Error::data("container has no 'features' tensor"))?
        .clone();
    let n = features.rows();
    let width = features.row_len();
    let features = shaped(features.into_data(), n, width, manifest)?;
    let labels = match tensors.get("labels") {
        Some(t) => {
            let mut out = Vec::with_capacity(t.len());
            for (i, &v) in t.data().iter().enumerate() {
                if v < 1.0 || v.fract() != 0.0 || manifest.class_count.is_some_and(|k| v > k as f64) {
                    return Err(Error::data(format!("row {}: label {v} out of range", i + 1)));
                }
                out.push(v as usize - 1);
            }
            Some(out)
        }
        None => None,
    };
    finish(features, labels, manifest)
}

fn shaped(data: Vec<f64>, n: usize, width: usize, manifest: &Manifest) -> Result<Tensor> {
    let sample_shape = match &manifest.shape {
        None => vec![width],
        Some(dims) => {
            let count: usize = dims.iter().product();
            if count != width {
                return Err(Error::data(format!(
                    "manifest shape {dims:?} holds {count} values but rows have {width}"
                )));
            }
            // 2-D image shapes gain a single channel
            if dims.len() == 2 {
                vec![1, dims[0], dims[1]]
            } else {
                dims.clone()
            }
        }
    };
    let mut shape = vec![n];
    shape.extend(sample_shape);
    Tensor::new(shape, data)
}

fn finish(features: Tensor, labels: Option<Vec<usize>>, manifest: &Manifest) -> Result<DomainDataset> {
    let domain = manifest.domain.unwrap_or(Domain::Source);
    match labels {
        Some(labels) => {
            if labels.len() != features.rows() {
                return Err(Error::data("label count does not match row count"));
            }
            let k = manifest
                .class_count
                .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
            DomainDataset::labeled(features, labels, k, domain)
        }
        None => Ok(DomainDataset::unlabeled(features, domain)),
    }
}

/// Writes the dataset as flat CSV rows (label last, 1-based) plus its manifest.
pub fn save_csv(ds: &DomainDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..ds.len() {
        let row: Vec<String> = ds.features.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        if let Some(labels) = &ds.labels {
            out.push_str(&format!(",{}", labels[i] + 1));
        }
        out.push('\n');
    }
    crate::io::write_atomic_str(path, &out)?;
    crate::io::write_atomic_str(&manifest_path(path), &manifest_for(ds).render())
}

/// Writes the dataset in the binary tensor container plus its manifest.
pub fn save_binary(ds: &DomainDataset, path: &Path) -> Result<()> {
    let mut tensors = ParameterSet::new();
    let n = ds.len();
    let flat = Tensor::from_parts(vec![n, ds.features.row_len()], ds.features.data().to_vec());
    tensors.insert("features", flat)?;
    if let Some(labels) = &ds.labels {
        let l = labels.iter().map(|&y| (y + 1) as f64).collect();
        tensors.insert("labels", Tensor::from_parts(vec![n], l))?;
    }
    let manifest = manifest_for(ds).render();
    let bytes = container::encode(&container::descriptor_digest(&manifest), &tensors);
    crate::io::write_atomic(path, &bytes)?;
    crate::io::write_atomic_str(&manifest_path(path), &manifest)
}

fn manifest_for(ds: &DomainDataset) -> Manifest {
    let sample = &ds.features.shape()[1..];
    let shape = match sample {
        [1, h, w] => vec![*h, *w],
        s => s.to_vec(),
    };
    Manifest {
        shape: Some(shape),
        label_column: ds.labels.is_some(),
        class_count: ds.classes,
        header: false,
        domain: Some(ds.domain),
    }
}

/// Per-class sample counts keyed by 1-based class id, for reports.
pub fn count_table(counts: &[usize]) -> BTreeMap<usize, usize> {
    counts.iter().enumerate().map(|(k, &c)| (k + 1, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(n_per: &[usize]) -> DomainDataset {
        let mut labels = Vec::new();
        for (c, &n) in n_per.iter().enumerate() {
            labels.extend(std::iter::repeat_n(c, n));
        }
        let n = labels.len();
        let features = Tensor::new(vec![n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
        DomainDataset::labeled(features, labels, n_per.len(), Domain::Source).unwrap()
    }

    #[test]
    fn b2b_keeps_everything() {
        let s = labeled(&[10, 10]);
        let t = labeled(&[8, 9]);
        let sc = make_scenario(&s, &t, &ScenarioSpec::standard(Setting::B2B, 2, 0)).unwrap();
        assert_eq!(sc.source, s);
        assert_eq!(sc.target.features, t.features);
        assert_eq!(sc.holdout.labels, t.labels.unwrap());
    }

    #[test]
    fn ratio_tenth_of_thousand() {
        let s = labeled(&[1000, 1000]);
        let spec = ScenarioSpec {
            setting: Setting::I2B,
            source_ratios: vec![1.0, 0.1],
            target_ratios: vec![1.0, 1.0],
            seed: 4,
        };
        let sc = make_scenario(&s, &s, &spec).unwrap();
        assert_eq!(sc.source.class_counts(), vec![1000, 100]);
    }

    #[test]
    fn sampling_is_deterministic_without_duplicates() {
        let s = labeled(&[50, 50, 50]);
        let spec = ScenarioSpec::with_imbalance(Setting::I2I, &[1.0, 0.3, 0.1], 9);
        let a = make_scenario(&s, &s, &spec).unwrap();
        let b = make_scenario(&s, &s, &spec).unwrap();
        assert_eq!(a, b);
        let mut ids: Vec<f64> = a.source.features.data().to_vec();
        ids.dedup();
        assert_eq!(ids.len(), a.source.len());
        assert_eq!(a.source.class_counts(), vec![50, 15, 5]);
        assert_eq!(a.holdout.class_counts(), vec![5, 15, 50]);
    }

    #[test]
    fn zero_survivors_is_config_error() {
        let s = labeled(&[10, 4]);
        let spec = ScenarioSpec {
            setting: Setting::I2B,
            source_ratios: vec![1.0, 0.1],
            target_ratios: vec![1.0, 1.0],
            seed: 0,
        };
        assert!(matches!(make_scenario(&s, &s, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn scenario_spec_validation() {
        let mut spec = ScenarioSpec::standard(Setting::B2I, 3, 0);
        assert!(spec.validate().is_ok());
        spec.source_ratios[1] = 0.5;
        assert!(spec.validate().is_err());
        let spec = ScenarioSpec {
            setting: Setting::I2B,
            source_ratios: vec![1.0, 0.8],
            target_ratios: vec![1.0, 1.0],
            seed: 0,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn zero_shift_domains_share_distribution_parameters() {
        let spec = SyntheticSpec { shift: DomainShift::none(), ..SyntheticSpec::default() };
        let (s, t) = synth_domains(&spec).unwrap();
        assert_ne!(s.features, t.features);
        let (a, b) = synth_domains(&spec).unwrap();
        assert_eq!(a, s);
        assert_eq!(b, t);
    }

    #[test]
    fn manifest_reshape_checks_element_count() {
        let row: Vec<String> = (0..324).map(|i| i.to_string()).collect();
        let csv = format!("{}\n{}\n", row.join(","), row.join(","));
        let m = Manifest::parse("shape=18x18\n").unwrap();
        let ds = parse_csv(&csv, &m).unwrap();
        assert_eq!(ds.features.shape(), &[2, 1, 18, 18]);
        let m = Manifest::parse("shape=17x18\n").unwrap();
        assert!(parse_csv(&csv, &m).is_err());
    }

    #[test]
    fn csv_without_labels() {
        let ds = parse_csv("1,2,3\n4,5,6\n7,8,9\n10,11,12\n", &Manifest::default()).unwrap();
        assert_eq!(ds.features.shape(), &[4, 3]);
        assert!(ds.labels.is_none());
    }

    #[test]
    fn csv_infers_class_count() {
        let m = Manifest::parse("label_column=last").unwrap();
        let ds = parse_csv("0.5,1\n0.25,2\n1.5,1\n", &m).unwrap();
        assert_eq!(ds.classes, Some(2));
        assert_eq!(ds.labels, Some(vec![0, 1, 0]));
    }

    #[test]
    fn csv_errors_carry_row_numbers() {
        let m = Manifest::parse("label_column=last\nclass_count=2").unwrap();
        let e = parse_csv("1,1\n2,3\n", &m).unwrap_err().to_string();
        assert!(e.contains("row 2"), "{e}");
        let e = parse_csv("1,2,1\n2,1\n", &m).unwrap_err().to_string();
        assert!(e.contains("row 2"), "{e}");
        let e = parse_csv("1,x,1\n", &m).unwrap_err().to_string();
        assert!(e.contains("row 1"), "{e}");
        assert!(Manifest::parse("colour=blue").is_err());
    }
}
