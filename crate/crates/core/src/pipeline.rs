//! Training loops: pruned contrastive pre-training of the extractor and
//! boundary-aware adversarial adaptation.
//!
//! Every source of randomness is a [`ChaCha8Rng`] seeded from the run seed on
//! its own stream (see [`streams`]), so enabling or disabling one component
//! never shifts the random draws of another.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::contrastive::{self, ContrastiveConfig, DomainOutputs, ZeroVectors};
use crate::data::{DomainDataset, UnlabeledDataset};
use crate::error::{DivergenceReport, Error, Result};
use crate::models::{self, ModelSet, Reduction, DISCRIMINATOR_TAP_DEPTH};
use crate::nn::{self, sgd_step, Mode};
use crate::pruning::{self, PruneStrategy};
use crate::tensor::{ParameterSet, Tensor};

/// RNG streams for the training loops.
pub mod streams {
    pub const PRETRAIN_BATCHES: u64 = 10;
    pub const PRETRAIN_DROPOUT: u64 = 11;
    pub const AUGMENT: u64 = 12;
    pub const PRETRAIN_PRUNE: u64 = 13;
    pub const SOURCE_BATCHES: u64 = 14;
    pub const TARGET_BATCHES: u64 = 15;
    pub const ADAPT_DROPOUT: u64 = 16;
    pub const ADAPT_PRUNE: u64 = 17;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    /// Adds `strength * N(0, 1)` to every coordinate.
    GaussianNoise,
    /// Zeroes `round(strength * d)` randomly chosen coordinates per sample.
    RandomMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSpec {
    pub kind: AugmentKind,
    pub strength: f64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec { kind: AugmentKind::GaussianNoise, strength: 0.1 }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            AugmentKind::GaussianNoise => self.strength >= 0.0 && self.strength.is_finite(),
            AugmentKind::RandomMask => (0.0..=1.0).contains(&self.strength),
        };
        if !ok {
            return Err(Error::config(format!(
                "augmentation strength {} invalid for {:?}",
                self.strength, self.kind
            )));
        }
        Ok(())
    }
}

/// Produces the augmented view of a batch. Strength 0 is the identity and
/// consumes no randomness.
pub fn augment<R: Rng + ?Sized>(batch: &Tensor, spec: &AugmentationSpec, rng: &mut R) -> Result<Tensor> {
    spec.validate()?;
    if spec.strength == 0.0 {
        return Ok(batch.clone());
    }
    let mut out = batch.clone();
    match spec.kind {
        AugmentKind::GaussianNoise => {
            for v in out.data_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v += spec.strength * z;
            }
        }
        AugmentKind::RandomMask => {
            let d = batch.row_len();
            let zeroed = (spec.strength * d as f64 + 0.5).floor() as usize;
            for row in out.data_mut().chunks_mut(d) {
                for i in rand::seq::index::sample(rng, d, zeroed) {
                    row[i] = 0.0;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IaClrConfig {
    /// Proportion of each extractor weight tensor pruned for the partner view.
    pub alpha_g: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Optional cap on the total number of iterations.
    pub max_iterations: Option<usize>,
    pub augmentation: AugmentationSpec,
    pub prune_strategy: PruneStrategy,
    /// Recompute the mask every this many iterations.
    pub mask_every: usize,
    /// Window of the stalled-loss detector; 0 disables it.
    pub bottleneck_window: usize,
}

impl Default for IaClrConfig {
    fn default() -> Self {
        IaClrConfig {
            alpha_g: 0.25,
            temperature: 0.5,
            learning_rate: 0.001,
            epochs: 10,
            batch_size: 32,
            max_iterations: None,
            augmentation: AugmentationSpec::default(),
            prune_strategy: PruneStrategy::L1,
            mask_every: 1,
            bottleneck_window: 20,
        }
    }
}

impl IaClrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha_g) {
            return Err(Error::config(format!("alpha_g {} outside [0, 1)", self.alpha_g)));
        }
        ContrastiveConfig::new(self.temperature)?;
        check_lr(self.learning_rate)?;
        if self.batch_size == 0 || self.mask_every == 0 {
            return Err(Error::config("batch_size and mask_every must be positive"));
        }
        self.augmentation.validate()
    }

    /// Advisory messages for settings outside the recommended band.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !(self.alpha_g > 0.1 && self.alpha_g < 0.3) {
            w.push(format!("alpha_g = {} is outside the recommended band (0.1, 0.3)", self.alpha_g));
        }
        w
    }

    fn digest(&self) -> String {
        let mut c = self.clone();
        c.max_iterations = None;
        crate::tensor::sha256_hex(serde_json::to_string(&c).unwrap().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaAdaConfig {
    pub lambda_c: f64,
    pub lambda_d: f64,
    pub lambda_bd: f64,
    /// Proportion of each discriminator weight tensor pruned in the boundary step.
    pub alpha_d: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_iterations: Option<usize>,
    pub reduction: Reduction,
    pub prune_strategy: PruneStrategy,
    pub mask_every: usize,
    /// The boundary loss above this value aborts the run as diverged.
    pub divergence_ceiling: f64,
}

impl Default for BaAdaConfig {
    fn default() -> Self {
        BaAdaConfig {
            lambda_c: 1.0,
            lambda_d: 1.0,
            lambda_bd: 1e-7,
            alpha_d: 0.4,
            temperature: 0.5,
            learning_rate: 0.001,
            epochs: 10,
            batch_size: 32,
            max_iterations: None,
            reduction: Reduction::Sum,
            prune_strategy: PruneStrategy::L1,
            mask_every: 1,
            divergence_ceiling: 1e6,
        }
    }
}

impl BaAdaConfig {
    /// The second published hyper-parameter set (smaller adversarial weights).
    pub fn alternative() -> Self {
        BaAdaConfig {
            alpha_d: 0.3,
            lambda_d: 0.001,
            lambda_bd: 1e-8,
            learning_rate: 0.0001,
            ..BaAdaConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_c", self.lambda_c),
            ("lambda_d", self.lambda_d),
            ("lambda_bd", self.lambda_bd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if !(0.0..1.0).contains(&self.alpha_d) {
            return Err(Error::config(format!("alpha_d {} outside [0, 1)", self.alpha_d)));
        }
        ContrastiveConfig::new(self.temperature)?;
        check_lr(self.learning_rate)?;
        if self.batch_size < 2 {
            return Err(Error::config("adaptation batch_size must be at least 2 per domain"));
        }
        if self.mask_every == 0 {
            return Err(Error::config("mask_every must be positive"));
        }
        if !(self.divergence_ceiling > 0.0) {
            return Err(Error::config("divergence_ceiling must be positive"));
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.lambda_c < self.lambda_d {
            w.push(format!(
                "lambda_c = {} is below lambda_d = {}; lambda_c >= lambda_d is recommended",
                self.lambda_c, self.lambda_d
            ));
        }
        if self.lambda_bd >= self.lambda_d {
            w.push(format!(
                "lambda_bd = {} is not below lambda_d = {}",
                self.lambda_bd, self.lambda_d
            ));
        }
        if !(self.alpha_d > 0.3 && self.alpha_d < 0.5) {
            w.push(format!("alpha_d = {} is outside the recommended band (0.3, 0.5)", self.alpha_d));
        }
        w
    }

    fn digest(&self) -> String {
        let mut c = self.clone();
        c.max_iterations = None;
        crate::tensor::sha256_hex(serde_json::to_string(&c).unwrap().as_bytes())
    }
}

fn check_lr(lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::config(format!("learning rate {lr} must be > 0")));
    }
    Ok(())
}

/// Position of a ChaCha stream, enough to rebuild it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// Decimal `u128` word position.
    pub word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn at(rng: &ChaCha8Rng, word_pos: u128) -> Self {
        RngState { word_pos: word_pos.to_string(), ..RngState::capture(rng) }
    }

    fn rebuild(&self) -> Result<ChaCha8Rng> {
        let bad = || Error::config("corrupt rng state in checkpoint");
        let seed: [u8; 32] = hex::decode(&self.seed).map_err(|_| bad())?.try_into().map_err(|_| bad())?;
        let pos: u128 = self.word_pos.parse().map_err(|_| bad())?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerState {
    /// RNG position right before the current permutation was drawn.
    pub rng: RngState,
    pub position: usize,
    pub started: bool,
}

/// Reshuffles its index range whenever fewer than a full batch remain.
#[derive(Debug, Clone)]
struct Sampler {
    n: usize,
    batch: usize,
    rng: ChaCha8Rng,
    perm: Vec<usize>,
    pos: usize,
    perm_word_pos: u128,
}

impl Sampler {
    fn new(n: usize, batch: usize, rng: ChaCha8Rng) -> Self {
        let perm_word_pos = rng.get_word_pos();
        Sampler { n, batch, rng, perm: Vec::new(), pos: 0, perm_word_pos }
    }

    fn reshuffle(&mut self) {
        self.perm_word_pos = self.rng.get_word_pos();
        self.perm = (0..self.n).collect();
        self.perm.shuffle(&mut self.rng);
        self.pos = 0;
    }

    fn next_batch(&mut self) -> Vec<usize> {
        if self.perm.is_empty() || self.pos + self.batch > self.n {
            self.reshuffle();
        }
        let b = self.perm[self.pos..self.pos + self.batch].to_vec();
        self.pos += self.batch;
        b
    }

    fn state(&self) -> SamplerState {
        SamplerState {
            rng: RngState::at(&self.rng, self.perm_word_pos),
            position: self.pos,
            started: !self.perm.is_empty(),
        }
    }

    fn restore(n: usize, batch: usize, state: &SamplerState) -> Result<Self> {
        let mut s = Sampler::new(n, batch, state.rng.rebuild()?);
        if state.started {
            s.reshuffle();
            if state.position > n {
                return Err(Error::config("sampler position beyond dataset in checkpoint"));
            }
            s.pos = state.position;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Adapt,
}

/// Per-iteration loss values. A trace is empty when its loss is not part of
/// the phase, otherwise its length equals the iteration counter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTraces {
    pub pnt_xent: Vec<f64>,
    pub classification: Vec<f64>,
    pub adversarial: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl LossTraces {
    fn named(&self) -> [(&'static str, &Vec<f64>); 4] {
        [
            ("pnt_xent", &self.pnt_xent),
            ("classification", &self.classification),
            ("adversarial", &self.adversarial),
            ("boundary", &self.boundary),
        ]
    }

    fn last_losses(&self) -> Vec<(String, f64)> {
        self.named()
            .iter()
            .filter_map(|(n, t)| t.last().map(|v| (n.to_string(), *v)))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Everything needed to continue a phase exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub phase: Phase,
    pub iteration: usize,
    pub traces: LossTraces,
    /// Iterations at which the stalled-loss detector fired.
    pub bottlenecks: Vec<usize>,
    pub config_digest: String,
    pub samplers: Vec<SamplerState>,
    pub rngs: Vec<RngState>,
}

impl TrainState {
    fn fresh(phase: Phase, config_digest: String) -> Self {
        TrainState {
            phase,
            iteration: 0,
            traces: LossTraces::default(),
            bottlenecks: Vec::new(),
            config_digest,
            samplers: Vec::new(),
            rngs: Vec::new(),
        }
    }

    fn divergence(&self, reason: String) -> Error {
        let phase = match self.phase {
            Phase::Pretrain => "pretrain",
            Phase::Adapt => "adapt",
        };
        Error::Divergence(Box::new(DivergenceReport {
            phase: phase.into(),
            iteration: self.iteration,
            reason,
            last_losses: self.traces.last_losses(),
        }))
    }

    /// Re-labels a divergence raised deeper down with this phase's position.
    fn tag(&self, e: Error) -> Error {
        match e {
            Error::Divergence(r) => self.divergence(r.reason),
            other => other,
        }
    }
}

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointManifest {
    format: u32,
    spec_digest: String,
    params_digest: String,
    state: TrainState,
}

/// Writes `model.bin` (tensor container) and `state.json` into `dir`.
pub fn save_checkpoint(dir: &Path, models: &ModelSet, state: &TrainState) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    crate::io::write_atomic(&dir.join("model.bin"), &models.to_bytes())?;
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT,
        spec_digest: hex::encode(models.spec_digest()),
        params_digest: models.params_digest(),
        state: state.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::internal(e.to_string()))?;
    crate::io::write_atomic_str(&dir.join("state.json"), &json)
}

/// Loads a checkpoint written by [`save_checkpoint`] into the layouts of `template`.
pub fn load_checkpoint(dir: &Path, template: &ModelSet) -> Result<(ModelSet, TrainState)> {
    let models = ModelSet::load(template, &dir.join("model.bin"))?;
    let text = std::fs::read_to_string(dir.join("state.json"))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::data(format!("state.json: {e}")))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::data(format!("unsupported checkpoint format {}", manifest.format)));
    }
    if manifest.params_digest != models.params_digest() {
        return Err(Error::data("checkpoint parameters do not match their manifest"));
    }
    Ok((models, manifest.state))
}

fn total_iterations(epochs: usize, per_epoch: usize, cap: Option<usize>) -> usize {
    let n = epochs * per_epoch;
    cap.map_or(n, |c| c.min(n))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Flags when the mean of the last `w` values is not below the mean of the `w` before.
fn bottleneck(trace: &[f64], w: usize) -> bool {
    if w == 0 || trace.len() < 2 * w {
        return false;
    }
    let n = trace.len();
    mean(&trace[n - w..]) >= mean(&trace[n - 2 * w..n - w])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PretrainMode {
    /// Partner view encoded by the pruned extractor.
    Pruned,
    /// Both views through the same unpruned extractor.
    Shared,
}

/// Pruned contrastive pre-training of the extractor and projection head on the
/// unlabeled union of both domains.
pub fn iaclr_pretrain(
    models: &mut ModelSet,
    source: &Tensor,
    target: &Tensor,
    cfg: &IaClrConfig,
    seed: u64,
) -> Result<TrainState> {
    pretrain(models, source, target, cfg, seed, PretrainMode::Pruned, None)
}

/// Plain two-view contrastive pre-training with shared weights (no pruning).
pub fn simclr_pretrain(
    models: &mut ModelSet,
    source: &Tensor,
    target: &Tensor,
    cfg: &IaClrConfig,
    seed: u64,
) -> Result<TrainState> {
    pretrain(models, source, target, cfg, seed, PretrainMode::Shared, None)
}

/// Continues an interrupted [`iaclr_pretrain`] run from its checkpointed state.
pub fn resume_pretrain(
    models: &mut ModelSet,
    source: &Tensor,
    target: &Tensor,
    cfg: &IaClrConfig,
    seed: u64,
    state: TrainState,
) -> Result<TrainState> {
    pretrain(models, source, target, cfg, seed, PretrainMode::Pruned, Some(state))
}

fn pretrain(
    models: &mut ModelSet,
    source: &Tensor,
    target: &Tensor,
    cfg: &IaClrConfig,
    seed: u64,
    mode: PretrainMode,
    resume: Option<TrainState>,
) -> Result<TrainState> {
    cfg.validate()?;
    // dead relus in a pruned extractor can zero a projection row
    let ccfg = ContrastiveConfig { zero_vectors: ZeroVectors::Neutral, ..ContrastiveConfig::new(cfg.temperature)? };
    if source.shape()[1..] != target.shape()[1..] {
        return Err(Error::config("source and target samples differ in shape"));
    }
    let pool = Tensor::concat_rows(&[source, target])?;
    if cfg.batch_size > pool.rows() {
        return Err(Error::config(format!(
            "pretrain batch_size {} exceeds the {} pooled samples",
            cfg.batch_size,
            pool.rows()
        )));
    }
    let total = total_iterations(cfg.epochs, pool.rows() / cfg.batch_size, cfg.max_iterations);

    let (mut state, mut sampler, mut dropout, mut aug_rng, mut prune_rng) = match resume {
        None => (
            TrainState::fresh(Phase::Pretrain, cfg.digest()),
            Sampler::new(pool.rows(), cfg.batch_size, stream_rng(seed, streams::PRETRAIN_BATCHES)),
            stream_rng(seed, streams::PRETRAIN_DROPOUT),
            stream_rng(seed, streams::AUGMENT),
            stream_rng(seed, streams::PRETRAIN_PRUNE),
        ),
        Some(s) => {
            if s.phase != Phase::Pretrain || s.config_digest != cfg.digest() {
                return Err(Error::config("checkpoint does not belong to this pre-training config"));
            }
            if s.samplers.len() != 1 || s.rngs.len() != 3 {
                return Err(Error::config("corrupt pre-training checkpoint"));
            }
            let sampler = Sampler::restore(pool.rows(), cfg.batch_size, &s.samplers[0])?;
            let (a, b, c) = (s.rngs[0].rebuild()?, s.rngs[1].rebuild()?, s.rngs[2].rebuild()?);
            (s, sampler, a, b, c)
        }
    };

    let mut mask = None;
    while state.iteration < total {
        let x = pool.select_rows(&sampler.next_batch());
        let x_hat = augment(&x, &cfg.augmentation, &mut aug_rng)?;
        let step = match mode {
            PretrainMode::Pruned => {
                if mask.is_none() || state.iteration % cfg.mask_every == 0 {
                    mask = Some(pruning::compute_mask(
                        &models.extractor.params,
                        cfg.alpha_g,
                        cfg.prune_strategy,
                        &mut prune_rng,
                    )?);
                }
                let m = mask.as_ref().unwrap();
                let pruned = pruning::apply_mask(&models.extractor.params, m)?;
                contrastive_step(models, &x, &x_hat, &pruned, &ccfg, &mut dropout)
                    .and_then(|(loss, gg, gh)| {
                        let g = sgd_step(&models.extractor.params, &gg, cfg.learning_rate, Some(m))?;
                        let h = sgd_step(&models.projection.params, &gh, cfg.learning_rate, None)?;
                        Ok((loss, g, h))
                    })
            }
            PretrainMode::Shared => {
                let shared = models.extractor.params.clone();
                contrastive_step(models, &x, &x_hat, &shared, &ccfg, &mut dropout).and_then(
                    |(loss, gg, gh)| {
                        let g = sgd_step(&models.extractor.params, &gg, cfg.learning_rate, None)?;
                        let h = sgd_step(&models.projection.params, &gh, cfg.learning_rate, None)?;
                        Ok((loss, g, h))
                    },
                )
            }
        };
        let (loss, g, h) = step.map_err(|e| state.tag(e))?;
        if !loss.is_finite() {
            return Err(state.divergence(format!("contrastive loss became {loss}")));
        }
        models.extractor.params = g;
        models.projection.params = h;
        state.traces.pnt_xent.push(loss);
        state.iteration += 1;
        if bottleneck(&state.traces.pnt_xent, cfg.bottleneck_window)
            && state.bottlenecks.last().is_none_or(|&i| i + cfg.bottleneck_window <= state.iteration)
        {
            log::warn!("pre-training loss stalled at iteration {}", state.iteration);
            state.bottlenecks.push(state.iteration);
        }
    }
    state.samplers = vec![sampler.state()];
    state.rngs = vec![
        RngState::capture(&dropout),
        RngState::capture(&aug_rng),
        RngState::capture(&prune_rng),
    ];
    Ok(state)
}

/// One contrastive forward/backward pass. The anchor view goes through the
/// extractor's own parameters, the partner view through `partner_params`.
/// Returns the loss, the summed extractor gradient of both paths and the
/// projection-head gradient.
fn contrastive_step(
    models: &ModelSet,
    x: &Tensor,
    x_hat: &Tensor,
    partner_params: &ParameterSet,
    ccfg: &ContrastiveConfig,
    dropout: &mut ChaCha8Rng,
) -> Result<(f64, ParameterSet, ParameterSet)> {
    let g = &models.extractor;
    let p = &models.projection;
    let (f, gc) = g.forward(x, Mode::Train, dropout)?;
    let (f_hat, gc_hat) = g.forward_with(partner_params, x_hat, Mode::Train, dropout)?;
    let (v, pc) = p.forward(&f, Mode::Train, dropout)?;
    let (v_hat, pc_hat) = p.forward(&f_hat, Mode::Train, dropout)?;
    let lg = contrastive::pnt_xent_grad(&v, &v_hat, ccfg)?;
    let pa = p.backward(&pc, &lg.first)?;
    let pb = p.backward(&pc_hat, &lg.second)?;
    let ga = g.backward(&gc, &pa.input)?;
    let gb = g.backward_with(partner_params, &gc_hat, &pb.input)?;
    Ok((lg.value, ga.params.add(&gb.params)?, pa.params.add(&pb.params)?))
}

/// Adversarial adaptation followed, each iteration, by the pruned boundary
/// step on the discriminator.
pub fn baada_train(
    models: &mut ModelSet,
    source: &DomainDataset,
    target: &UnlabeledDataset,
    cfg: &BaAdaConfig,
    seed: u64,
) -> Result<TrainState> {
    adapt(models, source, target, cfg, seed, true, None)
}

/// Plain adversarial adaptation: supervised + adversarial joint step only.
pub fn dann_train(
    models: &mut ModelSet,
    source: &DomainDataset,
    target: &UnlabeledDataset,
    cfg: &BaAdaConfig,
    seed: u64,
) -> Result<TrainState> {
    adapt(models, source, target, cfg, seed, false, None)
}

/// Continues an interrupted adaptation run. `boundary` must match the original run.
pub fn resume_adapt(
    models: &mut ModelSet,
    source: &DomainDataset,
    target: &UnlabeledDataset,
    cfg: &BaAdaConfig,
    seed: u64,
    boundary: bool,
    state: TrainState,
) -> Result<TrainState> {
    adapt(models, source, target, cfg, seed, boundary, Some(state))
}

fn adapt(
    models: &mut ModelSet,
    source: &DomainDataset,
    target: &UnlabeledDataset,
    cfg: &BaAdaConfig,
    seed: u64,
    boundary: bool,
    resume: Option<TrainState>,
) -> Result<TrainState> {
    cfg.validate()?;
    // a dead relu can zero a whole tap row
    let ccfg = ContrastiveConfig { zero_vectors: ZeroVectors::Neutral, ..ContrastiveConfig::new(cfg.temperature)? };
    let (Some(labels), Some(classes)) = (&source.labels, source.classes) else {
        return Err(Error::config("adaptation needs a labeled source domain"));
    };
    let expected = models.classifier.spec.output_shape()?[0];
    if classes != expected {
        return Err(Error::config(format!(
            "source has {classes} classes but the classifier predicts {expected}"
        )));
    }
    let (ns, nt) = (source.len(), target.len());
    if cfg.batch_size > ns.min(nt) {
        return Err(Error::config(format!(
            "adaptation batch_size {} exceeds the smaller domain ({} samples)",
            cfg.batch_size,
            ns.min(nt)
        )));
    }
    let total = total_iterations(cfg.epochs, ns.min(nt) / cfg.batch_size, cfg.max_iterations);
    let digest = format!("{}:{boundary}", cfg.digest());

    let (mut state, mut src, mut tgt, mut dropout, mut prune_rng) = match resume {
        None => (
            TrainState::fresh(Phase::Adapt, digest),
            Sampler::new(ns, cfg.batch_size, stream_rng(seed, streams::SOURCE_BATCHES)),
            Sampler::new(nt, cfg.batch_size, stream_rng(seed, streams::TARGET_BATCHES)),
            stream_rng(seed, streams::ADAPT_DROPOUT),
            stream_rng(seed, streams::ADAPT_PRUNE),
        ),
        Some(s) => {
            if s.phase != Phase::Adapt || s.config_digest != digest {
                return Err(Error::config("checkpoint does not belong to this adaptation config"));
            }
            if s.samplers.len() != 2 || s.rngs.len() != 2 {
                return Err(Error::config("corrupt adaptation checkpoint"));
            }
            let a = Sampler::restore(ns, cfg.batch_size, &s.samplers[0])?;
            let b = Sampler::restore(nt, cfg.batch_size, &s.samplers[1])?;
            let (d, p) = (s.rngs[0].rebuild()?, s.rngs[1].rebuild()?);
            (s, a, b, d, p)
        }
    };

    let mut mask = None;
    while state.iteration < total {
        let si = src.next_batch();
        let xs = source.features.select_rows(&si);
        let ys: Vec<usize> = si.iter().map(|&i| labels[i]).collect();
        let xt = target.features.select_rows(&tgt.next_batch());

        let (lc, ld) = joint_step(models, &xs, &ys, &xt, cfg, &mut dropout).map_err(|e| state.tag(e))?;
        state.traces.classification.push(lc);
        state.traces.adversarial.push(ld);

        if boundary {
            if mask.is_none() || state.iteration % cfg.mask_every == 0 {
                mask = Some(
                    pruning::compute_mask(
                        &models.discriminator.params,
                        cfg.alpha_d,
                        cfg.prune_strategy,
                        &mut prune_rng,
                    )
                    .map_err(|e| state.tag(e))?,
                );
            }
            let lbd = boundary_step(models, &xs, &xt, mask.as_ref().unwrap(), cfg, &ccfg)
                .map_err(|e| state.tag(e))?;
            state.traces.boundary.push(lbd);
            if !lbd.is_finite() || lbd > cfg.divergence_ceiling {
                return Err(state.divergence(format!(
                    "boundary loss {lbd} exceeded ceiling {}",
                    cfg.divergence_ceiling
                )));
            }
        }
        if !(lc.is_finite() && ld.is_finite()) {
            return Err(state.divergence(format!("non-finite losses L_c={lc}, L_d={ld}")));
        }
        state.iteration += 1;
    }
    state.samplers = vec![src.state(), tgt.state()];
    state.rngs = vec![RngState::capture(&dropout), RngState::capture(&prune_rng)];
    Ok(state)
}

fn column(v: Vec<f64>) -> Tensor {
    let n = v.len();
    Tensor::from_parts(vec![n, 1], v)
}

/// Supervised + adversarial update:
/// `θ_g -= ω(λ_c ∂L_c - λ_d ∂L_d)`, `θ_d -= λ_d ω ∂L_d`, `θ_c -= λ_c ω ∂L_c`.
fn joint_step(
    models: &mut ModelSet,
    xs: &Tensor,
    ys: &[usize],
    xt: &Tensor,
    cfg: &BaAdaConfig,
    dropout: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let g = &models.extractor;
    let c = &models.classifier;
    let d = &models.discriminator;
    let (fs, gcs) = g.forward(xs, Mode::Train, dropout)?;
    let (ft, gct) = g.forward(xt, Mode::Train, dropout)?;

    let (probs, cc) = c.forward(&fs, Mode::Train, dropout)?;
    let lc = models::classification_loss(&probs, ys)?;
    let c_grad = c.backward(&cc, &lc.grad)?;

    let (ds, dcs) = d.forward(&fs, Mode::Train, dropout)?;
    let (dt, dct) = d.forward(&ft, Mode::Train, dropout)?;
    let ld = models::adversarial_loss(ds.data(), dt.data(), cfg.reduction)?;
    let d_src = d.backward(&dcs, &column(ld.grad_source))?;
    let d_tgt = d.backward(&dct, &column(ld.grad_target))?;

    let up_s = c_grad.input.scale(cfg.lambda_c).add(&d_src.input.scale(-cfg.lambda_d))?;
    let up_t = d_tgt.input.scale(-cfg.lambda_d);
    let g_grad = g.backward(&gcs, &up_s)?.params.add(&g.backward(&gct, &up_t)?.params)?;
    let d_grad = d_src.params.add(&d_tgt.params)?;

    let lr = cfg.learning_rate;
    let new_g = sgd_step(&g.params, &g_grad, lr, None)?;
    let new_d = sgd_step(&d.params, &d_grad, cfg.lambda_d * lr, None)?;
    let new_c = sgd_step(&c.params, &c_grad.params, cfg.lambda_c * lr, None)?;
    models.extractor.params = new_g;
    models.discriminator.params = new_d;
    models.classifier.params = new_c;
    Ok((lc.value, ld.value))
}

/// Boundary step with extractor and classifier frozen: the pruned
/// discriminator's representation of both domains is scored with the
/// domain-supervised contrastive loss and only surviving discriminator
/// weights descend, by `λ_bd ω`.
fn boundary_step(
    models: &mut ModelSet,
    xs: &Tensor,
    xt: &Tensor,
    mask: &pruning::PruneMask,
    cfg: &BaAdaConfig,
    ccfg: &ContrastiveConfig,
) -> Result<f64> {
    let fs = models.extractor.infer(xs)?;
    let ft = models.extractor.infer(xt)?;
    let d = &models.discriminator;
    let pruned = pruning::apply_mask(&d.params, mask)?;
    let mut no_rng = ChaCha8Rng::seed_from_u64(0);
    let depth = DISCRIMINATOR_TAP_DEPTH;
    let (us, cs) = nn::forward_prefix(&d.spec, &pruned, &fs, Mode::Train, &mut no_rng, depth)?;
    let (ut, ct) = nn::forward_prefix(&d.spec, &pruned, &ft, Mode::Train, &mut no_rng, depth)?;
    let l = contrastive::psupcon_da_grad(DomainOutputs { source: &us, target: &ut }, ccfg)?;
    let gs = nn::backward(&d.spec, &pruned, &cs, &l.first)?;
    let gt = nn::backward(&d.spec, &pruned, &ct, &l.second)?;
    let grad = gs.params.add(&gt.params)?;
    let updated = sgd_step(&d.params, &grad, cfg.lambda_bd * cfg.learning_rate, Some(mask))?;
    models.discriminator.params = updated;
    Ok(l.value)
}

/// Which components are active in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dann,
    DannIaclr,
    DannBaada,
    Sdcda,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Dann, Variant::DannIaclr, Variant::DannBaada, Variant::Sdcda];

    pub fn pretrain(self) -> bool {
        matches!(self, Variant::DannIaclr | Variant::Sdcda)
    }

    pub fn boundary(self) -> bool {
        matches!(self, Variant::DannBaada | Variant::Sdcda)
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Dann => "DANN",
            Variant::DannIaclr => "DANN+Ia-CLR",
            Variant::DannBaada => "DANN+Ba-ADA",
            Variant::Sdcda => "Sd-CDA",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '+'], "_").as_str() {
            "dann" => Ok(Variant::Dann),
            "dann_iaclr" | "dann_ia_clr" => Ok(Variant::DannIaclr),
            "dann_baada" | "dann_ba_ada" => Ok(Variant::DannBaada),
            "sdcda" | "sd_cda" => Ok(Variant::Sdcda),
            _ => Err(Error::config(format!("unknown variant {s:?}"))),
        }
    }
}

/// Result of a complete training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub models: ModelSet,
    pub pretrain: Option<TrainState>,
    pub adapt: TrainState,
    pub warnings: Vec<String>,
}

/// Optional pre-training followed by adaptation, per `variant`.
pub fn sdcda_train(
    mut models: ModelSet,
    source: &DomainDataset,
    target: &UnlabeledDataset,
    iaclr: &IaClrConfig,
    baada: &BaAdaConfig,
    variant: Variant,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut warnings = Vec::new();
    let pretrain = if variant.pretrain() {
        warnings.extend(iaclr.warnings());
        Some(iaclr_pretrain(&mut models, &source.features, &target.features, iaclr, seed)?)
    } else {
        None
    };
    warnings.extend(baada.warnings());
    let adapt = adapt(&mut models, source, target, baada, seed, variant.boundary(), None)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(TrainOutcome { models, pretrain, adapt, warnings })
}

/// Adaptation starting from an already pre-trained model set.
pub fn adapt_from_pretrained(
    mut models: ModelSet,
    source: &DomainDataset,
    target: &UnlabeledDataset,
    baada: &BaAdaConfig,
    variant: Variant,
    seed: u64,
) -> Result<(ModelSet, TrainState)> {
    let state = adapt(&mut models, source, target, baada, seed, variant.boundary(), None)?;
    Ok((models, state))
}
