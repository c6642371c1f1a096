//! Architectures for the feature extractor, projection head, domain
//! discriminator and label classifier, plus the supervised and adversarial
//! losses they are trained with.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{self, ContentDigest};
use crate::error::{Error, Result};
use crate::nn::{self, ForwardCache, Gradients, Layer, Mode, NetworkSpec};
use crate::tensor::{ParameterSet, Tensor};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the losses.
pub const PROB_CLAMP: f64 = 1e-12;

/// Default hidden width of every two-layer head.
pub const DEFAULT_HEAD_HIDDEN: usize = 64;

/// Number of discriminator layers in front of the representation tap
/// (dense + relu). The scalar head is `sigmoid(dense(tap))`.
pub const DISCRIMINATOR_TAP_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExtractorSpec {
    /// Conv(3x3,c0)-Pool-Conv(3x3,c1)-Pool-Conv(3x3,c2), ReLU after each conv.
    Cnn { input_shape: [usize; 3], channels: [usize; 3] },
    /// FNN(hidden)-Dropout-FNN(features)-Dropout, ReLU after each dense layer.
    Fnn { inputs: usize, hidden: usize, features: usize, dropout: f64 },
}

impl ExtractorSpec {
    /// The 32/64/128-channel image extractor for single-channel `h x w` inputs.
    pub fn cnn(height: usize, width: usize) -> Self {
        ExtractorSpec::Cnn { input_shape: [1, height, width], channels: [32, 64, 128] }
    }

    /// The FNN(100)-Dropout(0.3)-FNN(24)-Dropout(0.3) extractor.
    pub fn fnn(inputs: usize) -> Self {
        ExtractorSpec::Fnn { inputs, hidden: 100, features: 24, dropout: 0.3 }
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        match *self {
            ExtractorSpec::Cnn { input_shape, channels } => NetworkSpec::new(
                input_shape.to_vec(),
                vec![
                    Layer::Conv2d { in_channels: input_shape[0], out_channels: channels[0] },
                    Layer::Relu,
                    Layer::MaxPool2d,
                    Layer::Conv2d { in_channels: channels[0], out_channels: channels[1] },
                    Layer::Relu,
                    Layer::MaxPool2d,
                    Layer::Conv2d { in_channels: channels[1], out_channels: channels[2] },
                    Layer::Relu,
                    Layer::Flatten,
                ],
            ),
            ExtractorSpec::Fnn { inputs, hidden, features, dropout } => NetworkSpec::new(
                vec![inputs],
                vec![
                    Layer::Dense { inputs, outputs: hidden },
                    Layer::Relu,
                    Layer::Dropout { rate: dropout },
                    Layer::Dense { inputs: hidden, outputs: features },
                    Layer::Relu,
                    Layer::Dropout { rate: dropout },
                ],
            ),
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            ExtractorSpec::Cnn { input_shape, .. } => input_shape.to_vec(),
            ExtractorSpec::Fnn { inputs, .. } => vec![*inputs],
        }
    }

    pub fn feature_dim(&self) -> Result<usize> {
        Ok(self.network_spec()?.output_shape()?[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Projection { outputs: usize },
    Discriminator,
    Classifier { classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub kind: HeadKind,
    pub inputs: usize,
    pub hidden: usize,
}

impl HeadSpec {
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let HeadSpec { kind, inputs, hidden } = *self;
        let first = [Layer::Dense { inputs, outputs: hidden }, Layer::Relu];
        let tail = match kind {
            HeadKind::Projection { outputs } => vec![Layer::Dense { inputs: hidden, outputs }],
            HeadKind::Discriminator => {
                if hidden < 2 {
                    return Err(Error::config("discriminator hidden width must be at least 2"));
                }
                vec![Layer::Dense { inputs: hidden, outputs: 1 }, Layer::Sigmoid]
            }
            HeadKind::Classifier { classes } => {
                if classes < 2 {
                    return Err(Error::config("classifier needs at least 2 classes"));
                }
                vec![Layer::Dense { inputs: hidden, outputs: classes }, Layer::Softmax]
            }
        };
        NetworkSpec::new(vec![inputs], first.into_iter().chain(tail).collect())
    }
}

/// Anything [`build_model`] can instantiate.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Extractor(ExtractorSpec),
    Head(HeadSpec),
}

/// A network layout together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: ParameterSet,
}

impl Network {
    pub fn new(spec: NetworkSpec, params: ParameterSet) -> Result<Self> {
        spec.check_params(&params)?;
        Ok(Network { spec, params })
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &Tensor,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor, ForwardCache)> {
        nn::forward(&self.spec, &self.params, input, mode, rng)
    }

    /// Forward pass with substitute parameters (e.g. a pruned copy).
    pub fn forward_with<R: Rng + ?Sized>(
        &self,
        params: &ParameterSet,
        input: &Tensor,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor, ForwardCache)> {
        nn::forward(&self.spec, params, input, mode, rng)
    }

    /// Deterministic inference; dropout disabled.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(input, Mode::Eval, &mut unused)?.0)
    }

    pub fn backward(&self, cache: &ForwardCache, upstream: &Tensor) -> Result<Gradients> {
        nn::backward(&self.spec, &self.params, cache, upstream)
    }

    pub fn backward_with(
        &self,
        params: &ParameterSet,
        cache: &ForwardCache,
        upstream: &Tensor,
    ) -> Result<Gradients> {
        nn::backward(&self.spec, params, cache, upstream)
    }
}

/// Builds and initializes a model; identical `(spec, seed, stream)` give
/// bit-identical parameters.
pub fn build_model(spec: &ModelSpec, seed: u64, stream: u64) -> Result<Network> {
    let net = match spec {
        ModelSpec::Extractor(e) => e.network_spec()?,
        ModelSpec::Head(h) => h.network_spec()?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let params = net.init_params(&mut rng);
    Ok(Network { spec: net, params })
}

/// Sizes shared by the four networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub extractor: ExtractorSpec,
    pub head_hidden: usize,
    pub projection_dim: usize,
    pub classes: usize,
}

impl Architecture {
    pub fn projection(&self) -> Result<HeadSpec> {
        Ok(HeadSpec {
            kind: HeadKind::Projection { outputs: self.projection_dim },
            inputs: self.extractor.feature_dim()?,
            hidden: self.head_hidden,
        })
    }

    pub fn discriminator(&self) -> Result<HeadSpec> {
        Ok(HeadSpec {
            kind: HeadKind::Discriminator,
            inputs: self.extractor.feature_dim()?,
            hidden: self.head_hidden,
        })
    }

    pub fn classifier(&self) -> Result<HeadSpec> {
        Ok(HeadSpec {
            kind: HeadKind::Classifier { classes: self.classes },
            inputs: self.extractor.feature_dim()?,
            hidden: self.head_hidden,
        })
    }
}

/// RNG streams used to initialize each network from the run seed.
pub mod streams {
    pub const EXTRACTOR: u64 = 1;
    pub const PROJECTION: u64 = 2;
    pub const DISCRIMINATOR: u64 = 3;
    pub const CLASSIFIER: u64 = 4;
}

/// Feature extractor G, projection head P, discriminator D and classifier C.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub extractor: Network,
    pub projection: Network,
    pub discriminator: Network,
    pub classifier: Network,
}

const PARTS: [&str; 4] = ["extractor", "projection", "discriminator", "classifier"];

impl ModelSet {
    pub fn build(arch: &Architecture, seed: u64) -> Result<Self> {
        Ok(ModelSet {
            extractor: build_model(&ModelSpec::Extractor(arch.extractor.clone()), seed, streams::EXTRACTOR)?,
            projection: build_model(&ModelSpec::Head(arch.projection()?), seed, streams::PROJECTION)?,
            discriminator: build_model(
                &ModelSpec::Head(arch.discriminator()?),
                seed,
                streams::DISCRIMINATOR,
            )?,
            classifier: build_model(&ModelSpec::Head(arch.classifier()?), seed, streams::CLASSIFIER)?,
        })
    }

    fn parts(&self) -> [&Network; 4] {
        [&self.extractor, &self.projection, &self.discriminator, &self.classifier]
    }

    /// Canonical JSON of the four layouts; its SHA-256 goes in checkpoint headers.
    pub fn spec_descriptor(&self) -> String {
        let specs: Vec<&NetworkSpec> = self.parts().iter().map(|n| &n.spec).collect();
        serde_json::to_string(&specs).expect("network specs serialize")
    }

    pub fn spec_digest(&self) -> ContentDigest {
        container::descriptor_digest(&self.spec_descriptor())
    }

    /// All parameters, names prefixed by component.
    pub fn all_params(&self) -> ParameterSet {
        let mut all = ParameterSet::new();
        for (name, net) in PARTS.iter().zip(self.parts()) {
            all.extend(net.params.prefixed(name)).expect("component prefixes are unique");
        }
        all
    }

    pub fn params_digest(&self) -> String {
        self.all_params().digest()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        container::encode(&self.spec_digest(), &self.all_params())
    }

    /// Loads parameters into the layouts of `template`, checking the digest.
    pub fn from_bytes(template: &ModelSet, bytes: &[u8]) -> Result<ModelSet> {
        let (digest, all) = container::decode(bytes)?;
        if digest != template.spec_digest() {
            return Err(Error::config("checkpoint was written for a different architecture"));
        }
        let mut out = template.clone();
        let nets = [
            &mut out.extractor,
            &mut out.projection,
            &mut out.discriminator,
            &mut out.classifier,
        ];
        for (name, net) in PARTS.iter().zip(nets) {
            let params = all.strip_prefix(name);
            net.spec.check_params(&params)?;
            net.params = params;
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(template: &ModelSet, path: &Path) -> Result<ModelSet> {
        ModelSet::from_bytes(template, &std::fs::read(path)?)
    }

    /// Class probabilities `C(G(x))` in eval mode.
    pub fn predict_proba(&self, input: &Tensor) -> Result<Tensor> {
        let f = self.extractor.infer(input)?;
        self.classifier.infer(&f)
    }
}

#[derive(Debug, Clone)]
pub struct ClassificationLoss {
    pub value: f64,
    /// Gradient w.r.t. the probability matrix.
    pub grad: Tensor,
    /// How many true-label probabilities hit the clamp floor.
    pub clamped: usize,
}

/// `-(1/n) sum_i log p_i[y_i]`, with labels as 0-based class indices.
pub fn classification_loss(probs: &Tensor, labels: &[usize]) -> Result<ClassificationLoss> {
    if probs.shape().len() != 2 {
        return Err(Error::domain("probabilities must be an n x K matrix"));
    }
    let (n, k) = (probs.rows(), probs.row_len());
    if labels.len() != n {
        return Err(Error::domain(format!("{} labels for {n} rows", labels.len())));
    }
    let mut grad = vec![0.0; n * k];
    let mut total = 0.0;
    let mut clamped = 0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::domain(format!("label {} outside 1..={k}", y + 1)));
        }
        let row = probs.row(i);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("row {i} sums to {sum}, not 1")));
        }
        let p = row[y];
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total -= pc.ln();
        if p < PROB_CLAMP {
            clamped += 1;
        } else if p <= 1.0 - PROB_CLAMP {
            grad[i * k + y] = -1.0 / (n as f64 * p);
        }
    }
    if clamped > 0 {
        log::warn!("classification loss clamped {clamped} zero-probability labels");
    }
    Ok(ClassificationLoss {
        value: total / n as f64,
        grad: Tensor::from_parts(vec![n, k], grad),
        clamped,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Plain sums over both domains.
    #[default]
    Sum,
    /// Each domain's sum divided by its sample count.
    Mean,
}

#[derive(Debug, Clone)]
pub struct AdversarialLoss {
    pub value: f64,
    pub grad_source: Vec<f64>,
    pub grad_target: Vec<f64>,
}

/// `-sum log D(source) - sum log(1 - D(target))`, source labeled 1.
pub fn adversarial_loss(
    d_source: &[f64],
    d_target: &[f64],
    reduction: Reduction,
) -> Result<AdversarialLoss> {
    if d_source.is_empty() || d_target.is_empty() {
        return Err(Error::domain("adversarial loss needs outputs from both domains"));
    }
    let (ws, wt) = match reduction {
        Reduction::Sum => (1.0, 1.0),
        Reduction::Mean => (1.0 / d_source.len() as f64, 1.0 / d_target.len() as f64),
    };
    let lo = PROB_CLAMP;
    let hi = 1.0 - PROB_CLAMP;
    let mut value = 0.0;
    let mut grad_source = Vec::with_capacity(d_source.len());
    for &d in d_source {
        value -= ws * d.clamp(lo, hi).ln();
        grad_source.push(if (lo..=hi).contains(&d) { -ws / d } else { 0.0 });
    }
    let mut grad_target = Vec::with_capacity(d_target.len());
    for &d in d_target {
        value -= wt * (1.0 - d.clamp(lo, hi)).ln();
        grad_target.push(if (lo..=hi).contains(&d) { wt / (1.0 - d) } else { 0.0 });
    }
    Ok(AdversarialLoss { value, grad_source, grad_target })
}
