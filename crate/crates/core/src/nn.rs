//! Deterministic layer-graph evaluation with exact reverse-mode gradients.
//!
//! A network is a [`NetworkSpec`] (a straight chain of layers) plus a
//! [`ParameterSet`] holding `l{index}.weight` / `l{index}.bias` tensors for
//! every parametric layer. Inputs carry a leading batch dimension.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DivergenceReport, Error, Result};
use crate::pruning::PruneMask;
use crate::tensor::{ParameterSet, Tensor};

/// Norm floor used by [`Layer::L2Normalize`] for all-zero rows.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense { inputs: usize, outputs: usize },
    /// 3x3 kernel, stride 1, no padding.
    Conv2d { in_channels: usize, out_channels: usize },
    /// 2x2 window, stride 2.
    MaxPool2d,
    Flatten,
    Relu,
    Dropout { rate: f64 },
    Sigmoid,
    Softmax,
    L2Normalize,
}

impl Layer {
    fn name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool2d => "maxpool2d",
            Layer::Flatten => "flatten",
            Layer::Relu => "relu",
            Layer::Dropout { .. } => "dropout",
            Layer::Sigmoid => "sigmoid",
            Layer::Softmax => "softmax",
            Layer::L2Normalize => "l2_normalize",
        }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }
}

pub fn weight_name(layer: usize) -> String {
    format!("l{layer}.weight")
}

pub fn bias_name(layer: usize) -> String {
    format!("l{layer}.bias")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Per-sample input shape: `[features]` or `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let spec = NetworkSpec { input_shape, layers };
        spec.layer_shapes()?;
        Ok(spec)
    }

    /// Per-sample shape after each layer; entry 0 is the input shape.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("invalid input shape {:?}", self.input_shape)));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().unwrap();
            let bad = |msg: String| Error::config(format!("layer {i} ({}): {msg}", layer.name()));
            let next = match layer {
                Layer::Dense { inputs, outputs } => {
                    if cur.len() != 1 || cur[0] != *inputs {
                        return Err(bad(format!("expects input [{inputs}], got {cur:?}")));
                    }
                    if *outputs == 0 {
                        return Err(bad("zero outputs".into()));
                    }
                    vec![*outputs]
                }
                Layer::Conv2d { in_channels, out_channels } => {
                    if cur.len() != 3 || cur[0] != *in_channels {
                        return Err(bad(format!("expects [{in_channels}, h, w], got {cur:?}")));
                    }
                    if cur[1] < 3 || cur[2] < 3 || *out_channels == 0 {
                        return Err(bad(format!("input {cur:?} too small for a 3x3 kernel")));
                    }
                    vec![*out_channels, cur[1] - 2, cur[2] - 2]
                }
                Layer::MaxPool2d => {
                    if cur.len() != 3 || cur[1] < 2 || cur[2] < 2 {
                        return Err(bad(format!("expects [c, h>=2, w>=2], got {cur:?}")));
                    }
                    vec![cur[0], cur[1] / 2, cur[2] / 2]
                }
                Layer::Flatten => vec![cur.iter().product()],
                Layer::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(bad(format!("rate {rate} outside [0, 1)")));
                    }
                    cur.clone()
                }
                Layer::Softmax | Layer::L2Normalize => {
                    if cur.len() != 1 {
                        return Err(bad(format!("expects a flat vector, got {cur:?}")));
                    }
                    cur.clone()
                }
                Layer::Relu | Layer::Sigmoid => cur.clone(),
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.layer_shapes()?.pop().unwrap())
    }

    /// Shapes of every parameter tensor, in canonical order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense { inputs, outputs } => {
                    out.push((weight_name(i), vec![*outputs, *inputs]));
                    out.push((bias_name(i), vec![*outputs]));
                }
                Layer::Conv2d { in_channels, out_channels } => {
                    out.push((weight_name(i), vec![*out_channels, *in_channels, 3, 3]));
                    out.push((bias_name(i), vec![*out_channels]));
                }
                _ => {}
            }
        }
        out
    }

    /// Checks that `params` holds exactly the tensors this spec needs.
    pub fn check_params(&self, params: &ParameterSet) -> Result<()> {
        let shapes = self.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::config(format!(
                "network needs {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, shape), (pname, t)) in shapes.iter().zip(params.iter()) {
            if name != pname || shape.as_slice() != t.shape() {
                return Err(Error::config(format!(
                    "parameter {pname}{:?} does not match expected {name}{shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> ParameterSet {
        let mut params = ParameterSet::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let (fan_in, fan_out, wshape, out) = match layer {
                Layer::Dense { inputs, outputs } => {
                    (*inputs, *outputs, vec![*outputs, *inputs], *outputs)
                }
                Layer::Conv2d { in_channels, out_channels } => (
                    in_channels * 9,
                    out_channels * 9,
                    vec![*out_channels, *in_channels, 3, 3],
                    *out_channels,
                ),
                _ => continue,
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n: usize = wshape.iter().product();
            let w = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
            params.insert(weight_name(i), Tensor::from_parts(wshape, w)).unwrap();
            params.insert(bias_name(i), Tensor::zeros(&[out])).unwrap();
        }
        params
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
enum Step {
    Dense { input: Tensor },
    Conv2d { input: Tensor },
    MaxPool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Flatten { input_shape: Vec<usize> },
    Relu { input: Tensor },
    Dropout { scale: Option<Vec<f64>> },
    Sigmoid { output: Tensor },
    Softmax { output: Tensor },
    L2Normalize { output: Tensor, norms: Vec<f64> },
}

impl Step {
    fn matches(&self, layer: &Layer) -> bool {
        matches!(
            (self, layer),
            (Step::Dense { .. }, Layer::Dense { .. })
                | (Step::Conv2d { .. }, Layer::Conv2d { .. })
                | (Step::MaxPool { .. }, Layer::MaxPool2d)
                | (Step::Flatten { .. }, Layer::Flatten)
                | (Step::Relu { .. }, Layer::Relu)
                | (Step::Dropout { .. }, Layer::Dropout { .. })
                | (Step::Sigmoid { .. }, Layer::Sigmoid)
                | (Step::Softmax { .. }, Layer::Softmax)
                | (Step::L2Normalize { .. }, Layer::L2Normalize)
        )
    }
}

/// Intermediate values recorded by [`forward`] for use by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    batch: usize,
    param_digest: u64,
    steps: Vec<Step>,
}

impl ForwardCache {
    /// Number of layers that were evaluated.
    pub fn depth(&self) -> usize {
        self.steps.len()
    }
}

/// Cheap fingerprint tying a cache to the parameter values it was built from.
fn fingerprint(params: &ParameterSet) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (name, t) in params.iter() {
        for b in name.bytes() {
            h = (h ^ b as u64).wrapping_mul(0x1000_0000_01b3);
        }
        let d = t.data();
        // first/last values and length are enough to catch stale caches
        for v in [d.first(), d.last()].into_iter().flatten() {
            h = (h ^ v.to_bits()).wrapping_mul(0x1000_0000_01b3);
        }
        h = (h ^ d.len() as u64).wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Evaluates the whole network.
pub fn forward<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &ParameterSet,
    input: &Tensor,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, ForwardCache)> {
    forward_prefix(spec, params, input, mode, rng, spec.layers.len())
}

/// Evaluates the first `depth` layers only; the output is the activation
/// feeding layer `depth`.
pub fn forward_prefix<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &ParameterSet,
    input: &Tensor,
    mode: Mode,
    rng: &mut R,
    depth: usize,
) -> Result<(Tensor, ForwardCache)> {
    if depth > spec.layers.len() {
        return Err(Error::internal(format!("prefix depth {depth} exceeds network")));
    }
    if input.shape().len() < 2 || input.shape()[1..] != spec.input_shape[..] {
        return Err(Error::config(format!(
            "layer 0 ({}): network input {:?} does not accept batch {:?}",
            spec.layers.first().map(Layer::name).unwrap_or("none"),
            spec.input_shape,
            input.shape()
        )));
    }
    let batch = input.rows();
    let mut x = input.clone();
    let mut steps = Vec::with_capacity(depth);
    for (i, layer) in spec.layers[..depth].iter().enumerate() {
        let (y, step) = match layer {
            Layer::Dense { inputs, outputs } => {
                let w = param(params, &weight_name(i))?;
                let b = param(params, &bias_name(i))?;
                let y = dense_forward(&x, w.data(), b.data(), *inputs, *outputs);
                (y, Step::Dense { input: x })
            }
            Layer::Conv2d { in_channels, out_channels } => {
                let w = param(params, &weight_name(i))?;
                let b = param(params, &bias_name(i))?;
                let y = conv_forward(&x, w.data(), b.data(), *in_channels, *out_channels);
                (y, Step::Conv2d { input: x })
            }
            Layer::MaxPool2d => {
                let (y, argmax) = pool_forward(&x);
                (y, Step::MaxPool { input_shape: x.shape().to_vec(), argmax })
            }
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let w = x.row_len();
                let y = Tensor::from_parts(vec![batch, w], x.into_data());
                (y, Step::Flatten { input_shape: shape })
            }
            Layer::Relu => {
                let y = Tensor::from_parts(
                    x.shape().to_vec(),
                    x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
                );
                (y, Step::Relu { input: x })
            }
            Layer::Dropout { rate } => {
                if mode == Mode::Train && *rate > 0.0 {
                    let keep = 1.0 - rate;
                    let scale: Vec<f64> = (0..x.len())
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    let y = Tensor::from_parts(
                        x.shape().to_vec(),
                        x.data().iter().zip(&scale).map(|(v, s)| v * s).collect(),
                    );
                    (y, Step::Dropout { scale: Some(scale) })
                } else {
                    (x, Step::Dropout { scale: None })
                }
            }
            Layer::Sigmoid => {
                let y = Tensor::from_parts(
                    x.shape().to_vec(),
                    x.data().iter().map(|&v| sigmoid(v)).collect(),
                );
                (y.clone(), Step::Sigmoid { output: y })
            }
            Layer::Softmax => {
                let y = softmax_rows(&x);
                (y.clone(), Step::Softmax { output: y })
            }
            Layer::L2Normalize => {
                let (y, norms) = l2_normalize_rows(&x);
                (y.clone(), Step::L2Normalize { output: y, norms })
            }
        };
        steps.push(step);
        x = y;
    }
    let cache = ForwardCache { mode, batch, param_digest: fingerprint(params), steps };
    Ok((x, cache))
}

/// Parameter gradients plus the gradient with respect to the network input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParameterSet,
    pub input: Tensor,
}

/// Back-propagates `upstream` (gradient w.r.t. the cached output) through the
/// evaluated layers. Layers beyond the cached prefix receive zero gradient.
pub fn backward(
    spec: &NetworkSpec,
    params: &ParameterSet,
    cache: &ForwardCache,
    upstream: &Tensor,
) -> Result<Gradients> {
    if cache.mode != Mode::Train {
        return Err(Error::internal("backward needs a cache recorded in train mode"));
    }
    if cache.steps.len() > spec.layers.len()
        || cache.steps.iter().zip(&spec.layers).any(|(s, l)| !s.matches(l))
    {
        return Err(Error::internal("forward cache does not belong to this network"));
    }
    if cache.param_digest != fingerprint(params) {
        return Err(Error::internal("forward cache is stale: parameters changed since forward"));
    }
    if upstream.rows() != cache.batch {
        return Err(Error::internal("upstream batch size does not match the cache"));
    }
    let mut grads = params.zeros_like();
    let mut g = upstream.clone();
    for (i, step) in cache.steps.iter().enumerate().rev() {
        g = match (step, &spec.layers[i]) {
            (Step::Dense { input }, Layer::Dense { inputs, outputs }) => {
                let w = param(params, &weight_name(i))?;
                let (dx, dw, db) = dense_backward(input, w.data(), &g, *inputs, *outputs);
                grads.get_mut(&weight_name(i)).unwrap().data_mut().copy_from_slice(&dw);
                grads.get_mut(&bias_name(i)).unwrap().data_mut().copy_from_slice(&db);
                dx
            }
            (Step::Conv2d { input }, Layer::Conv2d { in_channels, out_channels }) => {
                let w = param(params, &weight_name(i))?;
                let (dx, dw, db) = conv_backward(input, w.data(), &g, *in_channels, *out_channels);
                grads.get_mut(&weight_name(i)).unwrap().data_mut().copy_from_slice(&dw);
                grads.get_mut(&bias_name(i)).unwrap().data_mut().copy_from_slice(&db);
                dx
            }
            (Step::MaxPool { input_shape, argmax }, _) => {
                let mut dx = vec![0.0; input_shape.iter().product()];
                for (o, &src) in argmax.iter().enumerate() {
                    dx[src] += g.data()[o];
                }
                Tensor::from_parts(input_shape.clone(), dx)
            }
            (Step::Flatten { input_shape }, _) => {
                Tensor::from_parts(input_shape.clone(), g.into_data())
            }
            (Step::Relu { input }, _) => Tensor::from_parts(
                g.shape().to_vec(),
                g.data()
                    .iter()
                    .zip(input.data())
                    .map(|(d, &x)| if x > 0.0 { *d } else { 0.0 })
                    .collect(),
            ),
            (Step::Dropout { scale }, _) => match scale {
                Some(s) => Tensor::from_parts(
                    g.shape().to_vec(),
                    g.data().iter().zip(s).map(|(d, k)| d * k).collect(),
                ),
                None => g,
            },
            (Step::Sigmoid { output }, _) => Tensor::from_parts(
                g.shape().to_vec(),
                g.data().iter().zip(output.data()).map(|(d, y)| d * y * (1.0 - y)).collect(),
            ),
            (Step::Softmax { output }, _) => {
                let w = output.row_len();
                let mut dx = vec![0.0; output.len()];
                for b in 0..output.rows() {
                    let y = output.row(b);
                    let up = &g.data()[b * w..(b + 1) * w];
                    let dot: f64 = y.iter().zip(up).map(|(a, c)| a * c).sum();
                    for j in 0..w {
                        dx[b * w + j] = y[j] * (up[j] - dot);
                    }
                }
                Tensor::from_parts(output.shape().to_vec(), dx)
            }
            (Step::L2Normalize { output, norms }, _) => {
                let w = output.row_len();
                let mut dx = vec![0.0; output.len()];
                for b in 0..output.rows() {
                    let y = output.row(b);
                    let up = &g.data()[b * w..(b + 1) * w];
                    let dot: f64 = y.iter().zip(up).map(|(a, c)| a * c).sum();
                    for j in 0..w {
                        dx[b * w + j] = (up[j] - y[j] * dot) / norms[b];
                    }
                }
                Tensor::from_parts(output.shape().to_vec(), dx)
            }
            _ => return Err(Error::internal("forward cache does not belong to this network")),
        };
    }
    Ok(Gradients { params: grads, input: g })
}

/// One plain gradient-descent step `p - lr * g`. Coordinates marked pruned in
/// `mask` are left bit-for-bit unchanged.
pub fn sgd_step(
    params: &ParameterSet,
    grads: &ParameterSet,
    lr: f64,
    mask: Option<&PruneMask>,
) -> Result<ParameterSet> {
    params.check_aligned(grads)?;
    if let Some(m) = mask {
        m.check_aligned(params)?;
    }
    for (name, g) in grads.iter() {
        if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence(Box::new(DivergenceReport {
                phase: "sgd_step".into(),
                iteration: 0,
                reason: format!("non-finite gradient {} in {name}[{i}]", g.data()[i]),
                last_losses: Vec::new(),
            })));
        }
    }
    if lr == 0.0 {
        return Ok(params.clone());
    }
    let mut out = params.clone();
    for ((name, p), (_, g)) in out.iter_mut().zip(grads.iter()) {
        let keep = mask.and_then(|m| m.keep(name));
        let data = p.data_mut();
        match keep {
            Some(keep) => {
                for ((x, d), k) in data.iter_mut().zip(g.data()).zip(keep) {
                    if *k {
                        *x -= lr * d;
                    }
                }
            }
            None => {
                for (x, d) in data.iter_mut().zip(g.data()) {
                    *x -= lr * d;
                }
            }
        }
    }
    Ok(out)
}

fn param<'a>(params: &'a ParameterSet, name: &str) -> Result<&'a Tensor> {
    params
        .get(name)
        .ok_or_else(|| Error::config(format!("missing parameter tensor {name}")))
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_rows(x: &Tensor) -> Tensor {
    let w = x.row_len();
    let mut out = Vec::with_capacity(x.len());
    for b in 0..x.rows() {
        let row = x.row(b);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / s));
    }
    debug_assert_eq!(out.len(), x.rows() * w);
    Tensor::from_parts(x.shape().to_vec(), out)
}

pub(crate) fn l2_normalize_rows(x: &Tensor) -> (Tensor, Vec<f64>) {
    let mut out = Vec::with_capacity(x.len());
    let mut norms = Vec::with_capacity(x.rows());
    for b in 0..x.rows() {
        let row = x.row(b);
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
        norms.push(n);
        out.extend(row.iter().map(|v| v / n));
    }
    (Tensor::from_parts(x.shape().to_vec(), out), norms)
}

fn dense_forward(x: &Tensor, w: &[f64], b: &[f64], inputs: usize, outputs: usize) -> Tensor {
    let batch = x.rows();
    let mut y = vec![0.0; batch * outputs];
    for n in 0..batch {
        let xr = x.row(n);
        for o in 0..outputs {
            let wr = &w[o * inputs..(o + 1) * inputs];
            let mut acc = b[o];
            for (a, c) in wr.iter().zip(xr) {
                acc += a * c;
            }
            y[n * outputs + o] = acc;
        }
    }
    Tensor::from_parts(vec![batch, outputs], y)
}

fn dense_backward(
    x: &Tensor,
    w: &[f64],
    up: &Tensor,
    inputs: usize,
    outputs: usize,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let batch = x.rows();
    let mut dx = vec![0.0; batch * inputs];
    let mut dw = vec![0.0; outputs * inputs];
    let mut db = vec![0.0; outputs];
    for n in 0..batch {
        let xr = x.row(n);
        let dxr = &mut dx[n * inputs..(n + 1) * inputs];
        for o in 0..outputs {
            let g = up.data()[n * outputs + o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let wr = &w[o * inputs..(o + 1) * inputs];
            let dwr = &mut dw[o * inputs..(o + 1) * inputs];
            for i in 0..inputs {
                dwr[i] += g * xr[i];
                dxr[i] += g * wr[i];
            }
        }
    }
    (Tensor::from_parts(vec![batch, inputs], dx), dw, db)
}

fn conv_forward(x: &Tensor, w: &[f64], b: &[f64], cin: usize, cout: usize) -> Tensor {
    let (batch, h, wd) = (x.shape()[0], x.shape()[2], x.shape()[3]);
    let (oh, ow) = (h - 2, wd - 2);
    let mut y = vec![0.0; batch * cout * oh * ow];
    let xd = x.data();
    for n in 0..batch {
        for co in 0..cout {
            let ybase = (n * cout + co) * oh * ow;
            for v in &mut y[ybase..ybase + oh * ow] {
                *v = b[co];
            }
            for ci in 0..cin {
                let xbase = (n * cin + ci) * h * wd;
                let kbase = (co * cin + ci) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let k = w[kbase + ky * 3 + kx];
                        if k == 0.0 {
                            continue;
                        }
                        for oy in 0..oh {
                            let xrow = xbase + (oy + ky) * wd + kx;
                            let yrow = ybase + oy * ow;
                            for ox in 0..ow {
                                y[yrow + ox] += k * xd[xrow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(vec![batch, cout, oh, ow], y)
}

fn conv_backward(
    x: &Tensor,
    w: &[f64],
    up: &Tensor,
    cin: usize,
    cout: usize,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let (batch, h, wd) = (x.shape()[0], x.shape()[2], x.shape()[3]);
    let (oh, ow) = (h - 2, wd - 2);
    let xd = x.data();
    let gd = up.data();
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; cout];
    for n in 0..batch {
        for co in 0..cout {
            let gbase = (n * cout + co) * oh * ow;
            db[co] += gd[gbase..gbase + oh * ow].iter().sum::<f64>();
            for ci in 0..cin {
                let xbase = (n * cin + ci) * h * wd;
                let kbase = (co * cin + ci) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let k = w[kbase + ky * 3 + kx];
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let xrow = xbase + (oy + ky) * wd + kx;
                            let grow = gbase + oy * ow;
                            for ox in 0..ow {
                                let g = gd[grow + ox];
                                acc += g * xd[xrow + ox];
                                dx[xrow + ox] += g * k;
                            }
                        }
                        dw[kbase + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    (Tensor::from_parts(x.shape().to_vec(), dx), dw, db)
}

fn pool_forward(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (batch, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut y = Vec::with_capacity(batch * c * oh * ow);
    let mut argmax = Vec::with_capacity(batch * c * oh * ow);
    for n in 0..batch {
        for ch in 0..c {
            let base = (n * c + ch) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        // strict comparison keeps the first maximum on ties
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    y.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
    }
    (Tensor::from_parts(vec![batch, c, oh, ow], y), argmax)
}
