//! Finite-difference checks shared by the gradient tests and the acceptance run.

use rand::Rng;
use sdcda::contrastive::{self, ContrastiveConfig, DomainOutputs, ProjectionBatch, ZeroVectors};
use sdcda::models::{self, Reduction};
use sdcda::nn::{self, Layer, Mode, NetworkSpec};
use sdcda::pruning;
use sdcda::Tensor;

use super::*;

pub fn dense_layer(instances: u64) {
    for s in 0..instances {
        let (i, o) = (1 + (s % 4) as usize, 1 + (s % 3) as usize);
        check_network(&single_layer(vec![i], Layer::Dense { inputs: i, outputs: o }), s, 3);
    }
}

pub fn conv2d_layer(instances: u64) {
    for s in 0..instances {
        let cin = 1 + (s % 2) as usize;
        let side = 3 + (s % 3) as usize;
        let spec = single_layer(vec![cin, side, side + 1], Layer::Conv2d { in_channels: cin, out_channels: 2 });
        check_network(&spec, s, 2);
    }
}

pub fn maxpool_layer(instances: u64) {
    for s in 0..instances {
        let side = 2 + (s % 4) as usize;
        check_network(&single_layer(vec![2, side, side], Layer::MaxPool2d), s, 2);
    }
}

pub fn flatten_layer(instances: u64) {
    for s in 0..instances {
        check_network(&single_layer(vec![2, 3, 2], Layer::Flatten), s, 2);
    }
}

pub fn relu_layer(instances: u64) {
    for s in 0..instances {
        check_network(&single_layer(vec![5], Layer::Relu), s, 3);
    }
}

pub fn dropout_layer(instances: u64) {
    for s in 0..instances {
        check_network(&single_layer(vec![6], Layer::Dropout { rate: 0.3 }), s, 3);
    }
}

pub fn sigmoid_layer(instances: u64) {
    for s in 0..instances {
        check_network(&single_layer(vec![4], Layer::Sigmoid), s, 3);
    }
}

pub fn softmax_layer(instances: u64) {
    for s in 0..instances {
        check_network(&single_layer(vec![1 + (s % 5) as usize], Layer::Softmax), s, 3);
    }
}

pub fn l2_normalize_layer(instances: u64) {
    for s in 0..instances {
        check_network(&single_layer(vec![1 + (s % 4) as usize], Layer::L2Normalize), s, 3);
    }
}

pub fn stacked_cnn_extractor(instances: u64) {
    let spec = NetworkSpec::new(
        vec![1, 8, 8],
        vec![
            Layer::Conv2d { in_channels: 1, out_channels: 2 },
            Layer::Relu,
            Layer::MaxPool2d,
            Layer::Conv2d { in_channels: 2, out_channels: 2 },
            Layer::Relu,
            Layer::Flatten,
            Layer::Dense { inputs: 2, outputs: 3 },
            Layer::Dropout { rate: 0.2 },
            Layer::L2Normalize,
        ],
    )
    .unwrap();
    for s in 0..instances.min(10) {
        check_network(&spec, s, 2);
    }
}

fn classifier_spec(inputs: usize, classes: usize) -> NetworkSpec {
    NetworkSpec::new(
        vec![inputs],
        vec![
            Layer::Dense { inputs, outputs: 5 },
            Layer::Relu,
            Layer::Dense { inputs: 5, outputs: classes },
            Layer::Softmax,
        ],
    )
    .unwrap()
}

pub fn classification_loss_through_classifier(instances: u64) {
    for s in 0..instances {
        let mut r = rng(s);
        let classes = 2 + (s % 3) as usize;
        let spec = classifier_spec(3, classes);
        let params = spec.init_params(&mut r);
        let x = random_tensor(&mut r, &[4, 3], 1.0);
        let labels: Vec<usize> = (0..4).map(|_| r.random_range(0..classes)).collect();
        let objective = |p: &sdcda::ParameterSet| {
            let (y, _) = nn::forward(&spec, p, &x, Mode::Train, &mut rng(0)).unwrap();
            models::classification_loss(&y, &labels).unwrap().value
        };
        let (y, cache) = nn::forward(&spec, &params, &x, Mode::Train, &mut rng(0)).unwrap();
        let loss = models::classification_loss(&y, &labels).unwrap();
        let g = nn::backward(&spec, &params, &cache, &loss.grad).unwrap();
        for (name, t) in params.iter() {
            let num = numeric_grad(t, |pt| {
                let mut p = params.clone();
                *p.get_mut(name).unwrap() = pt.clone();
                objective(&p)
            });
            assert_grad(name, g.params.get(name).unwrap().data(), &num);
        }
    }
}

pub fn adversarial_loss_both_reductions(instances: u64) {
    for s in 0..instances {
        let mut r = rng(s);
        let ns = 1 + (s % 4) as usize;
        let nt = 1 + (s % 3) as usize;
        let reduction = if s % 2 == 0 { Reduction::Sum } else { Reduction::Mean };
        let ds: Vec<f64> = (0..ns).map(|_| r.random_range(0.05..0.95)).collect();
        let dt: Vec<f64> = (0..nt).map(|_| r.random_range(0.05..0.95)).collect();
        let l = models::adversarial_loss(&ds, &dt, reduction).unwrap();
        let ts = Tensor::new(vec![ns], ds.clone()).unwrap();
        let tt = Tensor::new(vec![nt], dt.clone()).unwrap();
        let num_s = numeric_grad(&ts, |x| models::adversarial_loss(x.data(), &dt, reduction).unwrap().value);
        let num_t = numeric_grad(&tt, |x| models::adversarial_loss(&ds, x.data(), reduction).unwrap().value);
        assert_grad("source", &l.grad_source, &num_s);
        assert_grad("target", &l.grad_target, &num_t);
    }
}

fn cfg(r: &mut impl Rng) -> ContrastiveConfig {
    ContrastiveConfig::new(r.random_range(0.2..1.5)).unwrap()
}

pub fn nt_xent_inputs(instances: u64) {
    for s in 0..instances {
        let mut r = rng(s);
        let n = 1 + (s % 4) as usize;
        let d = 2 + (s % 3) as usize;
        let c = cfg(&mut r);
        let a = random_tensor(&mut r, &[n, d], 1.0);
        let b = random_tensor(&mut r, &[n, d], 1.0);
        let g = contrastive::nt_xent_grad(ProjectionBatch { anchors: &a, partners: &b }, &c).unwrap();
        let na = numeric_grad(&a, |x| contrastive::nt_xent(ProjectionBatch { anchors: x, partners: &b }, &c).unwrap());
        let nb = numeric_grad(&b, |x| contrastive::nt_xent(ProjectionBatch { anchors: &a, partners: x }, &c).unwrap());
        assert_grad("anchors", g.first.data(), &na);
        assert_grad("partners", g.second.data(), &nb);
    }
}

pub fn pnt_xent_inputs(instances: u64) {
    for s in 0..instances {
        let mut r = rng(1000 + s);
        let n = 2 + (s % 3) as usize;
        let c = cfg(&mut r);
        let a = random_tensor(&mut r, &[n, 3], 1.0);
        let b = random_tensor(&mut r, &[n, 3], 1.0);
        let g = contrastive::pnt_xent_grad(&a, &b, &c).unwrap();
        let na = numeric_grad(&a, |x| contrastive::pnt_xent(x, &b, &c).unwrap());
        let nb = numeric_grad(&b, |x| contrastive::pnt_xent(&a, x, &c).unwrap());
        assert_grad("unpruned", g.first.data(), &na);
        assert_grad("pruned", g.second.data(), &nb);
    }
}

pub fn supcon_da_inputs(instances: u64) {
    for s in 0..instances {
        let mut r = rng(2000 + s);
        let ns = 2 + (s % 3) as usize;
        let nt = 2 + (s % 2) as usize;
        let c = cfg(&mut r);
        let src = random_tensor(&mut r, &[ns, 4], 1.0);
        let tgt = random_tensor(&mut r, &[nt, 4], 1.0);
        let g = contrastive::supcon_da_grad(DomainOutputs { source: &src, target: &tgt }, &c).unwrap();
        let ns_ = numeric_grad(&src, |x| contrastive::supcon_da(DomainOutputs { source: x, target: &tgt }, &c).unwrap());
        let nt_ = numeric_grad(&tgt, |x| contrastive::supcon_da(DomainOutputs { source: &src, target: x }, &c).unwrap());
        assert_grad("source", g.first.data(), &ns_);
        assert_grad("target", g.second.data(), &nt_);
    }
}

pub fn psupcon_da_inputs(instances: u64) {
    for s in 0..instances {
        let mut r = rng(3000 + s);
        let c = cfg(&mut r);
        let src = random_tensor(&mut r, &[3, 2], 1.0);
        let tgt = random_tensor(&mut r, &[2, 2], 1.0);
        let g = contrastive::psupcon_da_grad(DomainOutputs { source: &src, target: &tgt }, &c).unwrap();
        let ns_ = numeric_grad(&src, |x| contrastive::psupcon_da(DomainOutputs { source: x, target: &tgt }, &c).unwrap());
        let nt_ = numeric_grad(&tgt, |x| contrastive::psupcon_da(DomainOutputs { source: &src, target: x }, &c).unwrap());
        assert_grad("source", g.first.data(), &ns_);
        assert_grad("target", g.second.data(), &nt_);
    }
}

/// PSupCon-DA as a function of the surviving discriminator weights.
pub fn psupcon_da_through_pruned_discriminator_tap(instances: u64) {
    let tap_depth = models::DISCRIMINATOR_TAP_DEPTH;
    for s in 0..instances {
        let mut r = rng(4000 + s);
        let spec = NetworkSpec::new(
            vec![4],
            vec![Layer::Dense { inputs: 4, outputs: 6 }, Layer::Relu, Layer::Dense { inputs: 6, outputs: 1 }, Layer::Sigmoid],
        )
        .unwrap();
        let mut params = spec.init_params(&mut r);
        // biases off zero so no unit sits on the relu kink once its weights are pruned
        for (_, t) in params.iter_mut() {
            for v in t.data_mut() {
                *v += r.random_range(-0.1..0.1);
            }
        }
        let mask = pruning::l1_mask(&params, 0.4).unwrap();
        let c = ContrastiveConfig { temperature: 0.5, zero_vectors: ZeroVectors::Neutral };
        let x = random_tensor(&mut r, &[5, 4], 1.0);
        let objective = |p: &sdcda::ParameterSet| {
            let pruned = pruning::apply_mask(p, &mask).unwrap();
            let (t, _) = nn::forward_prefix(&spec, &pruned, &x, Mode::Train, &mut rng(0), tap_depth).unwrap();
            let (a, b) = t.split_rows(3);
            contrastive::psupcon_da(DomainOutputs { source: &a, target: &b }, &c).unwrap()
        };
        let pruned = pruning::apply_mask(&params, &mask).unwrap();
        let (t, cache) = nn::forward_prefix(&spec, &pruned, &x, Mode::Train, &mut rng(0), tap_depth).unwrap();
        let (a, b) = t.split_rows(3);
        let l = contrastive::psupcon_da_grad(DomainOutputs { source: &a, target: &b }, &c).unwrap();
        let up = Tensor::concat_rows(&[&l.first, &l.second]).unwrap();
        let g = nn::backward(&spec, &pruned, &cache, &up).unwrap();
        for (name, t) in params.iter() {
            let keep = mask.keep(name).unwrap();
            let num = numeric_grad(t, |pt| {
                let mut p = params.clone();
                *p.get_mut(name).unwrap() = pt.clone();
                objective(&p)
            });
            let analytic = g.params.get(name).unwrap().data();
            for (i, k) in keep.iter().enumerate() {
                if *k {
                    assert!(close(analytic[i], num[i]), "{name}[{i}]: {} vs {}", analytic[i], num[i]);
                } else {
                    assert!(num[i].abs() <= ABS_FLOOR, "pruned {name}[{i}] moved the loss");
                }
            }
        }
    }
}
