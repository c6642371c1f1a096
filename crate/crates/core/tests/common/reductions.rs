//! Small synthetic fixtures and the bitwise reduction identities between the
//! full method and its baselines.

use sdcda::contrastive::{self, ContrastiveConfig, DomainOutputs, ZeroVectors};
use sdcda::data::{self, Scenario, ScenarioSpec, Setting, SyntheticSpec};
use sdcda::models::{Architecture, ExtractorSpec, ModelSet, Reduction, DISCRIMINATOR_TAP_DEPTH};
use sdcda::nn::{self, Mode};
use sdcda::pipeline::{self, BaAdaConfig, IaClrConfig};
use sdcda::pruning;

pub fn scenario(seed: u64) -> Scenario {
    let spec = SyntheticSpec { samples_per_class: 40, dim: 4, seed, ..SyntheticSpec::default() };
    let (s, t) = data::synth_domains(&spec).unwrap();
    data::make_scenario(&s, &t, &ScenarioSpec::with_imbalance(Setting::I2I, &[1.0, 0.5, 0.25, 0.25], seed)).unwrap()
}

pub fn arch(dropout: f64) -> Architecture {
    Architecture {
        extractor: ExtractorSpec::Fnn { inputs: 4, hidden: 12, features: 6, dropout },
        head_hidden: 8,
        projection_dim: 4,
        classes: 4,
    }
}

pub fn pretrain_cfg() -> IaClrConfig {
    IaClrConfig { epochs: 2, batch_size: 8, learning_rate: 0.01, ..IaClrConfig::default() }
}

pub fn adapt_cfg() -> BaAdaConfig {
    BaAdaConfig {
        epochs: 2,
        batch_size: 8,
        learning_rate: 0.01,
        lambda_d: 0.1,
        lambda_bd: 1.0,
        reduction: Reduction::Mean,
        ..BaAdaConfig::default()
    }
}

pub fn zero_alpha_g_reduces_to_simclr_bitwise() {
    let sc = scenario(1);
    let cfg = IaClrConfig { alpha_g: 0.0, ..pretrain_cfg() };
    let mut a = ModelSet::build(&arch(0.3), 7).unwrap();
    let mut b = a.clone();
    let sa = pipeline::iaclr_pretrain(&mut a, &sc.source.features, &sc.target.features, &cfg, 7).unwrap();
    let sb = pipeline::simclr_pretrain(&mut b, &sc.source.features, &sc.target.features, &cfg, 7).unwrap();
    assert!(sa.iteration > 0);
    assert_eq!(a.params_digest(), b.params_digest());
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&sa.traces.pnt_xent), bits(&sb.traces.pnt_xent));
}

pub fn zero_lambda_bd_reduces_to_dann_bitwise() {
    let sc = scenario(2);
    let cfg = BaAdaConfig { lambda_bd: 0.0, ..adapt_cfg() };
    let mut a = ModelSet::build(&arch(0.3), 3).unwrap();
    let mut b = a.clone();
    let sa = pipeline::baada_train(&mut a, &sc.source, &sc.target, &cfg, 3).unwrap();
    let sb = pipeline::dann_train(&mut b, &sc.source, &sc.target, &cfg, 3).unwrap();
    assert_eq!(a.params_digest(), b.params_digest());
    assert_eq!(sa.traces.classification, sb.traces.classification);
    assert_eq!(sa.traces.adversarial, sb.traces.adversarial);
    assert_eq!(sa.traces.boundary.len(), sa.iteration);
    assert!(sb.traces.boundary.is_empty());
}

/// With α_d = 0 the pruned-discriminator step is the plain SupCon-DA step.
pub fn zero_alpha_d_psupcon_step_equals_supcon_step() {
    let sc = scenario(4);
    let models = ModelSet::build(&arch(0.3), 5).unwrap();
    let d = &models.discriminator;
    let fs = models.extractor.infer(&sc.source.features.select_rows(&[0, 1, 2, 3])).unwrap();
    let ft = models.extractor.infer(&sc.target.features.select_rows(&[0, 1, 2])).unwrap();
    let ccfg = ContrastiveConfig { temperature: 0.5, zero_vectors: ZeroVectors::Neutral };
    let step = |params: &sdcda::ParameterSet, pruned_loss: bool| {
        let mut r = super::rng(0);
        let (us, cs) = nn::forward_prefix(&d.spec, params, &fs, Mode::Train, &mut r, DISCRIMINATOR_TAP_DEPTH).unwrap();
        let (ut, ct) = nn::forward_prefix(&d.spec, params, &ft, Mode::Train, &mut r, DISCRIMINATOR_TAP_DEPTH).unwrap();
        let out = DomainOutputs { source: &us, target: &ut };
        let l = if pruned_loss {
            contrastive::psupcon_da_grad(out, &ccfg).unwrap()
        } else {
            contrastive::supcon_da_grad(out, &ccfg).unwrap()
        };
        let g = nn::backward(&d.spec, params, &cs, &l.first)
            .unwrap()
            .params
            .add(&nn::backward(&d.spec, params, &ct, &l.second).unwrap().params)
            .unwrap();
        (l.value, g)
    };
    let mask = pruning::l1_mask(&d.params, 0.0).unwrap();
    let pruned = pruning::apply_mask(&d.params, &mask).unwrap();
    let (lp, gp) = step(&pruned, true);
    let (ls, gs) = step(&d.params, false);
    assert_eq!(lp.to_bits(), ls.to_bits());
    let a = nn::sgd_step(&d.params, &gp, 0.01, Some(&mask)).unwrap();
    let b = nn::sgd_step(&d.params, &gs, 0.01, None).unwrap();
    assert_eq!(a.digest(), b.digest());
}

/// PNT-Xent with an unpruned partner encoder is NT-Xent on the two views.
pub fn pnt_xent_with_unpruned_partner_equals_nt_xent() {
    let sc = scenario(5);
    let models = ModelSet::build(&arch(0.0), 9).unwrap();
    let x = sc.source.features.select_rows(&[0, 1, 2, 3, 4]);
    let x_hat = x.scale(1.1);
    let mask = pruning::l1_mask(&models.extractor.params, 0.0).unwrap();
    let gp = pruning::apply_mask(&models.extractor.params, &mask).unwrap();
    let v = models.projection.infer(&models.extractor.infer(&x).unwrap()).unwrap();
    let (fp, _) = models.extractor.forward_with(&gp, &x_hat, Mode::Eval, &mut super::rng(0)).unwrap();
    let vp = models.projection.infer(&fp).unwrap();
    let vh = models.projection.infer(&models.extractor.infer(&x_hat).unwrap()).unwrap();
    let cfg = ContrastiveConfig::new(0.5).unwrap();
    let p = contrastive::pnt_xent(&v, &vp, &cfg).unwrap();
    let n = contrastive::nt_xent(contrastive::ProjectionBatch { anchors: &v, partners: &vh }, &cfg).unwrap();
    assert_eq!(p.to_bits(), n.to_bits());
}
