//! Pruned contrastive pre-training against plain SimCLR on the synthetic
//! benchmark, printing the loss trace of each.

use sdcda::data::Setting;
use sdcda::eval::Experiment;
use sdcda::models::ModelSet;
use sdcda::pipeline::{self, IaClrConfig};

fn main() -> sdcda::Result<()> {
    let exp = Experiment::default();
    let sc = exp.scenario(Setting::I2I, 0)?;
    let cfg = IaClrConfig { epochs: 5, ..exp.pretrain.clone() };
    let start = ModelSet::build(&exp.architecture(), 0)?;

    let mut pruned = start.clone();
    let a = pipeline::iaclr_pretrain(&mut pruned, &sc.source.features, &sc.target.features, &cfg, 0)?;
    let mut plain = start.clone();
    let b = pipeline::simclr_pretrain(&mut plain, &sc.source.features, &sc.target.features, &cfg, 0)?;

    let per_epoch = a.iteration / cfg.epochs;
    println!("epoch  pruned-pair  simclr");
    for e in 0..cfg.epochs {
        let r = e * per_epoch..(e + 1) * per_epoch;
        let mean = |v: &[f64]| v[r.clone()].iter().sum::<f64>() / per_epoch as f64;
        println!("{:>5}  {:>11.4}  {:>6.4}", e + 1, mean(&a.traces.pnt_xent), mean(&b.traces.pnt_xent));
    }
    if !a.bottlenecks.is_empty() {
        println!("bottleneck samples flagged: {}", a.bottlenecks.len());
    }
    Ok(())
}
