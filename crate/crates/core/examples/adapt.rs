//! DANN against boundary-aware adaptation on one I2I scenario, with per-class
//! recall on the target holdout.

use sdcda::data::Setting;
use sdcda::eval::{self, Experiment};
use sdcda::models::ModelSet;
use sdcda::pipeline;

fn main() -> sdcda::Result<()> {
    let exp = Experiment::default();
    let seed = 3;
    let sc = exp.scenario(Setting::I2I, seed)?;
    println!("source counts {:?}", sc.source.class_counts());

    let mut dann = ModelSet::build(&exp.architecture(), seed)?;
    pipeline::dann_train(&mut dann, &sc.source, &sc.target, &exp.adapt, seed)?;
    let mut baada = ModelSet::build(&exp.architecture(), seed)?;
    let state = pipeline::baada_train(&mut baada, &sc.source, &sc.target, &exp.adapt, seed)?;

    for (name, m) in [("DANN", &dann), ("DANN+Ba-ADA", &baada)] {
        let ev = eval::evaluate(m, &sc.target.features, &sc.holdout)?;
        let recall: Vec<String> = ev
            .per_class_accuracy
            .iter()
            .map(|r| r.map_or("-".into(), |v| format!("{v:.3}")))
            .collect();
        println!("{name:<12} accuracy {:.4}  recall [{}]", ev.accuracy, recall.join(", "));
    }
    let last = state.traces.boundary.last().copied().unwrap_or(f64::NAN);
    println!("final boundary loss {last:.4}");
    Ok(())
}
