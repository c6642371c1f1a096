//! Interrupts adaptation, checkpoints it, resumes, and checks the result
//! against an uninterrupted run.

use sdcda::data::Setting;
use sdcda::eval::Experiment;
use sdcda::models::ModelSet;
use sdcda::pipeline::{self, BaAdaConfig};

fn main() -> sdcda::Result<()> {
    let exp = Experiment::default();
    let sc = exp.scenario(Setting::I2I, 1)?;
    let cfg = BaAdaConfig { epochs: 3, ..exp.adapt.clone() };
    let start = ModelSet::build(&exp.architecture(), 1)?;

    let mut full = start.clone();
    let done = pipeline::baada_train(&mut full, &sc.source, &sc.target, &cfg, 1)?;

    let mut part = start.clone();
    let half = BaAdaConfig { max_iterations: Some(done.iteration / 2), ..cfg.clone() };
    let state = pipeline::baada_train(&mut part, &sc.source, &sc.target, &half, 1)?;
    let dir = std::env::temp_dir().join(format!("sdcda-checkpoint-{}", std::process::id()));
    pipeline::save_checkpoint(&dir, &part, &state)?;
    println!("saved at iteration {} to {}", state.iteration, dir.display());

    let (mut resumed, state) = pipeline::load_checkpoint(&dir, &start)?;
    pipeline::resume_adapt(&mut resumed, &sc.source, &sc.target, &cfg, 1, true, state)?;
    println!("uninterrupted {}", full.params_digest());
    println!("resumed       {}", resumed.params_digest());
    println!("identical: {}", full.params_digest() == resumed.params_digest());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
