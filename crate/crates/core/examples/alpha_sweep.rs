//! Target accuracy across the discriminator pruning proportion.

use sdcda::config::derive_seeds;
use sdcda::data::Setting;
use sdcda::eval::{self, Experiment, SweepParameter};
use sdcda::pipeline::Variant;

fn main() -> sdcda::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let p = SweepParameter::AlphaD;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let curve = eval::sweep(&Experiment::default(), p, &p.default_grid(), Setting::I2I, Variant::Sdcda, &derive_seeds(0, n), threads)?;
    print!("{}", curve.to_csv());
    if let Some(best) = curve.best() {
        println!("best alpha_d = {}", best.value);
    }
    Ok(())
}
