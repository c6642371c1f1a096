//! The four-variant ablation on the synthetic I2I benchmark.
//!
//! `cargo run --release --example ablation -- 5` sets the seed count.

use sdcda::config::derive_seeds;
use sdcda::data::Setting;
use sdcda::eval::{self, Experiment};
use sdcda::pipeline::Variant;

fn main() -> sdcda::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let table = eval::ablation_run(&Experiment::default(), &[Setting::I2I], &Variant::ALL, &derive_seeds(0, n), threads)?;
    print!("{}", table.to_csv());
    Ok(())
}
