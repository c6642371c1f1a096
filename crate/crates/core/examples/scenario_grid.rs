//! Class counts of the four balance settings drawn from one synthetic pair.

use sdcda::data::Setting;
use sdcda::eval::Experiment;

fn main() -> sdcda::Result<()> {
    let exp = Experiment::default();
    for setting in [Setting::B2B, Setting::B2I, Setting::I2B, Setting::I2I] {
        let sc = exp.scenario(setting, 0)?;
        println!(
            "{setting:?}: source {:?}  target {:?}",
            sc.source.class_counts(),
            sc.holdout.class_counts()
        );
    }
    Ok(())
}
