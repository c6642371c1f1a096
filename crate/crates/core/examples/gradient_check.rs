//! Compares the analytic gradient of a small CNN extractor with central
//! differences and prints the worst relative error per parameter tensor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdcda::models::ExtractorSpec;
use sdcda::nn::{self, Mode};
use sdcda::Tensor;

fn main() -> sdcda::Result<()> {
    let spec = ExtractorSpec::Cnn { input_shape: [1, 18, 18], channels: [4, 6, 8] }.network_spec()?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = spec.init_params(&mut rng);
    let data = (0..2 * 18 * 18).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = Tensor::new(vec![2, 1, 18, 18], data)?;

    // train mode with a fixed dropout stream so every evaluation sees the same draws
    let (y, cache) = nn::forward(&spec, &params, &x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0))?;
    let upstream = Tensor::new(y.shape().to_vec(), vec![1.0; y.len()])?;
    let grads = nn::backward(&spec, &params, &cache, &upstream)?;

    let objective = |p: &sdcda::ParameterSet| -> f64 {
        let (y, _) = nn::forward(&spec, p, &x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        y.data().iter().sum()
    };
    let h = 1e-5;
    for (name, t) in params.iter() {
        let mut worst: f64 = 0.0;
        for i in 0..t.len() {
            let mut plus = params.clone();
            plus.get_mut(name).unwrap().data_mut()[i] += h;
            let mut minus = params.clone();
            minus.get_mut(name).unwrap().data_mut()[i] -= h;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let analytic = grads.params.get(name).unwrap().data()[i];
            let scale = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
        println!("{name:<16} {:>5} weights  max rel err {worst:.2e}", t.len());
    }
    Ok(())
}
