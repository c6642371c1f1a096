//! One prune / update-survivors / recombine cycle on a toy parameter set.

use sdcda::pruning;
use sdcda::{ParameterSet, Tensor};

fn main() -> sdcda::Result<()> {
    let mut params = ParameterSet::new();
    params.insert("fc.weight", Tensor::new(vec![2, 3], vec![0.5, -0.1, 0.3, -0.7, 0.05, 0.9])?)?;
    params.insert("fc.bias", Tensor::new(vec![2], vec![0.01, -0.02])?)?;

    let alpha = 0.5;
    let mask = pruning::l1_mask(&params, alpha)?;
    for (name, keep) in mask.iter() {
        println!("{name:<10} keep {keep:?}");
    }
    println!("pruned copy: {:?}", pruning::apply_mask(&params, &mask)?.get("fc.weight").unwrap().data());

    // gradient of 0.5 * |w|^2 evaluated on the pruned copy
    let updated = pruning::masked_update_cycle(
        &params,
        alpha,
        |_, pruned| {
            let mut g = ParameterSet::new();
            for (name, t) in pruned.iter() {
                g.insert(name, t.clone())?;
            }
            Ok(g)
        },
        0.5,
    )?;
    println!("before:  {:?}", params.get("fc.weight").unwrap().data());
    println!("after:   {:?}", updated.get("fc.weight").unwrap().data());
    println!("bias:    {:?}", updated.get("fc.bias").unwrap().data());
    Ok(())
}
