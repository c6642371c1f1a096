//! Evaluates the pair and domain contrastive losses on hand-picked batches.

use sdcda::contrastive::{self, ContrastiveConfig, DomainOutputs, ProjectionBatch};
use sdcda::Tensor;

fn main() -> sdcda::Result<()> {
    let cfg = ContrastiveConfig::new(0.5)?;

    let views = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0])?;
    let aligned = views.clone();
    let swapped = Tensor::new(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0])?;
    println!("NT-Xent aligned pairs  {:.5}", contrastive::nt_xent(ProjectionBatch { anchors: &views, partners: &aligned }, &cfg)?);
    println!("NT-Xent swapped pairs  {:.5}", contrastive::nt_xent(ProjectionBatch { anchors: &views, partners: &swapped }, &cfg)?);
    println!("PNT-Xent aligned pairs {:.5}", contrastive::pnt_xent(&views, &aligned, &cfg)?);

    let same = Tensor::new(vec![2, 1], vec![0.4, 0.4])?;
    let v = contrastive::supcon_da(DomainOutputs { source: &same, target: &same }, &cfg)?;
    println!("SupCon-DA, four identical outputs {v:.5} (2 ln 3 = {:.5})", 2.0 * 3f64.ln());

    let src = Tensor::new(vec![2, 2], vec![1.0, 0.1, 0.9, 0.0])?;
    let tgt = Tensor::new(vec![2, 2], vec![-1.0, 0.2, -0.8, -0.1])?;
    let g = contrastive::psupcon_da_grad(DomainOutputs { source: &src, target: &tgt }, &cfg)?;
    println!("PSupCon-DA separated domains {:.5}", g.value);
    println!("  source grad {:?}", g.first.data());
    println!("  target grad {:?}", g.second.data());
    Ok(())
}
