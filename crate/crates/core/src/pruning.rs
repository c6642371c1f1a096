//! Magnitude pruning masks and the prune / update-survivors / recombine cycle.
//!
//! Masks are computed per weight tensor: in a tensor of `n` weights exactly
//! `floor(alpha * n)` entries are dropped. Bias tensors are always kept.

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::sgd_step;
use crate::tensor::{ParameterSet, Tensor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneStrategy {
    /// Drop the smallest-magnitude weights.
    #[default]
    L1,
    /// Drop uniformly chosen weights.
    Random,
}

/// Keep/drop map over a parameter set. `true` marks a surviving coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneMask {
    alpha: f64,
    keep: IndexMap<String, Vec<bool>>,
}

impl PruneMask {
    pub fn from_keep(entries: Vec<(String, Vec<bool>)>, alpha: f64) -> Self {
        PruneMask { alpha, keep: entries.into_iter().collect() }
    }

    /// Mask that keeps every coordinate of `params`.
    pub fn keep_all(params: &ParameterSet) -> Self {
        let keep = params.iter().map(|(k, t)| (k.to_string(), vec![true; t.len()])).collect();
        PruneMask { alpha: 0.0, keep }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn keep(&self, name: &str) -> Option<&[bool]> {
        self.keep.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[bool])> {
        self.keep.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn kept_count(&self, name: &str) -> Option<usize> {
        self.keep(name).map(|k| k.iter().filter(|&&b| b).count())
    }

    pub fn pruned_total(&self) -> usize {
        self.keep.values().map(|k| k.iter().filter(|&&b| !b).count()).sum()
    }

    pub fn check_aligned(&self, params: &ParameterSet) -> Result<()> {
        if self.keep.len() != params.len() {
            return Err(Error::internal(format!(
                "mask covers {} tensors, parameters have {}",
                self.keep.len(),
                params.len()
            )));
        }
        for ((mk, mv), (pk, pt)) in self.keep.iter().zip(params.iter()) {
            if mk != pk || mv.len() != pt.len() {
                return Err(Error::internal(format!(
                    "mask entry {mk}[{}] does not align with parameter {pk}[{}]",
                    mv.len(),
                    pt.len()
                )));
            }
        }
        Ok(())
    }
}

/// Weight tensors are prunable; biases never are.
pub fn is_prunable(name: &str) -> bool {
    name.ends_with(".weight")
}

/// `floor(alpha * n)`, with a small tolerance so that e.g. `0.57 * 100`
/// counts as 57 despite rounding in the product.
pub fn pruned_count(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64) + 1e-9).floor() as usize
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) || alpha.is_nan() {
        return Err(Error::config(format!("prune proportion {alpha} outside [0, 1)")));
    }
    Ok(())
}

/// L1 magnitude mask: per weight tensor the `floor(alpha * n)` smallest
/// absolute values are pruned, lowest flat index first on ties.
pub fn l1_mask(params: &ParameterSet, alpha: f64) -> Result<PruneMask> {
    check_alpha(alpha)?;
    let mut keep = IndexMap::new();
    for (name, t) in params.iter() {
        let mut k = vec![true; t.len()];
        if is_prunable(name) {
            let drop = pruned_count(alpha, t.len());
            if drop > 0 {
                let d = t.data();
                let mut order: Vec<usize> = (0..d.len()).collect();
                order.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()).then(a.cmp(&b)));
                for &i in &order[..drop] {
                    k[i] = false;
                }
            }
        }
        keep.insert(name.to_string(), k);
    }
    Ok(PruneMask { alpha, keep })
}

/// Random mask with the same per-tensor cardinality as [`l1_mask`].
pub fn random_mask<R: Rng + ?Sized>(
    params: &ParameterSet,
    alpha: f64,
    rng: &mut R,
) -> Result<PruneMask> {
    check_alpha(alpha)?;
    let mut keep = IndexMap::new();
    for (name, t) in params.iter() {
        let mut k = vec![true; t.len()];
        if is_prunable(name) {
            let drop = pruned_count(alpha, t.len());
            for i in rand::seq::index::sample(rng, t.len(), drop) {
                k[i] = false;
            }
        }
        keep.insert(name.to_string(), k);
    }
    Ok(PruneMask { alpha, keep })
}

pub fn compute_mask<R: Rng + ?Sized>(
    params: &ParameterSet,
    alpha: f64,
    strategy: PruneStrategy,
    rng: &mut R,
) -> Result<PruneMask> {
    match strategy {
        PruneStrategy::L1 => l1_mask(params, alpha),
        PruneStrategy::Random => random_mask(params, alpha, rng),
    }
}

/// Materializes the pruned model: dropped coordinates become exactly zero.
pub fn apply_mask(params: &ParameterSet, mask: &PruneMask) -> Result<ParameterSet> {
    mask.check_aligned(params)?;
    let mut out = ParameterSet::new();
    for ((name, t), (_, k)) in params.iter().zip(mask.iter()) {
        let data = t.data().iter().zip(k).map(|(&v, &kept)| if kept { v } else { 0.0 }).collect();
        out.insert(name, Tensor::from_parts(t.shape().to_vec(), data))?;
    }
    Ok(out)
}

/// One prune → update survivors → recombine cycle.
///
/// `grad_fn` receives the full parameters and their pruned copy and returns
/// gradients aligned with `params`. Survivors take a descent step; pruned
/// coordinates come back with their original values.
pub fn masked_update_cycle<F>(
    params: &ParameterSet,
    alpha: f64,
    mut grad_fn: F,
    lr: f64,
) -> Result<ParameterSet>
where
    F: FnMut(&ParameterSet, &ParameterSet) -> Result<ParameterSet>,
{
    let mask = l1_mask(params, alpha)?;
    let pruned = apply_mask(params, &mask)?;
    let grads = grad_fn(params, &pruned)?;
    sgd_step(params, &grads, lr, Some(&mask))
}
