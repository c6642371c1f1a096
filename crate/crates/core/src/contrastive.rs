//! Contrastive objectives over cosine similarity.
//!
//! All four losses share one shape: for an anchor `a` with positive set `P(a)`,
//!
//! ```text
//! term(a) = (1/|P(a)|) * sum_{q in P(a)} -log( d(a,q) / sum_{p != a} d(a,p) )
//! d(u,v)  = exp(cos(u,v) / tau)
//! ```
//!
//! weighted per anchor. The paired losses (NT-Xent, PNT-Xent) anchor on the
//! first view only and take the matching partner as the single positive. The
//! domain losses (SupCon-DA, PSupCon-DA) anchor on every output and treat all
//! other outputs of the same domain as positives.
//!
//! Inputs are L2-normalized inside every entry point, and gradients are
//! returned with respect to the raw (unnormalized) rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    #[serde(default)]
    pub zero_vectors: ZeroVectors,
}

/// What to do with an all-zero input row, whose direction is undefined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroVectors {
    /// Domain error.
    #[default]
    Reject,
    /// The row acts as the zero vector: cosine 0 with everything, zero gradient.
    Neutral,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig { temperature: 0.5, zero_vectors: ZeroVectors::Reject }
    }
}

impl ContrastiveConfig {
    pub fn new(temperature: f64) -> Result<Self> {
        let cfg = ContrastiveConfig { temperature, zero_vectors: ZeroVectors::Reject };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config(format!("temperature {} must be > 0", self.temperature)));
        }
        Ok(())
    }
}

/// Two views of one batch: row `i` of `anchors` pairs with row `i` of `partners`.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionBatch<'a> {
    pub anchors: &'a Tensor,
    pub partners: &'a Tensor,
}

/// Outputs of a domain discriminator's representation for both domains.
#[derive(Debug, Clone, Copy)]
pub struct DomainOutputs<'a> {
    pub source: &'a Tensor,
    pub target: &'a Tensor,
}

/// Loss value with gradients w.r.t. the two input tensors.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    /// Gradient for `anchors` / `source`.
    pub first: Tensor,
    /// Gradient for `partners` / `target`.
    pub second: Tensor,
}

/// `exp(cos(u, v) / tau)`.
pub fn similarity_d(u: &[f64], v: &[f64], cfg: &ContrastiveConfig) -> Result<f64> {
    cfg.validate()?;
    if u.len() != v.len() {
        return Err(Error::domain("similarity of vectors with different lengths"));
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::domain("cosine similarity of a zero vector"));
    }
    let cos = dot(u, v) / (nu * nv);
    Ok((cos.clamp(-1.0, 1.0) / cfg.temperature).exp())
}

pub fn nt_xent(batch: ProjectionBatch<'_>, cfg: &ContrastiveConfig) -> Result<f64> {
    Ok(nt_xent_grad(batch, cfg)?.value)
}

/// NT-Xent: each anchor `v_i` against its partner `v_i+`, with every other
/// projection of both views (2N - 2 of them) as negatives.
pub fn nt_xent_grad(batch: ProjectionBatch<'_>, cfg: &ContrastiveConfig) -> Result<LossGrad> {
    paired_loss(batch.anchors, batch.partners, cfg)
}

pub fn pnt_xent(unpruned: &Tensor, pruned_partners: &Tensor, cfg: &ContrastiveConfig) -> Result<f64> {
    Ok(pnt_xent_grad(unpruned, pruned_partners, cfg)?.value)
}

/// PNT-Xent: anchors are projections from the full encoder, partners come from
/// the pruned encoder on the augmented view. Only the full-encoder path anchors.
pub fn pnt_xent_grad(
    unpruned: &Tensor,
    pruned_partners: &Tensor,
    cfg: &ContrastiveConfig,
) -> Result<LossGrad> {
    paired_loss(unpruned, pruned_partners, cfg)
}

pub fn supcon_da(outputs: DomainOutputs<'_>, cfg: &ContrastiveConfig) -> Result<f64> {
    Ok(supcon_da_grad(outputs, cfg)?.value)
}

/// SupCon-DA with domain identity as the label:
/// `L = (1/n_s) sum_s l(u) + (1/n_t) sum_t l(u)`, where
/// `l(u) = -(1/(n-1)) sum_{q same domain} log(d(u,q) / sum_{p != u} d(u,p))`.
pub fn supcon_da_grad(outputs: DomainOutputs<'_>, cfg: &ContrastiveConfig) -> Result<LossGrad> {
    domain_loss(outputs.source, outputs.target, cfg)
}

pub fn psupcon_da(pruned_outputs: DomainOutputs<'_>, cfg: &ContrastiveConfig) -> Result<f64> {
    Ok(psupcon_da_grad(pruned_outputs, cfg)?.value)
}

/// PSupCon-DA: same functional form as [`supcon_da_grad`], evaluated on the
/// outputs of the pruned discriminator for the whole batch.
pub fn psupcon_da_grad(
    pruned_outputs: DomainOutputs<'_>,
    cfg: &ContrastiveConfig,
) -> Result<LossGrad> {
    domain_loss(pruned_outputs.source, pruned_outputs.target, cfg)
}

fn paired_loss(first: &Tensor, second: &Tensor, cfg: &ContrastiveConfig) -> Result<LossGrad> {
    cfg.validate()?;
    check_rows(first, second)?;
    let n = first.rows();
    let anchors: Vec<Anchor> = (0..n)
        .map(|i| Anchor { index: i, positives: vec![n + i], weight: 1.0 / n as f64 })
        .collect();
    run(first, second, &anchors, cfg)
}

fn domain_loss(source: &Tensor, target: &Tensor, cfg: &ContrastiveConfig) -> Result<LossGrad> {
    cfg.validate()?;
    let (ns, nt) = (source.rows(), target.rows());
    if ns < 2 || nt < 2 {
        return Err(Error::domain(format!(
            "domain contrastive loss needs at least 2 outputs per domain, got {ns} and {nt}"
        )));
    }
    if source.shape().len() != 2 || source.shape() [1..] != target.shape()[1..] {
        return Err(Error::domain("source and target outputs must be matrices of equal width"));
    }
    let mut anchors = Vec::with_capacity(ns + nt);
    for i in 0..ns {
        let positives = (0..ns).filter(|&j| j != i).collect();
        anchors.push(Anchor { index: i, positives, weight: 1.0 / ns as f64 });
    }
    for i in 0..nt {
        let positives = (0..nt).filter(|&j| j != i).map(|j| ns + j).collect();
        anchors.push(Anchor { index: ns + i, positives, weight: 1.0 / nt as f64 });
    }
    run(source, target, &anchors, cfg)
}

fn check_rows(first: &Tensor, second: &Tensor) -> Result<()> {
    if first.shape().len() != 2 || second.shape().len() != 2 {
        return Err(Error::domain("projection batches must be matrices"));
    }
    if first.rows() != second.rows() {
        return Err(Error::domain(format!(
            "paired views have different lengths: {} vs {}",
            first.rows(),
            second.rows()
        )));
    }
    if first.row_len() != second.row_len() {
        return Err(Error::domain("paired views have different widths"));
    }
    Ok(())
}

struct Anchor {
    index: usize,
    positives: Vec<usize>,
    weight: f64,
}

/// Normalizes both tensors, evaluates the anchored loss over their union
/// (first rows, then second rows) and maps gradients back to raw rows.
fn run(first: &Tensor, second: &Tensor, anchors: &[Anchor], cfg: &ContrastiveConfig) -> Result<LossGrad> {
    let mut z = Vec::with_capacity(first.rows() + second.rows());
    let mut norms = Vec::with_capacity(z.capacity());
    for t in [first, second] {
        for i in 0..t.rows() {
            let row = t.row(i);
            let n = norm(row);
            if !n.is_finite() || (n == 0.0 && cfg.zero_vectors == ZeroVectors::Reject) {
                return Err(Error::domain("contrastive loss received a zero or non-finite vector"));
            }
            norms.push(n);
            if n == 0.0 {
                z.push(vec![0.0; row.len()]);
            } else {
                z.push(row.iter().map(|v| v / n).collect::<Vec<f64>>());
            }
        }
    }
    let (value, gz) = anchored_loss(&z, anchors, cfg.temperature);
    let width = first.row_len();
    let mut raw = Vec::with_capacity(z.len() * width);
    for ((zi, gi), &n) in z.iter().zip(&gz).zip(&norms) {
        if n == 0.0 {
            raw.extend(std::iter::repeat_n(0.0, width));
            continue;
        }
        let proj = dot(zi, gi);
        raw.extend(zi.iter().zip(gi).map(|(zv, gv)| (gv - zv * proj) / n));
    }
    let split = first.rows() * width;
    let second_raw = raw.split_off(split);
    Ok(LossGrad {
        value,
        first: Tensor::from_parts(first.shape().to_vec(), raw),
        second: Tensor::from_parts(second.shape().to_vec(), second_raw),
    })
}

/// Loss and gradient w.r.t. unit vectors `z`.
fn anchored_loss(z: &[Vec<f64>], anchors: &[Anchor], tau: f64) -> (f64, Vec<Vec<f64>>) {
    let m = z.len();
    let width = z.first().map_or(0, Vec::len);
    let mut grad = vec![vec![0.0; width]; m];
    let mut total = 0.0;
    let mut logits = vec![0.0; m];
    for anchor in anchors {
        let a = anchor.index;
        if anchor.positives.is_empty() {
            continue;
        }
        for p in 0..m {
            logits[p] = if p == a { f64::NEG_INFINITY } else { dot(&z[a], &z[p]) / tau };
        }
        let peak = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| (l - peak).exp()).sum();
        let lse = peak + sum.ln();
        let count = anchor.positives.len() as f64;
        let coef = anchor.weight / count;
        let term: f64 = anchor.positives.iter().map(|&q| lse - logits[q]).sum();
        total += coef * term;

        // d term / d logit_p = |P| softmax_p - [p in P]
        for p in 0..m {
            if p == a {
                continue;
            }
            let mut dl = count * (logits[p] - lse).exp();
            if anchor.positives.contains(&p) {
                dl -= 1.0;
            }
            let s = coef * dl / tau;
            if s == 0.0 {
                continue;
            }
            for k in 0..width {
                grad[a][k] += s * z[p][k];
                grad[p][k] += s * z[a][k];
            }
        }
    }
    (total, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    const HALF: ContrastiveConfig = ContrastiveConfig { temperature: 0.5, zero_vectors: ZeroVectors::Reject };
    const ONE: ContrastiveConfig = ContrastiveConfig { temperature: 1.0, zero_vectors: ZeroVectors::Reject };

    #[test]
    fn similarity_examples() {
        let e = std::f64::consts::E;
        assert!((similarity_d(&[1.0, 0.0], &[1.0, 0.0], &HALF).unwrap() - e * e).abs() < 1e-12);
        assert!((similarity_d(&[1.0, 0.0], &[0.0, 3.0], &HALF).unwrap() - 1.0).abs() < 1e-12);
        assert!((similarity_d(&[2.0, 1.0], &[-2.0, -1.0], &ONE).unwrap() - 1.0 / e).abs() < 1e-12);
        assert!(similarity_d(&[0.0, 0.0], &[1.0, 0.0], &ONE).is_err());
    }

    #[test]
    fn single_pair_has_no_negatives() {
        let a = t(&[&[1.0, 2.0]]);
        let b = t(&[&[-3.0, 0.5]]);
        assert_eq!(nt_xent(ProjectionBatch { anchors: &a, partners: &b }, &HALF).unwrap(), 0.0);
        assert_eq!(pnt_xent(&a, &b, &HALF).unwrap(), 0.0);
    }

    #[test]
    fn nt_xent_two_pairs_hand_value() {
        // anchors e1, e2; partners e1, e2. For anchor e1: positive e1 (cos 1),
        // negatives e2 (cos 0) twice. loss = -ln(e / (e + 2)).
        let a = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let v = nt_xent(ProjectionBatch { anchors: &a, partners: &a }, &ONE).unwrap();
        let e = std::f64::consts::E;
        assert!((v - -(e / (e + 2.0)).ln()).abs() < 1e-14);
    }

    #[test]
    fn pnt_xent_two_pairs_hand_value() {
        // v1 = e1, v2 = e2, v1+ = (0.6, 0.8), v2+ = (-0.8, 0.6), tau = 0.5
        let v = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let p = t(&[&[0.6, 0.8], &[-0.8, 0.6]]);
        let got = pnt_xent(&v, &p, &HALF).unwrap();
        let d = |c: f64| (c / 0.5).exp();
        // anchor 1: pos cos 0.6; negatives v2 (0), v2+ (-0.8)
        let l1 = -(d(0.6) / (d(0.6) + d(0.0) + d(-0.8))).ln();
        // anchor 2: pos cos 0.6; negatives v1 (0), v1+ (0.8)
        let l2 = -(d(0.6) / (d(0.6) + d(0.0) + d(0.8))).ln();
        assert!((got - 0.5 * (l1 + l2)).abs() < 1e-13);
    }

    #[test]
    fn identical_domain_outputs_hit_forced_value() {
        let s = t(&[&[0.3, 0.4], &[0.3, 0.4]]);
        let v = supcon_da(DomainOutputs { source: &s, target: &s }, &HALF).unwrap();
        assert!((v - 2.0 * 3f64.ln()).abs() < 1e-12, "{v}");
        assert!((v - 2.19722).abs() < 1e-5);
    }

    #[test]
    fn separated_domains_hand_value() {
        // source {e1,e1}, target {e2,e2}, tau 1: for each anchor the positive
        // has cos 1 and the two other-domain outputs have cos 0.
        let s = t(&[&[1.0, 0.0], &[1.0, 0.0]]);
        let tg = t(&[&[0.0, 1.0], &[0.0, 1.0]]);
        let v = supcon_da(DomainOutputs { source: &s, target: &tg }, &ONE).unwrap();
        let e = std::f64::consts::E;
        let per = -(e / (e + 2.0)).ln();
        assert!((v - 2.0 * per).abs() < 1e-13);
    }

    #[test]
    fn too_few_domain_outputs() {
        let s = t(&[&[1.0, 0.0]]);
        let tg = t(&[&[0.0, 1.0], &[0.0, 1.0]]);
        assert!(matches!(
            supcon_da(DomainOutputs { source: &s, target: &tg }, &ONE),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn paired_length_mismatch() {
        let a = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = t(&[&[1.0, 0.0]]);
        assert!(matches!(pnt_xent(&a, &b, &ONE), Err(Error::Domain(_))));
    }

    #[test]
    fn bad_temperature() {
        assert!(ContrastiveConfig::new(0.0).is_err());
        assert!(ContrastiveConfig::new(-1.0).is_err());
    }

    #[test]
    fn domain_swap_symmetry() {
        let s = t(&[&[1.0, 0.2, -0.3], &[0.5, 0.9, 0.1]]);
        let tg = t(&[&[-0.4, 0.3, 0.8], &[0.2, -0.6, 0.5]]);
        let a = supcon_da(DomainOutputs { source: &s, target: &tg }, &HALF).unwrap();
        let b = supcon_da(DomainOutputs { source: &tg, target: &s }, &HALF).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
