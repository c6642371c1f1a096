//! Brute-force contrastive losses: explicit positive and negative sets,
//! scalar arithmetic only.

use sdcda::Tensor;

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut uv = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for k in 0..u.len() {
        uv += u[k] * v[k];
        uu += u[k] * u[k];
        vv += v[k] * v[k];
    }
    uv / (uu.sqrt() * vv.sqrt())
}

fn d(u: &[f64], v: &[f64], tau: f64) -> f64 {
    (cosine(u, v) / tau).exp()
}

/// Anchor `i` of the first view: positive is row `i` of the second view,
/// negatives are the other 2N - 2 rows of both views.
pub fn brute_nt_xent(first: &Tensor, second: &Tensor, tau: f64) -> f64 {
    let n = first.rows();
    let mut total = 0.0;
    for i in 0..n {
        let anchor = first.row(i);
        let positive = d(anchor, second.row(i), tau);
        let mut negatives = Vec::new();
        for j in 0..n {
            if j != i {
                negatives.push(first.row(j));
                negatives.push(second.row(j));
            }
        }
        assert_eq!(negatives.len(), 2 * n - 2);
        let mut denom = positive;
        for neg in negatives {
            denom += d(anchor, neg, tau);
        }
        total += -(positive / denom).ln();
    }
    total / n as f64
}

/// Every output anchors; positives are the other outputs of its own domain,
/// the denominator runs over all other outputs of both domains.
pub fn brute_supcon_da(source: &Tensor, target: &Tensor, tau: f64) -> f64 {
    let mut outputs: Vec<(&[f64], usize)> = Vec::new();
    for i in 0..source.rows() {
        outputs.push((source.row(i), 0));
    }
    for i in 0..target.rows() {
        outputs.push((target.row(i), 1));
    }
    let sizes = [source.rows() as f64, target.rows() as f64];
    let mut total = 0.0;
    for (a, (u, du)) in outputs.iter().enumerate() {
        let mut denom = 0.0;
        for (p, (v, _)) in outputs.iter().enumerate() {
            if p != a {
                denom += d(u, v, tau);
            }
        }
        let mut sum = 0.0;
        let mut count = 0.0;
        for (q, (v, dq)) in outputs.iter().enumerate() {
            if q != a && dq == du {
                sum += (d(u, v, tau) / denom).ln();
                count += 1.0;
            }
        }
        total += -(sum / count) / sizes[*du];
    }
    total
}
