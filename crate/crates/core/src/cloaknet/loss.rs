//! Identity (triplet), binarization and diversity losses.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::types::BinaryCloak;

/// Sign thresholding with zero mapped to +1.
pub fn binarize(output: &[f64]) -> BinaryCloak {
    let bits = output
        .iter()
        .map(|&v| if v < 0.0 { -1 } else { 1 })
        .collect();
    BinaryCloak::from_bits(bits).expect("binarize of a non-empty output")
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Triplet hinge `max(|a - p| - |a - n| + margin, 0)`.
pub fn loss_id(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> f64 {
    (distance(anchor, positive) - distance(anchor, negative) + margin).max(0.0)
}

/// Euclidean distance between the continuous output and its binarization target.
pub fn loss_bin(output: &[f64], cloak: &BinaryCloak) -> f64 {
    distance(output, &cloak.to_f64())
}

/// Squared mean of the continuous output.
pub fn loss_div(output: &[f64]) -> f64 {
    let mean = output.iter().sum::<f64>() / output.len() as f64;
    mean * mean
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub id: f64,
    pub bin: f64,
    pub div: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            id: 1.0,
            bin: 1.0,
            div: 1.0,
        }
    }
}

/// Batch-averaged loss components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub id: f64,
    pub bin: f64,
    pub div: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        self.id.is_finite() && self.bin.is_finite() && self.div.is_finite()
    }
}

pub fn loss_total(parts: &LossParts, weights: &LossWeights) -> f64 {
    weights.id * parts.id + weights.bin * parts.bin + weights.div * parts.div
}

/// Binarization targets for each output row.
pub fn binarize_rows(outputs: ArrayView2<f64>) -> Array2<f64> {
    let mut targets = Array2::zeros(outputs.raw_dim());
    ndarray::Zip::from(&mut targets)
        .and(&outputs)
        .for_each(|t, &o| *t = if o < 0.0 { -1.0 } else { 1.0 });
    targets
}

/// Loss over an enrollment batch laid out as `[anchor, k positives, k negatives]`,
/// with the gradient with respect to every output row. `targets` are the
/// binarized outputs and are treated as constants.
///
/// The triplet term averages over the `k` pairs (i-th positive with i-th
/// negative); the binarization and diversity terms average over all rows.
pub fn enrollment_objective(
    outputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    k: usize,
    margin: f64,
    weights: &LossWeights,
) -> (LossParts, Array2<f64>) {
    let (rows, d) = outputs.dim();
    assert_eq!(rows, 2 * k + 1, "batch must hold anchor, k positives, k negatives");
    assert_eq!(targets.dim(), outputs.dim());
    let mut grad = Array2::<f64>::zeros((rows, d));
    let mut parts = LossParts::default();

    let anchor = outputs.row(0);
    for i in 0..k {
        let (pi, ni) = (1 + i, 1 + k + i);
        let pos = outputs.row(pi);
        let neg = outputs.row(ni);
        let a_minus_p = &anchor - &pos;
        let a_minus_n = &anchor - &neg;
        let dp = a_minus_p.dot(&a_minus_p).sqrt();
        let dn = a_minus_n.dot(&a_minus_n).sqrt();
        let hinge = dp - dn + margin;
        if hinge > 0.0 {
            parts.id += hinge;
            let scale = weights.id / k as f64;
            if dp > 0.0 {
                let g = a_minus_p * (scale / dp);
                grad.row_mut(0).scaled_add(1.0, &g);
                grad.row_mut(pi).scaled_add(-1.0, &g);
            }
            if dn > 0.0 {
                let g = a_minus_n * (scale / dn);
                grad.row_mut(0).scaled_add(-1.0, &g);
                grad.row_mut(ni).scaled_add(1.0, &g);
            }
        }
    }
    parts.id /= k as f64;

    let per_row = 1.0 / rows as f64;
    for b in 0..rows {
        let o = outputs.row(b);
        let diff = &o - &targets.row(b);
        let dist = diff.dot(&diff).sqrt();
        parts.bin += dist;
        if dist > 0.0 {
            grad.row_mut(b)
                .scaled_add(weights.bin * per_row / dist, &diff);
        }

        let mean = o.sum() / d as f64;
        parts.div += mean * mean;
        let g = weights.div * per_row * 2.0 * mean / d as f64;
        grad.row_mut(b).mapv_inplace(|v| v + g);
    }
    parts.bin *= per_row;
    parts.div *= per_row;

    (parts, grad)
}
