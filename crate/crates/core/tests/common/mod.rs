#![allow(dead_code)]

use facecloak::cloaknet::{
    binarize_rows, enrollment_objective, loss_total, CloakNetwork, LossWeights, Mode,
    PARAM_GROUPS,
};
use facecloak::RngStream;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-4;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error. Biases feeding a batch-norm
/// layer have an exactly zero gradient, where a pure ratio is meaningless.
pub const REL_FLOOR: f64 = 1e-6;

pub struct GradCheck {
    pub max_rel_error: f64,
    /// Groups whose perturbation flips the sign of some ReLU input.
    pub kink_groups: Vec<String>,
    pub per_group: Vec<(String, f64, f64, f64)>,
}

fn objective(
    net: &CloakNetwork,
    batch: &Array2<f64>,
    targets: &Array2<f64>,
    k: usize,
    margin: f64,
) -> f64 {
    let cache = net.forward(batch.view(), Mode::Train).unwrap();
    let w = LossWeights::default();
    let (parts, _) = enrollment_objective(cache.output().view(), targets.view(), k, margin, &w);
    loss_total(&parts, &w)
}

/// Directional central differences along one random unit direction per
/// parameter group, against the analytic backward pass. The binarization
/// targets are frozen at the unperturbed point.
pub fn gradient_check(seed: u64, n: usize, d: usize, k: usize, margin: f64) -> GradCheck {
    let stream = RngStream::new(seed, "gradient-check");
    let mut net = CloakNetwork::init(n, d, &stream.child("init")).unwrap();
    let mut rng = stream.child("perturb").rng();
    // Move every parameter off its initial value so no group is trivial.
    for group in net.param_slices_mut() {
        for v in group.iter_mut() {
            *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let rows = 2 * k + 1;
    let batch = Array2::from_shape_simple_fn((rows, n), || rng.sample::<f64, _>(StandardNormal));
    let cache = net.forward(batch.view(), Mode::Train).unwrap();
    let targets = binarize_rows(cache.output().view());
    let w = LossWeights::default();
    let (_, d_out) = enrollment_objective(cache.output().view(), targets.view(), k, margin, &w);
    let grads = net.backward(&cache, &d_out);

    let mut per_group = Vec::new();
    let mut kink_groups = Vec::new();
    let mut max_rel: f64 = 0.0;
    for (g, name) in PARAM_GROUPS.iter().enumerate() {
        let len = net.param_slices()[g].len();
        let mut dir: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        let analytic: f64 = grads.slices()[g].iter().zip(&dir).map(|(a, b)| a * b).sum();

        let moved = |sign: f64| {
            let mut m = net.clone();
            for (p, u) in m.param_slices_mut()[g].iter_mut().zip(&dir) {
                *p += sign * FD_STEP * u;
            }
            m
        };
        let (plus, minus) = (moved(1.0), moved(-1.0));
        let pre = |m: &CloakNetwork| {
            m.forward(batch.view(), Mode::Train).unwrap().pre_activation().mapv(|z| z > 0.0)
        };
        if pre(&plus) != pre(&minus) {
            kink_groups.push(name.to_string());
        }
        let numeric = (objective(&plus, &batch, &targets, k, margin)
            - objective(&minus, &batch, &targets, k, margin))
            / (2.0 * FD_STEP);
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(REL_FLOOR);
        max_rel = max_rel.max(rel);
        per_group.push((name.to_string(), analytic, numeric, rel));
    }
    GradCheck {
        max_rel_error: max_rel,
        kink_groups,
        per_group,
    }
}
