//! White-box inversion attack.
//!
//! The adversary holds the cloak, the trained network and the population
//! statistics. Starting from guesses drawn from those statistics, it runs Adam
//! on the squared distance between the network's continuous output and the
//! cloak bits, then scores each recovered vector by cosine similarity with the
//! true template.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cloaknet::{AdamHyper, AdamState, CloakNetwork, EnrollmentRecord, Mode};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{cosine, BinaryCloak, DistributionStats, Template};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub restarts: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            steps: 1000,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::config("attack needs at least one restart"));
        }
        if self.steps == 0 {
            return Err(Error::config("attack needs at least one step"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("attack learning rate must be positive"));
        }
        Ok(())
    }
}

/// A differentiable map the attack can invert.
pub trait AttackSurface {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// Per-row `|f(x) - target|^2` and its gradient with respect to each row of `x`.
    fn loss_and_input_grad(
        &self,
        x: ArrayView2<f64>,
        target: &[f64],
    ) -> Result<(Vec<f64>, Array2<f64>)>;
}

fn squared_error(outputs: &Array2<f64>, target: &[f64]) -> (Vec<f64>, Array2<f64>) {
    let mut grad = outputs.clone();
    let mut losses = Vec::with_capacity(outputs.nrows());
    for mut row in grad.rows_mut() {
        let mut loss = 0.0;
        row.iter_mut().zip(target).for_each(|(o, t)| {
            let diff = *o - t;
            loss += diff * diff;
            *o = 2.0 * diff;
        });
        losses.push(loss);
    }
    (losses, grad)
}

impl AttackSurface for CloakNetwork {
    fn input_dim(&self) -> usize {
        CloakNetwork::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        self.hash_dim()
    }

    fn loss_and_input_grad(
        &self,
        x: ArrayView2<f64>,
        target: &[f64],
    ) -> Result<(Vec<f64>, Array2<f64>)> {
        let cache = self.forward(x, Mode::Eval)?;
        let (losses, d_out) = squared_error(cache.output(), target);
        Ok((losses, self.input_gradient(&cache, &d_out)))
    }
}

/// Positive control for the attack engine: the element-wise map
/// `x -> tanh(gain * x)`, which keeps the sign pattern of its input and is
/// invertible. An attack that cannot recover a template through this map is
/// broken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TanhDiagnostic {
    pub dim: usize,
    pub gain: f64,
}

impl TanhDiagnostic {
    pub fn new(dim: usize, gain: f64) -> Self {
        Self { dim, gain }
    }

    /// Gain matched to the population scale: one standard deviation maps to
    /// `tanh(1)`.
    pub fn for_stats(stats: &DistributionStats) -> Self {
        let mean_var = stats.variance.iter().sum::<f64>() / stats.dim as f64;
        Self::new(stats.dim, 1.0 / mean_var.sqrt().max(f64::MIN_POSITIVE))
    }

    pub fn cloak(&self, template: &[f64]) -> Result<BinaryCloak> {
        Error::check_dim(self.dim, template.len())?;
        Ok(crate::cloaknet::binarize(
            &template
                .iter()
                .map(|v| (self.gain * v).tanh())
                .collect::<Vec<_>>(),
        ))
    }
}

impl AttackSurface for TanhDiagnostic {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.dim
    }

    fn loss_and_input_grad(
        &self,
        x: ArrayView2<f64>,
        target: &[f64],
    ) -> Result<(Vec<f64>, Array2<f64>)> {
        Error::check_dim(self.dim, x.ncols())?;
        let out = x.mapv(|v| (self.gain * v).tanh());
        let (losses, mut grad) = squared_error(&out, target);
        ndarray::Zip::from(&mut grad)
            .and(&out)
            .for_each(|g, &o| *g *= self.gain * (1.0 - o * o));
        Ok((losses, grad))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    /// Cosine similarity of the recovered vector with the reference;
    /// `None` if the optimization produced non-finite values.
    pub inversion_score: Option<f64>,
    pub final_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub subject_id: String,
    pub best_inversion_score: Option<f64>,
    pub restarts: Vec<RestartOutcome>,
    pub success: bool,
    pub threshold_used: f64,
}

impl AttackResult {
    pub fn failed_restarts(&self) -> usize {
        self.restarts
            .iter()
            .filter(|r| r.inversion_score.is_none())
            .count()
    }
}

fn sample_guess(stats: &DistributionStats, stream: &RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    stats
        .mean
        .iter()
        .zip(&stats.variance)
        .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Runs every restart of the attack against `surface`. Restarts are
/// optimized together as rows of one batch; rows never interact.
pub fn invert<S: AttackSurface + ?Sized>(
    surface: &S,
    cloak: &BinaryCloak,
    stats: &DistributionStats,
    reference: &Template,
    threshold: f64,
    config: &AttackConfig,
    stream: &RngStream,
) -> Result<AttackResult> {
    config.validate()?;
    stats.validate()?;
    let n = surface.input_dim();
    Error::check_dim(n, stats.dim)?;
    Error::check_dim(n, reference.dim())?;
    Error::check_dim(surface.output_dim(), cloak.len())?;

    let target = cloak.to_f64();
    let r = config.restarts;
    let mut flat = Vec::with_capacity(r * n);
    for i in 0..r {
        flat.extend(sample_guess(stats, &stream.child(format!("restart/{i}"))));
    }
    let mut x = Array2::from_shape_vec((r, n), flat).expect("restart batch shape");
    let hyper = AdamHyper::with_learning_rate(config.learning_rate);
    let mut adam = AdamState::new(&[r * n]);
    let mut alive = vec![true; r];

    for _ in 0..config.steps {
        let (losses, mut grad) = surface.loss_and_input_grad(x.view(), &target)?;
        for (i, mut g) in grad.rows_mut().into_iter().enumerate() {
            let finite = losses[i].is_finite() && g.iter().all(|v| v.is_finite());
            if !finite || !alive[i] {
                alive[i] = false;
                g.fill(0.0);
            }
        }
        let xs = x.as_slice_mut().expect("standard layout");
        adam.step(&hyper, &mut [xs], &[grad.as_slice().expect("standard layout")]);
    }
    let (final_losses, _) = surface.loss_and_input_grad(x.view(), &target)?;

    let restarts: Vec<RestartOutcome> = x
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let row = row.to_vec();
            let ok = alive[i] && final_losses[i].is_finite() && row.iter().all(|v| v.is_finite());
            if ok {
                RestartOutcome {
                    inversion_score: Some(cosine(&row, &reference.values)),
                    final_loss: Some(final_losses[i]),
                }
            } else {
                RestartOutcome {
                    inversion_score: None,
                    final_loss: None,
                }
            }
        })
        .collect();

    let best = restarts
        .iter()
        .filter_map(|o| o.inversion_score)
        .max_by(|a, b| a.total_cmp(b));
    Ok(AttackResult {
        subject_id: reference.subject_id.clone(),
        best_inversion_score: best,
        success: restarts
            .iter()
            .any(|o| o.inversion_score.is_some_and(|s| s >= threshold)),
        restarts,
        threshold_used: threshold,
    })
}

/// The white-box attack against an enrollment record.
pub fn invert_cloak(
    record: &EnrollmentRecord,
    stats: &DistributionStats,
    reference: &Template,
    unprotected_threshold: f64,
    config: &AttackConfig,
) -> Result<AttackResult> {
    let stream = RngStream::new(config.seed, format!("attack/{}", record.subject_id));
    invert(
        &record.network,
        &record.cloak,
        stats,
        reference,
        unprotected_threshold,
        config,
        &stream,
    )
}

/// Fraction of successful attacks.
pub fn compute_sar(results: &[AttackResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::input("SAR of an empty result list"));
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}
