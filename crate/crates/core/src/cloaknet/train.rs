use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::adam::{AdamHyper, AdamState};
use super::loss::{binarize, binarize_rows, enrollment_objective, loss_total, LossParts, LossWeights};
use super::network::CloakNetwork;
use super::record::EnrollmentRecord;
use crate::disruptor::{build_disruptor_set, DisruptorConfig, DisruptorSet};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{BinaryCloak, DistributionStats, Template};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Cloak length `d`.
    pub hash_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub lambda_id: f64,
    pub lambda_bin: f64,
    pub lambda_div: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hash_dim: 64,
            epochs: 100,
            learning_rate: 0.01,
            margin: 13.0,
            lambda_id: 1.0,
            lambda_bin: 1.0,
            lambda_div: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            bn_momentum: CloakNetwork::DEFAULT_MOMENTUM,
            bn_epsilon: CloakNetwork::DEFAULT_EPSILON,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if self.hash_dim == 0 {
            return Err(Error::config("hash_dim must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !finite_nonneg(self.margin) {
            return Err(Error::config("margin must be >= 0"));
        }
        if ![self.lambda_id, self.lambda_bin, self.lambda_div]
            .into_iter()
            .all(finite_nonneg)
        {
            return Err(Error::config("loss weights must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !(self.adam_eps > 0.0)
        {
            return Err(Error::config("invalid Adam hyperparameters"));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || !(self.bn_epsilon > 0.0) {
            return Err(Error::config("invalid batch-norm hyperparameters"));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            id: self.lambda_id,
            bin: self.lambda_bin,
            div: self.lambda_div,
        }
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Per-epoch loss values recorded during training, before each update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub parts: Vec<LossParts>,
    pub totals: Vec<f64>,
}

/// Stacks `[anchor, positives..., negatives...]` into a batch.
pub fn enrollment_batch(disruptors: &DisruptorSet) -> Array2<f64> {
    let n = disruptors.dim();
    let rows: Vec<f64> = disruptors.batch_rows().flatten().copied().collect();
    Array2::from_shape_vec((rows.len() / n, n), rows).expect("rectangular disruptor batch")
}

pub fn train_enrollment(
    anchor: &Template,
    disruptors: &DisruptorSet,
    config: &TrainConfig,
    stream: &RngStream,
) -> Result<EnrollmentRecord> {
    train_enrollment_traced(anchor, disruptors, config, stream).map(|(r, _)| r)
}

pub fn train_enrollment_traced(
    anchor: &Template,
    disruptors: &DisruptorSet,
    config: &TrainConfig,
    stream: &RngStream,
) -> Result<(EnrollmentRecord, TrainingTrace)> {
    config.validate()?;
    anchor.validate()?;
    disruptors.validate()?;
    Error::check_dim(anchor.dim(), disruptors.dim())?;
    if disruptors.anchor != anchor.values {
        return Err(Error::input("disruptor set was built from a different anchor"));
    }

    let k = disruptors.k();
    let batch = enrollment_batch(disruptors);
    let mut net = CloakNetwork::init_with(
        anchor.dim(),
        config.hash_dim,
        config.bn_epsilon,
        config.bn_momentum,
        stream,
    )?;
    let weights = config.weights();
    let hyper = config.adam();
    let sizes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
    let mut adam = AdamState::new(&sizes);
    let mut trace = TrainingTrace::default();

    for epoch in 0..config.epochs {
        let cache = net.forward_train(batch.view())?;
        let targets = binarize_rows(cache.output().view());
        let (parts, d_out) =
            enrollment_objective(cache.output().view(), targets.view(), k, config.margin, &weights);
        let total = loss_total(&parts, &weights);
        if !total.is_finite() || !parts.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        trace.parts.push(parts);
        trace.totals.push(total);

        let grads = net.backward(&cache, &d_out);
        adam.step(&hyper, &mut net.param_slices_mut(), &grads.slices());
    }

    net.round_to_f32();
    net.validate()
        .map_err(|_| Error::TrainingDiverged { epoch: config.epochs })?;
    let cloak = binarize(&net.predict_one(&anchor.values)?);

    let record = EnrollmentRecord {
        subject_id: anchor.subject_id.clone(),
        anchor_sample_id: anchor.sample_id.clone(),
        cloak,
        network: net,
        train_config: config.clone(),
        disruptor_config: None,
        seed: stream.seed(),
        stream: stream.label().to_owned(),
    };
    Ok((record, trace))
}

/// Builds fresh disruptors for `anchor` and trains its cloak network. The
/// disruptors are dropped before returning.
pub fn enroll(
    anchor: &Template,
    stats: &DistributionStats,
    disruptor_config: &DisruptorConfig,
    train_config: &TrainConfig,
    stream: &RngStream,
) -> Result<EnrollmentRecord> {
    enroll_traced(anchor, stats, disruptor_config, train_config, stream).map(|(r, _)| r)
}

pub fn enroll_traced(
    anchor: &Template,
    stats: &DistributionStats,
    disruptor_config: &DisruptorConfig,
    train_config: &TrainConfig,
    stream: &RngStream,
) -> Result<(EnrollmentRecord, TrainingTrace)> {
    let disruptors =
        build_disruptor_set(anchor, disruptor_config, stats, &stream.child("disruptors"))?;
    let (mut record, trace) =
        train_enrollment_traced(anchor, &disruptors, train_config, &stream.child("network"))?;
    record.disruptor_config = Some(disruptor_config.clone());
    record.stream = stream.label().to_owned();
    Ok((record, trace))
}

/// Eval-mode forward pass followed by binarization.
pub fn infer_cloak(network: &CloakNetwork, query: &[f64]) -> Result<BinaryCloak> {
    Ok(binarize(&network.predict_one(query)?))
}

/// Cloaks for many queries through one network, in input order.
pub fn infer_cloaks(network: &CloakNetwork, queries: &[&[f64]]) -> Result<Vec<BinaryCloak>> {
    if queries.is_empty() {
        return Ok(Vec::new());
    }
    let n = network.input_dim();
    for q in queries {
        Error::check_dim(n, q.len())?;
    }
    let flat: Vec<f64> = queries.iter().flat_map(|q| q.iter().copied()).collect();
    let batch = Array2::from_shape_vec((queries.len(), n), flat).expect("rectangular queries");
    let out = network.predict(batch.view())?;
    Ok(out
        .rows()
        .into_iter()
        .map(|r| binarize(r.as_slice().expect("standard layout")))
        .collect())
}

/// Enrolls each anchor under its own stream `(seed, subject_id)`. Results are
/// independent of scheduling and returned in input order.
pub fn enroll_many(
    anchors: &[Template],
    stats: &DistributionStats,
    disruptor_config: &DisruptorConfig,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<Vec<EnrollmentRecord>> {
    use rayon::prelude::*;
    anchors
        .par_iter()
        .map(|a| {
            enroll(
                a,
                stats,
                disruptor_config,
                train_config,
                &RngStream::new(seed, a.subject_id.clone()),
            )
        })
        .collect()
}
