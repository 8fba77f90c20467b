//! Attribute-leakage probe: a `d -> 32 -> 1` classifier (ReLU, then sigmoid)
//! trained with binary cross-entropy to predict a binary attribute.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloaknet::{AdamHyper, AdamState};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Share of groups assigned to the test side before balancing.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 100,
            learning_rate: 0.001,
            batch_size: 32,
            test_fraction: 0.3,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("probe hidden size, epochs and batch size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("probe learning rate must be positive"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("test_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// A feature vector with its attribute label. `group` ties together samples
/// that must land on the same side of the train/test split (e.g. a subject).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSample {
    pub group: String,
    pub features: Vec<f64>,
    pub label: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeProbe {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

struct ProbeGrads {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array1<f64>,
    b2: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl AttributeProbe {
    pub fn init(input_dim: usize, hidden: usize, stream: &RngStream) -> Self {
        let mut rng = stream.rng();
        let l1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        let l2 = (6.0 / (hidden + 1) as f64).sqrt();
        let w1 = Array2::from_shape_simple_fn((hidden, input_dim), || rng.random_range(-l1..=l1));
        let w2 = Array1::from_shape_simple_fn(hidden, || rng.random_range(-l2..=l2));
        Self {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: 0.0,
        }
    }

    fn hidden(&self, x: &Array2<f64>) -> Array2<f64> {
        (x.dot(&self.w1.t()) + &self.b1).mapv(|v| v.max(0.0))
    }

    /// Predicted probability of the positive label for each row.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Array1<f64> {
        (self.hidden(x).dot(&self.w2) + self.b2).mapv(sigmoid)
    }

    /// Mean binary cross-entropy on a batch.
    pub fn bce(&self, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
        let logits = self.hidden(x).dot(&self.w2) + self.b2;
        // log(1 + e^z) - y z, written to stay finite for large |z|.
        logits
            .iter()
            .zip(y)
            .map(|(&z, &t)| z.max(0.0) - t * z + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / y.len() as f64
    }

    fn gradients(&self, x: &Array2<f64>, y: &Array1<f64>) -> ProbeGrads {
        let b = y.len() as f64;
        let pre = x.dot(&self.w1.t()) + &self.b1;
        let h = pre.mapv(|v| v.max(0.0));
        let p = (h.dot(&self.w2) + self.b2).mapv(sigmoid);
        let dlogit = (&p - y) / b;
        let w2 = h.t().dot(&dlogit);
        let b2 = dlogit.sum();
        let mut dh = dlogit
            .view()
            .insert_axis(Axis(1))
            .dot(&self.w2.view().insert_axis(Axis(0)));
        ndarray::Zip::from(&mut dh)
            .and(&pre)
            .for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
        ProbeGrads {
            w1: dh.t().dot(x),
            b1: dh.sum_axis(Axis(0)),
            w2,
            b2,
        }
    }

    pub fn accuracy(&self, samples: &[ProbeSample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let (x, y) = to_arrays(samples);
        let p = self.predict_proba(&x);
        p.iter()
            .zip(&y)
            .filter(|(&p, &t)| (p >= 0.5) == (t >= 0.5))
            .count() as f64
            / samples.len() as f64
    }
}

fn to_arrays(samples: &[ProbeSample]) -> (Array2<f64>, Array1<f64>) {
    let n = samples[0].features.len();
    let flat: Vec<f64> = samples.iter().flat_map(|s| s.features.iter().copied()).collect();
    let x = Array2::from_shape_vec((samples.len(), n), flat).expect("rectangular samples");
    let y = samples.iter().map(|s| f64::from(u8::from(s.label))).collect();
    (x, y)
}

/// Splits by group so no group appears on both sides, then drops samples of
/// the majority class from the test side until both classes are equally
/// represented.
pub fn split_balanced(
    samples: &[ProbeSample],
    test_fraction: f64,
    stream: &RngStream,
) -> (Vec<ProbeSample>, Vec<ProbeSample>) {
    let mut groups: BTreeMap<&str, Vec<&ProbeSample>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.group.as_str()).or_default().push(s);
    }
    let mut keys: Vec<&str> = groups.keys().copied().collect();
    let mut rng = stream.rng();
    keys.shuffle(&mut rng);

    let target = (samples.len() as f64 * test_fraction).round() as usize;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for key in keys {
        let side = if test.len() < target { &mut test } else { &mut train };
        side.extend(groups[key].iter().map(|s| (*s).clone()));
    }

    let positives = test.iter().filter(|s| s.label).count();
    let negatives = test.len() - positives;
    let keep = positives.min(negatives);
    let (mut kept_pos, mut kept_neg) = (0, 0);
    test.retain(|s| {
        let counter = if s.label { &mut kept_pos } else { &mut kept_neg };
        *counter += 1;
        *counter <= keep
    });
    // Shuffle the training order once; epochs reshuffle on their own.
    train.shuffle(&mut rng);
    (train, test)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub test_accuracy: f64,
    pub train_accuracy: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub test_positives: usize,
    pub final_train_loss: f64,
}

fn check_samples(samples: &[ProbeSample], what: &str) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::input(format!("{what} set is empty")))?;
    let n = first.features.len();
    for s in samples {
        Error::check_dim(n, s.features.len())?;
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("probe features must be finite"));
        }
    }
    Ok(n)
}

/// Trains on `train` and reports held-out accuracy on `test` at a 0.5 cut.
pub fn train_probe_on_split(
    train: &[ProbeSample],
    test: &[ProbeSample],
    config: &ProbeConfig,
) -> Result<(AttributeProbe, ProbeReport)> {
    config.validate()?;
    let n = check_samples(train, "training")?;
    Error::check_dim(n, check_samples(test, "test")?)?;
    let positives = train.iter().filter(|s| s.label).count();
    if positives == 0 || positives == train.len() {
        return Err(Error::input("probe training set contains a single class"));
    }
    {
        let train_groups: std::collections::HashSet<&str> =
            train.iter().map(|s| s.group.as_str()).collect();
        if test.iter().any(|s| train_groups.contains(s.group.as_str())) {
            return Err(Error::input("train and test sets share a group"));
        }
    }

    let root = RngStream::new(config.seed, "attribute-probe");
    let mut probe = AttributeProbe::init(n, config.hidden, &root.child("init"));
    let hyper = AdamHyper::with_learning_rate(config.learning_rate);
    let mut adam = AdamState::new(&[probe.w1.len(), probe.b1.len(), probe.w2.len(), 1]);
    let (x_all, y_all) = to_arrays(train);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut root.child(format!("epoch/{epoch}")).rng());
        for chunk in order.chunks(config.batch_size) {
            let x = x_all.select(Axis(0), chunk);
            let y = y_all.select(Axis(0), chunk);
            let g = probe.gradients(&x, &y);
            let mut b2 = [probe.b2];
            adam.step(
                &hyper,
                &mut [
                    probe.w1.as_slice_mut().expect("contiguous"),
                    probe.b1.as_slice_mut().expect("contiguous"),
                    probe.w2.as_slice_mut().expect("contiguous"),
                    &mut b2,
                ],
                &[
                    g.w1.as_slice().expect("contiguous"),
                    g.b1.as_slice().expect("contiguous"),
                    g.w2.as_slice().expect("contiguous"),
                    &[g.b2],
                ],
            );
            probe.b2 = b2[0];
        }
    }

    let report = ProbeReport {
        test_accuracy: probe.accuracy(test),
        train_accuracy: probe.accuracy(train),
        train_count: train.len(),
        test_count: test.len(),
        test_positives: test.iter().filter(|s| s.label).count(),
        final_train_loss: probe.bce(&x_all, &y_all),
    };
    Ok((probe, report))
}

/// Group-disjoint balanced split followed by probe training.
pub fn train_attribute_probe(
    samples: &[ProbeSample],
    config: &ProbeConfig,
) -> Result<(AttributeProbe, ProbeReport)> {
    config.validate()?;
    let (train, test) = split_balanced(
        samples,
        config.test_fraction,
        &RngStream::new(config.seed, "attribute-probe/split"),
    );
    train_probe_on_split(&train, &test, config)
}
