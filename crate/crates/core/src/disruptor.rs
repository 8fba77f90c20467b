//! Positive and negative disruptors synthesized from a single anchor.
//!
//! Positives stay close to the anchor (additive Gaussian noise, or a random
//! zero mask). Negatives are either orthogonal to the anchor at the same norm,
//! or independent samples from the population statistics. Nothing in this
//! module writes to disk.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::gaussian_vec;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{dot, norm, DistributionStats, Template};

const MAX_ORTHOGONAL_ATTEMPTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisruptorKind {
    Noise,
    Mask,
    Orthogonal,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisruptorConfig {
    pub k: usize,
    pub noise_std: f64,
    pub mask_prob: f64,
    /// Fraction of positives made by additive noise; the rest are masked.
    pub positive_split: f64,
    /// Fraction of negatives made by orthogonalization; the rest are synthetic.
    pub negative_split: f64,
}

impl Default for DisruptorConfig {
    fn default() -> Self {
        Self {
            k: 50,
            noise_std: 0.2,
            mask_prob: 0.2,
            positive_split: 0.5,
            negative_split: 0.5,
        }
    }
}

impl DisruptorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("disruptor count k must be positive"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("noise_std must be finite and >= 0"));
        }
        for (name, p) in [
            ("mask_prob", self.mask_prob),
            ("positive_split", self.positive_split),
            ("negative_split", self.negative_split),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    fn noise_count(&self) -> usize {
        (self.k as f64 * self.positive_split).round() as usize
    }

    fn orthogonal_count(&self) -> usize {
        (self.k as f64 * self.negative_split).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Disruptor {
    pub kind: DisruptorKind,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisruptorSet {
    pub anchor: Vec<f64>,
    pub positives: Vec<Disruptor>,
    pub negatives: Vec<Disruptor>,
}

impl DisruptorSet {
    pub fn k(&self) -> usize {
        self.positives.len()
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// Anchor first, then positives, then negatives.
    pub fn batch_rows(&self) -> impl Iterator<Item = &[f64]> {
        std::iter::once(self.anchor.as_slice())
            .chain(self.positives.iter().map(|d| d.values.as_slice()))
            .chain(self.negatives.iter().map(|d| d.values.as_slice()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.positives.len() != self.negatives.len() || self.positives.is_empty() {
            return Err(Error::input(format!(
                "disruptor set needs k >= 1 positives and negatives, found {} and {}",
                self.positives.len(),
                self.negatives.len()
            )));
        }
        let n = self.anchor.len();
        for d in self.positives.iter().chain(&self.negatives) {
            Error::check_dim(n, d.values.len())?;
            if d.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::input("disruptor contains a non-finite value"));
            }
        }
        Ok(())
    }
}

pub fn positive_noise(anchor: &[f64], noise_std: f64, stream: &RngStream) -> Result<Vec<f64>> {
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::config("noise_std must be finite and >= 0"));
    }
    let mut rng = stream.rng();
    Ok(anchor
        .iter()
        .map(|a| a + noise_std * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

pub fn positive_mask(anchor: &[f64], mask_prob: f64, stream: &RngStream) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&mask_prob) {
        return Err(Error::config("mask_prob must lie in [0, 1]"));
    }
    let mut rng = stream.rng();
    Ok(anchor
        .iter()
        .map(|&a| if rng.random_bool(mask_prob) { 0.0 } else { a })
        .collect())
}

/// Removes the component of `draw` along `anchor` and rescales the residual to
/// the anchor's norm. `None` if the residual is numerically zero.
pub fn orthogonalize_against(anchor: &[f64], draw: &[f64]) -> Option<Vec<f64>> {
    let anchor_sq = dot(anchor, anchor);
    let coeff = dot(draw, anchor) / anchor_sq;
    let mut residual: Vec<f64> = draw.iter().zip(anchor).map(|(d, a)| d - coeff * a).collect();
    // A second pass recovers the orthogonality lost to cancellation.
    let coeff = dot(&residual, anchor) / anchor_sq;
    residual.iter_mut().zip(anchor).for_each(|(r, a)| *r -= coeff * a);

    let residual_norm = norm(&residual);
    if !(residual_norm > 1e-9 * norm(draw)) {
        return None;
    }
    let scale = anchor_sq.sqrt() / residual_norm;
    residual.iter_mut().for_each(|r| *r *= scale);
    Some(residual)
}

pub fn negative_orthogonal(anchor: &[f64], stream: &RngStream) -> Result<Vec<f64>> {
    if norm(anchor) == 0.0 {
        return Err(Error::DegenerateAnchor);
    }
    let mut rng = stream.rng();
    for _ in 0..MAX_ORTHOGONAL_ATTEMPTS {
        let draw = gaussian_vec(&mut rng, anchor.len());
        if let Some(v) = orthogonalize_against(anchor, &draw) {
            return Ok(v);
        }
    }
    Err(Error::DegenerateDraw(MAX_ORTHOGONAL_ATTEMPTS))
}

pub fn negative_synthetic(stats: &DistributionStats, stream: &RngStream) -> Result<Vec<f64>> {
    stats.validate()?;
    let mut rng = stream.rng();
    Ok(stats
        .mean
        .iter()
        .zip(&stats.variance)
        .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

pub fn build_disruptor_set(
    anchor: &Template,
    config: &DisruptorConfig,
    stats: &DistributionStats,
    stream: &RngStream,
) -> Result<DisruptorSet> {
    config.validate()?;
    stats.validate()?;
    anchor.validate()?;
    Error::check_dim(stats.dim, anchor.dim())?;

    let a = &anchor.values;
    let n_noise = config.noise_count();
    let n_orth = config.orthogonal_count();

    let positives = (0..config.k)
        .map(|i| {
            let s = stream.child(format!("positive/{i}"));
            Ok(if i < n_noise {
                Disruptor {
                    kind: DisruptorKind::Noise,
                    values: positive_noise(a, config.noise_std, &s)?,
                }
            } else {
                Disruptor {
                    kind: DisruptorKind::Mask,
                    values: positive_mask(a, config.mask_prob, &s)?,
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let negatives = (0..config.k)
        .map(|i| {
            let s = stream.child(format!("negative/{i}"));
            Ok(if i < n_orth {
                Disruptor {
                    kind: DisruptorKind::Orthogonal,
                    values: negative_orthogonal(a, &s)?,
                }
            } else {
                Disruptor {
                    kind: DisruptorKind::Synthetic,
                    values: negative_synthetic(stats, &s)?,
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DisruptorSet {
        anchor: a.clone(),
        positives,
        negatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{cosine, normalize};

    fn unit_anchor(n: usize, seed: u64) -> Vec<f64> {
        let mut v = gaussian_vec(&mut RngStream::new(seed, "anchor").rng(), n);
        normalize(&mut v);
        v
    }

    fn iso_stats(n: usize) -> DistributionStats {
        DistributionStats::new(vec![0.0; n], vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn zero_noise_and_zero_mask_keep_anchor() {
        let a = unit_anchor(16, 1);
        let s = RngStream::new(1, "x");
        assert_eq!(positive_noise(&a, 0.0, &s).unwrap(), a);
        assert_eq!(positive_mask(&a, 0.0, &s).unwrap(), a);
        assert!(positive_mask(&a, 1.0, &s).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn invalid_parameters_rejected() {
        let a = unit_anchor(4, 1);
        let s = RngStream::new(1, "x");
        assert!(positive_noise(&a, -0.1, &s).is_err());
        assert!(positive_mask(&a, 1.5, &s).is_err());
        assert!(DisruptorConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(DisruptorConfig { negative_split: -0.1, ..Default::default() }
            .validate()
            .is_err());
    }

    #[test]
    fn noise_is_deterministic_per_stream() {
        let a = unit_anchor(32, 2);
        let s = RngStream::new(9, "p");
        assert_eq!(
            positive_noise(&a, 0.2, &s).unwrap(),
            positive_noise(&a, 0.2, &s).unwrap()
        );
        assert_ne!(
            positive_noise(&a, 0.2, &s).unwrap(),
            positive_noise(&a, 0.2, &s.child("other")).unwrap()
        );
    }

    #[test]
    fn gram_schmidt_hand_example() {
        let out = orthogonalize_against(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(out, vec![0.0, 1.0]);
        assert!(orthogonalize_against(&[1.0, 0.0], &[2.0, 0.0]).is_none());
    }

    #[test]
    fn orthogonal_negative_contract() {
        for seed in 0..50 {
            let mut a = unit_anchor(64, seed);
            a.iter_mut().for_each(|x| *x *= 3.7);
            let o = negative_orthogonal(&a, &RngStream::new(seed, "o")).unwrap();
            assert!(cosine(&o, &a).abs() <= 1e-6);
            assert!(((norm(&o) - norm(&a)) / norm(&a)).abs() <= 1e-9);
        }
        assert!(matches!(
            negative_orthogonal(&[0.0, 0.0], &RngStream::new(0, "o")),
            Err(Error::DegenerateAnchor)
        ));
    }

    #[test]
    fn zero_variance_synthetic_is_the_mean() {
        let stats = DistributionStats::new(vec![0.5, -1.0, 2.0], vec![0.0; 3]).unwrap();
        let s = RngStream::new(3, "syn");
        assert_eq!(negative_synthetic(&stats, &s).unwrap(), stats.mean);
        let stats = iso_stats(8);
        assert_eq!(
            negative_synthetic(&stats, &s).unwrap(),
            negative_synthetic(&stats, &s).unwrap()
        );
    }

    #[test]
    fn default_set_composition() {
        let n = 32;
        let anchor = Template::new("s", "0", unit_anchor(n, 4)).unwrap();
        let set = build_disruptor_set(
            &anchor,
            &DisruptorConfig::default(),
            &iso_stats(n),
            &RngStream::new(1, "d"),
        )
        .unwrap();
        let count = |v: &[Disruptor], k: DisruptorKind| v.iter().filter(|d| d.kind == k).count();
        assert_eq!(count(&set.positives, DisruptorKind::Noise), 25);
        assert_eq!(count(&set.positives, DisruptorKind::Mask), 25);
        assert_eq!(count(&set.negatives, DisruptorKind::Orthogonal), 25);
        assert_eq!(count(&set.negatives, DisruptorKind::Synthetic), 25);
        assert_eq!(set.batch_rows().count(), 101);
        set.validate().unwrap();
    }

    #[test]
    fn single_disruptor_each() {
        let anchor = Template::new("s", "0", unit_anchor(8, 5)).unwrap();
        let cfg = DisruptorConfig {
            k: 1,
            positive_split: 1.0,
            ..Default::default()
        };
        let set = build_disruptor_set(&anchor, &cfg, &iso_stats(8), &RngStream::new(1, "d")).unwrap();
        assert_eq!(set.positives.len(), 1);
        assert_eq!(set.positives[0].kind, DisruptorKind::Noise);
        assert_eq!(set.negatives.len(), 1);
    }

    #[test]
    fn set_rejects_dimension_mismatch() {
        let anchor = Template::new("s", "0", unit_anchor(8, 5)).unwrap();
        let res = build_disruptor_set(
            &anchor,
            &DisruptorConfig::default(),
            &iso_stats(9),
            &RngStream::new(1, "d"),
        );
        assert!(matches!(res, Err(Error::Dimension { .. })));
    }
}
