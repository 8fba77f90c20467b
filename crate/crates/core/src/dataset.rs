//! Synthetic identity-clustered templates and population statistics.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{normalize, DistributionStats, Template};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub num_identities: usize,
    pub samples_per_identity: usize,
    pub dim: usize,
    /// Ratio of the expected intra-class noise norm to the (unit) class-center
    /// norm. Per-coordinate noise std is `intra_class_sigma / sqrt(dim)`.
    pub intra_class_sigma: f64,
    /// Offset of a class center along the attribute axis (+alpha or -alpha),
    /// applied before re-normalization.
    pub attribute_shift: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            num_identities: 100,
            samples_per_identity: 5,
            dim: 512,
            intra_class_sigma: 0.15,
            attribute_shift: 0.3,
            seed: 7,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_identities == 0 || self.samples_per_identity == 0 {
            return Err(Error::config(
                "num_identities and samples_per_identity must be positive",
            ));
        }
        if self.dim < 2 {
            return Err(Error::config("template dimension must be at least 2"));
        }
        if !self.intra_class_sigma.is_finite() || self.intra_class_sigma < 0.0 {
            return Err(Error::config("intra_class_sigma must be finite and >= 0"));
        }
        if !self.attribute_shift.is_finite() || self.attribute_shift < 0.0 {
            return Err(Error::config("attribute_shift must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    /// Ordered by subject then sample.
    pub templates: Vec<Template>,
    /// Binary attribute label per subject.
    pub attributes: BTreeMap<String, bool>,
    /// Unit axis along which the attribute is embedded.
    pub attribute_axis: Vec<f64>,
}

pub fn subject_label(index: usize, total: usize) -> String {
    let width = total.saturating_sub(1).to_string().len().max(4);
    format!("s{index:0width$}")
}

pub fn sample_label(index: usize, total: usize) -> String {
    let width = total.saturating_sub(1).to_string().len().max(2);
    format!("{index:0width$}")
}

pub(crate) fn gaussian_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn generate_synthetic_dataset(config: &DatasetConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let n = config.dim;
    let root = RngStream::new(config.seed, "dataset");

    let mut attribute_axis = gaussian_vec(&mut root.child("attribute-axis").rng(), n);
    normalize(&mut attribute_axis);

    let noise_std = config.intra_class_sigma / (n as f64).sqrt();
    let mut templates = Vec::with_capacity(config.num_identities * config.samples_per_identity);
    let mut attributes = BTreeMap::new();

    for i in 0..config.num_identities {
        let subject = subject_label(i, config.num_identities);
        let mut rng = root.child(format!("identity/{subject}")).rng();

        let label: bool = rng.random_bool(0.5);
        let mut center = gaussian_vec(&mut rng, n);
        normalize(&mut center);
        let shift = if label {
            config.attribute_shift
        } else {
            -config.attribute_shift
        };
        center
            .iter_mut()
            .zip(&attribute_axis)
            .for_each(|(c, a)| *c += shift * a);
        normalize(&mut center);

        for j in 0..config.samples_per_identity {
            let mut values: Vec<f64> = center
                .iter()
                .map(|c| c + noise_std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            normalize(&mut values);
            templates.push(Template {
                subject_id: subject.clone(),
                sample_id: sample_label(j, config.samples_per_identity),
                values,
            });
        }
        attributes.insert(subject, label);
    }

    Ok(SyntheticDataset {
        templates,
        attributes,
        attribute_axis,
    })
}

/// Per-coordinate sample mean and unbiased sample variance.
pub fn compute_distribution_stats(templates: &[Template]) -> Result<DistributionStats> {
    if templates.len() < 2 {
        return Err(Error::input(
            "at least two templates are needed to estimate distribution statistics",
        ));
    }
    let n = templates[0].dim();
    for t in templates {
        Error::check_dim(n, t.dim())?;
    }
    let count = templates.len() as f64;
    let mut mean = vec![0.0; n];
    for t in templates {
        mean.iter_mut().zip(&t.values).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= count);

    let mut variance = vec![0.0; n];
    for t in templates {
        variance
            .iter_mut()
            .zip(t.values.iter().zip(&mean))
            .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
    }
    variance.iter_mut().for_each(|s| *s /= count - 1.0);

    DistributionStats::new(mean, variance)
}

/// Groups templates by subject, each group sorted by `sample_id`.
pub fn group_by_subject(templates: &[Template]) -> BTreeMap<String, Vec<&Template>> {
    let mut groups: BTreeMap<String, Vec<&Template>> = BTreeMap::new();
    for t in templates {
        groups.entry(t.subject_id.clone()).or_default().push(t);
    }
    for group in groups.values_mut() {
        group.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    }
    groups
}

/// The enrollment anchor of each subject: its lexicographically first sample.
pub fn anchors(templates: &[Template]) -> Vec<Template> {
    group_by_subject(templates)
        .into_values()
        .map(|group| group[0].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::cosine;

    fn small(seed: u64) -> DatasetConfig {
        DatasetConfig {
            num_identities: 6,
            samples_per_identity: 3,
            dim: 32,
            seed,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn zero_sigma_gives_identical_samples() {
        let cfg = DatasetConfig {
            intra_class_sigma: 0.0,
            ..small(1)
        };
        let ds = generate_synthetic_dataset(&cfg).unwrap();
        for group in group_by_subject(&ds.templates).values() {
            for t in group {
                assert_eq!(t.values, group[0].values);
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_synthetic_dataset(&small(7)).unwrap();
        let b = generate_synthetic_dataset(&small(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_dataset(&small(8)).unwrap();
        assert_ne!(a.templates, c.templates);
    }

    #[test]
    fn samples_are_unit_norm_and_labelled() {
        let ds = generate_synthetic_dataset(&small(3)).unwrap();
        assert_eq!(ds.templates.len(), 18);
        assert_eq!(ds.attributes.len(), 6);
        for t in &ds.templates {
            assert!((crate::types::norm(&t.values) - 1.0).abs() < 1e-12);
            assert!(ds.attributes.contains_key(&t.subject_id));
        }
    }

    #[test]
    fn rejects_non_finite_parameters() {
        let cfg = DatasetConfig {
            intra_class_sigma: f64::NAN,
            ..small(1)
        };
        assert!(matches!(
            generate_synthetic_dataset(&cfg),
            Err(Error::InvalidConfig(_))
        ));
        let cfg = DatasetConfig {
            attribute_shift: f64::INFINITY,
            ..small(1)
        };
        assert!(generate_synthetic_dataset(&cfg).is_err());
    }

    #[test]
    fn genuine_pairs_beat_imposters_up_to_half_sigma() {
        for sigma in [0.0, 0.15, 0.3, 0.5] {
            let cfg = DatasetConfig {
                num_identities: 20,
                samples_per_identity: 4,
                dim: 128,
                intra_class_sigma: sigma,
                seed: 11,
                ..DatasetConfig::default()
            };
            let ds = generate_synthetic_dataset(&cfg).unwrap();
            let (mut gen, mut imp) = (Vec::new(), Vec::new());
            for (i, a) in ds.templates.iter().enumerate() {
                for b in &ds.templates[i + 1..] {
                    let s = cosine(&a.values, &b.values);
                    if a.subject_id == b.subject_id {
                        gen.push(s);
                    } else {
                        imp.push(s);
                    }
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            assert!(mean(&gen) > mean(&imp), "sigma={sigma}");
        }
    }

    #[test]
    fn stats_of_symmetric_pair_has_zero_mean() {
        let v = vec![0.3, -1.2, 4.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let ts = vec![
            Template::new("a", "0", v).unwrap(),
            Template::new("a", "1", neg).unwrap(),
        ];
        let stats = compute_distribution_stats(&ts).unwrap();
        assert!(stats.mean.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn stats_of_repeated_template_has_zero_variance() {
        let t = Template::new("a", "0", vec![0.25, -0.5]).unwrap();
        let stats = compute_distribution_stats(&[t.clone(), t.clone(), t]).unwrap();
        assert_eq!(stats.variance, vec![0.0, 0.0]);
    }

    #[test]
    fn stats_hand_example() {
        let ts = vec![
            Template::new("a", "0", vec![1.0, 3.0]).unwrap(),
            Template::new("b", "0", vec![3.0, 5.0]).unwrap(),
        ];
        let stats = compute_distribution_stats(&ts).unwrap();
        assert_eq!(stats.mean, vec![2.0, 4.0]);
        assert_eq!(stats.variance, vec![2.0, 2.0]);
        assert_eq!(stats.dim, 2);
    }

    #[test]
    fn stats_errors() {
        assert!(compute_distribution_stats(&[]).is_err());
        let one = Template::new("a", "0", vec![1.0, 3.0]).unwrap();
        assert!(compute_distribution_stats(std::slice::from_ref(&one)).is_err());
        let other = Template::new("b", "0", vec![1.0, 3.0, 4.0]).unwrap();
        assert!(matches!(
            compute_distribution_stats(&[one, other]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn anchors_take_first_sample_id() {
        let ts = vec![
            Template::new("b", "02", vec![0.0, 1.0]).unwrap(),
            Template::new("a", "01", vec![1.0, 0.0]).unwrap(),
            Template::new("b", "00", vec![1.0, 1.0]).unwrap(),
        ];
        let a = anchors(&ts);
        assert_eq!(a.len(), 2);
        assert_eq!((a[0].subject_id.as_str(), a[0].sample_id.as_str()), ("a", "01"));
        assert_eq!((a[1].subject_id.as_str(), a[1].sample_id.as_str()), ("b", "00"));
    }

    #[test]
    fn labels_are_zero_padded_for_sorting() {
        assert_eq!(subject_label(3, 100), "s0003");
        assert_eq!(subject_label(3, 100_000), "s00003");
        assert_eq!(sample_label(4, 5), "04");
    }
}
