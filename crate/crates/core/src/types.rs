use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An unprotected real-valued biometric template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub subject_id: String,
    pub sample_id: String,
    pub values: Vec<f64>,
}

impl Template {
    pub fn new(
        subject_id: impl Into<String>,
        sample_id: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let t = Self {
            subject_id: subject_id.into(),
            sample_id: sample_id.into(),
            values,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::input(format!(
                "template {}/{} has dimension {} (< 2)",
                self.subject_id,
                self.sample_id,
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "template {}/{} has a non-finite value at index {i}",
                self.subject_id, self.sample_id
            )));
        }
        Ok(())
    }
}

/// A protected template: `d` entries, each exactly -1 or +1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryCloak {
    bits: Vec<i8>,
}

impl BinaryCloak {
    pub fn from_bits(bits: Vec<i8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::input("binary cloak must be non-empty"));
        }
        if bits.iter().any(|&b| b != 1 && b != -1) {
            return Err(Error::input("binary cloak entries must be -1 or +1"));
        }
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[i8] {
        &self.bits
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }

    /// Mean of the bits, in [-1, 1].
    pub fn mean(&self) -> f64 {
        self.bits.iter().map(|&b| f64::from(b)).sum::<f64>() / self.bits.len() as f64
    }

    pub fn negated(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| -b).collect(),
        }
    }
}

impl fmt::Display for BinaryCloak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl FromStr for BinaryCloak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(Error::input(format!("invalid cloak character {other:?}"))),
            })
            .collect::<Result<Vec<i8>>>()?;
        Self::from_bits(bits)
    }
}

impl Serialize for BinaryCloak {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BinaryCloak {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-coordinate mean and (diagonal) variance of a template population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub dim: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl DistributionStats {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        let stats = Self {
            dim: mean.len(),
            mean,
            variance,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        Error::check_dim(self.dim, self.mean.len())?;
        Error::check_dim(self.dim, self.variance.len())?;
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::input("distribution mean must be finite"));
        }
        if self.variance.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::input(
                "distribution variance must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero if either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

/// Scales `v` to unit Euclidean norm in place. Zero vectors are left unchanged.
pub fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_rejects_short_and_non_finite() {
        assert!(Template::new("a", "0", vec![1.0]).is_err());
        assert!(Template::new("a", "0", vec![1.0, f64::NAN]).is_err());
        assert!(Template::new("a", "0", vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn cloak_string_form() {
        let c: BinaryCloak = "+-+".parse().unwrap();
        assert_eq!(c.bits(), &[1, -1, 1]);
        assert_eq!(c.to_string(), "+-+");
        assert!("+0".parse::<BinaryCloak>().is_err());
        assert!(BinaryCloak::from_bits(vec![1, 0]).is_err());
        assert!(BinaryCloak::from_bits(vec![]).is_err());
    }

    #[test]
    fn cloak_json_is_a_sign_string() {
        let c: BinaryCloak = "++--".parse().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, "\"++--\"");
        let back: BinaryCloak = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn stats_validation() {
        assert!(DistributionStats::new(vec![0.0; 2], vec![1.0, -1.0]).is_err());
        assert!(DistributionStats::new(vec![0.0; 2], vec![1.0]).is_err());
        assert!(DistributionStats::new(vec![0.0; 2], vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn cosine_of_zero_vector_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-15);
    }
}
