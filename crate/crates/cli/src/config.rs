use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use facecloak::security::{AttackConfig, ProbeConfig};
use facecloak::{DatasetConfig, DisruptorConfig, TrainConfig};
use serde::{Deserialize, Serialize};

pub const REPORT_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 7;

/// File locations, relative to the output directory unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub templates: PathBuf,
    pub stats: PathBuf,
    pub attributes: PathBuf,
    pub enrollments: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            templates: "templates.csv".into(),
            stats: "stats.json".into(),
            attributes: "attributes.csv".into(),
            enrollments: "enrollments".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub target_fmr: f64,
    pub paths: Paths,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub disruptor: DisruptorConfig,
    pub attack: AttackConfig,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            target_fmr: 0.001,
            paths: Paths::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            disruptor: DisruptorConfig::default(),
            attack: AttackConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.target_fmr) {
            bail!("target_fmr must lie in [0, 1]");
        }
        self.dataset.validate()?;
        self.train.validate()?;
        self.disruptor.validate()?;
        self.attack.validate()?;
        self.probe.validate()?;
        let p = &self.paths;
        let all = [&p.templates, &p.stats, &p.attributes, &p.enrollments, &p.reports];
        for (i, a) in all.iter().enumerate() {
            if all[i + 1..].contains(a) {
                bail!("configured paths must be distinct ({} repeats)", a.display());
            }
        }
        Ok(())
    }
}

/// Resolved locations for one invocation.
pub struct Layout {
    pub templates: PathBuf,
    pub stats: PathBuf,
    pub attributes: PathBuf,
    pub enrollments: PathBuf,
    pub reports: PathBuf,
}

impl Layout {
    pub fn new(out: &Path, paths: &Paths) -> Self {
        let at = |p: &PathBuf| if p.is_absolute() { p.clone() } else { out.join(p) };
        Self {
            templates: at(&paths.templates),
            stats: at(&paths.stats),
            attributes: at(&paths.attributes),
            enrollments: at(&paths.enrollments),
            reports: at(&paths.reports),
        }
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.reports.join(name)
    }
}
