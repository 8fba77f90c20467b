use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context as _, Result};
use facecloak::cloaknet::{enroll_many, infer_cloak, EnrollmentRecord};
use facecloak::dataset::{anchors, compute_distribution_stats, generate_synthetic_dataset};
use facecloak::io::{
    load_attributes, load_stats, load_templates, save_attributes, save_json, save_stats,
    save_templates, write_atomic,
};
use facecloak::matcher::{
    cosine_protocol_scores, evaluate_tmr, export_scores, hamming_distance, hamming_similarity,
    protocol_scores, unit_to_cosine, Evaluation,
};
use facecloak::opl::{opl_loss, LabeledBatch};
use facecloak::security::{
    compute_linkability, compute_sar, invert, invert_cloak, linkability_scores,
    train_attribute_probe, AttackConfig, LinkabilityReport, ProbeReport, ProbeSample,
    TanhDiagnostic,
};
use facecloak::types::normalize;
use facecloak::{DistributionStats, RngStream, Template};
use serde::Serialize;

use crate::config::{Layout, RunConfig, REPORT_VERSION};
use crate::{AttackArgs, CheckArgs, EnrollArgs, GenDataArgs, OplArgs, Outcome, UnlinkArgs, VerifyArgs};

const MAX_TMR_DROP: f64 = 0.05;
const MIN_UNPROTECTED_TMR: f64 = 0.95;
const MAX_D_SYS: f64 = 0.05;
const MAX_M_SYS: f64 = 0.15;
const MIN_CONTROL_SUCCESS: f64 = 0.9;
const PROBE_BAND: (f64, f64) = (0.43, 0.57);
const MIN_RAW_PROBE: f64 = 0.9;

pub struct Context {
    pub config: RunConfig,
    pub layout: Layout,
}

impl Context {
    pub fn new(config: RunConfig, out: &Path) -> Self {
        let layout = Layout::new(out, &config.paths);
        Self { config, layout }
    }

    fn templates(&self) -> Result<Vec<Template>> {
        let path = &self.layout.templates;
        if !path.exists() {
            bail!("template file {} not found; run gen-data first", path.display());
        }
        Ok(load_templates(path)?)
    }

    fn stats(&self) -> Result<DistributionStats> {
        let path = &self.layout.stats;
        if !path.exists() {
            bail!(
                "statistics file {} not found; run gen-data or provide statistics at that path",
                path.display()
            );
        }
        Ok(load_stats(path)?)
    }

    fn enrollments(&self) -> Result<Vec<EnrollmentRecord>> {
        let dir = &self.layout.enrollments;
        let mut paths: Vec<_> = match fs::read_dir(dir) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect(),
            Err(_) => Vec::new(),
        };
        if paths.is_empty() {
            bail!("no enrollment records in {}; run enroll first", dir.display());
        }
        paths.sort();
        paths
            .iter()
            .map(|p| EnrollmentRecord::load(p).with_context(|| format!("loading {}", p.display())))
            .collect()
    }

    fn write_report<T: Serialize>(&self, name: &str, report: &T) -> Result<()> {
        fs::create_dir_all(&self.layout.reports)?;
        let path = self.layout.report(name);
        save_json(report, &path)?;
        println!("report: {}", path.display());
        Ok(())
    }
}

fn verdict(check: &CheckArgs, ok: bool, what: &str) -> Outcome {
    if check.check && !ok {
        println!("check failed: {what}");
        Outcome::Negative
    } else {
        Outcome::Success
    }
}

/// The enrolled template of every record, looked up in `templates`.
fn enrolled_templates(records: &[EnrollmentRecord], templates: &[Template]) -> Result<Vec<Template>> {
    records
        .iter()
        .map(|r| {
            templates
                .iter()
                .find(|t| t.subject_id == r.subject_id && t.sample_id == r.anchor_sample_id)
                .cloned()
                .ok_or_else(|| {
                    anyhow!(
                        "enrolled sample {}/{} is missing from the template file",
                        r.subject_id,
                        r.anchor_sample_id
                    )
                })
        })
        .collect()
}

pub fn gen_data(mut ctx: Context, args: &GenDataArgs) -> Result<Outcome> {
    let cfg = &mut ctx.config.dataset;
    if let Some(n) = args.identities {
        cfg.num_identities = n;
    }
    if let Some(n) = args.samples {
        cfg.samples_per_identity = n;
    }
    if let Some(n) = args.dim {
        cfg.dim = n;
    }
    ctx.config.validate()?;
    let data = generate_synthetic_dataset(&ctx.config.dataset)?;
    let stats = compute_distribution_stats(&data.templates)?;
    for path in [&ctx.layout.templates, &ctx.layout.stats, &ctx.layout.attributes] {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
    }
    save_templates(&data.templates, &ctx.layout.templates)?;
    save_stats(&stats, &ctx.layout.stats)?;
    save_attributes(&data.attributes, &ctx.layout.attributes)?;
    let positives = data.attributes.values().filter(|v| **v).count();
    println!(
        "generated {} templates ({} identities x {} samples, dim {}), attribute positives {}",
        data.templates.len(),
        ctx.config.dataset.num_identities,
        ctx.config.dataset.samples_per_identity,
        ctx.config.dataset.dim,
        positives
    );
    println!("templates: {}", ctx.layout.templates.display());
    println!("stats: {}", ctx.layout.stats.display());
    println!("attributes: {}", ctx.layout.attributes.display());
    Ok(Outcome::Success)
}

pub fn enroll(ctx: &Context, args: &EnrollArgs) -> Result<Outcome> {
    ctx.config.validate()?;
    let stats = ctx.stats()?;
    let templates = ctx.templates()?;
    let mut gallery = anchors(&templates);
    if !args.subjects.is_empty() {
        for s in &args.subjects {
            if !gallery.iter().any(|t| &t.subject_id == s) {
                bail!("subject {s} has no template");
            }
        }
        gallery.retain(|t| args.subjects.contains(&t.subject_id));
    }
    let start = Instant::now();
    let records = enroll_many(
        &gallery,
        &stats,
        &ctx.config.disruptor,
        &ctx.config.train,
        ctx.config.seed,
    )?;
    let elapsed = start.elapsed();
    fs::create_dir_all(&ctx.layout.enrollments)?;
    for r in &records {
        r.save(ctx.layout.enrollments.join(format!("{}.json", r.subject_id)))?;
    }
    println!(
        "enrolled {} subjects into {} ({:.3} s per enrollment)",
        records.len(),
        ctx.layout.enrollments.display(),
        elapsed.as_secs_f64() / records.len().max(1) as f64
    );
    Ok(Outcome::Success)
}

fn calibrated_threshold(ctx: &Context) -> Result<f64> {
    let path = ctx.layout.report("biometric.json");
    let text = fs::read_to_string(&path).map_err(|_| {
        anyhow!(
            "no threshold given and {} is missing; pass --threshold or run eval-biometric",
            path.display()
        )
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    value["cloaked"]["threshold"]
        .as_f64()
        .ok_or_else(|| anyhow!("{} has no cloaked threshold", path.display()))
}

pub fn verify(ctx: &Context, args: &VerifyArgs) -> Result<Outcome> {
    let record = EnrollmentRecord::load(&args.enrollment)
        .with_context(|| format!("loading {}", args.enrollment.display()))?;
    let probe = match (&args.probe_file, &args.subject, &args.sample) {
        (Some(path), _, _) => load_templates(path)?
            .into_iter()
            .next()
            .ok_or_else(|| anyhow!("probe file {} is empty", path.display()))?,
        (None, Some(subject), Some(sample)) => ctx
            .templates()?
            .into_iter()
            .find(|t| &t.subject_id == subject && &t.sample_id == sample)
            .ok_or_else(|| anyhow!("no template {subject}/{sample}"))?,
        _ => bail!("give --probe-file or --subject with --sample"),
    };
    let threshold = match args.threshold {
        Some(t) => t,
        None => calibrated_threshold(ctx)?,
    };
    let start = Instant::now();
    let cloak = infer_cloak(&record.network, &probe.values)?;
    let distance = hamming_distance(&record.cloak, &cloak)?;
    let similarity = hamming_similarity(&record.cloak, &cloak)?;
    let elapsed = start.elapsed();
    let accept = similarity >= threshold;
    println!("hamming_distance: {distance}");
    println!("similarity: {similarity}");
    println!("threshold: {threshold}");
    println!("decision: {}", if accept { "accept" } else { "reject" });
    println!("latency_ms: {:.3}", elapsed.as_secs_f64() * 1e3);
    Ok(if accept { Outcome::Success } else { Outcome::Negative })
}

#[derive(Serialize)]
struct BiometricReport {
    version: u32,
    target_fmr: f64,
    subjects: usize,
    unprotected: Evaluation,
    cloaked: Evaluation,
    tmr_drop: f64,
}

pub fn eval_biometric(ctx: &Context, args: &CheckArgs) -> Result<Outcome> {
    ctx.config.validate()?;
    let templates = ctx.templates()?;
    let records = ctx.enrollments()?;
    let gallery = enrolled_templates(&records, &templates)?;
    let fmr = ctx.config.target_fmr;

    let plain = cosine_protocol_scores(&gallery, &templates)?;
    let cloaked = protocol_scores(&records, &templates)?;
    if plain.scores.genuine.is_empty() {
        bail!("no genuine comparisons: every subject needs a sample besides the enrolled one");
    }
    let unprotected = evaluate_tmr(&plain.scores, fmr)?;
    let protected = evaluate_tmr(&cloaked.scores, fmr)?;
    fs::create_dir_all(&ctx.layout.reports)?;
    write_atomic(ctx.layout.report("scores_unprotected.csv"), export_scores(&plain.pairs).as_bytes())?;
    write_atomic(ctx.layout.report("scores_cloaked.csv"), export_scores(&cloaked.pairs).as_bytes())?;

    let drop = unprotected.tmr - protected.tmr;
    println!(
        "unprotected: TMR {:.4} at FMR {:.4} (threshold {:.6})",
        unprotected.tmr, unprotected.achieved_fmr, unprotected.threshold
    );
    println!(
        "cloaked: TMR {:.4} at FMR {:.4} (threshold {:.6})",
        protected.tmr, protected.achieved_fmr, protected.threshold
    );
    let ok = drop <= MAX_TMR_DROP && unprotected.tmr >= MIN_UNPROTECTED_TMR;
    ctx.write_report(
        "biometric.json",
        &BiometricReport {
            version: REPORT_VERSION,
            target_fmr: fmr,
            subjects: records.len(),
            unprotected,
            cloaked: protected,
            tmr_drop: drop,
        },
    )?;
    Ok(verdict(args, ok, "TMR drop or unprotected TMR out of bounds"))
}

#[derive(Serialize)]
struct UnlinkReport {
    version: u32,
    seed_a: u64,
    seed_b: u64,
    subjects: usize,
    d_sys: f64,
    m_sys: f64,
    mated_mean: f64,
    non_mated_mean: f64,
    linkability: LinkabilityReport,
}

pub fn eval_unlink(ctx: &Context, args: &UnlinkArgs) -> Result<Outcome> {
    ctx.config.validate()?;
    let templates = ctx.templates()?;
    let stats = ctx.stats()?;
    let mut gallery = anchors(&templates);
    if let Some(n) = args.subjects {
        gallery.truncate(n);
    }
    let seed_a = ctx.config.seed;
    let seed_b = args.seed_b.unwrap_or(seed_a.wrapping_add(1));
    let scores = linkability_scores(
        &gallery,
        (seed_a, seed_b),
        &stats,
        &ctx.config.disruptor,
        &ctx.config.train,
    )?
    .scores;
    let report = compute_linkability(&scores.mated, &scores.non_mated)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("D_sys: {:.6}", report.d_sys);
    println!("M_sys: {:.6}", report.m_sys);
    println!("mated mean similarity: {:.4}", mean(&scores.mated));
    if seed_a == seed_b {
        println!("equal seeds: both systems are identical, so every mated pair scores 1.0");
    }
    let ok = report.d_sys <= MAX_D_SYS && report.m_sys <= MAX_M_SYS;
    ctx.write_report(
        "unlinkability.json",
        &UnlinkReport {
            version: REPORT_VERSION,
            seed_a,
            seed_b,
            subjects: gallery.len(),
            d_sys: report.d_sys,
            m_sys: report.m_sys,
            mated_mean: mean(&scores.mated),
            non_mated_mean: mean(&scores.non_mated),
            linkability: report,
        },
    )?;
    Ok(verdict(&args.check, ok, "D_sys or M_sys above bound"))
}

#[derive(Serialize)]
struct AttackEntry {
    subject_id: String,
    best_inversion_score: Option<f64>,
    restart_scores: Vec<Option<f64>>,
    success: bool,
    failed_restarts: usize,
}

#[derive(Serialize)]
struct AttackReport {
    version: u32,
    config: AttackConfig,
    threshold_cosine: f64,
    sar: f64,
    results: Vec<AttackEntry>,
    control_success_rate: f64,
    control_results: Vec<AttackEntry>,
}

pub fn attack(mut ctx: Context, args: &AttackArgs) -> Result<Outcome> {
    if let Some(r) = args.restarts {
        ctx.config.attack.restarts = r;
    }
    if let Some(s) = args.steps {
        ctx.config.attack.steps = s;
    }
    ctx.config.validate()?;
    let templates = ctx.templates()?;
    let stats = ctx.stats()?;
    let records = ctx.enrollments()?;
    let gallery = enrolled_templates(&records, &templates)?;
    let unprotected = evaluate_tmr(
        &cosine_protocol_scores(&gallery, &templates)?.scores,
        ctx.config.target_fmr,
    )?;
    let threshold = unit_to_cosine(unprotected.threshold);
    let cfg = &ctx.config.attack;

    let count = args.subjects.min(records.len());
    let targets: Vec<_> = records.iter().zip(&gallery).take(count).collect();
    let results = targets
        .iter()
        .map(|(r, t)| invert_cloak(r, &stats, t, threshold, cfg))
        .collect::<facecloak::Result<Vec<_>>>()?;
    let diag = TanhDiagnostic::for_stats(&stats);
    let control = targets
        .iter()
        .map(|(_, t)| {
            let cloak = diag.cloak(&t.values)?;
            let stream = RngStream::new(cfg.seed, format!("attack-control/{}", t.subject_id));
            invert(&diag, &cloak, &stats, t, threshold, cfg, &stream)
        })
        .collect::<facecloak::Result<Vec<_>>>()?;
    let sar = compute_sar(&results)?;
    let control_rate = compute_sar(&control)?;
    println!(
        "SAR: {sar:.4} ({} enrollments x {} restarts, {} steps, threshold cosine {threshold:.4})",
        results.len(),
        cfg.restarts,
        cfg.steps
    );
    println!("positive control success: {control_rate:.4}");

    let entries = |rs: &[facecloak::security::AttackResult]| {
        rs.iter()
            .map(|r| AttackEntry {
                subject_id: r.subject_id.clone(),
                best_inversion_score: r.best_inversion_score,
                restart_scores: r.restarts.iter().map(|o| o.inversion_score).collect(),
                success: r.success,
                failed_restarts: r.failed_restarts(),
            })
            .collect()
    };
    let ok = sar == 0.0 && control_rate >= MIN_CONTROL_SUCCESS;
    ctx.write_report(
        "attack.json",
        &AttackReport {
            version: REPORT_VERSION,
            config: cfg.clone(),
            threshold_cosine: threshold,
            sar,
            results: entries(&results),
            control_success_rate: control_rate,
            control_results: entries(&control),
        },
    )?;
    Ok(verdict(&args.check, ok, "SAR above zero or positive control failed"))
}

#[derive(Serialize)]
struct ProbeFile {
    version: u32,
    cloaks: ProbeReport,
    raw_templates: ProbeReport,
}

pub fn probe_attribute(ctx: &Context, args: &CheckArgs) -> Result<Outcome> {
    ctx.config.validate()?;
    let path = &ctx.layout.attributes;
    if !path.exists() {
        bail!("attribute file {} not found; run gen-data first", path.display());
    }
    let attributes: BTreeMap<String, bool> = load_attributes(path)?;
    let label = |s: &str| {
        attributes
            .get(s)
            .copied()
            .ok_or_else(|| anyhow!("subject {s} has no attribute label"))
    };
    let records = ctx.enrollments()?;
    let templates = ctx.templates()?;
    let cloaks = records
        .iter()
        .map(|r| {
            Ok(ProbeSample {
                group: r.subject_id.clone(),
                features: r.cloak.to_f64(),
                label: label(&r.subject_id)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = templates
        .iter()
        .map(|t| {
            Ok(ProbeSample {
                group: t.subject_id.clone(),
                features: t.values.clone(),
                label: label(&t.subject_id)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (_, on_cloaks) = train_attribute_probe(&cloaks, &ctx.config.probe)?;
    let (_, on_raw) = train_attribute_probe(&raw, &ctx.config.probe)?;
    println!(
        "cloak probe accuracy: {:.4} on {} balanced test cloaks",
        on_cloaks.test_accuracy, on_cloaks.test_count
    );
    println!(
        "raw-template probe accuracy: {:.4} on {} test templates",
        on_raw.test_accuracy, on_raw.test_count
    );
    let ok = (PROBE_BAND.0..=PROBE_BAND.1).contains(&on_cloaks.test_accuracy)
        && on_raw.test_accuracy >= MIN_RAW_PROBE;
    ctx.write_report(
        "probe.json",
        &ProbeFile {
            version: REPORT_VERSION,
            cloaks: on_cloaks,
            raw_templates: on_raw,
        },
    )?;
    Ok(verdict(args, ok, "cloak probe accuracy outside band or raw control too weak"))
}

#[derive(Serialize)]
struct OplReport {
    version: u32,
    templates: usize,
    classes: usize,
    normalized: bool,
    loss: f64,
}

pub fn opl(ctx: &Context, args: &OplArgs) -> Result<Outcome> {
    let mut templates = match &args.templates {
        Some(p) => load_templates(p)?,
        None => ctx.templates()?,
    };
    if args.normalize {
        templates.iter_mut().for_each(|t| normalize(&mut t.values));
    }
    let batch = LabeledBatch::from_templates(&templates)
        .context("OPL needs unit-norm templates; pass --normalize to rescale them")?;
    let loss = opl_loss(&batch);
    let classes = {
        let mut ids: Vec<&str> = templates.iter().map(|t| t.subject_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };
    println!("OPL loss: {loss:.6} over {} templates in {classes} classes", templates.len());
    ctx.write_report(
        "opl.json",
        &OplReport {
            version: REPORT_VERSION,
            templates: templates.len(),
            classes,
            normalized: args.normalize,
            loss,
        },
    )?;
    Ok(Outcome::Success)
}
