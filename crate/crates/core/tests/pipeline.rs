use facecloak::cloaknet::{enroll_many, infer_cloak, EnrollmentRecord, TrainConfig};
use facecloak::dataset::{anchors, compute_distribution_stats, generate_synthetic_dataset, DatasetConfig};
use facecloak::matcher::{evaluate_tmr, hamming_distance, protocol_scores};
use facecloak::security::{compute_linkability, linkability_scores};
use facecloak::{DisruptorConfig, Template};

fn small() -> (Vec<Template>, facecloak::DistributionStats) {
    let data = generate_synthetic_dataset(&DatasetConfig {
        num_identities: 6,
        samples_per_identity: 3,
        dim: 64,
        ..DatasetConfig::default()
    })
    .unwrap();
    let stats = compute_distribution_stats(&data.templates).unwrap();
    (data.templates, stats)
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        hash_dim: 32,
        epochs: 40,
        ..TrainConfig::default()
    }
}

#[test]
fn record_round_trip_reproduces_cloaks() {
    let (templates, stats) = small();
    let gallery = anchors(&templates);
    let records =
        enroll_many(&gallery[..2], &stats, &DisruptorConfig::default(), &TrainConfig::default(), 3)
            .unwrap();
    for r in &records {
        let json = r.to_json().unwrap();
        assert!(json.len() <= 2 * 1024 * 1024);
        let back = EnrollmentRecord::from_json(&json).unwrap();
        assert_eq!(&back, r);
        for t in &templates {
            assert_eq!(infer_cloak(&back.network, &t.values).unwrap(), infer_cloak(&r.network, &t.values).unwrap());
        }
        let anchor = gallery.iter().find(|a| a.subject_id == r.subject_id).unwrap();
        assert!(back.verify_anchor(&anchor.values).unwrap());
        assert_eq!(back.to_json().unwrap(), json);
    }
}

#[test]
fn record_file_round_trip() {
    let (templates, stats) = small();
    let gallery = anchors(&templates);
    let record = &enroll_many(&gallery[..1], &stats, &DisruptorConfig::default(), &quick_train(), 1).unwrap()[0];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    record.save(&path).unwrap();
    assert_eq!(&EnrollmentRecord::load(&path).unwrap(), record);
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn protocol_counts_and_separation() {
    let (templates, stats) = small();
    let records =
        enroll_many(&anchors(&templates), &stats, &DisruptorConfig::default(), &quick_train(), 9).unwrap();
    let scores = protocol_scores(&records, &templates).unwrap();
    assert_eq!(scores.scores.genuine.len(), 6 * 2);
    assert_eq!(scores.scores.imposter.len(), 6 * 15);
    let eval = evaluate_tmr(&scores.scores, 0.001).unwrap();
    assert!(eval.tmr >= 0.9, "{eval:?}");
}

#[test]
fn enrollment_is_deterministic_and_renewable() {
    let (templates, stats) = small();
    let gallery = anchors(&templates);
    let cfg = quick_train();
    let a = enroll_many(&gallery, &stats, &DisruptorConfig::default(), &cfg, 5).unwrap();
    let b = enroll_many(&gallery, &stats, &DisruptorConfig::default(), &cfg, 5).unwrap();
    let c = enroll_many(&gallery, &stats, &DisruptorConfig::default(), &cfg, 6).unwrap();
    assert_eq!(a, b);
    for (x, z) in a.iter().zip(&c) {
        assert!(hamming_distance(&x.cloak, &z.cloak).unwrap() > 0);
    }
}

#[test]
fn equal_seeds_are_fully_linkable() {
    let (templates, stats) = small();
    let gallery = anchors(&templates);
    let scores = linkability_scores(&gallery, (4, 4), &stats, &DisruptorConfig::default(), &quick_train())
        .unwrap()
        .scores;
    assert!(scores.mated.iter().all(|s| *s == 1.0));
    assert_eq!(scores.non_mated.len(), 6 * 5);
    let report = compute_linkability(&scores.mated, &scores.non_mated).unwrap();
    assert!(report.m_sys > 0.0);
}

#[test]
fn trained_network_keeps_positives_closer_than_negatives() {
    use facecloak::build_disruptor_set;
    use facecloak::cloaknet::{infer_cloaks, train_enrollment};
    use facecloak::types::cosine;
    use facecloak::RngStream;

    let data = generate_synthetic_dataset(&DatasetConfig::default()).unwrap();
    let stats = compute_distribution_stats(&data.templates).unwrap();
    let anchor = &anchors(&data.templates)[0];
    let set = build_disruptor_set(anchor, &DisruptorConfig::default(), &stats, &RngStream::new(2, "d")).unwrap();

    let mean_cos = |vs: &[facecloak::disruptor::Disruptor]| vs.iter().map(|v| cosine(&v.values, &anchor.values)).sum::<f64>() / vs.len() as f64;
    assert!(mean_cos(&set.positives) > mean_cos(&set.negatives));

    let record = train_enrollment(anchor, &set, &TrainConfig::default(), &RngStream::new(2, "n")).unwrap();
    let mean_hd = |vs: &[facecloak::disruptor::Disruptor]| {
        let queries: Vec<&[f64]> = vs.iter().map(|v| v.values.as_slice()).collect();
        let cloaks = infer_cloaks(&record.network, &queries).unwrap();
        cloaks.iter().map(|c| hamming_distance(&record.cloak, c).unwrap() as f64).sum::<f64>() / cloaks.len() as f64
    };
    assert!(mean_hd(&set.positives) < mean_hd(&set.negatives));
}
