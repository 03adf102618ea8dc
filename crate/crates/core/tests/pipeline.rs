//! Integration tests over the composed pipeline: causality of replays,
//! whole-run determinism and predictor behaviour on held-out data.

use handshake_core::control::ControllerConfig;
use handshake_core::predictor::{forward, predict_final_hand, train, PredictorConfig};
use handshake_core::promp::{BasisConfig, Regularizer};
use handshake_core::sim::{
    evaluate, files, fit_promp_from_manifest, generate_synthetic_dataset, predictor_dataset,
    prepare_dataset, replay_split, run_interaction, Role, Split, SynthConfig,
};
use handshake_core::skeleton::{
    SegmentationConfig, SkeletonSequence, UpperBodyJoint, DEFAULT_DISCONTINUITY_THRESHOLD,
};
use nalgebra::Vector3;
use std::path::Path;

struct Prepared {
    _raw: tempfile::TempDir,
    prepared: tempfile::TempDir,
    manifest: handshake_core::sim::DatasetManifest,
}

fn prepare(count: usize, seed: u64) -> Prepared {
    let raw = tempfile::tempdir().unwrap();
    let prepared = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(
        raw.path(),
        &SynthConfig {
            count,
            seed,
            noise_std: 0.002,
            left_handed: 0,
        },
    )
    .unwrap();
    let manifest = prepare_dataset(
        raw.path(),
        prepared.path(),
        &SegmentationConfig::default(),
        DEFAULT_DISCONTINUITY_THRESHOLD,
        seed,
        0.8,
    )
    .unwrap();
    Prepared {
        _raw: raw,
        prepared,
        manifest,
    }
}

fn load_pair(p: &Prepared, split: Split) -> (SkeletonSequence, SkeletonSequence) {
    let (_, persons, _) = p.manifest.accepted(Some(split)).next().unwrap();
    let subject = persons.iter().find(|x| x.role == Role::Subject).unwrap();
    let partner = persons.iter().find(|x| x.role == Role::Partner).unwrap();
    let (s, _) = files::read_cleaned_trajectory(&p.prepared.path().join(&subject.cleaned)).unwrap();
    let (q, _) = files::read_cleaned_trajectory(&p.prepared.path().join(&partner.cleaned)).unwrap();
    (s, q)
}

fn fit_models(
    p: &Prepared,
    epochs: usize,
    seed: u64,
) -> (
    handshake_core::promp::ProMP,
    handshake_core::kinematics::ArmModel,
    handshake_core::predictor::PredictorWeights,
) {
    let (promp, arm) = fit_promp_from_manifest(
        &p.manifest,
        p.prepared.path(),
        BasisConfig::default(),
        Regularizer::default(),
        0.01,
    )
    .unwrap();
    let dataset = predictor_dataset(&p.manifest, p.prepared.path(), Split::Train).unwrap();
    let cfg = PredictorConfig {
        epochs,
        seed,
        ..PredictorConfig::default()
    };
    let (weights, _) = train(&dataset, &cfg).unwrap();
    (promp, arm, weights)
}

#[test]
fn replay_is_causal_under_truncation() {
    let p = prepare(12, 7);
    let (subject, partner) = load_pair(&p, Split::Test);
    let (promp, arm, weights) = fit_models(&p, 5, 7);

    let full = run_interaction(
        &subject,
        &partner,
        &promp,
        &arm,
        &weights,
        ControllerConfig::default(),
    )
    .unwrap();

    for k in [1usize, 5, partner.len() / 2] {
        let truncated = SkeletonSequence {
            frames: partner.frames[..k].to_vec(),
            frame_rate: partner.frame_rate,
            source_label: partner.source_label.clone(),
        };
        let log = run_interaction(
            &subject,
            &truncated,
            &promp,
            &arm,
            &weights,
            ControllerConfig::default(),
        )
        .unwrap();
        assert_eq!(log.steps.len(), k);
        for (a, b) in log.steps.iter().zip(full.steps.iter()) {
            assert_eq!(a, b, "truncation changed an earlier command");
        }
    }
}

#[test]
fn replays_are_deterministic() {
    let p = prepare(10, 3);
    let (subject, partner) = load_pair(&p, Split::Test);
    let (promp, arm, weights) = fit_models(&p, 4, 3);
    let run = || {
        run_interaction(
            &subject,
            &partner,
            &promp,
            &arm,
            &weights,
            ControllerConfig::default(),
        )
        .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn whole_pipeline_is_deterministic() {
    // Same generation seed, split seed and training seed: byte-identical
    // evaluation summaries across two independent runs.
    let run = || {
        let p = prepare(10, 11);
        let (promp, arm, weights) = fit_models(&p, 4, 11);
        let logs = replay_split(
            &p.manifest,
            p.prepared.path(),
            Split::Test,
            &promp,
            &arm,
            &weights,
            &ControllerConfig::default(),
        )
        .unwrap();
        evaluate(&logs).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
}

#[test]
fn predictor_midway_estimate_beats_remaining_travel() {
    // At 50% of a held-out trajectory the final-hand estimate must be closer
    // to the target than 30% of the distance the hand still has to travel.
    let p = prepare(30, 19);
    let dataset = predictor_dataset(&p.manifest, p.prepared.path(), Split::Train).unwrap();
    let cfg = PredictorConfig {
        epochs: 60,
        seed: 19,
        ..PredictorConfig::default()
    };
    let (weights, _) = train(&dataset, &cfg).unwrap();

    let held_out = predictor_dataset(&p.manifest, p.prepared.path(), Split::Test).unwrap();
    let mut total_err = 0.0;
    let mut total_budget = 0.0;
    for (seq, target) in &held_out {
        let half = seq.len() / 2;
        let estimate = predict_final_hand(&weights, &seq.frames[..half]);
        let hand_at_half = seq.frames[half - 1].joint(UpperBodyJoint::WristRight);
        total_err += (estimate - target).norm();
        total_budget += (hand_at_half - target).norm();
    }
    assert!(
        total_err < 0.3 * total_budget,
        "midway error {total_err:.4} not below 30% of remaining travel {total_budget:.4}"
    );
}

#[test]
fn final_step_error_is_bounded_by_the_training_residual() {
    // Regression sanity: the last input frame contains the target, so on
    // training data the final-step estimates are at least as good as the
    // average per-step residual.
    let p = prepare(20, 23);
    let dataset = predictor_dataset(&p.manifest, p.prepared.path(), Split::Train).unwrap();
    let cfg = PredictorConfig {
        epochs: 40,
        seed: 23,
        ..PredictorConfig::default()
    };
    let (weights, curve) = train(&dataset, &cfg).unwrap();
    let training_residual = *curve.last().unwrap();

    let mut final_sq = 0.0;
    for (seq, target) in &dataset {
        let trace = forward(&weights, &seq.frames);
        final_sq += (trace.estimates.last().unwrap() - target).norm_squared();
    }
    final_sq /= dataset.len() as f64;
    assert!(
        final_sq <= training_residual,
        "final-step mse {final_sq:.5} above training residual {training_residual:.5}"
    );
}

#[test]
fn straight_line_interaction_reaches_within_two_centimeters() {
    // End-to-end fixture: a scripted straight approach replayed through
    // models fitted on the synthetic corpus.
    let p = prepare(20, 31);
    let (promp, arm, weights) = fit_models(&p, 30, 31);
    let (subject, partner) = load_pair(&p, Split::Test);

    // Rebuild the partner stream as a straight line from its first to its
    // last wrist position, body pose held from the first frame.
    let first = partner.frames[0].clone();
    let start = first.joint(UpperBodyJoint::WristRight);
    let goal = partner
        .frames
        .last()
        .unwrap()
        .joint(UpperBodyJoint::WristRight);
    let n = partner.len().max(33);
    let frames: Vec<_> = (0..n)
        .map(|t| {
            let alpha = t as f64 / (n - 1) as f64;
            let mut f = first.clone();
            f.joints[UpperBodyJoint::WristRight as usize] = start + (goal - start) * alpha;
            f
        })
        .collect();
    let scripted = SkeletonSequence {
        frames,
        frame_rate: partner.frame_rate,
        source_label: "scripted".into(),
    };
    let log = run_interaction(
        &subject,
        &scripted,
        &promp,
        &arm,
        &weights,
        ControllerConfig::default(),
    )
    .unwrap();
    assert!(
        log.summary.final_error < 0.02,
        "final reaching error {:.4}",
        log.summary.final_error
    );
}

#[test]
fn loss_curve_csv_is_written_during_training_runs() {
    // The reports module is exercised against real artifacts.
    let p = prepare(8, 37);
    let dataset = predictor_dataset(&p.manifest, p.prepared.path(), Split::Train).unwrap();
    let cfg = PredictorConfig {
        epochs: 3,
        seed: 37,
        ..PredictorConfig::default()
    };
    let (_, curve) = train(&dataset, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path: &Path = &dir.path().join("loss.csv");
    handshake_core::sim::reports::write_loss_curve_csv(path, &curve).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), curve.len() + 1);
}
