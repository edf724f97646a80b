//! Statistical behaviour of panels and consensus estimates.

use veritas_core::aggregate::{aggregate_votes, estimate_consensus, PanelDesign};
use veritas_core::model::{verifier_assess, Bundle};
use veritas_core::{AggregationRule, LatentClaim, RngStream, Stance, Verdict, VerifierSpec};

fn claim(evidence: f64) -> LatentClaim {
    LatentClaim::new("c", "r", Stance::from_evidence(evidence), evidence).unwrap()
}

/// A verifier that votes for the sign of unit evidence with probability `p`.
fn accurate(p: f64) -> VerifierSpec {
    VerifierSpec::new("v", (p / (1.0 - p)).ln(), 0.0, 0.01).unwrap()
}

#[test]
fn majority_error_within_hoeffding_bound() {
    let population = [accurate(0.7)];
    let rule = AggregationRule::MAJORITY;
    let panels = 10_000u64;
    for n in [11usize, 51, 101] {
        let design = PanelDesign::new(&population, None, n, &rule).unwrap();
        let stream = RngStream::new(101).child("n", "", n as u64);
        let wrong = (0..panels)
            .filter(|&r| design.verdict(1.0, &mut stream.child("panel", "", r).rng()).stance != Verdict::Top)
            .count() as f64;
        let bound = (-2.0 * n as f64 * 0.2f64.powi(2)).exp();
        let slack = 3.0 * (bound * (1.0 - bound) / panels as f64).sqrt();
        let rate = wrong / panels as f64;
        assert!(rate <= bound + slack, "n = {n}: error {rate} above {bound} + {slack}");
    }
}

#[test]
fn undecided_verifiers_split_evenly() {
    let population = [VerifierSpec::new("v", 3.0, 0.0, 0.01).unwrap()];
    let rule = AggregationRule::MAJORITY;
    let design = PanelDesign::new(&population, None, 101, &rule).unwrap();
    let stream = RngStream::new(102);
    let tops = (0..10_000u64)
        .filter(|&r| design.verdict(0.0, &mut stream.child("panel", "", r).rng()).stance == Verdict::Top)
        .count() as f64;
    assert!((tops / 10_000.0 - 0.5).abs() <= 0.02, "Top frequency {}", tops / 10_000.0);
}

#[test]
fn saturated_bundle_is_nearly_certain() {
    let population = [VerifierSpec::new("v", 10.0, 0.0, 0.01).unwrap()];
    let rule = AggregationRule::MAJORITY;
    let design = PanelDesign::new(&population, None, 101, &rule).unwrap();
    let c = claim(1.0);
    let est = estimate_consensus(&Bundle::claim(&c), &design, 1000, &RngStream::new(103));
    assert!(est.p_top >= 0.99, "p_top {}", est.p_top);
}

#[test]
fn zero_evidence_estimate_is_symmetric() {
    let population: Vec<VerifierSpec> = (0..30)
        .map(|i| VerifierSpec::new(format!("v{i}"), 1.0 + i as f64 / 10.0, 0.0, 0.01).unwrap())
        .collect();
    for rule in [AggregationRule::MAJORITY, AggregationRule::Bayesian { alpha: 1.0, beta: 1.0 }] {
        let design = PanelDesign::new(&population, None, 9, &rule).unwrap();
        let c = claim(0.0);
        let est = estimate_consensus(&Bundle::claim(&c), &design, 4000, &RngStream::new(104));
        assert!((est.p_top - 0.5).abs() <= 3.0 * est.stderr, "{}: {est:?}", rule.name());
    }
}

#[test]
fn estimate_does_not_depend_on_thread_count() {
    let population: Vec<VerifierSpec> = (0..5)
        .map(|i| VerifierSpec::new(format!("v{i}"), 2.0, 0.05 * i as f64, 0.01).unwrap())
        .collect();
    let rule = AggregationRule::MAJORITY;
    let design = PanelDesign::new(&population, None, 7, &rule).unwrap();
    let c = claim(0.1);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_consensus(&Bundle::claim(&c), &design, 2000, &RngStream::new(105)))
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn bayesian_and_majority_agree_on_large_panels() {
    let population: Vec<VerifierSpec> = (0..50)
        .map(|i| VerifierSpec::new(format!("v{i}"), 2.0 + i as f64 * 0.08, -0.1 + i as f64 * 0.004, 0.01).unwrap())
        .collect();
    let bayes = [
        AggregationRule::Bayesian { alpha: 1.0, beta: 1.0 },
        AggregationRule::Bayesian { alpha: 3.0, beta: 1.0 },
    ];
    let panels = 2000u64;
    for evidence in [-0.8, -0.4, 0.4, 0.8] {
        let c = claim(evidence);
        let bundle = Bundle::claim(&c);
        for rule in &bayes {
            let stream = RngStream::new(106).child("evidence", &evidence.to_string(), 0);
            let agree = (0..panels)
                .filter(|&r| {
                    let mut rng = stream.child("panel", "", r).rng();
                    let votes: Vec<Stance> = (0..201)
                        .map(|k| verifier_assess(&population[k % population.len()], &bundle, &mut rng))
                        .collect();
                    let m = aggregate_votes(&votes, &AggregationRule::MAJORITY, None).unwrap();
                    let b = aggregate_votes(&votes, rule, None).unwrap();
                    m.stance == b.stance
                })
                .count() as f64;
            assert!(agree / panels as f64 >= 0.99, "E = {evidence}, {rule:?}: {agree}");
        }
    }
}
