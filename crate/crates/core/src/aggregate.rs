//! Aggregation of panel votes into truth estimates.
//!
//! A panel of `n` verifiers votes on a bundle and a rule folds the votes into
//! a [`Verdict`]. Repeating that over `M` independently drawn panels estimates
//! the probability that the asymptotic consensus lands on `Top`.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{vote, Bundle, Stance, VerifierId, VerifierSpec};
use crate::reputation::binary_entropy;
use crate::rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("{got} weights supplied for {expected} votes")]
    WeightCount { expected: usize, got: usize },
    #[error("rule {0} needs per-vote weights")]
    MissingWeights(&'static str),
    #[error("weight {index} is {value}; weights must be finite and non-negative")]
    BadWeight { index: usize, value: f64 },
    #[error("no reputation entry for verifier {0}")]
    MissingReputation(VerifierId),
    #[error("a panel needs at least one verifier")]
    EmptyPanel,
}

/// The aggregation operator applied to a panel's votes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum AggregationRule {
    #[serde(rename = "majority")]
    Majority {},
    #[serde(rename = "supermajority")]
    SuperMajority { quorum: f64 },
    #[serde(rename = "unanimous")]
    Unanimous {},
    /// Majority with votes weighted by `max(0, reputation)`. The parameters
    /// drive the reputation/consensus fixed point that produces those weights.
    #[serde(rename = "reputation_weighted")]
    ReputationWeighted { damping: f64, max_iters: usize, tol: f64 },
    /// Conjugate Beta posterior over the votes; `Top` iff posterior mean > 0.5.
    #[serde(rename = "bayesian")]
    Bayesian { alpha: f64, beta: f64 },
}

impl AggregationRule {
    pub const MAJORITY: AggregationRule = AggregationRule::Majority {};
    pub const UNANIMOUS: AggregationRule = AggregationRule::Unanimous {};

    pub fn name(&self) -> &'static str {
        match self {
            AggregationRule::Majority {} => "majority",
            AggregationRule::SuperMajority { .. } => "supermajority",
            AggregationRule::Unanimous {} => "unanimous",
            AggregationRule::ReputationWeighted { .. } => "reputation_weighted",
            AggregationRule::Bayesian { .. } => "bayesian",
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            AggregationRule::SuperMajority { quorum } if !(quorum > 0.5 && quorum <= 1.0) => {
                Err(format!("supermajority quorum {quorum} must be in (0.5, 1]"))
            }
            AggregationRule::ReputationWeighted { damping, max_iters, tol } => {
                if !(damping > 0.0 && damping <= 1.0) {
                    Err(format!("damping {damping} must be in (0, 1]"))
                } else if max_iters == 0 {
                    Err("max_iters must be at least 1".into())
                } else if !(tol.is_finite() && tol >= 0.0) {
                    Err(format!("tol {tol} must be finite and non-negative"))
                } else {
                    Ok(())
                }
            }
            AggregationRule::Bayesian { alpha, beta }
                if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) =>
            {
                Err(format!("bayesian prior ({alpha}, {beta}) must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Outcome of one aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Top,
    Bottom,
    Contested,
}

impl Verdict {
    /// `Top` counts 2, `Contested` 1, `Bottom` 0; half-units keep tallies exact.
    pub fn top_half_units(self) -> u64 {
        match self {
            Verdict::Top => 2,
            Verdict::Contested => 1,
            Verdict::Bottom => 0,
        }
    }

    pub fn swap(self) -> Self {
        match self {
            Verdict::Top => Verdict::Bottom,
            Verdict::Bottom => Verdict::Top,
            Verdict::Contested => Verdict::Contested,
        }
    }

    pub fn stance(self) -> Option<Stance> {
        match self {
            Verdict::Top => Some(Stance::Top),
            Verdict::Bottom => Some(Stance::Bottom),
            Verdict::Contested => None,
        }
    }
}

impl From<Stance> for Verdict {
    fn from(s: Stance) -> Self {
        match s {
            Stance::Top => Verdict::Top,
            Stance::Bottom => Verdict::Bottom,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Top => "top",
            Verdict::Bottom => "bottom",
            Verdict::Contested => "contested",
        })
    }
}

/// Agreement of a stance with a verdict in half-units: 2 agree, 0 disagree,
/// 1 when the verdict is contested (a contested outcome is a fair coin).
pub fn stance_agreement(stance: Stance, verdict: Verdict) -> u64 {
    match verdict.stance() {
        Some(s) if s == stance => 2,
        Some(_) => 0,
        None => 1,
    }
}

/// Agreement of two independent verdicts in half-units; any contested side counts 1.
pub fn verdict_agreement(a: Verdict, b: Verdict) -> u64 {
    match (a.stance(), b.stance()) {
        (Some(x), Some(y)) if x == y => 2,
        (Some(_), Some(_)) => 0,
        _ => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateOutcome {
    pub stance: Verdict,
    /// Winning share minus one half, rescaled to `[0, 1]`; zero when contested.
    pub margin: f64,
}

impl AggregateOutcome {
    pub const CONTESTED: AggregateOutcome = AggregateOutcome {
        stance: Verdict::Contested,
        margin: 0.0,
    };
}

/// Weighted vote totals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VoteTally {
    pub top: f64,
    pub bottom: f64,
}

impl VoteTally {
    pub fn add(&mut self, stance: Stance, weight: f64) {
        match stance {
            Stance::Top => self.top += weight,
            Stance::Bottom => self.bottom += weight,
        }
    }

    pub fn total(&self) -> f64 {
        self.top + self.bottom
    }

    fn winner(&self, stance: Stance) -> AggregateOutcome {
        let (won, lost) = match stance {
            Stance::Top => (self.top, self.bottom),
            Stance::Bottom => (self.bottom, self.top),
        };
        let share = won / (won + lost);
        AggregateOutcome {
            stance: stance.into(),
            margin: (2.0 * (share - 0.5)).clamp(0.0, 1.0),
        }
    }

    /// Applies `rule` to the totals.
    pub fn decide(&self, rule: &AggregationRule) -> AggregateOutcome {
        match *rule {
            AggregationRule::Bayesian { alpha, beta } => {
                let post = BetaState {
                    alpha: alpha + self.top,
                    beta: beta + self.bottom,
                };
                // mean > 1/2 exactly when alpha > beta; compare directly to avoid rounding.
                let stance = if post.alpha > post.beta {
                    Verdict::Top
                } else if post.beta > post.alpha {
                    Verdict::Bottom
                } else {
                    return AggregateOutcome::CONTESTED;
                };
                AggregateOutcome {
                    stance,
                    margin: ((post.alpha - post.beta).abs() / (post.alpha + post.beta)).min(1.0),
                }
            }
            _ if self.total() <= 0.0 => AggregateOutcome::CONTESTED,
            AggregationRule::Majority {} | AggregationRule::ReputationWeighted { .. } => {
                if self.top > self.bottom {
                    self.winner(Stance::Top)
                } else if self.bottom > self.top {
                    self.winner(Stance::Bottom)
                } else {
                    AggregateOutcome::CONTESTED
                }
            }
            AggregationRule::SuperMajority { quorum } => {
                let total = self.total();
                if self.top / total >= quorum {
                    self.winner(Stance::Top)
                } else if self.bottom / total >= quorum {
                    self.winner(Stance::Bottom)
                } else {
                    AggregateOutcome::CONTESTED
                }
            }
            AggregationRule::Unanimous {} => {
                if self.bottom == 0.0 {
                    self.winner(Stance::Top)
                } else if self.top == 0.0 {
                    self.winner(Stance::Bottom)
                } else {
                    AggregateOutcome::CONTESTED
                }
            }
        }
    }
}

fn check_weights(weights: &[f64]) -> Result<(), AggregateError> {
    match weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        Some(index) => Err(AggregateError::BadWeight {
            index,
            value: weights[index],
        }),
        None => Ok(()),
    }
}

/// `∨`: folds a list of votes under `rule`, optionally weighted.
pub fn aggregate_votes(
    stances: &[Stance],
    rule: &AggregationRule,
    weights: Option<&[f64]>,
) -> Result<AggregateOutcome, AggregateError> {
    let mut tally = VoteTally::default();
    match weights {
        Some(w) => {
            if w.len() != stances.len() {
                return Err(AggregateError::WeightCount {
                    expected: stances.len(),
                    got: w.len(),
                });
            }
            check_weights(w)?;
            for (s, w) in stances.iter().zip(w) {
                tally.add(*s, *w);
            }
        }
        None if matches!(rule, AggregationRule::ReputationWeighted { .. }) => {
            return Err(AggregateError::MissingWeights("reputation_weighted"));
        }
        None => stances.iter().for_each(|s| tally.add(*s, 1.0)),
    }
    Ok(tally.decide(rule))
}

/// `Θ̂ₙ`: one panel's verdict on a bundle. `weights`, when given, align with `panel`.
pub fn estimate_truth_n<R: Rng + ?Sized>(
    bundle: &Bundle<'_>,
    panel: &[VerifierSpec],
    rule: &AggregationRule,
    weights: Option<&[f64]>,
    rng: &mut R,
) -> Result<AggregateOutcome, AggregateError> {
    if panel.is_empty() {
        return Err(AggregateError::EmptyPanel);
    }
    let evidence = bundle.evidence();
    let votes: Vec<Stance> = panel
        .iter()
        .map(|v| vote(v.vote_probability(evidence), rng))
        .collect();
    aggregate_votes(&votes, rule, weights)
}

/// How panels are drawn: `panel_size` members sampled with replacement from a
/// population, each carrying a fixed non-negative weight.
#[derive(Debug, Clone)]
pub struct PanelDesign<'a> {
    population: &'a [VerifierSpec],
    weights: Option<&'a [f64]>,
    panel_size: usize,
    rule: &'a AggregationRule,
}

impl<'a> PanelDesign<'a> {
    pub fn new(
        population: &'a [VerifierSpec],
        weights: Option<&'a [f64]>,
        panel_size: usize,
        rule: &'a AggregationRule,
    ) -> Result<Self, AggregateError> {
        if population.is_empty() || panel_size == 0 {
            return Err(AggregateError::EmptyPanel);
        }
        match weights {
            Some(w) if w.len() != population.len() => {
                return Err(AggregateError::WeightCount {
                    expected: population.len(),
                    got: w.len(),
                })
            }
            Some(w) => check_weights(w)?,
            None if matches!(rule, AggregationRule::ReputationWeighted { .. }) => {
                return Err(AggregateError::MissingWeights("reputation_weighted"))
            }
            None => {}
        }
        Ok(Self {
            population,
            weights,
            panel_size,
            rule,
        })
    }

    pub fn panel_size(&self) -> usize {
        self.panel_size
    }

    pub fn rule(&self) -> &AggregationRule {
        self.rule
    }

    /// Draws a fresh panel from `rng` and returns its verdict on `evidence`.
    pub fn verdict<R: Rng + ?Sized>(&self, evidence: f64, rng: &mut R) -> AggregateOutcome {
        let mut tally = VoteTally::default();
        let single = self.population.len() == 1;
        for _ in 0..self.panel_size {
            let idx = if single { 0 } else { rng.random_range(0..self.population.len()) };
            let stance = vote(self.population[idx].vote_probability(evidence), rng);
            tally.add(stance, self.weights.map_or(1.0, |w| w[idx]));
        }
        tally.decide(self.rule)
    }
}

/// Monte-Carlo estimate of `Pr{Θ̂ = ⊤}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusEstimate {
    pub p_top: f64,
    pub replicates: u64,
    pub stderr: f64,
}

impl ConsensusEstimate {
    /// From a count of half-units of `Top` (contested replicates count one half-unit).
    pub fn from_half_units(top_half_units: u64, replicates: u64) -> Self {
        assert!(replicates > 0, "at least one replicate");
        let p_top = top_half_units as f64 / (2 * replicates) as f64;
        Self {
            p_top,
            replicates,
            stderr: (p_top * (1.0 - p_top) / replicates as f64).sqrt(),
        }
    }
}

/// Estimates the consensus probability of `bundle` over `replicates` panels.
///
/// Replicate `r` draws its panel from `stream.child("replicate", "", r)`.
pub fn estimate_consensus(
    bundle: &Bundle<'_>,
    design: &PanelDesign<'_>,
    replicates: u64,
    stream: &RngStream,
) -> ConsensusEstimate {
    assert!(replicates > 0, "at least one replicate");
    let evidence = bundle.evidence();
    let half_units: u64 = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.child("replicate", "", r).rng();
            design.verdict(evidence, &mut rng).stance.top_half_units()
        })
        .sum();
    ConsensusEstimate::from_half_units(half_units, replicates)
}

/// Conjugate Beta state for sequential folding of votes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaState {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaState {
    pub fn new(alpha: f64, beta: f64) -> Option<Self> {
        (alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()).then_some(Self { alpha, beta })
    }

    pub fn uniform() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// One minus the binary entropy of the posterior mean.
    pub fn certitude(&self) -> f64 {
        1.0 - binary_entropy(self.mean()).expect("mean of a Beta lies in (0, 1)")
    }

    pub fn fold(self, votes: &[Stance]) -> Self {
        votes.iter().fold(self, |s, v| bayes_update(s, *v))
    }
}

pub fn bayes_update(state: BetaState, vote: Stance) -> BetaState {
    match vote {
        Stance::Top => BetaState {
            alpha: state.alpha + 1.0,
            ..state
        },
        Stance::Bottom => BetaState {
            beta: state.beta + 1.0,
            ..state
        },
    }
}

/// Reputation-weighted majority: weight is `max(0, R)`, so verifiers with
/// non-positive reputation carry no say.
pub fn reputation_weighted_consensus(
    assessments: &[(VerifierId, Stance)],
    reputations: &HashMap<VerifierId, f64>,
) -> Result<AggregateOutcome, AggregateError> {
    let mut tally = VoteTally::default();
    for (id, stance) in assessments {
        let r = reputations
            .get(id)
            .ok_or_else(|| AggregateError::MissingReputation(id.clone()))?;
        tally.add(*stance, reputation_weight(*r));
    }
    Ok(tally.decide(&AggregationRule::MAJORITY))
}

pub fn reputation_weight(reputation: f64) -> f64 {
    if reputation.is_nan() {
        0.0
    } else {
        reputation.max(0.0)
    }
}

/// Result of the reputation/consensus fixed-point iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingOutcome {
    pub reputations: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest reputation change in the final iteration.
    pub residual: f64,
}

/// Iterates reputation-weighted consensus and consensus-derived reputation.
///
/// `votes[i][c]` is verifier `i`'s vote on claim `c`. Each round computes the
/// weighted consensus of every claim, scores each verifier by its
/// certitude-weighted signed agreement with those consensus outcomes, and
/// moves reputations a fraction `damping` toward the scores. Starts from
/// reputation 1 for everyone. Reports non-convergence instead of assuming
/// a fixed point exists.
pub fn couple_reputations(votes: &[Vec<Stance>], damping: f64, max_iters: usize, tol: f64) -> CouplingOutcome {
    let verifiers = votes.len();
    let claims = votes.first().map_or(0, Vec::len);
    assert!(votes.iter().all(|v| v.len() == claims), "ragged vote matrix");
    let mut reputations = vec![1.0; verifiers];
    let mut residual = f64::INFINITY;
    if claims == 0 {
        return CouplingOutcome {
            reputations,
            iterations: 0,
            converged: true,
            residual: 0.0,
        };
    }
    for iteration in 1..=max_iters {
        let consensus: Vec<(Verdict, f64)> = (0..claims)
            .map(|c| {
                let mut tally = VoteTally::default();
                for (i, row) in votes.iter().enumerate() {
                    tally.add(row[c], reputation_weight(reputations[i]));
                }
                let share = if tally.total() > 0.0 { tally.top / tally.total() } else { 0.5 };
                let certitude = 1.0 - binary_entropy(share).expect("share in [0, 1]");
                (tally.decide(&AggregationRule::MAJORITY).stance, certitude)
            })
            .collect();
        residual = 0.0;
        for (i, row) in votes.iter().enumerate() {
            let score = row
                .iter()
                .zip(&consensus)
                .map(|(v, (verdict, w))| match verdict.stance() {
                    Some(s) if s == *v => *w,
                    Some(_) => -*w,
                    None => 0.0,
                })
                .sum::<f64>()
                / claims as f64;
            let next = (1.0 - damping) * reputations[i] + damping * score;
            residual = f64::max(residual, (next - reputations[i]).abs());
            reputations[i] = next;
        }
        if residual <= tol {
            return CouplingOutcome {
                reputations,
                iterations: iteration,
                converged: true,
                residual,
            };
        }
    }
    CouplingOutcome {
        reputations,
        iterations: max_iters,
        converged: false,
        residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Stance::{Bottom as B, Top as T};

    fn maj(votes: &[Stance]) -> AggregateOutcome {
        aggregate_votes(votes, &AggregationRule::MAJORITY, None).unwrap()
    }

    #[test]
    fn two_of_three_majority() {
        let out = maj(&[T, T, B]);
        assert_eq!(out.stance, Verdict::Top);
        // share 2/3 is 1/6 above one half, which rescales to 1/3.
        assert!((out.margin - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tie_is_contested() {
        assert_eq!(maj(&[T, B]), AggregateOutcome::CONTESTED);
        assert_eq!(maj(&[]), AggregateOutcome::CONTESTED);
    }

    #[test]
    fn unanimous_requires_everyone() {
        let out = aggregate_votes(&[T, T, B], &AggregationRule::UNANIMOUS, None).unwrap();
        assert_eq!(out, AggregateOutcome::CONTESTED);
        let out = aggregate_votes(&[B, B], &AggregationRule::UNANIMOUS, None).unwrap();
        assert_eq!(out.stance, Verdict::Bottom);
        assert_eq!(out.margin, 1.0);
    }

    #[test]
    fn supermajority_threshold_inclusive() {
        let rule = AggregationRule::SuperMajority { quorum: 0.75 };
        assert_eq!(aggregate_votes(&[T, T, T, B], &rule, None).unwrap().stance, Verdict::Top);
        assert_eq!(aggregate_votes(&[T, T, B], &rule, None).unwrap().stance, Verdict::Contested);
    }

    #[test]
    fn bayesian_rule_posterior_mean() {
        let rule = AggregationRule::Bayesian { alpha: 1.0, beta: 1.0 };
        // Beta(3, 2): mean 0.6
        let out = aggregate_votes(&[T, T, B], &rule, None).unwrap();
        assert_eq!(out.stance, Verdict::Top);
        assert!((out.margin - 0.2).abs() < 1e-15);
        assert_eq!(aggregate_votes(&[T, B], &rule, None).unwrap(), AggregateOutcome::CONTESTED);
        // An asymmetric prior can outvote a single vote.
        let skewed = AggregationRule::Bayesian { alpha: 1.0, beta: 3.0 };
        assert_eq!(aggregate_votes(&[T], &skewed, None).unwrap().stance, Verdict::Bottom);
    }

    #[test]
    fn weight_errors() {
        let rule = AggregationRule::ReputationWeighted {
            damping: 0.5,
            max_iters: 10,
            tol: 1e-9,
        };
        assert_eq!(
            aggregate_votes(&[T], &rule, None),
            Err(AggregateError::MissingWeights("reputation_weighted"))
        );
        assert!(matches!(
            aggregate_votes(&[T, B], &AggregationRule::MAJORITY, Some(&[1.0])),
            Err(AggregateError::WeightCount { expected: 2, got: 1 })
        ));
        assert!(matches!(
            aggregate_votes(&[T], &AggregationRule::MAJORITY, Some(&[-0.1])),
            Err(AggregateError::BadWeight { index: 0, .. })
        ));
        assert_eq!(
            aggregate_votes(&[T, B], &rule, Some(&[0.0, 0.0])).unwrap(),
            AggregateOutcome::CONTESTED
        );
    }

    #[test]
    fn beta_updates() {
        let b = bayes_update(BetaState::uniform(), T);
        assert_eq!(b, BetaState { alpha: 2.0, beta: 1.0 });
        assert!((b.mean() - 2.0 / 3.0).abs() < 1e-15);
        let folded = BetaState::uniform().fold(&[T, T, B]);
        assert_eq!(folded, BetaState { alpha: 3.0, beta: 2.0 });
        assert_eq!(folded.mean(), 0.6);
        assert!(BetaState::new(0.0, 1.0).is_none());
        assert_eq!(BetaState::uniform().certitude(), 0.0);
    }

    #[test]
    fn reputation_weighted_examples() {
        let votes = [(VerifierId::from("a"), T), (VerifierId::from("b"), B)];
        let reps = |a: f64, b: f64| HashMap::from([(VerifierId::from("a"), a), (VerifierId::from("b"), b)]);
        assert_eq!(reputation_weighted_consensus(&votes, &reps(0.9, 0.1)).unwrap().stance, Verdict::Top);
        assert_eq!(
            reputation_weighted_consensus(&votes, &reps(0.5, 0.5)).unwrap(),
            AggregateOutcome::CONTESTED
        );
        let lone = [(VerifierId::from("a"), T)];
        let neg = HashMap::from([(VerifierId::from("a"), -0.4)]);
        assert_eq!(reputation_weighted_consensus(&lone, &neg).unwrap(), AggregateOutcome::CONTESTED);
        assert_eq!(
            reputation_weighted_consensus(&lone, &HashMap::new()),
            Err(AggregateError::MissingReputation("a".into()))
        );
    }

    #[test]
    fn panel_of_one_is_identity() {
        let v = VerifierSpec::new("v", f64::INFINITY, 0.0, 0.01).unwrap();
        let claim = crate::model::LatentClaim::new("c", "r", T, 0.5).unwrap();
        let bundle = Bundle::claim(&claim);
        // With p = 0.99 the single vote is Top for most streams; the verdict must mirror it.
        for r in 0..50 {
            let mut rng = RngStream::new(r).rng();
            let mut check = RngStream::new(r).rng();
            let expected: Verdict = vote(v.vote_probability(0.5), &mut check).into();
            let out = estimate_truth_n(&bundle, std::slice::from_ref(&v), &AggregationRule::MAJORITY, None, &mut rng)
                .unwrap();
            assert_eq!(out.stance, expected);
        }
        let mut rng = RngStream::new(0).rng();
        assert_eq!(
            estimate_truth_n(&bundle, &[], &AggregationRule::MAJORITY, None, &mut rng),
            Err(AggregateError::EmptyPanel)
        );
    }

    #[test]
    fn single_replicate_estimate_is_degenerate() {
        let e = ConsensusEstimate::from_half_units(2, 1);
        assert_eq!((e.p_top, e.stderr), (1.0, 0.0));
        let e = ConsensusEstimate::from_half_units(1, 1);
        assert_eq!(e.p_top, 0.5);
    }

    #[test]
    fn coupling_downweights_contrarians() {
        // Five reliable verifiers agree with the truth pattern; one always dissents.
        let truth: Vec<Stance> = (0..20).map(|c| if c % 3 == 0 { B } else { T }).collect();
        let mut votes = vec![truth.clone(); 5];
        votes.push(truth.iter().map(|s| !*s).collect());
        let out = couple_reputations(&votes, 0.5, 200, 1e-12);
        assert!(out.converged, "{out:?}");
        assert!(out.reputations[..5].iter().all(|r| (r - 1.0).abs() < 1e-9));
        assert!((out.reputations[5] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn coupling_reports_non_convergence() {
        let votes = vec![vec![T, B, T], vec![B, T, B], vec![T, T, B]];
        let out = couple_reputations(&votes, 0.01, 2, 0.0);
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
        assert!(out.residual > 0.0);
    }

    fn rules() -> Vec<AggregationRule> {
        vec![
            AggregationRule::MAJORITY,
            AggregationRule::SuperMajority { quorum: 0.6 },
            AggregationRule::SuperMajority { quorum: 1.0 },
            AggregationRule::UNANIMOUS,
            AggregationRule::ReputationWeighted {
                damping: 1.0,
                max_iters: 1,
                tol: 0.0,
            },
            AggregationRule::Bayesian { alpha: 2.0, beta: 2.0 },
        ]
    }

    fn stances() -> impl Strategy<Value = Vec<Stance>> {
        prop::collection::vec(any::<bool>().prop_map(|b| if b { T } else { B }), 0..12)
    }

    proptest! {
        #[test]
        fn label_symmetry(votes in stances(), raw in prop::collection::vec(0.0..3.0f64, 12)) {
            let weights = &raw[..votes.len()];
            let swapped: Vec<Stance> = votes.iter().map(|s| !*s).collect();
            for rule in rules() {
                let a = aggregate_votes(&votes, &rule, Some(weights)).unwrap();
                let b = aggregate_votes(&swapped, &rule, Some(weights)).unwrap();
                prop_assert_eq!(a.stance.swap(), b.stance);
                prop_assert_eq!(a.margin, b.margin);
            }
        }

        #[test]
        fn flipping_a_vote_to_top_never_hurts_top(
            votes in stances(),
            raw in prop::collection::vec(0.0..3.0f64, 12),
            pick in any::<prop::sample::Index>(),
        ) {
            prop_assume!(!votes.is_empty());
            let weights = &raw[..votes.len()];
            let i = pick.index(votes.len());
            let mut raised = votes.clone();
            raised[i] = T;
            let rank = |v: Verdict| match v { Verdict::Bottom => 0, Verdict::Contested => 1, Verdict::Top => 2 };
            for rule in rules().into_iter().filter(|r| !matches!(r, AggregationRule::Bayesian { .. } | AggregationRule::Unanimous {})) {
                let before = aggregate_votes(&votes, &rule, Some(weights)).unwrap().stance;
                let after = aggregate_votes(&raised, &rule, Some(weights)).unwrap().stance;
                prop_assert!(rank(after) >= rank(before), "{:?}: {:?} -> {:?}", rule, before, after);
            }
        }

        #[test]
        fn contested_has_zero_margin(votes in stances(), raw in prop::collection::vec(0.0..3.0f64, 12)) {
            let weights = &raw[..votes.len()];
            for rule in rules() {
                let out = aggregate_votes(&votes, &rule, Some(weights)).unwrap();
                prop_assert!((0.0..=1.0).contains(&out.margin));
                if out.stance == Verdict::Contested {
                    prop_assert_eq!(out.margin, 0.0);
                }
            }
        }

        #[test]
        fn single_vote_identity(top in any::<bool>()) {
            let s = if top { T } else { B };
            for rule in [AggregationRule::MAJORITY, AggregationRule::UNANIMOUS] {
                prop_assert_eq!(aggregate_votes(&[s], &rule, None).unwrap().stance, Verdict::from(s));
            }
        }
    }
}
