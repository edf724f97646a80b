//! Truth notions of a (source, claim) pair and their six pairwise agreements.
//!
//! Every replicate draws a fresh perception, a fresh stance and three
//! independent panels: on the perception alone, on claim plus perception, and
//! on the bare claim. All stance comparisons are made inside a replicate, so
//! the tallies are replicate-matched. Tallies count half-units, a contested
//! panel counting as one half-unit of agreement with anything.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{
    stance_agreement, verdict_agreement, AggregateError, ConsensusEstimate, PanelDesign, Verdict,
};
use crate::config::{EstimationConfig, PerceptionMode, StanceMode};
use crate::model::{
    perceive, self_assess, Bundle, LatentClaim, ModelError, PerceptionArtifact, SourceSpec, Stance,
    VerifierSpec, Wiring,
};
use crate::rng::RngStream;

pub const DEFAULT_TAU_AGREE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The source's stance and the three consensus probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthNotions {
    pub stance_source: Stance,
    pub p_self: f64,
    pub p_joint: f64,
    pub p_orig: f64,
}

/// Everything drawn in one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub stance: Stance,
    pub self_verdict: Verdict,
    pub joint_verdict: Verdict,
    pub orig_verdict: Verdict,
}

/// Replicate-matched agreement counts in half-units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub replicates: u64,
    pub faithfulness: u64,
    pub conviction: u64,
    pub correctness: u64,
    pub transparency: u64,
    pub neutrality: u64,
    pub redundancy: u64,
    pub self_top: u64,
    pub joint_top: u64,
    pub orig_top: u64,
}

impl Tallies {
    pub fn record(&mut self, o: &ReplicateOutcome) {
        self.replicates += 1;
        self.faithfulness += stance_agreement(o.stance, o.self_verdict);
        self.conviction += stance_agreement(o.stance, o.joint_verdict);
        self.correctness += stance_agreement(o.stance, o.orig_verdict);
        self.transparency += verdict_agreement(o.self_verdict, o.joint_verdict);
        self.neutrality += verdict_agreement(o.self_verdict, o.orig_verdict);
        self.redundancy += verdict_agreement(o.joint_verdict, o.orig_verdict);
        self.self_top += o.self_verdict.top_half_units();
        self.joint_top += o.joint_verdict.top_half_units();
        self.orig_top += o.orig_verdict.top_half_units();
    }

    pub fn from_outcomes(outcomes: &[ReplicateOutcome]) -> Self {
        let mut t = Self::default();
        outcomes.iter().for_each(|o| t.record(o));
        t
    }

    fn half_units(&self) -> f64 {
        assert!(self.replicates > 0, "tallies over zero replicates");
        (2 * self.replicates) as f64
    }

    fn share(&self, count: u64) -> f64 {
        count as f64 / self.half_units()
    }

    fn excess(&self, a: u64, b: u64) -> f64 {
        (a as i64 - b as i64) as f64 / self.half_units()
    }

    pub fn faithfulness_term(&self) -> f64 {
        self.share(self.faithfulness)
    }

    /// `C`: probability the stance matches the joint consensus.
    pub fn conviction_term(&self) -> f64 {
        self.share(self.conviction)
    }

    pub fn correctness_term(&self) -> f64 {
        self.share(self.correctness)
    }

    /// Agreement of the perception-only and joint panels, replicate by replicate.
    pub fn transparency_agreement(&self) -> f64 {
        self.share(self.transparency)
    }

    /// `P`: faithfulness term minus correctness term.
    pub fn persuasiveness(&self) -> f64 {
        self.excess(self.faithfulness, self.correctness)
    }

    /// `D`: conviction term minus correctness term, the shift of agreement
    /// with the source once its perception joins the claim.
    pub fn demonstrability(&self) -> f64 {
        self.excess(self.conviction, self.correctness)
    }

    pub fn self_estimate(&self) -> ConsensusEstimate {
        ConsensusEstimate::from_half_units(self.self_top, self.replicates)
    }

    pub fn joint_estimate(&self) -> ConsensusEstimate {
        ConsensusEstimate::from_half_units(self.joint_top, self.replicates)
    }

    pub fn orig_estimate(&self) -> ConsensusEstimate {
        ConsensusEstimate::from_half_units(self.orig_top, self.replicates)
    }

    pub fn notions(&self, stance_source: Stance) -> TruthNotions {
        TruthNotions {
            stance_source,
            p_self: self.self_estimate().p_top,
            p_joint: self.joint_estimate().p_top,
            p_orig: self.orig_estimate().p_top,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub probability: f64,
    pub holds: bool,
}

impl Interaction {
    fn new(probability: f64, tau: f64) -> Self {
        Self {
            probability,
            holds: probability >= 1.0 - tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub faithfulness: Interaction,
    pub conviction: Interaction,
    pub transparency: Interaction,
    pub correctness: Interaction,
    pub neutrality: Interaction,
    pub redundancy: Interaction,
}

/// Stance pairs come from the tallies; estimate pairs are `1 − |Δp|` of the
/// consensus probabilities in `notions`.
pub fn interactions(notions: &TruthNotions, tallies: &Tallies, tau_agree: f64) -> InteractionReport {
    let close = |a: f64, b: f64| Interaction::new(1.0 - (a - b).abs(), tau_agree);
    InteractionReport {
        faithfulness: Interaction::new(tallies.faithfulness_term(), tau_agree),
        conviction: Interaction::new(tallies.conviction_term(), tau_agree),
        correctness: Interaction::new(tallies.correctness_term(), tau_agree),
        transparency: close(notions.p_self, notions.p_joint),
        neutrality: close(notions.p_self, notions.p_orig),
        redundancy: close(notions.p_joint, notions.p_orig),
    }
}

/// Full evaluation of one (source, claim) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEvaluation {
    pub notions: TruthNotions,
    pub tallies: Tallies,
    pub outcomes: Vec<ReplicateOutcome>,
    /// Replicate-0 perception, the artifact a source would publish.
    pub artifact: PerceptionArtifact,
}

impl PairEvaluation {
    pub fn conviction(&self) -> f64 {
        self.tallies.conviction_term()
    }

    pub fn persuasiveness(&self) -> f64 {
        self.tallies.persuasiveness()
    }

    pub fn demonstrability(&self) -> f64 {
        self.tallies.demonstrability()
    }

    pub fn interactions(&self, tau_agree: f64) -> InteractionReport {
        interactions(&self.notions, &self.tallies, tau_agree)
    }
}

/// Replicate-matched estimation of the truth notions.
///
/// Streams used for replicate `r` of source `s` on claim `c`:
/// perception `perceive/s → claim/c/r`, stance `assess/s → claim/c/r`,
/// panels `panel-self/s`, `panel-joint/s` and the source-independent
/// `panel-orig` each followed by `claim/c/r`.
#[derive(Debug, Clone)]
pub struct PairEstimator<'a> {
    design: PanelDesign<'a>,
    estimation: &'a EstimationConfig,
    root: &'a RngStream,
}

impl<'a> PairEstimator<'a> {
    pub fn new(
        population: &'a [VerifierSpec],
        weights: Option<&'a [f64]>,
        estimation: &'a EstimationConfig,
        root: &'a RngStream,
    ) -> Result<Self, MetricsError> {
        let design = PanelDesign::new(population, weights, estimation.panel_size, &estimation.rule)?;
        Ok(Self {
            design,
            estimation,
            root,
        })
    }

    pub fn replicates(&self) -> u64 {
        self.estimation.replicates as u64
    }

    fn stream(&self, kind: &str, id: &str, claim: &LatentClaim, r: u64) -> RngStream {
        self.root.child(kind, id, 0).child("claim", claim.id.as_str(), r)
    }

    /// Verdicts on the bare claim; they do not depend on the source.
    pub fn original_verdicts(&self, claim: &LatentClaim) -> Vec<Verdict> {
        let evidence = Bundle::claim(claim).evidence();
        (0..self.replicates())
            .into_par_iter()
            .map(|r| {
                let mut rng = self.stream("panel-orig", "", claim, r).rng();
                self.design.verdict(evidence, &mut rng).stance
            })
            .collect()
    }

    fn perception(&self, source: &SourceSpec, claim: &LatentClaim, r: u64) -> PerceptionArtifact {
        let r = match self.estimation.perception_mode {
            PerceptionMode::Fresh => r,
            PerceptionMode::Fixed => 0,
        };
        perceive(source, claim, &mut self.stream("perceive", source.id.as_str(), claim, r).rng())
    }

    fn replicate(
        &self,
        source: &SourceSpec,
        claim: &LatentClaim,
        r: u64,
        orig_verdict: Verdict,
    ) -> Result<ReplicateOutcome, ModelError> {
        let sid = source.id.as_str();
        let artifact = self.perception(source, claim, r);
        let own = self_assess(source, &artifact, &mut self.stream("assess", sid, claim, r).rng())?;
        let self_evidence = Bundle::artifact(artifact.clone()).evidence();
        let joint_evidence = Bundle::joint(claim, artifact).evidence();
        let self_verdict = self
            .design
            .verdict(self_evidence, &mut self.stream("panel-self", sid, claim, r).rng())
            .stance;
        let joint_verdict = self
            .design
            .verdict(joint_evidence, &mut self.stream("panel-joint", sid, claim, r).rng())
            .stance;
        let stance = match source.wiring {
            Wiring::Natural => own,
            Wiring::CopyConsensus => joint_verdict.stance().unwrap_or(Stance::Bottom),
            Wiring::InvertConsensus => !joint_verdict.stance().unwrap_or(Stance::Top),
        };
        Ok(ReplicateOutcome {
            stance,
            self_verdict,
            joint_verdict,
            orig_verdict,
        })
    }

    /// Evaluates the pair given the bare-claim verdicts from [`Self::original_verdicts`].
    pub fn evaluate_with(
        &self,
        source: &SourceSpec,
        claim: &LatentClaim,
        orig: &[Verdict],
    ) -> Result<PairEvaluation, MetricsError> {
        source.validate()?;
        assert_eq!(orig.len() as u64, self.replicates(), "one original verdict per replicate");
        let mut outcomes = (0..self.replicates())
            .into_par_iter()
            .map(|r| self.replicate(source, claim, r, orig[r as usize]))
            .collect::<Result<Vec<_>, _>>()?;
        if self.estimation.stance_mode == StanceMode::Modal && source.wiring == Wiring::Natural {
            let tops = outcomes.iter().filter(|o| o.stance == Stance::Top).count();
            let modal = if 2 * tops > outcomes.len() {
                Stance::Top
            } else {
                Stance::Bottom
            };
            outcomes.iter_mut().for_each(|o| o.stance = modal);
        }
        let tallies = Tallies::from_outcomes(&outcomes);
        Ok(PairEvaluation {
            notions: tallies.notions(outcomes[0].stance),
            tallies,
            artifact: self.perception(source, claim, 0),
            outcomes,
        })
    }

    pub fn evaluate(&self, source: &SourceSpec, claim: &LatentClaim) -> Result<PairEvaluation, MetricsError> {
        self.evaluate_with(source, claim, &self.original_verdicts(claim))
    }

    pub fn truth_notions(&self, source: &SourceSpec, claim: &LatentClaim) -> Result<TruthNotions, MetricsError> {
        Ok(self.evaluate(source, claim)?.notions)
    }

    pub fn conviction(&self, source: &SourceSpec, claim: &LatentClaim) -> Result<f64, MetricsError> {
        Ok(self.evaluate(source, claim)?.conviction())
    }

    pub fn persuasiveness(&self, source: &SourceSpec, claim: &LatentClaim) -> Result<f64, MetricsError> {
        Ok(self.evaluate(source, claim)?.persuasiveness())
    }

    pub fn demonstrability(&self, source: &SourceSpec, claim: &LatentClaim) -> Result<f64, MetricsError> {
        Ok(self.evaluate(source, claim)?.demonstrability())
    }
}
