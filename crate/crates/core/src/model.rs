//! Claims, sources and verifiers, and the stochastic behaviours that connect them.
//!
//! Evidence is a signed signal in `[-1, +1]`: positive values support `Top`.
//! A source perceives a claim into an artifact whose evidence mixes what it
//! kept of the claim (fidelity), what it added on its own (augmentation,
//! signed by the latent truth) and a systematic shift (bias). Verifiers vote on
//! bundles of claims and artifacts with a clamped logistic response to the
//! bundle's summed evidence.

use std::fmt;
use std::ops::Not;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default floor/ceiling on a verifier's vote probability.
pub const DEFAULT_VOTE_CLAMP: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{field}: {value} is outside {range}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("a bundle needs at least one member")]
    EmptyBundle,
    #[error("artifact of source {artifact} assessed by source {assessor}")]
    ForeignArtifact { artifact: SourceId, assessor: SourceId },
}

fn check(field: &'static str, value: f64, range: &'static str, ok: bool) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::OutOfRange { field, value, range })
    }
}

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_owned())
            }
        }
    };
}

id_type!(ClaimId);
id_type!(SourceId);
id_type!(VerifierId);

/// A binary truth assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Top,
    Bottom,
}

impl Stance {
    /// `Top` for strictly positive evidence, `Bottom` otherwise (including zero).
    pub fn from_evidence(evidence: f64) -> Self {
        if evidence > 0.0 {
            Stance::Top
        } else {
            Stance::Bottom
        }
    }

    /// `+1` for `Top`, `-1` for `Bottom`.
    pub fn sign(self) -> f64 {
        match self {
            Stance::Top => 1.0,
            Stance::Bottom => -1.0,
        }
    }

    pub fn negate(self) -> Self {
        !self
    }
}

impl Not for Stance {
    type Output = Stance;

    fn not(self) -> Stance {
        match self {
            Stance::Top => Stance::Bottom,
            Stance::Bottom => Stance::Top,
        }
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stance::Top => "top",
            Stance::Bottom => "bottom",
        })
    }
}

/// Simulation ground truth for one claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentClaim {
    pub id: ClaimId,
    pub realm: String,
    pub truth: Stance,
    /// Directly perceptible support for `Top`; its sign may disagree with `truth`.
    pub evidence: f64,
}

impl LatentClaim {
    pub fn new(
        id: impl Into<ClaimId>,
        realm: impl Into<String>,
        truth: Stance,
        evidence: f64,
    ) -> Result<Self, ModelError> {
        check("evidence", evidence, "[-1, 1]", (-1.0..=1.0).contains(&evidence))?;
        Ok(Self {
            id: id.into(),
            realm: realm.into(),
            truth,
            evidence,
        })
    }
}

impl From<String> for ClaimId {
    fn from(id: String) -> Self {
        Self(id)
    }
}

impl From<String> for SourceId {
    fn from(id: String) -> Self {
        Self(id)
    }
}

impl From<String> for VerifierId {
    fn from(id: String) -> Self {
        Self(id)
    }
}

/// How a source's stance is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wiring {
    /// Self-assessment of its own perception.
    #[default]
    Natural,
    /// Test fixture: always adopts the joint panel outcome.
    CopyConsensus,
    /// Test fixture: always adopts the opposite of the joint panel outcome.
    InvertConsensus,
}

/// A source: generative parameters for its perceptions plus its stance noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub id: SourceId,
    pub fidelity: f64,
    pub augmentation: f64,
    pub bias: f64,
    pub completeness: f64,
    pub stance_noise: f64,
    pub perception_jitter: f64,
    #[serde(default)]
    pub wiring: Wiring,
}

impl SourceSpec {
    /// A faithful, complete, noiseless assimilative source.
    pub fn new(id: impl Into<SourceId>) -> Self {
        Self {
            id: id.into(),
            fidelity: 1.0,
            augmentation: 0.0,
            bias: 0.0,
            completeness: 1.0,
            stance_noise: 0.0,
            perception_jitter: 0.0,
            wiring: Wiring::Natural,
        }
    }

    pub fn with_fidelity(mut self, v: f64) -> Self {
        self.fidelity = v;
        self
    }

    pub fn with_augmentation(mut self, v: f64) -> Self {
        self.augmentation = v;
        self
    }

    pub fn with_bias(mut self, v: f64) -> Self {
        self.bias = v;
        self
    }

    pub fn with_completeness(mut self, v: f64) -> Self {
        self.completeness = v;
        self
    }

    pub fn with_stance_noise(mut self, v: f64) -> Self {
        self.stance_noise = v;
        self
    }

    pub fn with_jitter(mut self, v: f64) -> Self {
        self.perception_jitter = v;
        self
    }

    pub fn with_wiring(mut self, wiring: Wiring) -> Self {
        self.wiring = wiring;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        check("fidelity", self.fidelity, "[0, 1]", unit(self.fidelity))?;
        check("augmentation", self.augmentation, "[0, 1]", unit(self.augmentation))?;
        check("bias", self.bias, "[-1, 1]", (-1.0..=1.0).contains(&self.bias))?;
        check("completeness", self.completeness, "[0, 1]", unit(self.completeness))?;
        check(
            "stance_noise",
            self.stance_noise,
            "[0, 0.5]",
            (0.0..=0.5).contains(&self.stance_noise),
        )?;
        check(
            "perception_jitter",
            self.perception_jitter,
            "[0, inf)",
            self.perception_jitter >= 0.0,
        )
    }
}

/// A panel member with a clamped logistic response to bundle evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifierSpec {
    pub id: VerifierId,
    pub acuity: f64,
    pub bias: f64,
    pub clamp: f64,
}

impl VerifierSpec {
    pub fn new(id: impl Into<VerifierId>, acuity: f64, bias: f64, clamp: f64) -> Result<Self, ModelError> {
        let v = Self {
            id: id.into(),
            acuity,
            bias,
            clamp,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        // Infinite acuity is a legal step-function verifier.
        if !(self.acuity > 0.0) {
            return Err(ModelError::OutOfRange {
                field: "acuity",
                value: self.acuity,
                range: "(0, inf]",
            });
        }
        check("bias", self.bias, "[-1, 1]", (-1.0..=1.0).contains(&self.bias))?;
        check("clamp", self.clamp, "(0, 0.5)", self.clamp > 0.0 && self.clamp < 0.5)
    }

    /// Probability of a `Top` vote on a bundle with total evidence `evidence`.
    pub fn vote_probability(&self, evidence: f64) -> f64 {
        let x = self.acuity * (evidence + self.bias);
        // inf * 0 is NaN; an infinitely sharp verifier facing zero is undecided.
        let p = if x.is_nan() { 0.5 } else { logistic(x) };
        p.clamp(self.clamp, 1.0 - self.clamp)
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A source's rendering of a claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionArtifact {
    pub source_id: SourceId,
    pub claim_id: ClaimId,
    pub evidence: f64,
    pub completeness: f64,
}

/// What a panel gets to look at: optionally the bare claim, plus artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle<'w> {
    claim: Option<&'w LatentClaim>,
    artifacts: Vec<PerceptionArtifact>,
}

impl<'w> Bundle<'w> {
    pub fn new(claim: Option<&'w LatentClaim>, artifacts: Vec<PerceptionArtifact>) -> Result<Self, ModelError> {
        if claim.is_none() && artifacts.is_empty() {
            return Err(ModelError::EmptyBundle);
        }
        Ok(Self { claim, artifacts })
    }

    /// `{γ}`
    pub fn claim(claim: &'w LatentClaim) -> Self {
        Self {
            claim: Some(claim),
            artifacts: Vec::new(),
        }
    }

    /// `{Γσ(γ)}`
    pub fn artifact(artifact: PerceptionArtifact) -> Self {
        Self {
            claim: None,
            artifacts: vec![artifact],
        }
    }

    /// `{γ, Γσ(γ)}`
    pub fn joint(claim: &'w LatentClaim, artifact: PerceptionArtifact) -> Self {
        Self {
            claim: Some(claim),
            artifacts: vec![artifact],
        }
    }

    pub fn bare_claim(&self) -> Option<&'w LatentClaim> {
        self.claim
    }

    pub fn artifacts(&self) -> &[PerceptionArtifact] {
        &self.artifacts
    }

    /// Summed evidence a verifier sees.
    ///
    /// Without the bare claim an artifact only carries `completeness * evidence`;
    /// an incomplete perception cannot stand on its own.
    pub fn evidence(&self) -> f64 {
        let claim_part = self.claim.map_or(0.0, |c| c.evidence);
        let with_claim = self.claim.is_some();
        self.artifacts.iter().fold(claim_part, |acc, a| {
            acc + if with_claim {
                a.evidence
            } else {
                a.completeness * a.evidence
            }
        })
    }
}

/// Total evidence of a bundle.
pub fn bundle_evidence(bundle: &Bundle<'_>) -> f64 {
    bundle.evidence()
}

/// `Γσ(γ)`: one stochastic perception of `claim` by `source`.
pub fn perceive<R: Rng + ?Sized>(source: &SourceSpec, claim: &LatentClaim, rng: &mut R) -> PerceptionArtifact {
    let jitter = if source.perception_jitter > 0.0 {
        // Validated: jitter is finite and positive.
        Normal::new(0.0, source.perception_jitter)
            .expect("validated jitter")
            .sample(rng)
    } else {
        0.0
    };
    let raw = source.fidelity * claim.evidence
        + source.augmentation * claim.truth.sign()
        + source.bias
        + jitter;
    PerceptionArtifact {
        source_id: source.id.clone(),
        claim_id: claim.id.clone(),
        evidence: raw.clamp(-1.0, 1.0),
        completeness: source.completeness,
    }
}

/// `Θσ(Γσ(γ))`: the source's own stance on its perception.
///
/// Always consumes exactly one uniform draw so stream alignment does not depend
/// on the noise level.
pub fn self_assess<R: Rng + ?Sized>(
    source: &SourceSpec,
    artifact: &PerceptionArtifact,
    rng: &mut R,
) -> Result<Stance, ModelError> {
    if artifact.source_id != source.id {
        return Err(ModelError::ForeignArtifact {
            artifact: artifact.source_id.clone(),
            assessor: source.id.clone(),
        });
    }
    Ok(noisy_stance(artifact.evidence, source.stance_noise, rng))
}

pub(crate) fn noisy_stance<R: Rng + ?Sized>(evidence: f64, noise: f64, rng: &mut R) -> Stance {
    let base = Stance::from_evidence(evidence);
    let u: f64 = rng.random();
    if u < noise {
        !base
    } else {
        base
    }
}

/// One verifier's vote on a bundle.
pub fn verifier_assess<R: Rng + ?Sized>(verifier: &VerifierSpec, bundle: &Bundle<'_>, rng: &mut R) -> Stance {
    vote(verifier.vote_probability(bundle.evidence()), rng)
}

pub(crate) fn vote<R: Rng + ?Sized>(p_top: f64, rng: &mut R) -> Stance {
    let u: f64 = rng.random();
    if u < p_top {
        Stance::Top
    } else {
        Stance::Bottom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn claim(truth: Stance, evidence: f64) -> LatentClaim {
        LatentClaim::new("c0", "r", truth, evidence).unwrap()
    }

    fn artifact(evidence: f64, completeness: f64) -> PerceptionArtifact {
        PerceptionArtifact {
            source_id: "s".into(),
            claim_id: "c0".into(),
            evidence,
            completeness,
        }
    }

    #[test]
    fn negation_is_an_involution() {
        for s in [Stance::Top, Stance::Bottom] {
            assert_ne!(!s, s);
            assert_eq!(!!s, s);
        }
    }

    #[test]
    fn zero_evidence_resolves_to_bottom() {
        assert_eq!(Stance::from_evidence(0.0), Stance::Bottom);
        assert_eq!(Stance::from_evidence(-0.0), Stance::Bottom);
        assert_eq!(Stance::from_evidence(1e-300), Stance::Top);
    }

    #[test]
    fn claim_evidence_must_be_in_range() {
        assert!(LatentClaim::new("c", "r", Stance::Top, 1.5).is_err());
        assert!(LatentClaim::new("c", "r", Stance::Top, f64::NAN).is_err());
        assert!(LatentClaim::new("c", "r", Stance::Top, -1.0).is_ok());
    }

    #[test]
    fn source_validation_names_the_field() {
        let err = SourceSpec::new("s").with_stance_noise(0.6).validate().unwrap_err();
        assert!(matches!(err, ModelError::OutOfRange { field: "stance_noise", .. }));
        let err = SourceSpec::new("s").with_jitter(-0.1).validate().unwrap_err();
        assert!(matches!(err, ModelError::OutOfRange { field: "perception_jitter", .. }));
    }

    #[test]
    fn verifier_validation() {
        assert!(VerifierSpec::new("v", 0.0, 0.0, 0.01).is_err());
        assert!(VerifierSpec::new("v", 1.0, 0.0, 0.5).is_err());
        assert!(VerifierSpec::new("v", 1.0, 0.0, 0.0).is_err());
        assert!(VerifierSpec::new("v", f64::INFINITY, 0.0, 0.01).is_ok());
    }

    #[test]
    fn identity_perception() {
        let mut rng = RngStream::new(1).rng();
        let a = perceive(&SourceSpec::new("s"), &claim(Stance::Bottom, 0.6), &mut rng);
        assert_eq!(a.evidence, 0.6);
        assert_eq!(a.completeness, 1.0);
    }

    #[test]
    fn pure_augmentation_saturates_toward_truth() {
        let mut rng = RngStream::new(1).rng();
        let s = SourceSpec::new("s").with_fidelity(0.0).with_augmentation(1.0);
        assert_eq!(perceive(&s, &claim(Stance::Top, -0.7), &mut rng).evidence, 1.0);
    }

    #[test]
    fn mixed_perception_hand_evaluated() {
        let mut rng = RngStream::new(1).rng();
        let s = SourceSpec::new("s")
            .with_fidelity(0.5)
            .with_augmentation(0.3)
            .with_bias(-0.1);
        let e = perceive(&s, &claim(Stance::Top, 0.4), &mut rng).evidence;
        // 0.5*0.4 + 0.3 - 0.1
        assert!((e - 0.4).abs() < 1e-15, "{e}");
    }

    #[test]
    fn noiseless_self_assessment_follows_sign() {
        let s = SourceSpec::new("s");
        let mut rng = RngStream::new(1).rng();
        assert_eq!(self_assess(&s, &artifact(0.8, 1.0), &mut rng).unwrap(), Stance::Top);
        assert_eq!(self_assess(&s, &artifact(-0.3, 1.0), &mut rng).unwrap(), Stance::Bottom);
    }

    #[test]
    fn foreign_artifact_rejected() {
        let s = SourceSpec::new("other");
        let mut rng = RngStream::new(1).rng();
        assert!(self_assess(&s, &artifact(0.8, 1.0), &mut rng).is_err());
    }

    #[test]
    fn coin_flip_self_assessment_frequency() {
        let s = SourceSpec::new("s").with_stance_noise(0.5);
        let root = RngStream::new(2024);
        let tops = (0..10_000u64)
            .filter(|&r| {
                let mut rng = root.child("assess", "s", r).rng();
                self_assess(&s, &artifact(0.8, 1.0), &mut rng).unwrap() == Stance::Top
            })
            .count();
        let freq = tops as f64 / 10_000.0;
        assert!((freq - 0.5).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn bundle_evidence_rules() {
        let c = claim(Stance::Top, 0.5);
        assert_eq!(Bundle::claim(&c).evidence(), 0.5);
        assert!((Bundle::artifact(artifact(0.6, 0.5)).evidence() - 0.3).abs() < 1e-15);
        assert!((Bundle::joint(&c, artifact(0.6, 0.5)).evidence() - 1.1).abs() < 1e-15);
        assert_eq!(Bundle::new(None, vec![]).unwrap_err(), ModelError::EmptyBundle);
    }

    #[test]
    fn vote_probability_examples() {
        let v = VerifierSpec::new("v", 3.0, 0.0, 0.01).unwrap();
        assert_eq!(v.vote_probability(0.0), 0.5);
        let sharp = VerifierSpec::new("v", f64::INFINITY, 0.0, 0.01).unwrap();
        assert_eq!(sharp.vote_probability(0.2), 0.99);
        assert_eq!(sharp.vote_probability(-0.2), 0.01);
        assert_eq!(sharp.vote_probability(0.0), 0.5);
        let v = VerifierSpec::new("v", 2.0, 0.0, 0.01).unwrap();
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((v.vote_probability(0.5) - expected).abs() < 1e-15);
        assert!((expected - 0.7311).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn perception_is_range_safe(
            fidelity in 0.0..=1.0f64,
            augmentation in 0.0..=1.0f64,
            bias in -1.0..=1.0f64,
            jitter in 0.0..5.0f64,
            evidence in -1.0..=1.0f64,
            top in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let s = SourceSpec::new("s")
                .with_fidelity(fidelity)
                .with_augmentation(augmentation)
                .with_bias(bias)
                .with_jitter(jitter);
            let truth = if top { Stance::Top } else { Stance::Bottom };
            let mut rng = RngStream::new(seed).rng();
            let e = perceive(&s, &claim(truth, evidence), &mut rng).evidence;
            prop_assert!((-1.0..=1.0).contains(&e));
        }

        #[test]
        fn vote_probability_monotone_in_evidence(
            acuity in 0.01..50.0f64,
            bias in -1.0..=1.0f64,
            clamp in 0.001..0.499f64,
            a in -3.0..3.0f64,
            b in -3.0..3.0f64,
        ) {
            let v = VerifierSpec::new("v", acuity, bias, clamp).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(v.vote_probability(lo) <= v.vote_probability(hi));
            let p = v.vote_probability(a);
            prop_assert!(p >= clamp && p <= 1.0 - clamp);
        }

        #[test]
        fn complete_artifact_contributes_the_same_alone(e in -1.0..=1.0f64, ce in -1.0..=1.0f64) {
            let c = claim(Stance::Top, ce);
            let alone = Bundle::artifact(artifact(e, 1.0)).evidence();
            let joint = Bundle::joint(&c, artifact(e, 1.0)).evidence();
            prop_assert_eq!(joint, ce + alone);
            prop_assert_eq!(Bundle::artifact(artifact(e, 0.0)).evidence(), 0.0);
        }
    }
}
