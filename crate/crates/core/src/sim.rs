//! The simulation engine: world, pair evaluations, trail and live ledger.
//!
//! Claims are evaluated in parallel chunks; events are then appended in a
//! fixed order (claim by claim, source by source, checkpoint by checkpoint),
//! so the trail bytes do not depend on the number of threads.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{couple_reputations, reputation_weight, AggregationRule, CouplingOutcome};
use crate::config::{ConfigError, ScenarioConfig};
use crate::metrics::{interactions, InteractionReport, MetricsError, PairEstimator, PairEvaluation, Tallies};
use crate::model::{vote, Bundle, ClaimId, SourceId, Stance};
use crate::reputation::{classify_region_with, signed_conviction, RegimeTable, ReputationError};
use crate::rng::RngStream;
use crate::trail::{
    AssessmentCommitted, ClaimRegistered, ConsensusUpdated, Payload, PerceptionSubmitted, ReplayError,
    ReplayState, TrailError, TrailEvent, TrailWriter,
};
use crate::world::{generate_world, World};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Trail(#[from] TrailError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Reputation(#[from] ReputationError),
    #[error("thread pool: {0}")]
    Threads(String),
}

/// Final per-pair metrics over all replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub claim_id: ClaimId,
    pub source_id: SourceId,
    pub report: InteractionReport,
    pub tallies: Tallies,
    pub conviction: f64,
    pub persuasiveness: f64,
    pub demonstrability: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub world: World,
    pub metrics: Vec<PairMetrics>,
    /// Live state after the last event.
    pub state: ReplayState,
    /// Present when the rule weights verifiers by reputation.
    pub coupling: Option<CouplingOutcome>,
}

/// Replicate counts at which consensus is published: `ceil(k·M/K)` for
/// `k = 1..=K`, without repeats.
pub fn checkpoints(replicates: u64, count: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (1..=count.max(1))
        .map(|k| (k * replicates).div_ceil(count.max(1)))
        .collect();
    out.dedup();
    out
}

/// Verifier weights for the reputation-weighted rule: every verifier votes
/// once on every bare claim and the reputation/consensus coupling is iterated
/// on those votes.
pub fn calibrate_verifiers(world: &World, rule: &AggregationRule, root: &RngStream) -> Option<CouplingOutcome> {
    let AggregationRule::ReputationWeighted {
        damping,
        max_iters,
        tol,
    } = *rule
    else {
        return None;
    };
    let votes: Vec<Vec<Stance>> = world
        .verifiers
        .par_iter()
        .map(|v| {
            let stream = root.child("calibrate", v.id.as_str(), 0);
            world
                .claims
                .iter()
                .map(|c| {
                    let mut rng = stream.child("claim", c.id.as_str(), 0).rng();
                    vote(v.vote_probability(Bundle::claim(c).evidence()), &mut rng)
                })
                .collect()
        })
        .collect();
    Some(couple_reputations(&votes, damping, max_iters, tol))
}

/// Claims evaluated together before their events are written.
const CHUNK: usize = 32;

/// Runs `config` under `seed`, appending every event to `trail`.
///
/// `observer`, when given, sees each event together with the live state
/// right after that event was applied.
pub fn simulate<W: Write>(
    config: &ScenarioConfig,
    seed: u64,
    trail: &mut TrailWriter<W>,
    mut observer: Option<&mut dyn FnMut(&TrailEvent, &ReplayState)>,
) -> Result<SimulationOutput, SimError> {
    let table = RegimeTable::standard()?;
    let world = generate_world(config, seed)?;
    let root = RngStream::new(seed).child("run", "", 0);
    let est = &config.estimation;
    let coupling = calibrate_verifiers(&world, &est.rule, &root);
    let weights: Option<Vec<f64>> = coupling
        .as_ref()
        .map(|c| c.reputations.iter().copied().map(reputation_weight).collect());
    let estimator = PairEstimator::new(&world.verifiers, weights.as_deref(), est, &root)?;
    let marks = checkpoints(est.replicates as u64, est.checkpoints as u64);
    let regions = config.reputation.regions();
    let bands = config.reputation.bands();
    let tau = config.reputation.tau_agree;

    let mut state = ReplayState::new();
    let mut metrics = Vec::with_capacity(world.claims.len() * world.sources.len());
    let mut emit = |payload: Payload, state: &mut ReplayState| -> Result<(), SimError> {
        let event = trail.append(payload)?;
        state.apply(&event)?;
        if let Some(obs) = observer.as_mut() {
            obs(&event, state);
        }
        Ok(())
    };

    for chunk in world.claims.chunks(CHUNK) {
        let evaluated: Vec<Vec<PairEvaluation>> = chunk
            .par_iter()
            .map(|claim| {
                let orig = estimator.original_verdicts(claim);
                world
                    .sources
                    .iter()
                    .map(|s| estimator.evaluate_with(s, claim, &orig))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;

        for (claim, evals) in chunk.iter().zip(evaluated) {
            emit(
                Payload::ClaimRegistered(ClaimRegistered {
                    claim_id: claim.id.clone(),
                    realm: claim.realm.clone(),
                    truth: claim.truth,
                    evidence: claim.evidence,
                }),
                &mut state,
            )?;
            for (source, eval) in world.sources.iter().zip(evals) {
                emit(
                    Payload::PerceptionSubmitted(PerceptionSubmitted {
                        claim_id: claim.id.clone(),
                        source_id: source.id.clone(),
                        evidence: eval.artifact.evidence,
                        completeness: eval.artifact.completeness,
                    }),
                    &mut state,
                )?;
                emit(
                    Payload::AssessmentCommitted(AssessmentCommitted {
                        claim_id: claim.id.clone(),
                        source_id: source.id.clone(),
                        stance: eval.notions.stance_source,
                    }),
                    &mut state,
                )?;
                for (k, &m) in marks.iter().enumerate() {
                    let t = Tallies::from_outcomes(&eval.outcomes[..m as usize]);
                    let notions = t.notions(eval.notions.stance_source);
                    let update = ConsensusUpdated {
                        claim_id: claim.id.clone(),
                        source_id: source.id.clone(),
                        checkpoint: k as u64,
                        replicates: m,
                        p_self: notions.p_self,
                        p_joint: notions.p_joint,
                        p_orig: notions.p_orig,
                        conviction: t.conviction_term(),
                        faithfulness: t.faithfulness_term(),
                        correctness: t.correctness_term(),
                        transparency: t.transparency_agreement(),
                    };
                    let mut fold = state.preview_fold(state.events + 1, &update)?;
                    let region = classify_region_with(update.p_orig, update.p_joint, &regions)?;
                    let cell = table.lookup(region, signed_conviction(update.conviction)?, &bands);
                    fold.region = region;
                    fold.band = cell.conviction_band;
                    emit(Payload::ConsensusUpdated(update), &mut state)?;
                    emit(Payload::ReputationFolded(fold), &mut state)?;
                }
                metrics.push(PairMetrics {
                    claim_id: claim.id.clone(),
                    source_id: source.id.clone(),
                    report: interactions(&eval.notions, &eval.tallies, tau),
                    tallies: eval.tallies,
                    conviction: eval.conviction(),
                    persuasiveness: eval.persuasiveness(),
                    demonstrability: eval.demonstrability(),
                });
            }
        }
    }
    trail.flush().map_err(TrailError::from)?;
    Ok(SimulationOutput {
        world,
        metrics,
        state,
        coupling,
    })
}

/// Runs `f` on a pool of `threads` workers, or on the global pool for `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, SimError> {
    match threads {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| SimError::Threads(e.to_string())),
    }
}
