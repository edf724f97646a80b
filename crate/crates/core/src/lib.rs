//! Simulation engine for claims, sources, verifier consensus and
//! conviction-weighted reputation.
//!
//! The pipeline: a [`world::World`] is generated from a
//! [`config::ScenarioConfig`]; each source perceives each claim and takes a
//! stance; verifier panels estimate consensus on the perception, on claim plus
//! perception, and on the bare claim; the resulting conviction and certitude
//! weights fold into a [`reputation::ReputationLedger`]. Every step is written
//! to a hash-chained [`trail`] that replays to the same ledger bit for bit.

pub mod aggregate;
pub mod canonical;
pub mod config;
pub mod metrics;
pub mod model;
pub mod reputation;
pub mod rng;
pub mod sim;
pub mod trail;
pub mod world;

pub use aggregate::{AggregateOutcome, AggregationRule, ConsensusEstimate, Verdict};
pub use config::ScenarioConfig;
pub use model::{ClaimId, LatentClaim, SourceId, SourceSpec, Stance, VerifierId, VerifierSpec};
pub use reputation::{RegionLabel, ReputationLedger};
pub use rng::RngStream;
pub use world::{generate_world, World};
