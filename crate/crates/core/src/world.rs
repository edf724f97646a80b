//! Deterministic generation of a synthetic world from a scenario.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RealmConfig, ScenarioConfig, UniformRange};
use crate::model::{ClaimId, LatentClaim, SourceSpec, Stance, VerifierId, VerifierSpec};
use crate::rng::RngStream;

/// Claims, sources and the verifier population of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    pub seed: u64,
    pub realms: Vec<String>,
    pub claims: Vec<LatentClaim>,
    pub sources: Vec<SourceSpec>,
    pub verifiers: Vec<VerifierSpec>,
}

impl World {
    pub fn claim(&self, id: &ClaimId) -> Option<&LatentClaim> {
        self.claims.iter().find(|c| &c.id == id)
    }

    /// Canonical JSON: sorted keys, shortest round-trip floats.
    pub fn to_canonical_json(&self) -> String {
        crate::canonical::to_canonical_string(self).expect("world values are finite")
    }
}

fn id_width(count: usize) -> usize {
    count.saturating_sub(1).to_string().len().max(4)
}

fn uniform<R: Rng + ?Sized>(range: UniformRange, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    range.min + (range.max - range.min) * u
}

fn pick_realm<'a, R: Rng + ?Sized>(realms: &'a [RealmConfig], rng: &mut R) -> &'a RealmConfig {
    let total: f64 = realms.iter().map(|r| r.weight).sum();
    let mut target = rng.random::<f64>() * total;
    for realm in realms {
        if target < realm.weight {
            return realm;
        }
        target -= realm.weight;
    }
    realms.last().expect("validated: at least one realm")
}

/// Builds the world for `config` under `seed`; identical inputs give identical worlds.
pub fn generate_world(config: &ScenarioConfig, seed: u64) -> Result<World, ConfigError> {
    config.validate()?;
    let root = RngStream::new(seed).child("world", "", 0);

    let width = id_width(config.world.claims);
    let claims = (0..config.world.claims)
        .map(|i| {
            let id = format!("c{i:0width$}");
            let mut rng = root.child("claim", &id, 0).rng();
            let realm = pick_realm(&config.world.realms, &mut rng);
            let truth = if rng.random::<f64>() < realm.truth_marginal {
                Stance::Top
            } else {
                Stance::Bottom
            };
            let noise = if realm.evidence_spread > 0.0 {
                Normal::new(0.0, realm.evidence_spread)
                    .expect("validated spread")
                    .sample(&mut rng)
            } else {
                0.0
            };
            let evidence = (truth.sign() * realm.evidence_mean + noise).clamp(-1.0, 1.0);
            LatentClaim {
                id: ClaimId(id),
                realm: realm.name.clone(),
                truth,
                evidence,
            }
        })
        .collect();

    let pop = &config.verifiers;
    let width = id_width(pop.size);
    let verifiers = (0..pop.size)
        .map(|j| {
            let id = format!("v{j:0width$}");
            let mut rng = root.child("verifier", &id, 0).rng();
            let acuity = uniform(pop.acuity, &mut rng);
            let bias = uniform(pop.bias, &mut rng);
            VerifierSpec {
                id: VerifierId(id),
                acuity,
                bias,
                clamp: pop.clamp,
            }
        })
        .collect();

    Ok(World {
        seed,
        realms: config.world.realms.iter().map(|r| r.name.clone()).collect(),
        claims,
        sources: config.sources.clone(),
        verifiers,
    })
}
