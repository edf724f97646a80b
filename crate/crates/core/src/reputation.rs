//! Certitude weights, signed conviction and realm reputation.
//!
//! A source's contribution on a claim is its signed conviction scaled by how
//! settled consensus was before (`w⁻`) and after (`w⁺`) its perception joined
//! the claim. Reputation in a realm is the uniform average of contributions
//! over the claims folded so far.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClaimId, SourceId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReputationError {
    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("claim {claim} belongs to realm {claim_realm}, not {realm}")]
    RealmMismatch {
        claim: ClaimId,
        claim_realm: String,
        realm: String,
    },
    #[error("regime table: {0}")]
    RegimeTable(String),
}

fn check_unit(what: &'static str, value: f64) -> Result<f64, ReputationError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ReputationError::Domain {
            what,
            value,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

/// Base-2 binary entropy, with `H(0) = H(1) = 0`.
pub fn binary_entropy(p: f64) -> Result<f64, ReputationError> {
    let p = check_unit("probability", p)?;
    let term = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    Ok(term(p) + term(1.0 - p))
}

/// `w⁻`: certitude of consensus on the bare claim.
pub fn prior_weight(p_orig: f64) -> Result<f64, ReputationError> {
    Ok(1.0 - binary_entropy(p_orig)?)
}

/// `w⁺`: certitude of consensus on the claim together with the source's perception.
pub fn posterior_weight(p_joint: f64) -> Result<f64, ReputationError> {
    Ok(1.0 - binary_entropy(p_joint)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaimWeight {
    pub w_minus: f64,
    pub w_plus: f64,
    pub w: f64,
}

impl ClaimWeight {
    /// Weight of a fully settled claim.
    pub const CERTAIN: ClaimWeight = ClaimWeight {
        w_minus: 1.0,
        w_plus: 1.0,
        w: 1.0,
    };

    pub fn from_probabilities(p_orig: f64, p_joint: f64) -> Result<Self, ReputationError> {
        joint_weight(prior_weight(p_orig)?, posterior_weight(p_joint)?)
    }
}

pub fn joint_weight(w_minus: f64, w_plus: f64) -> Result<ClaimWeight, ReputationError> {
    check_unit("w_minus", w_minus)?;
    check_unit("w_plus", w_plus)?;
    Ok(ClaimWeight {
        w_minus,
        w_plus,
        w: w_minus * w_plus,
    })
}

/// `C̃ = 2C − 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignedConviction(f64);

impl SignedConviction {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn signed_conviction(conviction: f64) -> Result<SignedConviction, ReputationError> {
    Ok(SignedConviction(2.0 * check_unit("conviction", conviction)? - 1.0))
}

/// Outcome of comparing a source's stance with one realized joint consensus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vindication {
    Agree,
    Disagree,
    Contested,
}

impl Vindication {
    pub fn sign(self) -> f64 {
        match self {
            Vindication::Agree => 1.0,
            Vindication::Disagree => -1.0,
            Vindication::Contested => 0.0,
        }
    }
}

/// Finite-corpus estimate: mean of `±w` over the corpus, contested claims
/// contributing zero. `None` for an empty corpus, which is not the same as
/// a reputation of zero.
pub fn reputation_estimate(corpus: &[(Vindication, ClaimWeight)]) -> Option<f64> {
    if corpus.is_empty() {
        return None;
    }
    let sum: f64 = corpus.iter().map(|(v, w)| v.sign() * w.w).sum();
    Some(sum / corpus.len() as f64)
}

/// One claim's resolved outcome for a source, ready to fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimOutcome {
    pub claim_id: ClaimId,
    pub realm: String,
    pub signed_conviction: SignedConviction,
    pub weight: ClaimWeight,
}

impl ClaimOutcome {
    pub fn contribution(&self) -> f64 {
        self.signed_conviction.value() * self.weight.w
    }
}

/// Reputation state of one source in one realm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RealmAccount {
    /// Latest contribution per claim; refolding a claim replaces its entry.
    pub contributions: BTreeMap<ClaimId, f64>,
    /// Every `w⁺` folded for each claim, in fold order.
    pub trajectories: BTreeMap<ClaimId, Vec<f64>>,
    pub sum_contrib: f64,
}

impl RealmAccount {
    pub fn count(&self) -> usize {
        self.contributions.len()
    }

    /// `None` until at least one claim has been folded.
    pub fn reputation(&self) -> Option<f64> {
        (self.count() > 0).then(|| self.sum_contrib / self.count() as f64)
    }

    pub(crate) fn fold(&mut self, outcome: &ClaimOutcome) {
        self.contributions
            .insert(outcome.claim_id.clone(), outcome.contribution());
        self.trajectories
            .entry(outcome.claim_id.clone())
            .or_default()
            .push(outcome.weight.w_plus);
        // Summing in claim-id order makes the total independent of fold order.
        self.sum_contrib = self.contributions.values().sum();
    }
}

/// Reputation per (source, realm).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReputationLedger {
    pub accounts: BTreeMap<SourceId, BTreeMap<String, RealmAccount>>,
}

impl ReputationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn account(&self, source: &SourceId, realm: &str) -> Option<&RealmAccount> {
        self.accounts.get(source)?.get(realm)
    }

    pub fn reputation(&self, source: &SourceId, realm: &str) -> Option<f64> {
        self.account(source, realm)?.reputation()
    }

    /// Folds `outcome` into the account of `source` in `realm`.
    pub fn fold(
        &mut self,
        source: &SourceId,
        realm: &str,
        outcome: &ClaimOutcome,
    ) -> Result<&RealmAccount, ReputationError> {
        if outcome.realm != realm {
            return Err(ReputationError::RealmMismatch {
                claim: outcome.claim_id.clone(),
                claim_realm: outcome.realm.clone(),
                realm: realm.to_owned(),
            });
        }
        let account = self
            .accounts
            .entry(source.clone())
            .or_default()
            .entry(realm.to_owned())
            .or_default();
        account.fold(outcome);
        Ok(account)
    }

    /// Rows of `(source, realm, count, reputation)` in key order.
    pub fn rows(&self) -> impl Iterator<Item = (&SourceId, &str, usize, f64)> + '_ {
        self.accounts.iter().flat_map(|(source, realms)| {
            realms.iter().filter_map(move |(realm, account)| {
                account
                    .reputation()
                    .map(|r| (source, realm.as_str(), account.count(), r))
            })
        })
    }

    pub fn to_canonical_json(&self) -> String {
        crate::canonical::to_canonical_string(self).expect("ledger values are finite")
    }
}

/// Region of the (prior consensus, joint consensus) square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionLabel {
    #[serde(rename = "obvious")]
    Obvious,
    #[serde(rename = "sensible")]
    Sensible,
    #[serde(rename = "non-intuitive")]
    NonIntuitive,
    #[serde(rename = "incredible")]
    Incredible,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 4] = [
        RegionLabel::Obvious,
        RegionLabel::Sensible,
        RegionLabel::NonIntuitive,
        RegionLabel::Incredible,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::Obvious => "obvious",
            RegionLabel::Sensible => "sensible",
            RegionLabel::NonIntuitive => "non-intuitive",
            RegionLabel::Incredible => "incredible",
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown region {s:?}"))
    }
}

/// Geometry of the region boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionThresholds {
    /// Shift from the diagonal at which a move stops being gradual.
    pub near_offset: f64,
    /// Shift at which the move is an outright reversal.
    pub far_offset: f64,
    /// Prior consensus beyond which a small shift counts as obvious.
    pub corner: f64,
}

impl Default for RegionThresholds {
    fn default() -> Self {
        Self {
            near_offset: 0.25,
            far_offset: 0.5,
            corner: 0.75,
        }
    }
}

impl RegionThresholds {
    pub fn validate(&self) -> Result<(), String> {
        let Self {
            near_offset,
            far_offset,
            corner,
        } = *self;
        if !(near_offset > 0.0 && near_offset < far_offset && far_offset <= 1.0) {
            return Err(format!(
                "offsets must satisfy 0 < near ({near_offset}) < far ({far_offset}) <= 1"
            ));
        }
        if !(corner >= 0.5 && corner <= 1.0) {
            return Err(format!("corner {corner} must be in [0.5, 1]"));
        }
        Ok(())
    }
}

// Absorbs rounding in grid coordinates so boundary points land on the
// boundary rule rather than on whichever side an ulp puts them.
const TIE: f64 = 1e-12;

pub fn classify_region(p_orig: f64, p_joint: f64) -> Result<RegionLabel, ReputationError> {
    classify_region_with(p_orig, p_joint, &RegionThresholds::default())
}

/// Classifies a (prior, joint) consensus pair. Boundary points go to the
/// more extreme region; points on the diagonal are obvious when the prior is
/// outside the corner band on either side.
pub fn classify_region_with(
    p_orig: f64,
    p_joint: f64,
    t: &RegionThresholds,
) -> Result<RegionLabel, ReputationError> {
    check_unit("p_orig", p_orig)?;
    check_unit("p_joint", p_joint)?;
    let d = p_joint - p_orig;
    let shift = d.abs();
    let high_corner = p_orig >= t.corner - TIE;
    let low_corner = p_orig <= 1.0 - t.corner + TIE;
    Ok(if shift >= t.far_offset - TIE {
        RegionLabel::Incredible
    } else if shift >= t.near_offset - TIE {
        RegionLabel::NonIntuitive
    } else if (d > TIE && high_corner) || (d < -TIE && low_corner) || (shift <= TIE && (high_corner || low_corner)) {
        RegionLabel::Obvious
    } else {
        RegionLabel::Sensible
    })
}

/// Labels over an evenly spaced `size × size` grid of the unit square.
/// Row `i`, column `j` is the point `(i/(size−1), j/(size−1))`.
pub fn region_sweep(size: usize, t: &RegionThresholds) -> Vec<Vec<RegionLabel>> {
    assert!(size >= 2, "a sweep needs at least two points per axis");
    let step = (size - 1) as f64;
    (0..size)
        .map(|i| {
            (0..size)
                .map(|j| {
                    classify_region_with(i as f64 / step, j as f64 / step, t)
                        .expect("grid points lie in the unit square")
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvictionBand {
    High,
    Medium,
    Low,
}

impl ConvictionBand {
    pub const ALL: [ConvictionBand; 3] = [ConvictionBand::High, ConvictionBand::Medium, ConvictionBand::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            ConvictionBand::High => "high",
            ConvictionBand::Medium => "medium",
            ConvictionBand::Low => "low",
        }
    }
}

impl fmt::Display for ConvictionBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandThresholds {
    /// `C̃ ≥ high` is High, `C̃ ≤ −high` is Low.
    pub high: f64,
}

impl Default for BandThresholds {
    fn default() -> Self {
        Self { high: 0.5 }
    }
}

impl BandThresholds {
    pub fn band(&self, c: SignedConviction) -> ConvictionBand {
        if c.value() >= self.high {
            ConvictionBand::High
        } else if c.value() <= -self.high {
            ConvictionBand::Low
        } else {
            ConvictionBand::Medium
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountProfile {
    None,
    Discounted,
    HeavyInitial,
}

impl DiscountProfile {
    fn for_region(region: RegionLabel) -> Self {
        match region {
            RegionLabel::Obvious => DiscountProfile::None,
            RegionLabel::Sensible => DiscountProfile::Discounted,
            RegionLabel::NonIntuitive | RegionLabel::Incredible => DiscountProfile::HeavyInitial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeCell {
    pub region: RegionLabel,
    pub conviction_band: ConvictionBand,
    pub contribution_label: String,
    pub archetype: String,
    pub discount_profile: DiscountProfile,
}

pub const WITHHELD: &str = "Withheld";
pub const UNRESOLVED: &str = "unresolved-trajectory";

const REGIME_DATA: &str = include_str!("../data/regime_table.csv");

const EXPECTED_CELLS: [(RegionLabel, ConvictionBand, &str, &str); 10] = [
    (RegionLabel::Obvious, ConvictionBand::High, "Strong positive", "Reinforcing assimilative source"),
    (RegionLabel::Obvious, ConvictionBand::Medium, "Withheld", "Doubt introducer"),
    (RegionLabel::Obvious, ConvictionBand::Low, "Strong negative", "Nonconformist"),
    (RegionLabel::Sensible, ConvictionBand::High, "Positive, discounted", "Selective augmentative contributor"),
    (RegionLabel::Sensible, ConvictionBand::Medium, "Withheld", "Feather-ruffler"),
    (RegionLabel::Sensible, ConvictionBand::Low, "Negative, discounted", "Selective destabilizer"),
    (
        RegionLabel::NonIntuitive,
        ConvictionBand::High,
        "Strong positive, heavily discounted initially",
        "Genuine innovator",
    ),
    (
        RegionLabel::NonIntuitive,
        ConvictionBand::Low,
        "Strong negative, heavily discounted initially",
        "Inadvertent contributor",
    ),
    (
        RegionLabel::Incredible,
        ConvictionBand::High,
        "Maximum positive, most heavily discounted initially",
        "Paradigm-defining innovator",
    ),
    (
        RegionLabel::Incredible,
        ConvictionBand::Low,
        "Maximum negative, most heavily discounted initially",
        "Consequential inadvertent contributor",
    ),
];

#[derive(Debug, Deserialize)]
struct RegimeRow {
    region: RegionLabel,
    band: ConvictionBand,
    contribution: String,
    archetype: String,
    discount: DiscountProfile,
}

/// The region × conviction-band contribution table.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeTable {
    cells: BTreeMap<(RegionLabel, ConvictionBand), RegimeCell>,
}

impl RegimeTable {
    /// Parses a table and checks it cell by cell against the expected labels.
    pub fn parse(data: &str) -> Result<Self, ReputationError> {
        let err = |m: String| ReputationError::RegimeTable(m);
        let mut cells = BTreeMap::new();
        for row in csv::Reader::from_reader(data.as_bytes()).deserialize::<RegimeRow>() {
            let row = row.map_err(|e| err(e.to_string()))?;
            let key = (row.region, row.band);
            let cell = RegimeCell {
                region: row.region,
                conviction_band: row.band,
                contribution_label: row.contribution,
                archetype: row.archetype,
                discount_profile: row.discount,
            };
            if cells.insert(key, cell).is_some() {
                return Err(err(format!("duplicate cell {} / {}", key.0, key.1)));
            }
        }
        if cells.len() != EXPECTED_CELLS.len() {
            return Err(err(format!("{} cells, expected {}", cells.len(), EXPECTED_CELLS.len())));
        }
        for (region, band, contribution, archetype) in EXPECTED_CELLS {
            let cell = cells
                .get(&(region, band))
                .ok_or_else(|| err(format!("missing cell {region} / {band}")))?;
            if cell.contribution_label != contribution
                || cell.archetype != archetype
                || cell.discount_profile != DiscountProfile::for_region(region)
            {
                return Err(err(format!("cell {region} / {band} does not match the expected labels")));
            }
        }
        Ok(Self { cells })
    }

    /// The table shipped with the crate.
    pub fn standard() -> Result<&'static RegimeTable, ReputationError> {
        static TABLE: OnceLock<Result<RegimeTable, ReputationError>> = OnceLock::new();
        TABLE.get_or_init(|| Self::parse(REGIME_DATA)).as_ref().map_err(Clone::clone)
    }

    pub fn cell(&self, region: RegionLabel, band: ConvictionBand) -> RegimeCell {
        self.cells.get(&(region, band)).cloned().unwrap_or_else(|| RegimeCell {
            region,
            conviction_band: band,
            contribution_label: WITHHELD.to_owned(),
            archetype: UNRESOLVED.to_owned(),
            discount_profile: DiscountProfile::for_region(region),
        })
    }

    pub fn lookup(&self, region: RegionLabel, c: SignedConviction, bands: &BandThresholds) -> RegimeCell {
        self.cell(region, bands.band(c))
    }
}

/// Table lookup with the default conviction bands.
pub fn regime_contribution(region: RegionLabel, c: SignedConviction) -> RegimeCell {
    RegimeTable::standard()
        .expect("shipped regime table is valid")
        .lookup(region, c, &BandThresholds::default())
}
