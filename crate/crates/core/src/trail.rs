//! Append-only, hash-chained event trail with deterministic replay.
//!
//! Each event is one line of canonical JSON (sorted keys, shortest round-trip
//! floats) holding `seq`, `kind`, `payload`, `prev_hash` and `hash`, where
//! `hash` is the lowercase SHA-256 hex digest of the canonical JSON of the
//! other four fields. The first event chains to 64 zero digits.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::{to_canonical_string, to_canonical_value, CanonicalError};
use crate::model::{ClaimId, SourceId, Stance};
use crate::reputation::{
    joint_weight, posterior_weight, prior_weight, signed_conviction, ClaimOutcome, ConvictionBand, RealmAccount,
    RegionLabel, ReputationError, ReputationLedger,
};

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    ClaimRegistered,
    PerceptionSubmitted,
    AssessmentCommitted,
    ConsensusUpdated,
    ReputationFolded,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimRegistered {
    pub claim_id: ClaimId,
    pub realm: String,
    pub truth: Stance,
    pub evidence: f64,
}

/// The replicate-0 perception of a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionSubmitted {
    pub claim_id: ClaimId,
    pub source_id: SourceId,
    pub evidence: f64,
    pub completeness: f64,
}

/// The replicate-0 stance of a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentCommitted {
    pub claim_id: ClaimId,
    pub source_id: SourceId,
    pub stance: Stance,
}

/// Consensus and agreement estimates after the first `replicates` replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusUpdated {
    pub claim_id: ClaimId,
    pub source_id: SourceId,
    pub checkpoint: u64,
    pub replicates: u64,
    pub p_self: f64,
    pub p_joint: f64,
    pub p_orig: f64,
    pub conviction: f64,
    pub faithfulness: f64,
    pub correctness: f64,
    pub transparency: f64,
}

/// A ledger fold triggered by the preceding consensus update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReputationFolded {
    pub claim_id: ClaimId,
    pub source_id: SourceId,
    pub realm: String,
    pub checkpoint: u64,
    pub region: RegionLabel,
    pub band: ConvictionBand,
    pub signed_conviction: f64,
    pub w_minus: f64,
    pub w_plus: f64,
    pub w: f64,
    pub contribution: f64,
    pub count: u64,
    pub sum_contrib: f64,
    pub reputation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    ClaimRegistered(ClaimRegistered),
    PerceptionSubmitted(PerceptionSubmitted),
    AssessmentCommitted(AssessmentCommitted),
    ConsensusUpdated(ConsensusUpdated),
    ReputationFolded(ReputationFolded),
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::ClaimRegistered(_) => EventKind::ClaimRegistered,
            Payload::PerceptionSubmitted(_) => EventKind::PerceptionSubmitted,
            Payload::AssessmentCommitted(_) => EventKind::AssessmentCommitted,
            Payload::ConsensusUpdated(_) => EventKind::ConsensusUpdated,
            Payload::ReputationFolded(_) => EventKind::ReputationFolded,
        }
    }

    fn from_value(kind: EventKind, v: Value) -> Result<Self, serde_json::Error> {
        Ok(match kind {
            EventKind::ClaimRegistered => Payload::ClaimRegistered(serde_json::from_value(v)?),
            EventKind::PerceptionSubmitted => Payload::PerceptionSubmitted(serde_json::from_value(v)?),
            EventKind::AssessmentCommitted => Payload::AssessmentCommitted(serde_json::from_value(v)?),
            EventKind::ConsensusUpdated => Payload::ConsensusUpdated(serde_json::from_value(v)?),
            EventKind::ReputationFolded => Payload::ReputationFolded(serde_json::from_value(v)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrailEvent {
    pub seq: u64,
    pub payload: Payload,
    pub prev_hash: String,
    pub hash: String,
}

impl TrailEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}

#[derive(Serialize)]
struct Unsealed<'a> {
    seq: u64,
    kind: EventKind,
    payload: &'a Value,
    prev_hash: &'a str,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sealed {
    seq: u64,
    kind: EventKind,
    payload: Value,
    prev_hash: String,
    hash: String,
}

fn digest(seq: u64, kind: EventKind, payload: &Value, prev_hash: &str) -> Result<String, CanonicalError> {
    let text = to_canonical_string(&Unsealed {
        seq,
        kind,
        payload,
        prev_hash,
    })?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

#[derive(Debug, Error)]
pub enum TrailError {
    #[error("trail i/o: {0}")]
    Io(#[from] io::Error),
    #[error("cannot serialize event: {0}")]
    Serialize(#[from] CanonicalError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// Single writer appending events to a byte sink.
#[derive(Debug)]
pub struct TrailWriter<W: Write> {
    sink: W,
    next_seq: u64,
    prev_hash: String,
}

impl<W: Write> TrailWriter<W> {
    /// Starts a new trail at the genesis position.
    pub fn new(sink: W) -> Self {
        Self {
            sink,
            next_seq: 0,
            prev_hash: GENESIS_HASH.to_owned(),
        }
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Hashes, writes and returns the next event. Each line goes out in a single write.
    pub fn append(&mut self, payload: Payload) -> Result<TrailEvent, TrailError> {
        let value = to_canonical_value(&payload)?;
        let kind = payload.kind();
        let hash = digest(self.next_seq, kind, &value, &self.prev_hash)?;
        let mut line = to_canonical_string(&Sealed {
            seq: self.next_seq,
            kind,
            payload: value,
            prev_hash: self.prev_hash.clone(),
            hash: hash.clone(),
        })?;
        line.push('\n');
        self.sink.write_all(line.as_bytes())?;
        let event = TrailEvent {
            seq: self.next_seq,
            payload,
            prev_hash: std::mem::replace(&mut self.prev_hash, hash.clone()),
            hash,
        };
        self.next_seq += 1;
        Ok(event)
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.sink.flush()
    }

    pub fn into_inner(self) -> W {
        self.sink
    }
}

impl TrailWriter<File> {
    /// Creates (or empties) the trail file at `path`.
    pub fn create(path: &Path) -> Result<Self, TrailError> {
        Ok(Self::new(File::create(path)?))
    }

    /// Opens an existing trail for appending. A partially written final line
    /// is cut off; the remaining prefix must verify.
    pub fn open(path: &Path) -> Result<Self, TrailError> {
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        if keep < bytes.len() {
            file.set_len(keep as u64)?;
            bytes.truncate(keep);
        }
        let events = verify(&bytes)?;
        file.seek(SeekFrom::End(0))?;
        let (next_seq, prev_hash) = match events.last() {
            Some(e) => (e.seq + 1, e.hash.clone()),
            None => (0, GENESIS_HASH.to_owned()),
        };
        Ok(Self {
            sink: file,
            next_seq,
            prev_hash,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    /// Line numbers start at 1.
    #[error("line {line} is malformed: {reason}")]
    Malformed { line: usize, reason: String },
    /// The event at this position fails its integrity checks.
    #[error("integrity failure at seq {seq}: {reason}")]
    BadEvent { seq: u64, reason: String },
}

/// Checks every line and the whole hash chain, returning the parsed events.
///
/// A line that is not JSON, or a final line without its newline, is
/// malformed. Anything else that fails (non-canonical bytes, wrong sequence
/// number, broken link, digest mismatch, payload not matching its kind) is
/// reported as a bad event at the position where it occurs.
pub fn verify(bytes: &[u8]) -> Result<Vec<TrailEvent>, VerifyError> {
    let mut events = Vec::new();
    if bytes.is_empty() {
        return Ok(events);
    }
    if bytes.last() != Some(&b'\n') {
        let line = bytes.iter().filter(|b| **b == b'\n').count() + 1;
        return Err(VerifyError::Malformed {
            line,
            reason: "unterminated final line".into(),
        });
    }
    let mut prev_hash = GENESIS_HASH.to_owned();
    for (i, raw) in bytes[..bytes.len() - 1].split(|b| *b == b'\n').enumerate() {
        let seq = i as u64;
        let malformed = |reason: String| VerifyError::Malformed { line: i + 1, reason };
        let bad = |reason: String| VerifyError::BadEvent { seq, reason };
        let text = std::str::from_utf8(raw).map_err(|e| malformed(e.to_string()))?;
        let value: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        let sealed: Sealed = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
        let canonical = to_canonical_string(&sealed).map_err(|e| bad(e.to_string()))?;
        if canonical != text {
            return Err(bad("line is not in canonical form".into()));
        }
        if sealed.seq != seq {
            return Err(bad(format!("sequence number {} out of place", sealed.seq)));
        }
        if sealed.prev_hash != prev_hash {
            return Err(bad("previous-hash link broken".into()));
        }
        let expected = digest(seq, sealed.kind, &sealed.payload, &sealed.prev_hash).map_err(|e| bad(e.to_string()))?;
        if sealed.hash != expected {
            return Err(bad("digest mismatch".into()));
        }
        let payload = Payload::from_value(sealed.kind, sealed.payload).map_err(|e| bad(e.to_string()))?;
        prev_hash = sealed.hash.clone();
        events.push(TrailEvent {
            seq,
            payload,
            prev_hash: sealed.prev_hash,
            hash: sealed.hash,
        });
    }
    Ok(events)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("replay diverges at seq {seq}: {reason}")]
    Divergence { seq: u64, reason: String },
}

/// Latest fold per (source, claim) together with the consensus that triggered it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairState {
    pub consensus: ConsensusUpdated,
    pub fold: ReputationFolded,
}

/// State reconstructed from a trail: claims, ledger and latest pair outcomes.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplayState {
    pub events: u64,
    pub claims: BTreeMap<ClaimId, ClaimRegistered>,
    pub ledger: ReputationLedger,
    pub pairs: BTreeMap<(SourceId, ClaimId), PairState>,
    /// Fold derived from the latest consensus update, awaiting its recorded event.
    #[serde(skip)]
    pending: Option<(ConsensusUpdated, ReputationFolded)>,
}

impl ReplayState {
    pub fn new() -> Self {
        Self::default()
    }

    fn outcome(&self, seq: u64, c: &ConsensusUpdated) -> Result<ClaimOutcome, ReplayError> {
        let diverge = |reason: String| ReplayError::Divergence { seq, reason };
        let from_rep = |e: ReputationError| diverge(e.to_string());
        let realm = self
            .claims
            .get(&c.claim_id)
            .ok_or_else(|| diverge(format!("claim {} was never registered", c.claim_id)))?
            .realm
            .clone();
        let weight = joint_weight(
            prior_weight(c.p_orig).map_err(from_rep)?,
            posterior_weight(c.p_joint).map_err(from_rep)?,
        )
        .map_err(from_rep)?;
        Ok(ClaimOutcome {
            claim_id: c.claim_id.clone(),
            realm,
            signed_conviction: signed_conviction(c.conviction).map_err(from_rep)?,
            weight,
        })
    }

    /// The fold that consensus update `c` at position `seq` implies, without
    /// applying it. Region and band are classification annotations that the
    /// trail records but does not derive; they are left at placeholders.
    pub fn preview_fold(&self, seq: u64, c: &ConsensusUpdated) -> Result<ReputationFolded, ReplayError> {
        let outcome = self.outcome(seq, c)?;
        let mut account = self
            .ledger
            .account(&c.source_id, &outcome.realm)
            .cloned()
            .unwrap_or_default();
        account.fold(&outcome);
        Ok(fold_record(c, &outcome, &account))
    }

    pub fn apply(&mut self, event: &TrailEvent) -> Result<(), ReplayError> {
        let seq = event.seq;
        let diverge = |reason: String| ReplayError::Divergence { seq, reason };
        if self.pending.is_some() && event.kind() != EventKind::ReputationFolded {
            return Err(diverge("consensus update not followed by its fold".into()));
        }
        match &event.payload {
            Payload::ClaimRegistered(c) => {
                if self.claims.insert(c.claim_id.clone(), c.clone()).is_some() {
                    return Err(diverge(format!("claim {} registered twice", c.claim_id)));
                }
            }
            Payload::PerceptionSubmitted(_) | Payload::AssessmentCommitted(_) => {}
            Payload::ConsensusUpdated(c) => {
                let outcome = self.outcome(seq, c)?;
                let account = self
                    .ledger
                    .fold(&c.source_id, &outcome.realm, &outcome)
                    .map_err(|e| diverge(e.to_string()))?;
                let fold = fold_record(c, &outcome, account);
                self.pending = Some((c.clone(), fold));
            }
            Payload::ReputationFolded(recorded) => {
                let (consensus, derived) = self
                    .pending
                    .take()
                    .ok_or_else(|| diverge("fold without a consensus update".into()))?;
                let expected = ReputationFolded {
                    region: recorded.region,
                    band: recorded.band,
                    ..derived
                };
                if !bit_equal(&expected, recorded) {
                    return Err(diverge(format!(
                        "recorded fold {recorded:?} differs from derived {expected:?}"
                    )));
                }
                self.pairs.insert(
                    (recorded.source_id.clone(), recorded.claim_id.clone()),
                    PairState {
                        consensus,
                        fold: recorded.clone(),
                    },
                );
            }
        }
        self.events += 1;
        Ok(())
    }

    /// Canonical JSON of the ledger, for byte-level comparison.
    pub fn ledger_json(&self) -> String {
        self.ledger.to_canonical_json()
    }
}

fn fold_record(c: &ConsensusUpdated, outcome: &ClaimOutcome, account: &RealmAccount) -> ReputationFolded {
    ReputationFolded {
        claim_id: c.claim_id.clone(),
        source_id: c.source_id.clone(),
        realm: outcome.realm.clone(),
        checkpoint: c.checkpoint,
        region: RegionLabel::Sensible,
        band: ConvictionBand::Medium,
        signed_conviction: outcome.signed_conviction.value(),
        w_minus: outcome.weight.w_minus,
        w_plus: outcome.weight.w_plus,
        w: outcome.weight.w,
        contribution: outcome.contribution(),
        count: account.count() as u64,
        sum_contrib: account.sum_contrib,
        reputation: account.reputation().expect("account holds the folded claim"),
    }
}

fn bit_equal(a: &ReputationFolded, b: &ReputationFolded) -> bool {
    let floats = |f: &ReputationFolded| {
        [
            f.signed_conviction,
            f.w_minus,
            f.w_plus,
            f.w,
            f.contribution,
            f.sum_contrib,
            f.reputation,
        ]
        .map(f64::to_bits)
    };
    a.claim_id == b.claim_id
        && a.source_id == b.source_id
        && a.realm == b.realm
        && a.checkpoint == b.checkpoint
        && a.count == b.count
        && floats(a) == floats(b)
}

/// Verifies `bytes` and rebuilds the state the trail describes.
pub fn replay(bytes: &[u8]) -> Result<ReplayState, ReplayError> {
    let mut state = ReplayState::new();
    for event in verify(bytes)? {
        state.apply(&event)?;
    }
    Ok(state)
}
