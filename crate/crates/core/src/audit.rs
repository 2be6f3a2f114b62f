//! Scans recorded transcripts for plaintext values that must never reach a
//! passive party.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ring::FixedPointConfig;
use crate::transport::{Network, OpTraffic, PartyId};

/// Values below this many ulps in magnitude are too common to flag.
const MIN_ENCODED_MAGNITUDE: u64 = 1 << 16;

/// 64-bit words whose appearance in a payload would leak a plaintext.
#[derive(Clone, Debug, Default)]
pub struct ForbiddenSet {
    words: HashMap<u64, String>,
}

impl ForbiddenSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the fixed-point encoding and the raw `f64` bits of every value.
    pub fn add_values(&mut self, kind: &str, values: &[f64], fp: &FixedPointConfig) {
        for &x in values {
            if x == 0.0 || !x.is_finite() {
                continue;
            }
            if let Ok(enc) = fp.encode(x) {
                if enc.as_signed().unsigned_abs() > MIN_ENCODED_MAGNITUDE {
                    self.words.entry(enc.0).or_insert_with(|| kind.to_string());
                }
            }
            self.words.entry(x.to_bits()).or_insert_with(|| kind.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn kind_of(&self, word: u64) -> Option<&str> {
        self.words.get(&word).map(|s| s.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditHit {
    pub to: PartyId,
    pub from: PartyId,
    pub round: u32,
    pub label: String,
    pub kind: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub frames_scanned: u64,
    pub words_scanned: u64,
    pub hits: Vec<AuditHit>,
    pub per_op: BTreeMap<String, OpTraffic>,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.hits.is_empty()
    }
}

/// Checks every frame received by a party other than `active` against `forbidden`.
pub fn transcript_audit(net: &Network, forbidden: &ForbiddenSet, active: PartyId) -> AuditReport {
    let mut report = AuditReport { per_op: net.stats().per_op, ..Default::default() };
    for entry in net.transcript() {
        if entry.to == active {
            continue;
        }
        report.frames_scanned += 1;
        report.words_scanned += entry.payload.len() as u64;
        for &w in &entry.payload {
            if let Some(kind) = forbidden.kind_of(w) {
                report.hits.push(AuditHit {
                    to: entry.to,
                    from: entry.from,
                    round: entry.round,
                    label: entry.label.clone(),
                    kind: kind.to_string(),
                });
            }
        }
    }
    report
}
