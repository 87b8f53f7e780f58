use std::collections::{BTreeMap, BTreeSet};

use super::{Exclusion, Pod};
use crate::netsim::{EndpointId, MsgType, TranscriptEntry};
use crate::secretsharing::SHARE_BYTES;

/// Checks a transcript for the input-privacy property. Returns one line per
/// violation; empty means the transcript is clean.
///
/// * Across all share-vector frames a player receives, at most `threshold`
///   distinct evaluation points appear, so it never holds enough shares of
///   any provider's histogram to interpolate.
/// * Aggregate shares go only to `enclave`, and only at a barrier after the
///   enclave answered an attestation challenge.
pub fn input_privacy_violations(
    transcript: &[TranscriptEntry],
    players: &[EndpointId],
    threshold: usize,
    enclave: Option<EndpointId>,
) -> Vec<String> {
    let mut violations = Vec::new();
    let mut points: BTreeMap<EndpointId, BTreeSet<u64>> = BTreeMap::new();
    let attested_at = transcript
        .iter()
        .filter(|e| e.msg_type == MsgType::Attestation && Some(e.from) == enclave)
        .map(|e| e.barrier)
        .min();
    for e in transcript {
        match e.msg_type {
            MsgType::ShareVector if players.contains(&e.to) => {
                let set = points.entry(e.to).or_default();
                for chunk in e.payload.chunks_exact(SHARE_BYTES) {
                    set.insert(u64::from_be_bytes(chunk[..8].try_into().expect("8 bytes")));
                }
            }
            MsgType::AggregateShare => {
                if Some(e.to) != enclave {
                    violations.push(format!(
                        "aggregate share delivered to non-enclave endpoint {}",
                        e.to
                    ));
                } else if attested_at.is_none_or(|b| e.barrier <= b) {
                    violations.push(format!(
                        "aggregate share from {} before attestation",
                        e.from
                    ));
                }
            }
            _ => {}
        }
    }
    for (player, set) in points {
        if set.len() > threshold {
            violations.push(format!(
                "player {player} received shares at {} evaluation points (threshold {threshold})",
                set.len()
            ));
        }
    }
    violations
}

/// Owners of excluded pods that were nevertheless read.
pub fn excluded_reads(pods: &[Pod], excluded: &[Exclusion]) -> Vec<String> {
    excluded
        .iter()
        .filter(|x| !pods[x.provider].access_log().is_empty())
        .map(|x| pods[x.provider].owner().to_string())
        .collect()
}
