//! Simulated remote attestation.
//!
//! A report binds the SHA-256 measurement of the enclave's code manifest to a
//! verifier's fresh nonce and to key material for the session. A fixed
//! platform key stands in for the hardware vendor's signing key, and the
//! "secure channel" is a SHA-256 keystream with an appended tag. Both only
//! model the message flow and sizes of a real TEE; neither is meant to resist
//! an actual attacker.

use std::collections::BTreeSet;

use rand::Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub type Digest = [u8; 32];
pub type Nonce = [u8; 16];

pub const REPORT_BYTES: usize = 32 + 16 + 32 + 32;
pub const TAG_BYTES: usize = 32;

/// Code manifest of the stock enclave build.
pub const DEFAULT_MANIFEST: &[u8] = b"hybridsynth-enclave 1\n\
entry = generate\n\
generators = mwem, measure_generate\n\
release = synthetic-records-only\n";

const PLATFORM_KEY: &[u8] = b"hybridsynth simulated platform key";

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum AttestationError {
    #[error("malformed attestation report")]
    Malformed,
    #[error("report signature does not verify")]
    BadSignature,
    #[error("nonce was not issued or was already used")]
    StaleNonce,
    #[error("enclave measurement does not match the pinned digest")]
    MeasurementMismatch,
    #[error("sealed message failed authentication")]
    BadTag,
}

fn sha256(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

pub fn measure(manifest: &[u8]) -> Digest {
    sha256(&[manifest])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttestationReport {
    pub measurement: Digest,
    pub nonce: Nonce,
    pub key_material: Digest,
    pub signature: Digest,
}

impl AttestationReport {
    fn signature_for(measurement: &Digest, nonce: &Nonce, key_material: &Digest) -> Digest {
        sha256(&[PLATFORM_KEY, measurement, nonce, key_material])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        [
            &self.measurement[..],
            &self.nonce,
            &self.key_material,
            &self.signature,
        ]
        .concat()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AttestationError> {
        if bytes.len() != REPORT_BYTES {
            return Err(AttestationError::Malformed);
        }
        Ok(Self {
            measurement: bytes[0..32].try_into().expect("32 bytes"),
            nonce: bytes[32..48].try_into().expect("16 bytes"),
            key_material: bytes[48..80].try_into().expect("32 bytes"),
            signature: bytes[80..112].try_into().expect("32 bytes"),
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SessionKey(Digest);

impl std::fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SessionKey(..)")
    }
}

fn session_key(report: &AttestationReport) -> SessionKey {
    SessionKey(sha256(&[
        b"session",
        &report.measurement,
        &report.nonce,
        &report.key_material,
    ]))
}

/// The enclave side: measures what it loaded and answers challenges.
pub struct Enclave {
    measurement: Digest,
}

impl Enclave {
    pub fn load(manifest: &[u8]) -> Self {
        Self {
            measurement: measure(manifest),
        }
    }

    pub fn measurement(&self) -> Digest {
        self.measurement
    }

    /// Answers a challenge and returns the report with the session key the
    /// enclave will use with that verifier.
    pub fn attest<R: Rng + ?Sized>(
        &self,
        nonce: Nonce,
        rng: &mut R,
    ) -> (AttestationReport, SessionKey) {
        let mut key_material = [0u8; 32];
        rng.fill(&mut key_material);
        let report = AttestationReport {
            measurement: self.measurement,
            nonce,
            key_material,
            signature: AttestationReport::signature_for(&self.measurement, &nonce, &key_material),
        };
        let key = session_key(&report);
        (report, key)
    }
}

/// The relying party: pins the expected measurement and tracks the nonces
/// it has issued. Each nonce is good for one report.
pub struct Verifier {
    expected: Digest,
    outstanding: BTreeSet<Nonce>,
}

impl Verifier {
    pub fn new(expected: Digest) -> Self {
        Self {
            expected,
            outstanding: BTreeSet::new(),
        }
    }

    pub fn challenge<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Nonce {
        let mut nonce = [0u8; 16];
        rng.fill(&mut nonce);
        self.outstanding.insert(nonce);
        nonce
    }

    pub fn verify(&mut self, report: &AttestationReport) -> Result<SessionKey, AttestationError> {
        let expected_sig = AttestationReport::signature_for(
            &report.measurement,
            &report.nonce,
            &report.key_material,
        );
        if expected_sig != report.signature {
            return Err(AttestationError::BadSignature);
        }
        if !self.outstanding.remove(&report.nonce) {
            return Err(AttestationError::StaleNonce);
        }
        if report.measurement != self.expected {
            return Err(AttestationError::MeasurementMismatch);
        }
        Ok(session_key(report))
    }
}

fn keystream_xor(key: &SessionKey, counter: u64, data: &mut [u8]) {
    for (block, chunk) in data.chunks_mut(32).enumerate() {
        let pad = sha256(&[
            &key.0,
            &counter.to_be_bytes(),
            &(block as u64).to_be_bytes(),
        ]);
        for (b, p) in chunk.iter_mut().zip(pad) {
            *b ^= p;
        }
    }
}

/// Encrypts and tags `plaintext`; adds [`TAG_BYTES`].
pub fn seal(key: &SessionKey, counter: u64, plaintext: &[u8]) -> Vec<u8> {
    let mut out = plaintext.to_vec();
    keystream_xor(key, counter, &mut out);
    let tag = sha256(&[b"tag", &key.0, &counter.to_be_bytes(), &out]);
    out.extend_from_slice(&tag);
    out
}

pub fn open(key: &SessionKey, counter: u64, sealed: &[u8]) -> Result<Vec<u8>, AttestationError> {
    if sealed.len() < TAG_BYTES {
        return Err(AttestationError::BadTag);
    }
    let (body, tag) = sealed.split_at(sealed.len() - TAG_BYTES);
    if sha256(&[b"tag", &key.0, &counter.to_be_bytes(), body]) != tag {
        return Err(AttestationError::BadTag);
    }
    let mut out = body.to_vec();
    keystream_xor(key, counter, &mut out);
    Ok(out)
}
