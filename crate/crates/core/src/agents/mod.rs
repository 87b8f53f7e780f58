//! Pipeline roles: data pods, encryption agents that bin and share,
//! computation agents that aggregate shares and elect an enclave agent, and
//! the enclave agent that reconstructs the aggregate and runs the DP
//! generator.

mod attestation;
mod audit;
mod matching;
mod pipeline;
mod pod;
mod selection;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::datamodel::{DataError, Marginal, Schema};
use crate::netsim::{ClockMode, EndpointId, NetError};
use crate::secretsharing::{SharingError, MERSENNE_61};
use crate::synthgen::{GeneratorConfig, SynthError};

pub use attestation::{
    measure, open, seal, AttestationError, AttestationReport, Digest, Enclave, Nonce, SessionKey,
    Verifier, DEFAULT_MANIFEST, REPORT_BYTES, TAG_BYTES,
};
pub use audit::{excluded_reads, input_privacy_violations};
pub use matching::{match_agents, Exclusion, ExclusionReason, Matching};
pub use pipeline::{
    open_network, run_encryption_task, run_pipeline, run_until_reveal, AuditLog, ComputationAgent,
    EncryptionReport, Layout, PipelineOutput, Rejection, RevealedAggregate, MPC_PHASES,
};
pub use pod::{
    provider_pods, AccessEntry, Pod, PodStore, PreferenceFile, ResourceDescription, ResourceEntry,
    Roster, RESOURCES_FILE,
};
pub use selection::{combine_contributions, joint_random_select, run_selection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("roster is empty")]
    EmptyRoster,
    #[error("no computation agents trusted by all providers: need {needed}, found {available}")]
    NoComputationAgentsTrustedByAll { needed: usize, available: usize },
    #[error("no eligible provider data")]
    NoData,
    #[error("agent {agent} has no read grant on pod {pod}")]
    AccessDenied { pod: String, agent: String },
    #[error("selection contribution from endpoint {0} is missing")]
    MissingContribution(EndpointId),
    #[error("attestation failed at {verifier}: {reason}")]
    AttestationFailed {
        verifier: String,
        reason: AttestationError,
    },
    #[error("unresolvable resource {0}")]
    UnresolvableResource(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Sharing(#[from] SharingError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl AgentError {
    pub(crate) fn io(path: &std::path::Path) -> impl Fn(std::io::Error) -> AgentError + '_ {
        move |e| AgentError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Which marginals the encryption agents compute.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadSpec {
    /// One histogram over every releasable attribute.
    #[default]
    Full,
    /// Every `k`-way marginal.
    KWay {
        k: usize,
    },
    Explicit {
        marginals: Vec<Vec<String>>,
    },
}

impl WorkloadSpec {
    pub fn resolve(&self, schema: &Schema) -> Result<Vec<Marginal>, DataError> {
        match self {
            WorkloadSpec::Full => Ok(vec![Marginal::full(schema)?]),
            WorkloadSpec::KWay { k } => Marginal::all_k_way(schema, *k),
            WorkloadSpec::Explicit { marginals } => marginals
                .iter()
                .map(|names| {
                    let names: Vec<&str> = names.iter().map(String::as_str).collect();
                    Marginal::by_names(schema, &names)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    InProcess,
    TcpLoopback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub n_computation_agents: usize,
    pub n_encryption_agents: usize,
    /// Polynomial degree `t`; defaults to `floor((n - 1) / 2)`.
    pub threshold: Option<usize>,
    pub modulus: u64,
    pub workload: WorkloadSpec,
    pub generator: GeneratorConfig,
    pub seed: u64,
    /// Encryption agents also check the enclave's attestation.
    pub encryption_agents_verify: bool,
    /// Hex SHA-256 of the enclave manifest every verifier expects. Defaults
    /// to the digest of [`DEFAULT_MANIFEST`].
    pub expected_measurement: Option<String>,
    /// The manifest the enclave host actually loads.
    #[serde(skip)]
    pub enclave_manifest: Vec<u8>,
    pub clock: ClockMode,
    pub transport: TransportKind,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            n_computation_agents: 3,
            n_encryption_agents: 2,
            threshold: None,
            modulus: MERSENNE_61,
            workload: WorkloadSpec::Full,
            generator: GeneratorConfig::default(),
            seed: 0,
            encryption_agents_verify: true,
            expected_measurement: None,
            enclave_manifest: DEFAULT_MANIFEST.to_vec(),
            clock: ClockMode::Wall,
            transport: TransportKind::InProcess,
        }
    }
}

impl ProtocolConfig {
    pub fn threshold(&self) -> Result<usize, AgentError> {
        let n = self.n_computation_agents;
        if n == 0 {
            return Err(AgentError::Config(
                "at least one computation agent is required".into(),
            ));
        }
        let t = self.threshold.unwrap_or((n - 1) / 2);
        if t >= n {
            return Err(AgentError::Config(format!(
                "threshold {t} must be below {n} computation agents"
            )));
        }
        Ok(t)
    }

    pub fn expected_digest(&self) -> Result<Digest, AgentError> {
        match &self.expected_measurement {
            None => Ok(measure(DEFAULT_MANIFEST)),
            Some(text) => {
                let bytes = hex::decode(text.trim())
                    .map_err(|e| AgentError::Config(format!("expected_measurement: {e}")))?;
                bytes
                    .try_into()
                    .map_err(|_| AgentError::Config("expected_measurement must be 32 bytes".into()))
            }
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        self.threshold()?;
        self.expected_digest()?;
        if self.n_encryption_agents == 0 {
            return Err(AgentError::Config(
                "at least one encryption agent is required".into(),
            ));
        }
        if self.generator.epsilon <= 0.0 || !self.generator.epsilon.is_finite() {
            return Err(AgentError::Config("epsilon must be positive".into()));
        }
        if self.generator.iterations == 0 {
            return Err(AgentError::Config("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// An independent generator for one labelled stream of a seeded run.
pub fn derive_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(label.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}
