use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{
    derive_rng, match_agents, open, run_selection, seal, AgentError, AttestationReport, Enclave,
    Exclusion, Pod, ProtocolConfig, Roster, SessionKey, TransportKind, Verifier,
};
use crate::datamodel::{
    build_histogram, load_dataset, write_dataset, Histogram, Marginal, Record, Schema,
};
use crate::netsim::{
    EndpointId, Envelope, Frame, MetricsLedger, MsgType, Network, PhaseMetrics, TcpLoopback,
    TranscriptEntry,
};
use crate::secretsharing::{
    decode_count, encode_count, reconstruct_vectors, share_vector, PrimeField, ShareVector,
};
use crate::synthgen::{generate, GenerationOutput};

/// Phases whose traffic belongs to the secure-computation part of a run.
pub const MPC_PHASES: [&str; 4] = ["sharing", "selection", "attestation", "reveal"];

/// Endpoint numbering: computation agents first (so player 0 is the first
/// computation agent), then encryption agents, then the orchestrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub computation: usize,
    pub encryption: usize,
}

impl Layout {
    pub fn computation_agent(&self, i: usize) -> EndpointId {
        i as EndpointId
    }

    pub fn encryption_agent(&self, k: usize) -> EndpointId {
        (self.computation + k) as EndpointId
    }

    pub fn orchestrator(&self) -> EndpointId {
        (self.computation + self.encryption) as EndpointId
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub agent: String,
    pub sender: EndpointId,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptionReport {
    pub processed: Vec<usize>,
    pub denied: Vec<usize>,
}

/// Reads each assigned pod, bins it into the marginals, shares the
/// concatenated counts and sends share vector `j` to `players[j]`. Pods the
/// agent may not read are skipped and reported.
#[allow(clippy::too_many_arguments)]
pub fn run_encryption_task<R: Rng + ?Sized>(
    agent: &str,
    endpoint: EndpointId,
    pods: &mut [Pod],
    assigned: &[usize],
    schema: &Schema,
    marginals: &[Marginal],
    field: PrimeField,
    threshold: usize,
    players: &[EndpointId],
    net: &mut Network,
    rng: &mut R,
) -> Result<EncryptionReport, AgentError> {
    let mut report = EncryptionReport::default();
    for &p in assigned {
        let records = match pods[p].read(agent) {
            Ok(records) => records,
            Err(AgentError::AccessDenied { .. }) => {
                report.denied.push(p);
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut secrets = Vec::new();
        for m in marginals {
            for count in build_histogram(records, m, schema).counts {
                secrets.push(encode_count(field, count)?);
            }
        }
        let vectors = share_vector(field, &secrets, threshold, players.len(), rng)?;
        for (vector, &player) in vectors.iter().zip(players) {
            net.send(
                player,
                Frame::new(MsgType::ShareVector, endpoint, vector.to_bytes()),
            )?;
        }
        report.processed.push(p);
    }
    Ok(report)
}

/// A protocol player. It only ever holds its own running sum of shares.
#[derive(Debug, Clone)]
pub struct ComputationAgent {
    pub name: String,
    pub endpoint: EndpointId,
    field: PrimeField,
    accumulator: ShareVector,
    contributions: usize,
    rejected: Vec<Rejection>,
}

impl ComputationAgent {
    pub fn new(
        name: &str,
        endpoint: EndpointId,
        index: usize,
        field: PrimeField,
        threshold: usize,
        cells: usize,
    ) -> Self {
        Self {
            name: name.to_string(),
            endpoint,
            field,
            accumulator: ShareVector::zeros(field, index as u64 + 1, threshold, cells),
            contributions: 0,
            rejected: Vec::new(),
        }
    }

    /// Adds one incoming share vector to the running sum, or logs why it was
    /// refused.
    pub fn aggregate(&mut self, env: &Envelope) {
        let parsed =
            ShareVector::from_bytes(self.field, self.accumulator.threshold, &env.frame.payload);
        let result = parsed.and_then(|v| self.accumulator.accumulate(&v));
        match result {
            Ok(()) => self.contributions += 1,
            Err(e) => self.rejected.push(Rejection {
                agent: self.name.clone(),
                sender: env.from,
                reason: e.to_string(),
            }),
        }
    }

    pub fn local_share(&self) -> &ShareVector {
        &self.accumulator
    }

    pub fn contributions(&self) -> usize {
        self.contributions
    }

    pub fn rejected(&self) -> &[Rejection] {
        &self.rejected
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditLog {
    pub excluded: Vec<Exclusion>,
    pub access_denied: Vec<String>,
    pub rejected: Vec<Rejection>,
    /// Pods per encryption agent.
    pub tasks: BTreeMap<String, usize>,
    pub computation_agents: Vec<String>,
    pub threshold: usize,
    pub providers_used: usize,
    pub selected: usize,
    pub enclave_agent: String,
    pub measurement: String,
}

/// State after the enclave agent has reconstructed the aggregate. The
/// marginals here exist only inside the enclave; they are exposed for
/// verification against a plaintext oracle.
pub struct RevealedAggregate {
    pub marginals: Vec<Histogram>,
    pub audit: AuditLog,
    /// Endpoints of the computation agents taking part, in share order.
    pub players: Vec<EndpointId>,
    pub enclave: EndpointId,
}

pub struct PipelineOutput {
    /// Schema of the released records (identifying attributes removed).
    pub schema: Schema,
    pub records: Vec<Record>,
    pub generation: GenerationOutput,
    pub ledger: MetricsLedger,
    pub transcript: Vec<TranscriptEntry>,
    pub audit: AuditLog,
    pub layout: Layout,
    pub players: Vec<EndpointId>,
    pub enclave: EndpointId,
}

impl PipelineOutput {
    /// All secure-computation phases summed.
    pub fn mpc_metrics(&self) -> PhaseMetrics {
        let phases: Vec<&PhaseMetrics> = MPC_PHASES
            .iter()
            .filter_map(|p| self.ledger.phase(p))
            .collect();
        PhaseMetrics::combine("mpc", &phases)
    }
}

/// A network with every roster agent and the orchestrator registered.
pub fn open_network(
    config: &ProtocolConfig,
    roster: &Roster,
) -> Result<(Network, Layout), AgentError> {
    let layout = Layout {
        computation: roster.computation.len(),
        encryption: roster.encryption.len(),
    };
    let mut net = match config.transport {
        TransportKind::InProcess => {
            Network::in_process(derive_rng(config.seed, "network").next_u64(), config.clock)
        }
        TransportKind::TcpLoopback => Network::new(Box::new(TcpLoopback::new()), config.clock),
    };
    for (i, name) in roster.computation.iter().enumerate() {
        net.register(layout.computation_agent(i), name, true)?;
    }
    for (k, name) in roster.encryption.iter().enumerate() {
        net.register(layout.encryption_agent(k), name, false)?;
    }
    net.register(layout.orchestrator(), "orchestrator", false)?;
    Ok((net, layout))
}

/// Runs matching, sharing, aggregation, enclave election, attestation and
/// the reveal of the aggregate to the elected enclave agent, on a network
/// from [`open_network`]. On abort the network keeps the transcript so far.
pub fn run_until_reveal(
    config: &ProtocolConfig,
    schema: &Schema,
    pods: &mut [Pod],
    roster: &Roster,
    net: &mut Network,
) -> Result<RevealedAggregate, AgentError> {
    config.validate()?;
    let field = PrimeField::new(config.modulus)?;
    let t = config.threshold()?;
    let marginals = config.workload.resolve(schema)?;
    let cells: usize = marginals.iter().map(Marginal::cell_count).sum();

    // match
    let preferences: Vec<_> = pods.iter().map(|p| p.preference().clone()).collect();
    let matching = match_agents(&preferences, roster, config.n_computation_agents)?;
    if matching.assignments.is_empty() {
        return Err(AgentError::NoData);
    }
    let layout = Layout {
        computation: roster.computation.len(),
        encryption: roster.encryption.len(),
    };
    let players: Vec<EndpointId> = matching
        .computation
        .iter()
        .map(|name| {
            let i = roster
                .computation
                .iter()
                .position(|c| c == name)
                .expect("matched from roster");
            layout.computation_agent(i)
        })
        .collect();
    let used = Roster {
        computation: matching.computation.clone(),
        encryption: roster.encryption.clone(),
    };
    let mut audit = AuditLog {
        excluded: matching.excluded.clone(),
        tasks: matching.load(),
        computation_agents: used.computation.clone(),
        threshold: t,
        ..AuditLog::default()
    };

    // sharing and aggregation
    net.begin_phase("sharing")?;
    let mut agents: Vec<ComputationAgent> = used
        .computation
        .iter()
        .enumerate()
        .map(|(i, name)| ComputationAgent::new(name, players[i], i, field, t, cells))
        .collect();
    for (k, name) in used.encryption.iter().enumerate() {
        let tasks = matching.tasks_for(name);
        if tasks.is_empty() {
            continue;
        }
        let mut rng = derive_rng(config.seed, &format!("encryption/{name}"));
        let endpoint = layout.encryption_agent(k);
        let report = run_encryption_task(
            name, endpoint, pods, &tasks, schema, &marginals, field, t, &players, net, &mut rng,
        )?;
        audit.providers_used += report.processed.len();
        audit
            .access_denied
            .extend(report.denied.iter().map(|&p| pods[p].owner().to_string()));
        let summary = [report.processed.len() as u32, report.denied.len() as u32]
            .iter()
            .flat_map(|v| v.to_be_bytes())
            .collect();
        net.send(
            layout.orchestrator(),
            Frame::new(MsgType::Result, endpoint, summary),
        )?;
    }
    net.advance_round()?;
    for agent in &mut agents {
        for env in net.drain(agent.endpoint) {
            if env.frame.msg_type == MsgType::ShareVector {
                agent.aggregate(&env);
            }
        }
        audit.rejected.extend(agent.rejected().iter().cloned());
    }
    net.drain(layout.orchestrator());
    if audit.providers_used == 0 {
        return Err(AgentError::NoData);
    }

    // election of the enclave agent; the index is public to all players
    net.begin_phase("selection")?;
    let mut rngs: Vec<_> = used
        .computation
        .iter()
        .map(|name| derive_rng(config.seed, &format!("selection/{name}")))
        .collect();
    let contributions: Vec<Option<u64>> = rngs
        .iter_mut()
        .map(|r| Some(r.gen_range(0..players.len() as u64)))
        .collect();
    let chosen = run_selection(
        net,
        &players,
        &contributions,
        players.len() as u64,
        field,
        t,
        &mut rngs,
    )? as usize;
    let enclave_id = players[chosen];
    audit.selected = chosen;
    audit.enclave_agent = used.computation[chosen].clone();

    // attestation: every party that will hand data to the enclave checks it
    net.begin_phase("attestation")?;
    let expected = config.expected_digest()?;
    let enclave = Enclave::load(&config.enclave_manifest);
    audit.measurement = hex::encode(enclave.measurement());
    let mut verifiers: Vec<(EndpointId, String, Verifier)> = Vec::new();
    for (i, name) in used.computation.iter().enumerate() {
        if i != chosen {
            verifiers.push((players[i], name.clone(), Verifier::new(expected)));
        }
    }
    if config.encryption_agents_verify {
        for (k, name) in used.encryption.iter().enumerate() {
            verifiers.push((
                layout.encryption_agent(k),
                name.clone(),
                Verifier::new(expected),
            ));
        }
    }
    for (endpoint, name, verifier) in &mut verifiers {
        let nonce =
            verifier.challenge(&mut derive_rng(config.seed, &format!("attestation/{name}")));
        net.send(
            enclave_id,
            Frame::new(MsgType::Attestation, *endpoint, nonce.to_vec()),
        )?;
    }
    net.advance_round()?;
    let mut enclave_rng = derive_rng(config.seed, "enclave");
    let mut enclave_keys: BTreeMap<EndpointId, SessionKey> = BTreeMap::new();
    let mut challenges = net.drain(enclave_id);
    challenges.sort_by_key(|e| e.from);
    for env in challenges {
        if env.frame.msg_type != MsgType::Attestation {
            continue;
        }
        let nonce =
            env.frame
                .payload
                .as_slice()
                .try_into()
                .map_err(|_| AgentError::AttestationFailed {
                    verifier: audit.enclave_agent.clone(),
                    reason: super::AttestationError::Malformed,
                })?;
        let (report, key) = enclave.attest(nonce, &mut enclave_rng);
        enclave_keys.insert(env.from, key);
        net.send(
            env.from,
            Frame::new(MsgType::Attestation, enclave_id, report.to_bytes()),
        )?;
    }
    net.advance_round()?;
    let mut player_keys: BTreeMap<EndpointId, SessionKey> = BTreeMap::new();
    for (endpoint, name, verifier) in &mut verifiers {
        let fail = |reason| AgentError::AttestationFailed {
            verifier: name.clone(),
            reason,
        };
        let env = net
            .drain(*endpoint)
            .into_iter()
            .find(|e| e.frame.msg_type == MsgType::Attestation)
            .ok_or(fail(super::AttestationError::Malformed))?;
        let report = AttestationReport::from_bytes(&env.frame.payload).map_err(fail)?;
        let key = verifier.verify(&report).map_err(fail)?;
        player_keys.insert(*endpoint, key);
    }

    // reveal to the enclave agent only, over the sealed channel
    net.begin_phase("reveal")?;
    for agent in agents.iter().filter(|a| a.endpoint != enclave_id) {
        let sealed = seal(
            &player_keys[&agent.endpoint],
            0,
            &agent.local_share().to_bytes(),
        );
        net.send(
            enclave_id,
            Frame::new(MsgType::AggregateShare, agent.endpoint, sealed),
        )?;
    }
    net.advance_round()?;
    let mut vectors = vec![agents[chosen].local_share().clone()];
    for env in net.drain(enclave_id) {
        if env.frame.msg_type != MsgType::AggregateShare {
            continue;
        }
        let key = enclave_keys
            .get(&env.from)
            .ok_or(AgentError::Config(format!(
                "aggregate share from unattested endpoint {}",
                env.from
            )))?;
        let plain =
            open(key, 0, &env.frame.payload).map_err(|reason| AgentError::AttestationFailed {
                verifier: audit.enclave_agent.clone(),
                reason,
            })?;
        vectors.push(ShareVector::from_bytes(field, t, &plain)?);
    }
    let counts = reconstruct_vectors(&vectors)?
        .into_iter()
        .map(decode_count)
        .collect::<Result<Vec<u64>, _>>()?;
    let mut offset = 0;
    let revealed = marginals
        .into_iter()
        .map(|m| {
            let len = m.cell_count();
            let h = Histogram {
                counts: counts[offset..offset + len].to_vec(),
                marginal: m,
            };
            offset += len;
            h
        })
        .collect();

    Ok(RevealedAggregate {
        marginals: revealed,
        audit,
        players,
        enclave: enclave_id,
    })
}

/// The whole run: secure aggregation, DP generation inside the enclave
/// agent, and release of the synthetic records to the orchestrator.
pub fn run_pipeline(
    config: &ProtocolConfig,
    schema: &Schema,
    pods: &mut [Pod],
    roster: &Roster,
) -> Result<PipelineOutput, AgentError> {
    let (mut network, layout) = open_network(config, roster)?;
    let RevealedAggregate {
        marginals,
        audit,
        players,
        enclave,
    } = run_until_reveal(config, schema, pods, roster, &mut network)?;

    network.begin_phase("generation")?;
    let mut rng = derive_rng(config.seed, "generation");
    let generation = generate(schema, &marginals, &config.generator, &mut rng)?;
    drop(marginals);

    network.begin_phase("release")?;
    let released = schema.without_pii();
    let mut csv = Vec::new();
    write_dataset(&mut csv, &released, &generation.records)?;
    network.send(
        layout.orchestrator(),
        Frame::new(MsgType::Reveal, enclave, csv),
    )?;
    network.advance_round()?;
    let frame = network
        .drain(layout.orchestrator())
        .into_iter()
        .find(|e| e.frame.msg_type == MsgType::Reveal)
        .ok_or(AgentError::Config("release frame lost".into()))?;
    let records = load_dataset(frame.frame.payload.as_slice(), &released)?.records;

    let (ledger, transcript) = network.finish()?;
    Ok(PipelineOutput {
        schema: released,
        records,
        generation,
        ledger,
        transcript,
        audit,
        layout,
        players,
        enclave,
    })
}
