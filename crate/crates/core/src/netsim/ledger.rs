use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::EndpointId;

/// Wall clock for real measurements; frozen pins every `time_ms` to zero so
/// that metrics files from identical runs compare byte for byte.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    Wall,
    Frozen,
}

impl ClockMode {
    fn start(self) -> Option<Instant> {
        match self {
            ClockMode::Wall => Some(Instant::now()),
            ClockMode::Frozen => None,
        }
    }
}

/// Counters for one protocol phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseMetrics {
    pub phase: String,
    pub time_ms: u64,
    pub rounds: u64,
    pub frames: u64,
    /// Bytes sent, per endpoint.
    pub sent: BTreeMap<EndpointId, u64>,
    /// Bytes received, per endpoint.
    pub received: BTreeMap<EndpointId, u64>,
    pub global_bytes: u64,
}

impl PhaseMetrics {
    pub fn empty(phase: &str) -> Self {
        Self {
            phase: phase.to_string(),
            time_ms: 0,
            rounds: 0,
            frames: 0,
            sent: BTreeMap::new(),
            received: BTreeMap::new(),
            global_bytes: 0,
        }
    }

    /// Sent plus received bytes at one endpoint.
    pub fn local_bytes(&self, id: EndpointId) -> u64 {
        self.sent.get(&id).copied().unwrap_or(0) + self.received.get(&id).copied().unwrap_or(0)
    }

    pub fn sent_total(&self) -> u64 {
        self.sent.values().sum()
    }

    pub fn received_total(&self) -> u64 {
        self.received.values().sum()
    }

    /// Global bytes equal both the sent and the received totals.
    pub fn is_conserved(&self) -> bool {
        self.global_bytes == self.sent_total() && self.global_bytes == self.received_total()
    }

    /// Sums several phases under a new name.
    pub fn combine(name: &str, phases: &[&PhaseMetrics]) -> Self {
        let mut out = Self::empty(name);
        for p in phases {
            out.time_ms += p.time_ms;
            out.rounds += p.rounds;
            out.frames += p.frames;
            out.global_bytes += p.global_bytes;
            for (id, b) in &p.sent {
                *out.sent.entry(*id).or_default() += b;
            }
            for (id, b) in &p.received {
                *out.received.entry(*id).or_default() += b;
            }
        }
        out
    }

    pub fn record(&self, run_id: &str, player0: EndpointId) -> LedgerRecord {
        let endpoints: Vec<EndpointId> = self
            .sent
            .keys()
            .chain(self.received.keys())
            .copied()
            .collect();
        LedgerRecord {
            run_id: run_id.to_string(),
            phase: self.phase.clone(),
            time_ms: self.time_ms,
            rounds: self.rounds,
            local_bytes_player0: self.local_bytes(player0),
            global_bytes: self.global_bytes,
            local_bytes: endpoints
                .into_iter()
                .map(|id| (id, self.local_bytes(id)))
                .collect(),
        }
    }
}

/// One exported line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub run_id: String,
    pub phase: String,
    pub time_ms: u64,
    pub rounds: u64,
    pub local_bytes_player0: u64,
    pub global_bytes: u64,
    pub local_bytes: BTreeMap<EndpointId, u64>,
}

#[derive(Debug, Clone)]
pub struct MetricsLedger {
    clock: ClockMode,
    current: PhaseMetrics,
    /// Unset under a frozen clock, which never reads time.
    started: Option<Instant>,
    completed: Vec<PhaseMetrics>,
}

impl MetricsLedger {
    pub fn new(clock: ClockMode) -> Self {
        Self {
            clock,
            current: PhaseMetrics::empty("setup"),
            started: clock.start(),
            completed: Vec::new(),
        }
    }

    pub fn clock(&self) -> ClockMode {
        self.clock
    }

    pub(crate) fn record_frame(
        &mut self,
        from: EndpointId,
        to: EndpointId,
        sent: u64,
        received: u64,
    ) {
        let c = &mut self.current;
        c.frames += 1;
        c.global_bytes += sent;
        *c.sent.entry(from).or_default() += sent;
        *c.received.entry(to).or_default() += received;
    }

    pub(crate) fn record_round(&mut self) {
        self.current.rounds += 1;
    }

    fn elapsed_ms(&self) -> u64 {
        match self.clock {
            ClockMode::Wall => self.started.map_or(0, |s| s.elapsed().as_millis() as u64),
            ClockMode::Frozen => 0,
        }
    }

    /// Current phase counters, timed up to now.
    pub fn snapshot(&self) -> PhaseMetrics {
        let mut snap = self.current.clone();
        snap.time_ms = self.elapsed_ms();
        snap
    }

    /// Closes the current phase and opens a fresh one. The "setup" phase is
    /// dropped if nothing happened in it.
    pub fn reset(&mut self, phase: &str) {
        let closed = self.snapshot();
        let idle = closed.phase == "setup" && closed.frames == 0 && closed.rounds == 0;
        if !idle {
            self.completed.push(closed);
        }
        self.current = PhaseMetrics::empty(phase);
        self.started = self.clock.start();
    }

    pub fn current_phase(&self) -> &str {
        &self.current.phase
    }

    pub fn completed(&self) -> &[PhaseMetrics] {
        &self.completed
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseMetrics> {
        self.completed.iter().find(|p| p.phase == name)
    }

    pub fn write_jsonl<W: Write>(
        &self,
        run_id: &str,
        player0: EndpointId,
        mut sink: W,
    ) -> std::io::Result<()> {
        for phase in &self.completed {
            serde_json::to_writer(&mut sink, &phase.record(run_id, player0))?;
            sink.write_all(b"\n")?;
        }
        Ok(())
    }
}
