use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AgentError, PreferenceFile, Roster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    EmptyPreference,
    NoTrustedEncryptionAgent,
    NoTrustedComputationAgent,
}

/// A provider left out of the run. Its data is never read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub provider: usize,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    /// `(provider, encryption agent)` for every included provider, in
    /// provider order.
    pub assignments: Vec<(usize, String)>,
    pub excluded: Vec<Exclusion>,
    /// Computation agents trusted by every included provider.
    pub computation: Vec<String>,
}

impl Matching {
    pub fn tasks_for(&self, agent: &str) -> Vec<usize> {
        self.assignments
            .iter()
            .filter(|(_, a)| a == agent)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn load(&self) -> BTreeMap<String, usize> {
        let mut load = BTreeMap::new();
        for (_, agent) in &self.assignments {
            *load.entry(agent.clone()).or_default() += 1;
        }
        load
    }
}

/// Assigns each provider one trusted encryption agent from the roster,
/// balancing load round-robin, and picks `n_computation` computation agents
/// trusted by every included provider. Providers with nothing usable in the
/// roster are excluded rather than failing the run.
pub fn match_agents(
    preferences: &[PreferenceFile],
    roster: &Roster,
    n_computation: usize,
) -> Result<Matching, AgentError> {
    if roster.is_empty() {
        return Err(AgentError::EmptyRoster);
    }
    let mut included: Vec<(usize, Vec<&String>)> = Vec::new();
    let mut excluded = Vec::new();
    for (provider, pref) in preferences.iter().enumerate() {
        let exclude = |reason| Exclusion { provider, reason };
        if !pref.is_eligible() {
            excluded.push(exclude(ExclusionReason::EmptyPreference));
            continue;
        }
        let encryption: Vec<&String> = roster
            .encryption
            .iter()
            .filter(|a| pref.trusted_encryption_agents.contains(*a))
            .collect();
        if encryption.is_empty() {
            excluded.push(exclude(ExclusionReason::NoTrustedEncryptionAgent));
            continue;
        }
        if !roster
            .computation
            .iter()
            .any(|a| pref.trusted_computation_agents.contains(a))
        {
            excluded.push(exclude(ExclusionReason::NoTrustedComputationAgent));
            continue;
        }
        included.push((provider, encryption));
    }

    let common: Vec<String> = roster
        .computation
        .iter()
        .filter(|a| {
            included
                .iter()
                .all(|(p, _)| preferences[*p].trusted_computation_agents.contains(*a))
        })
        .cloned()
        .collect();
    if !included.is_empty() && common.len() < n_computation {
        return Err(AgentError::NoComputationAgentsTrustedByAll {
            needed: n_computation,
            available: common.len(),
        });
    }

    let mut load: BTreeMap<&String, usize> = BTreeMap::new();
    let mut assignments = Vec::with_capacity(included.len());
    for (provider, candidates) in included {
        // least loaded first; ties go to roster order
        let agent = candidates
            .iter()
            .min_by_key(|a| load.get(*a).copied().unwrap_or(0))
            .expect("non-empty");
        *load.entry(agent).or_default() += 1;
        assignments.push((provider, (*agent).clone()));
    }

    Ok(Matching {
        assignments,
        excluded,
        computation: common.into_iter().take(n_computation).collect(),
    })
}
