use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::datamodel::{load_dataset, write_dataset, Record, Schema};

/// The agents a provider is willing to delegate to.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceFile {
    pub trusted_encryption_agents: BTreeSet<String>,
    pub trusted_computation_agents: BTreeSet<String>,
}

impl PreferenceFile {
    pub fn new<E, C>(encryption: E, computation: C) -> Self
    where
        E: IntoIterator,
        E::Item: Into<String>,
        C: IntoIterator,
        C::Item: Into<String>,
    {
        Self {
            trusted_encryption_agents: encryption.into_iter().map(Into::into).collect(),
            trusted_computation_agents: computation.into_iter().map(Into::into).collect(),
        }
    }

    pub fn trust_all(roster: &Roster) -> Self {
        Self::new(
            roster.encryption.iter().cloned(),
            roster.computation.iter().cloned(),
        )
    }

    /// Both sets are non-empty.
    pub fn is_eligible(&self) -> bool {
        !self.trusted_encryption_agents.is_empty() && !self.trusted_computation_agents.is_empty()
    }
}

/// Agents available for a run, by role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    pub computation: Vec<String>,
    pub encryption: Vec<String>,
}

impl Roster {
    /// `C0..C{n-1}` and `E0..E{m-1}`.
    pub fn standard(computation: usize, encryption: usize) -> Self {
        Self {
            computation: (0..computation).map(|i| format!("C{i}")).collect(),
            encryption: (0..encryption).map(|i| format!("E{i}")).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.computation.is_empty() && self.encryption.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessEntry {
    pub agent: String,
    pub granted: bool,
}

/// A provider's data store. Records are only handed to agents holding a
/// read grant; every attempt is logged.
#[derive(Debug, Clone, PartialEq)]
pub struct Pod {
    owner: String,
    records: Vec<Record>,
    preference: PreferenceFile,
    grants: BTreeSet<String>,
    access_log: Vec<AccessEntry>,
}

impl Pod {
    pub fn new(
        owner: &str,
        records: Vec<Record>,
        preference: PreferenceFile,
        grants: BTreeSet<String>,
    ) -> Self {
        Self {
            owner: owner.to_string(),
            records,
            preference,
            grants,
            access_log: Vec::new(),
        }
    }

    /// Grants read access to every trusted encryption agent, which is what a
    /// provider does when delegating.
    pub fn delegating(owner: &str, records: Vec<Record>, preference: PreferenceFile) -> Self {
        let grants = preference.trusted_encryption_agents.clone();
        Self::new(owner, records, preference, grants)
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn preference(&self) -> &PreferenceFile {
        &self.preference
    }

    pub fn grants(&self) -> &BTreeSet<String> {
        &self.grants
    }

    pub fn revoke(&mut self, agent: &str) {
        self.grants.remove(agent);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn read(&mut self, agent: &str) -> Result<&[Record], AgentError> {
        let granted = self.grants.contains(agent);
        self.access_log.push(AccessEntry {
            agent: agent.to_string(),
            granted,
        });
        if granted {
            Ok(&self.records)
        } else {
            Err(AgentError::AccessDenied {
                pod: self.owner.clone(),
                agent: agent.to_string(),
            })
        }
    }

    pub fn access_log(&self) -> &[AccessEntry] {
        &self.access_log
    }
}

/// One pod per group of records, owned by `p0`, `p1`, ..., each trusting
/// and granting the whole roster.
pub fn provider_pods(groups: Vec<Vec<Record>>, roster: &Roster) -> Vec<Pod> {
    let preference = PreferenceFile::trust_all(roster);
    groups
        .into_iter()
        .enumerate()
        .map(|(i, records)| Pod::delegating(&format!("p{i}"), records, preference.clone()))
        .collect()
}

/// One line of a resource description: where a pod's records and
/// preference file live, relative to the description, and who may read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceEntry {
    pub pod: String,
    pub records: String,
    pub preference: String,
    #[serde(default)]
    pub grants: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceDescription {
    #[serde(rename = "resource", default)]
    pub entries: Vec<ResourceEntry>,
}

pub const RESOURCES_FILE: &str = "resources.toml";

/// Pods laid out as a directory: `resources.toml` plus one subdirectory per
/// pod holding `records.csv` and `preference.toml`.
pub struct PodStore;

impl PodStore {
    pub fn save_dir(dir: &Path, schema: &Schema, pods: &[Pod]) -> Result<(), AgentError> {
        let mut description = ResourceDescription::default();
        for pod in pods {
            let sub = dir.join(&pod.owner);
            fs::create_dir_all(&sub).map_err(AgentError::io(&sub))?;
            let records = sub.join("records.csv");
            let file = fs::File::create(&records).map_err(AgentError::io(&records))?;
            write_dataset(file, schema, &pod.records)?;
            let preference = sub.join("preference.toml");
            let text =
                toml::to_string(&pod.preference).map_err(|e| AgentError::Config(e.to_string()))?;
            fs::write(&preference, text).map_err(AgentError::io(&preference))?;
            description.entries.push(ResourceEntry {
                pod: pod.owner.clone(),
                records: format!("{}/records.csv", pod.owner),
                preference: format!("{}/preference.toml", pod.owner),
                grants: pod.grants.clone(),
            });
        }
        let path = dir.join(RESOURCES_FILE);
        let text = toml::to_string(&description).map_err(|e| AgentError::Config(e.to_string()))?;
        fs::write(&path, text).map_err(AgentError::io(&path))
    }

    pub fn load_dir(dir: &Path, schema: &Schema) -> Result<Vec<Pod>, AgentError> {
        let path = dir.join(RESOURCES_FILE);
        let text = fs::read_to_string(&path).map_err(AgentError::io(&path))?;
        let description: ResourceDescription = toml::from_str(&text)
            .map_err(|e| AgentError::Config(format!("{}: {e}", path.display())))?;
        let resolve = |rel: &str| -> Result<PathBuf, AgentError> {
            let p = dir.join(rel);
            if p.is_file() {
                Ok(p)
            } else {
                Err(AgentError::UnresolvableResource(rel.to_string()))
            }
        };
        description
            .entries
            .into_iter()
            .map(|entry| {
                let records_path = resolve(&entry.records)?;
                let preference_path = resolve(&entry.preference)?;
                let file = fs::File::open(&records_path).map_err(AgentError::io(&records_path))?;
                let records = load_dataset(file, schema)?.records;
                let text = fs::read_to_string(&preference_path)
                    .map_err(AgentError::io(&preference_path))?;
                let preference: PreferenceFile =
                    toml::from_str(&text).map_err(|e| AgentError::Config(e.to_string()))?;
                Ok(Pod::new(&entry.pod, records, preference, entry.grants))
            })
            .collect()
    }
}
