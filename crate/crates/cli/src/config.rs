use std::path::{Path, PathBuf};

use hybridsynth::agents::ProtocolConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    SimulatedUniform {
        lo: f64,
        hi: f64,
        bins: usize,
    },
    SimulatedSkewed {
        lo: f64,
        hi: f64,
        bins: usize,
        skew: f64,
    },
    Csv {
        path: PathBuf,
        schema: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionStrategy {
    /// `total` records split evenly; for CSV input, omitting it uses every row.
    FixedTotal {
        total: Option<usize>,
    },
    VariableTotal {
        per_provider: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSource,
    pub partition: PartitionStrategy,
    /// Provider counts to sweep.
    pub providers: Vec<usize>,
    /// Generator iteration counts to sweep; empty means the single value in
    /// `protocol.generator.iterations`.
    pub iterations: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub parallel: bool,
    /// File holding the enclave code manifest; its digest must match
    /// `protocol.expected_measurement`.
    pub enclave_manifest: Option<PathBuf>,
    pub protocol: ProtocolConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            dataset: DatasetSource::SimulatedUniform {
                lo: 0.0,
                hi: 100.0,
                bins: 10,
            },
            partition: PartitionStrategy::FixedTotal {
                total: Some(10_000),
            },
            providers: vec![100],
            iterations: Vec::new(),
            repetitions: 1,
            seed: 0,
            output: PathBuf::from("out"),
            parallel: false,
            enclave_manifest: None,
            protocol: ProtocolConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        // relative paths inside the file are relative to the file
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSource::Csv { path, schema } = &mut self.dataset {
            fix(path);
            fix(schema);
        }
        if let Some(m) = &mut self.enclave_manifest {
            fix(m);
        }
    }

    pub fn iteration_sweep(&self) -> Vec<usize> {
        if self.iterations.is_empty() {
            vec![self.protocol.generator.iterations]
        } else {
            self.iterations.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.providers.is_empty() || self.providers.contains(&0) {
            return bad("providers must be a non-empty list of positive counts");
        }
        if self.iteration_sweep().contains(&0) {
            return bad("iterations must be at least 1");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if let DatasetSource::SimulatedUniform { lo, hi, bins }
        | DatasetSource::SimulatedSkewed { lo, hi, bins, .. } = &self.dataset
        {
            if !(lo < hi) || *bins == 0 {
                return bad("simulated dataset needs lo < hi and bins >= 1");
            }
        }
        if let DatasetSource::SimulatedSkewed { skew, .. } = &self.dataset {
            if !(*skew > 0.0 && skew.is_finite()) {
                return bad("skew must be positive");
            }
        }
        self.protocol
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// SHA-256 of the resolved configuration, embedded in every record.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
