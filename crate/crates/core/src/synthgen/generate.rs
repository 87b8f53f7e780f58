use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    measure_generate, mwem_from_answers, sample_records, Distribution, MwemOutput, MwemParams,
    MwemTrace, SynthError, Workload,
};
use crate::datamodel::{Histogram, Marginal, Record, Schema};
use crate::dpcore::{NoisyMeasurement, PrivacyBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Mwem,
    MeasureGenerate,
}

/// Everything the enclave needs to turn aggregate marginals into a release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub epsilon: f64,
    /// MWEM rounds `T`.
    pub iterations: usize,
    /// Passes over the measurements when fitting (measure-generate only).
    pub fit_iterations: usize,
    pub synthetic_records: usize,
    pub output: MwemOutput,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Mwem,
            epsilon: 2.0,
            iterations: 30,
            fit_iterations: 20,
            synthetic_records: 1000,
            output: MwemOutput::Last,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutput {
    pub distribution: Distribution,
    pub records: Vec<Record>,
    /// MWEM's per-round selections and noisy answers.
    pub trace: Option<MwemTrace>,
    /// Measure-generate's noisy cells.
    pub measurements: Vec<NoisyMeasurement>,
    pub budget: PrivacyBudget,
}

/// Runs the configured generator on aggregate marginal histograms and samples
/// synthetic records over the releasable attributes of `schema`.
///
/// MWEM treats every cell of every marginal as a workload query and takes the
/// record count as public, as the algorithm assumes.
pub fn generate<R: Rng + ?Sized>(
    schema: &Schema,
    marginals: &[Histogram],
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<GenerationOutput, SynthError> {
    let first = marginals.first().ok_or(SynthError::NoMarginals)?;
    let full = Marginal::full(schema)?;
    let mut budget = PrivacyBudget::new(config.epsilon)?;

    let (distribution, trace, measurements) = match config.kind {
        GeneratorKind::Mwem => {
            let specs: Vec<Marginal> = marginals.iter().map(|h| h.marginal.clone()).collect();
            let workload = Workload::marginal_cells(&full, &specs)?;
            let answers: Vec<f64> = marginals
                .iter()
                .flat_map(|h| h.counts.iter().map(|&c| c as f64))
                .collect();
            let total = first.total();
            if total == 0 {
                return Err(SynthError::EmptyHistogram);
            }
            let params = MwemParams {
                epsilon: config.epsilon,
                iterations: config.iterations,
                output: config.output,
            };
            let (dist, trace) = mwem_from_answers(
                &answers,
                total as f64,
                &workload,
                params,
                rng,
                &mut budget,
                None,
            )?;
            (dist, Some(trace), Vec::new())
        }
        GeneratorKind::MeasureGenerate => {
            let out = measure_generate(
                marginals,
                &full,
                config.epsilon,
                config.fit_iterations,
                rng,
                &mut budget,
            )?;
            (out.distribution, None, out.measurements)
        }
    };

    let records = sample_records(&distribution, config.synthetic_records, &full, schema, rng)?;
    Ok(GenerationOutput {
        distribution,
        records,
        trace,
        measurements,
        budget,
    })
}
