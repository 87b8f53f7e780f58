use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{tv_error_weights, Distribution, SynthError, Workload};
use crate::datamodel::Histogram;
use crate::dpcore::{
    exponential_mechanism, laplace_mechanism, DpError, NoisyMeasurement, PrivacyBudget,
    COUNT_SENSITIVITY,
};

/// Which estimate MWEM releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwemOutput {
    /// The estimate after the final round.
    #[default]
    Last,
    /// The average of the estimates after rounds 1..=T.
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwemParams {
    pub epsilon: f64,
    pub iterations: usize,
    pub output: MwemOutput,
}

impl MwemParams {
    pub fn new(epsilon: f64, iterations: usize) -> Self {
        Self {
            epsilon,
            iterations,
            output: MwemOutput::Last,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub query_id: usize,
    pub noisy_value: f64,
    /// Error against the true data; only filled by evaluation harnesses.
    pub tv_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MwemTrace {
    pub steps: Vec<TraceStep>,
}

impl MwemTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Recomputes the estimate after each round from the released noisy
    /// values alone. Pure post-processing; `total_mass` is MWEM's `n`.
    pub fn replay(
        &self,
        workload: &Workload,
        total_mass: f64,
    ) -> Result<Vec<Distribution>, SynthError> {
        let mut current = Distribution::uniform(workload.domain_cells(), total_mass)?;
        let mut out = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            let query = workload
                .queries()
                .get(step.query_id)
                .ok_or(SynthError::EmptyWorkload)?;
            let m = NoisyMeasurement {
                query: step.query_id,
                value: step.noisy_value,
                epsilon_used: f64::NAN,
                scale: f64::NAN,
            };
            current.apply_update(query, &m)?;
            out.push(current.clone());
        }
        Ok(out)
    }

    /// Fills `tv_error` for every step against a full-domain reference.
    pub fn annotate_errors(
        &mut self,
        workload: &Workload,
        total_mass: f64,
        truth: &Histogram,
    ) -> Result<(), SynthError> {
        let reference: Vec<f64> = truth.counts.iter().map(|&c| c as f64).collect();
        let replayed = self.replay(workload, total_mass)?;
        for (step, dist) in self.steps.iter_mut().zip(replayed) {
            step.tv_error = Some(tv_error_weights(&dist, &reference)?);
        }
        Ok(())
    }
}

/// MWEM on a histogram over the full domain. The workload must be defined
/// on the histogram's cells; the trace carries the TV error after each round.
pub fn mwem<R: Rng + ?Sized>(
    true_histogram: &Histogram,
    workload: &Workload,
    params: MwemParams,
    rng: &mut R,
    budget: &mut PrivacyBudget,
) -> Result<(Distribution, MwemTrace), SynthError> {
    let answers = workload.answers(true_histogram)?;
    let n = true_histogram.total();
    if n == 0 {
        return Err(SynthError::EmptyHistogram);
    }
    let reference: Vec<f64> = true_histogram.counts.iter().map(|&c| c as f64).collect();
    mwem_from_answers(
        &answers,
        n as f64,
        workload,
        params,
        rng,
        budget,
        Some(&reference),
    )
}

/// MWEM given the true answer of every workload query and the record count.
///
/// Each of the `T` rounds spends `ε/(2T)` selecting the worst-answered query
/// (exponential mechanism on `|q(A) - q(D)|`) and `ε/(2T)` measuring it with
/// Laplace noise, then applies one multiplicative-weights update. The update
/// sees only the noisy measurement.
pub fn mwem_from_answers<R: Rng + ?Sized>(
    true_answers: &[f64],
    total: f64,
    workload: &Workload,
    params: MwemParams,
    rng: &mut R,
    budget: &mut PrivacyBudget,
    tv_reference: Option<&[f64]>,
) -> Result<(Distribution, MwemTrace), SynthError> {
    if workload.is_empty() {
        return Err(SynthError::EmptyWorkload);
    }
    if true_answers.len() != workload.len() {
        return Err(SynthError::DomainMismatch {
            expected: workload.len(),
            got: true_answers.len(),
        });
    }
    if params.iterations == 0 {
        return Err(SynthError::ZeroIterations);
    }
    if !(params.epsilon > 0.0 && params.epsilon.is_finite()) {
        return Err(DpError::NonpositiveEpsilon(params.epsilon).into());
    }
    if !budget.admits(params.epsilon) {
        return Err(DpError::BudgetExceeded {
            spent: budget.epsilon_spent(),
            requested: params.epsilon,
            total: budget.epsilon_total(),
        }
        .into());
    }

    let round_eps = params.epsilon / (2.0 * params.iterations as f64);
    let mut estimate = Distribution::uniform(workload.domain_cells(), total)?;
    let mut average = match params.output {
        MwemOutput::Average => Some(vec![0.0; workload.domain_cells()]),
        MwemOutput::Last => None,
    };
    let mut trace = MwemTrace::default();
    let mut scores = vec![0.0; workload.len()];

    for iteration in 0..params.iterations {
        for ((score, query), truth) in scores.iter_mut().zip(workload.queries()).zip(true_answers) {
            *score = (query.evaluate_weights(estimate.weights()) - truth).abs();
        }
        budget.spend(round_eps, "exponential")?;
        let selected = exponential_mechanism(&scores, round_eps, COUNT_SENSITIVITY, rng)?;

        budget.spend(round_eps, "laplace")?;
        let measurement = laplace_mechanism(
            selected,
            true_answers[selected],
            COUNT_SENSITIVITY,
            round_eps,
            rng,
        )?;

        estimate.apply_update(&workload.queries()[selected], &measurement)?;

        if let Some(acc) = average.as_mut() {
            for (a, w) in acc.iter_mut().zip(estimate.weights()) {
                *a += w;
            }
        }
        let tv = match tv_reference {
            Some(reference) => Some(tv_error_weights(&estimate, reference)?),
            None => None,
        };
        trace.steps.push(TraceStep {
            iteration,
            query_id: selected,
            noisy_value: measurement.value,
            tv_error: tv,
        });
    }

    let released = match average {
        Some(acc) => Distribution::from_weights(acc, total)?,
        None => estimate,
    };
    Ok((released, trace))
}
