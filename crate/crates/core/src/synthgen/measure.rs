use rand::Rng;

use super::{Distribution, SynthError, Workload, MAX_DOMAIN_CELLS};
use crate::datamodel::{Histogram, Marginal};
use crate::dpcore::{
    laplace_mechanism, DpError, NoisyMeasurement, PrivacyBudget, COUNT_SENSITIVITY,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureGenerateOutput {
    pub distribution: Distribution,
    /// One measurement per marginal cell, in workload order.
    pub measurements: Vec<NoisyMeasurement>,
}

/// Noises every cell of every marginal with Laplace at `ε / k` (k marginals),
/// then fits a full-domain distribution by cycling multiplicative-weights
/// updates over all noisy cells `fit_iterations` times. Fitting touches only
/// the measurements.
pub fn measure_generate<R: Rng + ?Sized>(
    true_marginals: &[Histogram],
    full: &Marginal,
    epsilon: f64,
    fit_iterations: usize,
    rng: &mut R,
    budget: &mut PrivacyBudget,
) -> Result<MeasureGenerateOutput, SynthError> {
    if true_marginals.is_empty() {
        return Err(SynthError::NoMarginals);
    }
    if full.cell_count() > MAX_DOMAIN_CELLS {
        return Err(SynthError::DomainTooLarge(full.cell_count()));
    }
    if !budget.admits(epsilon) {
        return Err(DpError::BudgetExceeded {
            spent: budget.epsilon_spent(),
            requested: epsilon,
            total: budget.epsilon_total(),
        }
        .into());
    }
    let marginals: Vec<Marginal> = true_marginals.iter().map(|h| h.marginal.clone()).collect();
    let workload = Workload::marginal_cells(full, &marginals)?;

    // measure
    let per_marginal = epsilon / true_marginals.len() as f64;
    let mut measurements = Vec::with_capacity(workload.len());
    for hist in true_marginals {
        budget.spend(per_marginal, "laplace")?;
        for &count in &hist.counts {
            let id = measurements.len();
            measurements.push(laplace_mechanism(
                id,
                count as f64,
                COUNT_SENSITIVITY,
                per_marginal,
                rng,
            )?);
        }
    }

    // generate: post-processing from here on
    let distribution = fit_measurements(
        &workload,
        &measurements,
        true_marginals.len(),
        fit_iterations,
    )?;
    Ok(MeasureGenerateOutput {
        distribution,
        measurements,
    })
}

/// Record count implied by the measurements: the mean noisy marginal total,
/// floored at one.
fn estimated_total(
    workload: &Workload,
    measurements: &[NoisyMeasurement],
    marginals: usize,
) -> f64 {
    let mut totals = vec![0.0; marginals];
    for (i, m) in measurements.iter().enumerate() {
        totals[workload.source(i).marginal] += m.value;
    }
    (totals.iter().sum::<f64>() / marginals as f64).max(1.0)
}

pub(crate) fn fit_measurements(
    workload: &Workload,
    measurements: &[NoisyMeasurement],
    marginals: usize,
    fit_iterations: usize,
) -> Result<Distribution, SynthError> {
    let total = estimated_total(workload, measurements, marginals);
    let mut fitter = LazyFitter::new(workload.domain_cells(), total);
    for _ in 0..fit_iterations {
        for (query, m) in workload.queries().iter().zip(measurements) {
            fitter.update(query.cells(), m.value);
        }
    }
    fitter.finish()
}

/// Multiplicative weights with the global renormalization folded into a
/// scalar, so an update costs O(|query|) instead of O(domain). Actual
/// weights are `scale * raw`.
struct LazyFitter {
    raw: Vec<f64>,
    scale: f64,
    total: f64,
}

impl LazyFitter {
    fn new(cells: usize, total: f64) -> Self {
        Self {
            raw: vec![1.0; cells],
            scale: total / cells as f64,
            total,
        }
    }

    fn update(&mut self, cells: &[usize], measurement: f64) {
        let current = self.scale * cells.iter().map(|&c| self.raw[c]).sum::<f64>();
        let factor = ((measurement - current) / (2.0 * self.total)).exp();
        for &c in cells {
            self.raw[c] *= factor;
        }
        let new_total = self.total + (factor - 1.0) * current;
        self.scale *= self.total / new_total;
        if !(1e-150..1e150).contains(&self.scale) {
            self.fold_scale();
        }
    }

    fn fold_scale(&mut self) {
        for w in &mut self.raw {
            *w *= self.scale;
        }
        self.scale = 1.0;
    }

    fn finish(mut self) -> Result<Distribution, SynthError> {
        self.fold_scale();
        Distribution::from_weights(self.raw, self.total)
    }
}
