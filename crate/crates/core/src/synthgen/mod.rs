//! Synthetic-data generation over a discrete domain: multiplicative-weights
//! distributions, MWEM, a measure-then-fit baseline, error metrics and
//! record sampling.

mod generate;
mod measure;
mod mwem;

pub use generate::{generate, GenerationOutput, GeneratorConfig, GeneratorKind};
pub use measure::{measure_generate, MeasureGenerateOutput};
pub use mwem::{mwem, mwem_from_answers, MwemOutput, MwemParams, MwemTrace, TraceStep};

use std::io::Write;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::Rng;
use thiserror::Error;

use crate::datamodel::{DataError, Histogram, Marginal, Record, Schema};
use crate::dpcore::{DpError, NoisyMeasurement};

/// Largest full domain a [`Distribution`] may span.
pub const MAX_DOMAIN_CELLS: usize = 1_000_000;

/// Relative tolerance on total mass after an update.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("domain mismatch: expected {expected} cells, got {got}")]
    DomainMismatch { expected: usize, got: usize },
    #[error("domain of {0} cells exceeds the tractability limit of {MAX_DOMAIN_CELLS}")]
    DomainTooLarge(usize),
    #[error("workload is empty")]
    EmptyWorkload,
    #[error("query references cell {cell} outside a domain of {domain}")]
    QueryOutOfDomain { cell: usize, domain: usize },
    #[error("distribution needs positive total mass, got {0}")]
    NonpositiveMass(f64),
    #[error("histogram has no records")]
    EmptyHistogram,
    #[error("iterations must be at least 1")]
    ZeroIterations,
    #[error("no marginals supplied")]
    NoMarginals,
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Nonnegative weights over a finite domain summing to `total_mass`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    weights: Vec<f64>,
    total_mass: f64,
}

impl Distribution {
    pub fn uniform(cells: usize, total_mass: f64) -> Result<Self, SynthError> {
        if !(total_mass > 0.0 && total_mass.is_finite()) {
            return Err(SynthError::NonpositiveMass(total_mass));
        }
        if cells == 0 {
            return Err(SynthError::DomainMismatch {
                expected: 1,
                got: 0,
            });
        }
        if cells > MAX_DOMAIN_CELLS {
            return Err(SynthError::DomainTooLarge(cells));
        }
        Ok(Self {
            weights: vec![total_mass / cells as f64; cells],
            total_mass,
        })
    }

    /// Rescales arbitrary nonnegative weights to `total_mass`.
    pub fn from_weights(weights: Vec<f64>, total_mass: f64) -> Result<Self, SynthError> {
        if !(total_mass > 0.0 && total_mass.is_finite()) {
            return Err(SynthError::NonpositiveMass(total_mass));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(SynthError::NonpositiveMass(sum));
        }
        let mut d = Self {
            weights,
            total_mass,
        };
        d.rescale();
        Ok(d)
    }

    pub fn cells(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn normalized(&self) -> Vec<f64> {
        let sum: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / sum).collect()
    }

    fn rescale(&mut self) {
        let sum: f64 = self.weights.iter().sum();
        let factor = self.total_mass / sum;
        for w in &mut self.weights {
            *w *= factor;
        }
    }

    /// Multiplicative-weights step toward a noisy answer:
    /// `w[x] *= exp(q(x) * (m - q(w)) / (2n))`, then rescale to `n`.
    pub fn apply_update(
        &mut self,
        query: &Query,
        measurement: &NoisyMeasurement,
    ) -> Result<(), SynthError> {
        query.check_domain(self.cells())?;
        let current = query.evaluate_weights(&self.weights);
        let factor = ((measurement.value - current) / (2.0 * self.total_mass)).exp();
        for &c in &query.cells {
            self.weights[c] *= factor;
        }
        self.rescale();
        Ok(())
    }

    /// Sums weights onto a coarser table; `table[x]` is the target cell of
    /// domain cell `x`.
    pub fn project(&self, table: &[usize], cells: usize) -> Vec<f64> {
        let mut out = vec![0.0; cells];
        for (w, &c) in self.weights.iter().zip(table) {
            out[c] += w;
        }
        out
    }
}

/// A 0/1 linear counting query: the indicator of a set of domain cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    domain_cells: usize,
    cells: Vec<usize>,
}

impl Query {
    pub fn indicator(domain_cells: usize, mut cells: Vec<usize>) -> Result<Self, SynthError> {
        cells.sort_unstable();
        cells.dedup();
        if let Some(&c) = cells.iter().find(|&&c| c >= domain_cells) {
            return Err(SynthError::QueryOutOfDomain {
                cell: c,
                domain: domain_cells,
            });
        }
        Ok(Self {
            domain_cells,
            cells,
        })
    }

    pub fn domain_cells(&self) -> usize {
        self.domain_cells
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Coefficient of domain cell `x` (0 or 1).
    pub fn coefficient(&self, x: usize) -> f64 {
        if self.cells.binary_search(&x).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    fn check_domain(&self, cells: usize) -> Result<(), SynthError> {
        if cells != self.domain_cells {
            return Err(SynthError::DomainMismatch {
                expected: self.domain_cells,
                got: cells,
            });
        }
        Ok(())
    }

    fn evaluate_weights(&self, weights: &[f64]) -> f64 {
        self.cells.iter().map(|&c| weights[c]).sum()
    }
}

/// Anything that assigns a weight to every cell of a domain.
pub trait DomainWeights {
    fn domain_cells(&self) -> usize;
    fn weight(&self, cell: usize) -> f64;
}

impl DomainWeights for Distribution {
    fn domain_cells(&self) -> usize {
        self.cells()
    }
    fn weight(&self, cell: usize) -> f64 {
        self.weights[cell]
    }
}

impl DomainWeights for Histogram {
    fn domain_cells(&self) -> usize {
        self.counts.len()
    }
    fn weight(&self, cell: usize) -> f64 {
        self.counts[cell] as f64
    }
}

/// `q(D) = Σ_x q(x) · D(x)`.
pub fn evaluate_query<D: DomainWeights + ?Sized>(
    data: &D,
    query: &Query,
) -> Result<f64, SynthError> {
    query.check_domain(data.domain_cells())?;
    Ok(query.cells.iter().map(|&c| data.weight(c)).sum())
}

/// Returns the updated distribution; see [`Distribution::apply_update`].
pub fn mw_update(
    dist: &Distribution,
    query: &Query,
    measurement: &NoisyMeasurement,
) -> Result<Distribution, SynthError> {
    let mut next = dist.clone();
    next.apply_update(query, measurement)?;
    Ok(next)
}

/// Where a workload query came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuerySource {
    pub marginal: usize,
    pub cell: usize,
}

/// The queries a synthetic dataset should answer well.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    domain_cells: usize,
    queries: Vec<Query>,
    sources: Vec<QuerySource>,
}

impl Workload {
    pub fn new(domain_cells: usize, queries: Vec<Query>) -> Result<Self, SynthError> {
        if queries.is_empty() {
            return Err(SynthError::EmptyWorkload);
        }
        for q in &queries {
            q.check_domain(domain_cells)?;
        }
        let sources = (0..queries.len())
            .map(|i| QuerySource {
                marginal: 0,
                cell: i,
            })
            .collect();
        Ok(Self {
            domain_cells,
            queries,
            sources,
        })
    }

    /// One indicator per domain cell.
    pub fn singletons(domain_cells: usize) -> Result<Self, SynthError> {
        let queries = (0..domain_cells)
            .map(|c| Query::indicator(domain_cells, vec![c]))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(domain_cells, queries)
    }

    /// Every cell of every marginal as an indicator over `full`, in marginal
    /// order then cell order (the layout of concatenated marginal counts).
    pub fn marginal_cells(full: &Marginal, marginals: &[Marginal]) -> Result<Self, SynthError> {
        if marginals.is_empty() {
            return Err(SynthError::EmptyWorkload);
        }
        let domain = full.cell_count();
        if domain > MAX_DOMAIN_CELLS {
            return Err(SynthError::DomainTooLarge(domain));
        }
        let mut queries = Vec::new();
        let mut sources = Vec::new();
        for (mi, m) in marginals.iter().enumerate() {
            let table = m.projection_from(full)?;
            let mut members = vec![Vec::new(); m.cell_count()];
            for (x, &c) in table.iter().enumerate() {
                members[c].push(x);
            }
            for (cell, cells) in members.into_iter().enumerate() {
                queries.push(Query {
                    domain_cells: domain,
                    cells,
                });
                sources.push(QuerySource { marginal: mi, cell });
            }
        }
        Ok(Self {
            domain_cells: domain,
            queries,
            sources,
        })
    }

    pub fn domain_cells(&self) -> usize {
        self.domain_cells
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn source(&self, query: usize) -> QuerySource {
        self.sources[query]
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// True answers on a full-domain histogram.
    pub fn answers<D: DomainWeights + ?Sized>(&self, data: &D) -> Result<Vec<f64>, SynthError> {
        self.queries
            .iter()
            .map(|q| evaluate_query(data, q))
            .collect()
    }
}

/// Total variation distance between the normalized distribution and the
/// normalized histogram.
pub fn tv_error(dist: &Distribution, truth: &Histogram) -> Result<f64, SynthError> {
    tv_error_weights(
        dist,
        &truth.counts.iter().map(|&c| c as f64).collect::<Vec<_>>(),
    )
}

pub(crate) fn tv_error_weights(dist: &Distribution, truth: &[f64]) -> Result<f64, SynthError> {
    if dist.cells() != truth.len() {
        return Err(SynthError::DomainMismatch {
            expected: truth.len(),
            got: dist.cells(),
        });
    }
    let true_total: f64 = truth.iter().sum();
    if !(true_total > 0.0) {
        return Err(SynthError::EmptyHistogram);
    }
    let p = dist.normalized();
    let l1: f64 = p
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b / true_total).abs())
        .sum();
    Ok((0.5 * l1).clamp(0.0, 1.0))
}

/// Draws `m` records i.i.d. from `dist` over the full domain `full`, decoding
/// each cell to bin representatives. Records follow `schema.without_pii()`.
pub fn sample_records<R: Rng + ?Sized>(
    dist: &Distribution,
    m: usize,
    full: &Marginal,
    schema: &Schema,
    rng: &mut R,
) -> Result<Vec<Record>, SynthError> {
    if dist.cells() != full.cell_count() {
        return Err(SynthError::DomainMismatch {
            expected: full.cell_count(),
            got: dist.cells(),
        });
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let chooser =
        WeightedIndex::new(dist.weights()).map_err(|_| SynthError::NonpositiveMass(0.0))?;
    Ok((0..m)
        .map(|_| {
            let cell = chooser.sample(rng);
            let cells = full
                .attributes()
                .iter()
                .zip(full.unflatten(cell))
                .map(|(&a, bin)| schema.attributes[a].representative(bin))
                .collect();
            Record::new(cells)
        })
        .collect())
}

/// Writes a trace as JSON lines `{iteration, query_id, noisy_value, tv_error}`.
pub fn write_trace_jsonl<W: Write>(trace: &MwemTrace, mut sink: W) -> std::io::Result<()> {
    for step in &trace.steps {
        serde_json::to_writer(&mut sink, step)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}
