//! Attribute schemas, record ingestion, binning, marginals and histograms,
//! plus the data-distribution strategies of the benchmark experiments.

mod schema;

pub use schema::{bin_value, AttributeKind, AttributeSpec, Cell, Record, Schema};

use std::io::{Read, Write};

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("value `{value}` is not in the domain of `{attribute}`")]
    UnknownCategory { attribute: String, value: String },
    #[error("cannot parse `{value}` as a number for `{attribute}`")]
    UnparseableNumeric { attribute: String, value: String },
    #[error("CSV header does not match the schema: {0}")]
    HeaderMismatch(String),
    #[error("invalid marginal: {0}")]
    InvalidMarginal(String),
    #[error("record has {got} cells, schema has {expected}")]
    Arity { expected: usize, got: usize },
    #[error("at least one data provider is required")]
    NoProviders,
    #[error("csv: {0}")]
    Csv(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        DataError::Csv(e.to_string())
    }
}

/// Records parsed from a CSV source, with the number of rows dropped for
/// missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub records: Vec<Record>,
    pub dropped_rows: usize,
}

/// Parses a headered CSV file against `schema`. Header order is free; rows
/// with any empty cell are dropped.
pub fn load_dataset<R: Read>(source: R, schema: &Schema) -> Result<LoadedDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers()?.clone();
    if header.len() != schema.len() {
        return Err(DataError::HeaderMismatch(format!(
            "{} columns, schema has {} attributes",
            header.len(),
            schema.len()
        )));
    }
    // column index for each schema attribute
    let mut columns = Vec::with_capacity(schema.len());
    for attr in &schema.attributes {
        let col = header
            .iter()
            .position(|h| h == attr.name)
            .ok_or_else(|| DataError::HeaderMismatch(format!("missing column `{}`", attr.name)))?;
        columns.push(col);
    }

    let mut records = Vec::new();
    let mut dropped_rows = 0;
    for row in reader.records() {
        let row = row?;
        if columns
            .iter()
            .any(|&c| row.get(c).map_or(true, str::is_empty))
        {
            dropped_rows += 1;
            continue;
        }
        let cells = schema
            .attributes
            .iter()
            .zip(&columns)
            .map(|(attr, &c)| attr.parse_cell(&row[c]))
            .collect::<Result<Vec<_>, _>>()?;
        records.push(Record::new(cells));
    }
    Ok(LoadedDataset {
        records,
        dropped_rows,
    })
}

/// Writes records as CSV with a header in schema order.
pub fn write_dataset<W: Write>(
    sink: W,
    schema: &Schema,
    records: &[Record],
) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(schema.attributes.iter().map(|a| a.name.as_str()))?;
    for record in records {
        if record.cells.len() != schema.len() {
            return Err(DataError::Arity {
                expected: schema.len(),
                got: record.cells.len(),
            });
        }
        writer.write_record(
            schema
                .attributes
                .iter()
                .zip(&record.cells)
                .map(|(a, c)| a.format_cell(c)),
        )?;
    }
    writer.flush().map_err(|e| DataError::Csv(e.to_string()))?;
    Ok(())
}

/// An attribute subset whose joint values index a flat, row-major table
/// (last attribute varies fastest).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Marginal {
    attributes: Vec<usize>,
    sizes: Vec<usize>,
    cell_count: usize,
}

impl Marginal {
    pub fn new(schema: &Schema, attributes: Vec<usize>) -> Result<Self, DataError> {
        if attributes.is_empty() {
            return Err(DataError::InvalidMarginal("empty attribute subset".into()));
        }
        if attributes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::InvalidMarginal(
                "attribute indices must be strictly increasing".into(),
            ));
        }
        let mut sizes = Vec::with_capacity(attributes.len());
        let mut cell_count: usize = 1;
        for &i in &attributes {
            let attr = schema.attributes.get(i).ok_or_else(|| {
                DataError::InvalidMarginal(format!("attribute index {i} out of range"))
            })?;
            if attr.pii {
                return Err(DataError::InvalidMarginal(format!(
                    "`{}` is personally identifying",
                    attr.name
                )));
            }
            sizes.push(attr.domain_size());
            cell_count = cell_count
                .checked_mul(attr.domain_size())
                .ok_or_else(|| DataError::InvalidMarginal("cell count overflows".into()))?;
        }
        Ok(Self {
            attributes,
            sizes,
            cell_count,
        })
    }

    pub fn by_names(schema: &Schema, names: &[&str]) -> Result<Self, DataError> {
        let mut idx = names
            .iter()
            .map(|n| {
                schema
                    .index_of(n)
                    .ok_or_else(|| DataError::InvalidMarginal(format!("unknown attribute `{n}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        idx.sort_unstable();
        Self::new(schema, idx)
    }

    /// The joint domain of every releasable attribute.
    pub fn full(schema: &Schema) -> Result<Self, DataError> {
        Self::new(schema, schema.releasable())
    }

    /// Every `k`-subset of releasable attributes, in lexicographic order.
    pub fn all_k_way(schema: &Schema, k: usize) -> Result<Vec<Self>, DataError> {
        let pool = schema.releasable();
        if k == 0 || k > pool.len() {
            return Err(DataError::InvalidMarginal(format!(
                "cannot form {k}-way marginals over {} attributes",
                pool.len()
            )));
        }
        let mut out = Vec::new();
        let mut pick: Vec<usize> = (0..k).collect();
        loop {
            out.push(Self::new(schema, pick.iter().map(|&p| pool[p]).collect())?);
            // next combination
            let mut i = k;
            while i > 0 && pick[i - 1] == pool.len() - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            pick[i - 1] += 1;
            for j in i..k {
                pick[j] = pick[j - 1] + 1;
            }
        }
        Ok(out)
    }

    pub fn attributes(&self) -> &[usize] {
        &self.attributes
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    pub fn flatten(&self, bins: &[usize]) -> usize {
        debug_assert_eq!(bins.len(), self.sizes.len());
        bins.iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&b, &size)| acc * size + b)
    }

    pub fn unflatten(&self, mut cell: usize) -> Vec<usize> {
        let mut bins = vec![0; self.sizes.len()];
        for (slot, &size) in bins.iter_mut().zip(&self.sizes).rev() {
            *slot = cell % size;
            cell /= size;
        }
        bins
    }

    /// Flat cell a record falls into.
    pub fn cell_of(&self, schema: &Schema, record: &Record) -> usize {
        self.attributes
            .iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&a, &size)| {
                acc * size + bin_value(&schema.attributes[a], &record.cells[a])
            })
    }

    /// For each cell of `full`, the cell of `self` it projects onto.
    /// `self`'s attributes must be a subset of `full`'s.
    pub fn projection_from(&self, full: &Marginal) -> Result<Vec<usize>, DataError> {
        let positions = self
            .attributes
            .iter()
            .map(|a| {
                full.attributes.iter().position(|f| f == a).ok_or_else(|| {
                    DataError::InvalidMarginal(format!("attribute {a} not in the enclosing domain"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut table = Vec::with_capacity(full.cell_count);
        let mut bins = vec![0usize; full.sizes.len()];
        for _ in 0..full.cell_count {
            table.push(
                positions
                    .iter()
                    .zip(&self.sizes)
                    .fold(0, |acc, (&p, &size)| acc * size + bins[p]),
            );
            // odometer increment, last attribute fastest
            for k in (0..bins.len()).rev() {
                bins[k] += 1;
                if bins[k] < full.sizes[k] {
                    break;
                }
                bins[k] = 0;
            }
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub marginal: Marginal,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn zeros(marginal: Marginal) -> Self {
        let counts = vec![0; marginal.cell_count()];
        Self { marginal, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Element-wise sum; both histograms must be over the same marginal.
    pub fn merge(&mut self, other: &Histogram) -> Result<(), DataError> {
        if self.marginal != other.marginal {
            return Err(DataError::InvalidMarginal(
                "histograms over different marginals".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Client-side binning: one count per record, in the record's cell.
pub fn build_histogram(records: &[Record], marginal: &Marginal, schema: &Schema) -> Histogram {
    let mut hist = Histogram::zeros(marginal.clone());
    for record in records {
        hist.counts[marginal.cell_of(schema, record)] += 1;
    }
    hist
}

/// Splits records into `n_providers` contiguous groups whose sizes differ by
/// at most one (the first `len % n` groups take the extra record).
pub fn partition_fixed_total(
    records: Vec<Record>,
    n_providers: usize,
) -> Result<Vec<Vec<Record>>, DataError> {
    if n_providers == 0 {
        return Err(DataError::NoProviders);
    }
    let base = records.len() / n_providers;
    let extra = records.len() % n_providers;
    let mut iter = records.into_iter();
    Ok((0..n_providers)
        .map(|i| {
            let size = base + usize::from(i < extra);
            iter.by_ref().take(size).collect()
        })
        .collect())
}

/// Per-provider record counts when every provider holds `per_provider`.
pub fn partition_variable_total(n_providers: usize, per_provider: usize) -> Vec<usize> {
    vec![per_provider; n_providers]
}

/// `n` one-attribute records drawn uniformly from `[lo, hi)`.
pub fn simulate_uniform<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Vec<Record> {
    (0..n)
        .map(|_| Record::new(vec![Cell::Numeric(rng.gen_range(lo..hi))]))
        .collect()
}

/// `n` one-attribute records whose bin `b` (of `bins` equal-width bins over
/// `[lo, hi)`) has probability proportional to `skew^b`; values are uniform
/// within the chosen bin.
pub fn simulate_skewed<R: Rng + ?Sized>(
    n: usize,
    lo: f64,
    hi: f64,
    bins: usize,
    skew: f64,
    rng: &mut R,
) -> Vec<Record> {
    assert!(
        bins > 0 && skew > 0.0 && skew.is_finite(),
        "invalid skew parameters"
    );
    let weights: Vec<f64> = (0..bins).map(|b| skew.powi(b as i32)).collect();
    let chooser = WeightedIndex::new(&weights).expect("positive weights");
    let width = (hi - lo) / bins as f64;
    (0..n)
        .map(|_| {
            let b = chooser.sample(rng);
            let v = lo + (b as f64 + rng.gen::<f64>()) * width;
            Record::new(vec![Cell::Numeric(v.min(hi))])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn num(v: f64) -> Record {
        Record::new(vec![Cell::Numeric(v)])
    }

    fn titanic_like() -> Schema {
        Schema::new(vec![
            AttributeSpec::categorical("name", &["a", "b"]).with_pii(true),
            AttributeSpec::categorical("sex", &["m", "f"]),
            AttributeSpec::numeric("age", 0.0, 90.0, 9),
            AttributeSpec::categorical("embarked", &["S", "C"]),
        ])
        .unwrap()
    }

    #[test]
    fn one_dimensional_histogram() {
        let schema = Schema::single_numeric("v", 0.0, 20.0, 10).unwrap();
        let m = Marginal::full(&schema).unwrap();
        let h = build_histogram(&[num(3.0), num(7.0), num(7.0)], &m, &schema);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[3], 2);
        assert_eq!(h.total(), 3);
        let empty = build_histogram(&[], &m, &schema);
        assert!(empty.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn marginal_rejects_pii_and_bad_order() {
        let schema = titanic_like();
        assert!(Marginal::new(&schema, vec![0, 1]).is_err());
        assert!(Marginal::new(&schema, vec![2, 1]).is_err());
        assert!(Marginal::new(&schema, vec![1, 1]).is_err());
        assert!(Marginal::new(&schema, vec![]).is_err());
        assert!(Marginal::new(&schema, vec![9]).is_err());
        let m = Marginal::by_names(&schema, &["embarked", "sex"]).unwrap();
        assert_eq!(m.attributes(), &[1, 3]);
        assert_eq!(m.cell_count(), 4);
    }

    #[test]
    fn all_two_way() {
        let schema = titanic_like();
        let pairs = Marginal::all_k_way(&schema, 2).unwrap();
        let subsets: Vec<_> = pairs.iter().map(|m| m.attributes().to_vec()).collect();
        assert_eq!(subsets, vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(Marginal::all_k_way(&schema, 3).unwrap().len(), 1);
        assert!(Marginal::all_k_way(&schema, 4).is_err());
    }

    #[test]
    fn projection_matches_record_cells() {
        let schema = titanic_like();
        let full = Marginal::full(&schema).unwrap();
        let pair = Marginal::new(&schema, vec![1, 3]).unwrap();
        let table = pair.projection_from(&full).unwrap();
        assert_eq!(table.len(), full.cell_count());
        for cell in 0..full.cell_count() {
            let bins = full.unflatten(cell);
            // bins follow full's attribute order [1, 2, 3]
            assert_eq!(table[cell], pair.flatten(&[bins[0], bins[2]]));
        }
    }

    #[test]
    fn csv_loading() {
        let schema = titanic_like();
        let text = "embarked,age,sex,name\nS,22,m,a\nC,,f,b\nC,38.5,f,b\n";
        let loaded = load_dataset(text.as_bytes(), &schema).unwrap();
        assert_eq!(loaded.dropped_rows, 1);
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(
            loaded.records[1].cells,
            vec![
                Cell::Category(1),
                Cell::Category(1),
                Cell::Numeric(38.5),
                Cell::Category(1)
            ]
        );

        let bad = "embarked,age,sex,name\nQ,22,m,a\n";
        assert!(matches!(
            load_dataset(bad.as_bytes(), &schema),
            Err(DataError::UnknownCategory { .. })
        ));
        let bad = "embarked,age,sex,name\nS,old,m,a\n";
        assert!(matches!(
            load_dataset(bad.as_bytes(), &schema),
            Err(DataError::UnparseableNumeric { .. })
        ));
        let bad = "embarked,age,gender,name\nS,1,m,a\n";
        assert!(matches!(
            load_dataset(bad.as_bytes(), &schema),
            Err(DataError::HeaderMismatch(_))
        ));
    }

    #[test]
    fn csv_write_round_trip() {
        let schema = titanic_like();
        let records = vec![Record::new(vec![
            Cell::Category(0),
            Cell::Category(1),
            Cell::Numeric(45.0),
            Cell::Category(0),
        ])];
        let mut out = Vec::new();
        write_dataset(&mut out, &schema, &records).unwrap();
        let back = load_dataset(out.as_slice(), &schema).unwrap();
        assert_eq!(back.records, records);
    }

    #[test]
    fn fixed_total_partitions() {
        let records: Vec<_> = (0..10_000).map(|i| num(i as f64)).collect();
        let parts = partition_fixed_total(records, 100).unwrap();
        assert!(parts.iter().all(|p| p.len() == 100));

        let five: Vec<_> = (0..5).map(|i| num(i as f64)).collect();
        let sizes: Vec<_> = partition_fixed_total(five.clone(), 2)
            .unwrap()
            .iter()
            .map(Vec::len)
            .collect();
        assert_eq!(sizes, vec![3, 2]);
        let one = partition_fixed_total(five.clone(), 1).unwrap();
        assert_eq!(one, vec![five]);
        assert_eq!(
            partition_fixed_total(vec![], 0),
            Err(DataError::NoProviders)
        );
    }

    #[test]
    fn variable_total_partitions() {
        assert_eq!(
            partition_variable_total(10, 100).iter().sum::<usize>(),
            1000
        );
        assert_eq!(
            partition_variable_total(1000, 100).iter().sum::<usize>(),
            100_000
        );
        assert_eq!(partition_variable_total(1, 0).iter().sum::<usize>(), 0);
    }

    #[test]
    fn uniform_simulation_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let records = simulate_uniform(n, 0.0, 20.0, &mut rng);
        let schema = Schema::single_numeric("v", 0.0, 20.0, 10).unwrap();
        let h = build_histogram(&records, &Marginal::full(&schema).unwrap(), &schema);
        // binomial 3-sigma band around p = 0.1
        let sigma = (0.1f64 * 0.9 / n as f64).sqrt();
        for &c in &h.counts {
            assert!((c as f64 / n as f64 - 0.1).abs() < 3.0 * sigma, "count {c}");
        }
        assert!(simulate_uniform(0, 0.0, 20.0, &mut rng).is_empty());
    }

    #[test]
    fn skew_one_is_uniform_over_bins() {
        let n = 100_000;
        let schema = Schema::single_numeric("v", 0.0, 20.0, 10).unwrap();
        let m = Marginal::full(&schema).unwrap();
        let h = build_histogram(
            &simulate_skewed(n, 0.0, 20.0, 10, 1.0, &mut ChaCha8Rng::seed_from_u64(8)),
            &m,
            &schema,
        );
        let sigma = (0.1f64 * 0.9 / n as f64).sqrt();
        for &c in &h.counts {
            assert!((c as f64 / n as f64 - 0.1).abs() < 3.0 * sigma);
        }
        let skewed = build_histogram(
            &simulate_skewed(n, 0.0, 20.0, 10, 0.5, &mut ChaCha8Rng::seed_from_u64(9)),
            &m,
            &schema,
        );
        assert!(skewed.counts.windows(2).take(5).all(|w| w[0] > w[1]));
    }

    proptest! {
        #[test]
        fn flatten_is_a_bijection(cell in 0usize..(2 * 9 * 2)) {
            let schema = titanic_like();
            let full = Marginal::full(&schema).unwrap();
            prop_assert_eq!(full.flatten(&full.unflatten(cell)), cell);
        }

        #[test]
        fn histograms_add_over_providers(values in proptest::collection::vec(-5.0f64..25.0, 0..200), split in 0usize..200) {
            let schema = Schema::single_numeric("v", 0.0, 20.0, 10).unwrap();
            let m = Marginal::full(&schema).unwrap();
            let records: Vec<_> = values.iter().map(|&v| num(v)).collect();
            let split = split.min(records.len());
            let mut left = build_histogram(&records[..split], &m, &schema);
            let right = build_histogram(&records[split..], &m, &schema);
            left.merge(&right).unwrap();
            let whole = build_histogram(&records, &m, &schema);
            prop_assert_eq!(&left, &whole);
            prop_assert_eq!(whole.total(), records.len() as u64);
        }

        #[test]
        fn binning_is_total(v in -100.0f64..100.0, bins in 1usize..50) {
            let a = AttributeSpec::numeric("v", 0.0, 20.0, bins);
            prop_assert!(bin_value(&a, &Cell::Numeric(v)) < bins);
        }
    }
}
