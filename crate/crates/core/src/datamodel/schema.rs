use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// How an attribute's raw values map onto a finite domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttributeKind {
    Categorical {
        values: Vec<String>,
    },
    /// Equal-width bins over `[lo, hi]`.
    Numeric {
        lo: f64,
        hi: f64,
        bins: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
    /// Personally identifying; never allowed into a marginal.
    #[serde(default)]
    pub pii: bool,
}

/// One cell of a record. Categorical cells hold the index into the
/// attribute's value list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Category(usize),
    Numeric(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub cells: Vec<Cell>,
}

impl Record {
    pub fn new(cells: Vec<Cell>) -> Self {
        Self { cells }
    }
}

impl AttributeSpec {
    pub fn categorical(name: &str, values: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: AttributeKind::Categorical {
                values: values.iter().map(|v| v.to_string()).collect(),
            },
            pii: false,
        }
    }

    pub fn numeric(name: &str, lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: AttributeKind::Numeric { lo, hi, bins },
            pii: false,
        }
    }

    pub fn with_pii(mut self, pii: bool) -> Self {
        self.pii = pii;
        self
    }

    pub fn domain_size(&self) -> usize {
        match &self.kind {
            AttributeKind::Categorical { values } => values.len(),
            AttributeKind::Numeric { bins, .. } => *bins,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        match &self.kind {
            AttributeKind::Categorical { values } => {
                if values.is_empty() {
                    return Err(DataError::InvalidSchema(format!(
                        "categorical attribute `{}` has an empty domain",
                        self.name
                    )));
                }
                let distinct: BTreeSet<_> = values.iter().collect();
                if distinct.len() != values.len() {
                    return Err(DataError::InvalidSchema(format!(
                        "categorical attribute `{}` repeats a value",
                        self.name
                    )));
                }
            }
            AttributeKind::Numeric { lo, hi, bins } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(DataError::InvalidSchema(format!(
                        "numeric attribute `{}` needs finite lo < hi",
                        self.name
                    )));
                }
                if *bins == 0 {
                    return Err(DataError::InvalidSchema(format!(
                        "numeric attribute `{}` needs at least one bin",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses a raw (non-empty) CSV cell.
    pub fn parse_cell(&self, raw: &str) -> Result<Cell, DataError> {
        match &self.kind {
            AttributeKind::Categorical { values } => values
                .iter()
                .position(|v| v == raw)
                .map(Cell::Category)
                .ok_or_else(|| DataError::UnknownCategory {
                    attribute: self.name.clone(),
                    value: raw.to_string(),
                }),
            AttributeKind::Numeric { .. } => match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Cell::Numeric(v)),
                _ => Err(DataError::UnparseableNumeric {
                    attribute: self.name.clone(),
                    value: raw.to_string(),
                }),
            },
        }
    }

    /// Renders a cell back to its CSV token.
    pub fn format_cell(&self, cell: &Cell) -> String {
        match (&self.kind, cell) {
            (AttributeKind::Categorical { values }, Cell::Category(i)) => {
                values.get(*i).cloned().unwrap_or_default()
            }
            (_, Cell::Numeric(v)) => v.to_string(),
            (AttributeKind::Numeric { .. }, Cell::Category(i)) => i.to_string(),
        }
    }

    /// The value a synthetic record carries for a bin: the category itself,
    /// or the midpoint of a numeric bin.
    pub fn representative(&self, bin: usize) -> Cell {
        match &self.kind {
            AttributeKind::Categorical { .. } => Cell::Category(bin),
            AttributeKind::Numeric { lo, hi, bins } => {
                let width = (hi - lo) / *bins as f64;
                Cell::Numeric(lo + (bin as f64 + 0.5) * width)
            }
        }
    }
}

/// Maps a value onto its bin. Numeric values outside `[lo, hi]` clamp to the
/// edge bins; `hi` itself lands in the last bin.
pub fn bin_value(spec: &AttributeSpec, value: &Cell) -> usize {
    match (&spec.kind, value) {
        (AttributeKind::Numeric { lo, hi, bins }, Cell::Numeric(v)) => {
            if !(*v > *lo) {
                return 0;
            }
            let width = (hi - lo) / *bins as f64;
            let idx = ((v - lo) / width).floor();
            if idx >= *bins as f64 {
                bins - 1
            } else {
                idx as usize
            }
        }
        (AttributeKind::Categorical { values }, Cell::Category(i)) => {
            debug_assert!(*i < values.len());
            (*i).min(values.len() - 1)
        }
        (kind, cell) => {
            debug_assert!(
                false,
                "cell {cell:?} does not match attribute kind {kind:?}"
            );
            match cell {
                Cell::Category(i) => (*i).min(spec.domain_size() - 1),
                Cell::Numeric(v) => (v.max(0.0) as usize).min(spec.domain_size() - 1),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(rename = "attribute")]
    pub attributes: Vec<AttributeSpec>,
}

impl Schema {
    pub fn new(attributes: Vec<AttributeSpec>) -> Result<Self, DataError> {
        let schema = Self { attributes };
        schema.validate()?;
        Ok(schema)
    }

    /// The one-attribute schema used by the simulated benchmarks.
    pub fn single_numeric(name: &str, lo: f64, hi: f64, bins: usize) -> Result<Self, DataError> {
        Self::new(vec![AttributeSpec::numeric(name, lo, hi, bins)])
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.attributes.is_empty() {
            return Err(DataError::InvalidSchema("schema has no attributes".into()));
        }
        let mut names = BTreeSet::new();
        for a in &self.attributes {
            if !names.insert(a.name.as_str()) {
                return Err(DataError::InvalidSchema(format!(
                    "duplicate attribute name `{}`",
                    a.name
                )));
            }
            a.validate()?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let schema: Schema =
            toml::from_str(text).map_err(|e| DataError::InvalidSchema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Indices of attributes that may appear in marginals.
    pub fn releasable(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| !self.attributes[i].pii)
            .collect()
    }

    /// The schema of released synthetic data: every non-pii attribute.
    pub fn without_pii(&self) -> Schema {
        Schema {
            attributes: self.attributes.iter().filter(|a| !a.pii).cloned().collect(),
        }
    }
}
