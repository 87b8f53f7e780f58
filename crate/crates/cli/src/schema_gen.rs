use std::collections::BTreeSet;
use std::io::Read;

use hybridsynth::datamodel::{AttributeSpec, Schema};

use crate::CliError;

/// Default bin count for numeric columns in a generated template.
pub const TEMPLATE_BINS: usize = 10;

/// A schema template from a CSV file: columns whose every non-empty value
/// parses as a number become numeric over the observed range, the rest
/// categorical over the observed values.
pub fn schema_from_csv<R: Read>(source: R) -> Result<Schema, CliError> {
    let mut reader = csv::Reader::from_reader(source);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Config(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut values: Vec<BTreeSet<String>> = vec![BTreeSet::new(); headers.len()];
    for row in reader.records() {
        let row = row.map_err(|e| CliError::Config(e.to_string()))?;
        for (set, field) in values.iter_mut().zip(row.iter()) {
            let field = field.trim();
            if !field.is_empty() {
                set.insert(field.to_string());
            }
        }
    }
    let attributes = headers
        .iter()
        .zip(&values)
        .map(|(name, seen)| {
            let numbers: Option<Vec<f64>> = seen.iter().map(|v| v.parse::<f64>().ok()).collect();
            match numbers {
                Some(nums) if !nums.is_empty() => {
                    let lo = nums.iter().cloned().fold(f64::INFINITY, f64::min);
                    let mut hi = nums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    if hi <= lo {
                        hi = lo + 1.0;
                    }
                    AttributeSpec::numeric(name, lo, hi, TEMPLATE_BINS)
                }
                _ if seen.is_empty() => AttributeSpec::categorical(name, &["unknown"]),
                _ => {
                    let cats: Vec<&str> = seen.iter().map(String::as_str).collect();
                    AttributeSpec::categorical(name, &cats)
                }
            }
        })
        .collect();
    Ok(Schema::new(attributes)?)
}
