#![allow(dead_code)]

use hybridsynth::agents::{provider_pods, Pod, ProtocolConfig, Roster};
use hybridsynth::datamodel::{
    build_histogram, partition_fixed_total, simulate_uniform, Histogram, Marginal, Record, Schema,
};
use hybridsynth::netsim::ClockMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn one_d_schema(bins: usize) -> Schema {
    Schema::single_numeric("value", 0.0, 100.0, bins).unwrap()
}

pub fn uniform_pods(providers: usize, records: usize, roster: &Roster, seed: u64) -> Vec<Pod> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = simulate_uniform(records, 0.0, 100.0, &mut rng);
    provider_pods(partition_fixed_total(data, providers).unwrap(), roster)
}

pub fn frozen_config(seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        seed,
        clock: ClockMode::Frozen,
        ..ProtocolConfig::default()
    }
}

/// Plaintext column sums of every provider's histograms.
pub fn plaintext_sum(
    groups: &[Vec<Record>],
    marginals: &[Marginal],
    schema: &Schema,
) -> Vec<Histogram> {
    marginals
        .iter()
        .map(|m| {
            let mut total = Histogram::zeros(m.clone());
            for g in groups {
                total.merge(&build_histogram(g, m, schema)).unwrap();
            }
            total
        })
        .collect()
}
