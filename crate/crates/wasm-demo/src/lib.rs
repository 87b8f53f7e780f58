//! Browser bindings. Each exported function takes plain numbers and returns
//! a JSON string for the page script to draw.

use hybridsynth::agents::{provider_pods, run_pipeline, ProtocolConfig, Roster};
use hybridsynth::datamodel::{
    build_histogram, partition_fixed_total, simulate_skewed, Marginal, Schema,
};
use hybridsynth::dpcore::PrivacyBudget;
use hybridsynth::netsim::ClockMode;
use hybridsynth::secretsharing::{reconstruct, share_secret, PrimeField, Share};
use hybridsynth::synthgen::{mwem, MwemParams, Workload};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_js<T: Serialize>(value: Result<T, String>) -> Result<String, JsValue> {
    value
        .and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[derive(Debug, Serialize)]
pub struct SubsetResult {
    pub points: Vec<u64>,
    pub value: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct SharingDemo {
    pub modulus: u64,
    pub shares: Vec<(u64, u64)>,
    /// Reconstruction from every pair of consecutive shares and from each
    /// single share.
    pub subsets: Vec<SubsetResult>,
}

pub fn sharing_demo(
    secret: u64,
    t: usize,
    n: usize,
    modulus: u64,
    seed: u64,
) -> Result<SharingDemo, String> {
    let field = PrimeField::new(modulus).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shares = share_secret(field.element(secret), t, n, &mut rng).map_err(|e| e.to_string())?;
    let attempt = |subset: &[Share]| SubsetResult {
        points: subset.iter().map(|s| s.x).collect(),
        value: reconstruct(subset).ok().map(|v| v.value()),
    };
    let mut subsets: Vec<SubsetResult> = shares.windows(t + 1).map(attempt).collect();
    if t > 0 {
        subsets.extend(
            shares
                .iter()
                .take(2)
                .map(|s| attempt(std::slice::from_ref(s))),
        );
    }
    Ok(SharingDemo {
        modulus,
        shares: shares.iter().map(|s| (s.x, s.y.value())).collect(),
        subsets,
    })
}

#[derive(Debug, Serialize)]
pub struct ErrorCurve {
    pub truth: Vec<f64>,
    pub synthetic: Vec<f64>,
    /// TV distance after each round.
    pub errors: Vec<f64>,
}

pub fn mwem_curve(
    records: usize,
    bins: usize,
    skew: f64,
    epsilon: f64,
    iterations: usize,
    seed: u64,
) -> Result<ErrorCurve, String> {
    if !(skew > 0.0 && skew.is_finite()) {
        return Err(format!("skew must be positive, got {skew}"));
    }
    let schema = Schema::single_numeric("value", 0.0, 1.0, bins).map_err(|e| e.to_string())?;
    let full = Marginal::full(&schema).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = simulate_skewed(records, 0.0, 1.0, bins, skew, &mut rng);
    let hist = build_histogram(&data, &full, &schema);
    let workload = Workload::singletons(bins).map_err(|e| e.to_string())?;
    let mut budget = PrivacyBudget::new(epsilon).map_err(|e| e.to_string())?;
    let (dist, trace) = mwem(
        &hist,
        &workload,
        MwemParams::new(epsilon, iterations),
        &mut rng,
        &mut budget,
    )
    .map_err(|e| e.to_string())?;
    let n = hist.total() as f64;
    Ok(ErrorCurve {
        truth: hist.counts.iter().map(|&c| c as f64 / n).collect(),
        synthetic: dist.normalized(),
        errors: trace.steps.iter().filter_map(|s| s.tv_error).collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct PhaseRow {
    pub phase: String,
    pub rounds: u64,
    pub global_bytes: u64,
    pub local_bytes_player0: u64,
}

#[derive(Debug, Serialize)]
pub struct PipelineDemo {
    pub phases: Vec<PhaseRow>,
    pub enclave_agent: String,
    pub truth: Vec<u64>,
    pub synthetic: Vec<u64>,
}

pub fn pipeline_demo(
    providers: usize,
    records: usize,
    bins: usize,
    epsilon: f64,
    iterations: usize,
    seed: u64,
) -> Result<PipelineDemo, String> {
    let schema = Schema::single_numeric("value", 0.0, 1.0, bins).map_err(|e| e.to_string())?;
    let full = Marginal::full(&schema).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = simulate_skewed(records, 0.0, 1.0, bins, 0.5, &mut rng);
    let truth = build_histogram(&data, &full, &schema).counts;
    let roster = Roster::standard(3, 2);
    let groups = partition_fixed_total(data, providers).map_err(|e| e.to_string())?;
    let mut pods = provider_pods(groups, &roster);
    let mut config = ProtocolConfig {
        seed,
        clock: ClockMode::Frozen,
        ..ProtocolConfig::default()
    };
    config.generator.epsilon = epsilon;
    config.generator.iterations = iterations;
    config.generator.synthetic_records = records;
    let out = run_pipeline(&config, &schema, &mut pods, &roster).map_err(|e| e.to_string())?;
    let player0 = out.layout.computation_agent(0);
    Ok(PipelineDemo {
        phases: out
            .ledger
            .completed()
            .iter()
            .map(|p| PhaseRow {
                phase: p.phase.clone(),
                rounds: p.rounds,
                global_bytes: p.global_bytes,
                local_bytes_player0: p.local_bytes(player0),
            })
            .collect(),
        enclave_agent: out.audit.enclave_agent.clone(),
        truth,
        synthetic: build_histogram(&out.records, &full, &schema).counts,
    })
}

#[wasm_bindgen(js_name = shareSecret)]
pub fn share_secret_js(
    secret: u64,
    t: usize,
    n: usize,
    modulus: u64,
    seed: u64,
) -> Result<String, JsValue> {
    to_js(sharing_demo(secret, t, n, modulus, seed))
}

#[wasm_bindgen(js_name = mwemCurve)]
pub fn mwem_curve_js(
    records: usize,
    bins: usize,
    skew: f64,
    epsilon: f64,
    iterations: usize,
    seed: u64,
) -> Result<String, JsValue> {
    to_js(mwem_curve(records, bins, skew, epsilon, iterations, seed))
}

#[wasm_bindgen(js_name = runPipeline)]
pub fn pipeline_js(
    providers: usize,
    records: usize,
    bins: usize,
    epsilon: f64,
    iterations: usize,
    seed: u64,
) -> Result<String, JsValue> {
    to_js(pipeline_demo(
        providers, records, bins, epsilon, iterations, seed,
    ))
}
