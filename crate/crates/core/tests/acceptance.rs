//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Tolerances are fixed below.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{frozen_config, plaintext_sum};
use hybridsynth::agents::{
    combine_contributions, derive_rng, open_network, provider_pods, run_pipeline, run_selection,
    run_until_reveal, AgentError, AttestationError, ProtocolConfig, Roster, WorkloadSpec,
    DEFAULT_MANIFEST,
};
use hybridsynth::datamodel::{
    build_histogram, partition_variable_total, simulate_skewed, simulate_uniform, AttributeKind,
    AttributeSpec, Cell, Marginal, Record, Schema,
};
use hybridsynth::dpcore::{exponential_mechanism, sample_laplace, PrivacyBudget};
use hybridsynth::netsim::{ClockMode, MsgType, Network};
use hybridsynth::secretsharing::{reconstruct, share_secret, PrimeField, MERSENNE_61};
use hybridsynth::synthgen::{generate, mwem, tv_error, GeneratorKind, MwemParams, Workload};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn shamir_round_trip() -> Outcome {
    let field = PrimeField::new(MERSENNE_61).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut failures = 0;
    for _ in 0..1000 {
        let secret = field.random(&mut rng);
        let shares = share_secret(secret, 1, 3, &mut rng).map_err(|e| e.to_string())?;
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            if reconstruct(&[shares[a], shares[b]]).ok() != Some(secret) {
                failures += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        failures == 0 && elapsed < Duration::from_secs(1),
        format!("3000 reconstructions, {failures} wrong, {elapsed:.2?} (limit 1 s)"),
    )
}

fn threshold_privacy() -> Outcome {
    const P: u64 = 97;
    const ALPHA: f64 = 0.01;
    let field = PrimeField::new(P).map_err(|e| e.to_string())?;
    let chi = ChiSquared::new((P - 1) as f64).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 1.0f64;
    for secret in [0, 50] {
        let mut counts = vec![[0u64; P as usize]; 3];
        for _ in 0..100_000 {
            let shares =
                share_secret(field.element(secret), 1, 3, &mut rng).map_err(|e| e.to_string())?;
            for (j, s) in shares.iter().enumerate() {
                counts[j][s.y.value() as usize] += 1;
            }
        }
        for per_point in &counts {
            let expected = 100_000.0 / P as f64;
            let stat: f64 = per_point
                .iter()
                .map(|&c| (c as f64 - expected).powi(2) / expected)
                .sum();
            worst = worst.min(1.0 - chi.cdf(stat));
        }
    }
    check(
        worst > ALPHA,
        format!("smallest p-value over 2 secrets x 3 share points: {worst:.4} (alpha {ALPHA})"),
    )
}

/// 1 to 3 attributes with a full domain of at most 64 cells, plus records.
fn random_table(rng: &mut ChaCha8Rng) -> (Schema, Vec<Record>) {
    loop {
        let n_attrs = rng.gen_range(1..=3);
        let attrs: Vec<AttributeSpec> = (0..n_attrs)
            .map(|i| {
                if rng.gen_bool(0.5) {
                    let k = rng.gen_range(2..=5);
                    let values: Vec<String> = (0..k).map(|v| format!("v{v}")).collect();
                    let values: Vec<&str> = values.iter().map(String::as_str).collect();
                    AttributeSpec::categorical(&format!("c{i}"), &values)
                } else {
                    AttributeSpec::numeric(&format!("n{i}"), 0.0, 10.0, rng.gen_range(1..=8))
                }
            })
            .collect();
        let cells: usize = attrs.iter().map(AttributeSpec::domain_size).product();
        if cells > 64 {
            continue;
        }
        let schema = Schema::new(attrs).unwrap();
        let n = rng.gen_range(1..=400);
        let records = (0..n)
            .map(|_| {
                Record::new(
                    schema
                        .attributes
                        .iter()
                        .map(|a| match &a.kind {
                            AttributeKind::Numeric { lo, hi, .. } => {
                                Cell::Numeric(rng.gen_range(*lo..*hi))
                            }
                            AttributeKind::Categorical { values } => {
                                Cell::Category(rng.gen_range(0..values.len()))
                            }
                        })
                        .collect(),
                )
            })
            .collect();
        return (schema, records);
    }
}

/// Assigns each record to a random one of `providers` pods; some pods may
/// be empty.
fn random_split(records: Vec<Record>, providers: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Record>> {
    let mut groups = vec![Vec::new(); providers];
    for r in records {
        groups[rng.gen_range(0..providers)].push(r);
    }
    groups
}

fn random_workload(schema: &Schema, rng: &mut ChaCha8Rng) -> WorkloadSpec {
    let names: Vec<String> = schema.attributes.iter().map(|a| a.name.clone()).collect();
    let k = rng.gen_range(1..=3);
    let marginals = (0..k)
        .map(|_| {
            let size = rng.gen_range(1..=names.len());
            let mut pick: Vec<String> = names.choose_multiple(rng, size).cloned().collect();
            pick.sort();
            pick
        })
        .collect();
    WorkloadSpec::Explicit { marginals }
}

fn aggregation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let (schema, records) = random_table(&mut rng);
        let providers = rng.gen_range(1..=50);
        let groups = random_split(records, providers, &mut rng);
        let roster = Roster::standard(rng.gen_range(3..=5), rng.gen_range(1..=3));
        let config = ProtocolConfig {
            workload: random_workload(&schema, &mut rng),
            ..frozen_config(case)
        };
        let mut pods = provider_pods(groups.clone(), &roster);
        let (mut net, _) = open_network(&config, &roster).map_err(|e| e.to_string())?;
        let revealed = match run_until_reveal(&config, &schema, &mut pods, &roster, &mut net) {
            Ok(r) => r,
            // all pods empty: nothing to aggregate, and the pipeline says so
            Err(AgentError::NoData) if groups.iter().all(Vec::is_empty) => continue,
            Err(e) => return Err(format!("case {case}: {e}")),
        };
        let marginals = config
            .workload
            .resolve(&schema)
            .map_err(|e| e.to_string())?;
        if revealed.marginals != plaintext_sum(&groups, &marginals, &schema) {
            return Err(format!("case {case}: aggregate differs from plaintext sum"));
        }
    }
    Ok("200 configurations, aggregate == plaintext sum in every cell".into())
}

fn laplace() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 1_000_000;
    let xs: Vec<f64> = (0..n).map(|_| sample_laplace(0.5, &mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let rel = (var - 0.5).abs() / 0.5;
    check(
        rel <= 0.02 && mean.abs() <= 0.002,
        format!(
            "mean {mean:.5} (limit 0.002), variance {var:.5}, rel. error {rel:.4} (limit 0.02)"
        ),
    )
}

fn exponential() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let e = std::f64::consts::E;
    let p0 = e / (e + 1.0);
    let draws = 100_000;
    let mut hits = 0;
    for _ in 0..draws {
        if exponential_mechanism(&[1.0, 0.0], 2.0, 1.0, &mut rng).map_err(|e| e.to_string())? == 0 {
            hits += 1;
        }
    }
    let freq = hits as f64 / draws as f64;
    let sigma = (p0 * (1.0 - p0) / draws as f64).sqrt();
    let z = (freq - p0) / sigma;
    check(
        z.abs() <= 3.0,
        format!("P(0) = {freq:.4}, expected {p0:.4}, z = {z:.2} (limit 3)"),
    )
}

fn mwem_median_error(bins: usize, iterations: usize) -> Result<f64, String> {
    let errors = (0..5u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
            let schema =
                Schema::single_numeric("value", 0.0, 20.0, bins).map_err(|e| e.to_string())?;
            let full = Marginal::full(&schema).map_err(|e| e.to_string())?;
            let hist = build_histogram(
                &simulate_skewed(100_000, 0.0, 20.0, bins, 0.5, &mut rng),
                &full,
                &schema,
            );
            let workload = Workload::singletons(bins).map_err(|e| e.to_string())?;
            let mut budget = PrivacyBudget::new(2.0).map_err(|e| e.to_string())?;
            let (dist, _) = mwem(
                &hist,
                &workload,
                MwemParams::new(2.0, iterations),
                &mut rng,
                &mut budget,
            )
            .map_err(|e| e.to_string())?;
            tv_error(&dist, &hist).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<f64>, String>>()?;
    Ok(median(errors))
}

fn mwem_convergence() -> Outcome {
    let start = Instant::now();
    let at_140 = mwem_median_error(10, 140)?;
    let at_10 = mwem_median_error(10, 10)?;
    let wide = mwem_median_error(20, 140)?;
    let elapsed = start.elapsed();
    check(
        at_140 <= 0.15 && at_140 < at_10 && wide >= at_140 && elapsed < Duration::from_secs(60),
        format!(
            "median TV: 10 bins T=140 {at_140:.4} (limit 0.15), T=10 {at_10:.4}, 20 bins T=140 {wide:.4}; {elapsed:.2?} (limit 60 s)"
        ),
    )
}

fn mpc_scaling() -> Outcome {
    let roster = Roster::standard(3, 2);
    let run = |providers: usize, bins: usize, iterations: usize| -> Result<(u64, u64), String> {
        let schema =
            Schema::single_numeric("value", 0.0, 100.0, bins).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = simulate_uniform(providers * 100, 0.0, 100.0, &mut rng);
        let groups = data.chunks(100).map(<[Record]>::to_vec).collect();
        let mut pods = provider_pods(groups, &roster);
        let mut config = frozen_config(70);
        config.generator.iterations = iterations;
        let out = run_pipeline(&config, &schema, &mut pods, &roster).map_err(|e| e.to_string())?;
        let mpc = out.mpc_metrics();
        Ok((mpc.global_bytes, mpc.rounds))
    };
    let short = run(50, 10, 10)?;
    let long = run(50, 10, 100)?;

    let mut points = Vec::new();
    for providers in [10, 50, 100] {
        let (bytes, _) = run(providers, 10, 30)?;
        points.push(((providers * 10) as f64, bytes as f64));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let slope = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    check(
        short == long && slope <= 1.1,
        format!(
            "T=10 {short:?} vs T=100 {long:?} (bytes, rounds); log-log exponent {slope:.3} (limit 1.1)"
        ),
    )
}

fn selection_net() -> Network {
    let mut net = Network::in_process(0, ClockMode::Frozen);
    for id in 0..3 {
        net.register(id, &format!("C{id}"), true).unwrap();
    }
    net
}

fn joint_selection() -> Outcome {
    let field = PrimeField::default();
    let mut net = selection_net();
    let mut counts = [0u32; 3];
    for run in 0..3000u64 {
        let mut rngs: Vec<ChaCha8Rng> = (0..3)
            .map(|i| derive_rng(run, &format!("selection/C{i}")))
            .collect();
        let contributions: Vec<Option<u64>> =
            rngs.iter_mut().map(|r| Some(r.gen_range(0..3))).collect();
        let idx = run_selection(&mut net, &[0, 1, 2], &contributions, 3, field, 1, &mut rngs)
            .map_err(|e| e.to_string())?;
        counts[idx as usize] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / 3000.0).collect();
    let balanced = freqs.iter().all(|f| (0.28..=0.39).contains(f));

    // two contributions fixed, the third swept over every residue
    let mut sweep_ok = true;
    let mut rngs: Vec<ChaCha8Rng> = (0..3).map(ChaCha8Rng::seed_from_u64).collect();
    for (a, b) in [(0, 0), (2, 1), (1, 2)] {
        let mut hits = [0u32; 3];
        for r in 0..3 {
            let idx = run_selection(
                &mut net,
                &[0, 1, 2],
                &[Some(a), Some(b), Some(r)],
                3,
                field,
                1,
                &mut rngs,
            )
            .map_err(|e| e.to_string())?;
            sweep_ok &= idx == combine_contributions(&[a, b, r], 3);
            hits[idx as usize] += 1;
        }
        sweep_ok &= hits == [1, 1, 1];
    }
    check(
        balanced && sweep_ok,
        format!("frequencies {freqs:.3?} (band 0.28..0.39); adversarial sweep each index once: {sweep_ok}"),
    )
}

fn attestation_fail_closed() -> Outcome {
    let roster = Roster::standard(3, 2);
    let schema = Schema::single_numeric("value", 0.0, 100.0, 10).map_err(|e| e.to_string())?;
    let positions = [0, DEFAULT_MANIFEST.len() / 2, DEFAULT_MANIFEST.len() - 1];
    for &pos in &positions {
        let mut manifest = DEFAULT_MANIFEST.to_vec();
        manifest[pos] ^= 0x01;
        let config = ProtocolConfig {
            enclave_manifest: manifest,
            ..frozen_config(9)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = simulate_uniform(1_000, 0.0, 100.0, &mut rng);
        let mut pods = provider_pods(data.chunks(100).map(<[Record]>::to_vec).collect(), &roster);
        let (mut net, _) = open_network(&config, &roster).map_err(|e| e.to_string())?;
        let result = run_until_reveal(&config, &schema, &mut pods, &roster, &mut net);
        let aborted = matches!(
            result,
            Err(AgentError::AttestationFailed {
                reason: AttestationError::MeasurementMismatch,
                ..
            })
        );
        let leaked = net
            .transcript()
            .iter()
            .filter(|e| e.msg_type == MsgType::AggregateShare)
            .count();
        if !aborted || leaked != 0 {
            return Err(format!(
                "byte {pos} flipped: aborted {aborted}, aggregate-share frames {leaked}"
            ));
        }
    }
    Ok(format!(
        "bytes {positions:?} flipped: abort each time, 0 aggregate-share frames"
    ))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..20u64 {
        let (schema, records) = random_table(&mut rng);
        let providers = rng.gen_range(1..=30);
        let mut groups = random_split(records, providers, &mut rng);
        groups[0].push(Record::new(
            schema
                .attributes
                .iter()
                .map(|a| match a.kind {
                    AttributeKind::Numeric { lo, .. } => Cell::Numeric(lo),
                    AttributeKind::Categorical { .. } => Cell::Category(0),
                })
                .collect(),
        ));
        let roster = Roster::standard(rng.gen_range(3..=5), 2);
        let mut config = ProtocolConfig {
            workload: random_workload(&schema, &mut rng),
            ..frozen_config(1_000 + case)
        };
        config.generator.kind = if rng.gen_bool(0.5) {
            GeneratorKind::Mwem
        } else {
            GeneratorKind::MeasureGenerate
        };
        config.generator.epsilon = rng.gen_range(0.5..4.0);
        config.generator.iterations = rng.gen_range(5..=40);
        config.generator.synthetic_records = rng.gen_range(50..=500);

        let mut pods = provider_pods(groups.clone(), &roster);
        let out = run_pipeline(&config, &schema, &mut pods, &roster)
            .map_err(|e| format!("case {case}: {e}"))?;
        let marginals = config
            .workload
            .resolve(&schema)
            .map_err(|e| e.to_string())?;
        let truth = plaintext_sum(&groups, &marginals, &schema);
        let oracle = generate(
            &schema,
            &truth,
            &config.generator,
            &mut derive_rng(config.seed, "generation"),
        )
        .map_err(|e| e.to_string())?;
        if out.records != oracle.records || out.generation.distribution != oracle.distribution {
            return Err(format!(
                "case {case} ({:?}): release differs from oracle",
                config.generator.kind
            ));
        }
    }
    Ok("20 configurations, records and fitted distribution identical".into())
}

fn determinism_and_conservation() -> Outcome {
    let roster = Roster::standard(3, 2);
    let schema = Schema::single_numeric("value", 0.0, 100.0, 10).map_err(|e| e.to_string())?;
    let metrics_file = || -> Result<(Vec<u8>, bool), String> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = simulate_uniform(5_000, 0.0, 100.0, &mut rng);
        let mut pods = provider_pods(data.chunks(50).map(<[Record]>::to_vec).collect(), &roster);
        let out = run_pipeline(&frozen_config(11), &schema, &mut pods, &roster)
            .map_err(|e| e.to_string())?;
        let mut bytes = Vec::new();
        let player0 = out.layout.computation_agent(0);
        out.ledger
            .write_jsonl("acceptance", player0, &mut bytes)
            .map_err(|e| e.to_string())?;
        let conserved = out.ledger.completed().iter().all(|p| {
            p.global_bytes == p.sent.values().sum::<u64>()
                && p.global_bytes == p.received.values().sum::<u64>()
        });
        Ok((bytes, conserved))
    };
    let (a, conserved_a) = metrics_file()?;
    let (b, conserved_b) = metrics_file()?;
    check(
        a == b && !a.is_empty() && conserved_a && conserved_b,
        format!(
            "metrics files {} bytes, identical: {}; every phase conserved: {}",
            a.len(),
            a == b,
            conserved_a && conserved_b
        ),
    )
}

fn benchmark_scale() -> Outcome {
    let roster = Roster::standard(3, 2);
    let schema = Schema::single_numeric("value", 0.0, 100.0, 10).map_err(|e| e.to_string())?;
    let sizes = partition_variable_total(1000, 100);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let groups: Vec<Vec<Record>> = sizes
        .iter()
        .map(|&n| simulate_uniform(n, 0.0, 100.0, &mut rng))
        .collect();
    let mut pods = provider_pods(groups, &roster);
    let start = Instant::now();
    let out =
        run_pipeline(&frozen_config(12), &schema, &mut pods, &roster).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        out.audit.providers_used == 1000 && elapsed < Duration::from_secs(300),
        format!("1000 providers x 100 records in {elapsed:.2?} (limit 300 s)"),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("shamir round-trip", shamir_round_trip),
        ("threshold privacy", threshold_privacy),
        ("aggregation oracle equivalence", aggregation_oracle),
        ("laplace mechanism", laplace),
        ("exponential mechanism", exponential),
        ("mwem convergence", mwem_convergence),
        (
            "mpc cost independent of T, linear in providers x cells",
            mpc_scaling,
        ),
        ("joint random selection", joint_selection),
        ("attestation fail-closed", attestation_fail_closed),
        ("centralised-oracle equivalence", oracle_equivalence),
        ("determinism and conservation", determinism_and_conservation),
        ("end-to-end benchmark scale", benchmark_scale),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome =
            catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
