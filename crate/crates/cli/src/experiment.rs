use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use hybridsynth::agents::{derive_rng, provider_pods, run_pipeline, PipelineOutput, Roster};
use hybridsynth::datamodel::{
    load_dataset, partition_fixed_total, simulate_skewed, simulate_uniform, write_dataset, Record,
    Schema,
};
use hybridsynth::netsim::ClockMode;
use hybridsynth::synthgen::{write_trace_jsonl, GeneratorKind};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSource, ExperimentConfig, PartitionStrategy};
use crate::CliError;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const PHASES_FILE: &str = "phases.jsonl";

/// One line of `metrics.jsonl`: a single pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub experiment: String,
    pub config_digest: String,
    pub seed: u64,
    pub providers: usize,
    pub iterations: usize,
    pub repetition: usize,
    pub generator: GeneratorKind,
    pub epsilon: f64,
    pub input_records: usize,
    pub synthetic_records: usize,
    pub time_ms: u64,
    pub rounds: u64,
    pub global_bytes: u64,
    pub local_bytes_player0: u64,
    pub mpc_time_ms: u64,
    pub mpc_rounds: u64,
    pub mpc_global_bytes: u64,
    pub mpc_local_bytes_player0: u64,
    pub epsilon_spent: f64,
    pub enclave_agent: String,
    pub excluded_providers: usize,
    pub denied_providers: usize,
    pub conserved: bool,
}

/// The input records for one sweep point, grouped by provider. Data depends
/// only on the experiment seed and the provider count, so repetitions of a
/// point see the same data.
pub fn build_dataset(
    config: &ExperimentConfig,
    providers: usize,
) -> Result<(Schema, Vec<Vec<Record>>), CliError> {
    let mut rng = derive_rng(config.seed, &format!("data/{providers}"));
    let wanted = |available: Option<usize>| -> Result<usize, CliError> {
        match (&config.partition, available) {
            (PartitionStrategy::FixedTotal { total: Some(t) }, _) => Ok(*t),
            (PartitionStrategy::FixedTotal { total: None }, Some(n)) => Ok(n),
            (PartitionStrategy::FixedTotal { total: None }, None) => Err(CliError::Config(
                "fixed_total needs `total` for simulated data".into(),
            )),
            (PartitionStrategy::VariableTotal { per_provider }, _) => Ok(per_provider * providers),
        }
    };
    let (schema, records) = match &config.dataset {
        DatasetSource::SimulatedUniform { lo, hi, bins } => {
            let schema = Schema::single_numeric("value", *lo, *hi, *bins)?;
            (schema, simulate_uniform(wanted(None)?, *lo, *hi, &mut rng))
        }
        DatasetSource::SimulatedSkewed { lo, hi, bins, skew } => {
            let schema = Schema::single_numeric("value", *lo, *hi, *bins)?;
            (
                schema,
                simulate_skewed(wanted(None)?, *lo, *hi, *bins, *skew, &mut rng),
            )
        }
        DatasetSource::Csv { path, schema } => {
            let schema = Schema::from_file(schema)?;
            let file = File::open(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let loaded = load_dataset(file, &schema)?;
            let n = wanted(Some(loaded.records.len()))?;
            if n > loaded.records.len() {
                return Err(CliError::Config(format!(
                    "{} has {} usable rows, {n} requested",
                    path.display(),
                    loaded.records.len()
                )));
            }
            let mut records = loaded.records;
            records.truncate(n);
            (schema, records)
        }
    };
    Ok((schema, partition_fixed_total(records, providers)?))
}

fn run_seed(
    config: &ExperimentConfig,
    providers: usize,
    iterations: usize,
    repetition: usize,
) -> u64 {
    derive_rng(
        config.seed,
        &format!("run/{providers}/{iterations}/{repetition}"),
    )
    .next_u64()
}

/// Everything one run produces before it is written out.
pub struct RunResult {
    pub record: RunRecord,
    pub output: PipelineOutput,
}

pub fn run_point(
    config: &ExperimentConfig,
    manifest: Option<&[u8]>,
    providers: usize,
    iterations: usize,
    repetition: usize,
) -> Result<RunResult, CliError> {
    let (schema, groups) = build_dataset(config, providers)?;
    let input_records = groups.iter().map(Vec::len).sum();
    let mut protocol = config.protocol.clone();
    protocol.generator.iterations = iterations;
    protocol.seed = run_seed(config, providers, iterations, repetition);
    if let Some(m) = manifest {
        protocol.enclave_manifest = m.to_vec();
    }
    let roster = Roster::standard(protocol.n_computation_agents, protocol.n_encryption_agents);
    let mut pods = provider_pods(groups, &roster);

    let started = Instant::now();
    let output = run_pipeline(&protocol, &schema, &mut pods, &roster)?;
    let elapsed = match protocol.clock {
        ClockMode::Wall => started.elapsed().as_millis() as u64,
        ClockMode::Frozen => 0,
    };

    let player0 = output.layout.computation_agent(0);
    let phases: Vec<_> = output.ledger.completed().iter().collect();
    let all = hybridsynth::netsim::PhaseMetrics::combine("all", &phases);
    let mpc = output.mpc_metrics();
    let run_id = format!("p{providers}-t{iterations}-r{repetition}");
    let record = RunRecord {
        run_id,
        experiment: config.name.clone(),
        config_digest: config.digest(),
        seed: protocol.seed,
        providers,
        iterations,
        repetition,
        generator: protocol.generator.kind,
        epsilon: protocol.generator.epsilon,
        input_records,
        synthetic_records: output.records.len(),
        time_ms: elapsed,
        rounds: all.rounds,
        global_bytes: all.global_bytes,
        local_bytes_player0: all.local_bytes(player0),
        mpc_time_ms: mpc.time_ms,
        mpc_rounds: mpc.rounds,
        mpc_global_bytes: mpc.global_bytes,
        mpc_local_bytes_player0: mpc.local_bytes(player0),
        epsilon_spent: output.generation.budget.epsilon_spent(),
        enclave_agent: output.audit.enclave_agent.clone(),
        excluded_providers: output.audit.excluded.len(),
        denied_providers: output.audit.access_denied.len(),
        conserved: output.ledger.completed().iter().all(|p| p.is_conserved()),
    };
    Ok(RunResult { record, output })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut line = serde_json::to_vec(value).expect("record serializes");
    line.push(b'\n');
    file.write_all(&line).map_err(io_err(path))
}

fn write_run(dir: &Path, result: &RunResult) -> Result<(), CliError> {
    let id = &result.record.run_id;
    append_line(&dir.join(METRICS_FILE), &result.record)?;
    let phases = dir.join(PHASES_FILE);
    let player0 = result.output.layout.computation_agent(0);
    for phase in result.output.ledger.completed() {
        append_line(&phases, &phase.record(id, player0))?;
    }

    let synthetic = dir.join("synthetic");
    fs::create_dir_all(&synthetic).map_err(io_err(&synthetic))?;
    let path = synthetic.join(format!("{id}.csv"));
    let file = File::create(&path).map_err(io_err(&path))?;
    write_dataset(
        BufWriter::new(file),
        &result.output.schema,
        &result.output.records,
    )?;

    let traces = dir.join("traces");
    fs::create_dir_all(&traces).map_err(io_err(&traces))?;
    let path = traces.join(format!("{id}.jsonl"));
    let mut sink = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    match &result.output.generation.trace {
        Some(trace) => write_trace_jsonl(trace, &mut sink).map_err(io_err(&path))?,
        None => {
            for m in &result.output.generation.measurements {
                serde_json::to_writer(&mut sink, m).expect("measurement serializes");
                sink.write_all(b"\n").map_err(io_err(&path))?;
            }
        }
    }
    sink.flush().map_err(io_err(&path))
}

/// Runs every (providers, iterations, repetition) point and appends the
/// results under `config.output`. Points run one after another unless
/// `parallel` is set; output order is the same either way.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>, CliError> {
    config.validate()?;
    let manifest = match &config.enclave_manifest {
        Some(path) => {
            Some(fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    // fail on unreadable inputs before any run starts
    build_dataset(config, config.providers[0])?;
    fs::create_dir_all(&config.output).map_err(io_err(&config.output))?;

    let points: Vec<(usize, usize)> = config
        .providers
        .iter()
        .flat_map(|&p| config.iteration_sweep().into_iter().map(move |t| (p, t)))
        .collect();
    let run_reps = |&(p, t): &(usize, usize)| -> Result<Vec<RunResult>, CliError> {
        (0..config.repetitions)
            .map(|r| run_point(config, manifest.as_deref(), p, t, r))
            .collect()
    };
    let results: Vec<Result<Vec<RunResult>, CliError>> = if config.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = points
                .iter()
                .map(|pt| s.spawn(move || run_reps(pt)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        })
    } else {
        points.iter().map(run_reps).collect()
    };

    let mut records = Vec::new();
    for point in results {
        for result in point? {
            write_run(&config.output, &result)?;
            records.push(result.record);
        }
    }
    Ok(records)
}
