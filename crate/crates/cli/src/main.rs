use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hybridsynth::agents::TransportKind;
use hybridsynth::netsim::ClockMode;
use hybridsynth::synthgen::GeneratorKind;
use hybridsynth_cli::{
    read_records, render_table, run_experiment, schema_from_csv, summarize, CliError,
    DatasetSource, ExperimentConfig, PartitionStrategy,
};

#[derive(Parser)]
#[command(
    name = "hybridsynth",
    version,
    about = "Decentralised DP synthetic data experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a provider/iteration sweep and append metrics under the output directory.
    Run(RunArgs),
    /// Mean ± sd per sweep point from one or more metrics files.
    Summarize {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Print JSON lines instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Print a schema template inferred from a CSV file.
    GenSchema { csv: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Mwem,
    MeasureGenerate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    Wall,
    Frozen,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    InProcess,
    TcpLoopback,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment file (TOML). Flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    providers: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    iterations: Option<Vec<usize>>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Bins of the simulated attribute.
    #[arg(long)]
    bins: Option<usize>,
    /// Fixed total record count split across providers.
    #[arg(long, conflicts_with = "per_provider")]
    total: Option<usize>,
    /// Records held by each provider.
    #[arg(long)]
    per_provider: Option<usize>,
    /// Use a CSV dataset with this schema file.
    #[arg(long, requires = "schema")]
    csv: Option<PathBuf>,
    #[arg(long, requires = "csv")]
    schema: Option<PathBuf>,
    #[arg(long, value_enum)]
    generator: Option<Generator>,
    #[arg(long)]
    synthetic_records: Option<usize>,
    #[arg(long)]
    computation_agents: Option<usize>,
    #[arg(long)]
    encryption_agents: Option<usize>,
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long, value_enum)]
    clock: Option<Clock>,
    #[arg(long, value_enum)]
    transport: Option<Transport>,
    #[arg(long)]
    enclave_manifest: Option<PathBuf>,
    #[arg(long)]
    expected_measurement: Option<String>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Run sweep points concurrently.
    #[arg(long)]
    parallel: bool,
}

impl RunArgs {
    fn resolve(self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.providers {
            c.providers = v;
        }
        if let Some(v) = self.iterations {
            c.iterations = v;
        }
        if let Some(v) = self.repetitions {
            c.repetitions = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.epsilon {
            c.protocol.generator.epsilon = v;
        }
        if let Some(v) = self.bins {
            match &mut c.dataset {
                DatasetSource::SimulatedUniform { bins, .. }
                | DatasetSource::SimulatedSkewed { bins, .. } => *bins = v,
                DatasetSource::Csv { .. } => {
                    return Err(CliError::Config(
                        "--bins applies to simulated data; edit the schema instead".into(),
                    ))
                }
            }
        }
        if let Some(v) = self.total {
            c.partition = PartitionStrategy::FixedTotal { total: Some(v) };
        }
        if let Some(v) = self.per_provider {
            c.partition = PartitionStrategy::VariableTotal { per_provider: v };
        }
        if let (Some(path), Some(schema)) = (self.csv, self.schema) {
            c.dataset = DatasetSource::Csv { path, schema };
        }
        if let Some(g) = self.generator {
            c.protocol.generator.kind = match g {
                Generator::Mwem => GeneratorKind::Mwem,
                Generator::MeasureGenerate => GeneratorKind::MeasureGenerate,
            };
        }
        if let Some(v) = self.synthetic_records {
            c.protocol.generator.synthetic_records = v;
        }
        if let Some(v) = self.computation_agents {
            c.protocol.n_computation_agents = v;
        }
        if let Some(v) = self.encryption_agents {
            c.protocol.n_encryption_agents = v;
        }
        if let Some(v) = self.threshold {
            c.protocol.threshold = Some(v);
        }
        if let Some(v) = self.clock {
            c.protocol.clock = match v {
                Clock::Wall => ClockMode::Wall,
                Clock::Frozen => ClockMode::Frozen,
            };
        }
        if let Some(v) = self.transport {
            c.protocol.transport = match v {
                Transport::InProcess => TransportKind::InProcess,
                Transport::TcpLoopback => TransportKind::TcpLoopback,
            };
        }
        if let Some(v) = self.enclave_manifest {
            c.enclave_manifest = Some(v);
        }
        if let Some(v) = self.expected_measurement {
            c.protocol.expected_measurement = Some(v);
        }
        if let Some(v) = self.output {
            c.output = v;
        }
        c.parallel |= self.parallel;
        Ok(c)
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let config = args.resolve()?;
            let records = run_experiment(&config)?;
            eprintln!(
                "{} runs written to {}",
                records.len(),
                config.output.display()
            );
            Ok(())
        }
        Command::Summarize { metrics, json } => {
            let mut records = Vec::new();
            for path in &metrics {
                let file = File::open(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                records.extend(read_records(BufReader::new(file))?);
            }
            let rows = summarize(&records)?;
            if json {
                for row in &rows {
                    println!("{}", serde_json::to_string(row).expect("row serializes"));
                }
            } else {
                print!("{}", render_table(&rows));
            }
            Ok(())
        }
        Command::GenSchema { csv } => {
            let file = File::open(&csv)
                .map_err(|e| CliError::Config(format!("{}: {e}", csv.display())))?;
            print!("{}", schema_from_csv(file)?.to_toml_string());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // bad flags are configuration errors
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
