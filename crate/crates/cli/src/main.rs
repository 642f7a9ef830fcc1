mod commands;
mod experiment;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use switchnet_core::catalog;

use experiment::{parse_override, Experiment, Kind};
use output::{metrics_csv, write_bundle, Provenance, Summary};

#[derive(Parser)]
#[command(name = "switchnet", version, about = "Store-Forward, Proportional Scheduler and BackPressure experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Loads, mean queue lengths and mean route delays from the product form.
    Analyze(Common),
    /// Simulate a policy and report queue lengths and delays.
    Simulate(Common),
    /// Analytic Store-Forward means next to simulated ones.
    Compare(Common),
    /// Pairwise independence tests of stationary queue lengths.
    Independence(Common),
    /// Scaling limit of the normalizing constant and the rate function.
    Ldp(Common),
    /// Partial balance checks on stationary states.
    Balance(Common),
    /// List the bundled example networks.
    Examples,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network: example name or path to a network file; shorthand for `--override network=...`.
    #[arg(long)]
    network: Option<String>,
    /// Replication seed; repeat for several replications.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Simulation horizon, in the unit set by `simulation.unit`.
    #[arg(long)]
    horizon: Option<f64>,
    /// Output directory for metrics.csv and summary.json.
    #[arg(long, default_value = "switchnet-out")]
    out: PathBuf,
    /// Set a dotted config key, e.g. `simulation.policy=ps`.
    #[arg(long = "override", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<switchnet_core::Error> for Failure {
    fn from(e: switchnet_core::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SWITCHNET_THREADS") else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Failure::Validation(format!("SWITCHNET_THREADS: expected a positive integer, got {raw:?}"))
        })?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Runtime(e.to_string()))
}

fn run_experiment(kind: Kind, args: &Common) -> Result<(), Failure> {
    let mut overrides = Vec::new();
    if let Some(n) = &args.network {
        overrides.push(("network".to_string(), toml::Value::String(n.clone()).to_string()));
    }
    overrides.extend(args.overrides.iter().cloned());
    if !args.seeds.is_empty() {
        let list: Vec<String> = args.seeds.iter().map(u64::to_string).collect();
        overrides.push(("seeds".to_string(), format!("[{}]", list.join(", "))));
    }
    if let Some(h) = args.horizon {
        overrides.push(("simulation.horizon".to_string(), format!("{h:?}")));
    }
    let exp = Experiment::load(args.config.as_deref(), &overrides)?;
    if let Some(declared) = exp.config.kind {
        if declared != kind {
            return Err(Failure::Validation(format!(
                "kind: the experiment declares {:?} but the {:?} subcommand was run",
                declared.name(),
                kind.name()
            )));
        }
    }
    let spec = exp.network()?;
    let bundle = commands::run(kind, &exp, &spec)?;

    let csv_text = metrics_csv(&bundle.rows).map_err(|e| Failure::Runtime(e.to_string()))?;
    let summary = Summary {
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: kind.name(),
            config_hash: exp.hash(),
            seeds: exp.config.seeds.clone(),
            config: exp.document.clone(),
        },
        network: serde_json::to_value(switchnet_core::config::NetworkConfig::from_spec(&spec))
            .map_err(|e| Failure::Runtime(e.to_string()))?,
        results: bundle.results,
    };
    write_bundle(&args.out, &csv_text, &summary)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", args.out.display())))?;
    print!("{csv_text}");
    Ok(())
}

fn list_examples() -> Result<(), Failure> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(std::io::stdout());
    let io = |e: csv::Error| Failure::Runtime(e.to_string());
    w.write_record(["name", "queues", "routes", "perfect", "description"]).map_err(io)?;
    for info in catalog::list_examples()? {
        let perfect = match info.perfect {
            Some(true) => "perfect",
            Some(false) => "non-perfect",
            None => "matrix",
        };
        w.write_record([
            info.name,
            &info.num_queues.to_string(),
            &info.num_routes.to_string(),
            perfect,
            info.description,
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match &cli.command {
        Command::Analyze(a) => run_experiment(Kind::Analyze, a),
        Command::Simulate(a) => run_experiment(Kind::Simulate, a),
        Command::Compare(a) => run_experiment(Kind::Compare, a),
        Command::Independence(a) => run_experiment(Kind::Independence, a),
        Command::Ldp(a) => run_experiment(Kind::Ldp, a),
        Command::Balance(a) => run_experiment(Kind::Balance, a),
        Command::Examples => list_examples(),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
