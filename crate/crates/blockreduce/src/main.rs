//! Scenario runner: parses configs, executes library scenarios, emits
//! metrics files and human-readable summaries.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use blockreduce::netsim::{bandwidth_sweep, run, run_attack, ConfigError, SimConfig};

const EXIT_SCENARIO: u8 = 1;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "blockreduce", version, about = "Merge-mined hierarchy simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario config: a path, or a bare name resolved against ./configs.
    #[arg(long)]
    config: String,
    /// Scenario seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory; defaults to $BLOCKREDUCE_OUT or ./out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured simulated duration, in seconds.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics, summary and a reproduction
    /// manifest.
    Run(CommonArgs),
    /// Run the zone-takeover attack scenario across one or more seeds.
    Attack {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of consecutive seeds to run, starting at --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Fan the seeds out across this many worker threads.
        #[arg(long, default_value_t = 1)]
        parallel_seeds: usize,
    },
    /// Compare flat-gossip and protocol bandwidth across demand
    /// multipliers.
    BandwidthSweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Demand multipliers, e.g. 1,2,4,8,16.
        #[arg(long, value_delimiter = ',')]
        multipliers: Option<Vec<u32>>,
    },
    /// Validate a scenario config and exit.
    ValidateConfig {
        #[arg(long)]
        config: String,
    },
    /// Run a scenario and dump the canonical chain as line-delimited
    /// records.
    ExportChain(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(CliError::Scenario(msg)) => {
            eprintln!("scenario error: {msg}");
            ExitCode::from(EXIT_SCENARIO)
        }
    }
}

enum CliError {
    Config(ConfigError),
    Scenario(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(common) => {
            let (config, config_text) = load_config(&common)?;
            let out = out_dir(&common)?;
            let metrics = run(&config, common.seed);
            write_out(&out, "metrics.jsonl", &metrics.to_jsonl())?;
            write_out(&out, "summary.txt", &metrics.summary_table())?;
            write_manifest(&out, &config_text, &config, common.seed, "run")?;
            print!("{}", metrics.summary_table());
            Ok(())
        }
        Command::Attack { common, seeds, parallel_seeds } => {
            let (config, config_text) = load_config(&common)?;
            let out = out_dir(&common)?;
            let seed_list: Vec<u64> = (common.seed..common.seed + seeds).collect();
            let reports = run_attacks_parallel(&config, &seed_list, parallel_seeds.max(1));
            let mut jsonl = String::new();
            let mut won = 0u64;
            for report in &reports {
                jsonl.push_str(&serde_json::to_string(report).expect("serializable"));
                jsonl.push('\n');
                if report.honest_fork_won {
                    won += 1;
                }
            }
            write_out(&out, "attack_report.jsonl", &jsonl)?;
            write_manifest(&out, &config_text, &config, common.seed, "attack")?;
            println!(
                "honest fork won {won}/{} runs (adversary share {:.0}%, migration {})",
                reports.len(),
                config.attack.share * 100.0,
                if config.group_selection.enabled { "on" } else { "off" }
            );
            for report in &reports {
                println!(
                    "seed {:>4}  honest_won={}  overtake_s={}",
                    report.seed,
                    report.honest_fork_won,
                    report
                        .overtake_time_s
                        .map(|t| format!("{t:.1}"))
                        .unwrap_or_else(|| "-".into()),
                );
            }
            Ok(())
        }
        Command::BandwidthSweep { common, multipliers } => {
            let (config, config_text) = load_config(&common)?;
            let out = out_dir(&common)?;
            let multipliers = multipliers.unwrap_or_else(|| config.sweep.multipliers.clone());
            if multipliers.is_empty() || multipliers.iter().any(|&m| m == 0) {
                return Err(CliError::Config(ConfigError::Invalid(
                    "multipliers must be positive".into(),
                )));
            }
            let table = bandwidth_sweep(&config, common.seed, &multipliers);
            let mut jsonl = String::new();
            for row in &table.rows {
                jsonl.push_str(&serde_json::to_string(row).expect("serializable"));
                jsonl.push('\n');
            }
            write_out(&out, "sweep.jsonl", &jsonl)?;
            write_out(&out, "sweep_table.txt", &table.to_text())?;
            write_manifest(&out, &config_text, &config, common.seed, "bandwidth-sweep")?;
            print!("{}", table.to_text());
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let text = read_config_text(&config)?;
            SimConfig::from_toml(&text)?;
            println!("config ok");
            Ok(())
        }
        Command::ExportChain(common) => {
            let (config, config_text) = load_config(&common)?;
            let out = out_dir(&common)?;
            let mut engine = blockreduce::netsim::Engine::new(config.clone(), common.seed);
            engine.run_to_end();
            let dump = engine.export_chain();
            write_out(&out, "chain.txt", &dump)?;
            write_manifest(&out, &config_text, &config, common.seed, "export-chain")?;
            print!("{dump}");
            Ok(())
        }
    }
}

fn run_attacks_parallel(
    config: &SimConfig,
    seeds: &[u64],
    workers: usize,
) -> Vec<blockreduce::netsim::AttackReport> {
    if workers <= 1 || seeds.len() <= 1 {
        return seeds.iter().map(|&s| run_attack(config, s)).collect();
    }
    let mut reports: Vec<Option<blockreduce::netsim::AttackReport>> = vec![None; seeds.len()];
    std::thread::scope(|scope| {
        let chunks: Vec<(usize, &[u64])> = seeds
            .chunks(seeds.len().div_ceil(workers))
            .enumerate()
            .map(|(i, c)| (i * seeds.len().div_ceil(workers), c))
            .collect();
        let mut handles = Vec::new();
        for (offset, chunk) in chunks {
            let config = config.clone();
            handles.push((offset, scope.spawn(move || {
                chunk.iter().map(|&s| run_attack(&config, s)).collect::<Vec<_>>()
            })));
        }
        for (offset, handle) in handles {
            for (i, report) in handle.join().expect("attack worker").into_iter().enumerate() {
                reports[offset + i] = Some(report);
            }
        }
    });
    reports.into_iter().map(|r| r.expect("all seeds ran")).collect()
}

/// Resolves a config argument: an existing path wins, otherwise the name is
/// tried with a .toml suffix and under ./configs.
fn read_config_text(arg: &str) -> Result<String, ConfigError> {
    let direct = Path::new(arg);
    let candidates = [
        direct.to_path_buf(),
        PathBuf::from(format!("{arg}.toml")),
        PathBuf::from("configs").join(format!("{arg}.toml")),
    ];
    for candidate in &candidates {
        if candidate.is_file() {
            return Ok(std::fs::read_to_string(candidate)?);
        }
    }
    Err(ConfigError::Invalid(format!("config not found: {arg}")))
}

fn load_config(common: &CommonArgs) -> Result<(SimConfig, String), CliError> {
    let text = read_config_text(&common.config)?;
    let mut config = SimConfig::from_toml(&text)?;
    if let Some(duration) = common.duration {
        if duration <= 0.0 {
            return Err(CliError::Config(ConfigError::Invalid(
                "duration must be positive".into(),
            )));
        }
        config.sim.duration_s = duration;
    }
    Ok((config, text))
}

fn out_dir(common: &CommonArgs) -> Result<PathBuf, CliError> {
    let dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os("BLOCKREDUCE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Scenario(format!("cannot create output dir: {e}")))?;
    Ok(dir)
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::write(dir.join(name), content)
        .map_err(|e| CliError::Scenario(format!("cannot write {name}: {e}")))
}

/// The manifest alone reproduces a run: the resolved config, the seed and
/// the command, plus the artifact version.
fn write_manifest(
    dir: &Path,
    config_text: &str,
    config: &SimConfig,
    seed: u64,
    command: &str,
) -> Result<(), CliError> {
    let manifest = format!(
        "# reproduction manifest\n# command = \"{command}\"\n# seed = {seed}\n# version = \"{}\"\n# duration_s = {}\n\n{config_text}",
        env!("CARGO_PKG_VERSION"),
        config.sim.duration_s,
    );
    write_out(dir, "manifest.toml", &manifest)
}
