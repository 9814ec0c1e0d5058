use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use handover_service::bundle::{BundleArgs, CliError, ConfigBundle, EXIT_INVALID_INPUT};
use handover_service::commands::{self, BatchArgs};
use handover_service::server::{self, ServerOptions};

/// Simulated human-to-robot handover: scenario runs, experiment batches and a
/// live steering server.
#[derive(Debug, Parser)]
#[command(name = "handover", version)]
struct Cli {
    #[command(flatten)]
    bundle: BundleOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct BundleOpts {
    /// Kinematic chain file (defaults to the bundled 7-joint arm).
    #[arg(long, global = true, env = "HANDOVER_CHAIN")]
    chain: Option<PathBuf>,
    /// Controller, gripper, filter and plant configuration file.
    #[arg(long, global = true, env = "HANDOVER_CONTROLLER_CONFIG")]
    controller_config: Option<PathBuf>,
    /// authoritative or cooperative.
    #[arg(long, global = true, env = "HANDOVER_PROFILE")]
    profile: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute one scenario file.
    Run {
        #[arg(long, env = "HANDOVER_SCENARIO")]
        scenario: PathBuf,
        #[arg(long, env = "HANDOVER_OUT")]
        out: PathBuf,
        /// Write every n-th tick to the trajectory log.
        #[arg(long, default_value_t = 1, env = "HANDOVER_LOG_STRIDE")]
        log_stride: usize,
    },
    /// Generate and execute a randomized experiment.
    Batch {
        /// exp1 or exp2.
        #[arg(long, env = "HANDOVER_EXPERIMENT")]
        experiment: String,
        /// Object for exp1; repeatable, all objects when omitted.
        #[arg(long = "object")]
        objects: Vec<String>,
        /// translation or rotation for exp1; repeatable, both when omitted.
        #[arg(long = "motion")]
        motions: Vec<String>,
        /// Runs per condition.
        #[arg(long, default_value_t = 20, env = "HANDOVER_RUNS")]
        runs: usize,
        #[arg(long, default_value_t = 0, env = "HANDOVER_SEED")]
        seed: u64,
        #[arg(long, env = "HANDOVER_OUT")]
        out: PathBuf,
    },
    /// Recompute metrics from a trajectory log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        /// Output CSV file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the live steering server.
    Serve {
        #[arg(long, default_value_t = 8765, env = "HANDOVER_PORT")]
        port: u16,
        #[arg(long, default_value = "127.0.0.1", env = "HANDOVER_BIND")]
        bind: std::net::IpAddr,
        /// State update rate (Hz), within [1, 120].
        #[arg(long, env = "HANDOVER_STREAM_HZ")]
        stream_hz: Option<f64>,
        /// Held object.
        #[arg(long, default_value = "cardboard_box", env = "HANDOVER_OBJECT")]
        object: String,
    },
}

fn parse_all<T: std::str::FromStr>(key: &str, values: &[String]) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    values.iter().map(|v| v.parse().map_err(|e| CliError::invalid(key, e))).collect()
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    let mut args = BundleArgs {
        chain: cli.bundle.chain,
        controller_config: cli.bundle.controller_config,
        profile: cli.bundle.profile,
        stream_hz: None,
    };
    match cli.command {
        Command::Run { scenario, out, log_stride } => {
            let bundle = ConfigBundle::load(&args)?;
            commands::run(&bundle, &scenario, &out, log_stride)
        }
        Command::Batch {
            experiment,
            objects,
            motions,
            runs,
            seed,
            out,
        } => {
            let bundle = ConfigBundle::load(&args)?;
            let batch = BatchArgs {
                experiment: experiment.parse()?,
                objects: parse_all("object", &objects)?,
                motions: parse_all("motion", &motions)?,
                runs,
                seed,
            };
            commands::batch(&bundle, &batch, &out)
        }
        Command::Metrics { log, out } => match out {
            Some(path) => {
                let file = std::fs::File::create(&path)
                    .map_err(|e| CliError::System(format!("creating {}: {e}", path.display())))?;
                commands::metrics(&log, file)
            }
            None => commands::metrics(&log, std::io::stdout().lock()),
        },
        Command::Serve {
            port,
            bind,
            stream_hz,
            object,
        } => {
            args.stream_hz = stream_hz;
            let bundle = ConfigBundle::load(&args)?;
            let options = ServerOptions {
                object: object.parse().map_err(|e| CliError::invalid("object", e))?,
                ..Default::default()
            };
            let handle = server::spawn(bundle, options, SocketAddr::new(bind, port))
                .map_err(|e| CliError::System(format!("starting server: {e}")))?;
            println!("listening on ws://{} session {}", handle.addr, handle.session_id);
            handle.wait();
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID_INPUT } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
