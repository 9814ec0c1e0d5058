//! The `run`, `batch` and `metrics` subcommands as plain functions returning
//! an exit code.

use std::fs;
use std::io::Write;
use std::path::Path;

use handover_core::metrics::{aggregate, compute_metrics, write_metrics_csv, SuccessCriteria};
use handover_core::scenario::{
    execute, execute_batch, generate_experiment1, generate_experiment2, ExecuteConfig, MotionKind,
    ObjectKind, RunOutcome, ScenarioScript, StartSampling, Workspace,
};
use handover_core::session::TrajectoryLog;
use serde::{Deserialize, Serialize};

use crate::bundle::{CliError, ConfigBundle, EXIT_SUCCESS, EXIT_SYSTEM_ERROR, EXIT_TASK_FAILURE};

pub const OUTCOME_FILE: &str = "outcome.json";
pub const LOG_FILE: &str = "trajectory.ndjson";
pub const METRICS_FILE: &str = "metrics.csv";
pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SCRIPTS_FILE: &str = "scripts.json";

fn system(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::System(format!("{what}: {e}"))
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| system(&format!("creating {}", out.display()), e))
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| system(&format!("creating {}", path.display()), e))
}

fn execute_config(bundle: &ConfigBundle, keep_log: bool) -> ExecuteConfig {
    ExecuteConfig {
        chain: bundle.chain.clone(),
        session: bundle.session.clone(),
        profile: bundle.profile,
        criteria: SuccessCriteria::default(),
        keep_log,
    }
}

pub fn load_script(path: &Path) -> Result<ScenarioScript, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::invalid("scenario", format!("cannot read {}: {e}", path.display())))?;
    let script = ScenarioScript::from_json(&text).map_err(|e| CliError::invalid("scenario", e))?;
    script.validate().map_err(|e| CliError::invalid("scenario", e))?;
    Ok(script)
}

/// Executes one scenario and writes its log, metrics and outcome into `out`.
pub fn run(bundle: &ConfigBundle, scenario: &Path, out: &Path, log_stride: usize) -> Result<u8, CliError> {
    if log_stride == 0 {
        return Err(CliError::invalid("log_stride", "must be > 0"));
    }
    let script = load_script(scenario)?;
    if script.robot_start.q.len() != bundle.chain.dof() {
        return Err(CliError::invalid(
            "scenario.robot_start",
            format!("{} joints given, chain has {}", script.robot_start.q.len(), bundle.chain.dof()),
        ));
    }
    let outcome = execute(&script, &execute_config(bundle, true));
    create_dir(out)?;
    if let Some(log) = &outcome.log {
        let mut w = create_file(&out.join(LOG_FILE))?;
        log.write_ndjson(&mut w, log_stride).map_err(|e| system("writing log", e))?;
        w.flush().map_err(|e| system("writing log", e))?;
    }
    if let Some(m) = &outcome.metrics {
        let w = create_file(&out.join(METRICS_FILE))?;
        write_metrics_csv(w, std::slice::from_ref(m)).map_err(|e| system("writing metrics", e))?;
    }
    let mut w = create_file(&out.join(OUTCOME_FILE))?;
    serde_json::to_writer_pretty(&mut w, &outcome).map_err(|e| system("writing outcome", e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| system("writing outcome", e))?;

    println!("{}", outcome_line(&outcome));
    Ok(if outcome.is_system_failure() {
        EXIT_SYSTEM_ERROR
    } else if outcome.success {
        EXIT_SUCCESS
    } else {
        EXIT_TASK_FAILURE
    })
}

fn outcome_line(o: &RunOutcome) -> String {
    match &o.failure_reason {
        None => format!("{}: success", o.script_id),
        Some(r) => format!("{}: failure ({r})", o.script_id),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Hand moved by a random translation or rotation after the robot starts.
    Exp1,
    /// Random robot starts; the hand moves after the final approach begins.
    Exp2,
}

impl std::str::FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "exp1" => Ok(Experiment::Exp1),
            "exp2" => Ok(Experiment::Exp2),
            other => Err(CliError::invalid("experiment", format!("unknown experiment `{other}` (exp1 or exp2)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchArgs {
    pub experiment: Experiment,
    /// Experiment I objects; empty means all.
    pub objects: Vec<ObjectKind>,
    /// Experiment I motions; empty means both.
    pub motions: Vec<MotionKind>,
    pub runs: usize,
    pub seed: u64,
}

/// Scripts of a batch, in execution order.
pub fn batch_scripts(bundle: &ConfigBundle, args: &BatchArgs) -> Result<Vec<ScenarioScript>, CliError> {
    if args.runs == 0 {
        return Err(CliError::invalid("runs", "must be > 0"));
    }
    let ws = Workspace::default();
    match args.experiment {
        Experiment::Exp1 => {
            let objects = if args.objects.is_empty() { ObjectKind::ALL.to_vec() } else { args.objects.clone() };
            let motions = if args.motions.is_empty() {
                vec![MotionKind::Translation, MotionKind::Rotation]
            } else {
                args.motions.clone()
            };
            let mut scripts = Vec::new();
            for object in &objects {
                for motion in &motions {
                    scripts.extend(
                        generate_experiment1(args.seed, *object, *motion, args.runs, &ws)
                            .map_err(|e| system("generating scripts", e))?,
                    );
                }
            }
            Ok(scripts)
        }
        Experiment::Exp2 => {
            // Start sampling is defined on the joint space of the bundled arm.
            if bundle.chain.dof() != ws.robot_ready.len() {
                return Err(CliError::invalid("chain", "exp2 needs a 7-joint arm"));
            }
            generate_experiment2(args.seed, args.runs, &bundle.chain, &ws, &StartSampling::default())
                .map_err(|e| system("generating scripts", e))
        }
    }
}

/// Per-run rows: identity, outcome, then the metric columns.
pub fn write_runs_csv<W: Write>(w: W, outcomes: &[RunOutcome]) -> Result<(), csv::Error> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "script_id", "condition", "success", "failure_reason", "t_a", "d_i", "L_r", "L_o", "e_d", "theta_i",
        "theta_r", "theta_o", "e_theta", "finger_error",
    ])?;
    for o in outcomes {
        let mut record = vec![
            o.script_id.clone(),
            o.condition.clone(),
            o.success.to_string(),
            o.failure_reason.as_ref().map(|r| r.to_string()).unwrap_or_default(),
        ];
        match &o.metrics {
            Some(m) => {
                record.extend(m.values().iter().map(|v| format!("{v:.4}")));
                record.push(format!("{:.4}", m.finger_error));
            }
            None => record.extend(std::iter::repeat_n(String::new(), 10)),
        }
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

/// Generates and executes a batch, writing scripts, per-run rows and the
/// per-condition summary table into `out`.
pub fn batch(bundle: &ConfigBundle, args: &BatchArgs, out: &Path) -> Result<u8, CliError> {
    let scripts = batch_scripts(bundle, args)?;
    let outcomes = execute_batch(&scripts, &execute_config(bundle, false));
    create_dir(out)?;

    let mut w = create_file(&out.join(SCRIPTS_FILE))?;
    serde_json::to_writer_pretty(&mut w, &scripts).map_err(|e| system("writing scripts", e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| system("writing scripts", e))?;

    write_runs_csv(create_file(&out.join(RUNS_FILE))?, &outcomes).map_err(|e| system("writing runs", e))?;

    let table = aggregate(&outcomes, |o| o.condition.clone()).map_err(|e| system("aggregating", e))?;
    let mut summary = Vec::new();
    table.write_csv(&mut summary).map_err(|e| system("writing summary", e))?;
    fs::write(out.join(SUMMARY_FILE), &summary).map_err(|e| system("writing summary", e))?;

    for row in &table.rows {
        println!(
            "{}: {}/{} successful ({:.0}%), {} system failures",
            row.condition, row.successes, row.attempts, row.sr, row.system_failures
        );
    }
    Ok(EXIT_SUCCESS)
}

/// Recomputes metrics from a saved trajectory log and writes them as CSV.
pub fn metrics<W: Write>(log_path: &Path, w: W) -> Result<u8, CliError> {
    let text = fs::read_to_string(log_path)
        .map_err(|e| CliError::invalid("log", format!("cannot read {}: {e}", log_path.display())))?;
    let log = TrajectoryLog::read_ndjson(&text).map_err(|e| CliError::invalid("log", e))?;
    let m = compute_metrics(&log).map_err(|e| CliError::invalid("log", e))?;
    write_metrics_csv(w, &[m]).map_err(|e| system("writing metrics", e))?;
    Ok(EXIT_SUCCESS)
}
