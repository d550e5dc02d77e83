//! `interdp` command-line interface.
//!
//! Exit codes: 0 clean, 1 usage or I/O error, 2 unknown mode during a run,
//! 3 prognosis-compute-time (Hypothesis 1) violation, 4 model or validation
//! error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use interdp_core::behavior::build_behavior_automaton;
use interdp_core::diagnoser::{build_diagnoser, Diagnoser, DEFAULT_STATE_CAP};
use interdp_core::interdp::{check_hypothesis1, run, trace_to_csv, RunConfig};
use interdp_core::model::{load_model, HybridModel};
use interdp_core::parity::{FilterConfig, ResidualBank, DEFAULT_STIMULUS_SEED};
use interdp_core::prognoser::{propagate_sequence, rebase_for_hypothesis, rul, AgingState};
use interdp_core::sim::{load_scenario, observations_from_csv, observations_to_csv, simulate, Scenario};
use interdp_core::Hypothesis;

const EXIT_USAGE: u8 = 1;
const EXIT_UNKNOWN_MODE: u8 = 2;
const EXIT_HYP1: u8 = 3;
const EXIT_MODEL: u8 = 4;

#[derive(Parser)]
#[command(name = "interdp", version, about = "Interleaved diagnosis and prognosis of hybrid systems")]
struct Cli {
    /// Override the model's P_max decision threshold.
    #[arg(long, global = true)]
    p_max: Option<f64>,
    /// Emit one output per observation tick instead of per diagnosis change.
    #[arg(long, global = true)]
    emit_every_tick: bool,
    /// Abort diagnoser construction beyond this many states.
    #[arg(long, global = true, default_value_t = DEFAULT_STATE_CAP)]
    max_diagnoser_states: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a model file.
    Validate { model: PathBuf },
    /// Print the mode-signature table and diagnosability partition as CSV.
    Signatures { model: PathBuf },
    /// Dump the behavior automaton as a dot-compatible graph.
    Ba { model: PathBuf },
    /// Build the diagnoser and persist it.
    Build {
        model: PathBuf,
        /// Output file for the binary diagnoser container.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Print a deterministic text listing instead.
        #[arg(long)]
        dump_text: bool,
    },
    /// Predict the dated fault sequence and RUL from a given mode.
    Prognose {
        model: PathBuf,
        /// Hypothesis mode to prognose from.
        #[arg(long)]
        mode: String,
        /// Current model time.
        #[arg(long, default_value_t = 0.0)]
        now: f64,
    },
    /// Simulate the plant under a scenario and print the observation CSV.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the full InterDP loop over a scenario or a recorded trace.
    Run {
        model: PathBuf,
        #[arg(long, conflicts_with = "replay")]
        scenario: Option<PathBuf>,
        /// Replay a previously exported observation CSV.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Scenario file supplying filter settings when replaying.
        #[arg(long, requires = "replay")]
        replay_scenario: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Check the prognosis-compute-time hypothesis over a scenario run.
    CheckHyp1 {
        model: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints help/version through the error display path too.
            let _ = err.print();
            return match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("{}", err.message);
            ExitCode::from(err.code)
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn model(err: impl std::fmt::Display) -> Self {
        CliError { code: EXIT_MODEL, message: err.to_string() }
    }
    fn usage(err: impl std::fmt::Display) -> Self {
        CliError { code: EXIT_USAGE, message: err.to_string() }
    }
}

fn load(path: &PathBuf, p_max: Option<f64>) -> Result<HybridModel, CliError> {
    let mut model = load_model(path).map_err(CliError::model)?;
    if let Some(p) = p_max {
        if !(p > 0.0 && p < 1.0) {
            return Err(CliError::usage("--p-max must lie in (0, 1)"));
        }
        model.p_max = p;
    }
    Ok(model)
}

fn build_bank(model: &HybridModel, filter: FilterConfig) -> Result<ResidualBank, CliError> {
    ResidualBank::build(model, filter, DEFAULT_STIMULUS_SEED).map_err(CliError::model)
}

fn build_diag(model: &HybridModel, bank: &ResidualBank, cap: usize) -> Result<Diagnoser, CliError> {
    let ba = build_behavior_automaton(model, bank);
    build_diagnoser(&ba, &model.fingerprint(), cap).map_err(CliError::model)
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(CliError::usage),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    let p_max = cli.p_max;
    match cli.command {
        Command::Validate { model } => {
            load(&model, p_max)?;
            println!("OK");
            Ok(0)
        }
        Command::Signatures { model } => {
            let model = load(&model, p_max)?;
            let bank = build_bank(&model, FilterConfig::default())?;
            println!("mode,group,bits");
            for m in &model.modes {
                let group = bank.group_of(&m.id).expect("mode in partition");
                println!("{},{},{}", m.id, group, bank.signatures[&m.id].bits_string());
            }
            Ok(0)
        }
        Command::Ba { model } => {
            let model = load(&model, p_max)?;
            let bank = build_bank(&model, FilterConfig::default())?;
            let ba = build_behavior_automaton(&model, &bank);
            print!("{}", ba.to_dot());
            Ok(0)
        }
        Command::Build { model, out, dump_text } => {
            let model = load(&model, p_max)?;
            let bank = build_bank(&model, FilterConfig::default())?;
            let diag = build_diag(&model, &bank, cli.max_diagnoser_states)?;
            if dump_text {
                print!("{}", diag.dump_text());
            }
            if let Some(path) = out {
                std::fs::write(&path, diag.to_bytes()).map_err(CliError::usage)?;
                eprintln!("wrote {} states to {}", diag.states.len(), path.display());
            }
            Ok(0)
        }
        Command::Prognose { model, mode, now } => {
            let model = load(&model, p_max)?;
            let mode_def = model
                .mode(&mode)
                .ok_or_else(|| CliError::model(format!("unknown mode {mode}")))?;
            let hypothesis = Hypothesis { mode: mode.clone(), faults: mode_def.faults.clone() };
            let aging = AgingState::initial(&model);
            let aging = rebase_for_hypothesis(&model, &aging, &hypothesis, now).map_err(CliError::model)?;
            let sequence =
                propagate_sequence(&model, &mode, now, &aging, model.p_max).map_err(CliError::model)?;
            let life = rul(&sequence, &hypothesis.faults, &model.failure_tree, now);
            println!("fault,date,cumulative_probability");
            for (fault, date) in &sequence.entries {
                let p = aging.0[fault]
                    .accumulated_p(now)
                    .map_err(CliError::model)?;
                println!("{fault},{date},{p}");
            }
            match life {
                Some(r) => println!("rul,{},{r}", now + r),
                None => println!("rul,,"),
            }
            Ok(0)
        }
        Command::Simulate { model, scenario, out } => {
            let model = load(&model, p_max)?;
            let scenario = load_scenario(&scenario).map_err(CliError::model)?;
            let (obs, _) = simulate(&model, &scenario).map_err(CliError::model)?;
            write_or_print(&out, &observations_to_csv(&model, &obs))?;
            Ok(0)
        }
        Command::Run { model, scenario, replay, replay_scenario, out } => {
            let model = load(&model, p_max)?;
            let (observations, scenario) = match (&scenario, &replay) {
                (Some(path), None) => {
                    let scenario = load_scenario(path).map_err(CliError::model)?;
                    let (obs, _) = simulate(&model, &scenario).map_err(CliError::model)?;
                    (obs, scenario)
                }
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(path).map_err(CliError::usage)?;
                    let obs = observations_from_csv(&model, &text).map_err(CliError::model)?;
                    let scenario = match &replay_scenario {
                        Some(s) => load_scenario(s).map_err(CliError::model)?,
                        None => default_replay_scenario(),
                    };
                    (obs, scenario)
                }
                _ => return Err(CliError::usage("run needs exactly one of --scenario or --replay")),
            };
            let filter = FilterConfig { threshold: scenario.epsilon, debounce: scenario.debounce };
            let bank = build_bank(&model, filter)?;
            let diag = build_diag(&model, &bank, cli.max_diagnoser_states)?;
            let outputs = run(
                &model,
                &diag,
                &bank,
                &observations,
                RunConfig { emit_every_tick: cli.emit_every_tick },
            )
            .map_err(CliError::model)?;
            write_or_print(&out, &trace_to_csv(&outputs))?;
            if outputs.iter().any(|o| o.unknown_mode) {
                eprintln!("unknown mode: tracking lost");
                return Ok(EXIT_UNKNOWN_MODE);
            }
            let report = check_hypothesis1(&outputs, scenario.real_time_scale);
            if !report.violations.is_empty() {
                eprintln!("hypothesis 1 violated at {} emission(s)", report.violations.len());
                return Ok(EXIT_HYP1);
            }
            Ok(0)
        }
        Command::CheckHyp1 { model, scenario } => {
            let model = load(&model, p_max)?;
            let scenario = load_scenario(&scenario).map_err(CliError::model)?;
            let (obs, _) = simulate(&model, &scenario).map_err(CliError::model)?;
            let filter = FilterConfig { threshold: scenario.epsilon, debounce: scenario.debounce };
            let bank = build_bank(&model, filter)?;
            let diag = build_diag(&model, &bank, cli.max_diagnoser_states)?;
            let outputs = run(
                &model,
                &diag,
                &bank,
                &obs,
                RunConfig { emit_every_tick: cli.emit_every_tick },
            )
            .map_err(CliError::model)?;
            let report = check_hypothesis1(&outputs, scenario.real_time_scale);
            println!("t_k,t_next,compute_time,budget");
            for v in &report.violations {
                println!("{},{},{},{}", v.t_k, v.t_next, v.compute_time, v.budget);
            }
            if report.violations.is_empty() {
                Ok(0)
            } else {
                Ok(EXIT_HYP1)
            }
        }
    }
}

fn default_replay_scenario() -> Scenario {
    use interdp_core::sim::InputSignal;
    Scenario {
        duration: 0.0,
        input: InputSignal::Constant { values: vec![] },
        events: vec![],
        noise_std: vec![],
        noise_seed: 0,
        real_time_scale: 1.0,
        epsilon: 1e-6,
        debounce: 1,
    }
}
