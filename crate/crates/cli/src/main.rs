//! `riskmpc` command-line front end.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use riskmpc::mpc::{
    controller_tree, initial_history, run_sensitivity, simulate, solve_step,
    write_aggregate_csv, write_node_decisions_csv, write_summary_csv, Mode, MpcError, NoiseKind,
    RunConfig,
};
use riskmpc::ocp::OcpError;
use riskmpc::uncertainty::{read_tree_csv, write_tree_csv};

#[derive(Parser)]
#[command(name = "riskmpc", version, about = "Risk-averse MPC of islanded microgrids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerMode {
    RiskAverse,
    CertaintyEquivalent,
    WorstCase,
    RiskNeutral,
}

impl From<ControllerMode> for Mode {
    fn from(m: ControllerMode) -> Self {
        match m {
            ControllerMode::RiskAverse => Mode::RiskAverse,
            ControllerMode::CertaintyEquivalent => Mode::CertaintyEquivalent,
            ControllerMode::WorstCase => Mode::WorstCase,
            ControllerMode::RiskNeutral => Mode::RiskNeutral,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseMode {
    Constant,
    Occasional,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of closed-loop steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory; defaults to the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ControllerArgs {
    /// Risk level in [0, 1]; implies `--mode risk-averse` unless a mode is
    /// given. `simulate` accepts a comma-separated sweep.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, value_enum)]
    mode: Option<ControllerMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the first OCP of the run; writes `solve.json` and
    /// `decisions.csv`.
    SolveOnce {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        controller: ControllerArgs,
        /// Scenario tree CSV to plan on instead of the generated one.
        #[arg(long)]
        tree: Option<PathBuf>,
    },
    /// Closed-loop simulation; writes `trajectory.csv` and `metrics.json`,
    /// one `alpha_<a>` subdirectory per level when sweeping.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        controller: ControllerArgs,
    },
    /// Replicated closed loops under added noise; writes `summary.csv`,
    /// `aggregate.csv` and `sensitivity.json`. `--seed` sets the noise meta-seed.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "constant")]
        mode: NoiseMode,
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Build the first scenario tree and write `tree.csv`.
    Tree {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ControllerMode>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_PLANT: u8 = 4;

struct Failure {
    code: u8,
    message: String,
}

impl From<MpcError> for Failure {
    fn from(e: MpcError) -> Self {
        let code = match &e {
            MpcError::Config(_) | MpcError::Json(_) | MpcError::Model(_) | MpcError::Uncertainty(_) => {
                EXIT_CONFIG
            }
            MpcError::Ocp(OcpError::Model(_)) => EXIT_CONFIG,
            MpcError::Ocp(_) => EXIT_SOLVER,
            MpcError::Plant(_) => EXIT_PLANT,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 1,
            message: format!("io: {e}"),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: 1,
            message: format!("json: {e}"),
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("{}: {e}", path.display()),
    })?;
    RunConfig::from_json(&text).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("{}: {e}", path.display()),
    })
}

fn prepare(common: &Common, controller: Option<&ControllerArgs>) -> Result<(RunConfig, PathBuf), Failure> {
    let mut cfg = load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(steps) = common.steps {
        cfg.simulation.steps = steps;
    }
    if let Some(c) = controller {
        match c.alpha[..] {
            [] => {}
            [a] => {
                cfg.controller.alpha = Some(a);
                cfg.controller.mode = Mode::RiskAverse;
            }
            _ => {
                return Err(Failure {
                    code: EXIT_CONFIG,
                    message: "this command takes a single --alpha".into(),
                })
            }
        }
        if let Some(m) = c.mode {
            cfg.controller.mode = m.into();
        }
    }
    cfg.validate()?;
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), value)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { config } => {
            load(&config)?;
            println!("{}: ok", config.display());
        }
        Command::SolveOnce {
            common,
            controller,
            tree,
        } => {
            let (cfg, out) = prepare(&common, Some(&controller))?;
            let tree = match tree {
                Some(path) => read_tree_csv(File::open(&path)?).map_err(MpcError::from)?,
                None => controller_tree(&cfg, &initial_history(&cfg), 0)?,
            };
            let x0 = &cfg.simulation.x0;
            let dp = &cfg.simulation.delta_prev;
            let alpha = cfg.controller.risk_level()?;
            let (problem, report) = solve_step(&cfg, &tree, alpha, x0, dp, None)?;
            let solved = report.status.has_solution();
            let result = serde_json::json!({
                "status": format!("{:?}", report.status),
                "objective": if solved { Some(report.objective) } else { None },
                "bound": report.bound,
                "gap": report.gap,
                "nodes": report.nodes,
                "solve_time": report.wall_time.as_secs_f64(),
                "decision": report.decision.as_ref().filter(|_| solved),
            });
            write_json(&out.join("solve.json"), &result)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            if !solved {
                return Err(Failure {
                    code: EXIT_SOLVER,
                    message: format!("no solution: {:?}", report.status),
                });
            }
            write_node_decisions_csv(
                &problem,
                &report.x,
                BufWriter::new(File::create(out.join("decisions.csv"))?),
            )?;
        }
        Command::Simulate { common, controller } => {
            let sweep = controller.alpha.len() > 1;
            let levels: Vec<Option<f64>> = if sweep {
                controller.alpha.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            let mut terminal = None;
            for level in levels {
                let args = ControllerArgs {
                    alpha: level.map_or_else(|| controller.alpha.clone(), |a| vec![a]),
                    mode: controller.mode,
                };
                let (cfg, mut out) = prepare(&common, Some(&args))?;
                if let Some(a) = level {
                    out = out.join(format!("alpha_{a}"));
                    fs::create_dir_all(&out)?;
                }
                let log = simulate(&cfg)?;
                log.write_csv(BufWriter::new(File::create(out.join("trajectory.csv"))?))?;
                let metrics = serde_json::to_value(log.metrics(&cfg.simulation.delta_prev))?;
                write_json(&out.join("metrics.json"), &metrics)?;
                match level {
                    Some(a) => println!("alpha {a}: {}", serde_json::to_string(&metrics)?),
                    None => println!("{}", serde_json::to_string_pretty(&metrics)?),
                }
                if let Some(t) = &log.terminal {
                    terminal.get_or_insert(format!("run ended at step {}: {}", t.k, t.status));
                }
            }
            if let Some(message) = terminal {
                return Err(Failure {
                    code: EXIT_PLANT,
                    message,
                });
            }
        }
        Command::Sensitivity {
            common,
            mode,
            replicas,
        } => {
            let mut cfg = load(&common.config)?;
            if let Some(steps) = common.steps {
                cfg.simulation.steps = steps;
            }
            cfg.validate()?;
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
            fs::create_dir_all(&out)?;
            let meta_seed = common.seed.unwrap_or(cfg.simulation.sensitivity.meta_seed);
            let replicas = replicas.unwrap_or(cfg.simulation.sensitivity.replicas);
            cfg.simulation.sensitivity.meta_seed = meta_seed;
            let kind = match mode {
                NoiseMode::Constant => NoiseKind::ConstantOffset,
                NoiseMode::Occasional => NoiseKind::OccasionalEvents,
            };
            let report = run_sensitivity(&cfg, kind, replicas, meta_seed)?;
            write_summary_csv(&report.rows, BufWriter::new(File::create(out.join("summary.csv"))?))?;
            write_aggregate_csv(
                &report.aggregate_rows(),
                BufWriter::new(File::create(out.join("aggregate.csv"))?),
            )?;
            let summaries = serde_json::to_value(&report.summaries)?;
            write_json(&out.join("sensitivity.json"), &summaries)?;
            println!("{}", serde_json::to_string_pretty(&summaries)?);
        }
        Command::Tree { common, mode } => {
            let (cfg, out) = prepare(
                &common,
                Some(&ControllerArgs {
                    alpha: Vec::new(),
                    mode,
                }),
            )?;
            let tree = controller_tree(&cfg, &initial_history(&cfg), 0)?;
            write_tree_csv(&tree, BufWriter::new(File::create(out.join("tree.csv"))?))
                .map_err(MpcError::from)?;
            println!(
                "{} nodes, {} scenarios",
                tree.len(),
                tree.scenario_count()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
