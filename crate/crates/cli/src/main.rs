#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use endp::engine::run;
use endp::export::{self, to_json, ParameterHeader, RunSummary};
use endp::optimizer::{budget_sweep, exhaustive_search, pso_optimize, DesignScore, Evaluator};
use endp::par::ExecMode;
use endp::routes::enumerate_routes;
use endp::scenario::{load_scenario, parse_scenario, CASE_STUDY_ALT_TEXT, CASE_STUDY_TEXT};
use endp::units::{parse_quantity, Dimension};
use endp::{DesignVector, Error, Scenario};

const DESIGN_HELP: &str = "Design bit-string, one bit per unordered candidate pair ordered by (min id, max id); \
for the bundled case study: {1,2} {1,4} {1,5} {2,3} {2,5} {3,4} {3,5} {4,5}";

#[derive(Parser)]
#[command(name = "endp", version, about = "Expressway network design over MFD subregions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file. The bundled names `yokohama5.scn` and
    /// `yokohama5_alt_demand.scn` resolve to built-in copies when no such
    /// file exists.
    scenario: PathBuf,

    /// Override a calibration value, e.g. `mu=0.01`, `c_ij=3000 veh/h`,
    /// `c_max=10000 veh/h`, `jam_density_mainline=400 veh/km`, `step=5 s`,
    /// `boundary_mode=per-class`. Repeatable.
    #[arg(long = "params", value_name = "K=V")]
    params: Vec<String>,

    /// Directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Run design evaluations on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a scenario.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// List the legal routes of one OD pair under a design.
    Routes {
        #[command(flatten)]
        common: Common,
        /// Origin and destination subregion ids, `A,B`.
        #[arg(long)]
        od: String,
        #[arg(long, help = DESIGN_HELP)]
        design: String,
    },
    /// Simulate one design and print its summary as JSON.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, help = DESIGN_HELP)]
        design: String,
    },
    /// Find the best design under a budget.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Budget in dollars, or with a unit such as `50 M$`.
        #[arg(long, allow_hyphen_values = true)]
        budget: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Also run the exhaustive search and compare.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Optimize a list of budgets.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated budgets; defaults to the scenario's list.
        #[arg(long)]
        budgets: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the exhaustive search instead of the swarm.
        #[arg(long)]
        exhaustive: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvariantViolation { .. } => 4,
        Error::Io(_) => 1,
        _ => 3,
    }
}

fn load(common: &Common) -> Result<Scenario, Error> {
    let path = &common.scenario;
    let mut sc = if path.exists() {
        load_scenario(path)?
    } else {
        match path.file_name().and_then(|n| n.to_str()) {
            Some("yokohama5.scn") => parse_scenario(CASE_STUDY_TEXT)?,
            Some("yokohama5_alt_demand.scn") => parse_scenario(CASE_STUDY_ALT_TEXT)?,
            _ => load_scenario(path)?,
        }
    };
    for kv in &common.params {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--params expects K=V, got `{kv}`")))?;
        sc.apply_override(k.trim(), v.trim())?;
    }
    if common.sequential {
        sc.optimizer.exec = ExecMode::Sequential;
    }
    Ok(sc)
}

fn parse_budget(s: &str) -> Result<f64, Error> {
    let s = s.trim();
    let b = match s.parse::<f64>() {
        Ok(x) => x,
        Err(_) => parse_quantity("budget", s, Dimension::Money)?,
    };
    if !(b >= 0.0) {
        return Err(Error::Config(format!("budget `{s}` must be >= 0")));
    }
    Ok(b)
}

fn parse_design(sc: &Scenario, s: &str) -> Result<DesignVector, Error> {
    let d = DesignVector::parse_bits(s)?;
    sc.network.check_design(&d)?;
    Ok(d)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

#[derive(Serialize)]
struct OptimizeDoc {
    parameters: ParameterHeader,
    budget_usd: f64,
    seed: u64,
    pso: DesignScore,
    pso_trace_tts_veh_h: Vec<f64>,
    exhaustive: Option<DesignScore>,
    simulations: usize,
}

fn print_score(sc: &Scenario, label: &str, s: &DesignScore) {
    println!(
        "{label}: design {} cost ${}M TTS {:.3} veh·h",
        s.design,
        s.evaluation.cost / 1e6,
        s.evaluation.tts_veh_h
    );
    print!("{}", export::design_matrix(&sc.network, &s.design));
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Validate { common } => {
            let sc = load(&common)?;
            let net = &sc.network;
            println!(
                "ok: {}: {} subregions, {} candidate pairs ({} directional expressways), {} steps of {} s",
                sc.name,
                net.subregions.len(),
                net.candidate_pairs().len(),
                net.candidates.len(),
                sc.sim.steps,
                sc.sim.ts
            );
            if let Some(dir) = &common.out {
                write(dir, "scenario.scn", &endp::scenario::to_scenario_text(&sc))?;
            }
        }
        Command::Routes { common, od, design } => {
            let sc = load(&common)?;
            let d = parse_design(&sc, &design)?;
            let (a, b) = od
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("--od expects A,B, got `{od}`")))?;
            let parse = |x: &str| {
                x.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::Config(format!("`{x}` is not a subregion id")))
            };
            let routes = enumerate_routes(&sc.network, &d, (parse(a)?, parse(b)?), sc.sim.max_nodes)?;
            for r in &routes {
                println!("{r}");
            }
            if let Some(dir) = &common.out {
                write(dir, "routes.json", &to_json(&routes))?;
            }
        }
        Command::Simulate { common, design } => {
            let sc = load(&common)?;
            let d = parse_design(&sc, &design)?;
            let r = run(&sc, &d)?;
            print!("{}", to_json(&RunSummary::new(&sc, &r)));
            if let Some(dir) = &common.out {
                export::write_run(dir, &sc, &r)?;
            }
        }
        Command::Optimize {
            common,
            budget,
            seed,
            exhaustive,
        } => {
            let sc = load(&common)?;
            let budget = parse_budget(&budget)?;
            let mut cfg = sc.optimizer.clone();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let ev = Evaluator::new(&sc, cfg.exec);
            let pso = pso_optimize(&ev, budget, &cfg, None)?;
            print_score(&sc, "pso", &pso.best);
            let ex = if exhaustive {
                let ex = exhaustive_search(&ev, budget, cfg.exhaustive_cap)?;
                print_score(&sc, "exhaustive", &ex.best);
                println!(
                    "solvers {}",
                    if ex.best.design == pso.best.design { "agree" } else { "differ" }
                );
                Some(ex.best)
            } else {
                None
            };
            if let Some(dir) = &common.out {
                let doc = OptimizeDoc {
                    parameters: ParameterHeader::of(&sc),
                    budget_usd: budget,
                    seed: cfg.seed,
                    pso: pso.best,
                    pso_trace_tts_veh_h: pso.trace,
                    exhaustive: ex,
                    simulations: ev.simulations(),
                };
                write(dir, "optimize.json", &to_json(&doc))?;
            }
        }
        Command::Sweep {
            common,
            budgets,
            seed,
            exhaustive,
        } => {
            let sc = load(&common)?;
            let budgets = match budgets {
                Some(list) => list.split(',').map(parse_budget).collect::<Result<Vec<_>, _>>()?,
                None => sc.budgets.clone(),
            };
            if budgets.is_empty() {
                return Err(Error::Config("no budgets given".into()));
            }
            let mut cfg = sc.optimizer.clone();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let ev = Evaluator::new(&sc, cfg.exec);
            let report = budget_sweep(&ev, &budgets, &cfg, exhaustive)?;
            print!("{}", export::sweep_table(&report));
            println!();
            print!("{}", export::sweep_matrices(&sc.network, &report));
            if let Some(dir) = &common.out {
                export::write_sweep(dir, &sc, &report)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
