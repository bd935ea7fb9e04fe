use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use tamp_core::bench::{emit_tables, run_benchmark, Budgets, Solver};
use tamp_core::fullopt::optimize_full;
use tamp_core::instance::{gen_instance, Domain};
use tamp_core::io::{parse_instance, parse_scenario, to_json, PlanDocument};
use tamp_core::oracle::{oracle_plan, OracleError, MAX_ACTIONS};
use tamp_core::planner::{dts_solve, replay};
use tamp_core::sim::closed_loop_run;

#[derive(Parser)]
#[command(name = "tamp", version, about = "Block rearrangement planner, benchmarks and closed-loop simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan for an instance file.
    Plan {
        instance: PathBuf,
        /// Refine the placements of the whole sequence after DTS.
        #[arg(long)]
        full_opt: bool,
        /// Write the plan here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired benchmark over generated instances.
    Bench {
        #[arg(long)]
        domain: Domain,
        #[arg(long, value_delimiter = ',', default_value = "4,8,12")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 15)]
        trials: usize,
        #[arg(long, value_delimiter = ',', default_value = "dts,mbts0,mbts1,mbts2")]
        solvers: Vec<Solver>,
        /// First instance seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Node budget of DTS and of the tree-search baselines.
        #[arg(long)]
        node_budget: Option<usize>,
        /// Summary table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Every record as JSON lines.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Closed-loop run of a scenario file.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Brute-force optimal makespan and travel of a small instance.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = MAX_ACTIONS)]
        max_actions: usize,
    },
    /// Generate a benchmark instance.
    Gen {
        #[arg(long)]
        domain: Domain,
        #[arg(long)]
        x: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit 1: no plan; exit 2: bad input.
enum Failure {
    NoPlan(anyhow::Error),
    BadInput(anyhow::Error),
}

fn bad(e: impl Into<anyhow::Error>) -> Failure {
    Failure::BadInput(e.into())
}

fn no_plan(e: impl Into<anyhow::Error>) -> Failure {
    Failure::NoPlan(e.into())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(bad)
}

fn write(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(bad),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Plan { instance, full_opt, out } => {
            let inst = parse_instance(&read(&instance)?).map_err(bad)?;
            let config = inst.config();
            let mut plan = dts_solve(&inst.world0, &inst.goal, &config).map_err(no_plan)?;
            if full_opt {
                plan = optimize_full(&plan, &inst.world0, &inst.goal, &config);
            }
            replay(&inst.world0, &inst.goal, &plan, &config).map_err(|e| no_plan(anyhow!("plan failed replay: {e}")))?;
            eprintln!(
                "{}: {} actions, {:.4} m travel, {} nodes ({:?})",
                inst.id, plan.makespan, plan.ee_displacement, plan.nodes_visited, plan.stage
            );
            write(out.as_deref(), &to_json(&PlanDocument::new(&inst.id, plan)))
        }
        Command::Bench { domain, sizes, trials, solvers, seed, node_budget, csv, records } => {
            if trials == 0 || sizes.is_empty() || solvers.is_empty() {
                return Err(bad(anyhow!("need at least one size, solver and trial")));
            }
            let mut budgets = Budgets::default();
            if let Some(n) = node_budget {
                budgets.dts_nodes = n;
                budgets.mbts.nodes = n;
            }
            let recs = run_benchmark(domain, &sizes, trials, seed, &solvers, &budgets);
            let tables = emit_tables(&recs);
            print!("{}", tables.text);
            if let Some(p) = csv {
                write(Some(&p), &tables.csv)?;
            }
            if let Some(p) = records {
                let lines: String = recs.iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect();
                write(Some(&p), &lines)?;
            }
            Ok(())
        }
        Command::Simulate { scenario, trace } => {
            let sc = parse_scenario(&read(&scenario)?).map_err(bad)?;
            let t = closed_loop_run(&sc);
            if let Some(p) = trace {
                write(Some(&p), &t.to_jsonl())?;
            }
            eprintln!("{}: {:?} after {} replans", sc.name, t.outcome, t.replan_count);
            if t.is_success() {
                Ok(())
            } else {
                Err(no_plan(anyhow!("scenario failed: {:?}", t.outcome)))
            }
        }
        Command::Oracle { instance, max_actions } => {
            let inst = parse_instance(&read(&instance)?).map_err(bad)?;
            match oracle_plan(&inst.world0, &inst.goal, &inst.config(), max_actions) {
                Ok(r) => {
                    println!(
                        "{}",
                        serde_json::json!({
                            "instance_id": inst.id,
                            "makespan": r.makespan,
                            "ee_displacement": r.ee_displacement,
                            "skeletons": r.skeletons,
                        })
                    );
                    Ok(())
                }
                Err(e @ (OracleError::TooManyBlocks(_) | OracleError::TooManyActions(_))) => Err(bad(e)),
                Err(e) => Err(no_plan(e)),
            }
        }
        Command::Gen { domain, x, seed, out } => {
            let inst = gen_instance(domain, x, seed).map_err(bad)?;
            write(out.as_deref(), &to_json(&inst))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NoPlan(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::BadInput(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
