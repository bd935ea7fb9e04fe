//! Paired benchmark runs and summary tables.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{local_nlp_place, mbts_solve, LocalNlpConfig, LocalNlpError, MbtsBudget, MBTS_C};
use crate::fullopt::optimize_full;
use crate::geometry::Point;
use crate::instance::{gen_instance, Domain, Instance};
use crate::planner::{dts_solve, dts_solve_with, keepouts_for, replay, Plan, PlannerError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Solver {
    Dts,
    Mbts0,
    Mbts1,
    Mbts2,
    FullOpt,
    LocalNlp,
}

impl Solver {
    pub const ALL: [Solver; 6] = [Solver::Dts, Solver::Mbts0, Solver::Mbts1, Solver::Mbts2, Solver::FullOpt, Solver::LocalNlp];

    pub fn label(&self) -> &'static str {
        match self {
            Solver::Dts => "DTS",
            Solver::Mbts0 => "MBTS-0",
            Solver::Mbts1 => "MBTS-1",
            Solver::Mbts2 => "MBTS-2",
            Solver::FullOpt => "FullOpt",
            Solver::LocalNlp => "LocalNLP",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "dts" => Ok(Solver::Dts),
            "mbts0" => Ok(Solver::Mbts0),
            "mbts1" => Ok(Solver::Mbts1),
            "mbts2" => Ok(Solver::Mbts2),
            "fullopt" => Ok(Solver::FullOpt),
            "localnlp" | "local" => Ok(Solver::LocalNlp),
            _ => Err(format!("unknown solver '{s}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    /// DTS runs that expand more nodes than this count as failures.
    pub dts_nodes: usize,
    pub mbts: MbtsBudget,
    pub local: LocalNlpConfig,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { dts_nodes: 10_000, mbts: MbtsBudget::default(), local: LocalNlpConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub instance_id: String,
    pub domain: Domain,
    pub x: usize,
    pub seed: u64,
    pub solver: Solver,
    /// Set only after the plan passed replay.
    pub success: bool,
    pub nodes: usize,
    pub ee_displacement: f64,
    pub makespan: usize,
    /// Travel of the DTS plan that FullOpt started from.
    pub dts_displacement: Option<f64>,
    pub wall_seconds: f64,
    pub failure: Option<String>,
}

/// Plan of `solver` on `inst`, or why there is none. `Ok` plans are not yet
/// replay-checked.
fn solve(inst: &Instance, solver: Solver, budgets: &Budgets) -> (Result<Plan, String>, Option<f64>, usize) {
    let config = inst.config();
    let (w0, goal) = (&inst.world0, &inst.goal);
    let dts = || dts_solve(w0, goal, &config).map_err(|e| e.to_string());
    match solver {
        Solver::Dts => match dts() {
            Ok(p) if p.nodes_visited > budgets.dts_nodes => {
                let n = p.nodes_visited;
                (Err(format!("node budget ({}) exceeded", budgets.dts_nodes)), None, n)
            }
            other => (other, None, 0),
        },
        Solver::Mbts0 | Solver::Mbts1 | Solver::Mbts2 => {
            let c = MBTS_C[solver as usize - Solver::Mbts0 as usize];
            let out = mbts_solve(w0, goal, c, budgets.mbts, &config);
            let n = out.nodes_visited();
            match out.plan() {
                Some(p) => (Ok(p.clone()), None, n),
                None => (Err("timeout".into()), None, n),
            }
        }
        Solver::FullOpt => match dts() {
            Ok(p) => {
                let before = p.ee_displacement;
                (Ok(optimize_full(&p, w0, goal, &config)), Some(before), 0)
            }
            Err(e) => (Err(e), None, 0),
        },
        Solver::LocalNlp => {
            // Every placement starts from a uniform random point on the table.
            let mut rng = ChaCha8Rng::seed_from_u64(inst.seed ^ budgets.local.seed);
            let t = config.workspace.table;
            let h = config.workspace.block_size / 2.0;
            let placed = dts_solve_with(w0, goal, &config, |w, s, a, stack| {
                let keep = keepouts_for(w, s, goal, a.block, stack, &config);
                let init = Point::new(rng.random_range(t.x_min + h..=t.x_max - h), rng.random_range(t.y_min + h..=t.y_max - h));
                local_nlp_place(w, a, &keep, &init, &config, &budgets.local).map_err(|e| match e {
                    LocalNlpError::Model(m) => PlannerError::Miqp(m),
                    LocalNlpError::Failure { .. } => PlannerError::Infeasible { action: *a },
                })
            });
            (placed.map_err(|e| e.to_string()), None, 0)
        }
    }
}

/// Runs one solver on one instance and verifies the result by replay.
pub fn run_instance(inst: &Instance, solver: Solver, budgets: &Budgets) -> BenchRecord {
    let started = Instant::now();
    let (plan, dts_displacement, failed_nodes) = solve(inst, solver, budgets);
    let wall_seconds = started.elapsed().as_secs_f64();
    let mut rec = BenchRecord {
        instance_id: inst.id.clone(),
        domain: inst.domain,
        x: inst.x,
        seed: inst.seed,
        solver,
        success: false,
        nodes: failed_nodes,
        ee_displacement: 0.0,
        makespan: 0,
        dts_displacement,
        wall_seconds,
        failure: None,
    };
    match plan {
        Ok(p) => {
            rec.nodes = p.nodes_visited;
            rec.ee_displacement = p.ee_displacement;
            rec.makespan = p.makespan;
            match replay(&inst.world0, &inst.goal, &p, &inst.config()) {
                Ok(_) => rec.success = true,
                Err(e) => rec.failure = Some(format!("replay: {e}")),
            }
        }
        Err(e) => rec.failure = Some(e),
    }
    rec
}

/// Every solver sees the same instances: seeds `first_seed..first_seed+trials`
/// for each size. Instances that cannot be generated give failure records.
pub fn run_benchmark(domain: Domain, sizes: &[usize], trials: usize, first_seed: u64, solvers: &[Solver], budgets: &Budgets) -> Vec<BenchRecord> {
    assert!(trials >= 1, "need at least one trial");
    let mut out = Vec::new();
    for &x in sizes {
        for seed in first_seed..first_seed + trials as u64 {
            let inst = gen_instance(domain, x, seed);
            for &solver in solvers {
                out.push(match &inst {
                    Ok(inst) => run_instance(inst, solver, budgets),
                    Err(e) => BenchRecord {
                        instance_id: Instance::instance_id(domain, x, seed),
                        domain,
                        x,
                        seed,
                        solver,
                        success: false,
                        nodes: 0,
                        ee_displacement: 0.0,
                        makespan: 0,
                        dts_displacement: None,
                        wall_seconds: 0.0,
                        failure: Some(format!("generation: {e}")),
                    },
                });
            }
        }
    }
    out.sort_by(|a, b| a.instance_id.cmp(&b.instance_id).then(a.solver.cmp(&b.solver)));
    out
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub domain: Domain,
    pub x: usize,
    pub solver: Solver,
    pub trials: usize,
    pub successes: usize,
    /// Mean and standard deviation over successful runs; `None` without any.
    pub nodes: Option<(f64, f64)>,
    pub ee_displacement: Option<(f64, f64)>,
    pub makespan: Option<(f64, f64)>,
}

impl SummaryRow {
    pub fn label(&self) -> String {
        format!("{}-{}", self.domain.label(), self.x)
    }

    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

pub fn summarize(records: &[BenchRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Domain, usize, Solver), Vec<&BenchRecord>> = BTreeMap::new();
    let mut sorted: Vec<&BenchRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    for r in sorted {
        groups.entry((r.domain, r.x, r.solver)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((domain, x, solver), rs)| {
            let ok: Vec<&&BenchRecord> = rs.iter().filter(|r| r.success).collect();
            let stat = |f: fn(&BenchRecord) -> f64| {
                (!ok.is_empty()).then(|| mean_std(&ok.iter().map(|r| f(r)).collect::<Vec<_>>()))
            };
            SummaryRow {
                domain,
                x,
                solver,
                trials: rs.len(),
                successes: ok.len(),
                nodes: stat(|r| r.nodes as f64),
                ee_displacement: stat(|r| r.ee_displacement),
                makespan: stat(|r| r.makespan as f64),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tables {
    pub csv: String,
    pub text: String,
}

fn csv_pair(v: Option<(f64, f64)>, decimals: usize) -> String {
    match v {
        Some((m, s)) => format!("{m:.decimals$},{s:.decimals$}"),
        None => "-,-".into(),
    }
}

fn text_cell(v: Option<(f64, f64)>, decimals: usize) -> String {
    match v {
        Some((m, s)) => format!("{m:.decimals$} ± {s:.decimals$}"),
        None => "-".into(),
    }
}

/// Per (domain, size, solver) summary as CSV and as an aligned text table.
/// Statistics cover successful runs; cells with no success show a dash.
pub fn emit_tables(records: &[BenchRecord]) -> Tables {
    assert!(!records.is_empty(), "no records to tabulate");
    let rows = summarize(records);
    let mut csv = String::from(
        "domain,x,solver,trials,success_rate,nodes_mean,nodes_std,ee_displacement_mean,ee_displacement_std,makespan_mean,makespan_std\n",
    );
    for r in &rows {
        csv += &format!(
            "{},{},{},{},{:.3},{},{},{}\n",
            r.domain,
            r.x,
            r.solver,
            r.trials,
            r.success_rate(),
            csv_pair(r.nodes, 2),
            csv_pair(r.ee_displacement, 4),
            csv_pair(r.makespan, 2),
        );
    }

    let header = ["Instance", "Solver", "Success", "Nodes", "EE displacement (m)", "Makespan"];
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.label(),
                r.solver.to_string(),
                format!("{:.1}%", 100.0 * r.success_rate()),
                text_cell(r.nodes, 1),
                text_cell(r.ee_displacement, 3),
                text_cell(r.makespan, 2),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut text = line(&header.map(String::from));
    text += &line(&widths.map(|w| "-".repeat(w)));
    for row in &body {
        text += &line(row);
    }
    Tables { csv, text }
}
