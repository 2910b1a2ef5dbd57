//! Command-line pipeline: fit, generate, validate, solve, evaluate,
//! make-instance and sweep.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{generate_instance, GridInstance, HardeningPlan, InstanceSpec};
use crate::norta::NortaModel;
use crate::scenario::ScenarioSet;
use crate::stats::{emd, pearson_or_zero, EmpiricalMarginal, Summary};
use crate::twostage::{report_table, OosReport, TwoStageProblem, NODE_LIMIT, QUANTILE_METHOD};

pub const DEFAULT_COUNT: usize = 800;

#[derive(Debug, Parser)]
#[command(name = "nortasp", version, about = "NORTA scenario generation and out-of-sample testing for flood hardening")]
pub struct Cli {
    /// Random seed for sampling and instance generation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a NORTA model to a scenario matrix.
    Fit {
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw synthetic scenarios from a fitted model.
    Generate {
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_COUNT)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare synthetic scenarios against the originals.
    Validate {
        scenarios: PathBuf,
        synthetic: PathBuf,
        /// JSON, or a CSV table when the name ends in `.csv`.
        #[arg(long, num_args = 1.., required = true)]
        out: Vec<PathBuf>,
    },
    /// Optimize hardening plans on the training scenarios.
    Solve {
        grid: PathBuf,
        scenarios: PathBuf,
        #[command(flatten)]
        budgets: BudgetArgs,
        /// Use the greedy heuristic instead of exact branch-and-bound.
        #[arg(long)]
        greedy: bool,
        /// Branch-and-bound node budget.
        #[arg(long, default_value_t = NODE_LIMIT)]
        node_limit: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate plans out of sample.
    Evaluate {
        grid: PathBuf,
        plan: PathBuf,
        synthetic: PathBuf,
        /// JSON report, or the CSV table when the name ends in `.csv`.
        #[arg(long, num_args = 1.., required = true)]
        out: Vec<PathBuf>,
    },
    /// Write a synthetic grid and scenario matrix.
    MakeInstance {
        #[arg(long)]
        spec: PathBuf,
        /// Grid JSON then scenario CSV.
        #[arg(long, num_args = 2, value_names = ["GRID", "SCENARIOS"], required = true)]
        out: Vec<PathBuf>,
    },
    /// Solve and evaluate across budgets.
    Sweep {
        grid: PathBuf,
        scenarios: PathBuf,
        synthetic: PathBuf,
        #[command(flatten)]
        budgets: BudgetArgs,
        /// Branch-and-bound node budget.
        #[arg(long, default_value_t = NODE_LIMIT)]
        node_limit: usize,
        #[arg(long, num_args = 1.., required = true)]
        out: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct BudgetArgs {
    #[arg(long)]
    pub budget: Option<f64>,
    /// Comma-separated budgets.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<f64>>,
}

impl BudgetArgs {
    /// Explicit budgets, else the grid file's budget.
    fn resolve(&self, grid: &GridInstance) -> Vec<f64> {
        match (&self.budget, &self.budgets) {
            (Some(b), _) => vec![*b],
            (_, Some(list)) => list.clone(),
            _ => vec![grid.budget()],
        }
    }
}

/// Input file with its content hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Deterministic provenance embedded in every JSON output. Wall-clock times
/// go to a `<output>.manifest.json` sidecar so outputs stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub inputs: Vec<InputRecord>,
    pub seed: Option<u64>,
    pub tolerances: Vec<(String, f64)>,
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    manifest: &'a RunManifest,
    output: String,
    started_unix: f64,
    finished_unix: f64,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn tolerances() -> Vec<(String, f64)> {
    vec![
        ("correlation_match".into(), crate::norta::MATCH_TOLERANCE),
        ("psd_repair".into(), crate::norta::REPAIR_TOLERANCE),
        ("psd_floor".into(), crate::norta::PSD_FLOOR),
        ("lp_feasibility".into(), crate::lp::FEASIBILITY_TOL),
        ("lp_optimality".into(), crate::lp::OPTIMALITY_TOL),
        ("shed_quantum".into(), crate::twostage::SHED_QUANTUM),
    ]
}

struct Run {
    manifest: RunManifest,
    started: f64,
    quiet: bool,
}

impl Run {
    fn new(command: &str, inputs: &[&Path], seed: Option<u64>, quiet: bool) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p).map_err(|e| Error::io(*p, e))?;
                Ok(InputRecord {
                    path: p.display().to_string(),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            manifest: RunManifest {
                command: command.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                inputs,
                seed,
                tolerances: tolerances(),
            },
            started: unix_now(),
            quiet,
        })
    }

    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn finish(&self, out: &Path) -> Result<()> {
        let side = Sidecar {
            manifest: &self.manifest,
            output: out.display().to_string(),
            started_unix: self.started,
            finished_unix: unix_now(),
        };
        let mut name = out.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        write_json(&path, &side)?;
        self.note(format!("wrote {}", out.display()));
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_table(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.write_record(r)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub manifest: RunManifest,
    pub model: NortaModel,
}

/// One optimized plan as written by `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub budget: f64,
    pub method: String,
    /// Flooded substation ids, aligned with `protect` and `height`.
    pub substations: Vec<u32>,
    pub protect: Vec<bool>,
    pub height: Vec<u32>,
    pub cost: f64,
    pub so_estimate: f64,
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub manifest: RunManifest,
    pub plans: Vec<PlanRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub manifest: RunManifest,
    pub quantile_method: String,
    pub std_denominator: String,
    pub reports: Vec<OosReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub i: usize,
    pub j: usize,
    pub original: f64,
    pub synthetic: f64,
    pub error: f64,
}

/// Per-dimension EMD and per-pair correlation error with their summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub labels: Vec<String>,
    pub emd: Vec<f64>,
    pub correlation_errors: Vec<PairError>,
    pub emd_summary: Option<Summary>,
    pub correlation_error_summary: Option<Summary>,
}

impl ValidationReport {
    pub fn new(original: &ScenarioSet, synthetic: &ScenarioSet) -> Result<Self> {
        if original.dim() != synthetic.dim() {
            return Err(Error::Validation(format!(
                "dimension mismatch: {} original columns, {} synthetic",
                original.dim(),
                synthetic.dim()
            )));
        }
        if original.labels() != synthetic.labels() {
            return Err(Error::Validation(
                "original and synthetic files have different column labels".into(),
            ));
        }
        let n = original.dim();
        let cols_a: Vec<Vec<f64>> = (0..n).map(|i| original.column(i)).collect();
        let cols_b: Vec<Vec<f64>> = (0..n).map(|i| synthetic.column(i)).collect();
        let emds = (0..n)
            .map(|i| {
                Ok(emd(
                    &EmpiricalMarginal::from_slice(&cols_a[i])?,
                    &EmpiricalMarginal::from_slice(&cols_b[i])?,
                ))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let a = pearson_or_zero(&cols_a[i], &cols_a[j])?;
                let b = pearson_or_zero(&cols_b[i], &cols_b[j])?;
                pairs.push(PairError {
                    i,
                    j,
                    original: a,
                    synthetic: b,
                    error: (a - b).abs(),
                });
            }
        }
        let errs: Vec<f64> = pairs.iter().map(|p| p.error).collect();
        Ok(Self {
            labels: original.labels().to_vec(),
            emd_summary: Summary::of(&emds).ok(),
            correlation_error_summary: Summary::of(&errs).ok(),
            emd: emds,
            correlation_errors: pairs,
        })
    }

    /// Statistic rows by (EMD, correlation error) columns.
    pub fn table(&self) -> Vec<Vec<String>> {
        let cell = |s: &Option<Summary>, k: usize| s.map_or_else(String::new, |s| format!("{}", s.rows()[k]));
        let mut rows = vec![vec![
            "statistic".to_string(),
            "emd".to_string(),
            "correlation_error".to_string(),
        ]];
        for (k, name) in Summary::ROW_NAMES.iter().enumerate() {
            rows.push(vec![
                name.to_string(),
                cell(&self.emd_summary, k),
                cell(&self.correlation_error_summary, k),
            ]);
        }
        rows
    }
}

#[derive(Serialize)]
struct ValidationFile<'a> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    report: &'a ValidationReport,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Validation("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker threads: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let quiet = cli.quiet;
    match &cli.command {
        Command::Fit { scenarios, out } => {
            let run = Run::new("fit", &[scenarios], None, quiet)?;
            let s = ScenarioSet::read_csv(scenarios)?;
            let model = NortaModel::fit(&s)?;
            let r = &model.fit_report;
            run.note(format!(
                "fitted {} dimensions: {} clamped pairs, repair distance {:.3e}, min eigenvalue of sigma_z {:.3e}",
                model.dim, r.clamped_pairs, r.repair_distance, r.sigma_z_min_eigenvalue
            ));
            write_json(out, &ModelFile { manifest: run.manifest.clone(), model })?;
            run.finish(out)
        }
        Command::Generate { model, count, out } => {
            let seed = cli.seed.unwrap_or(0);
            let run = Run::new("generate", &[model], Some(seed), quiet)?;
            let file: ModelFile = read_json(model)?;
            file.model.validate()?;
            let synth = file.model.sample(*count, seed)?;
            synth.write_csv(out)?;
            run.finish(out)
        }
        Command::Validate { scenarios, synthetic, out } => {
            let run = Run::new("validate", &[scenarios, synthetic], None, quiet)?;
            let report = ValidationReport::new(
                &ScenarioSet::read_csv(scenarios)?,
                &ScenarioSet::read_csv(synthetic)?,
            )?;
            for path in out {
                if is_csv(path) {
                    write_table(path, &report.table())?;
                } else {
                    write_json(path, &ValidationFile { manifest: &run.manifest, report: &report })?;
                }
                run.finish(path)?;
            }
            Ok(())
        }
        Command::Solve { grid, scenarios, budgets, greedy, node_limit, out } => {
            let run = Run::new("solve", &[grid, scenarios], None, quiet)?;
            let problem = load_problem(grid, scenarios)?.with_node_limit(*node_limit);
            let plans = budgets
                .resolve(problem.grid())
                .into_iter()
                .map(|b| solve_one(&problem, b, *greedy, &run))
                .collect::<Result<Vec<_>>>()?;
            write_json(out, &PlanFile { manifest: run.manifest.clone(), plans })?;
            run.finish(out)
        }
        Command::Evaluate { grid, plan, synthetic, out } => {
            let run = Run::new("evaluate", &[grid, plan, synthetic], None, quiet)?;
            let g = GridInstance::load(grid)?;
            let synth = ScenarioSet::read_csv(synthetic)?;
            let plans: PlanFile = read_json(plan)?;
            // Recourse only needs the grid; the synthetic set stands in for training.
            let problem = TwoStageProblem::new(g, &synth)?;
            let reports = plans
                .plans
                .iter()
                .map(|rec| {
                    let p = plan_from_record(problem.grid(), rec)?;
                    let mut r = problem.evaluate_oos(&p, &synth)?;
                    r.budget = Some(rec.budget);
                    r.so_estimate = Some(rec.so_estimate);
                    Ok(r)
                })
                .collect::<Result<Vec<_>>>()?;
            write_reports(&run, out, reports)
        }
        Command::MakeInstance { spec, out } => {
            let mut s: InstanceSpec = read_json(spec)?;
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            let run = Run::new("make-instance", &[spec], Some(s.seed), quiet)?;
            let (grid, scenarios) = generate_instance(&s)?;
            write_json(&out[0], &grid)?;
            run.finish(&out[0])?;
            scenarios.write_csv(&out[1])?;
            run.finish(&out[1])
        }
        Command::Sweep { grid, scenarios, synthetic, budgets, node_limit, out } => {
            let run = Run::new("sweep", &[grid, scenarios, synthetic], None, quiet)?;
            let problem = load_problem(grid, scenarios)?.with_node_limit(*node_limit);
            let synth = ScenarioSet::read_csv(synthetic)?;
            let list = budgets.resolve(problem.grid());
            let reports = problem.budget_sweep(&list, &synth).map_err(|e| match e {
                Error::Resource(m) => Error::Resource(format!("{m} (solve with --greedy, then evaluate)")),
                other => other,
            })?;
            write_reports(&run, out, reports)
        }
    }
}

fn load_problem(grid: &Path, scenarios: &Path) -> Result<TwoStageProblem> {
    let g = GridInstance::load(grid)?;
    let s = ScenarioSet::read_csv(scenarios)?;
    TwoStageProblem::new(g, &s)
}

fn solve_one(problem: &TwoStageProblem, budget: f64, greedy: bool, run: &Run) -> Result<PlanRecord> {
    let grid = problem.grid();
    let (plan, value, nodes, method) = if greedy {
        let plan = problem.greedy_first_stage(budget)?;
        let value = problem.saa_objective(&plan)?;
        (plan, value, None, "greedy")
    } else {
        let sol = problem.solve_first_stage(budget).map_err(|e| match e {
            Error::Resource(m) => Error::Resource(format!("{m} (rerun with --greedy)")),
            other => other,
        })?;
        (sol.plan, sol.value, Some(sol.nodes), "exact")
    };
    run.note(format!("budget {budget}: SO estimate {value}"));
    Ok(PlanRecord {
        budget,
        method: method.into(),
        substations: (0..grid.n_flooded()).map(|c| grid.flooded_substation(c).id).collect(),
        cost: grid.plan_cost(&plan),
        protect: plan.protect,
        height: plan.height,
        so_estimate: value,
        nodes,
    })
}

/// Maps a plan record onto the grid's flooded columns by substation id.
fn plan_from_record(grid: &GridInstance, rec: &PlanRecord) -> Result<HardeningPlan> {
    let n = grid.n_flooded();
    if rec.substations.len() != n || rec.height.len() != n || rec.protect.len() != n {
        return Err(Error::Validation(format!(
            "plan for budget {} covers {} substations, grid has {n} flooded",
            rec.budget,
            rec.substations.len()
        )));
    }
    let mut plan = HardeningPlan::unprotected(n);
    for c in 0..n {
        let id = grid.flooded_substation(c).id;
        let k = rec
            .substations
            .iter()
            .position(|&s| s == id)
            .ok_or_else(|| Error::Validation(format!("plan has no entry for substation {id}")))?;
        plan.height[c] = rec.height[k];
        plan.protect[c] = rec.protect[k];
    }
    grid.check_plan(&plan, f64::INFINITY)?;
    Ok(plan)
}

fn write_reports(run: &Run, out: &[PathBuf], reports: Vec<OosReport>) -> Result<()> {
    for r in &reports {
        run.note(format!(
            "budget {}: SO estimate {}, OOS mean {}, std {}",
            r.budget.map_or_else(|| "-".into(), |b| b.to_string()),
            r.so_estimate.map_or_else(|| "-".into(), |v| v.to_string()),
            r.summary.mean,
            r.summary.std
        ));
    }
    let file = ReportFile {
        manifest: run.manifest.clone(),
        quantile_method: QUANTILE_METHOD.into(),
        std_denominator: "M-1".into(),
        reports,
    };
    for path in out {
        if is_csv(path) {
            write_table(path, &report_table(&file.reports))?;
        } else {
            write_json(path, &file)?;
        }
        run.finish(path)?;
    }
    Ok(())
}
