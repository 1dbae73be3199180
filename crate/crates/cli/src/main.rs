use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use stcs::planner::{capsule_oracle, plan, PlanResult, PlanStatus, ORACLE_DT};
use stcs::plot::{top_down_svg, triptych_svg};
use stcs::scenario::{self, MetricsReport, RowStatus, ScenarioSpec};
use stcs::search::SearchBudget;
use stcs::trajectory::{track_csv, TrajectorySet};
use stcs::PathKind;

const EXIT_OK: u8 = 0;
const EXIT_VIOLATIONS: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_INPUT: u8 = 4;

/// Sample rate of the interpolated track files.
const TRACK_HZ: f64 = 100.0;

#[derive(Parser)]
#[command(name = "stcs", version, about = "Space-time conflict sphere motion planner")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one scenario and write its trajectories.
    Plan {
        scenario: PathBuf,
        #[command(flatten)]
        out: OutDir,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Plan a set of scenarios and write a metrics report.
    Suite {
        /// Scenario files or directories of them.
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Plan scenarios one after another instead of in parallel.
        #[arg(long)]
        single_thread: bool,
        #[arg(long, value_enum, default_value_t = ReportFormat::Both)]
        format: ReportFormat,
        #[command(flatten)]
        out: OutDir,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check trajectory files for collisions and constraint violations.
    Validate {
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
        /// Oracle sampling interval in seconds.
        #[arg(long, default_value_t = ORACLE_DT)]
        dt: f64,
    },
    /// Render trajectory files as SVG.
    Plot {
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long = "out", env = "STCS_OUT_DIR", default_value = "out")]
    dir: PathBuf,
}

#[derive(Args, Default)]
struct Overrides {
    /// Time scale in m/s.
    #[arg(long)]
    tau: Option<f64>,
    /// Radius inflation factor.
    #[arg(long)]
    lambda: Option<f64>,
    /// Head-on bias angle in radians.
    #[arg(long)]
    bias: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    max_solutions: Option<usize>,
    #[arg(long)]
    max_nodes: Option<usize>,
}

impl Overrides {
    fn apply(&self, spec: &mut ScenarioSpec) -> Result<()> {
        let c = &mut spec.config;
        if let Some(tau) = self.tau {
            if !(tau > 0.0 && tau.is_finite()) {
                bail!("--tau must be positive, got {tau}");
            }
            c.tau = tau;
        }
        if let Some(lambda) = self.lambda {
            if !(lambda >= 1.0 && lambda.is_finite()) {
                bail!("--lambda must be at least 1, got {lambda}");
            }
            c.inflation = lambda;
        }
        if let Some(bias) = self.bias {
            c.bias_angle = bias;
        }
        if self.max_depth.is_some() || self.max_solutions.is_some() || self.max_nodes.is_some() {
            let base = c.budget.unwrap_or(SearchBudget {
                // The visited set bounds depth on its own.
                max_depth: usize::MAX,
                max_solutions: SearchBudget::DEFAULT_MAX_SOLUTIONS,
                max_nodes: SearchBudget::DEFAULT_MAX_NODES,
            });
            let budget = SearchBudget {
                max_depth: self.max_depth.unwrap_or(base.max_depth),
                max_solutions: self.max_solutions.unwrap_or(base.max_solutions),
                max_nodes: self.max_nodes.unwrap_or(base.max_nodes),
            };
            if budget.max_depth == 0 || budget.max_solutions == 0 || budget.max_nodes == 0 {
                bail!("search budget overrides must be positive");
            }
            c.budget = Some(budget);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
    Both,
}

/// Input problems map to their own exit code.
#[derive(Debug)]
struct InputError(anyhow::Error);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for InputError {}

fn input<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| InputError(e).into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Plan {
            scenario,
            out,
            overrides,
        } => cmd_plan(&scenario, &out.dir, &overrides),
        Command::Suite {
            scenarios,
            trials,
            single_thread,
            format,
            out,
            overrides,
        } => cmd_suite(&scenarios, trials, !single_thread, format, &out.dir, &overrides),
        Command::Validate { trajectories, dt } => cmd_validate(&trajectories, dt),
        Command::Plot { trajectories, out } => cmd_plot(&trajectories, &out.dir),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn load_scenario(path: &Path, overrides: &Overrides) -> Result<ScenarioSpec> {
    let mut spec = input(ScenarioSpec::load(path).map_err(Into::into))?;
    input(overrides.apply(&mut spec))?;
    Ok(spec)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_plan_outputs(dir: &Path, name: &str, result: &PlanResult) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let traj = dir.join(format!("{name}.traj.csv"));
    write(&traj, &TrajectorySet::from_result(result).to_text())?;
    write(&dir.join(format!("{name}.track.csv")), &track_csv(&result.paths, TRACK_HZ))?;
    let stats = serde_json::json!({
        "status": result.status,
        "diagnostics": result.diagnostics,
        "stats": result.stats,
        "audit_failures": result.audit_failures,
    });
    write(
        &dir.join(format!("{name}.stats.json")),
        &serde_json::to_string_pretty(&stats)?,
    )?;
    Ok(traj)
}

fn status_code(status: PlanStatus) -> u8 {
    match status {
        PlanStatus::Converged => EXIT_OK,
        PlanStatus::Infeasible => EXIT_INFEASIBLE,
        PlanStatus::BudgetExhausted => EXIT_BUDGET,
    }
}

fn cmd_plan(path: &Path, out: &Path, overrides: &Overrides) -> Result<u8> {
    let spec = load_scenario(path, overrides)?;
    let result = input(plan(&spec.request()).map_err(Into::into))?;
    let traj = write_plan_outputs(out, &spec.name, &result)?;
    let agents = spec.agents();
    match scenario::measured_metrics(&result) {
        Ok(measured) => {
            let bounds = (
                scenario::distance_lower_bound(&agents),
                scenario::makespan_lower_bound(&agents),
            );
            let r = scenario::suboptimality(measured, bounds);
            println!(
                "{}: converged in {:.4} s, distance {:.2} m, makespan {:.2} s, ratios {} / {} / {}",
                spec.name,
                result.stats.runtime_s,
                measured.0,
                measured.1,
                fmt_ratio(r.distance),
                fmt_ratio(r.makespan),
                fmt_ratio(r.overall)
            );
        }
        Err(_) => {
            println!("{}: {:?}", spec.name, result.status);
            if let Some(d) = &result.diagnostics {
                println!("  {d}");
            }
        }
    }
    info!("wrote {}", traj.display());
    Ok(status_code(result.status))
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |r| format!("{r:.3}"))
}

fn collect_scenarios(paths: &[PathBuf], overrides: &Overrides) -> Result<Vec<ScenarioSpec>> {
    let mut specs = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found = input(scenario::load_dir(p).map_err(Into::into))?;
            for s in &mut found {
                input(overrides.apply(s))?;
            }
            specs.extend(found);
        } else {
            specs.push(load_scenario(p, overrides)?);
        }
    }
    if specs.is_empty() {
        return input(Err(anyhow::anyhow!("no scenario files found")));
    }
    Ok(specs)
}

fn cmd_suite(
    paths: &[PathBuf],
    trials: usize,
    parallel: bool,
    format: ReportFormat,
    out: &Path,
    overrides: &Overrides,
) -> Result<u8> {
    if trials == 0 {
        return input(Err(anyhow::anyhow!("--trials must be at least 1")));
    }
    let specs = collect_scenarios(paths, overrides)?;
    let runs = scenario::run_suite_detailed(&specs, trials, parallel);
    for run in &runs {
        if let Some(result) = &run.result {
            write_plan_outputs(out, &run.row.name, result)?;
        }
    }
    let report = MetricsReport {
        rows: runs.into_iter().map(|r| r.row).collect(),
    };
    let table = report.to_table();
    if format != ReportFormat::Json {
        print!("{table}");
        write(&out.join("report.txt"), &table)?;
    }
    if format != ReportFormat::Table {
        let json = report.to_json();
        if format == ReportFormat::Json {
            println!("{json}");
        }
        write(&out.join("report.json"), &json)?;
    }
    let failed: Vec<_> = report
        .rows
        .iter()
        .filter(|r| r.status != RowStatus::Converged)
        .collect();
    for r in &failed {
        warn!(
            "{}: {:?}{}",
            r.name,
            r.status,
            r.diagnostics.as_deref().map(|d| format!(": {d}")).unwrap_or_default()
        );
    }
    eprintln!(
        "{} of {} scenarios converged",
        report.rows.len() - failed.len(),
        report.rows.len()
    );
    let worst = failed
        .iter()
        .map(|r| match r.status {
            RowStatus::Invalid => EXIT_INPUT,
            RowStatus::Infeasible => EXIT_INFEASIBLE,
            RowStatus::BudgetExhausted => EXIT_BUDGET,
            RowStatus::Converged => EXIT_OK,
        })
        .min();
    Ok(worst.unwrap_or(EXIT_OK))
}

fn read_trajectories(path: &Path) -> Result<TrajectorySet> {
    let text = input(
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display())),
    )?;
    input(TrajectorySet::parse(&text).with_context(|| format!("parsing {}", path.display())))
}

fn cmd_validate(paths: &[PathBuf], dt: f64) -> Result<u8> {
    if !(dt > 0.0 && dt.is_finite()) {
        return input(Err(anyhow::anyhow!("--dt must be positive, got {dt}")));
    }
    let mut clean = true;
    for path in paths {
        let set = read_trajectories(path)?;
        let mut problems = 0;
        for p in set.paths.iter().filter(|p| p.kind() == PathKind::Agent) {
            for v in p.validate(&set.params) {
                println!("{}: path {}: {v}", path.display(), p.id());
                problems += 1;
            }
        }
        for v in capsule_oracle(&set.paths, set.agent_radius, dt) {
            println!(
                "{}: collision {} / {} at t = {:.2} s, distance {:.4} m",
                path.display(),
                v.first,
                v.second,
                v.t,
                v.distance
            );
            problems += 1;
        }
        if problems == 0 {
            println!("{}: clean", path.display());
        } else {
            clean = false;
        }
    }
    Ok(if clean { EXIT_OK } else { EXIT_VIOLATIONS })
}

fn cmd_plot(paths: &[PathBuf], out: &Path) -> Result<u8> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for path in paths {
        let set = read_trajectories(path)?;
        let stem = path
            .file_name()
            .and_then(|n| n.to_str())
            .map(|n| n.trim_end_matches(".csv").trim_end_matches(".traj"))
            .unwrap_or("plot");
        write(
            &out.join(format!("{stem}.top.svg")),
            &top_down_svg(&set.paths, set.agent_radius, stem),
        )?;
        write(&out.join(format!("{stem}.stg.svg")), &triptych_svg(&set.paths, stem))?;
        info!("plotted {}", path.display());
    }
    Ok(EXIT_OK)
}
