//! `robins`: solve, sweep and simulate the robust insurance equilibrium.
//!
//! Exit status is 0 on success, 1 when no equilibrium exists or an
//! invariant fails, and 2 for configuration errors.

mod config;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robust_insurance::acceptance::{render, CRITERIA};
use robust_insurance::dynamics::{occupancy, simulate_path};
use robust_insurance::io::{self, Sidecar};
use robust_insurance::{
    analyze, build_dynamics, solve_equilibrium, stationary_density, sweep, CapacityDynamics, EquilibriumSolution,
    Error, SweepAxis,
};
use serde::Serialize;

use config::{prepare_output, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(Error),
    #[error("{0}")]
    Failed(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } | Error::InvalidConfig(_) => CliError::Config(e.to_string()),
            e => CliError::Model(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Model(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(_) | CliError::Failed(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "robins", version, about = "Robust insurance market equilibrium experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment configuration; missing fields take benchmark defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config field by dotted path, e.g. `market.rho=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Output directory, overriding `output.directory`.
    #[arg(long, global = true, env = "ROBINS_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the equilibrium and write its profile.
    Solve,
    /// Solve along one parameter axis.
    Sweep {
        #[arg(long)]
        axis: Option<SweepAxis>,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
    /// Simulate the reflected capacity and record its occupancy.
    Simulate,
    /// Expected soft- and hard-phase durations.
    Cycles,
    /// Stationary density of capacity.
    Density,
    /// Run the acceptance criteria and print a pass/fail table.
    Reproduce {
        /// Print every individual check, not only failures.
        #[arg(long)]
        verbose: bool,
        /// Only run criteria whose name contains one of these.
        filters: Vec<String>,
    },
}

struct Run {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn solve(&self) -> Result<EquilibriumSolution, CliError> {
        let sol = solve_equilibrium(&self.cfg.market, &self.cfg.solver)?;
        for c in sol.diagnostics.assumptions.checks.iter().filter(|c| !c.passed) {
            let at = c.worst_capacity.map_or(String::new(), |m| format!(" at M = {m}"));
            eprintln!(
                "warning: non-blocking check `{}` failed (margin {:e}{at})",
                c.name, c.margin
            );
        }
        Ok(sol)
    }

    fn dynamics(&self) -> Result<(EquilibriumSolution, CapacityDynamics), CliError> {
        let sol = self.solve()?;
        let dyn_ = build_dynamics(&sol)?;
        Ok((sol, dyn_))
    }

    fn columns(&self, name: &str, header: &[&str], columns: &[&[f64]]) -> Result<(), CliError> {
        if self.cfg.output.emit_csv {
            let path = self.path(name);
            io::write_columns(&path, header, columns)?;
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        io::write_json(&path, value)?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    fn plot(&self, name: &str, plot: svg::Plot) -> Result<(), CliError> {
        if self.cfg.output.emit_svg {
            let path = self.path(name);
            svg::write(&path, &plot)?;
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn solve_cmd(run: &Run) -> Result<(), CliError> {
    let sol = run.solve()?;
    if run.cfg.output.emit_csv {
        let (csv, json) = io::write_solution(&sol, &run.out, "equilibrium")?;
        eprintln!("wrote {} and {}", csv.display(), json.display());
    } else {
        let sidecar = Sidecar {
            m_low: sol.m_low,
            m_high: sol.m_high,
            params: sol.params,
            diagnostics: sol.diagnostics.clone(),
        };
        run.json("equilibrium.json", &sidecar)?;
    }
    println!("M_low  = {:.6}", sol.m_low);
    println!("M_high = {:.6}", sol.m_high);
    let m = &sol.grid;
    run.plot(
        "u.svg",
        svg::Plot {
            title: "Market-to-book ratio",
            x_label: "M",
            y_label: "u",
            x: m,
            y: &sol.ratio,
        },
    )?;
    run.plot(
        "p.svg",
        svg::Plot {
            title: "Premium rate",
            x_label: "M",
            y_label: "p",
            x: m,
            y: &sol.price,
        },
    )?;
    run.plot(
        "Y.svg",
        svg::Plot {
            title: "Risky investment",
            x_label: "M",
            y_label: "Y",
            x: m,
            y: &sol.investment,
        },
    )?;
    Ok(())
}

fn sweep_cmd(run: &Run) -> Result<(), CliError> {
    let spec = &run.cfg.sweep;
    if spec.values.is_empty() {
        return Err(CliError::Config("sweep.values is empty".into()));
    }
    let rows = sweep(&run.cfg.market, spec.axis, &spec.values, &run.cfg.solver);
    let path = run.path(&format!("sweep_{}.csv", spec.axis));
    io::write_sweep(&path, &rows)?;
    eprintln!("wrote {}", path.display());

    println!(
        "{:>10} {:>10} {:>10} {:>10}  status",
        spec.axis.name(),
        "M_low",
        "M_high",
        "dM"
    );
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for r in &rows {
        println!(
            "{:>10} {:>10} {:>10} {:>10}  {}",
            r.value,
            fmt(r.m_low),
            fmt(r.m_high),
            fmt(r.range),
            r.status
        );
    }
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.solved())
        .map(|r| format!("{}={}: {}", spec.axis, r.value, r.status))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "{} of {} sweep points failed: {}",
            failed.len(),
            rows.len(),
            failed.join("; ")
        )))
    }
}

fn simulate_cmd(run: &Run) -> Result<(), CliError> {
    let (_, dyn_) = run.dynamics()?;
    let sim = &run.cfg.simulation;
    let path = simulate_path(&dyn_, sim, 0, run.cfg.output.stride)?;
    let (t, m): (Vec<f64>, Vec<f64>) = path.into_iter().unzip();
    run.columns("path.csv", &["t", "M"], &[&t, &m])?;

    let hist = occupancy(&dyn_, sim)?;
    let (left, right): (Vec<f64>, Vec<f64>) = hist.edges.windows(2).map(|e| (e[0], e[1])).unzip();
    run.columns(
        "occupancy.csv",
        &["bin_left", "bin_right", "fraction"],
        &[&left, &right, &hist.fractions],
    )?;
    println!("paths        = {}", sim.paths);
    println!("samples      = {}", hist.samples);
    println!("time_average = {:.6}", hist.time_average);
    run.plot(
        "path.svg",
        svg::Plot {
            title: "Sample path of capacity",
            x_label: "t",
            y_label: "M",
            x: &t,
            y: &m,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct CycleSummary {
    #[serde(rename = "M_low")]
    m_low: f64,
    #[serde(rename = "M_high")]
    m_high: f64,
    soft_duration: f64,
    hard_duration: f64,
    cycle_duration: f64,
    kappa: f64,
    stationary_mean: f64,
}

fn cycles_cmd(run: &Run) -> Result<(), CliError> {
    let (sol, dyn_) = run.dynamics()?;
    let a = analyze(&dyn_, run.cfg.solver.grid_size)?;
    let d = &a.durations;
    run.columns("durations.csv", &["M", "Ts", "Th"], &[&d.grid, &d.soft, &d.hard])?;
    let summary = CycleSummary {
        m_low: sol.m_low,
        m_high: sol.m_high,
        soft_duration: a.soft_duration,
        hard_duration: a.hard_duration,
        cycle_duration: a.cycle_duration,
        kappa: a.density.kappa,
        stationary_mean: a.density.integrate(|m| m),
    };
    run.json("cycles.json", &summary)?;
    println!("soft  = {:.4}", a.soft_duration);
    println!("hard  = {:.4}", a.hard_duration);
    println!("cycle = {:.4}", a.cycle_duration);
    Ok(())
}

fn density_cmd(run: &Run) -> Result<(), CliError> {
    let (_, dyn_) = run.dynamics()?;
    let d = stationary_density(&dyn_, run.cfg.solver.grid_size)?;
    run.columns("density.csv", &["M", "pi"], &[&d.grid, &d.density])?;
    println!("kappa = {:.6e}", d.kappa);
    println!("mean  = {:.6}", d.integrate(|m| m));
    run.plot(
        "density.svg",
        svg::Plot {
            title: "Stationary density",
            x_label: "M",
            y_label: "pi",
            x: &d.grid,
            y: &d.density,
        },
    )?;
    Ok(())
}

fn reproduce_cmd(verbose: bool, filters: &[String]) -> Result<(), CliError> {
    let mut outcomes = Vec::new();
    for (name, criterion) in CRITERIA {
        if filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str())) {
            eprintln!("running {name}");
            outcomes.push(criterion());
        }
    }
    if outcomes.is_empty() {
        return Err(CliError::Config(format!("no criterion matches {filters:?}")));
    }
    print!("{}", render(&outcomes, verbose));
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("criteria failed: {}", failed.join(", "))))
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.set)?;
    if let Command::Sweep { axis, values } = &cli.command {
        if let Some(axis) = axis {
            cfg.sweep.axis = *axis;
        }
        if let Some(values) = values {
            cfg.sweep.values = values.clone();
        }
    }
    if let Command::Reproduce { verbose, filters } = &cli.command {
        return reproduce_cmd(*verbose, filters);
    }
    let out = cli.out.unwrap_or_else(|| cfg.output.directory.clone());
    prepare_output(Path::new(&out))?;
    let run = Run { cfg, out };
    match cli.command {
        Command::Solve => solve_cmd(&run),
        Command::Sweep { .. } => sweep_cmd(&run),
        Command::Simulate => simulate_cmd(&run),
        Command::Cycles => cycles_cmd(&run),
        Command::Density => density_cmd(&run),
        Command::Reproduce { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("robins: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
