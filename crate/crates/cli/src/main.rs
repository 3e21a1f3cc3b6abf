//! Command-line front end: case checking, equilibrium solving,
//! simulation runs, trajectory comparison and SVG plotting.
//!
//! Exit codes are a contract: 0 on success (and, for `compare --tol`,
//! within tolerance), nonzero otherwise, with machine-parseable
//! `ERROR <kind>: <detail>` lines on stderr.

use clap::{Parser, Subcommand, ValueEnum};
use kronsim::case::{load_case, CaseError};
use kronsim::network::{dae_counts, FullAdmittance, NetworkError, ReducedNetwork};
use kronsim::plot::{emit_plot_svg, PlotError, PlotSeries};
use kronsim::sim::{
    find_equilibrium, plan_events, simulate_reduced, simulate_reference,
    source_terminal_voltages, SimError,
};
use kronsim::timeseries::{compare, TimeSeries, TsError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "kronsim",
    version,
    about = "Converter-grid transient simulation with an algebraized network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a case file, printing its structure and the
    /// divider-matrix properties.
    Check { case: PathBuf },
    /// Solve for the operating point and print every state with the
    /// final residual.
    Equilibrium { case: PathBuf },
    /// Simulate a case and write the trajectory as CSV.
    Run {
        case: PathBuf,
        /// Which simulator to run.
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Override the case's fixed step (seconds).
        #[arg(long)]
        dt: Option<f64>,
        /// Override the case's horizon (seconds).
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Output file; defaults to `<case>_<model>.csv` in the working
        /// directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two trajectory files signal-by-signal.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Comma-separated signal names; defaults to all common signals.
        #[arg(long, value_delimiter = ',')]
        signals: Option<Vec<String>>,
        /// Exit nonzero if any max-abs deviation exceeds this.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Render selected signals of one or more trajectories into an SVG
    /// (first file solid, second dashed).
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        signals: Vec<String>,
        #[arg(long, required = true)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Reduced,
    Reference,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Reduced => "reduced",
            ModelKind::Reference => "reference",
        }
    }
}

/// Pre-formatted `ERROR <kind>: <detail>` lines for stderr.
struct Failure(Vec<String>);

impl Failure {
    fn one(kind: &str, detail: impl std::fmt::Display) -> Failure {
        Failure(vec![format!("ERROR {kind}: {detail}")])
    }
}

impl From<CaseError> for Failure {
    fn from(e: CaseError) -> Failure {
        match e {
            CaseError::Semantic(list) => Failure(
                list.iter()
                    .map(|s| format!("ERROR {}: {}", s.kind(), s))
                    .collect(),
            ),
            other => Failure::one(other.kind(), other),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Failure {
        Failure::one(e.kind(), e)
    }
}

impl From<NetworkError> for Failure {
    fn from(e: NetworkError) -> Failure {
        Failure::one(e.kind(), e)
    }
}

impl From<TsError> for Failure {
    fn from(e: TsError) -> Failure {
        Failure::one(e.kind(), e)
    }
}

impl From<PlotError> for Failure {
    fn from(e: PlotError) -> Failure {
        Failure::one(e.kind(), e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { case } => check(&case),
        Command::Equilibrium { case } => equilibrium(&case),
        Command::Run {
            case,
            model,
            dt,
            t_end,
            out,
        } => run(&case, model, dt, t_end, out),
        Command::Compare { a, b, signals, tol } => compare_cmd(&a, &b, signals, tol),
        Command::Plot { csv, signals, out } => plot_cmd(&csv, &signals, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(lines)) => {
            for line in lines {
                eprintln!("{line}");
            }
            ExitCode::FAILURE
        }
    }
}

fn check(path: &Path) -> Result<(), Failure> {
    let case = load_case(path)?;
    let full = FullAdmittance::assemble(&case)?;
    let net = ReducedNetwork::reduce(&full)?;

    let ordering = full.ordering();
    println!("case OK: {}", path.display());
    if let Some(desc) = &case.description {
        println!("  {desc}");
    }
    println!(
        "nodes: {} ({} source: {:?}; {} intermediate: {:?})",
        ordering.node_count(),
        ordering.source_count(),
        ordering.source_ids(),
        ordering.intermediate_count(),
        ordering.intermediate_ids(),
    );
    println!(
        "attachments: {}; branches: {}",
        full.attachments().len(),
        case.branches.len()
    );
    let (n_diff, n_alg) = dae_counts(&case);
    println!("differential equations: {n_diff}, algebraic equations: {n_alg}");

    let y = full.y();
    let mut y_asym = 0.0f64;
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            y_asym = y_asym.max((y[(i, j)] - y[(j, i)]).abs());
        }
    }
    let m = net.divider();
    let mut row_err = 0.0f64;
    let mut min_entry = f64::INFINITY;
    for row in 0..m.nrows() {
        let sum: f64 = (0..m.ncols()).map(|c| m[(row, c)]).sum();
        row_err = row_err.max((sum - 1.0).abs());
        for c in 0..m.ncols() {
            min_entry = min_entry.min(m[(row, c)]);
        }
    }
    println!("Y asymmetry: {y_asym:.3e}");
    println!(
        "divider: {}x{}, max |row sum - 1| = {row_err:.3e}, min entry = {min_entry:.3e}",
        m.nrows(),
        m.ncols()
    );
    let (_, warnings) = plan_events(&case.events, case.sim.t_end);
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn equilibrium(path: &Path) -> Result<(), Failure> {
    let case = load_case(path)?;
    let eq = find_equilibrium(&case)?;
    println!("equilibrium found in {} iteration(s)", eq.iterations);
    for (idx, name) in eq.state.layout.names().iter().enumerate() {
        println!("  {name} = {:.12}", eq.state.values[idx]);
    }
    for (node, u) in source_terminal_voltages(&case, &eq.state)? {
        println!("  node{node}.ut = ({:.12}, {:.12})", u.x, u.y);
    }
    println!("residual |f|_inf = {:.3e}", eq.residual);
    Ok(())
}

fn run(
    path: &Path,
    model: ModelKind,
    dt: Option<f64>,
    t_end: Option<f64>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let case = load_case(path)?;
    let mut cfg = case.sim.clone();
    if let Some(dt) = dt {
        cfg.dt = dt;
    }
    if let Some(t_end) = t_end {
        cfg.t_end = t_end;
    }
    let (_, warnings) = plan_events(&case.events, cfg.t_end);
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let ts = match model {
        ModelKind::Reduced => simulate_reduced(&case, &cfg, None)?,
        ModelKind::Reference => simulate_reference(&case, &cfg, None)?,
    };
    let out = out.unwrap_or_else(|| default_out(path, model));
    ts.write_csv_path(&out)?;
    println!(
        "wrote {} samples x {} signals to {}",
        ts.len(),
        ts.names().len(),
        out.display()
    );
    Ok(())
}

fn default_out(case: &Path, model: ModelKind) -> PathBuf {
    let stem = case
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "case".to_string());
    PathBuf::from(format!("{stem}_{}.csv", model.name()))
}

fn compare_cmd(
    a: &Path,
    b: &Path,
    signals: Option<Vec<String>>,
    tol: Option<f64>,
) -> Result<(), Failure> {
    let ts_a = TimeSeries::read_csv_path(a)?;
    let ts_b = TimeSeries::read_csv_path(b)?;
    let report = compare(&ts_a, &ts_b, signals.as_deref())?;
    println!("{report}");
    if let Some(tol) = tol {
        if !report.within(tol) {
            return Err(Failure::one(
                "ToleranceExceeded",
                format!(
                    "max |a - b| = {:.6e} exceeds tolerance {tol:.6e}",
                    report.max_abs_overall()
                ),
            ));
        }
        println!("within tolerance {tol:.3e}");
    }
    Ok(())
}

fn plot_cmd(csv: &[PathBuf], signals: &[String], out: &Path) -> Result<(), Failure> {
    let mut loaded: Vec<(String, TimeSeries)> = Vec::new();
    for path in csv {
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        loaded.push((label, TimeSeries::read_csv_path(path)?));
    }
    let series: Vec<PlotSeries<'_>> = loaded
        .iter()
        .map(|(label, ts)| PlotSeries {
            label: label.clone(),
            series: ts,
        })
        .collect();
    emit_plot_svg(&series, signals, out)?;
    println!("wrote {}", out.display());
    Ok(())
}
