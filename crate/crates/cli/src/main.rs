//! `wopsip`: convergence studies, mesh diagnostics and mesh export.
//!
//! Exit codes: 0 on success, 2 when the linear solver does not converge,
//! 1 on configuration and all other errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wopsip_core::experiment::{csv_string, format_sci, Settings};
use wopsip_core::{
    emit_csv, generate_mesh, mesh_quality, penalty_diagnostics, run_experiment, ConvergenceReport,
    Error, ExperimentConfig, Result,
};

#[derive(Parser)]
#[command(
    name = "wopsip",
    version,
    about = "WOPSIP and WBCR Stokes solvers on anisotropic triangular meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and print (or write) the CSV table.
    Converge(Options),
    /// Print mesh quality metrics and penalty diagnostics for each N.
    Diagnose(Options),
    /// Write the mesh for a single N as plain text.
    ExportMesh(Options),
}

/// Command-line values override those read from `--config`.
#[derive(Args, Debug, Default)]
struct Options {
    /// key = value settings file
    #[arg(long)]
    config: Option<PathBuf>,
    /// wopsip or wbcr
    #[arg(long)]
    scheme: Option<String>,
    /// uniform|I, shishkin|II, cosine|III, quadratic|IV
    #[arg(long)]
    mesh: Option<String>,
    /// Shishkin mesh parameter, e.g. 1/128
    #[arg(long)]
    delta: Option<String>,
    /// poly or layer
    #[arg(long)]
    problem: Option<String>,
    /// layer width of the boundary layer problem (defaults to --delta)
    #[arg(long)]
    problem_delta: Option<String>,
    /// comma-separated, strictly increasing N values
    #[arg(long)]
    n: Option<String>,
    /// kappa or kappa-star
    #[arg(long)]
    penalty: Option<String>,
    /// relative residual tolerance of the linear solver
    #[arg(long)]
    tol: Option<String>,
    /// none, jacobi or block
    #[arg(long)]
    preconditioner: Option<String>,
    /// krylov or direct
    #[arg(long)]
    method: Option<String>,
    /// iteration budget of the Krylov solver
    #[arg(long)]
    max_iterations: Option<String>,
    /// viscosity
    #[arg(long)]
    nu: Option<String>,
    /// output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Options {
    fn into_config(self) -> Result<ExperimentConfig> {
        let mut settings = match &self.config {
            Some(path) => Settings::parse(
                &std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?,
            )?,
            None => Settings::default(),
        };
        let overrides = [
            ("scheme", self.scheme),
            ("mesh", self.mesh),
            ("delta", self.delta),
            ("problem", self.problem),
            ("problem_delta", self.problem_delta),
            ("n", self.n),
            ("penalty", self.penalty),
            ("tol", self.tol),
            ("preconditioner", self.preconditioner),
            ("method", self.method),
            ("max_iterations", self.max_iterations),
            ("nu", self.nu),
            ("out", self.out.map(|p| p.to_string_lossy().into_owned())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                settings.set(key, v);
            }
        }
        settings.into_config()
    }
}

fn output(config: &ExperimentConfig) -> Result<Box<dyn Write>> {
    Ok(match &config.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn summary(report: &ConvergenceReport) {
    let c = &report.config;
    eprintln!(
        "{} / {} / mesh {} / {:?} (nu = {})",
        c.scheme, c.penalty, c.family, c.problem.kind, c.problem.nu
    );
    for (i, row) in report.rows.iter().enumerate() {
        let rate = report
            .rates(i)
            .map(|r| format!("{:.2}", r[3]))
            .unwrap_or_default();
        eprintln!(
            "  N={:<4} Np={:<7} combined={} r={rate:<6} iters={} ({:.2} s)",
            row.n,
            row.nodal_points,
            format_sci(row.errors.combined()),
            row.iterations,
            row.seconds
        );
    }
}

fn converge(config: ExperimentConfig) -> Result<()> {
    let report = run_experiment(&config)?;
    summary(&report);
    match &config.out {
        Some(path) => emit_csv(&report, path),
        None => {
            print!("{}", csv_string(&report));
            Ok(())
        }
    }
}

fn diagnose(config: ExperimentConfig) -> Result<()> {
    let mut out = output(&config)?;
    writeln!(
        out,
        "N,h,inv_h,min_angle,max_angle,semi_regularity,tau_f,tau_ave,tau_dg,tau_wop"
    )?;
    for &n in &config.n_list {
        let mesh = generate_mesh(config.family, n)?;
        let q = mesh_quality(&mesh);
        let d = penalty_diagnostics(&mesh);
        let cols = [
            q.h,
            1.0 / q.h,
            q.min_angle_metric,
            q.max_angle_metric,
            q.semi_regularity,
            d.tau_f,
            d.tau_ave,
            d.tau_dg,
            d.tau_wop,
        ];
        let cols: Vec<String> = cols.into_iter().map(format_sci).collect();
        writeln!(out, "{n},{}", cols.join(","))?;
    }
    Ok(out.flush()?)
}

fn export_mesh(config: ExperimentConfig) -> Result<()> {
    let [n] = config.n_list[..] else {
        return Err(Error::Config(format!(
            "export-mesh takes a single N, got {:?}",
            config.n_list
        )));
    };
    let mut out = output(&config)?;
    generate_mesh(config.family, n)?.write_text(&mut out)?;
    Ok(out.flush()?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, options) = match cli.command {
        Command::Converge(o) => (converge as fn(ExperimentConfig) -> Result<()>, o),
        Command::Diagnose(o) => (diagnose as fn(ExperimentConfig) -> Result<()>, o),
        Command::ExportMesh(o) => (export_mesh as fn(ExperimentConfig) -> Result<()>, o),
    };
    match options.into_config().and_then(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_non_convergence() { 2 } else { 1 })
        }
    }
}
