//! Convergence studies over a sequence of resolutions and their CSV output.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::{convergence_rate, dof_count, error_report, ErrorReport};
use crate::assembly::{assemble, PenaltyMode, Scheme};
use crate::linsolve::{solve_saddle, Method, Preconditioner, SolveOptions};
use crate::mesh::{generate_mesh, MeshFamily};
use crate::problems::{boundary_layer_problem, polynomial_problem, Problem};
use crate::{Error, Result};

pub const CSV_HEADER: &str =
    "N,Np,h,err_h1,err_l2u,err_l2p,err_energy,err_combined,rate_h1,rate_l2u,rate_l2p,rate_combined,iters,seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub penalty: PenaltyMode,
    pub family: MeshFamily,
    pub problem: Problem,
    pub n_list: Vec<usize>,
    pub solver: SolveOptions,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scheme: Scheme::Wopsip,
            penalty: PenaltyMode::Kappa,
            family: MeshFamily::Uniform,
            problem: polynomial_problem(),
            n_list: vec![8, 16, 32],
            solver: SolveOptions::default(),
            out: None,
        }
    }
}

/// Parses a real number, also accepting a fraction such as `1/128`.
pub fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Config(format!("not a number: {s:?}"));
    match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            Ok(a / b)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

pub fn parse_scheme(s: &str) -> Result<Scheme> {
    match s.trim().to_ascii_lowercase().as_str() {
        "wopsip" => Ok(Scheme::Wopsip),
        "wbcr" => Ok(Scheme::Wbcr),
        other => Err(Error::Config(format!(
            "unknown scheme {other:?} (expected wopsip or wbcr)"
        ))),
    }
}

pub fn parse_penalty(s: &str) -> Result<PenaltyMode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "kappa" => Ok(PenaltyMode::Kappa),
        "kappa-star" | "kappastar" | "kappa_star" | "star" => Ok(PenaltyMode::KappaStar),
        other => Err(Error::Config(format!(
            "unknown penalty {other:?} (expected kappa or kappa-star)"
        ))),
    }
}

/// Mesh family by name or roman numeral; `delta` is only used for Shishkin meshes.
pub fn parse_family(s: &str, delta: f64) -> Result<MeshFamily> {
    match s.trim().to_ascii_lowercase().as_str() {
        "uniform" | "i" => Ok(MeshFamily::Uniform),
        "shishkin" | "ii" => Ok(MeshFamily::Shishkin { delta }),
        "cosine" | "iii" => Ok(MeshFamily::CosineGraded),
        "quadratic" | "iv" => Ok(MeshFamily::QuadraticGraded),
        other => Err(Error::Config(format!("unknown mesh family {other:?}"))),
    }
}

pub fn parse_problem(s: &str, delta: f64) -> Result<Problem> {
    match s.trim().to_ascii_lowercase().as_str() {
        "poly" | "polynomial" => Ok(polynomial_problem()),
        "layer" | "boundary-layer" => {
            boundary_layer_problem(delta).map_err(|e| Error::Config(e.to_string()))
        }
        other => Err(Error::Config(format!(
            "unknown problem {other:?} (expected poly or layer)"
        ))),
    }
}

pub fn parse_preconditioner(s: &str) -> Result<Preconditioner> {
    match s.trim().to_ascii_lowercase().as_str() {
        "none" => Ok(Preconditioner::None),
        "jacobi" => Ok(Preconditioner::Jacobi),
        "block" | "block-cholesky" => Ok(Preconditioner::BlockCholesky),
        other => Err(Error::Config(format!("unknown preconditioner {other:?}"))),
    }
}

pub fn parse_method(s: &str) -> Result<Method> {
    match s.trim().to_ascii_lowercase().as_str() {
        "krylov" | "minres" => Ok(Method::Krylov),
        "direct" | "oracle" => Ok(Method::DirectOracle),
        other => Err(Error::Config(format!("unknown solver method {other:?}"))),
    }
}

pub fn parse_n_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid N value {v:?}")))
        })
        .collect()
}

/// Raw `key = value` settings, applied in order so later entries override
/// earlier ones (command-line overrides come after the file).
#[derive(Debug, Clone, Default)]
pub struct Settings {
    entries: Vec<(String, String)>,
}

impl Settings {
    /// Parses a flat key=value file; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            entries.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
        Ok(Settings { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_ascii_lowercase(), value.into()));
    }

    fn last(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn into_config(self) -> Result<ExperimentConfig> {
        const KEYS: [&str; 13] = [
            "scheme",
            "penalty",
            "mesh",
            "delta",
            "problem",
            "problem_delta",
            "n",
            "tol",
            "max_iterations",
            "preconditioner",
            "method",
            "nu",
            "out",
        ];
        if let Some((k, _)) = self
            .entries
            .iter()
            .find(|(k, _)| !KEYS.contains(&k.as_str()))
        {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
        let mut c = ExperimentConfig::default();
        if let Some(v) = self.last("scheme") {
            c.scheme = parse_scheme(v)?;
        }
        if let Some(v) = self.last("penalty") {
            c.penalty = parse_penalty(v)?;
        }
        let mesh_delta = self.last("delta").map(parse_real).transpose()?;
        if let Some(v) = self.last("mesh") {
            c.family = parse_family(v, mesh_delta.unwrap_or(1.0 / 128.0))?;
        }
        let problem_delta = self
            .last("problem_delta")
            .map(parse_real)
            .transpose()?
            .or(mesh_delta)
            .unwrap_or(1.0 / 128.0);
        if let Some(v) = self.last("problem") {
            c.problem = parse_problem(v, problem_delta)?;
        }
        if let Some(v) = self.last("nu") {
            c.problem.nu = parse_real(v)?;
        }
        if let Some(v) = self.last("n") {
            c.n_list = parse_n_list(v)?;
        }
        if let Some(v) = self.last("tol") {
            c.solver.rel_tolerance = parse_real(v)?;
        }
        if let Some(v) = self.last("max_iterations") {
            let m = v
                .parse()
                .map_err(|_| Error::Config(format!("invalid max_iterations {v:?}")))?;
            c.solver.max_iterations = Some(m);
        }
        if let Some(v) = self.last("preconditioner") {
            c.solver.preconditioner = parse_preconditioner(v)?;
        }
        if let Some(v) = self.last("method") {
            c.solver.method = parse_method(v)?;
        }
        if let Some(v) = self.last("out") {
            c.out = Some(PathBuf::from(v));
        }
        c.validate()?;
        Ok(c)
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Settings::parse(&std::fs::read_to_string(path)?)?.into_config()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::Config("the list of N values is empty".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "N values must increase strictly: {:?}",
                self.n_list
            )));
        }
        for &n in &self.n_list {
            self.family
                .validate(n)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        if !(self.problem.nu > 0.0) {
            return Err(Error::Config(format!(
                "viscosity must be positive, got {}",
                self.problem.nu
            )));
        }
        self.solver
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub nodal_points: usize,
    pub h: f64,
    pub errors: ErrorReport,
    pub iterations: usize,
    pub seconds: f64,
}

/// Rates between a row and its predecessor: `[h1, l2u, l2p, combined]`.
pub type Rates = [f64; 4];

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// Rates for row `i`, `None` for the first row.
    pub fn rates(&self, i: usize) -> Option<Rates> {
        if i == 0 {
            return None;
        }
        let (a, b) = (&self.rows[i - 1].errors, &self.rows[i].errors);
        let r = |x: f64, y: f64| convergence_rate(x, y).unwrap_or(f64::NAN);
        Some([
            r(a.rel_h1(), b.rel_h1()),
            r(a.rel_l2u(), b.rel_l2u()),
            r(a.rel_l2p(), b.rel_l2p()),
            r(a.combined(), b.combined()),
        ])
    }
}

fn run_one(config: &ExperimentConfig, n: usize) -> Result<ConvergenceRow> {
    let start = Instant::now();
    let mesh = generate_mesh(config.family, n)?;
    let system = assemble(&mesh, &config.problem, config.scheme, config.penalty)?;
    let sol = solve_saddle(&system, &config.solver)?;
    let errors = error_report(
        &mesh,
        &config.problem,
        &sol.u,
        &sol.p,
        config.scheme,
        config.penalty,
    )?;
    Ok(ConvergenceRow {
        n,
        nodal_points: dof_count(&mesh, config.scheme),
        h: mesh.h,
        errors,
        iterations: sol.iterations,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs mesh generation, assembly, solve and error evaluation for every N.
/// Resolutions run concurrently; rows are returned in N order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let results: Vec<Result<ConvergenceRow>> = config
        .n_list
        .par_iter()
        .map(|&n| run_one(config, n))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    for (res, &n) in results.into_iter().zip(&config.n_list) {
        rows.push(res.map_err(|e| Error::AtResolution {
            n,
            source: Box::new(e),
        })?);
    }
    Ok(ConvergenceReport {
        config: config.clone(),
        rows,
    })
}

/// Scientific notation with six significant digits and a signed two-digit
/// exponent, e.g. `8.10569e-01`.
pub fn format_sci(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.5e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn csv_string(report: &ConvergenceReport) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for (i, row) in report.rows.iter().enumerate() {
        let e = &row.errors;
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},",
            row.n,
            row.nodal_points,
            format_sci(row.h),
            format_sci(e.rel_h1()),
            format_sci(e.rel_l2u()),
            format_sci(e.rel_l2p()),
            format_sci(e.rel_energy()),
            format_sci(e.combined()),
        );
        match report.rates(i) {
            Some(r) => {
                let _ = write!(
                    s,
                    "{},{},{},{},",
                    format_sci(r[0]),
                    format_sci(r[1]),
                    format_sci(r[2]),
                    format_sci(r[3])
                );
            }
            None => s.push_str(",,,,"),
        }
        let _ = writeln!(s, "{},{}", row.iterations, format_sci(row.seconds));
    }
    s
}

pub fn emit_csv(report: &ConvergenceReport, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(csv_string(report).as_bytes())?;
    f.flush()?;
    Ok(())
}
