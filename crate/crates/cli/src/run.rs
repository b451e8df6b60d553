//! Pipeline orchestration and dataset output.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use polaron_core::band::band;
use polaron_core::fock::field_report;
use polaron_core::solver::{solve_continuation, write_field_table};
use polaron_core::{
    extract_scaling, sweep, AMatrix, Complex64, CorrelationContext, CorrelationEngine, ModelParams, OracleQuantity, PolaronError,
    Solution,
};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{Cell, Format, RunConfig};
use crate::plots::emit_plots;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Band,
    Transport,
    Oracle,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Band => "band",
            Command::Transport => "transport",
            Command::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Core(#[from] PolaronError),
    #[error("no dataset found in {0}")]
    MissingDataset(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        let path = PathBuf::from("<csv>");
        match e.into_kind() {
            csv::ErrorKind::Io(source) => RunError::Io { path, source },
            other => RunError::Io { path, source: std::io::Error::other(format!("{other:?}")) },
        }
    }
}

/// Files written and the number of temperature points that failed.
#[derive(Debug, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub failures: usize,
    pub points: usize,
}

impl RunSummary {
    /// 0 on full success, 2 when some points failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures > 0 {
            2
        } else {
            0
        }
    }
}

/// Scientific notation with 16 significant digits; `nan` for missing values.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.15e}")
    }
}

struct Output<'a> {
    cfg: &'a RunConfig,
    command: Command,
    dir: PathBuf,
    summary: RunSummary,
}

impl<'a> Output<'a> {
    fn new(cfg: &'a RunConfig, command: Command) -> Result<Self, RunError> {
        let dir = cfg.outputs.directory.clone();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { cfg, command, dir, summary: RunSummary::default() })
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
        if !self.cfg.outputs.wants(Format::Csv) {
            return Ok(());
        }
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => RunError::Io { path: path.clone(), source },
            other => RunError::Io { path: path.clone(), source: std::io::Error::other(format!("{other:?}")) },
        })?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(io_err(&path))?;
        self.summary.files.push(path);
        Ok(())
    }

    fn sidecar(&mut self, name: &str, cell: Option<&Cell>, body: serde_json::Value, started: Instant) -> Result<(), RunError> {
        if !self.cfg.outputs.wants(Format::Json) {
            return Ok(());
        }
        let path = self.dir.join(name);
        let params = cell.map(|c| self.cfg.params(c));
        let doc = json!({
            "program": "polaron",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command.as_str(),
            "config": self.cfg,
            "cell": cell,
            "params": params,
            "solver_settings": self.cfg.numerics.solver(),
            "transport_settings": self.cfg.numerics.transport(),
            "temperatures": self.cfg.temperatures(),
            "wall_time_s": started.elapsed().as_secs_f64(),
            "result": body,
        });
        let f = fs::File::create(&path).map_err(io_err(&path))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &doc).map_err(|e| RunError::Io { path: path.clone(), source: e.into() })?;
        self.summary.files.push(path);
        Ok(())
    }

    fn finish(mut self) -> Result<RunSummary, RunError> {
        if self.cfg.outputs.wants(Format::Gnuplot) && self.cfg.outputs.wants(Format::Csv) {
            self.summary.files.extend(emit_plots(&self.dir)?);
        }
        Ok(self.summary)
    }
}

fn status<T>(r: &Result<T, PolaronError>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => e.to_string(),
    }
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<RunSummary, RunError> {
    match command {
        Command::Solve => run_solve(cfg),
        Command::Band => run_band(cfg),
        Command::Transport => run_transport(cfg),
        Command::Oracle => run_oracle(cfg),
    }
}

fn solutions(cfg: &RunConfig, p: &ModelParams) -> Vec<Result<Solution, PolaronError>> {
    let temps = cfg.temperatures();
    solve_continuation(p, &temps, &cfg.numerics.solver())
}

fn run_solve(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    let mut out = Output::new(cfg, Command::Solve)?;
    for cell in cfg.cells() {
        let started = Instant::now();
        let p = cfg.params(&cell);
        let label = cell.label();
        let sols = solutions(cfg, &p);
        let mut rows = Vec::new();
        let mut reports = Vec::new();
        for (t, r) in cfg.temperatures().into_iter().zip(&sols) {
            out.summary.points += 1;
            match r {
                Ok(s) => {
                    let lo = s.theta.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = s.theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    rows.push(vec![
                        num(t),
                        s.report.iterations.to_string(),
                        num(s.report.final_residual),
                        s.report.converged.to_string(),
                        num(lo),
                        num(hi),
                        "ok".into(),
                    ]);
                    reports.push(json!({ "temperature": t, "report": s.report, "symmetry_error": s.a.symmetry_error() }));
                    if cfg.outputs.surfaces {
                        write_surfaces(&mut out, &label, t, s)?;
                    }
                }
                Err(e) => {
                    out.summary.failures += 1;
                    let nan = num(f64::NAN);
                    rows.push(vec![num(t), String::new(), nan.clone(), "false".into(), nan.clone(), nan, status(r)]);
                    reports.push(json!({ "temperature": t, "error": e.to_string() }));
                }
            }
        }
        let name = format!("solve_{label}.csv");
        out.csv(&name, &["T", "iterations", "residual", "converged", "theta_min", "theta_max", "status"], &rows)?;
        out.sidecar(&format!("solve_{label}.json"), Some(&cell), json!({ "csv": name, "points": reports }), started)?;
    }
    out.finish()
}

fn write_surfaces(out: &mut Output, label: &str, t: f64, s: &Solution) -> Result<(), RunError> {
    if !out.cfg.outputs.wants(Format::Csv) {
        return Ok(());
    }
    let p = s.params;
    let grid = p.grid();
    let fields = extract_scaling(&s.a, &p);
    let (xi, eta) = (fields.xi().ok(), fields.eta().ok());
    let mut rows = Vec::new();
    for &k in &grid.ordered() {
        for &q in &grid.ordered() {
            rows.push(vec![
                num(grid.k(k)),
                num(grid.k(q)),
                num(xi.map_or(f64::NAN, |x| x[[k, q]])),
                num(eta.map_or(f64::NAN, |x| x[[k, q]])),
            ]);
        }
    }
    out.csv(&format!("surface_{label}_T{t}.csv"), &["k", "q", "xi", "eta"], &rows)?;
    let path = out.dir.join(format!("field_{label}_T{t}.csv"));
    let f = fs::File::create(&path).map_err(io_err(&path))?;
    write_field_table(BufWriter::new(f), &p, &s.a, &s.report).map_err(io_err(&path))?;
    out.summary.files.push(path);
    Ok(())
}

fn run_band(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    let mut out = Output::new(cfg, Command::Band)?;
    for cell in cfg.cells() {
        let started = Instant::now();
        let p = cfg.params(&cell);
        let label = cell.label();
        let grid = p.grid();
        let (mut rows, mut structure, mut meta) = (Vec::new(), Vec::new(), Vec::new());
        for (t, r) in cfg.temperatures().into_iter().zip(solutions(cfg, &p)) {
            out.summary.points += 1;
            let b = r.and_then(|s| Ok((band(&s.params, &s.a, &s.theta)?, s.report)));
            match &b {
                Ok((b, report)) => {
                    rows.push(vec![num(t), num(b.bandwidth), num(b.min_energy()), num(report.final_residual), "ok".into()]);
                    for &m in &grid.ordered() {
                        structure.push(vec![num(t), num(grid.k(m)), num(b.energies[m]), num(b.velocities[m])]);
                    }
                    meta.push(json!({ "temperature": t, "report": report }));
                }
                Err(e) => {
                    out.summary.failures += 1;
                    let nan = num(f64::NAN);
                    rows.push(vec![num(t), nan.clone(), nan.clone(), nan, status(&b)]);
                    meta.push(json!({ "temperature": t, "error": e.to_string() }));
                }
            }
        }
        let name = format!("band_{label}.csv");
        out.csv(&name, &["T", "bandwidth", "min_energy", "solver_residual", "status"], &rows)?;
        let bands = format!("bands_{label}.csv");
        out.csv(&bands, &["T", "k", "energy", "velocity"], &structure)?;
        out.sidecar(&format!("band_{label}.json"), Some(&cell), json!({ "csv": [name, bands], "points": meta }), started)?;
    }
    out.finish()
}

/// Column order of the transport dataset.
pub const TRANSPORT_HEADER: [&str; 9] =
    ["T", "D_total", "D_band", "D_hop", "mobility", "min_Gamma", "bandwidth", "solver_residual", "status"];

fn run_transport(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    let mut out = Output::new(cfg, Command::Transport)?;
    let settings = cfg.numerics.transport();
    for cell in cfg.cells() {
        let started = Instant::now();
        let p = cfg.params(&cell);
        let label = cell.label();
        let records = sweep(&p, &cfg.temperatures(), &settings);
        let mut rows = Vec::new();
        for r in &records {
            out.summary.points += 1;
            match &r.point {
                Some(pt) => rows.push(vec![
                    num(pt.temperature),
                    num(pt.d_total),
                    num(pt.d_band),
                    num(pt.d_hop),
                    num(pt.mobility),
                    num(pt.min_gamma),
                    num(pt.bandwidth),
                    num(pt.solver_residual),
                    "ok".into(),
                ]),
                None => {
                    out.summary.failures += 1;
                    let mut row = vec![num(r.temperature)];
                    row.extend(std::iter::repeat_n(num(f64::NAN), 7));
                    row.push(r.status().to_string());
                    rows.push(row);
                }
            }
        }
        let name = format!("transport_{label}.csv");
        out.csv(&name, &TRANSPORT_HEADER, &rows)?;
        if cfg.outputs.trace {
            write_traces(&mut out, cfg, &p, &label, &records)?;
        }
        out.sidecar(&format!("transport_{label}.json"), Some(&cell), json!({ "csv": name, "points": records }), started)?;
    }
    out.finish()
}

/// ⟨V_{01} V_{10}(t)⟩ on the quadrature grid of each converged point.
fn write_traces(
    out: &mut Output,
    cfg: &RunConfig,
    p: &ModelParams,
    label: &str,
    records: &[polaron_core::SweepRecord],
) -> Result<(), RunError> {
    let sols = solutions(cfg, p);
    for (r, s) in records.iter().zip(sols) {
        let (Some(pt), Ok(s)) = (&r.point, s) else { continue };
        let ctx = CorrelationContext::from_solution(&s)?;
        let engine = CorrelationEngine::new(ctx, vec![[0, 1, 1, 0]], cfg.numerics.transport().engine)?;
        let q = pt.quadrature;
        let rows: Vec<Vec<String>> = (0..=q.intervals)
            .map(|j| {
                let t = j as f64 * q.dt;
                let v = engine.vv(0, t);
                vec![num(t), num(v.re), num(v.im)]
            })
            .collect();
        out.csv(&format!("trace_{label}_T{}.csv", r.temperature), &["t", "re", "im"], &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleMeta {
    n_max: usize,
    cutoff_tol: f64,
    times: [f64; 3],
}

/// Cutoff-convergence tolerance of the oracle.
pub const ORACLE_CUTOFF_TOL: f64 = 1e-8;

fn run_oracle(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    let mut out = Output::new(cfg, Command::Oracle)?;
    let times = [0.0, 0.5, 1.0];
    let mut seen = Vec::new();
    for cell in cfg.cells() {
        // the oracle always runs on the two-site lattice with a uniform field
        let key = (cell.g2.to_bits(), cell.phi2.to_bits());
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let started = Instant::now();
        let cell = Cell { n_sites: 2, ..cell };
        let p = ModelParams { delta: 0.0, ..cfg.params(&cell) };
        let a = AMatrix::constant(2, Complex64::new(p.g, 0.0));
        let label = format!("n2_g2-{}_phi2-{}", cell.g2, cell.phi2);
        out.summary.points += 1;
        let meta = OracleMeta { n_max: cfg.numerics.oracle_n_max, cutoff_tol: ORACLE_CUTOFF_TOL, times };
        let report = field_report(&p, &a, meta.n_max, &cfg.temperatures(), &times, &OracleQuantity::all(2), meta.cutoff_tol);
        match report {
            Ok(rep) => {
                let rows: Vec<Vec<String>> = rep
                    .rows
                    .iter()
                    .map(|r| {
                        let (kind, idx) = match r.quantity {
                            OracleQuantity::TwoTheta(i) => ("two", format!("{i:?}")),
                            OracleQuantity::FourTheta(k, q) => ("four", format!("{k:?}{q:?}")),
                        };
                        vec![
                            kind.into(),
                            idx,
                            num(r.temperature),
                            num(r.t),
                            num(r.analytic[0]),
                            num(r.analytic[1]),
                            num(r.exact[0]),
                            num(r.exact[1]),
                            num(r.abs_error),
                        ]
                    })
                    .collect();
                let name = format!("oracle_{label}.csv");
                out.csv(
                    &name,
                    &["quantity", "indices", "T", "t", "analytic_re", "analytic_im", "exact_re", "exact_im", "abs_error"],
                    &rows,
                )?;
                let body = json!({
                    "csv": name,
                    "oracle": meta,
                    "max_two_theta_error": rep.max_two_theta_error,
                    "max_four_theta_error": rep.max_four_theta_error,
                });
                out.sidecar(&format!("oracle_{label}.json"), Some(&cell), body, started)?;
            }
            Err(e) => {
                eprintln!("oracle {label}: {e}");
                out.summary.failures += 1;
                out.sidecar(&format!("oracle_{label}.json"), Some(&cell), json!({ "oracle": meta, "error": e.to_string() }), started)?;
            }
        }
    }
    out.finish()
}

