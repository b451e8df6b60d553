//! Plain-text run configuration: `key = value` lines under `[model]`,
//! `[sweep]`, `[numerics]` and `[outputs]` headers, with an optional
//! top-level `preset`.

use std::fmt::Write as _;
use std::path::PathBuf;

use polaron_core::{BandConvention, HopSum, ModelParams, RateNorm, SolverSettings, TransportSettings};
use serde::Serialize;
use thiserror::Error;

use crate::presets::Preset;

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, message: message.into() })
}

/// Model parameters; list-valued keys span a grid of cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSection {
    pub n_sites: Vec<usize>,
    pub transfer: f64,
    pub g2: Vec<f64>,
    pub phi2: Vec<f64>,
    pub omega: f64,
    pub delta: Vec<f64>,
    pub epsilon: f64,
    pub band_convention: BandConvention,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            n_sites: vec![6],
            transfer: 0.1,
            g2: vec![0.1],
            phi2: vec![0.0],
            omega: 1.0,
            delta: vec![0.1],
            epsilon: 0.0,
            band_convention: BandConvention::TwoJCos,
        }
    }
}

/// Temperatures, either listed or evenly spaced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Sweep {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep::Range { start: 0.2, stop: 4.0, count: 15 }
    }
}

impl Sweep {
    pub fn temperatures(&self) -> Vec<f64> {
        match *self {
            Sweep::List(ref t) => t.clone(),
            Sweep::Range { start, count: 1, .. } => vec![start],
            Sweep::Range { start, stop, count } => {
                (0..count).map(|i| start + (stop - start) * i as f64 / (count - 1) as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Numerics {
    pub tol: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub dt: f64,
    pub t_max_factor: f64,
    pub hop_sum: HopSum,
    pub rate_norm: RateNorm,
    /// Truncation tolerance of the correlator expansion.
    pub engine_tol: f64,
    pub max_nodes: usize,
    pub oracle_n_max: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        let s = SolverSettings::default();
        let t = TransportSettings::default();
        Self {
            tol: s.tol,
            max_iters: s.max_iters,
            damping: s.damping,
            dt: t.dt,
            t_max_factor: t.t_max_factor,
            hop_sum: t.hop_sum,
            rate_norm: t.rate_norm,
            engine_tol: t.engine.tol,
            max_nodes: t.engine.max_nodes,
            oracle_n_max: 8,
        }
    }
}

impl Numerics {
    pub fn solver(&self) -> SolverSettings {
        SolverSettings { tol: self.tol, max_iters: self.max_iters, damping: self.damping, ..Default::default() }
    }

    pub fn transport(&self) -> TransportSettings {
        let d = TransportSettings::default();
        TransportSettings {
            dt: self.dt,
            t_max_factor: self.t_max_factor,
            hop_sum: self.hop_sum,
            rate_norm: self.rate_norm,
            engine: polaron_core::EngineSettings { tol: self.engine_tol, max_nodes: self.max_nodes, ..d.engine },
            solver: self.solver(),
            ..d
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Format {
    Csv,
    Json,
    Gnuplot,
}

impl Format {
    fn as_str(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Gnuplot => "gnuplot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outputs {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    /// Write ξ/η surfaces and A tables from `solve`.
    pub surfaces: bool,
    /// Write a ⟨V V(t)⟩ trace per transport point.
    pub trace: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json], surfaces: false, trace: false }
    }
}

impl Outputs {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub model: ModelSection,
    pub sweep: Sweep,
    pub numerics: Numerics,
    pub outputs: Outputs,
}

/// One point of the model grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub n_sites: usize,
    pub g2: f64,
    pub phi2: f64,
    pub delta: f64,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("n{}_g2-{}_phi2-{}_delta-{}", self.n_sites, self.g2, self.phi2, self.delta)
    }
}

impl RunConfig {
    pub fn cells(&self) -> Vec<Cell> {
        let m = &self.model;
        let mut out = Vec::new();
        for &g2 in &m.g2 {
            for &phi2 in &m.phi2 {
                for &n_sites in &m.n_sites {
                    for &delta in &m.delta {
                        out.push(Cell { n_sites, g2, phi2, delta });
                    }
                }
            }
        }
        out
    }

    pub fn params(&self, cell: &Cell) -> ModelParams {
        let m = &self.model;
        ModelParams {
            n_sites: cell.n_sites,
            transfer: m.transfer,
            omega: m.omega,
            delta: cell.delta,
            epsilon: m.epsilon,
            band_convention: m.band_convention,
            ..Default::default()
        }
        .with_squared_couplings(cell.g2, cell.phi2)
    }

    pub fn temperatures(&self) -> Vec<f64> {
        self.sweep.temperatures()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Top,
    Model,
    Sweep,
    Numerics,
    Outputs,
}

fn list<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    let items: Result<Vec<T>, _> = v.split(',').map(|s| s.trim().parse::<T>()).collect();
    match items {
        Ok(x) if !x.is_empty() => Ok(x),
        _ => err(line, format!("`{key}` expects a comma-separated list of numbers, got `{v}`")),
    }
}

fn one<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().or_else(|_| err(line, format!("`{key}` has an invalid value `{v}`")))
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => err(line, format!("`{key}` expects true or false, got `{v}`")),
    }
}

fn check(line: usize, ok: bool, msg: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        err(line, msg)
    }
}

/// Strips comments and splits the text into (line number, content) pairs.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let s = raw.split('#').next().unwrap_or("").trim();
        (!s.is_empty()).then_some((i + 1, s))
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_over(text, RunConfig::default())
}

/// Applies `text` on top of `base`. A `preset` line in the text replaces `base`.
pub fn parse_config_over(text: &str, base: RunConfig) -> Result<RunConfig, ConfigError> {
    let mut cfg = base;
    for (no, s) in lines(text) {
        if s.starts_with('[') {
            break;
        }
        if let Some((k, v)) = s.split_once('=') {
            if k.trim() == "preset" {
                let name = v.trim();
                let Some(p) = Preset::parse(name) else {
                    return err(no, format!("unknown preset `{name}`"));
                };
                cfg = p.config();
            }
        }
    }
    let mut section = Section::Top;
    let mut range: (Option<f64>, Option<f64>, Option<usize>) = (None, None, None);
    let mut range_line = 0;
    for (no, s) in lines(text) {
        if let Some(rest) = s.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return err(no, format!("malformed section header `{s}`"));
            };
            section = match name.trim() {
                "model" => Section::Model,
                "sweep" => Section::Sweep,
                "numerics" => Section::Numerics,
                "outputs" => Section::Outputs,
                other => return err(no, format!("unknown section `[{other}]`")),
            };
            continue;
        }
        let Some((key, value)) = s.split_once('=') else {
            return err(no, format!("expected `key = value`, got `{s}`"));
        };
        let (key, v) = (key.trim(), value.trim());
        match (section, key) {
            (Section::Top, "preset") => {}
            (Section::Model, "n_sites") => {
                let n: Vec<usize> = list(no, key, v)?;
                check(no, n.iter().all(|&x| (2..=255).contains(&x)), "`n_sites` must lie in 2..=255")?;
                cfg.model.n_sites = n;
            }
            (Section::Model, "transfer" | "J") => {
                let x: f64 = one(no, key, v)?;
                check(no, x.is_finite(), "`transfer` must be finite")?;
                cfg.model.transfer = x;
            }
            (Section::Model, "g2") => {
                let x: Vec<f64> = list(no, key, v)?;
                check(no, x.iter().all(|&g| g >= 0.0 && g.is_finite()), "`g2` must be non-negative")?;
                cfg.model.g2 = x;
            }
            (Section::Model, "phi2") => {
                let x: Vec<f64> = list(no, key, v)?;
                check(no, x.iter().all(|&g| g >= 0.0 && g.is_finite()), "`phi2` must be non-negative")?;
                cfg.model.phi2 = x;
            }
            (Section::Model, "omega") => {
                let x: f64 = one(no, key, v)?;
                check(no, x > 0.0 && x.is_finite(), "`omega` must be positive")?;
                cfg.model.omega = x;
            }
            (Section::Model, "delta") => {
                let x: Vec<f64> = list(no, key, v)?;
                check(no, x.iter().all(|&d| d >= 0.0 && d.is_finite()), "`delta` must be non-negative")?;
                cfg.model.delta = x;
            }
            (Section::Model, "epsilon") => {
                let x: f64 = one(no, key, v)?;
                check(no, x.is_finite(), "`epsilon` must be finite")?;
                cfg.model.epsilon = x;
            }
            (Section::Model, "band_convention") => {
                let Some(b) = BandConvention::parse(v) else {
                    return err(no, format!("`band_convention` must be two-j-cos or j-cos, got `{v}`"));
                };
                cfg.model.band_convention = b;
            }
            (Section::Sweep, "temperatures") => {
                let t: Vec<f64> = list(no, key, v)?;
                check(no, t.iter().all(|&x| x >= 0.0 && x.is_finite()), "temperatures must be non-negative")?;
                check(no, t.windows(2).all(|w| w[1] > w[0]), "temperatures must be strictly ascending")?;
                cfg.sweep = Sweep::List(t);
                range = (None, None, None);
            }
            (Section::Sweep, "start") => {
                range.0 = Some(one(no, key, v)?);
                range_line = no;
            }
            (Section::Sweep, "stop") => {
                range.1 = Some(one(no, key, v)?);
                range_line = no;
            }
            (Section::Sweep, "count") => {
                range.2 = Some(one(no, key, v)?);
                range_line = no;
            }
            (Section::Numerics, "tol") => {
                cfg.numerics.tol = one(no, key, v)?;
                check(no, cfg.numerics.tol > 0.0, "`tol` must be positive")?;
            }
            (Section::Numerics, "max_iters") => {
                cfg.numerics.max_iters = one(no, key, v)?;
                check(no, cfg.numerics.max_iters > 0, "`max_iters` must be positive")?;
            }
            (Section::Numerics, "damping") => {
                cfg.numerics.damping = one(no, key, v)?;
                check(no, cfg.numerics.damping > 0.0 && cfg.numerics.damping <= 1.0, "`damping` must lie in (0, 1]")?;
            }
            (Section::Numerics, "dt") => {
                cfg.numerics.dt = one(no, key, v)?;
                check(no, cfg.numerics.dt > 0.0, "`dt` must be positive")?;
            }
            (Section::Numerics, "t_max_factor") => {
                cfg.numerics.t_max_factor = one(no, key, v)?;
                check(no, cfg.numerics.t_max_factor > 0.0, "`t_max_factor` must be positive")?;
            }
            (Section::Numerics, "hop_sum") => {
                let Some(h) = HopSum::parse(v) else {
                    return err(no, format!("`hop_sum` must be over-k-prime or over-k, got `{v}`"));
                };
                cfg.numerics.hop_sum = h;
            }
            (Section::Numerics, "rate_norm") => {
                let Some(r) = RateNorm::parse(v) else {
                    return err(no, format!("`rate_norm` must be total or per-site, got `{v}`"));
                };
                cfg.numerics.rate_norm = r;
            }
            (Section::Numerics, "engine_tol") => {
                cfg.numerics.engine_tol = one(no, key, v)?;
                check(no, cfg.numerics.engine_tol > 0.0, "`engine_tol` must be positive")?;
            }
            (Section::Numerics, "max_nodes") => {
                cfg.numerics.max_nodes = one(no, key, v)?;
                check(no, cfg.numerics.max_nodes >= 16, "`max_nodes` must be at least 16")?;
            }
            (Section::Numerics, "oracle_n_max") => {
                cfg.numerics.oracle_n_max = one(no, key, v)?;
                check(no, cfg.numerics.oracle_n_max >= 1, "`oracle_n_max` must be positive")?;
            }
            (Section::Outputs, "directory") => cfg.outputs.directory = PathBuf::from(v),
            (Section::Outputs, "formats") => {
                let mut f = Vec::new();
                for item in v.split(',').map(str::trim) {
                    f.push(match item {
                        "csv" => Format::Csv,
                        "json" => Format::Json,
                        "gnuplot" => Format::Gnuplot,
                        _ => return err(no, format!("unknown output format `{item}`")),
                    });
                }
                cfg.outputs.formats = f;
            }
            (Section::Outputs, "surfaces") => cfg.outputs.surfaces = boolean(no, key, v)?,
            (Section::Outputs, "trace") => cfg.outputs.trace = boolean(no, key, v)?,
            (Section::Top, _) => return err(no, format!("`{key}` must appear under a section header")),
            _ => return err(no, format!("unknown key `{key}`")),
        }
    }
    if range != (None, None, None) {
        let Sweep::Range { start, stop, count } = Sweep::default() else { unreachable!() };
        let (start, stop, count) = (range.0.unwrap_or(start), range.1.unwrap_or(stop), range.2.unwrap_or(count));
        check(range_line, start >= 0.0 && stop >= start && count >= 1, "sweep range needs 0 ≤ start ≤ stop and count ≥ 1")?;
        cfg.sweep = Sweep::Range { start, stop, count };
    }
    Ok(cfg)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Writes `cfg` back in the text format; `parse_config` inverts it.
pub fn emit_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    if let Some(p) = cfg.preset {
        let _ = writeln!(s, "preset = {}\n", p.as_str());
    }
    let m = &cfg.model;
    let _ = writeln!(s, "[model]");
    let _ = writeln!(s, "n_sites = {}", join(&m.n_sites));
    let _ = writeln!(s, "transfer = {}", m.transfer);
    let _ = writeln!(s, "g2 = {}", join(&m.g2));
    let _ = writeln!(s, "phi2 = {}", join(&m.phi2));
    let _ = writeln!(s, "omega = {}", m.omega);
    let _ = writeln!(s, "delta = {}", join(&m.delta));
    let _ = writeln!(s, "epsilon = {}", m.epsilon);
    let _ = writeln!(s, "band_convention = {}", m.band_convention.as_str());
    let _ = writeln!(s, "\n[sweep]");
    match &cfg.sweep {
        Sweep::List(t) => {
            let _ = writeln!(s, "temperatures = {}", join(t));
        }
        Sweep::Range { start, stop, count } => {
            let _ = writeln!(s, "start = {start}\nstop = {stop}\ncount = {count}");
        }
    }
    let n = &cfg.numerics;
    let _ = writeln!(s, "\n[numerics]");
    let _ = writeln!(s, "tol = {:e}", n.tol);
    let _ = writeln!(s, "max_iters = {}", n.max_iters);
    let _ = writeln!(s, "damping = {}", n.damping);
    let _ = writeln!(s, "dt = {}", n.dt);
    let _ = writeln!(s, "t_max_factor = {}", n.t_max_factor);
    let _ = writeln!(s, "hop_sum = {}", n.hop_sum.as_str());
    let _ = writeln!(s, "rate_norm = {}", n.rate_norm.as_str());
    let _ = writeln!(s, "engine_tol = {:e}", n.engine_tol);
    let _ = writeln!(s, "max_nodes = {}", n.max_nodes);
    let _ = writeln!(s, "oracle_n_max = {}", n.oracle_n_max);
    let o = &cfg.outputs;
    let _ = writeln!(s, "\n[outputs]");
    let _ = writeln!(s, "directory = {}", o.directory.display());
    let _ = writeln!(s, "formats = {}", o.formats.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(", "));
    let _ = writeln!(s, "surfaces = {}", o.surfaces);
    let _ = writeln!(s, "trace = {}", o.trace);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let c = parse_config("# header\n\n[model]\ng2 = 0.5 # trailing\n").unwrap();
        assert_eq!(c.model.g2, vec![0.5]);
    }

    #[test]
    fn range_defaults_fill_missing_keys() {
        let c = parse_config("[sweep]\ncount = 3\n").unwrap();
        assert_eq!(c.temperatures(), vec![0.2, 2.1, 4.0]);
    }

    #[test]
    fn single_point_range() {
        let c = parse_config("[sweep]\nstart = 1\nstop = 1\ncount = 1\n").unwrap();
        assert_eq!(c.temperatures(), vec![1.0]);
    }

    #[test]
    fn key_outside_section() {
        assert_eq!(parse_config("g2 = 0.1").unwrap_err().line, 1);
    }

    #[test]
    fn cells_span_the_grid() {
        let c = parse_config("[model]\ng2 = 0.1, 0.5\nphi2 = 0, 0.3, 0.7\nn_sites = 4, 6\n").unwrap();
        assert_eq!(c.cells().len(), 12);
        assert_eq!(c.cells()[0].label(), "n4_g2-0.1_phi2-0_delta-0.1");
    }
}
