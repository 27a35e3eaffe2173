//! Run configuration: an optional TOML file, then command-line overrides.
//!
//! ```toml
//! [params]
//! n = 5
//! omega0 = 10.0
//! coupling = 1.0
//! mass = 0.5
//!
//! [grids.lambda]
//! min = 0.1
//! max = 100.0
//! count = 200
//! log = true
//!
//! [numerics]
//! tol = 1e-13
//! seed = 1
//!
//! [output]
//! format = "csv"   # or "json"
//! plot = "out.svg"
//! dir = "results"
//! ```

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamBlock,
    pub grids: GridBlock,
    pub numerics: NumericBlock,
    pub disorder: DisorderBlock,
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ParamBlock {
    pub n: usize,
    pub omega0: f64,
    pub coupling: f64,
    pub mass: f64,
}

impl Default for ParamBlock {
    fn default() -> Self {
        Self { n: 5, omega0: 10.0, coupling: 1.0, mass: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub log: bool,
}

impl Range {
    pub fn points(&self) -> Vec<f64> {
        if self.log {
            qcavity::num::log_grid(self.min, self.max, self.count)
        } else {
            qcavity::num::lin_grid(self.min, self.max, self.count)
        }
    }

    fn validate(&self, name: &str) -> Result<(), CliError> {
        if self.count == 0 {
            return Err(CliError::Config(format!("grid {name} is empty")));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(CliError::Config(format!("grid {name} has invalid bounds [{}, {}]", self.min, self.max)));
        }
        if self.log && self.min <= 0.0 {
            return Err(CliError::Config(format!("log grid {name} needs a positive minimum")));
        }
        Ok(())
    }
}

/// A grid table in the file; missing keys keep that grid's defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RangePatch {
    min: Option<f64>,
    max: Option<f64>,
    count: Option<usize>,
    log: Option<bool>,
}

impl RangePatch {
    fn apply(self, r: &mut Range) {
        set(&mut r.min, self.min);
        set(&mut r.max, self.max);
        set(&mut r.count, self.count);
        set(&mut r.log, self.log);
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridPatch {
    lambda: Option<RangePatch>,
    nu: Option<RangePatch>,
    omega: Option<RangePatch>,
    tau: Option<RangePatch>,
}

impl From<GridPatch> for GridBlock {
    fn from(p: GridPatch) -> Self {
        let mut g = GridBlock::default();
        for (patch, range) in [(p.lambda, &mut g.lambda), (p.nu, &mut g.nu), (p.omega, &mut g.omega), (p.tau, &mut g.tau)] {
            if let Some(patch) = patch {
                patch.apply(range);
            }
        }
        g
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, from = "GridPatch")]
pub struct GridBlock {
    pub lambda: Range,
    pub nu: Range,
    pub omega: Range,
    pub tau: Range,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self {
            lambda: Range { min: 0.1, max: 100.0, count: 200, log: true },
            nu: Range { min: 0.0, max: 20.0, count: 401, log: false },
            omega: Range { min: 0.0, max: 20.0, count: 401, log: false },
            tau: Range { min: 0.0, max: 5.0, count: 1001, log: false },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NumericBlock {
    pub tol: f64,
    pub max_iter: usize,
    /// Gauss-Chebyshev order for the branch-cut route.
    pub quad_order: Option<usize>,
    /// Fine step of the Bessel route.
    pub fine_step: Option<f64>,
    /// Finite-time step; defaults to 1/(20·λ₊₊).
    pub dt: Option<f64>,
    pub t_final: f64,
    pub beta: f64,
    /// Single Laplace point for `tree`, `population` and `orbit`.
    pub lambda: f64,
    pub depth: usize,
    /// Tree branching for the oracle kernel; defaults to n − 1.
    pub branching: Option<usize>,
    pub pool_size: usize,
    pub sweeps: usize,
    pub rel_sigma: f64,
    pub seed: u64,
    pub x0: f64,
    pub steps: usize,
}

impl Default for NumericBlock {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 100_000,
            quad_order: None,
            fine_step: None,
            dt: None,
            t_final: 1.0,
            beta: 1.0,
            lambda: 1.0,
            depth: 6,
            branching: None,
            pool_size: 10_000,
            sweeps: 50,
            rel_sigma: 0.01,
            seed: 1,
            x0: 0.0,
            steps: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DisorderBlock {
    /// "constant", "uniform" or "two-point".
    pub coupling: String,
    pub coupling_low: f64,
    pub coupling_high: f64,
    pub coupling_p_low: f64,
    /// "fixed" or "two-point".
    pub degree: String,
    pub degree_low: usize,
    pub degree_high: usize,
    pub degree_p_low: f64,
    /// "generational" or "overwrite".
    pub scheme: String,
}

impl Default for DisorderBlock {
    fn default() -> Self {
        Self {
            coupling: "constant".into(),
            coupling_low: 0.0,
            coupling_high: 0.0,
            coupling_p_low: 0.5,
            degree: "fixed".into(),
            degree_low: 2,
            degree_high: 3,
            degree_p_low: 0.5,
            scheme: "generational".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub format: Format,
    pub plot: Option<PathBuf>,
    /// Write `<command>.<ext>` here instead of standard output.
    pub dir: Option<PathBuf>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { format: Format::Csv, plot: None, dir: None }
    }
}

/// Flags mirroring the configuration keys; any flag given wins over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Node degree n.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Bare frequency ω₀.
    #[arg(long, global = true)]
    pub omega0: Option<f64>,
    /// Edge coupling C.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub coupling: Option<f64>,
    /// Oscillator mass m.
    #[arg(long, global = true)]
    pub mass: Option<f64>,

    /// Laplace grid lower end.
    #[arg(long, global = true)]
    pub lambda_min: Option<f64>,
    /// Laplace grid upper end.
    #[arg(long, global = true)]
    pub lambda_max: Option<f64>,
    /// Laplace grid points.
    #[arg(long, global = true)]
    pub lambda_count: Option<usize>,
    /// Log-spaced Laplace grid.
    #[arg(long, global = true)]
    pub lambda_log: Option<bool>,
    /// Fourier grid lower end.
    #[arg(long, global = true)]
    pub nu_min: Option<f64>,
    /// Fourier grid upper end.
    #[arg(long, global = true)]
    pub nu_max: Option<f64>,
    /// Fourier grid points.
    #[arg(long, global = true)]
    pub nu_count: Option<usize>,
    /// Spectral grid lower end.
    #[arg(long, global = true)]
    pub omega_min: Option<f64>,
    /// Spectral grid upper end.
    #[arg(long, global = true)]
    pub omega_max: Option<f64>,
    /// Spectral grid points.
    #[arg(long, global = true)]
    pub omega_count: Option<usize>,
    /// Time grid end (starts at 0).
    #[arg(long, global = true)]
    pub tau_max: Option<f64>,
    /// Time grid points.
    #[arg(long, global = true)]
    pub tau_count: Option<usize>,

    /// Fixed-point iteration tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Iteration cap.
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Gauss-Chebyshev order for the branch-cut route.
    #[arg(long, global = true)]
    pub quad_order: Option<usize>,
    /// Inner step of the Bessel route.
    #[arg(long, global = true)]
    pub fine_step: Option<f64>,
    /// Finite-time step (default 1/(20 λ₊₊)).
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Finite-time horizon.
    #[arg(long, global = true)]
    pub t_final: Option<f64>,
    /// Inverse temperature of the initial state (inf for the ground state).
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Laplace variable for tree, population and orbit.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Tree depth.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Tree branching (default n−1).
    #[arg(long, global = true)]
    pub branching: Option<usize>,
    /// Population size.
    #[arg(long, global = true)]
    pub pool_size: Option<usize>,
    /// Population sweeps.
    #[arg(long, global = true)]
    pub sweeps: Option<usize>,
    /// Relative spread of the initial population.
    #[arg(long, global = true)]
    pub rel_sigma: Option<f64>,
    /// Random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Orbit start.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    /// Orbit length.
    #[arg(long, global = true)]
    pub steps: Option<usize>,

    /// Output format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Also draw the main columns as an SVG polyline plot.
    #[arg(long, global = true)]
    pub plot: Option<PathBuf>,
    /// Write `<command>.<ext>` here instead of stdout.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        set(&mut c.params.n, o.n);
        set(&mut c.params.omega0, o.omega0);
        set(&mut c.params.coupling, o.coupling);
        set(&mut c.params.mass, o.mass);
        let g = &mut c.grids;
        set(&mut g.lambda.min, o.lambda_min);
        set(&mut g.lambda.max, o.lambda_max);
        set(&mut g.lambda.count, o.lambda_count);
        set(&mut g.lambda.log, o.lambda_log);
        set(&mut g.nu.min, o.nu_min);
        set(&mut g.nu.max, o.nu_max);
        set(&mut g.nu.count, o.nu_count);
        set(&mut g.omega.min, o.omega_min);
        set(&mut g.omega.max, o.omega_max);
        set(&mut g.omega.count, o.omega_count);
        set(&mut g.tau.max, o.tau_max);
        set(&mut g.tau.count, o.tau_count);
        let nm = &mut c.numerics;
        set(&mut nm.tol, o.tol);
        set(&mut nm.max_iter, o.max_iter);
        if o.quad_order.is_some() {
            nm.quad_order = o.quad_order;
        }
        if o.fine_step.is_some() {
            nm.fine_step = o.fine_step;
        }
        if o.dt.is_some() {
            nm.dt = o.dt;
        }
        if o.branching.is_some() {
            nm.branching = o.branching;
        }
        set(&mut nm.t_final, o.t_final);
        set(&mut nm.beta, o.beta);
        set(&mut nm.lambda, o.lambda);
        set(&mut nm.depth, o.depth);
        set(&mut nm.pool_size, o.pool_size);
        set(&mut nm.sweeps, o.sweeps);
        set(&mut nm.rel_sigma, o.rel_sigma);
        set(&mut nm.seed, o.seed);
        set(&mut nm.x0, o.x0);
        set(&mut nm.steps, o.steps);
        set(&mut c.output.format, o.format);
        if o.plot.is_some() {
            c.output.plot = o.plot.clone();
        }
        if o.out_dir.is_some() {
            c.output.dir = o.out_dir.clone();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.grids.lambda.validate("lambda")?;
        self.grids.nu.validate("nu")?;
        self.grids.omega.validate("omega")?;
        self.grids.tau.validate("tau")?;
        if self.grids.tau.min != 0.0 {
            return Err(CliError::Config("tau grid must start at 0".into()));
        }
        if self.grids.tau.count < 2 {
            return Err(CliError::Config("tau grid needs at least two points".into()));
        }
        let nm = &self.numerics;
        if nm.tol.is_nan() || nm.tol <= 0.0 {
            return Err(CliError::Config(format!("tolerance must be positive, got {}", nm.tol)));
        }
        if nm.max_iter == 0 || nm.steps == 0 {
            return Err(CliError::Config("iteration counts must be positive".into()));
        }
        if nm.t_final.is_nan() || nm.t_final <= 0.0 {
            return Err(CliError::Config(format!("t_final must be positive, got {}", nm.t_final)));
        }
        if let Some(dt) = nm.dt {
            if dt.is_nan() || dt <= 0.0 {
                return Err(CliError::Config(format!("dt must be positive, got {dt}")));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<qcavity::ModelParams, CliError> {
        let p = &self.params;
        Ok(qcavity::ModelParams::new(p.n, p.omega0, p.coupling, p.mass)?)
    }

    /// Compact `key:value` list for the metadata line.
    pub fn params_tag(&self) -> String {
        let p = &self.params;
        format!("n:{},omega0:{},coupling:{},mass:{}", p.n, p.omega0, p.coupling, p.mass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[params]\nn = 3\ncoupling = 0.5\n[numerics]\nseed = 9\n").unwrap();
        let o = Overrides { config: Some(path), coupling: Some(0.7), ..Default::default() };
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!(c.params.n, 3);
        assert_eq!(c.params.coupling, 0.7);
        assert_eq!(c.numerics.seed, 9);
        assert_eq!(c.params.omega0, 10.0);
    }

    #[test]
    fn rejects_bad_values() {
        let o = Overrides { tol: Some(0.0), ..Default::default() };
        assert!(matches!(RunConfig::resolve(&o), Err(CliError::Config(_))));
        let o = Overrides { lambda_count: Some(0), ..Default::default() };
        assert!(RunConfig::resolve(&o).is_err());
        assert!(toml::from_str::<RunConfig>("[params]\nbogus = 1\n").is_err());
    }
}
