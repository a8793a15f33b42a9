//! Experiment driver: manufactured problem, configuration, runs and
//! reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::dgop::LaplaceOperator;
use crate::error::{Error, Result};
use crate::flops::{FlopCounter, FlopSnapshot, Kernel};
use crate::krylov::{solve, KrylovControl, SolverKind};
use crate::mesh::{MeshHierarchy, Point};
use crate::multigrid::{CoarseSolverKind, Multigrid, MultigridConfig};
use crate::smoothers::{ColoringChoice, SchwarzSmoother, SmootherConfig, SmootherKind};

/// Width of the Gaussian bells.
pub const SIGMA: f64 = 1.0 / 3.0;

/// Centers of the Gaussian bells (projected to `z = 0` in 2D).
pub const CENTERS: [Point; 3] = [[0.0, 0.0, 0.0], [0.25, 0.85, 0.85], [0.6, 0.4, 0.4]];

/// `u = (2π)^{-1/2} σ⁻¹ Σ_i exp(−ρ_i/σ²)` with `ρ_i = ‖x − x_i‖²`
/// (`squared`) or `‖x − x_i‖`, together with `∇u` and `f = −Δu`.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedProblem {
    pub dim: usize,
    pub squared: bool,
}

impl ManufacturedProblem {
    pub fn new(dim: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        Ok(Self { dim, squared: true })
    }

    /// Variant with the unsquared distance in the exponent.
    pub fn literal(dim: usize) -> Result<Self> {
        Ok(Self {
            squared: false,
            ..Self::new(dim)?
        })
    }

    fn scale() -> f64 {
        1.0 / ((2.0 * std::f64::consts::PI).sqrt() * SIGMA)
    }

    fn offsets(&self, x: Point) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        CENTERS.iter().map(move |c| {
            let mut d = [0.0; 3];
            for t in 0..self.dim {
                d[t] = x[t] - c[t];
            }
            let r2 = d.iter().map(|v| v * v).sum::<f64>();
            (d, r2)
        })
    }

    pub fn u(&self, x: Point) -> f64 {
        let s2 = SIGMA * SIGMA;
        Self::scale()
            * self
                .offsets(x)
                .map(|(_, r2)| (-if self.squared { r2 } else { r2.sqrt() } / s2).exp())
                .sum::<f64>()
    }

    pub fn grad(&self, x: Point) -> [f64; 3] {
        let s2 = SIGMA * SIGMA;
        let mut g = [0.0; 3];
        for (d, r2) in self.offsets(x) {
            let coef = if self.squared {
                -2.0 * (-r2 / s2).exp() / s2
            } else {
                let r = r2.sqrt();
                if r == 0.0 {
                    0.0
                } else {
                    -(-r / s2).exp() / (s2 * r)
                }
            };
            for t in 0..self.dim {
                g[t] += Self::scale() * coef * d[t];
            }
        }
        g
    }

    /// `f = −Δu`.
    pub fn f(&self, x: Point) -> f64 {
        let s2 = SIGMA * SIGMA;
        let d = self.dim as f64;
        let lap: f64 = self
            .offsets(x)
            .map(|(_, r2)| {
                if self.squared {
                    (-r2 / s2).exp() * (4.0 * r2 / (s2 * s2) - 2.0 * d / s2)
                } else {
                    let r = r2.sqrt();
                    (-r / s2).exp() * (1.0 / (s2 * s2) - (d - 1.0) / (s2 * r))
                }
            })
            .sum();
        -Self::scale() * lap
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshKind {
    Cartesian,
    Distorted { factor: f64, seed: u64 },
}

/// All parameters of one experiment (a range of finest levels).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub degree: usize,
    /// Cells per direction of level 0; `None` picks 2 on Cartesian meshes
    /// and 32 (2D) or 8 (3D) on distorted ones.
    pub coarse: Option<usize>,
    pub levels: (usize, usize),
    pub mesh: MeshKind,
    /// `None` picks 1 on Cartesian and 4 on distorted meshes.
    pub penalty_hat: Option<f64>,
    pub smoother: SmootherKind,
    /// `None` picks the per-family default, see [`default_omega`].
    pub omega: Option<f64>,
    pub pre: usize,
    pub post: usize,
    pub coloring: ColoringChoice,
    /// `None` picks CG for additive and GMRES for multiplicative smoothers
    /// (CG on distorted meshes).
    pub solver: Option<SolverKind>,
    /// `None` reverses post-smoothing for CG with multiplicative smoothers.
    pub symmetrize: Option<bool>,
    pub reduction: f64,
    pub max_iterations: usize,
    pub count_flops: bool,
    pub coarse_solver: Option<CoarseSolverKind>,
    pub share_solvers: bool,
    /// Unsquared distance in the Gaussian exponent.
    pub literal_rhs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            degree: 3,
            coarse: None,
            levels: (2, 4),
            mesh: MeshKind::Cartesian,
            penalty_hat: None,
            smoother: SmootherKind::Acs,
            omega: None,
            pre: 1,
            post: 1,
            coloring: ColoringChoice::Structured,
            solver: None,
            symmetrize: None,
            reduction: 1e-8,
            max_iterations: 200,
            count_flops: false,
            coarse_solver: None,
            share_solvers: true,
            literal_rhs: false,
        }
    }
}

/// Relaxation defaults: ACS 0.7, MCS 1 on Cartesian meshes; ACS 0.5,
/// MCS 0.75 on distorted meshes; AVS `0.9 · 2^{-d}`; MVS 1.
pub fn default_omega(kind: SmootherKind, distorted: bool, dim: usize) -> f64 {
    match (kind, distorted) {
        (SmootherKind::Acs, false) => 0.7,
        (SmootherKind::Acs, true) => 0.5,
        (SmootherKind::Mcs, false) => 1.0,
        (SmootherKind::Mcs, true) => 0.75,
        (SmootherKind::Avs, _) => 0.9 / (1 << dim) as f64,
        (SmootherKind::Mvs, _) => 1.0,
    }
}

fn parse_levels(v: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parse(format!("invalid level range '{v}'"));
    let (a, b) = match v.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (v, v),
    };
    let lo = a.trim().parse().map_err(|_| bad())?;
    let hi = b.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid value '{v}' for '{key}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Parse(format!("invalid boolean '{v}' for '{key}'"))),
    }
}

impl ExperimentConfig {
    pub fn is_distorted(&self) -> bool {
        matches!(self.mesh, MeshKind::Distorted { .. })
    }

    pub fn coarse_cells(&self) -> usize {
        self.coarse
            .unwrap_or(match (self.is_distorted(), self.dim) {
                (false, _) => 2,
                (true, 2) => 32,
                (true, _) => 8,
            })
    }

    pub fn penalty(&self) -> f64 {
        self.penalty_hat
            .unwrap_or(if self.is_distorted() { 4.0 } else { 1.0 })
    }

    pub fn relaxation(&self) -> f64 {
        self.omega
            .unwrap_or_else(|| default_omega(self.smoother, self.is_distorted(), self.dim))
    }

    pub fn krylov(&self) -> SolverKind {
        self.solver
            .unwrap_or(if self.smoother.is_additive() || self.is_distorted() {
                SolverKind::Cg
            } else {
                SolverKind::Gmres
            })
    }

    pub fn symmetric_cycle(&self) -> bool {
        self.symmetrize
            .unwrap_or(self.krylov() == SolverKind::Cg && !self.smoother.is_additive())
    }

    pub fn smoother_config(&self) -> SmootherConfig {
        SmootherConfig {
            kind: self.smoother,
            omega: self.relaxation(),
            pre: self.pre,
            post: self.post,
            coloring: self.coloring,
            symmetrize: self.symmetric_cycle(),
            color_additive: false,
            share_solvers: self.share_solvers,
        }
    }

    /// Sets one option from its flag name (dashes or underscores).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "dim" => self.dim = parse_num(&key, v)?,
            "degree" => self.degree = parse_num(&key, v)?,
            "coarse" => self.coarse = Some(parse_num(&key, v)?),
            "levels" => self.levels = parse_levels(v)?,
            "mesh" => {
                self.mesh = match v.to_ascii_lowercase().as_str() {
                    "cartesian" => MeshKind::Cartesian,
                    "distorted" => match self.mesh {
                        MeshKind::Distorted { .. } => self.mesh,
                        MeshKind::Cartesian => MeshKind::Distorted {
                            factor: 0.25,
                            seed: 1,
                        },
                    },
                    _ => return Err(Error::Parse(format!("unknown mesh '{v}'"))),
                }
            }
            "distortion" => {
                let f = parse_num(&key, v)?;
                self.mesh = match self.mesh {
                    MeshKind::Distorted { seed, .. } => MeshKind::Distorted { factor: f, seed },
                    MeshKind::Cartesian => MeshKind::Distorted { factor: f, seed: 1 },
                };
            }
            "seed" => {
                let s = parse_num(&key, v)?;
                self.mesh = match self.mesh {
                    MeshKind::Distorted { factor, .. } => MeshKind::Distorted { factor, seed: s },
                    MeshKind::Cartesian => MeshKind::Distorted {
                        factor: 0.25,
                        seed: s,
                    },
                };
            }
            "penalty-hat" => self.penalty_hat = Some(parse_num(&key, v)?),
            "smoother" => self.smoother = v.parse()?,
            "omega" => self.omega = Some(parse_num(&key, v)?),
            "pre" => self.pre = parse_num(&key, v)?,
            "post" => self.post = parse_num(&key, v)?,
            "coloring" => self.coloring = v.parse()?,
            "solver" => self.solver = Some(v.parse()?),
            "symmetrize" => self.symmetrize = Some(parse_bool(&key, v)?),
            "tol" => self.reduction = parse_num(&key, v)?,
            "max-it" => self.max_iterations = parse_num(&key, v)?,
            "count-flops" => self.count_flops = parse_bool(&key, v)?,
            "coarse-solver" => self.coarse_solver = Some(v.parse()?),
            "share-solvers" => self.share_solvers = parse_bool(&key, v)?,
            "literal-rhs" => self.literal_rhs = parse_bool(&key, v)?,
            _ => return Err(Error::Parse(format!("unknown option '{key}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", no + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::InvalidArgument(format!(
                "dimension must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.degree == 0 {
            return Err(Error::InvalidArgument("degree must be at least 1".into()));
        }
        if self.coarse_cells() == 0 {
            return Err(Error::InvalidArgument(
                "coarse mesh needs at least one cell".into(),
            ));
        }
        if !(self.reduction > 0.0 && self.reduction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must lie in (0, 1), got {}",
                self.reduction
            )));
        }
        self.smoother_config().validate()?;
        if self.smoother.uses_patches() && self.is_distorted() {
            return Err(Error::InvalidArgument(
                "vertex patch smoothers are only available on Cartesian meshes".into(),
            ));
        }
        if self.smoother.uses_patches() && self.coarse_cells() < 2 {
            return Err(Error::InvalidArgument(
                "vertex patch smoothers need at least 2 coarse cells".into(),
            ));
        }
        if self.krylov() == SolverKind::Cg
            && !self.smoother.is_additive()
            && !self.symmetric_cycle()
        {
            log::warn!("CG with a nonsymmetric multiplicative cycle");
        }
        if self.is_distorted() && self.penalty() < 4.0 {
            log::warn!(
                "penalty factor {} below 4 on a distorted mesh",
                self.penalty()
            );
        }
        Ok(())
    }
}

/// Result of solving on one finest level.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dim: usize,
    pub degree: usize,
    pub level: usize,
    pub dofs: usize,
    pub n_cells: usize,
    pub smoother: String,
    pub omega: f64,
    pub solver: String,
    pub converged: bool,
    pub iterations: usize,
    pub nu_frac: f64,
    pub l2_error: f64,
    pub n_colors: usize,
    pub wall_time: f64,
    /// Operation counts of the solve (setup excluded), by kernel name.
    pub flops: BTreeMap<String, u64>,
    /// Setup work of the fine-level smoother.
    pub setup_flops: u64,
}

impl RunRecord {
    pub fn flops_total(&self) -> u64 {
        self.flops.values().sum()
    }

    pub fn flops_of(&self, kernel: Kernel) -> u64 {
        self.flops.get(kernel.name()).copied().unwrap_or(0)
    }

    /// Solve work per cell in units of `(k+1)^{d+1}`.
    pub fn c_cmplx(&self) -> f64 {
        self.flops_total() as f64
            / (self.n_cells as f64 * ((self.degree + 1) as f64).powi(self.dim as i32 + 1))
    }
}

fn snapshot_map(s: &FlopSnapshot) -> BTreeMap<String, u64> {
    Kernel::ALL
        .iter()
        .map(|&k| (k.name().to_string(), s.get(k)))
        .collect()
}

/// Builds the hierarchy and operators of all levels up to the finest one.
pub fn build_levels(
    cfg: &ExperimentConfig,
    counter: &Arc<FlopCounter>,
) -> Result<(MeshHierarchy, Vec<Arc<LaplaceOperator>>)> {
    let hierarchy = MeshHierarchy::new(cfg.dim, cfg.coarse_cells(), cfg.levels.1)?;
    let hierarchy = match cfg.mesh {
        MeshKind::Cartesian => hierarchy,
        MeshKind::Distorted { factor, seed } => hierarchy.distort(factor, seed)?,
    };
    let ops = hierarchy
        .levels()
        .iter()
        .map(|l| {
            LaplaceOperator::new(l.clone(), cfg.degree, cfg.penalty(), counter.clone())
                .map(Arc::new)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((hierarchy, ops))
}

/// Runs the experiment for every finest level in the configured range.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let counter = Arc::new(FlopCounter::new(cfg.count_flops));
    let (hierarchy, ops) = build_levels(cfg, &counter)?;
    let problem = if cfg.literal_rhs {
        ManufacturedProblem::literal(cfg.dim)?
    } else {
        ManufacturedProblem::new(cfg.dim)?
    };
    let mut mg_cfg = MultigridConfig::new(cfg.smoother_config());
    mg_cfg.coarse = cfg.coarse_solver;
    let control = KrylovControl {
        reduction: cfg.reduction,
        max_iterations: cfg.max_iterations,
        restart: cfg.max_iterations.max(100),
    };
    let mut records = Vec::new();
    for level in cfg.levels.0..=cfg.levels.1 {
        let start = Instant::now();
        let before_setup = counter.snapshot();
        let mg = Multigrid::new(&hierarchy, ops[..=level].to_vec(), &mg_cfg)?;
        let setup_flops = if level > 0 {
            mg.smoother(level).setup_flops()
        } else {
            counter
                .snapshot()
                .since(&before_setup)
                .get(Kernel::SmootherSetup)
        };
        let op = &ops[level];
        let b = op.compute_rhs(&|x| problem.f(x), &|x| problem.u(x))?;
        let mut x = vec![0.0; b.len()];
        let before = counter.snapshot();
        let result = solve(
            cfg.krylov(),
            op.as_ref(),
            &b,
            &mut x,
            &mg,
            control,
            Some(&counter),
        )?;
        let used = counter.snapshot().since(&before);
        let l2_error = op.l2_error(&x, &|p| problem.u(p))?;
        if !result.converged {
            log::warn!(
                "level {level}: no convergence after {} iterations",
                result.iterations
            );
        }
        records.push(RunRecord {
            dim: cfg.dim,
            degree: cfg.degree,
            level,
            dofs: op.n_dofs(),
            n_cells: op.level().n_cells(),
            smoother: cfg.smoother.name().to_string(),
            omega: cfg.relaxation(),
            solver: cfg.krylov().name().to_string(),
            converged: result.converged,
            iterations: result.iterations,
            nu_frac: result.nu_frac,
            l2_error,
            n_colors: if level > 0 {
                mg.smoother(level).colors().n_colors()
            } else {
                0
            },
            wall_time: start.elapsed().as_secs_f64(),
            flops: snapshot_map(&used),
            setup_flops,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Parse(format!("unknown format '{s}'"))),
        }
    }
}

/// Leading CSV columns; further columns follow in [`CSV_EXTRA`].
pub const CSV_COLUMNS: [&str; 10] = [
    "level",
    "dofs",
    "smoother",
    "omega",
    "nu",
    "nu_frac",
    "flops_total",
    "flops_local_solvers",
    "flops_residual",
    "c_cmplx",
];

pub const CSV_EXTRA: [&str; 14] = [
    "dim",
    "degree",
    "n_cells",
    "solver",
    "converged",
    "l2_error",
    "n_colors",
    "wall_time",
    "setup_flops",
    "flops_operator",
    "flops_smoother_setup",
    "flops_transfer",
    "flops_coarse",
    "flops_krylov",
];

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn report(records: &[RunRecord], format: ReportFormat) -> Result<String> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to report".into()));
    }
    Ok(match format {
        ReportFormat::Csv => report_csv(records),
        ReportFormat::Markdown => report_markdown(records),
    })
}

fn report_csv(records: &[RunRecord]) -> String {
    let mut out = String::new();
    let header: Vec<&str> = CSV_COLUMNS
        .iter()
        .chain(CSV_EXTRA.iter())
        .copied()
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in records {
        let fields = [
            r.level.to_string(),
            r.dofs.to_string(),
            r.smoother.clone(),
            sci(r.omega),
            r.iterations.to_string(),
            sci(r.nu_frac),
            r.flops_total().to_string(),
            r.flops_of(Kernel::LocalSolver).to_string(),
            r.flops_of(Kernel::Residual).to_string(),
            sci(r.c_cmplx()),
            r.dim.to_string(),
            r.degree.to_string(),
            r.n_cells.to_string(),
            r.solver.clone(),
            r.converged.to_string(),
            sci(r.l2_error),
            r.n_colors.to_string(),
            sci(r.wall_time),
            r.setup_flops.to_string(),
            r.flops_of(Kernel::Operator).to_string(),
            r.flops_of(Kernel::SmootherSetup).to_string(),
            r.flops_of(Kernel::Transfer).to_string(),
            r.flops_of(Kernel::Coarse).to_string(),
            r.flops_of(Kernel::Krylov).to_string(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn report_markdown(records: &[RunRecord]) -> String {
    let mut out = String::new();
    let r0 = &records[0];
    let _ = writeln!(
        out,
        "{} {}D, k = {}, ω = {}, {}",
        r0.smoother, r0.dim, r0.degree, r0.omega, r0.solver
    );
    out.push('\n');
    out.push_str("| Level L | DoFs | ν | ν_frac | L² error | FLOPs | C_cmplx | Colors |\n");
    out.push_str("|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for r in records {
        let nu = if r.converged {
            format!("{:.1}", r.nu_frac)
        } else {
            format!(">{}", r.iterations)
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {:.3e} | {} | {:.1} | {} |",
            r.level,
            r.dofs,
            r.iterations,
            nu,
            r.l2_error,
            r.flops_total(),
            r.c_cmplx(),
            r.n_colors
        );
    }
    out
}

/// Numeric fields of one CSV row, keyed by column name.
pub type CsvRow = BTreeMap<String, String>;

/// Parses CSV text produced by [`report`].
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?
        .split(',')
        .collect();
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split(',').collect();
            if fields.len() != header.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    i + 1,
                    fields.len(),
                    header.len()
                )));
            }
            Ok(header
                .iter()
                .zip(fields)
                .map(|(h, f)| (h.to_string(), f.to_string()))
                .collect())
        })
        .collect()
}

/// Work of the components of one additive or multiplicative smoothing step
/// on a single level, normalized per subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityRecord {
    pub dim: usize,
    pub degree: usize,
    pub smoother: String,
    pub n_cells: usize,
    pub n_subdomains: usize,
    pub operator: u64,
    pub smoothing_step: u64,
    pub local_solvers: u64,
    pub residual: u64,
    pub setup: u64,
}

/// Counts one operator application, one smoothing step and the smoother
/// setup on the finest level of `cfg` (a single level is used).
pub fn measure_complexity(cfg: &ExperimentConfig) -> Result<ComplexityRecord> {
    cfg.validate()?;
    let counter = Arc::new(FlopCounter::new(true));
    let level = cfg.levels.1;
    let hierarchy = MeshHierarchy::new(cfg.dim, cfg.coarse_cells(), level)?;
    let hierarchy = match cfg.mesh {
        MeshKind::Cartesian => hierarchy,
        MeshKind::Distorted { factor, seed } => hierarchy.distort(factor, seed)?,
    };
    let op = Arc::new(LaplaceOperator::new(
        hierarchy.level(level).clone(),
        cfg.degree,
        cfg.penalty(),
        counter.clone(),
    )?);
    let n = op.n_dofs();
    let u: Vec<f64> = (0..n).map(|i| ((i * 31 % 101) as f64) / 101.0).collect();
    let mut v = vec![0.0; n];
    counter.reset();
    op.apply(&u, &mut v)?;
    let operator = counter.get(Kernel::Operator);
    counter.reset();
    let mut scfg = cfg.smoother_config();
    scfg.pre = 1;
    let smoother = SchwarzSmoother::new(op.clone(), scfg)?;
    let setup = counter.get(Kernel::SmootherSetup);
    counter.reset();
    let mut x = u.clone();
    smoother.step(&mut x, &v, false, false)?;
    Ok(ComplexityRecord {
        dim: cfg.dim,
        degree: cfg.degree,
        smoother: cfg.smoother.name().to_string(),
        n_cells: op.level().n_cells(),
        n_subdomains: smoother.n_subdomains(),
        operator,
        smoothing_step: counter.total(),
        local_solvers: counter.get(Kernel::LocalSolver),
        residual: counter.get(Kernel::Residual),
        setup,
    })
}

impl ComplexityRecord {
    /// `n_FLOP / (n_sub (k+1)^order)`.
    pub fn factor(&self, flops: u64, per_cell: bool, order: u32) -> f64 {
        let n_sub = if per_cell {
            self.n_cells
        } else {
            self.n_subdomains
        } as f64;
        flops as f64 / (n_sub * ((self.degree + 1) as f64).powi(order as i32))
    }

    /// Same normalization with `k^order`.
    pub fn factor_k(&self, flops: u64, per_cell: bool, order: u32) -> f64 {
        self.factor(flops, per_cell, order)
            * ((self.degree + 1) as f64 / self.degree as f64).powi(order as i32)
    }

    pub fn operator_factor(&self) -> f64 {
        self.factor(self.operator, true, self.dim as u32 + 1)
    }

    pub fn smoothing_factor(&self) -> f64 {
        self.factor(self.smoothing_step, false, self.dim as u32 + 1)
    }

    pub fn local_solver_factor(&self) -> f64 {
        self.factor(self.local_solvers, false, self.dim as u32 + 1)
    }

    pub fn setup_factor(&self) -> f64 {
        self.factor(self.setup, false, 3)
    }
}

/// Table of normalized complexity factors, one column per degree.
pub fn complexity_report(records: &[ComplexityRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no complexity records".into()));
    }
    if records.iter().any(|r| r.operator == 0) {
        return Err(Error::InvalidArgument(
            "operation counting was disabled".into(),
        ));
    }
    let mut out = String::new();
    let degrees: Vec<String> = records.iter().map(|r| r.degree.to_string()).collect();
    let d = records[0].dim;
    let _ = writeln!(out, "| Method | {} | Order |", degrees.join(" | "));
    let _ = writeln!(out, "|---|{}---|", "---:|".repeat(records.len()));
    type Row = (&'static str, fn(&ComplexityRecord) -> (u64, bool, u32));
    let rows: [Row; 4] = [
        ("A u", |r| (r.operator, true, r.dim as u32 + 1)),
        ("smoothing step", |r| {
            (r.smoothing_step, false, r.dim as u32 + 1)
        }),
        ("local solvers", |r| {
            (r.local_solvers, false, r.dim as u32 + 1)
        }),
        ("setup", |r| (r.setup, false, 3)),
    ];
    for (norm_label, use_k) in [("(k+1)", false), ("k", true)] {
        for (name, get) in &rows {
            let vals: Vec<String> = records
                .iter()
                .map(|r| {
                    let (f, per_cell, order) = get(r);
                    let v = if use_k {
                        r.factor_k(f, per_cell, order)
                    } else {
                        r.factor(f, per_cell, order)
                    };
                    format!("{v:.1}")
                })
                .collect();
            let order = if *name == "setup" {
                "3".to_string()
            } else {
                format!("{}", d + 1)
            };
            let _ = writeln!(
                out,
                "| {name} | {} | × {norm_label}^{order} |",
                vals.join(" | ")
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_value_text() {
        let cfg = ExperimentConfig::parse(
            "dim = 3\n# comment\nlevels = 1..3\nsmoother = mvs\nomega=0.9 # inline\n",
        )
        .unwrap();
        assert_eq!(cfg.dim, 3);
        assert_eq!(cfg.levels, (1, 3));
        assert_eq!(cfg.smoother, SmootherKind::Mvs);
        assert_eq!(cfg.relaxation(), 0.9);
        assert_eq!(cfg.krylov(), SolverKind::Gmres);
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("levels = 4..2").is_err());
    }

    #[test]
    fn distorted_defaults() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("distortion", "0.25").unwrap();
        cfg.set("smoother", "mcs").unwrap();
        assert_eq!(cfg.coarse_cells(), 32);
        assert_eq!(cfg.penalty(), 4.0);
        assert_eq!(cfg.relaxation(), 0.75);
        assert_eq!(cfg.krylov(), SolverKind::Cg);
        assert!(cfg.symmetric_cycle());
    }

    #[test]
    fn bell_peaks_at_its_center() {
        let p = ManufacturedProblem::new(2).unwrap();
        let c = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * SIGMA);
        let tails: f64 = CENTERS[1..]
            .iter()
            .map(|x| (-(x[0] * x[0] + x[1] * x[1]) / (SIGMA * SIGMA)).exp())
            .sum();
        assert!((p.u([0.0; 3]) - c * (1.0 + tails)).abs() < 1e-14);
    }
}
