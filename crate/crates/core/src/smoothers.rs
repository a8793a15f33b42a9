//! Additive and multiplicative Schwarz smoothers on cells and vertex
//! patches.

use std::str::FromStr;
use std::sync::Arc;

use crate::dgop::LaplaceOperator;
use crate::error::{Error, Result};
use crate::fastdiag::{LocalSolver, SolverFactory};
use crate::flops::Kernel;
use crate::mesh::{
    color_cells_redblack, color_graph_dsatur, color_patches_structured, conflict_graph,
    ColorPartition, VertexPatch,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SmootherKind {
    /// Additive cell smoother.
    Acs,
    /// Multiplicative cell smoother.
    Mcs,
    /// Additive vertex patch smoother.
    Avs,
    /// Multiplicative vertex patch smoother.
    Mvs,
}

impl SmootherKind {
    pub fn is_additive(self) -> bool {
        matches!(self, SmootherKind::Acs | SmootherKind::Avs)
    }

    pub fn uses_patches(self) -> bool {
        matches!(self, SmootherKind::Avs | SmootherKind::Mvs)
    }

    pub fn name(self) -> &'static str {
        match self {
            SmootherKind::Acs => "ACS",
            SmootherKind::Mcs => "MCS",
            SmootherKind::Avs => "AVS",
            SmootherKind::Mvs => "MVS",
        }
    }
}

impl FromStr for SmootherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "acs" => Ok(SmootherKind::Acs),
            "mcs" => Ok(SmootherKind::Mcs),
            "avs" => Ok(SmootherKind::Avs),
            "mvs" => Ok(SmootherKind::Mvs),
            _ => Err(Error::Parse(format!("unknown smoother '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColoringChoice {
    /// Red-black for cells, `2^{d+1}` parity classes for patches.
    Structured,
    /// DSATUR on the conflict graph.
    Graph,
}

impl FromStr for ColoringChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "structured" => Ok(ColoringChoice::Structured),
            "graph" | "dsatur" => Ok(ColoringChoice::Graph),
            _ => Err(Error::Parse(format!("unknown coloring '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    pub kind: SmootherKind,
    pub omega: f64,
    pub pre: usize,
    pub post: usize,
    pub coloring: ColoringChoice,
    /// Reverse the color order in post-smoothing.
    pub symmetrize: bool,
    /// Color additive smoothers too (only affects summation order).
    pub color_additive: bool,
    /// Share local solvers among subdomains with identical data.
    pub share_solvers: bool,
}

impl SmootherConfig {
    pub fn new(kind: SmootherKind, omega: f64) -> Self {
        Self {
            kind,
            omega,
            pre: 1,
            post: 1,
            coloring: ColoringChoice::Structured,
            symmetrize: false,
            color_additive: false,
            share_solvers: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "relaxation parameter must lie in (0, 1], got {}",
                self.omega
            )));
        }
        Ok(())
    }
}

/// Index maps `R_j` of the subdomains of one level.
#[derive(Debug, Clone)]
pub struct SubdomainMap {
    dim: usize,
    n: usize,
    kind: SmootherKind,
    /// Cells of each subdomain (one for cells, `2^d` for patches).
    cells: Vec<Vec<usize>>,
}

impl SubdomainMap {
    pub fn cells(dim: usize, degree: usize, n_cells: usize) -> Self {
        Self {
            dim,
            n: degree + 1,
            kind: SmootherKind::Acs,
            cells: (0..n_cells).map(|c| vec![c]).collect(),
        }
    }

    pub fn patches(dim: usize, degree: usize, patches: &[VertexPatch]) -> Self {
        Self {
            dim,
            n: degree + 1,
            kind: SmootherKind::Avs,
            cells: patches.iter().map(|p| p.cells(dim).to_vec()).collect(),
        }
    }

    pub fn n_subdomains(&self) -> usize {
        self.cells.len()
    }

    pub fn subdomain_cells(&self, j: usize) -> &[usize] {
        &self.cells[j]
    }

    pub fn all_cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn is_patch(&self) -> bool {
        self.kind.uses_patches()
    }

    pub fn local_size(&self) -> usize {
        self.n.pow(self.dim as u32) * self.cells[0].len()
    }

    /// Global indices of subdomain `j` in local order. Patch-local tensor
    /// index per direction is `c_τ (k+1) + i_τ` with `c_τ ∈ {0, 1}` the
    /// cell position inside the patch.
    pub fn indices(&self, j: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.local_size());
        self.for_each(j, |_, g| out.push(g));
        out
    }

    #[inline]
    fn for_each(&self, j: usize, mut f: impl FnMut(usize, usize)) {
        let n = self.n;
        let nd = n.pow(self.dim as u32);
        let cells = &self.cells[j];
        if cells.len() == 1 {
            let base = cells[0] * nd;
            for i in 0..nd {
                f(i, base + i);
            }
            return;
        }
        let m = 2 * n;
        let total = m.pow(self.dim as u32);
        for loc in 0..total {
            let mut r = loc;
            let mut b = 0;
            let mut i = 0;
            let mut stride = 1;
            for t in 0..self.dim {
                let it = r % m;
                r /= m;
                b |= (it / n) << t;
                i += (it % n) * stride;
                stride *= n;
            }
            f(loc, cells[b] * nd + i);
        }
    }

    /// `local = R_j x`.
    pub fn gather(&self, j: usize, x: &[f64], local: &mut [f64]) {
        self.for_each(j, |l, g| local[l] = x[g]);
    }

    /// `x += scale · R_jᵀ local`.
    pub fn scatter_add(&self, j: usize, local: &[f64], x: &mut [f64], scale: f64) {
        self.for_each(j, |l, g| x[g] += scale * local[l]);
    }
}

/// A Schwarz smoother of one level.
#[derive(Debug, Clone)]
pub struct SchwarzSmoother {
    config: SmootherConfig,
    op: Arc<LaplaceOperator>,
    map: SubdomainMap,
    solvers: Vec<Arc<LocalSolver>>,
    colors: ColorPartition,
    /// Cells touched by each color.
    color_cells: Vec<Vec<usize>>,
    setup_flops: u64,
}

impl SchwarzSmoother {
    pub fn new(op: Arc<LaplaceOperator>, config: SmootherConfig) -> Result<Self> {
        config.validate()?;
        let level = op.level().clone();
        let dim = level.dim();
        let k = op.degree();
        let mut factory = SolverFactory::new(&op, config.share_solvers)?;
        let (map, solvers) = if config.kind.uses_patches() {
            let patches = level.vertex_patches();
            if patches.is_empty() {
                return Err(Error::InvalidArgument(
                    "level has no interior vertex".into(),
                ));
            }
            let solvers = patches
                .iter()
                .map(|p| factory.patch_solver(p))
                .collect::<Result<Vec<_>>>()?;
            (SubdomainMap::patches(dim, k, &patches), solvers)
        } else {
            let solvers = (0..level.n_cells())
                .map(|c| factory.cell_solver(c))
                .collect::<Result<Vec<_>>>()?;
            (SubdomainMap::cells(dim, k, level.n_cells()), solvers)
        };
        let setup_flops = factory.setup_flops();
        op.counter().add(Kernel::SmootherSetup, setup_flops);
        let colors = if config.kind.is_additive() && !config.color_additive {
            ColorPartition::single(map.n_subdomains())
        } else {
            match (config.coloring, config.kind.uses_patches()) {
                (ColoringChoice::Structured, false) => color_cells_redblack(&level),
                (ColoringChoice::Structured, true) => {
                    color_patches_structured(&level, &level.vertex_patches())
                }
                (ColoringChoice::Graph, _) => {
                    let graph = conflict_graph(&level, map.all_cells(), !config.kind.is_additive());
                    color_graph_dsatur(&graph)
                }
            }
        };
        let color_cells = colors
            .colors()
            .iter()
            .map(|members| {
                let mut cells: Vec<usize> = members
                    .iter()
                    .flat_map(|&j| map.subdomain_cells(j).iter().copied())
                    .collect();
                cells.sort_unstable();
                cells.dedup();
                cells
            })
            .collect();
        Ok(Self {
            config,
            op,
            map,
            solvers,
            colors,
            color_cells,
            setup_flops,
        })
    }

    pub fn config(&self) -> &SmootherConfig {
        &self.config
    }

    pub fn map(&self) -> &SubdomainMap {
        &self.map
    }

    pub fn colors(&self) -> &ColorPartition {
        &self.colors
    }

    pub fn solver(&self, j: usize) -> &Arc<LocalSolver> {
        &self.solvers[j]
    }

    pub fn n_subdomains(&self) -> usize {
        self.map.n_subdomains()
    }

    /// Setup work of the distinct local solvers.
    pub fn setup_flops(&self) -> u64 {
        self.setup_flops
    }

    /// Replaces the coloring (used to test order independence).
    pub fn with_colors(mut self, colors: ColorPartition) -> Result<Self> {
        if !colors.is_partition_of(self.map.n_subdomains()) {
            return Err(Error::InvalidArgument(
                "coloring does not partition the subdomains".into(),
            ));
        }
        self.color_cells = colors
            .colors()
            .iter()
            .map(|members| {
                let mut cells: Vec<usize> = members
                    .iter()
                    .flat_map(|&j| self.map.subdomain_cells(j).iter().copied())
                    .collect();
                cells.sort_unstable();
                cells.dedup();
                cells
            })
            .collect();
        self.colors = colors;
        Ok(self)
    }

    fn check(&self, x: &[f64], b: &[f64]) -> Result<()> {
        let n = self.op.n_dofs();
        for len in [x.len(), b.len()] {
            if len != n {
                return Err(Error::LevelMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        Ok(())
    }

    /// One smoothing step on `x` for `A x = b`. `x_is_zero` skips the
    /// initial residual evaluation; `reverse` traverses colors and
    /// subdomains backwards.
    pub fn step(&self, x: &mut [f64], b: &[f64], x_is_zero: bool, reverse: bool) -> Result<()> {
        self.check(x, b)?;
        if self.config.kind.is_additive() {
            self.step_additive(x, b, x_is_zero, reverse)
        } else {
            self.step_multiplicative(x, b, reverse)
        }
    }

    /// Applies all subdomain corrections of color `c` computed from `r`.
    fn correct(
        &self,
        c: usize,
        r: &[f64],
        x: &mut [f64],
        reverse: bool,
        scratch: &mut Scratch,
    ) -> Result<u64> {
        let m = self.map.local_size();
        let members = self.colors.color(c);
        let mut flops = 0;
        let mut visit = |j: usize, x: &mut [f64]| -> Result<()> {
            self.map.gather(j, r, &mut scratch.r[..m]);
            flops += self.solvers[j].apply_inverse(
                &scratch.r[..m],
                &mut scratch.x[..m],
                &mut scratch.buf,
            )?;
            self.map
                .scatter_add(j, &scratch.x[..m], x, self.config.omega);
            flops += 2 * m as u64;
            Ok(())
        };
        if reverse {
            for &j in members.iter().rev() {
                visit(j, x)?;
            }
        } else {
            for &j in members {
                visit(j, x)?;
            }
        }
        Ok(flops)
    }

    fn step_additive(
        &self,
        x: &mut [f64],
        b: &[f64],
        x_is_zero: bool,
        reverse: bool,
    ) -> Result<()> {
        let mut r = b.to_vec();
        if !x_is_zero {
            self.op.residual(b, x, &mut r)?;
        }
        let mut scratch = Scratch::new(self.map.local_size());
        let mut flops = 0;
        let nc = self.colors.n_colors();
        for i in 0..nc {
            let c = if reverse { nc - 1 - i } else { i };
            flops += self.correct(c, &r, x, reverse, &mut scratch)?;
        }
        self.op.counter().add(Kernel::LocalSolver, flops);
        Ok(())
    }

    fn step_multiplicative(&self, x: &mut [f64], b: &[f64], reverse: bool) -> Result<()> {
        let mut r = vec![0.0; b.len()];
        let mut scratch = Scratch::new(self.map.local_size());
        let mut flops = 0;
        let nc = self.colors.n_colors();
        for i in 0..nc {
            let c = if reverse { nc - 1 - i } else { i };
            self.op
                .residual_on_cells(b, x, &mut r, &self.color_cells[c])?;
            flops += self.correct(c, &r, x, reverse, &mut scratch)?;
        }
        self.op.counter().add(Kernel::LocalSolver, flops);
        Ok(())
    }

    /// Pre-smoothing: `m_pre` steps, the first one from a zero guess if
    /// `x_is_zero`.
    pub fn pre_smooth(&self, x: &mut [f64], b: &[f64], mut x_is_zero: bool) -> Result<()> {
        for _ in 0..self.config.pre {
            self.step(x, b, x_is_zero, false)?;
            x_is_zero = false;
        }
        Ok(())
    }

    /// Post-smoothing: `m_post` steps, reversed if the configuration asks
    /// for a symmetric cycle.
    pub fn post_smooth(&self, x: &mut [f64], b: &[f64]) -> Result<()> {
        for _ in 0..self.config.post {
            self.step(x, b, false, self.config.symmetrize)?;
        }
        Ok(())
    }

    /// `Σ_j R_jᵀ A_j⁻¹ R_j r` (no relaxation), the additive Schwarz
    /// preconditioner.
    pub fn apply_additive_preconditioner(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        z.iter_mut().for_each(|v| *v = 0.0);
        let m = self.map.local_size();
        let mut scratch = Scratch::new(m);
        let mut flops = 0;
        for j in 0..self.map.n_subdomains() {
            self.map.gather(j, r, &mut scratch.r[..m]);
            flops += self.solvers[j].apply_inverse(
                &scratch.r[..m],
                &mut scratch.x[..m],
                &mut scratch.buf,
            )?;
            self.map.scatter_add(j, &scratch.x[..m], z, 1.0);
        }
        self.op.counter().add(Kernel::LocalSolver, flops);
        Ok(())
    }
}

struct Scratch {
    r: Vec<f64>,
    x: Vec<f64>,
    buf: Vec<f64>,
}

impl Scratch {
    fn new(m: usize) -> Self {
        Self {
            r: vec![0.0; m],
            x: vec![0.0; m],
            buf: vec![0.0; m],
        }
    }
}
