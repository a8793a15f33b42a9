//! Nested DG transfer operators, coarse grid solvers and the V-cycle.

use std::str::FromStr;
use std::sync::Arc;

use crate::dense::{BandedCholesky, DenseMatrix};
use crate::dgop::LaplaceOperator;
use crate::error::{Error, Result};
use crate::flops::{FlopCounter, Kernel};
use crate::krylov::{LinearOperator, Preconditioner};
use crate::mesh::MeshHierarchy;
use crate::polybasis::{generalized_sym_eig, lagrange_value, Basis1D};
use crate::smoothers::{SchwarzSmoother, SmootherConfig, SmootherKind};
use crate::tensor::{kron_apply, MatView};

/// 1D embedding matrices `E^c[i_child][i_parent] = φ_parent((x_i + c)/2)`
/// for the lower (`c = 0`) and upper (`c = 1`) child interval.
pub fn embedding_matrices(basis: &Basis1D) -> [DenseMatrix; 2] {
    let n = basis.n_dofs_1d();
    let nodes = &basis.nodes;
    [0.0, 1.0]
        .map(|c| DenseMatrix::from_fn(n, n, |i, j| lagrange_value(nodes, j, (nodes[i] + c) / 2.0)))
}

/// Prolongation and restriction between levels `l` and `l + 1`.
#[derive(Debug, Clone)]
pub struct Transfer {
    dim: usize,
    n: usize,
    embed: [DenseMatrix; 2],
    /// Children of each coarse cell ordered by bit pattern.
    children: Vec<usize>,
    n_coarse: usize,
    n_fine: usize,
    counter: Arc<FlopCounter>,
}

impl Transfer {
    pub fn new(
        hierarchy: &MeshHierarchy,
        coarse_level: usize,
        degree: usize,
        counter: Arc<FlopCounter>,
    ) -> Result<Self> {
        if coarse_level >= hierarchy.max_level() {
            return Err(Error::InvalidArgument(format!(
                "no level above {coarse_level} in a hierarchy of {} levels",
                hierarchy.n_levels()
            )));
        }
        let basis = Basis1D::new(degree)?;
        let dim = hierarchy.dim();
        let n = degree + 1;
        let nd = n.pow(dim as u32);
        let coarse = hierarchy.level(coarse_level);
        let children = (0..coarse.n_cells())
            .flat_map(|c| hierarchy.children(coarse_level, c))
            .collect();
        Ok(Self {
            dim,
            n,
            embed: embedding_matrices(&basis),
            children,
            n_coarse: coarse.n_cells() * nd,
            n_fine: hierarchy.level(coarse_level + 1).n_cells() * nd,
            counter,
        })
    }

    pub fn embedding(&self) -> &[DenseMatrix; 2] {
        &self.embed
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    fn mats(&self, b: usize, transpose: bool) -> [MatView<'_>; 3] {
        let view = |t: usize| {
            let m = MatView::new(self.embed[(b >> t) & 1].as_slice(), self.n, self.n);
            if transpose {
                m.t()
            } else {
                m
            }
        };
        [view(0), view(1), view(2)]
    }

    fn check(&self, coarse: usize, fine: usize) -> Result<()> {
        if coarse != self.n_coarse {
            return Err(Error::LevelMismatch {
                expected: self.n_coarse,
                got: coarse,
            });
        }
        if fine != self.n_fine {
            return Err(Error::LevelMismatch {
                expected: self.n_fine,
                got: fine,
            });
        }
        Ok(())
    }

    /// `fine = I↑ coarse`.
    pub fn prolongate(&self, coarse: &[f64], fine: &mut [f64]) -> Result<()> {
        self.check(coarse.len(), fine.len())?;
        let nd = self.n.pow(self.dim as u32);
        let nch = 1 << self.dim;
        let mut buf = Vec::new();
        let mut flops = 0;
        for (c, u) in coarse.chunks_exact(nd).enumerate() {
            for b in 0..nch {
                let f = self.children[c * nch + b];
                let mats = self.mats(b, false);
                flops += kron_apply(
                    self.dim,
                    &mats[..self.dim],
                    u,
                    &mut fine[f * nd..(f + 1) * nd],
                    &mut buf,
                );
            }
        }
        self.counter.add(Kernel::Transfer, flops);
        Ok(())
    }

    /// `coarse = I↓ fine`, the transpose of [`Transfer::prolongate`].
    pub fn restrict(&self, fine: &[f64], coarse: &mut [f64]) -> Result<()> {
        self.check(coarse.len(), fine.len())?;
        let nd = self.n.pow(self.dim as u32);
        let nch = 1 << self.dim;
        let mut buf = Vec::new();
        let mut tmp = vec![0.0; nd];
        let mut flops = 0;
        for (c, out) in coarse.chunks_exact_mut(nd).enumerate() {
            out.iter_mut().for_each(|x| *x = 0.0);
            for b in 0..nch {
                let f = self.children[c * nch + b];
                let mats = self.mats(b, true);
                flops += kron_apply(
                    self.dim,
                    &mats[..self.dim],
                    &fine[f * nd..(f + 1) * nd],
                    &mut tmp,
                    &mut buf,
                );
                out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
                flops += nd as u64;
            }
        }
        self.counter.add(Kernel::Transfer, flops);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseSolverKind {
    /// Banded Cholesky of the assembled level-0 matrix.
    Direct,
    /// Chebyshev iteration preconditioned by the additive cell smoother.
    Chebyshev,
}

impl FromStr for CoarseSolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" | "dense_direct" => Ok(CoarseSolverKind::Direct),
            "chebyshev" => Ok(CoarseSolverKind::Chebyshev),
            _ => Err(Error::Parse(format!("unknown coarse solver '{s}'"))),
        }
    }
}

/// Largest band entry count accepted for the direct coarse solver.
pub const BANDED_LIMIT: usize = 60_000_000;

/// Sparse rows of `op` obtained by probing with one local unit vector per
/// cell class (cells colored by coordinates mod 3 share no neighbors).
pub fn assemble_sparse_rows(op: &LaplaceOperator) -> Result<Vec<Vec<(usize, f64)>>> {
    let level = op.level();
    let dim = level.dim();
    let nd = op.dofs_per_cell();
    let n = op.n_dofs();
    let n_classes = 3usize.pow(dim as u32);
    let class_of = |c: usize| {
        let cc = level.cell_coords(c);
        (0..dim).fold(0, |acc, t| acc * 3 + cc[t] % 3)
    };
    let classes: Vec<usize> = (0..level.n_cells()).map(class_of).collect();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for class in 0..n_classes {
        let cells: Vec<usize> = (0..level.n_cells())
            .filter(|&c| classes[c] == class)
            .collect();
        if cells.is_empty() {
            continue;
        }
        for i in 0..nd {
            for &c in &cells {
                e[c * nd + i] = 1.0;
            }
            op.apply_counted(&e, &mut col, Kernel::Coarse)?;
            for &c in &cells {
                e[c * nd + i] = 0.0;
            }
            // row r of column (c, i) belongs to the probed cell that is r's
            // own cell or its face neighbor
            for (r, &v) in col.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let rc = r / nd;
                let src = if classes[rc] == class {
                    rc
                } else {
                    (0..2 * dim)
                        .filter_map(|f| level.neighbor(rc, f))
                        .find(|&nb| classes[nb] == class)
                        .ok_or_else(|| {
                            Error::NumericalFailure("probing found no source cell".into())
                        })?
                };
                rows[r].push((src * nd + i, v));
            }
        }
    }
    for r in &mut rows {
        r.sort_unstable_by_key(|&(j, _)| j);
    }
    Ok(rows)
}

#[derive(Debug)]
enum CoarseImpl {
    Direct(BandedCholesky),
    Chebyshev {
        smoother: SchwarzSmoother,
        lambda_max: f64,
    },
}

/// Solver for the level-0 problem.
#[derive(Debug)]
pub struct CoarseSolver {
    op: Arc<LaplaceOperator>,
    kind: CoarseImpl,
    tol: f64,
}

/// Lower and upper Chebyshev interval factors relative to the Lanczos
/// estimate of the largest eigenvalue.
pub const CHEBYSHEV_INTERVAL: [f64; 2] = [0.06, 1.2];

impl CoarseSolver {
    pub fn new(op: Arc<LaplaceOperator>, kind: CoarseSolverKind, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "coarse tolerance must be positive, got {tol}"
            )));
        }
        let kind = match kind {
            CoarseSolverKind::Direct => {
                let rows = assemble_sparse_rows(&op)?;
                let n = op.n_dofs();
                let bw = rows
                    .iter()
                    .enumerate()
                    .flat_map(|(i, r)| r.iter().map(move |&(j, _)| i.saturating_sub(j)))
                    .max()
                    .unwrap_or(0);
                let entries = n * (bw + 1);
                if entries > BANDED_LIMIT {
                    return Err(Error::SizeGuard {
                        n: entries,
                        limit: BANDED_LIMIT,
                    });
                }
                let chol = BandedCholesky::factor(n, &rows)?;
                let w = (chol.bandwidth() + 1) as u64;
                op.counter().add(Kernel::Coarse, n as u64 * w * w);
                CoarseImpl::Direct(chol)
            }
            CoarseSolverKind::Chebyshev => {
                let smoother =
                    SchwarzSmoother::new(op.clone(), SmootherConfig::new(SmootherKind::Acs, 1.0))?;
                let lambda_max = lanczos_max_eigenvalue(&op, &smoother, 20)?;
                CoarseImpl::Chebyshev {
                    smoother,
                    lambda_max,
                }
            }
        };
        Ok(Self { op, kind, tol })
    }

    /// Direct solve if the band fits in memory, Chebyshev otherwise.
    pub fn automatic(op: Arc<LaplaceOperator>, tol: f64) -> Result<Self> {
        match Self::new(op.clone(), CoarseSolverKind::Direct, tol) {
            Err(Error::SizeGuard { n, limit }) => {
                log::info!("coarse band of {n} entries exceeds {limit}; using Chebyshev");
                Self::new(op, CoarseSolverKind::Chebyshev, tol)
            }
            other => other,
        }
    }

    pub fn kind(&self) -> CoarseSolverKind {
        match self.kind {
            CoarseImpl::Direct(_) => CoarseSolverKind::Direct,
            CoarseImpl::Chebyshev { .. } => CoarseSolverKind::Chebyshev,
        }
    }

    pub fn operator(&self) -> &Arc<LaplaceOperator> {
        &self.op
    }

    /// Solves `A₀ x = b`.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) -> Result<()> {
        let n = self.op.n_dofs();
        if b.len() != n || x.len() != n {
            return Err(Error::LevelMismatch {
                expected: n,
                got: b.len().min(x.len()),
            });
        }
        match &self.kind {
            CoarseImpl::Direct(chol) => {
                chol.solve(b, x);
                self.op.counter().add(Kernel::Coarse, chol.solve_flops());
                Ok(())
            }
            CoarseImpl::Chebyshev {
                smoother,
                lambda_max,
            } => self.chebyshev(smoother, *lambda_max, b, x),
        }
    }

    fn chebyshev(
        &self,
        smoother: &SchwarzSmoother,
        lambda_max: f64,
        b: &[f64],
        x: &mut [f64],
    ) -> Result<()> {
        let n = b.len();
        x.iter_mut().for_each(|v| *v = 0.0);
        let bnorm = norm(b);
        if bnorm == 0.0 {
            return Ok(());
        }
        let counter = self.op.counter();
        let (a, bb) = (
            CHEBYSHEV_INTERVAL[0] * lambda_max,
            CHEBYSHEV_INTERVAL[1] * lambda_max,
        );
        let theta = 0.5 * (bb + a);
        let delta = 0.5 * (bb - a);
        let sigma = theta / delta;
        let mut rho = 1.0 / sigma;
        let mut r = b.to_vec();
        let mut z = vec![0.0; n];
        let mut ad = vec![0.0; n];
        smoother.apply_additive_preconditioner(&r, &mut z)?;
        let mut d: Vec<f64> = z.iter().map(|v| v / theta).collect();
        let cap = 10 * n;
        for _ in 0..cap {
            for i in 0..n {
                x[i] += d[i];
            }
            self.op.apply_counted(&d, &mut ad, Kernel::Coarse)?;
            for i in 0..n {
                r[i] -= ad[i];
            }
            counter.add(Kernel::Coarse, 6 * n as u64);
            if norm(&r) <= self.tol * bnorm {
                return Ok(());
            }
            smoother.apply_additive_preconditioner(&r, &mut z)?;
            let rho_new = 1.0 / (2.0 * sigma - rho);
            let c1 = rho_new * rho;
            let c2 = 2.0 * rho_new / delta;
            for i in 0..n {
                d[i] = c1 * d[i] + c2 * z[i];
            }
            counter.add(Kernel::Coarse, 3 * n as u64);
            rho = rho_new;
        }
        Err(Error::CoarseSolverDiverged(cap))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest eigenvalue of the additively preconditioned operator from the
/// Lanczos matrix of `steps` preconditioned CG iterations.
pub fn lanczos_max_eigenvalue(
    op: &LaplaceOperator,
    smoother: &SchwarzSmoother,
    steps: usize,
) -> Result<f64> {
    let n = op.n_dofs();
    // deterministic, generic start vector
    let mut r: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0)
        .collect();
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];
    smoother.apply_additive_preconditioner(&r, &mut z)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    for _ in 0..steps.min(n) {
        op.apply_counted(&p, &mut ap, Kernel::Coarse)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !(rz > 0.0) {
            break;
        }
        let alpha = rz / pap;
        alphas.push(alpha);
        for i in 0..n {
            r[i] -= alpha * ap[i];
        }
        smoother.apply_additive_preconditioner(&r, &mut z)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        betas.push(beta);
        rz = rz_new;
        if rz <= 1e-30 {
            break;
        }
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let m = alphas.len();
    if m == 0 {
        return Err(Error::NumericalFailure(
            "Lanczos estimate broke down".into(),
        ));
    }
    let mut t = DenseMatrix::zeros(m, m);
    for j in 0..m {
        t[(j, j)] = 1.0 / alphas[j]
            + if j > 0 {
                betas[j - 1] / alphas[j - 1]
            } else {
                0.0
            };
        if j + 1 < m {
            let off = betas[j].sqrt() / alphas[j];
            t[(j, j + 1)] = off;
            t[(j + 1, j)] = off;
        }
    }
    let eig = generalized_sym_eig(&t, &DenseMatrix::identity(m))?;
    Ok(eig.values.iter().copied().fold(f64::MIN, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultigridConfig {
    pub smoother: SmootherConfig,
    pub coarse: Option<CoarseSolverKind>,
    pub coarse_tol: f64,
}

impl MultigridConfig {
    /// Automatic coarse solver choice, tolerance `1e-8`.
    pub fn new(smoother: SmootherConfig) -> Self {
        Self {
            smoother,
            coarse: None,
            coarse_tol: 1e-8,
        }
    }
}

/// Geometric multigrid V-cycle on levels `0..=L` of a hierarchy.
#[derive(Debug)]
pub struct Multigrid {
    ops: Vec<Arc<LaplaceOperator>>,
    smoothers: Vec<SchwarzSmoother>,
    transfers: Vec<Transfer>,
    coarse: CoarseSolver,
}

impl Multigrid {
    /// Builds the V-cycle for `ops[l]` on level `l`, `l = 0..=L`.
    pub fn new(
        hierarchy: &MeshHierarchy,
        ops: Vec<Arc<LaplaceOperator>>,
        config: &MultigridConfig,
    ) -> Result<Self> {
        if ops.is_empty() || ops.len() > hierarchy.n_levels() {
            return Err(Error::InvalidArgument(format!(
                "need between 1 and {} level operators, got {}",
                hierarchy.n_levels(),
                ops.len()
            )));
        }
        let degree = ops[0].degree();
        let counter = ops[0].counter().clone();
        let coarse = match config.coarse {
            Some(kind) => CoarseSolver::new(ops[0].clone(), kind, config.coarse_tol)?,
            None => CoarseSolver::automatic(ops[0].clone(), config.coarse_tol)?,
        };
        let mut smoothers = Vec::with_capacity(ops.len() - 1);
        let mut transfers = Vec::with_capacity(ops.len() - 1);
        for l in 1..ops.len() {
            smoothers.push(SchwarzSmoother::new(ops[l].clone(), config.smoother)?);
            transfers.push(Transfer::new(hierarchy, l - 1, degree, counter.clone())?);
        }
        Ok(Self {
            ops,
            smoothers,
            transfers,
            coarse,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.ops.len()
    }

    pub fn operator(&self, l: usize) -> &Arc<LaplaceOperator> {
        &self.ops[l]
    }

    pub fn fine_operator(&self) -> &Arc<LaplaceOperator> {
        self.ops.last().unwrap()
    }

    /// Smoother of level `l ≥ 1`.
    pub fn smoother(&self, l: usize) -> &SchwarzSmoother {
        &self.smoothers[l - 1]
    }

    pub fn transfer(&self, l: usize) -> &Transfer {
        &self.transfers[l]
    }

    pub fn coarse_solver(&self) -> &CoarseSolver {
        &self.coarse
    }

    /// One V-cycle on level `l` for `A x = b`.
    pub fn vcycle(&self, l: usize, x: &mut [f64], b: &[f64], x_is_zero: bool) -> Result<()> {
        let op = &self.ops[l];
        if b.len() != op.n_dofs() || x.len() != op.n_dofs() {
            return Err(Error::LevelMismatch {
                expected: op.n_dofs(),
                got: b.len(),
            });
        }
        if l == 0 {
            if x_is_zero {
                return self.coarse.solve(b, x);
            }
            let mut r = vec![0.0; b.len()];
            op.residual(b, x, &mut r)?;
            let mut e = vec![0.0; b.len()];
            self.coarse.solve(&r, &mut e)?;
            x.iter_mut().zip(&e).for_each(|(a, d)| *a += d);
            return Ok(());
        }
        let smoother = &self.smoothers[l - 1];
        let transfer = &self.transfers[l - 1];
        if smoother.config().pre == 0 && x_is_zero {
            x.iter_mut().for_each(|v| *v = 0.0);
        }
        smoother.pre_smooth(x, b, x_is_zero)?;
        let mut r = vec![0.0; b.len()];
        if smoother.config().pre == 0 && x_is_zero {
            r.copy_from_slice(b);
        } else {
            op.residual(b, x, &mut r)?;
        }
        let nc = transfer.n_coarse();
        let mut rc = vec![0.0; nc];
        transfer.restrict(&r, &mut rc)?;
        let mut ec = vec![0.0; nc];
        self.vcycle(l - 1, &mut ec, &rc, true)?;
        transfer.prolongate(&ec, &mut r)?;
        x.iter_mut().zip(&r).for_each(|(a, d)| *a += d);
        smoother.post_smooth(x, b)
    }

    /// `z = B r`: one V-cycle on the finest level from a zero guess.
    pub fn precondition(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        z.iter_mut().for_each(|v| *v = 0.0);
        self.vcycle(self.ops.len() - 1, z, r, true)
    }
}

impl Preconditioner for Multigrid {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        self.precondition(r, z)
    }
}

impl LinearOperator for Multigrid {
    fn n(&self) -> usize {
        self.fine_operator().n_dofs()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.precondition(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_of_linear_basis() {
        let b = Basis1D::new(1).unwrap();
        let [e0, e1] = embedding_matrices(&b);
        // child nodes 0, 1/2 of the lower half
        assert_eq!(e0.as_slice(), &[1.0, 0.0, 0.5, 0.5]);
        assert_eq!(e1.as_slice(), &[0.5, 0.5, 0.0, 1.0]);
    }

    #[test]
    fn coarse_kind_parses() {
        assert_eq!(
            "chebyshev".parse::<CoarseSolverKind>().unwrap(),
            CoarseSolverKind::Chebyshev
        );
        assert!("lu".parse::<CoarseSolverKind>().is_err());
    }
}
