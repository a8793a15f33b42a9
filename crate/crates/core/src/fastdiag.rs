//! Fast diagonalization of separable local problems.
//!
//! A local matrix of Kronecker-sum form `Σ_τ M ⊗ .. ⊗ A^(τ) ⊗ .. ⊗ M` is
//! inverted through the generalized eigenpairs of each pencil
//! `(A^(τ), M^(τ))`: `A⁻¹ = Z Λ⁻¹ Zᵀ` with `Z = Z^(d) ⊗ .. ⊗ Z^(1)` and
//! diagonal `Λ = Σ_τ I ⊗ .. ⊗ Λ^(τ) ⊗ .. ⊗ I`.

use std::collections::HashMap;
use std::sync::Arc;

use crate::dense::DenseMatrix;
use crate::dgop::LaplaceOperator;
use crate::error::{Error, Result};
use crate::mesh::{Level, VertexPatch};
use crate::polybasis::{
    generalized_sym_eig_counted, univariate_cell_factors, univariate_patch_factors, Basis1D,
    EigenPair1D, Side, UnivariateFactors,
};
use crate::tensor::{kron_apply, MatView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubdomainKind {
    Cell,
    VertexPatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    /// Factors of the true local matrix (axis-aligned subdomains).
    Exact,
    /// Factors of an axis-aligned surrogate of a distorted cell.
    Surrogate,
}

/// Fast diagonalization solver of one subdomain.
///
/// Only the eigenpairs and `Λ⁻¹` are stored since meshes with one solver
/// per cell hold millions of them; the 1D matrices are kept on request.
#[derive(Debug, Clone)]
pub struct LocalSolver {
    dim: usize,
    size: usize,
    kind: SubdomainKind,
    provenance: Provenance,
    /// `Z^(τ)` row-major, one `size × size` block per direction.
    vectors: Box<[f64]>,
    /// `Λ^(τ)`, one block of `size` per direction.
    values: Box<[f64]>,
    inv_lambda: Box<[f64]>,
    /// `(M^(τ), A^(τ))` per direction if retained.
    matrices: Option<Box<[(DenseMatrix, DenseMatrix)]>>,
    setup_flops: u64,
}

impl LocalSolver {
    /// Builds the solver from one factor pair per direction.
    pub fn from_factors(
        dim: usize,
        factors: Vec<UnivariateFactors>,
        kind: SubdomainKind,
        provenance: Provenance,
    ) -> Result<Self> {
        Self::build(dim, factors, kind, provenance, true)
    }

    fn build(
        dim: usize,
        factors: Vec<UnivariateFactors>,
        kind: SubdomainKind,
        provenance: Provenance,
        keep_matrices: bool,
    ) -> Result<Self> {
        if factors.len() != dim || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "need {dim} univariate factors, got {}",
                factors.len()
            )));
        }
        let size = factors[0].size();
        if factors.iter().any(|f| f.size() != size) {
            return Err(Error::InvalidArgument(
                "univariate factors differ in size".into(),
            ));
        }
        let mut setup_flops: u64 = factors.iter().map(|f| f.flops).sum();
        let mut vectors = Vec::with_capacity(dim * size * size);
        let mut values = Vec::with_capacity(dim * size);
        for f in &factors {
            let (e, fl) = generalized_sym_eig_counted(&f.stiffness, &f.mass)?;
            setup_flops += fl;
            vectors.extend_from_slice(e.vectors.as_slice());
            values.extend_from_slice(&e.values);
        }
        let total = size.pow(dim as u32);
        let mut inv_lambda = vec![0.0; total];
        for (i, x) in inv_lambda.iter_mut().enumerate() {
            let mut r = i;
            let mut s = 0.0;
            for t in 0..dim {
                s += values[t * size + r % size];
                r /= size;
            }
            if !(s > 0.0) {
                return Err(Error::SingularSolver(s));
            }
            *x = 1.0 / s;
        }
        setup_flops += (total * (dim + 1)) as u64;
        let matrices =
            keep_matrices.then(|| factors.into_iter().map(|f| (f.mass, f.stiffness)).collect());
        Ok(Self {
            dim,
            size,
            kind,
            provenance,
            vectors: vectors.into(),
            values: values.into(),
            inv_lambda: inv_lambda.into(),
            matrices,
            setup_flops,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Extent per direction (`k + 1` for cells, `2(k + 1)` for patches).
    pub fn size_1d(&self) -> usize {
        self.size
    }

    pub fn n_local(&self) -> usize {
        self.inv_lambda.len()
    }

    pub fn kind(&self) -> SubdomainKind {
        self.kind
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Generalized eigenpair of direction `t`: columns of `Z^(t)` and
    /// ascending eigenvalues.
    pub fn eigenpair(&self, t: usize) -> EigenPair1D {
        let s = self.size;
        EigenPair1D {
            vectors: DenseMatrix::from_row_major(
                s,
                s,
                self.vectors[t * s * s..(t + 1) * s * s].to_vec(),
            ),
            values: self.values[t * s..(t + 1) * s].to_vec(),
        }
    }

    /// Operation count of building the 1D matrices and eigenpairs.
    pub fn setup_flops(&self) -> u64 {
        self.setup_flops
    }

    /// `x = A⁻¹ r`. `buf` is caller-provided scratch. Returns the
    /// operation count.
    pub fn apply_inverse(&self, r: &[f64], x: &mut [f64], buf: &mut Vec<f64>) -> Result<u64> {
        let n = self.n_local();
        if r.len() != n || x.len() != n {
            return Err(Error::InvalidArgument(format!(
                "local vector length {} / {} does not match subdomain size {n}",
                r.len(),
                x.len()
            )));
        }
        let mut tmp = std::mem::take(buf);
        if tmp.len() < n {
            tmp.resize(n, 0.0);
        }
        let mut scratch = Vec::new();
        let mut flops = self.kron_eigvecs(true, r, &mut tmp[..n], &mut scratch);
        for (t, l) in tmp[..n].iter_mut().zip(self.inv_lambda.iter()) {
            *t *= l;
        }
        flops += n as u64;
        flops += self.kron_eigvecs(false, &tmp[..n], x, &mut scratch);
        *buf = tmp;
        Ok(flops)
    }

    /// `Zᵀ u` (`transpose`) or `Z u` as a sum-factorized Kronecker product.
    pub fn kron_eigvecs(
        &self,
        transpose: bool,
        u: &[f64],
        out: &mut [f64],
        buf: &mut Vec<f64>,
    ) -> u64 {
        let s = self.size;
        let mut mats = Vec::with_capacity(self.dim);
        for block in self.vectors.chunks_exact(s * s) {
            let m = MatView::new(block, s, s);
            mats.push(if transpose { m.t() } else { m });
        }
        kron_apply(self.dim, &mats, u, out, buf)
    }

    /// Dense Kronecker sum `Σ_τ M ⊗ .. ⊗ A^(τ) ⊗ .. ⊗ M` (small sizes
    /// only). Fails unless the 1D matrices were retained.
    pub fn kronecker_sum_dense(&self) -> Result<DenseMatrix> {
        let m = self.matrices.as_ref().ok_or_else(|| {
            Error::InvalidArgument("local solver was built without its 1D matrices".into())
        })?;
        let (mass, stiffness): (Vec<_>, Vec<_>) = m.iter().cloned().unzip();
        Ok(kronecker_sum(&mass, &stiffness))
    }
}

/// `Σ_τ M^(d) ⊗ .. ⊗ A^(τ) ⊗ .. ⊗ M^(1)` with the first direction fastest.
pub fn kronecker_sum(mass: &[DenseMatrix], stiffness: &[DenseMatrix]) -> DenseMatrix {
    let dim = mass.len();
    let mut total: Option<DenseMatrix> = None;
    for tau in 0..dim {
        let mut term: Option<DenseMatrix> = None;
        for t in (0..dim).rev() {
            let m = if t == tau { &stiffness[t] } else { &mass[t] };
            term = Some(match term {
                None => m.clone(),
                Some(acc) => acc.kron(m),
            });
        }
        let term = term.unwrap();
        total = Some(match total {
            None => term,
            Some(mut acc) => {
                acc.add_scaled(1.0, &term);
                acc
            }
        });
    }
    total.unwrap()
}

/// Dense `(Z^(d) ⊗ .. ⊗ Z^(1))` applied by direct Kronecker products.
pub fn kronecker_matvec(factors: &[DenseMatrix], u: &[f64]) -> Result<Vec<f64>> {
    let dim = factors.len();
    if dim == 0 || dim > 3 {
        return Err(Error::InvalidArgument(format!(
            "unsupported number of factors {dim}"
        )));
    }
    let rows: usize = factors.iter().map(|f| f.rows()).product();
    let cols: usize = factors.iter().map(|f| f.cols()).product();
    if u.len() != cols {
        return Err(Error::InvalidArgument(format!(
            "tensor of length {} does not match factor sizes ({cols})",
            u.len()
        )));
    }
    let mats: Vec<MatView<'_>> = factors
        .iter()
        .map(|f| MatView::new(f.as_slice(), f.rows(), f.cols()))
        .collect();
    let mut out = vec![0.0; rows];
    let mut buf = Vec::new();
    kron_apply(dim, &mats, u, &mut out, &mut buf);
    Ok(out)
}

fn side_of(level: &Level, c: usize, face: usize, neighbor_length: impl Fn(usize) -> f64) -> Side {
    match level.neighbor(c, face) {
        None => Side::Boundary,
        Some(nb) => Side::Interior {
            neighbor_length: neighbor_length(nb),
        },
    }
}

/// Builds cell and patch solvers of one level with optional sharing of
/// solvers among subdomains with identical data.
#[derive(Debug)]
pub struct SolverFactory<'a> {
    op: &'a LaplaceOperator,
    basis: Basis1D,
    share: bool,
    keep_matrices: bool,
    cache: HashMap<Vec<u64>, Arc<LocalSolver>>,
    setup_flops: u64,
}

impl<'a> SolverFactory<'a> {
    pub fn new(op: &'a LaplaceOperator, share: bool) -> Result<Self> {
        Ok(Self {
            op,
            basis: Basis1D::new(op.degree())?,
            share,
            keep_matrices: false,
            cache: HashMap::new(),
            setup_flops: 0,
        })
    }

    /// Retain the 1D matrices in solvers built from now on, as needed by
    /// [`LocalSolver::kronecker_sum_dense`].
    pub fn keep_matrices(&mut self, keep: bool) -> &mut Self {
        self.keep_matrices = keep;
        self
    }

    /// Operation count of all solvers built so far (shared solvers once).
    pub fn setup_flops(&self) -> u64 {
        self.setup_flops
    }

    fn cached(
        &mut self,
        key: Vec<u64>,
        build: impl FnOnce(&Basis1D, bool) -> Result<LocalSolver>,
    ) -> Result<Arc<LocalSolver>> {
        if self.share {
            if let Some(s) = self.cache.get(&key) {
                return Ok(s.clone());
            }
        }
        let solver = Arc::new(build(&self.basis, self.keep_matrices)?);
        self.setup_flops += solver.setup_flops();
        if self.share {
            self.cache.insert(key, solver.clone());
        }
        Ok(solver)
    }

    /// Cell solver: exact on axis-aligned cells, from the surrogate box of
    /// averaged edge lengths otherwise.
    pub fn cell_solver(&mut self, c: usize) -> Result<Arc<LocalSolver>> {
        let level = self.op.level().clone();
        let dim = level.dim();
        let gamma_hat = self.op.penalty_hat();
        let k = self.op.degree();
        let (h, provenance) = if level.is_cartesian() {
            (level.box_lengths(c), Provenance::Exact)
        } else {
            (level.surrogate_lengths(c)?, Provenance::Surrogate)
        };
        let mut sides = Vec::with_capacity(dim);
        for t in 0..dim {
            let side = |s: usize| {
                side_of(&level, c, 2 * t + s, |nb| match provenance {
                    Provenance::Exact => level.box_lengths(nb)[t],
                    // the surrogate has no neighbors: reuse its own length
                    Provenance::Surrogate => h[t],
                })
            };
            sides.push([side(0), side(1)]);
        }
        let mut key = vec![0u64, k as u64, gamma_hat.to_bits()];
        for t in 0..dim {
            key.push(h[t].to_bits());
            for s in sides[t] {
                key.push(match s {
                    Side::Boundary => u64::MAX,
                    Side::Interior { neighbor_length } => neighbor_length.to_bits(),
                });
            }
        }
        self.cached(key, |basis, keep| {
            let factors = (0..dim)
                .map(|t| univariate_cell_factors(basis, h[t], sides[t], gamma_hat))
                .collect::<Result<Vec<_>>>()?;
            LocalSolver::build(dim, factors, SubdomainKind::Cell, provenance, keep)
        })
    }

    /// Exact vertex patch solver; requires axis-aligned cells.
    pub fn patch_solver(&mut self, patch: &VertexPatch) -> Result<Arc<LocalSolver>> {
        let level = self.op.level().clone();
        if !level.is_cartesian() {
            return Err(Error::InvalidArgument(
                "vertex patch solvers require an axis-aligned mesh".into(),
            ));
        }
        let dim = level.dim();
        let gamma_hat = self.op.penalty_hat();
        let k = self.op.degree();
        let cells = patch.cells(dim);
        let lower = cells[0];
        let mut data = Vec::with_capacity(dim);
        let mut key = vec![1u64, k as u64, gamma_hat.to_bits()];
        for t in 0..dim {
            let upper = cells[1 << t];
            let hp = level.box_lengths(lower)[t];
            let hm = level.box_lengths(upper)[t];
            let len = |nb: usize| level.box_lengths(nb)[t];
            let outer = [
                side_of(&level, lower, 2 * t, len),
                side_of(&level, upper, 2 * t + 1, len),
            ];
            key.push(hp.to_bits());
            key.push(hm.to_bits());
            for s in outer {
                key.push(match s {
                    Side::Boundary => u64::MAX,
                    Side::Interior { neighbor_length } => neighbor_length.to_bits(),
                });
            }
            data.push((hp, hm, outer));
        }
        self.cached(key, |basis, keep| {
            let factors = data
                .iter()
                .map(|&(hp, hm, outer)| univariate_patch_factors(basis, hp, hm, outer, gamma_hat))
                .collect::<Result<Vec<_>>>()?;
            LocalSolver::build(
                dim,
                factors,
                SubdomainKind::VertexPatch,
                Provenance::Exact,
                keep,
            )
        })
    }
}

/// Largest generalized eigenvalue of `(A_j, Ã_j)` where `A_j` is the true
/// local matrix on the given degrees of freedom and `Ã_j` the separable
/// matrix of `solver`, which must retain its 1D matrices.
pub fn estimate_local_stability(
    op: &LaplaceOperator,
    dofs: &[usize],
    solver: &LocalSolver,
) -> Result<f64> {
    if dofs.len() > 4096 {
        return Err(Error::SizeGuard {
            n: dofs.len(),
            limit: 4096,
        });
    }
    let a = op.subdomain_matrix(dofs)?;
    let at = solver.kronecker_sum_dense()?;
    let a = DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let e = crate::polybasis::generalized_sym_eig(&a, &at)?;
    Ok(*e.values.last().unwrap())
}
