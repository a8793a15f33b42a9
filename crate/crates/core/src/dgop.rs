//! Matrix-free symmetric interior penalty (SIPG) Laplacian.
//!
//! Degrees of freedom are cell-wise: cell `c` owns the `(k+1)^d`
//! coefficients `c·(k+1)^d .. (c+1)·(k+1)^d` in lexicographic order of
//! the Gauss–Lobatto Lagrange basis, first index fastest.
//!
//! The operator is evaluated cell by cell. Each cell computes its own rows
//! of the matrix, including the face terms, so interior faces are visited
//! from both sides. Axis-aligned cells use separable 1D mass and stiffness
//! matrices; general multilinear cells use sum factorization with the
//! geometry evaluated on the fly at quadrature points.

use std::sync::Arc;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::flops::{FlopCounter, Kernel};
use crate::mesh::{inverse, Level, Point};
use crate::polybasis::{gauss_quadrature, lagrange_derivative, lagrange_value, Basis1D};
use crate::tensor::{apply_dirs, contract, cube_extents, kron_same, MatView};

/// `γ_e = γ̂ k (k+1) (1/h⁺ + 1/h⁻)`.
pub fn penalty(penalty_hat: f64, k: usize, h_plus: f64, h_minus: f64) -> Result<f64> {
    if !(h_plus > 0.0 && h_minus > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "penalty lengths must be positive, got {h_plus} and {h_minus}"
        )));
    }
    Ok(penalty_hat * (k * (k + 1)) as f64 * (1.0 / h_plus + 1.0 / h_minus))
}

/// Guard for dense assembly.
pub const DENSE_LIMIT: usize = 20_000;

type JacWeights = [[f64; 8]; 3];

/// Derivatives of the multilinear shape functions at `xh`: `w[τ][b]`.
fn jac_weights(dim: usize, xh: [f64; 3]) -> JacWeights {
    let mut w = [[0.0; 8]; 3];
    for (t, wt) in w.iter_mut().enumerate().take(dim) {
        for (b, x) in wt.iter_mut().enumerate().take(1 << dim) {
            let mut p = if (b >> t) & 1 == 1 { 1.0 } else { -1.0 };
            for (s, &xs) in xh.iter().enumerate().take(dim) {
                if s != t {
                    p *= if (b >> s) & 1 == 1 { xs } else { 1.0 - xs };
                }
            }
            *x = p;
        }
    }
    w
}

#[inline]
fn jacobian(dim: usize, w: &JacWeights, v: &[Point; 8]) -> [[f64; 3]; 3] {
    let mut j = [[0.0; 3]; 3];
    for t in 0..dim {
        for b in 0..1 << dim {
            let wb = w[t][b];
            for i in 0..dim {
                j[i][t] += wb * v[b][i];
            }
        }
    }
    for (t, row) in j.iter_mut().enumerate().skip(dim) {
        row[t] = 1.0;
    }
    j
}

/// Decomposes a tensor index with extents `ext` into coordinates.
#[inline]
fn unravel(mut idx: usize, ext: [usize; 3]) -> [usize; 3] {
    let mut out = [0; 3];
    for t in 0..3 {
        out[t] = idx % ext[t];
        idx /= ext[t];
    }
    out
}

fn face_extents(dim: usize, n: usize, tau: usize) -> [usize; 3] {
    let mut e = cube_extents(dim, n);
    e[tau] = 1;
    e
}

/// Scratch space for one operator evaluation.
struct Workspace {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    grads: [Vec<f64>; 3],
    f: [Vec<f64>; 8],
    buf: Vec<f64>,
}

impl Workspace {
    fn new(len: usize) -> Self {
        let v = || vec![0.0; len];
        Self {
            a: v(),
            b: v(),
            c: v(),
            grads: [v(), v(), v()],
            f: [v(), v(), v(), v(), v(), v(), v(), v()],
            buf: Vec::new(),
        }
    }
}

/// The SIPG operator of one mesh level.
#[derive(Debug, Clone)]
pub struct LaplaceOperator {
    level: Arc<Level>,
    dim: usize,
    degree: usize,
    n: usize,
    dofs_per_cell: usize,
    penalty_hat: f64,
    basis: Basis1D,
    mass_ref: Vec<f64>,
    lap_ref: Vec<f64>,
    /// `Sᵀ`, `n × n_q`.
    values_t: Vec<f64>,
    colloc_t: Vec<f64>,
    mapped: bool,
    lengths: Vec<[f64; 3]>,
    face_penalty: Vec<f64>,
    cell_jac: Vec<JacWeights>,
    face_jac: Vec<Vec<JacWeights>>,
    counter: Arc<FlopCounter>,
}

impl LaplaceOperator {
    pub fn new(
        level: Arc<Level>,
        degree: usize,
        penalty_hat: f64,
        counter: Arc<FlopCounter>,
    ) -> Result<Self> {
        let mapped = !level.is_cartesian();
        Self::build(level, degree, penalty_hat, counter, mapped)
    }

    /// Same operator evaluated with the general mapped kernels even on
    /// axis-aligned cells.
    pub fn new_mapped(
        level: Arc<Level>,
        degree: usize,
        penalty_hat: f64,
        counter: Arc<FlopCounter>,
    ) -> Result<Self> {
        Self::build(level, degree, penalty_hat, counter, true)
    }

    fn build(
        level: Arc<Level>,
        degree: usize,
        penalty_hat: f64,
        counter: Arc<FlopCounter>,
        mapped: bool,
    ) -> Result<Self> {
        if !(penalty_hat > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "penalty factor must be positive, got {penalty_hat}"
            )));
        }
        let basis = Basis1D::new(degree)?;
        let dim = level.dim();
        let n = degree + 1;
        let nq = basis.n_quad();
        let mut mass_ref = vec![0.0; n * n];
        let mut lap_ref = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                for q in 0..nq {
                    let w = basis.quad.weights[q];
                    mass_ref[i * n + j] += w * basis.value(i, q) * basis.value(j, q);
                    lap_ref[i * n + j] += w * basis.grad(i, q) * basis.grad(j, q);
                }
            }
        }
        let values_t = DenseMatrix::from_row_major(nq, n, basis.values.clone())
            .transpose()
            .as_slice()
            .to_vec();
        let colloc_t = DenseMatrix::from_row_major(nq, nq, basis.colloc_grads.clone())
            .transpose()
            .as_slice()
            .to_vec();
        let qext = cube_extents(dim, nq);
        let cell_jac = (0..nq.pow(dim as u32))
            .map(|q| {
                let qi = unravel(q, qext);
                let mut xh = [0.0; 3];
                for t in 0..dim {
                    xh[t] = basis.quad.points[qi[t]];
                }
                jac_weights(dim, xh)
            })
            .collect();
        let face_jac = (0..2 * dim)
            .map(|f| {
                let (tau, s) = (f / 2, f % 2);
                let fext = face_extents(dim, nq, tau);
                (0..nq.pow(dim as u32 - 1))
                    .map(|q| {
                        let qi = unravel(q, fext);
                        let mut xh = [0.0; 3];
                        for t in 0..dim {
                            xh[t] = if t == tau {
                                s as f64
                            } else {
                                basis.quad.points[qi[t]]
                            };
                        }
                        jac_weights(dim, xh)
                    })
                    .collect()
            })
            .collect();
        let mut op = Self {
            dim,
            degree,
            n,
            dofs_per_cell: n.pow(dim as u32),
            penalty_hat,
            basis,
            mass_ref,
            lap_ref,
            values_t,
            colloc_t,
            mapped,
            lengths: Vec::new(),
            face_penalty: Vec::new(),
            cell_jac,
            face_jac,
            counter,
            level,
        };
        op.setup_geometry()?;
        Ok(op)
    }

    fn setup_geometry(&mut self) -> Result<()> {
        let level = self.level.clone();
        let dim = self.dim;
        let nc = level.n_cells();
        let nf = 2 * dim;
        let k = self.degree;
        // Length of each cell orthogonal to each of its faces.
        let mut perp = vec![0.0; nc * nf];
        if level.is_cartesian() {
            self.lengths = (0..nc).map(|c| level.box_lengths(c)).collect();
            for c in 0..nc {
                for f in 0..nf {
                    perp[c * nf + f] = self.lengths[c][f / 2];
                }
            }
        } else {
            let w = &self.basis.quad.weights;
            let nq = w.len();
            let qext = cube_extents(dim, nq);
            for c in 0..nc {
                let v = level.cell_vertices(c);
                let mut vol = 0.0;
                for (q, jw) in self.cell_jac.iter().enumerate() {
                    let j = jacobian(dim, jw, &v);
                    let (_, det) = inverse(dim, &j);
                    if !(det > 0.0) {
                        return Err(Error::NonPositiveJacobian { cell: c, det });
                    }
                    let qi = unravel(q, qext);
                    vol += det * (0..dim).map(|t| w[qi[t]]).product::<f64>();
                }
                for f in 0..nf {
                    let tau = f / 2;
                    let fext = face_extents(dim, nq, tau);
                    let mut area = 0.0;
                    for (q, jw) in self.face_jac[f].iter().enumerate() {
                        let j = jacobian(dim, jw, &v);
                        let (inv, det) = inverse(dim, &j);
                        let qi = unravel(q, fext);
                        let wt: f64 = (0..dim).filter(|&t| t != tau).map(|t| w[qi[t]]).product();
                        let nrm = (0..dim)
                            .map(|i| (det * inv[tau][i]).powi(2))
                            .sum::<f64>()
                            .sqrt();
                        area += nrm * wt;
                    }
                    perp[c * nf + f] = vol / area;
                }
            }
            self.lengths = (0..nc)
                .map(|c| {
                    let mut h = [1.0; 3];
                    for t in 0..dim {
                        h[t] = 0.5 * (perp[c * nf + 2 * t] + perp[c * nf + 2 * t + 1]);
                    }
                    h
                })
                .collect();
        }
        let mut pen = vec![0.0; nc * nf];
        for c in 0..nc {
            for f in 0..nf {
                let h = perp[c * nf + f];
                pen[c * nf + f] = match level.neighbor(c, f) {
                    None => penalty(self.penalty_hat, k, h, h)?,
                    Some(nb) => {
                        let hn = perp[nb * nf + (f ^ 1)];
                        // evaluate in a fixed order so both sides agree bitwise
                        let (a, b) = if c < nb { (h, hn) } else { (hn, h) };
                        penalty(self.penalty_hat, k, a, b)?
                    }
                };
            }
        }
        self.face_penalty = pen;
        Ok(())
    }

    pub fn level(&self) -> &Arc<Level> {
        &self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn penalty_hat(&self) -> f64 {
        self.penalty_hat
    }

    pub fn basis(&self) -> &Basis1D {
        &self.basis
    }

    pub fn n_dofs(&self) -> usize {
        self.level.n_cells() * self.dofs_per_cell
    }

    pub fn dofs_per_cell(&self) -> usize {
        self.dofs_per_cell
    }

    pub fn counter(&self) -> &Arc<FlopCounter> {
        &self.counter
    }

    pub fn uses_mapped_kernels(&self) -> bool {
        self.mapped
    }

    /// Penalty `γ_e` seen from face `f` of cell `c`.
    pub fn face_penalty(&self, c: usize, f: usize) -> f64 {
        self.face_penalty[c * 2 * self.dim + f]
    }

    /// Per-direction lengths of cell `c` (edge lengths of a box, averaged
    /// orthogonal lengths otherwise).
    pub fn cell_lengths(&self, c: usize) -> [f64; 3] {
        self.lengths[c]
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_dofs() {
            return Err(Error::LevelMismatch {
                expected: self.n_dofs(),
                got: len,
            });
        }
        Ok(())
    }

    /// `v = A u`.
    pub fn apply(&self, u: &[f64], v: &mut [f64]) -> Result<()> {
        self.apply_counted(u, v, Kernel::Operator)
    }

    /// `v = A u` with the work booked under `kernel`.
    pub fn apply_counted(&self, u: &[f64], v: &mut [f64], kernel: Kernel) -> Result<()> {
        self.check_len(u.len())?;
        self.check_len(v.len())?;
        let mut ws = Workspace::new(
            self.dofs_per_cell
                .max(self.basis.n_quad().pow(self.dim as u32)),
        );
        let nd = self.dofs_per_cell;
        let mut flops = 0;
        for c in 0..self.level.n_cells() {
            flops += self.cell_apply(c, u, &mut v[c * nd..(c + 1) * nd], &mut ws);
        }
        self.counter.add(kernel, flops);
        Ok(())
    }

    /// `r = b − A x`.
    pub fn residual(&self, b: &[f64], x: &[f64], r: &mut [f64]) -> Result<()> {
        self.check_len(b.len())?;
        self.apply_counted(x, r, Kernel::Residual)?;
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        self.counter.add(Kernel::Residual, b.len() as u64);
        Ok(())
    }

    /// `r = b − A x` evaluated on the listed cells only; other entries of
    /// `r` are left untouched.
    pub fn residual_on_cells(
        &self,
        b: &[f64],
        x: &[f64],
        r: &mut [f64],
        cells: &[usize],
    ) -> Result<()> {
        self.check_len(b.len())?;
        self.check_len(x.len())?;
        self.check_len(r.len())?;
        let mut ws = Workspace::new(
            self.dofs_per_cell
                .max(self.basis.n_quad().pow(self.dim as u32)),
        );
        let nd = self.dofs_per_cell;
        let mut flops = 0;
        for &c in cells {
            let rc = &mut r[c * nd..(c + 1) * nd];
            flops += self.cell_apply(c, x, rc, &mut ws);
            for (ri, bi) in rc.iter_mut().zip(&b[c * nd..(c + 1) * nd]) {
                *ri = bi - *ri;
            }
            flops += nd as u64;
        }
        self.counter.add(Kernel::Residual, flops);
        Ok(())
    }

    /// Rows of the listed cells of `A u`; other entries of `v` are left
    /// untouched.
    pub fn apply_on_cells(
        &self,
        u: &[f64],
        v: &mut [f64],
        cells: &[usize],
        kernel: Kernel,
    ) -> Result<()> {
        self.check_len(u.len())?;
        self.check_len(v.len())?;
        let mut ws = Workspace::new(
            self.dofs_per_cell
                .max(self.basis.n_quad().pow(self.dim as u32)),
        );
        let nd = self.dofs_per_cell;
        let mut flops = 0;
        for &c in cells {
            flops += self.cell_apply(c, u, &mut v[c * nd..(c + 1) * nd], &mut ws);
        }
        self.counter.add(kernel, flops);
        Ok(())
    }

    /// Dense restriction `R A Rᵀ` to the given global degrees of freedom,
    /// in the given order.
    pub fn subdomain_matrix(&self, dofs: &[usize]) -> Result<DenseMatrix> {
        let nd = self.dofs_per_cell;
        let mut cells: Vec<usize> = dofs.iter().map(|&i| i / nd).collect();
        cells.sort_unstable();
        cells.dedup();
        let m = dofs.len();
        let mut a = DenseMatrix::zeros(m, m);
        let mut e = vec![0.0; self.n_dofs()];
        let mut col = vec![0.0; self.n_dofs()];
        for (j, &gj) in dofs.iter().enumerate() {
            e[gj] = 1.0;
            self.apply_on_cells(&e, &mut col, &cells, Kernel::Operator)?;
            e[gj] = 0.0;
            for (i, &gi) in dofs.iter().enumerate() {
                a[(i, j)] = col[gi];
            }
        }
        Ok(a)
    }

    /// Rows of cell `c`: `out = (A u)|_c`. Returns the operation count.
    fn cell_apply(&self, c: usize, u: &[f64], out: &mut [f64], ws: &mut Workspace) -> u64 {
        if self.mapped {
            self.mapped_cell(c, u, out, ws)
        } else {
            self.cartesian_cell(c, u, out, ws)
        }
    }

    fn cartesian_cell(&self, c: usize, u: &[f64], out: &mut [f64], ws: &mut Workspace) -> u64 {
        let dim = self.dim;
        let n = self.n;
        let nd = self.dofs_per_cell;
        let uc = &u[c * nd..(c + 1) * nd];
        let h = self.lengths[c];
        let ext = cube_extents(dim, n);
        let mass = MatView::new(&self.mass_ref, n, n);
        let lap = MatView::new(&self.lap_ref, n, n);
        let mut flops = 0;
        out.iter_mut().for_each(|x| *x = 0.0);
        // bulk: Σ_τ (∏_{σ≠τ} h_σ / h_τ) M̂ ⊗ .. ⊗ L̂ ⊗ .. ⊗ M̂
        for tau in 0..dim {
            let mut mats = [None; 3];
            let mut scale = 1.0 / h[tau];
            for (t, m) in mats.iter_mut().enumerate().take(dim) {
                if t == tau {
                    *m = Some(lap);
                } else {
                    *m = Some(mass);
                    scale *= h[t];
                }
            }
            flops += apply_dirs(ext, mats, uc, &mut ws.a[..nd], &mut ws.buf);
            for (o, a) in out.iter_mut().zip(&ws.a[..nd]) {
                *o += scale * a;
            }
            flops += 2 * nd as u64;
        }
        // faces
        let nt = nd / n;
        for f in 0..2 * dim {
            let (tau, s) = (f / 2, f % 2);
            let fext = face_extents(dim, n, tau);
            let nb = self.level.neighbor(c, f);
            let eta = if nb.is_some() { 0.5 } else { 1.0 };
            let gamma = self.face_penalty(c, f);
            let sign = if s == 1 { 1.0 } else { -1.0 };
            let bv = MatView::new(&self.basis.boundary_values[s], 1, n);
            let bg = MatView::new(&self.basis.boundary_grads[s], 1, n);
            // j = u_own - u_nb (a), normal flux sum (b)
            flops += contract(bv, tau, ext, uc, &mut ws.a[..nt], false);
            flops += contract(bg, tau, ext, uc, &mut ws.b[..nt], false);
            let inv_h = 1.0 / h[tau];
            for x in ws.b[..nt].iter_mut() {
                *x *= inv_h;
            }
            if let Some(nb) = nb {
                let un = &u[nb * nd..(nb + 1) * nd];
                let so = 1 - s;
                let bvn = MatView::new(&self.basis.boundary_values[so], 1, n);
                let bgn = MatView::new(&self.basis.boundary_grads[so], 1, n);
                flops += contract(bvn, tau, ext, un, &mut ws.c[..nt], false);
                for (a, cc) in ws.a[..nt].iter_mut().zip(&ws.c[..nt]) {
                    *a -= cc;
                }
                flops += contract(bgn, tau, ext, un, &mut ws.c[..nt], false);
                let inv_hn = 1.0 / self.lengths[nb][tau];
                for (b, cc) in ws.b[..nt].iter_mut().zip(&ws.c[..nt]) {
                    *b += inv_hn * cc;
                }
                flops += 4 * nt as u64;
            }
            // value coefficient ηγ j − η n·(∇u⁺ + ∇u⁻), gradient coefficient −η sign j / h
            for q in 0..nt {
                let j = ws.a[q];
                ws.f[0][q] = eta * gamma * j - eta * sign * ws.b[q];
                ws.f[1][q] = -eta * sign * inv_h * j;
            }
            flops += 7 * nt as u64;
            // tangential mass
            let mut mats = [None; 3];
            let mut scale = 1.0;
            for (t, m) in mats.iter_mut().enumerate().take(dim) {
                if t != tau {
                    *m = Some(mass);
                    scale *= h[t];
                }
            }
            let (f0, rest) = ws.f.split_at_mut(1);
            flops += apply_dirs(fext, mats, &f0[0][..nt], &mut ws.a[..nt], &mut ws.buf);
            flops += apply_dirs(fext, mats, &rest[0][..nt], &mut ws.b[..nt], &mut ws.buf);
            for q in 0..nt {
                ws.a[q] *= scale;
                ws.b[q] *= scale;
            }
            flops += contract(bv.t(), tau, fext, &ws.a[..nt], out, true);
            flops += contract(bg.t(), tau, fext, &ws.b[..nt], out, true);
            flops += 2 * nt as u64;
        }
        flops
    }

    fn mapped_cell(&self, c: usize, u: &[f64], out: &mut [f64], ws: &mut Workspace) -> u64 {
        let dim = self.dim;
        let n = self.n;
        let nq = self.basis.n_quad();
        let nd = self.dofs_per_cell;
        let nqd = nq.pow(dim as u32);
        let uc = &u[c * nd..(c + 1) * nd];
        let v = self.level.cell_vertices(c);
        let w = &self.basis.quad.weights;
        let s_mat = MatView::new(&self.basis.values, nq, n);
        let st_mat = MatView::new(&self.values_t, n, nq);
        let cmat = MatView::new(&self.basis.colloc_grads, nq, nq);
        let ct_mat = MatView::new(&self.colloc_t, nq, nq);
        let qext = cube_extents(dim, nq);
        let mut flops = 0;

        // bulk
        flops += kron_same(dim, s_mat, uc, &mut ws.a[..nqd], &mut ws.buf);
        for t in 0..dim {
            flops += contract(cmat, t, qext, &ws.a[..nqd], &mut ws.grads[t][..nqd], false);
        }
        for q in 0..nqd {
            let j = jacobian(dim, &self.cell_jac[q], &v);
            let (inv, det) = inverse(dim, &j);
            let qi = unravel(q, qext);
            let wq: f64 = (0..dim).map(|t| w[qi[t]]).product::<f64>() * det;
            // physical gradient J⁻ᵀ ĝ, then back with J⁻¹
            let mut g = [0.0; 3];
            for i in 0..dim {
                for t in 0..dim {
                    g[i] += inv[t][i] * ws.grads[t][q];
                }
            }
            for t in 0..dim {
                let mut s = 0.0;
                for i in 0..dim {
                    s += inv[t][i] * g[i];
                }
                ws.f[t][q] = wq * s;
            }
        }
        flops += (nqd * (dim * dim * 8 + 40)) as u64;
        ws.b[..nqd].iter_mut().for_each(|x| *x = 0.0);
        for t in 0..dim {
            flops += contract(ct_mat, t, qext, &ws.f[t][..nqd], &mut ws.b[..nqd], true);
        }
        flops += kron_same(dim, st_mat, &ws.b[..nqd], out, &mut ws.buf);

        // faces
        let nt = nd / n;
        let ntq = nqd / nq;
        for f in 0..2 * dim {
            let (tau, s) = (f / 2, f % 2);
            let fext = face_extents(dim, n, tau);
            let fqext = face_extents(dim, nq, tau);
            let nb = self.level.neighbor(c, f);
            let eta = if nb.is_some() { 0.5 } else { 1.0 };
            let gamma = self.face_penalty(c, f);
            let sign = if s == 1 { 1.0 } else { -1.0 };
            let mut tang = [None; 3];
            let mut tang_t = [None; 3];
            for t in 0..dim {
                if t != tau {
                    tang[t] = Some(s_mat);
                    tang_t[t] = Some(st_mat);
                }
            }
            // own traces: f[0] values, f[1..] reference gradient components
            flops += self.face_traces(uc, s, tau, fext, fqext, tang, ws, 0);
            let vn = nb.map(|nb| self.level.cell_vertices(nb));
            if let Some(nb) = nb {
                let un = &u[nb * nd..(nb + 1) * nd];
                flops += self.face_traces(un, 1 - s, tau, fext, fqext, tang, ws, 4);
            }
            for q in 0..ntq {
                let j = jacobian(dim, &self.face_jac[f][q], &v);
                let (inv, det) = inverse(dim, &j);
                let qi = unravel(q, fqext);
                let wt: f64 = (0..dim).filter(|&t| t != tau).map(|t| w[qi[t]]).product();
                let mut nvec = [0.0; 3];
                for i in 0..dim {
                    nvec[i] = sign * det * inv[tau][i] * wt;
                }
                let da = (nvec[0] * nvec[0] + nvec[1] * nvec[1] + nvec[2] * nvec[2]).sqrt();
                let mut a_own = [0.0; 3];
                for t in 0..dim {
                    for i in 0..dim {
                        a_own[t] += inv[t][i] * nvec[i];
                    }
                }
                let mut jump = ws.f[0][q];
                let mut flux = 0.0;
                for t in 0..dim {
                    flux += a_own[t] * ws.f[1 + t][q];
                }
                if let Some(vn) = &vn {
                    let jn = jacobian(dim, &self.face_jac[f ^ 1][q], vn);
                    let (invn, _) = inverse(dim, &jn);
                    jump -= ws.f[4][q];
                    for t in 0..dim {
                        let mut a = 0.0;
                        for i in 0..dim {
                            a += invn[t][i] * nvec[i];
                        }
                        flux += a * ws.f[5 + t][q];
                    }
                }
                ws.a[q] = eta * gamma * jump * da - eta * flux;
                for t in 0..dim {
                    ws.grads[t][q] = -eta * jump * a_own[t];
                }
            }
            flops += (ntq * (dim * dim * 12 + 60)) as u64;
            // tangential derivative test functions via collocation
            for t in 0..dim {
                if t != tau {
                    flops += contract(
                        ct_mat,
                        t,
                        fqext,
                        &ws.grads[t][..ntq],
                        &mut ws.a[..ntq],
                        true,
                    );
                }
            }
            flops += apply_dirs(fqext, tang_t, &ws.a[..ntq], &mut ws.b[..nt], &mut ws.buf);
            let bv = MatView::new(&self.basis.boundary_values[s], 1, n);
            flops += contract(bv.t(), tau, fext, &ws.b[..nt], out, true);
            flops += apply_dirs(
                fqext,
                tang_t,
                &ws.grads[tau][..ntq],
                &mut ws.b[..nt],
                &mut ws.buf,
            );
            let bg = MatView::new(&self.basis.boundary_grads[s], 1, n);
            flops += contract(bg.t(), tau, fext, &ws.b[..nt], out, true);
        }
        flops
    }

    /// Values and reference gradients of the cell polynomial `uc` at the
    /// quadrature points of face `(tau, s)`, written to `ws.f[slot]` and
    /// `ws.f[slot + 1 + σ]`.
    #[allow(clippy::too_many_arguments)]
    fn face_traces(
        &self,
        uc: &[f64],
        s: usize,
        tau: usize,
        fext: [usize; 3],
        fqext: [usize; 3],
        tang: [Option<MatView<'_>>; 3],
        ws: &mut Workspace,
        slot: usize,
    ) -> u64 {
        let dim = self.dim;
        let n = self.n;
        let nq = self.basis.n_quad();
        let nt = fext.iter().product::<usize>();
        let ntq = fqext.iter().product::<usize>();
        let ext = cube_extents(dim, n);
        let cmat = MatView::new(&self.basis.colloc_grads, nq, nq);
        let bv = MatView::new(&self.basis.boundary_values[s], 1, n);
        let bg = MatView::new(&self.basis.boundary_grads[s], 1, n);
        let mut flops = contract(bv, tau, ext, uc, &mut ws.c[..nt], false);
        flops += apply_dirs(fext, tang, &ws.c[..nt], &mut ws.f[slot][..ntq], &mut ws.buf);
        flops += contract(bg, tau, ext, uc, &mut ws.c[..nt], false);
        flops += apply_dirs(
            fext,
            tang,
            &ws.c[..nt],
            &mut ws.f[slot + 1 + tau][..ntq],
            &mut ws.buf,
        );
        for t in 0..dim {
            if t != tau {
                let (lo, hi) = ws.f.split_at_mut(slot + 1);
                flops += contract(cmat, t, fqext, &lo[slot][..ntq], &mut hi[t][..ntq], false);
            }
        }
        flops
    }

    /// Right-hand side `∫ f v + ∫_∂Ω (γ_e g v − g ∂ₙ v)`, integrated with
    /// `k + 3` Gauss points per direction.
    pub fn compute_rhs(
        &self,
        f: &dyn Fn(Point) -> f64,
        g: &dyn Fn(Point) -> f64,
    ) -> Result<Vec<f64>> {
        let dim = self.dim;
        let n = self.n;
        let nd = self.dofs_per_cell;
        let rb = Basis1D::with_quadrature(self.degree, gauss_quadrature(self.degree + 3)?)?;
        let nr = rb.n_quad();
        let nrd = nr.pow(dim as u32);
        let rext = cube_extents(dim, nr);
        let rt = DenseMatrix::from_row_major(nr, n, rb.values.clone()).transpose();
        let rt_view = MatView::new(rt.as_slice(), n, nr);
        let mut rhs = vec![0.0; self.n_dofs()];
        let mut wq = vec![0.0; nrd];
        let mut buf = Vec::new();
        let jw: Vec<JacWeights> = (0..nrd)
            .map(|q| {
                let qi = unravel(q, rext);
                let mut xh = [0.0; 3];
                for t in 0..dim {
                    xh[t] = rb.quad.points[qi[t]];
                }
                jac_weights(dim, xh)
            })
            .collect();
        for c in 0..self.level.n_cells() {
            let v = self.level.cell_vertices(c);
            for (q, wqv) in wq.iter_mut().enumerate() {
                let qi = unravel(q, rext);
                let mut xh = [0.0; 3];
                let mut w = 1.0;
                for t in 0..dim {
                    xh[t] = rb.quad.points[qi[t]];
                    w *= rb.quad.weights[qi[t]];
                }
                let det = inverse(dim, &jacobian(dim, &jw[q], &v)).1;
                let x = crate::mesh::multilinear_map(dim, &v, xh);
                *wqv = f(x) * det * w;
            }
            kron_same(dim, rt_view, &wq, &mut rhs[c * nd..(c + 1) * nd], &mut buf);
            for face in 0..2 * dim {
                if self.level.neighbor(c, face).is_some() {
                    continue;
                }
                let (tau, s) = (face / 2, face % 2);
                let gamma = self.face_penalty(c, face);
                let sign = if s == 1 { 1.0 } else { -1.0 };
                let fext = face_extents(dim, nr, tau);
                for q in 0..fext.iter().product::<usize>() {
                    let qi = unravel(q, fext);
                    let mut xh = [0.0; 3];
                    let mut wt = 1.0;
                    for t in 0..dim {
                        if t == tau {
                            xh[t] = s as f64;
                        } else {
                            xh[t] = rb.quad.points[qi[t]];
                            wt *= rb.quad.weights[qi[t]];
                        }
                    }
                    let j = jacobian(dim, &jac_weights(dim, xh), &v);
                    let (inv, det) = inverse(dim, &j);
                    let mut nvec = [0.0; 3];
                    for i in 0..dim {
                        nvec[i] = sign * det * inv[tau][i] * wt;
                    }
                    let da = nvec.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let mut a = [0.0; 3];
                    for t in 0..dim {
                        for i in 0..dim {
                            a[t] += inv[t][i] * nvec[i];
                        }
                    }
                    let x = crate::mesh::multilinear_map(dim, &v, xh);
                    let gv = g(x);
                    let rc = &mut rhs[c * nd..(c + 1) * nd];
                    for (i, r) in rc.iter_mut().enumerate() {
                        let ii = unravel(i, cube_extents(dim, n));
                        let (val, grad) = tensor_shape(&rb, dim, ii, xh);
                        let dphi: f64 = (0..dim).map(|t| a[t] * grad[t]).sum();
                        *r += gamma * gv * val * da - gv * dphi;
                    }
                }
            }
        }
        Ok(rhs)
    }

    /// Nodal interpolant of `f` (coefficients are values at the mapped
    /// Gauss–Lobatto points).
    pub fn interpolate(&self, f: &dyn Fn(Point) -> f64) -> Vec<f64> {
        let dim = self.dim;
        let nd = self.dofs_per_cell;
        let ext = cube_extents(dim, self.n);
        let mut out = vec![0.0; self.n_dofs()];
        for c in 0..self.level.n_cells() {
            let v = self.level.cell_vertices(c);
            for i in 0..nd {
                let ii = unravel(i, ext);
                let mut xh = [0.0; 3];
                for t in 0..dim {
                    xh[t] = self.basis.nodes[ii[t]];
                }
                out[c * nd + i] = f(crate::mesh::multilinear_map(dim, &v, xh));
            }
        }
        out
    }

    /// `‖u_h − u‖_{L²}` with `k + 3` Gauss points per direction.
    pub fn l2_error(&self, uh: &[f64], exact: &dyn Fn(Point) -> f64) -> Result<f64> {
        self.check_len(uh.len())?;
        let dim = self.dim;
        let n = self.n;
        let nd = self.dofs_per_cell;
        let rb = Basis1D::with_quadrature(self.degree, gauss_quadrature(self.degree + 3)?)?;
        let nr = rb.n_quad();
        let nrd = nr.pow(dim as u32);
        let rext = cube_extents(dim, nr);
        let sv = MatView::new(&rb.values, nr, n);
        let mut vals = vec![0.0; nrd];
        let mut buf = Vec::new();
        let mut sum = 0.0;
        for c in 0..self.level.n_cells() {
            let v = self.level.cell_vertices(c);
            kron_same(dim, sv, &uh[c * nd..(c + 1) * nd], &mut vals, &mut buf);
            for (q, val) in vals.iter().enumerate() {
                let qi = unravel(q, rext);
                let mut xh = [0.0; 3];
                let mut w = 1.0;
                for t in 0..dim {
                    xh[t] = rb.quad.points[qi[t]];
                    w *= rb.quad.weights[qi[t]];
                }
                let det = inverse(dim, &jacobian(dim, &jac_weights(dim, xh), &v)).1;
                let e = val - exact(crate::mesh::multilinear_map(dim, &v, xh));
                sum += e * e * det * w;
            }
        }
        Ok(sum.sqrt())
    }

    /// Dense matrix by applying the operator to unit vectors.
    pub fn assemble_dense(&self) -> Result<DenseMatrix> {
        let nn = self.n_dofs();
        if nn > DENSE_LIMIT {
            return Err(Error::SizeGuard {
                n: nn,
                limit: DENSE_LIMIT,
            });
        }
        let mut a = DenseMatrix::zeros(nn, nn);
        let mut e = vec![0.0; nn];
        let mut col = vec![0.0; nn];
        for j in 0..nn {
            e[j] = 1.0;
            self.apply(&e, &mut col)?;
            e[j] = 0.0;
            for i in 0..nn {
                a[(i, j)] = col[i];
            }
        }
        Ok(a)
    }
}

/// Value and reference gradient of the tensor basis function with
/// multi-index `ii` at `xh`.
fn tensor_shape(basis: &Basis1D, dim: usize, ii: [usize; 3], xh: [f64; 3]) -> (f64, [f64; 3]) {
    let mut vals = [1.0; 3];
    let mut ders = [0.0; 3];
    for t in 0..dim {
        vals[t] = lagrange_value(&basis.nodes, ii[t], xh[t]);
        ders[t] = lagrange_derivative(&basis.nodes, ii[t], xh[t]);
    }
    let val = vals[..dim].iter().product();
    let mut grad = [0.0; 3];
    for (t, g) in grad.iter_mut().enumerate().take(dim) {
        *g = (0..dim)
            .map(|s| if s == t { ders[s] } else { vals[s] })
            .product();
    }
    (val, grad)
}

/// Sum-factorized interpolation of cell coefficients to the tensor Gauss
/// points.
pub fn interpolate_to_quad(basis: &Basis1D, dim: usize, u: &[f64], out: &mut [f64]) -> u64 {
    let mut buf = Vec::new();
    kron_same(
        dim,
        MatView::new(&basis.values, basis.n_quad(), basis.n_dofs_1d()),
        u,
        out,
        &mut buf,
    )
}

/// Sum-factorized `Σ_q φ_i(x_q) W_q`.
pub fn integrate_against_basis(basis: &Basis1D, dim: usize, w: &[f64], out: &mut [f64]) -> u64 {
    let mut buf = Vec::new();
    kron_same(
        dim,
        MatView::new(&basis.values, basis.n_quad(), basis.n_dofs_1d()).t(),
        w,
        out,
        &mut buf,
    )
}

/// Dense SIPG matrix by direct quadrature of the bilinear form, written
/// literally with the `1/√2` averages. Independent of the matrix-free
/// kernels; used as a reference.
pub fn assemble_dense_quadrature(
    level: &Level,
    degree: usize,
    penalty_hat: f64,
) -> Result<DenseMatrix> {
    let dim = level.dim();
    let n = degree + 1;
    let nd = n.pow(dim as u32);
    let nn = level.n_cells() * nd;
    if nn > DENSE_LIMIT {
        return Err(Error::SizeGuard {
            n: nn,
            limit: DENSE_LIMIT,
        });
    }
    let basis = Basis1D::new(degree)?;
    let quad = gauss_quadrature(degree + 1)?;
    let nq = quad.len();
    let ext = cube_extents(dim, n);
    let mut a = DenseMatrix::zeros(nn, nn);

    let jac_at = |c: usize, xh: [f64; 3]| {
        let v = level.cell_vertices(c);
        crate::mesh::multilinear_jacobian(dim, &v, xh)
    };
    // physical value and gradient of basis function i of cell c at xh
    let shape = |c: usize, i: usize, xh: [f64; 3]| {
        let (val, g) = tensor_shape(&basis, dim, unravel(i, ext), xh);
        let (inv, _) = inverse(dim, &jac_at(c, xh));
        let mut pg = [0.0; 3];
        for k in 0..dim {
            for t in 0..dim {
                pg[k] += inv[t][k] * g[t];
            }
        }
        (val, pg)
    };
    let cell_volume = |c: usize| {
        let mut vol = 0.0;
        for q in 0..nq.pow(dim as u32) {
            let qi = unravel(q, cube_extents(dim, nq));
            let mut xh = [0.0; 3];
            let mut w = 1.0;
            for t in 0..dim {
                xh[t] = quad.points[qi[t]];
                w *= quad.weights[qi[t]];
            }
            vol += inverse(dim, &jac_at(c, xh)).1 * w;
        }
        vol
    };
    // physical face points of face f of cell c: (reference point, unit normal, dA)
    let face_points = |c: usize, f: usize| {
        let (tau, s) = (f / 2, f % 2);
        let fext = face_extents(dim, nq, tau);
        (0..fext.iter().product::<usize>())
            .map(|q| {
                let qi = unravel(q, fext);
                let mut xh = [0.0; 3];
                let mut w = 1.0;
                for t in 0..dim {
                    if t == tau {
                        xh[t] = s as f64;
                    } else {
                        xh[t] = quad.points[qi[t]];
                        w *= quad.weights[qi[t]];
                    }
                }
                let (inv, det) = inverse(dim, &jac_at(c, xh));
                let sign = if s == 1 { 1.0 } else { -1.0 };
                let mut nv = [0.0; 3];
                for i in 0..dim {
                    nv[i] = sign * det * inv[tau][i];
                }
                let norm = nv.iter().map(|x| x * x).sum::<f64>().sqrt();
                nv.iter_mut().for_each(|x| *x /= norm);
                (xh, nv, norm * w)
            })
            .collect::<Vec<_>>()
    };
    let face_area = |c: usize, f: usize| face_points(c, f).iter().map(|p| p.2).sum::<f64>();

    for c in 0..level.n_cells() {
        // bulk
        for q in 0..nq.pow(dim as u32) {
            let qi = unravel(q, cube_extents(dim, nq));
            let mut xh = [0.0; 3];
            let mut w = 1.0;
            for t in 0..dim {
                xh[t] = quad.points[qi[t]];
                w *= quad.weights[qi[t]];
            }
            let det = inverse(dim, &jac_at(c, xh)).1;
            let g: Vec<[f64; 3]> = (0..nd).map(|i| shape(c, i, xh).1).collect();
            for i in 0..nd {
                for j in 0..nd {
                    let dot: f64 = (0..dim).map(|k| g[i][k] * g[j][k]).sum();
                    a[(c * nd + i, c * nd + j)] += dot * det * w;
                }
            }
        }
        let vol = cell_volume(c);
        for f in 0..2 * dim {
            let tau = f / 2;
            let nb = level.neighbor(c, f);
            match nb {
                None => {
                    let h = vol / face_area(c, f);
                    let gamma = penalty(penalty_hat, degree, h, h)?;
                    for (xh, nv, da) in face_points(c, f) {
                        let sh: Vec<(f64, [f64; 3])> = (0..nd).map(|i| shape(c, i, xh)).collect();
                        for i in 0..nd {
                            for j in 0..nd {
                                let (vi, gi) = sh[i];
                                let (uj, gj) = sh[j];
                                let dn_u: f64 = (0..dim).map(|k| gj[k] * nv[k]).sum();
                                let dn_v: f64 = (0..dim).map(|k| gi[k] * nv[k]).sum();
                                a[(c * nd + i, c * nd + j)] +=
                                    (gamma * uj * vi - dn_u * vi - uj * dn_v) * da;
                            }
                        }
                    }
                }
                Some(nb) if f % 2 == 1 => {
                    // interior face visited once, from the lower cell
                    let hp = vol / face_area(c, f);
                    let hm = cell_volume(nb) / face_area(nb, f ^ 1);
                    let (h1, h2) = if c < nb { (hp, hm) } else { (hm, hp) };
                    let gamma = penalty(penalty_hat, degree, h1, h2)?;
                    let r2 = std::f64::consts::FRAC_1_SQRT_2;
                    for (xh, nv, da) in face_points(c, f) {
                        let mut xn = xh;
                        xn[tau] = 0.0;
                        // traces of all 2·nd basis functions: (cell, value, gradient, normal sign)
                        let mut tr = Vec::with_capacity(2 * nd);
                        for i in 0..nd {
                            let (val, g) = shape(c, i, xh);
                            tr.push((c * nd + i, val, g, 1.0));
                        }
                        for i in 0..nd {
                            let (val, g) = shape(nb, i, xn);
                            tr.push((nb * nd + i, val, g, -1.0));
                        }
                        for &(ri, vi, gvi, si) in &tr {
                            for &(rj, uj, guj, sj) in &tr {
                                // {u n}·{v n}, {∇u}·{v n}, {u n}·{∇v}
                                let mut un_vn = 0.0;
                                let mut gu_vn = 0.0;
                                let mut un_gv = 0.0;
                                for k in 0..dim {
                                    let un = r2 * sj * uj * nv[k];
                                    let vn = r2 * si * vi * nv[k];
                                    un_vn += un * vn;
                                    gu_vn += r2 * guj[k] * vn;
                                    un_gv += un * r2 * gvi[k];
                                }
                                a[(ri, rj)] += (gamma * un_vn - gu_vn - un_gv) * da;
                            }
                        }
                    }
                }
                Some(_) => {}
            }
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty(1.0, 3, 1.0, 1.0).unwrap(), 24.0);
        assert_eq!(penalty(4.0, 3, 1.0, 1.0).unwrap(), 96.0);
        let r = penalty(1.0, 7, 0.5, 0.5).unwrap() / penalty(1.0, 3, 0.5, 0.5).unwrap();
        assert!((r - 56.0 / 12.0).abs() < 1e-14);
        assert!(penalty(1.0, 3, 0.0, 1.0).is_err());
    }

    #[test]
    fn interpolate_constant_and_linear() {
        let b = Basis1D::new(3).unwrap();
        let u = vec![1.0; 16];
        let mut out = vec![0.0; 16];
        interpolate_to_quad(&b, 2, &u, &mut out);
        assert!(out.iter().all(|x| (x - 1.0).abs() < 1e-14));
        let b1 = Basis1D::new(1).unwrap();
        let mut o = vec![0.0; 2];
        interpolate_to_quad(&b1, 1, &[0.0, 1.0], &mut o);
        for (x, p) in o.iter().zip(&b1.quad.points) {
            assert!((x - p).abs() < 1e-15);
        }
    }
}
