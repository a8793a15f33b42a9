//! Preconditioned CG and right-preconditioned GMRES with residual
//! histories and fractional iteration counts.

use std::str::FromStr;

use crate::dense::DenseMatrix;
use crate::dgop::LaplaceOperator;
use crate::error::{Error, Result};
use crate::flops::{FlopCounter, Kernel};

pub trait LinearOperator {
    fn n(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()>;
}

impl LinearOperator for LaplaceOperator {
    fn n(&self) -> usize {
        self.n_dofs()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.apply_counted(x, y, Kernel::Operator)
    }
}

impl LinearOperator for DenseMatrix {
    fn n(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.cols() || y.len() != self.rows() {
            return Err(Error::LevelMismatch {
                expected: self.cols(),
                got: x.len(),
            });
        }
        self.matvec(x, y);
        Ok(())
    }
}

impl Preconditioner for DenseMatrix {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        LinearOperator::apply(self, r, z)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        z.copy_from_slice(r);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Cg,
    Gmres,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cg" | "pcg" => Ok(SolverKind::Cg),
            "gmres" => Ok(SolverKind::Gmres),
            _ => Err(Error::Parse(format!("unknown solver '{s}'"))),
        }
    }
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Cg => "cg",
            SolverKind::Gmres => "gmres",
        }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovResult {
    pub converged: bool,
    pub iterations: usize,
    /// Fractional iterations computed from `residuals`.
    pub nu_frac: f64,
    /// `‖r_k‖` for `k = 0..=iterations`.
    pub residuals: Vec<f64>,
    /// `√(r_kᵀ z_k)` for CG (the preconditioned residual norm, a
    /// computable proxy for the energy error) up to the last iterate that
    /// needed a preconditioner application; empty for GMRES.
    pub energy: Vec<f64>,
    pub reduction: f64,
    /// Absolute stopping threshold `‖r_0‖ · reduction`.
    pub tolerance: f64,
}

/// Solver tuning shared by CG and GMRES.
#[derive(Debug, Clone, Copy)]
pub struct KrylovControl {
    pub reduction: f64,
    pub max_iterations: usize,
    /// GMRES restart length.
    pub restart: usize,
}

impl Default for KrylovControl {
    fn default() -> Self {
        Self {
            reduction: 1e-8,
            max_iterations: 200,
            restart: 200,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn count(counter: Option<&FlopCounter>, n: u64) {
    if let Some(c) = counter {
        c.add(Kernel::Krylov, n);
    }
}

/// `ν_frac = ν − 1 + log(e_{ν−1}/ε)/log(e_{ν−1}/e_ν)` with `ε = e_0 ·
/// reduction` and `ν` the first index with `e_ν ≤ ε`. Returns `None` if the
/// history never reaches `ε`.
pub fn fractional_iterations(history: &[f64], reduction: f64) -> Option<f64> {
    let e0 = *history.first()?;
    let eps = e0 * reduction;
    let nu = history.iter().position(|&e| e <= eps)?;
    if nu == 0 {
        return Some(0.0);
    }
    let (prev, cur) = (history[nu - 1], history[nu]);
    if cur == eps {
        return Some(nu as f64);
    }
    if !(cur > 0.0) || !(prev > cur) {
        log::warn!(
            "history not decreasing at the stopping crossing; using integer iteration count"
        );
        return Some(nu as f64);
    }
    Some(nu as f64 - 1.0 + (prev / eps).ln() / (prev / cur).ln())
}

fn finish(converged: bool, residuals: Vec<f64>, energy: Vec<f64>, reduction: f64) -> KrylovResult {
    let iterations = residuals.len() - 1;
    let tolerance = residuals[0] * reduction;
    let nu_frac = if converged {
        fractional_iterations(&residuals, reduction).unwrap_or(iterations as f64)
    } else {
        iterations as f64
    };
    KrylovResult {
        converged,
        iterations,
        nu_frac,
        residuals,
        energy,
        reduction,
        tolerance,
    }
}

/// Preconditioned conjugate gradients from the initial guess in `x`,
/// stopping at `‖r_k‖ ≤ reduction · ‖r_0‖`.
pub fn pcg(
    op: &dyn LinearOperator,
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Preconditioner,
    control: KrylovControl,
    counter: Option<&FlopCounter>,
) -> Result<KrylovResult> {
    let n = op.n();
    if b.len() != n || x.len() != n {
        return Err(Error::LevelMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let nn = n as u64;
    let mut r = vec![0.0; n];
    op.apply(x, &mut r)?;
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    let r0 = norm(&r);
    let mut residuals = vec![r0];
    let mut energy = Vec::new();
    if r0 == 0.0 {
        return Ok(finish(true, residuals, energy, control.reduction));
    }
    let tol = r0 * control.reduction;
    precond.apply(&r, &mut z)?;
    let mut rz = dot(&r, &z);
    energy.push(rz.max(0.0).sqrt());
    let mut p = z.clone();
    count(counter, 4 * nn);
    for _ in 0..control.max_iterations {
        op.apply(&p, &mut q)?;
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::NumericalFailure(format!(
                "CG curvature pᵀAp = {pq:e}"
            )));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let rn = norm(&r);
        residuals.push(rn);
        count(counter, 8 * nn);
        if rn <= tol {
            return Ok(finish(true, residuals, energy, control.reduction));
        }
        precond.apply(&r, &mut z)?;
        let rz_new = dot(&r, &z);
        energy.push(rz_new.max(0.0).sqrt());
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        count(counter, 4 * nn);
    }
    Ok(finish(false, residuals, energy, control.reduction))
}

/// Right-preconditioned restarted GMRES, `A M⁻¹ y = b`, `x = M⁻¹ y`. The
/// monitored quantity is the true residual norm.
pub fn pgmres(
    op: &dyn LinearOperator,
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Preconditioner,
    control: KrylovControl,
    counter: Option<&FlopCounter>,
) -> Result<KrylovResult> {
    let n = op.n();
    if b.len() != n || x.len() != n {
        return Err(Error::LevelMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let restart = control.restart.max(1);
    let nn = n as u64;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    op.apply(x, &mut r)?;
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = norm(&r);
    let mut residuals = vec![r0];
    if r0 == 0.0 {
        return Ok(finish(true, residuals, Vec::new(), control.reduction));
    }
    let tol = r0 * control.reduction;
    let mut total = 0;
    let mut beta = r0;
    loop {
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|a| a / beta).collect()];
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut converged = false;
        let mut j = 0;
        while j < restart && total < control.max_iterations {
            precond.apply(&v[j], &mut z)?;
            op.apply(&z, &mut w)?;
            // modified Gram–Schmidt
            let mut col = vec![0.0; j + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] = hij;
                for k in 0..n {
                    w[k] -= hij * vi[k];
                }
            }
            let hn = norm(&w);
            col[j + 1] = hn;
            count(counter, (4 * (j as u64 + 1) + 3) * nn);
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let rr = col[j].hypot(col[j + 1]);
            let (c, s) = if rr == 0.0 {
                (1.0, 0.0)
            } else {
                (col[j] / rr, col[j + 1] / rr)
            };
            cs.push(c);
            sn.push(s);
            col[j] = rr;
            col[j + 1] = 0.0;
            g.push(-s * g[j]);
            g[j] *= c;
            h.push(col);
            j += 1;
            total += 1;
            let est = g[j].abs();
            residuals.push(est);
            if est <= tol || hn == 0.0 {
                converged = true;
                break;
            }
            v.push(w.iter().map(|a| a / hn).collect());
        }
        // y = R⁻¹ g, x += M⁻¹ V y
        let mut y = vec![0.0; j];
        for i in (0..j).rev() {
            let mut s = g[i];
            for k in i + 1..j {
                s -= h[k][i] * y[k];
            }
            y[i] = s / h[i][i];
        }
        w.iter_mut().for_each(|a| *a = 0.0);
        for (i, yi) in y.iter().enumerate() {
            for k in 0..n {
                w[k] += yi * v[i][k];
            }
        }
        count(counter, 2 * j as u64 * nn);
        precond.apply(&w, &mut z)?;
        for k in 0..n {
            x[k] += z[k];
        }
        // true residual
        op.apply(x, &mut r)?;
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        beta = norm(&r);
        count(counter, 4 * nn);
        if let Some(last) = residuals.last_mut() {
            *last = beta;
        }
        if beta <= tol {
            return Ok(finish(true, residuals, Vec::new(), control.reduction));
        }
        if converged {
            log::warn!(
                "GMRES estimate below tolerance but true residual {beta:e} is not; restarting"
            );
        }
        if total >= control.max_iterations {
            return Ok(finish(false, residuals, Vec::new(), control.reduction));
        }
    }
}

/// Dispatches to [`pcg`] or [`pgmres`].
pub fn solve(
    kind: SolverKind,
    op: &dyn LinearOperator,
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Preconditioner,
    control: KrylovControl,
    counter: Option<&FlopCounter>,
) -> Result<KrylovResult> {
    match kind {
        SolverKind::Cg => pcg(op, b, x, precond, control, counter),
        SolverKind::Gmres => pgmres(op, b, x, precond, control, counter),
    }
}
