//! One-dimensional building blocks: Gauss–Lobatto Lagrange basis, Gauss
//! quadrature, the univariate interior penalty matrices of cells and vertex
//! patches, and a generalized symmetric-definite eigensolver.

use crate::dense::{backward_substitute_transposed, forward_substitute, DenseMatrix};
use crate::dgop::penalty;
use crate::error::{Error, Result};

/// Legendre polynomial `P_n(x)` and its derivative on `[-1, 1]`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    // (x^2 - 1) P_n' = n (x P_n - P_{n-1})
    let dp = if (x * x - 1.0).abs() < 1e-300 {
        let s = if x > 0.0 {
            1.0
        } else {
            (-1.0f64).powi(n as i32 - 1)
        };
        s * (n * (n + 1)) as f64 / 2.0
    } else {
        n as f64 * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, dp)
}

/// Gauss–Lobatto points of degree `k` on `[0, 1]`: the endpoints and the
/// roots of `P_k'`.
pub fn gauss_lobatto_nodes(k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "polynomial degree must be at least 1".into(),
        ));
    }
    let mut x = vec![0.0; k + 1];
    x[0] = -1.0;
    x[k] = 1.0;
    let kf = k as f64;
    for j in 1..k {
        // Chebyshev–Gauss–Lobatto initial guess, Newton on P_k'.
        let mut t = -(std::f64::consts::PI * j as f64 / kf).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(k, t);
            // (1 - t^2) P'' = 2 t P' - k (k + 1) P
            let ddp = (2.0 * t * dp - kf * (kf + 1.0) * p) / (1.0 - t * t);
            let dt = dp / ddp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[j] = t;
    }
    // Enforce exact symmetry about the midpoint.
    for j in 0..=k / 2 {
        let s = 0.5 * (x[k - j] - x[j]);
        x[j] = -s;
        x[k - j] = s;
    }
    if k % 2 == 0 {
        x[k / 2] = 0.0;
    }
    Ok(x.into_iter().map(|t| 0.5 * (1.0 + t)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature1D {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature1D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss–Legendre rule with `n` points on `[0, 1]`.
pub fn gauss_quadrature(n: usize) -> Result<Quadrature1D> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "quadrature needs at least one point".into(),
        ));
    }
    let nf = n as f64;
    let mut pts = vec![0.0; n];
    let mut wts = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, t);
        // roots come out descending in t
        pts[n - 1 - i] = t;
        wts[n - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    for i in 0..n / 2 {
        let s = 0.5 * (pts[n - 1 - i] - pts[i]);
        pts[i] = -s;
        pts[n - 1 - i] = s;
        let w = 0.5 * (wts[i] + wts[n - 1 - i]);
        wts[i] = w;
        wts[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        pts[n / 2] = 0.0;
    }
    Ok(Quadrature1D {
        points: pts.iter().map(|t| 0.5 * (1.0 + t)).collect(),
        weights: wts.iter().map(|w| 0.5 * w).collect(),
    })
}

/// Value of the `i`-th Lagrange polynomial on `nodes` at `x`.
pub fn lagrange_value(nodes: &[f64], i: usize, x: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &xj)| (x - xj) / (nodes[i] - xj))
        .product()
}

/// Derivative of the `i`-th Lagrange polynomial on `nodes` at `x`.
pub fn lagrange_derivative(nodes: &[f64], i: usize, x: f64) -> f64 {
    let mut sum = 0.0;
    for (m, &xm) in nodes.iter().enumerate() {
        if m == i {
            continue;
        }
        let mut prod = 1.0 / (nodes[i] - xm);
        for (j, &xj) in nodes.iter().enumerate() {
            if j != i && j != m {
                prod *= (x - xj) / (nodes[i] - xj);
            }
        }
        sum += prod;
    }
    sum
}

/// Lagrange basis in Gauss–Lobatto points, tabulated at the points of a
/// Gauss rule with `k + 1` points.
#[derive(Debug, Clone)]
pub struct Basis1D {
    pub degree: usize,
    pub nodes: Vec<f64>,
    pub quad: Quadrature1D,
    /// `values[q * n + i] = φ_i(x_q)`, an `n_q x n` row-major matrix.
    pub values: Vec<f64>,
    /// `grads[q * n + i] = φ_i'(x_q)`.
    pub grads: Vec<f64>,
    /// Collocation derivative on the quadrature points (`n_q x n_q`): maps
    /// point values of a degree-k polynomial to point values of its derivative.
    pub colloc_grads: Vec<f64>,
    /// `boundary_values[p][i] = φ_i(p)` for `p = 0, 1`.
    pub boundary_values: [Vec<f64>; 2],
    /// `boundary_grads[p][i] = φ_i'(p)`.
    pub boundary_grads: [Vec<f64>; 2],
}

impl Basis1D {
    pub fn new(degree: usize) -> Result<Self> {
        let quad = gauss_quadrature(degree + 1)?;
        Self::with_quadrature(degree, quad)
    }

    pub fn with_quadrature(degree: usize, quad: Quadrature1D) -> Result<Self> {
        let nodes = gauss_lobatto_nodes(degree)?;
        let n = degree + 1;
        let nq = quad.len();
        let mut values = vec![0.0; nq * n];
        let mut grads = vec![0.0; nq * n];
        for (q, &x) in quad.points.iter().enumerate() {
            for i in 0..n {
                values[q * n + i] = lagrange_value(&nodes, i, x);
                grads[q * n + i] = lagrange_derivative(&nodes, i, x);
            }
        }
        let colloc_grads = if nq == n {
            // derivative of the Lagrange polynomials through the quadrature points
            let mut c = vec![0.0; nq * nq];
            for (q, &x) in quad.points.iter().enumerate() {
                for j in 0..nq {
                    c[q * nq + j] = lagrange_derivative(&quad.points, j, x);
                }
            }
            c
        } else {
            Vec::new()
        };
        let bv = |p: f64| {
            (0..n)
                .map(|i| lagrange_value(&nodes, i, p))
                .collect::<Vec<_>>()
        };
        let bg = |p: f64| {
            (0..n)
                .map(|i| lagrange_derivative(&nodes, i, p))
                .collect::<Vec<_>>()
        };
        Ok(Self {
            degree,
            boundary_values: [bv(0.0), bv(1.0)],
            boundary_grads: [bg(0.0), bg(1.0)],
            nodes,
            quad,
            values,
            grads,
            colloc_grads,
        })
    }

    pub fn n_dofs_1d(&self) -> usize {
        self.degree + 1
    }

    pub fn n_quad(&self) -> usize {
        self.quad.len()
    }

    pub fn value(&self, i: usize, q: usize) -> f64 {
        self.values[q * self.n_dofs_1d() + i]
    }

    pub fn grad(&self, i: usize, q: usize) -> f64 {
        self.grads[q * self.n_dofs_1d() + i]
    }

    pub fn eval(&self, i: usize, x: f64) -> f64 {
        lagrange_value(&self.nodes, i, x)
    }

    pub fn eval_grad(&self, i: usize, x: f64) -> f64 {
        lagrange_derivative(&self.nodes, i, x)
    }
}

/// Type of one end of a one-dimensional interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Side {
    /// Physical boundary: full trace, `h⁺ = h⁻ = h` in the penalty.
    Boundary,
    /// Interface to a neighbor interval of the given length.
    Interior { neighbor_length: f64 },
}

impl Side {
    fn eta(self) -> f64 {
        match self {
            Side::Boundary => 1.0,
            Side::Interior { .. } => 0.5,
        }
    }
}

/// Blocks of the 1D interior penalty form on a single interval.
#[derive(Debug, Clone)]
pub struct IntervalBlocks {
    pub length: f64,
    pub mass: DenseMatrix,
    pub laplace: DenseMatrix,
    /// `G_{e,p}` for p = 0, 1.
    pub consistency: [DenseMatrix; 2],
    /// `M_p` for p = 0, 1.
    pub point_mass: [DenseMatrix; 2],
    /// Self-coupling Nitsche terms `N_{e,p}`.
    pub nitsche: [DenseMatrix; 2],
    /// `L + N_{e,0} + N_{e,1}`.
    pub stiffness: DenseMatrix,
    pub penalties: [f64; 2],
}

/// Per-direction factors of a separable local problem.
#[derive(Debug, Clone)]
pub struct UnivariateFactors {
    pub mass: DenseMatrix,
    pub stiffness: DenseMatrix,
    /// One entry for a cell, two (`I₊`, `I₋`) for a vertex patch.
    pub intervals: Vec<IntervalBlocks>,
    /// Interface couplings `[A₊₋, A₋₊]` of a patch.
    pub interface: Option<[DenseMatrix; 2]>,
    /// Operation count of the assembly.
    pub flops: u64,
}

impl UnivariateFactors {
    pub fn size(&self) -> usize {
        self.mass.rows()
    }
}

fn check_length(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "interval length must be positive, got {h}"
        )))
    }
}

fn interval_blocks(
    basis: &Basis1D,
    h: f64,
    sides: [Side; 2],
    penalty_hat: f64,
) -> Result<(IntervalBlocks, u64)> {
    check_length(h)?;
    let n = basis.n_dofs_1d();
    let nq = basis.n_quad();
    let k = basis.degree;
    let mut mass = DenseMatrix::zeros(n, n);
    let mut laplace = DenseMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let (mut m, mut l) = (0.0, 0.0);
            for q in 0..nq {
                let w = basis.quad.weights[q];
                m += basis.value(a, q) * basis.value(b, q) * w;
                l += basis.grad(a, q) * basis.grad(b, q) * w;
            }
            mass[(a, b)] = m * h;
            laplace[(a, b)] = l / h;
        }
    }
    let mut flops = (n * n * nq * 8 + 2 * n * n) as u64;
    let mut consistency = [DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n)];
    let mut point_mass = [DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n)];
    let mut nitsche = [DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n)];
    let mut penalties = [0.0; 2];
    let mut stiffness = laplace.clone();
    for p in 0..2 {
        let side = sides[p];
        let eta = side.eta();
        let h_other = match side {
            Side::Boundary => h,
            Side::Interior { neighbor_length } => {
                check_length(neighbor_length)?;
                neighbor_length
            }
        };
        let gamma = penalty(penalty_hat, k, h, h_other)?;
        penalties[p] = gamma;
        let sign = if p == 0 { -1.0 } else { 1.0 };
        let bv = &basis.boundary_values[p];
        let bg = &basis.boundary_grads[p];
        for row in 0..n {
            for col in 0..n {
                consistency[p][(row, col)] = sign * eta / h * bg[col] * bv[row];
                point_mass[p][(row, col)] = bv[col] * bv[row];
            }
        }
        // The penalty self-coupling carries the same trace weight η as the
        // consistency terms: γ/2 on interfaces, γ on the boundary.
        for row in 0..n {
            for col in 0..n {
                nitsche[p][(row, col)] = eta * gamma * point_mass[p][(row, col)]
                    - consistency[p][(row, col)]
                    - consistency[p][(col, row)];
            }
        }
        stiffness.add_scaled(1.0, &nitsche[p]);
        flops += (n * n * 10) as u64;
    }
    Ok((
        IntervalBlocks {
            length: h,
            mass,
            laplace,
            consistency,
            point_mass,
            nitsche,
            stiffness,
            penalties,
        },
        flops,
    ))
}

/// Univariate mass and interior penalty stiffness of one cell direction.
pub fn univariate_cell_factors(
    basis: &Basis1D,
    h: f64,
    sides: [Side; 2],
    penalty_hat: f64,
) -> Result<UnivariateFactors> {
    let (blocks, flops) = interval_blocks(basis, h, sides, penalty_hat)?;
    Ok(UnivariateFactors {
        mass: blocks.mass.clone(),
        stiffness: blocks.stiffness.clone(),
        intervals: vec![blocks],
        interface: None,
        flops,
    })
}

/// Univariate factors of a vertex patch direction: the lower interval `I₊`
/// of length `h_plus` and the upper interval `I₋` of length `h_minus`,
/// joined at an interior interface. `outer` gives the left end of `I₊` and
/// the right end of `I₋`.
pub fn univariate_patch_factors(
    basis: &Basis1D,
    h_plus: f64,
    h_minus: f64,
    outer: [Side; 2],
    penalty_hat: f64,
) -> Result<UnivariateFactors> {
    check_length(h_plus)?;
    check_length(h_minus)?;
    let n = basis.n_dofs_1d();
    let (plus, f1) = interval_blocks(
        basis,
        h_plus,
        [
            outer[0],
            Side::Interior {
                neighbor_length: h_minus,
            },
        ],
        penalty_hat,
    )?;
    let (minus, f2) = interval_blocks(
        basis,
        h_minus,
        [
            Side::Interior {
                neighbor_length: h_plus,
            },
            outer[1],
        ],
        penalty_hat,
    )?;
    let gamma = penalty(penalty_hat, basis.degree, h_plus, h_minus)?;
    let v1 = &basis.boundary_values[1];
    let g1 = &basis.boundary_grads[1];
    let v0 = &basis.boundary_values[0];
    let g0 = &basis.boundary_grads[0];
    // Rows test on I₊ (trace at its right end), columns trial on I₋ (trace at
    // its left end); the interface normal points from I₊ to I₋.
    let a_pm = DenseMatrix::from_fn(n, n, |row, col| {
        -0.5 * gamma * v0[col] * v1[row] - 0.5 / h_minus * g0[col] * v1[row]
            + 0.5 / h_plus * g1[row] * v0[col]
    });
    let a_mp = a_pm.transpose();
    let m = 2 * n;
    let mut mass = DenseMatrix::zeros(m, m);
    let mut stiffness = DenseMatrix::zeros(m, m);
    for r in 0..n {
        for c in 0..n {
            mass[(r, c)] = plus.mass[(r, c)];
            mass[(n + r, n + c)] = minus.mass[(r, c)];
            stiffness[(r, c)] = plus.stiffness[(r, c)];
            stiffness[(n + r, n + c)] = minus.stiffness[(r, c)];
            stiffness[(r, n + c)] = a_pm[(r, c)];
            stiffness[(n + r, c)] = a_mp[(r, c)];
        }
    }
    Ok(UnivariateFactors {
        mass,
        stiffness,
        intervals: vec![plus, minus],
        interface: Some([a_pm, a_mp]),
        flops: f1 + f2 + (n * n * 12) as u64,
    })
}

/// Generalized eigenpairs of a symmetric pencil `(A, M)` with `M` SPD.
#[derive(Debug, Clone)]
pub struct EigenPair1D {
    /// Columns are the eigenvectors `Z`.
    pub vectors: DenseMatrix,
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
}

const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 30;

/// Solves `Zᵀ A Z = Λ`, `Zᵀ M Z = I` by Cholesky reduction and cyclic Jacobi.
pub fn generalized_sym_eig(a: &DenseMatrix, m: &DenseMatrix) -> Result<EigenPair1D> {
    generalized_sym_eig_counted(a, m).map(|(e, _)| e)
}

/// As [`generalized_sym_eig`], also returning the operation count.
pub fn generalized_sym_eig_counted(a: &DenseMatrix, m: &DenseMatrix) -> Result<(EigenPair1D, u64)> {
    let n = a.rows();
    if a.cols() != n || m.rows() != n || m.cols() != n {
        return Err(Error::InvalidArgument(
            "pencil matrices must be square and of equal size".into(),
        ));
    }
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    if a.asymmetry() > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!(
            "stiffness matrix is not symmetric (defect {:e})",
            a.asymmetry()
        )));
    }
    let l = m.cholesky()?;
    let nn = n as u64;
    let mut flops = nn * nn * nn / 3 + 2 * nn * nn * nn;
    // C = L⁻¹ A L⁻ᵀ
    let mut x = a.transpose();
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.copy_from_slice(x.row(j));
        forward_substitute(&l, &mut col);
        x.as_mut_slice()[j * n..(j + 1) * n].copy_from_slice(&col);
    }
    // x holds (L⁻¹A)ᵀ; its transpose has rows of L⁻¹A, i.e. columns of (L⁻¹A)ᵀ
    let c = x.transpose();
    let mut y = c.clone();
    for j in 0..n {
        col.copy_from_slice(c.row(j));
        forward_substitute(&l, &mut col);
        y.as_mut_slice()[j * n..(j + 1) * n].copy_from_slice(&col);
    }
    let mut s = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (y[(i, j)] + y[(j, i)]));
    let (q, jacobi_flops) = jacobi_eigen(&mut s)?;
    flops += jacobi_flops;
    // Z = L⁻ᵀ Q
    let mut z = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            col[i] = q[(i, j)];
        }
        backward_substitute_transposed(&l, &mut col);
        for i in 0..n {
            z[(i, j)] = col[i];
        }
    }
    flops += nn * nn * nn;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[(i, i)].total_cmp(&s[(j, j)]));
    let values = order.iter().map(|&i| s[(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| z[(r, order[c])]);
    Ok((EigenPair1D { vectors, values }, flops))
}

/// Cyclic Jacobi on a symmetric matrix; on return `s` is (numerically)
/// diagonal and the returned `Q` satisfies `S_in = Q S_out Qᵀ`.
fn jacobi_eigen(s: &mut DenseMatrix) -> Result<(DenseMatrix, u64)> {
    let n = s.rows();
    let mut v = DenseMatrix::identity(n);
    let norm = s.frobenius_norm();
    let mut flops = 0u64;
    if n < 2 || norm == 0.0 {
        return Ok((v, flops));
    }
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += s[(i, j)] * s[(i, j)];
                }
            }
        }
        flops += 2 * (n * n) as u64;
        if off.sqrt() <= JACOBI_TOL * norm {
            return Ok((v, flops));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = s[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (s[(q, q)] - s[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let skp = s[(k, p)];
                    let skq = s[(k, q)];
                    s[(k, p)] = c * skp - sn * skq;
                    s[(k, q)] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let spk = s[(p, k)];
                    let sqk = s[(q, k)];
                    s[(p, k)] = c * spk - sn * sqk;
                    s[(q, k)] = sn * spk + c * sqk;
                }
                s[(p, q)] = 0.0;
                s[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
                flops += 18 * n as u64 + 12;
            }
        }
    }
    Err(Error::NumericalFailure(format!(
        "Jacobi iteration did not converge in {JACOBI_MAX_SWEEPS} sweeps"
    )))
}
