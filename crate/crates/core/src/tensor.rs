//! One-dimensional contractions of order-d tensors (sum factorization).
//!
//! Tensors are stored with the first index running fastest, i.e. entry
//! `(i_0, .., i_{d-1})` lives at `i_0 + e_0 (i_1 + e_1 i_2)`. Unused
//! trailing extents are 1.

/// Matrix view used by [`contract`]: row-major `rows x cols`, optionally
/// applied transposed.
#[derive(Debug, Clone, Copy)]
pub struct MatView<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transpose: bool,
}

impl<'a> MatView<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self {
            data,
            rows,
            cols,
            transpose: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            transpose: !self.transpose,
            ..self
        }
    }

    /// Rows of the effective (possibly transposed) matrix.
    #[inline]
    pub fn out_len(&self) -> usize {
        if self.transpose {
            self.cols
        } else {
            self.rows
        }
    }

    #[inline]
    pub fn in_len(&self) -> usize {
        if self.transpose {
            self.rows
        } else {
            self.cols
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        if self.transpose {
            self.data[c * self.cols + r]
        } else {
            self.data[r * self.cols + c]
        }
    }
}

/// Applies `mat` along direction `dir` of the tensor `input` with extents
/// `ext`, writing (or adding, if `accumulate`) into `out`, whose extent in
/// `dir` is `mat.out_len()`. Returns the operation count.
pub fn contract(
    mat: MatView<'_>,
    dir: usize,
    ext: [usize; 3],
    input: &[f64],
    out: &mut [f64],
    accumulate: bool,
) -> u64 {
    let n_in = mat.in_len();
    let n_out = mat.out_len();
    debug_assert_eq!(ext[dir], n_in);
    let stride: usize = ext[..dir].iter().product();
    let outer: usize = ext[dir + 1..].iter().product();
    debug_assert_eq!(input.len(), stride * n_in * outer);
    debug_assert_eq!(out.len(), stride * n_out * outer);
    if stride == 1 {
        for o in 0..outer {
            let src = &input[o * n_in..(o + 1) * n_in];
            let dst = &mut out[o * n_out..(o + 1) * n_out];
            for (r, d) in dst.iter_mut().enumerate() {
                let mut s = 0.0;
                for (c, x) in src.iter().enumerate() {
                    s += mat.at(r, c) * x;
                }
                if accumulate {
                    *d += s;
                } else {
                    *d = s;
                }
            }
        }
    } else {
        for o in 0..outer {
            let src = &input[o * n_in * stride..(o + 1) * n_in * stride];
            let dst = &mut out[o * n_out * stride..(o + 1) * n_out * stride];
            for r in 0..n_out {
                let drow = &mut dst[r * stride..(r + 1) * stride];
                if !accumulate {
                    drow.iter_mut().for_each(|x| *x = 0.0);
                }
                for c in 0..n_in {
                    let a = mat.at(r, c);
                    let srow = &src[c * stride..(c + 1) * stride];
                    for (d, s) in drow.iter_mut().zip(srow) {
                        *d += a * s;
                    }
                }
            }
        }
    }
    (2 * n_in * n_out * stride * outer) as u64
}

/// Extents `[n, .., n, 1, ..]` of an order-`dim` tensor.
pub fn cube_extents(dim: usize, n: usize) -> [usize; 3] {
    let mut e = [1; 3];
    e[..dim].iter_mut().for_each(|x| *x = n);
    e
}

/// Applies the same matrix along every direction `0..dim` of a tensor with
/// equal extents (a Kronecker product `X ⊗ .. ⊗ X`). `buf` must hold at
/// least `max(n_in, n_out)^dim` entries. Returns the operation count.
pub fn kron_same(
    dim: usize,
    mat: MatView<'_>,
    input: &[f64],
    out: &mut [f64],
    buf: &mut Vec<f64>,
) -> u64 {
    let mats = [mat; 3];
    kron_apply(dim, &mats[..dim], input, out, buf)
}

/// Applies `mats[τ]` along direction τ for all τ < dim, i.e. the Kronecker
/// product `mats[dim-1] ⊗ .. ⊗ mats[0]` acting on lexicographic vectors.
pub fn kron_apply(
    dim: usize,
    mats: &[MatView<'_>],
    input: &[f64],
    out: &mut [f64],
    buf: &mut Vec<f64>,
) -> u64 {
    debug_assert_eq!(mats.len(), dim);
    let mut ext = [1usize; 3];
    for t in 0..dim {
        ext[t] = mats[t].in_len();
    }
    let total_out: usize = mats.iter().map(|m| m.out_len()).product();
    debug_assert_eq!(out.len(), total_out);
    if dim == 1 {
        return contract(mats[0], 0, ext, input, out, false);
    }
    let mut flops = 0;
    // Ping-pong between `buf` halves and `out`; the last contraction writes `out`.
    let max_len = (0..=dim)
        .map(|k| {
            (0..dim)
                .map(|t| {
                    if t < k {
                        mats[t].out_len()
                    } else {
                        mats[t].in_len()
                    }
                })
                .product::<usize>()
        })
        .max()
        .unwrap();
    if buf.len() < 2 * max_len {
        buf.resize(2 * max_len, 0.0);
    }
    let (b0, b1) = buf.split_at_mut(max_len);
    let mut cur_is_b0 = true;
    for t in 0..dim {
        let len_in: usize = ext.iter().product();
        let mut next_ext = ext;
        next_ext[t] = mats[t].out_len();
        let len_out: usize = next_ext.iter().product();
        if t == 0 {
            flops += contract(mats[t], t, ext, input, &mut b0[..len_out], false);
            cur_is_b0 = true;
        } else if t + 1 == dim {
            let src = if cur_is_b0 {
                &b0[..len_in]
            } else {
                &b1[..len_in]
            };
            flops += contract(mats[t], t, ext, src, out, false);
        } else if cur_is_b0 {
            flops += contract(mats[t], t, ext, &b0[..len_in], &mut b1[..len_out], false);
            cur_is_b0 = false;
        } else {
            flops += contract(mats[t], t, ext, &b1[..len_in], &mut b0[..len_out], false);
            cur_is_b0 = true;
        }
        ext = next_ext;
    }
    flops
}

/// Applies `mats[τ]` along every direction with `Some` matrix; directions
/// with `None` are left untouched (their extent is kept). With no matrices
/// the input is copied. Returns the operation count.
pub fn apply_dirs(
    ext: [usize; 3],
    mats: [Option<MatView<'_>>; 3],
    input: &[f64],
    out: &mut [f64],
    buf: &mut Vec<f64>,
) -> u64 {
    let dirs: Vec<usize> = (0..3).filter(|&t| mats[t].is_some()).collect();
    if dirs.is_empty() {
        out.copy_from_slice(input);
        return 0;
    }
    let mut max_len = input.len().max(out.len());
    let mut e = ext;
    for &t in &dirs {
        e[t] = mats[t].unwrap().out_len();
        max_len = max_len.max(e.iter().product());
    }
    if buf.len() < 2 * max_len {
        buf.resize(2 * max_len, 0.0);
    }
    let (b0, b1) = buf.split_at_mut(max_len);
    let mut e = ext;
    let mut flops = 0;
    let last = dirs.len() - 1;
    for (step, &t) in dirs.iter().enumerate() {
        let m = mats[t].unwrap();
        let len_in: usize = e.iter().product();
        let mut ne = e;
        ne[t] = m.out_len();
        let len_out: usize = ne.iter().product();
        let dst_len = if step == last { 0 } else { len_out };
        flops += match (step == 0, step % 2 == 1, step == last) {
            (true, _, true) => contract(m, t, e, input, out, false),
            (true, _, false) => contract(m, t, e, input, &mut b0[..dst_len], false),
            (false, true, true) => contract(m, t, e, &b0[..len_in], out, false),
            (false, true, false) => contract(m, t, e, &b0[..len_in], &mut b1[..dst_len], false),
            (false, false, true) => contract(m, t, e, &b1[..len_in], out, false),
            (false, false, false) => contract(m, t, e, &b1[..len_in], &mut b0[..dst_len], false),
        };
        e = ne;
    }
    flops
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;

    #[test]
    fn contract_matches_dense_kronecker_2d() {
        let a = DenseMatrix::from_row_major(2, 3, vec![1.0, 2.0, 0.5, -1.0, 0.0, 3.0]);
        let b = DenseMatrix::from_row_major(3, 2, vec![0.2, 1.0, -0.7, 0.4, 1.5, 2.0]);
        // (b ⊗ a) acts on u with a along the fast index.
        let u: Vec<f64> = (0..3 * 2).map(|i| (i as f64 * 0.37).cos()).collect();
        let dense = b.kron(&a);
        let expected = dense.mul_vec(&u);
        let mut out = vec![0.0; 2 * 3];
        let mut buf = Vec::new();
        let mats = [
            MatView::new(a.as_slice(), 2, 3),
            MatView::new(b.as_slice(), 3, 2),
        ];
        kron_apply(2, &mats, &u, &mut out, &mut buf);
        for (x, y) in out.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn transposed_view_matches_transpose() {
        let a = DenseMatrix::from_row_major(2, 3, vec![1.0, 2.0, 0.5, -1.0, 0.0, 3.0]);
        let at = a.transpose();
        let u: Vec<f64> = (0..4).map(|i| i as f64 + 0.5).collect();
        let ext = [2, 2, 1];
        let mut o1 = vec![0.0; 6];
        let mut o2 = vec![0.0; 6];
        contract(
            MatView::new(a.as_slice(), 2, 3).t(),
            1,
            ext,
            &u,
            &mut o1,
            false,
        );
        contract(
            MatView::new(at.as_slice(), 3, 2),
            1,
            ext,
            &u,
            &mut o2,
            false,
        );
        assert_eq!(o1, o2);
    }
}
