//! Nested structured meshes of the unit box with multilinear cells.
//!
//! A level with `n` cells per direction stores its `(n+1)^d` vertices in
//! lexicographic order; cells and vertices are addressed by integer
//! coordinates. Cell-local vertex `b` has bit `τ` set when it sits at the
//! upper end of direction `τ`. Faces of a cell are numbered `2τ + s` where
//! `s = 0` is the lower and `s = 1` the upper face in direction `τ`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// One mesh level.
#[derive(Debug, Clone)]
pub struct Level {
    dim: usize,
    n: usize,
    vertices: Vec<Point>,
    cartesian: bool,
}

fn pow(n: usize, d: usize) -> usize {
    n.pow(d as u32)
}

impl Level {
    /// Uniform grid of the unit box with `n` cells per direction.
    pub fn cartesian(dim: usize, n: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "unsupported dimension {dim}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument(
                "need at least one cell per direction".into(),
            ));
        }
        let nv = n + 1;
        let h = 1.0 / n as f64;
        let vertices = (0..pow(nv, dim))
            .map(|v| {
                let mut p = [0.0; 3];
                let mut r = v;
                for x in p.iter_mut().take(dim) {
                    *x = (r % nv) as f64 * h;
                    r /= nv;
                }
                p
            })
            .collect();
        Ok(Self {
            dim,
            n,
            vertices,
            cartesian: true,
        })
    }

    fn from_vertices(dim: usize, n: usize, vertices: Vec<Point>) -> Self {
        let mut level = Self {
            dim,
            n,
            vertices,
            cartesian: false,
        };
        level.cartesian = (0..level.n_cells()).all(|c| level.cell_is_box(c));
        level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_dim(&self) -> usize {
        self.n
    }

    pub fn n_cells(&self) -> usize {
        pow(self.n, self.dim)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// True if every cell is an axis-aligned box.
    pub fn is_cartesian(&self) -> bool {
        self.cartesian
    }

    pub fn cell_coords(&self, c: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut r = c;
        for x in out.iter_mut().take(self.dim) {
            *x = r % self.n;
            r /= self.n;
        }
        out
    }

    pub fn cell_index(&self, coords: [usize; 3]) -> usize {
        (0..self.dim)
            .rev()
            .fold(0, |acc, t| acc * self.n + coords[t])
    }

    pub fn vertex_coords(&self, v: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut r = v;
        for x in out.iter_mut().take(self.dim) {
            *x = r % (self.n + 1);
            r /= self.n + 1;
        }
        out
    }

    pub fn vertex_index(&self, coords: [usize; 3]) -> usize {
        (0..self.dim)
            .rev()
            .fold(0, |acc, t| acc * (self.n + 1) + coords[t])
    }

    pub fn is_interior_vertex(&self, v: usize) -> bool {
        let c = self.vertex_coords(v);
        (0..self.dim).all(|t| c[t] > 0 && c[t] < self.n)
    }

    /// Global indices of the `2^d` vertices of cell `c`.
    pub fn cell_vertex_ids(&self, c: usize) -> Vec<usize> {
        let cc = self.cell_coords(c);
        (0..1usize << self.dim)
            .map(|b| {
                let mut vc = cc;
                for (t, x) in vc.iter_mut().enumerate().take(self.dim) {
                    *x += (b >> t) & 1;
                }
                self.vertex_index(vc)
            })
            .collect()
    }

    /// Vertex coordinates of cell `c`; entries beyond `2^d` are unused.
    pub fn cell_vertices(&self, c: usize) -> [Point; 8] {
        let cc = self.cell_coords(c);
        let mut out = [[0.0; 3]; 8];
        for (b, o) in out.iter_mut().enumerate().take(1 << self.dim) {
            let mut vc = cc;
            for (t, x) in vc.iter_mut().enumerate().take(self.dim) {
                *x += (b >> t) & 1;
            }
            *o = self.vertices[self.vertex_index(vc)];
        }
        out
    }

    /// Neighbor across face `2τ + s`, `None` on the boundary.
    pub fn neighbor(&self, c: usize, face: usize) -> Option<usize> {
        let (t, s) = (face / 2, face % 2);
        let mut cc = self.cell_coords(c);
        if s == 0 {
            if cc[t] == 0 {
                return None;
            }
            cc[t] -= 1;
        } else {
            if cc[t] + 1 == self.n {
                return None;
            }
            cc[t] += 1;
        }
        Some(self.cell_index(cc))
    }

    fn cell_is_box(&self, c: usize) -> bool {
        let v = self.cell_vertices(c);
        let nv = 1 << self.dim;
        (0..nv).all(|b| {
            (0..self.dim).all(|i| {
                let base = if (b >> i) & 1 == 1 {
                    v[1 << i][i]
                } else {
                    v[0][i]
                };
                (v[b][i] - base).abs() <= 1e-14
            })
        })
    }

    /// Edge lengths of an axis-aligned cell.
    pub fn box_lengths(&self, c: usize) -> [f64; 3] {
        let v = self.cell_vertices(c);
        let mut h = [1.0; 3];
        for (t, x) in h.iter_mut().enumerate().take(self.dim) {
            *x = v[1 << t][t] - v[0][t];
        }
        h
    }

    /// Image of the reference point `xh` under the multilinear map of cell `c`.
    pub fn map_point(&self, c: usize, xh: [f64; 3]) -> Point {
        multilinear_map(self.dim, &self.cell_vertices(c), xh)
    }

    /// Per direction, the average length of the `2^{d-1}` cell edges aligned
    /// with that direction (vertex distances, edges are straight).
    pub fn surrogate_lengths(&self, c: usize) -> Result<[f64; 3]> {
        surrogate_lengths(self.dim, &self.cell_vertices(c))
    }

    /// Lexicographically ordered interior vertex patches.
    pub fn vertex_patches(&self) -> Vec<VertexPatch> {
        let mut out = Vec::new();
        for v in 0..self.n_vertices() {
            if !self.is_interior_vertex(v) {
                continue;
            }
            let vc = self.vertex_coords(v);
            let mut cells = [usize::MAX; 8];
            for (b, cell) in cells.iter_mut().enumerate().take(1 << self.dim) {
                let mut cc = [0; 3];
                for t in 0..self.dim {
                    cc[t] = vc[t] - 1 + ((b >> t) & 1);
                }
                *cell = self.cell_index(cc);
            }
            out.push(VertexPatch { vertex: v, cells });
        }
        out
    }

    /// Checks that every interior face is shared by exactly two cells with
    /// coincident vertices.
    pub fn check_conformity(&self) -> Result<()> {
        let nf = 1usize << (self.dim - 1);
        for c in 0..self.n_cells() {
            let own = self.cell_vertex_ids(c);
            for face in 0..2 * self.dim {
                let Some(nb) = self.neighbor(c, face) else {
                    continue;
                };
                let back = face ^ 1;
                if self.neighbor(nb, back) != Some(c) {
                    return Err(Error::DegenerateGeometry(format!(
                        "face {face} of cell {c} is not matched by its neighbor"
                    )));
                }
                let other = self.cell_vertex_ids(nb);
                let t = face / 2;
                let mine: Vec<usize> = (0..1 << self.dim)
                    .filter(|b| (b >> t) & 1 == face % 2)
                    .map(|b| own[b])
                    .collect();
                let theirs: Vec<usize> = (0..1 << self.dim)
                    .filter(|b| (b >> t) & 1 == back % 2)
                    .map(|b| other[b])
                    .collect();
                if mine.len() != nf || mine != theirs {
                    return Err(Error::DegenerateGeometry(format!(
                        "face {face} of cell {c} does not coincide with its neighbor"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Minimum Jacobian determinant of cell `c` over a tensor grid of test
    /// points including the corners.
    pub fn min_jacobian(&self, c: usize) -> f64 {
        let v = self.cell_vertices(c);
        let pts = [0.0, 0.1127016653792583, 0.5, 0.8872983346207417, 1.0];
        let np = pts.len();
        let mut min = f64::INFINITY;
        for idx in 0..pow(np, self.dim) {
            let mut xh = [0.0; 3];
            let mut r = idx;
            for x in xh.iter_mut().take(self.dim) {
                *x = pts[r % np];
                r /= np;
            }
            let j = multilinear_jacobian(self.dim, &v, xh);
            min = min.min(det(self.dim, &j));
        }
        min
    }

    /// Plain-text dump: a header line, one `v x y z` line per vertex and one
    /// `c i0 i1 ..` line per cell.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "mesh dim={} cells_per_dim={} vertices={} cells={}",
            self.dim,
            self.n,
            self.n_vertices(),
            self.n_cells()
        );
        for p in &self.vertices {
            let _ = writeln!(s, "v {:.17e} {:.17e} {:.17e}", p[0], p[1], p[2]);
        }
        for c in 0..self.n_cells() {
            let ids: Vec<String> = self
                .cell_vertex_ids(c)
                .iter()
                .map(|i| i.to_string())
                .collect();
            let _ = writeln!(s, "c {}", ids.join(" "));
        }
        s
    }
}

/// The `2^d` cells sharing an interior vertex; `cells[b]` sits on the upper
/// side of the vertex in direction `τ` iff bit `τ` of `b` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VertexPatch {
    pub vertex: usize,
    pub cells: [usize; 8],
}

impl VertexPatch {
    pub fn cells(&self, dim: usize) -> &[usize] {
        &self.cells[..1 << dim]
    }
}

pub fn multilinear_map(dim: usize, v: &[Point; 8], xh: [f64; 3]) -> Point {
    let mut p = [0.0; 3];
    for (b, vb) in v.iter().enumerate().take(1 << dim) {
        let mut w = 1.0;
        for (t, &x) in xh.iter().enumerate().take(dim) {
            w *= if (b >> t) & 1 == 1 { x } else { 1.0 - x };
        }
        for i in 0..3 {
            p[i] += w * vb[i];
        }
    }
    p
}

/// `J[i][τ] = ∂F_i / ∂x̂_τ` of the multilinear map.
pub fn multilinear_jacobian(dim: usize, v: &[Point; 8], xh: [f64; 3]) -> [[f64; 3]; 3] {
    let mut j = [[0.0; 3]; 3];
    for (b, vb) in v.iter().enumerate().take(1 << dim) {
        for t in 0..dim {
            let mut w = if (b >> t) & 1 == 1 { 1.0 } else { -1.0 };
            for (s, &x) in xh.iter().enumerate().take(dim) {
                if s != t {
                    w *= if (b >> s) & 1 == 1 { x } else { 1.0 - x };
                }
            }
            for i in 0..dim {
                j[i][t] += w * vb[i];
            }
        }
    }
    for (t, row) in j.iter_mut().enumerate().skip(dim) {
        row[t] = 1.0;
    }
    j
}

pub fn det(dim: usize, j: &[[f64; 3]; 3]) -> f64 {
    match dim {
        1 => j[0][0],
        2 => j[0][0] * j[1][1] - j[0][1] * j[1][0],
        _ => {
            j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
                - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
        }
    }
}

/// Inverse of the (padded) Jacobian together with its determinant.
pub fn inverse(dim: usize, j: &[[f64; 3]; 3]) -> ([[f64; 3]; 3], f64) {
    let d = det(dim, j);
    let mut inv = [[0.0; 3]; 3];
    match dim {
        1 => {
            inv[0][0] = 1.0 / d;
            inv[1][1] = 1.0;
            inv[2][2] = 1.0;
        }
        2 => {
            inv[0][0] = j[1][1] / d;
            inv[0][1] = -j[0][1] / d;
            inv[1][0] = -j[1][0] / d;
            inv[1][1] = j[0][0] / d;
            inv[2][2] = 1.0;
        }
        _ => {
            for r in 0..3 {
                for c in 0..3 {
                    let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
                    let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
                    inv[r][c] = (j[r1][c1] * j[r2][c2] - j[r1][c2] * j[r2][c1]) / d;
                }
            }
        }
    }
    (inv, d)
}

pub fn surrogate_lengths(dim: usize, v: &[Point; 8]) -> Result<[f64; 3]> {
    let mut h = [1.0; 3];
    for (t, ht) in h.iter_mut().enumerate().take(dim) {
        let mut sum = 0.0;
        let mut count = 0;
        for b in 0..1usize << dim {
            if (b >> t) & 1 == 1 {
                continue;
            }
            let e = b | (1 << t);
            let len = (0..3)
                .map(|i| (v[e][i] - v[b][i]).powi(2))
                .sum::<f64>()
                .sqrt();
            if len <= 0.0 {
                return Err(Error::DegenerateGeometry(format!(
                    "zero-length edge in direction {t}"
                )));
            }
            sum += len;
            count += 1;
        }
        *ht = sum / count as f64;
    }
    Ok(h)
}

/// Distortion applied to the coarse level of a hierarchy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    pub factor: f64,
    pub seed: u64,
}

/// Nested levels `0..=L`, level `ℓ` having `coarse · 2^ℓ` cells per direction.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    dim: usize,
    coarse: usize,
    levels: Vec<Arc<Level>>,
    distortion: Option<Distortion>,
}

impl MeshHierarchy {
    pub fn new(dim: usize, coarse_cells_per_dim: usize, max_level: usize) -> Result<Self> {
        let coarse = Level::cartesian(dim, coarse_cells_per_dim)?;
        Self::from_coarse(coarse, max_level, None)
    }

    fn from_coarse(
        coarse: Level,
        max_level: usize,
        distortion: Option<Distortion>,
    ) -> Result<Self> {
        let dim = coarse.dim;
        let n0 = coarse.n;
        if n0.checked_shl(max_level as u32).is_none() || max_level > 24 {
            return Err(Error::InvalidArgument(format!(
                "level {max_level} too deep"
            )));
        }
        let mut levels = vec![Arc::new(coarse)];
        for _ in 0..max_level {
            let next = refine(levels.last().unwrap());
            levels.push(Arc::new(next));
        }
        Ok(Self {
            dim,
            coarse: n0,
            levels,
            distortion,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coarse_cells_per_dim(&self) -> usize {
        self.coarse
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &Arc<Level> {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[Arc<Level>] {
        &self.levels
    }

    pub fn distortion(&self) -> Option<Distortion> {
        self.distortion
    }

    /// Children of coarse cell `c` on level `l + 1`, ordered by the bit
    /// pattern of their position inside the parent.
    pub fn children(&self, l: usize, c: usize) -> Vec<usize> {
        let coarse = &self.levels[l];
        let fine = &self.levels[l + 1];
        let cc = coarse.cell_coords(c);
        (0..1usize << self.dim)
            .map(|b| {
                let mut fc = [0; 3];
                for t in 0..self.dim {
                    fc[t] = 2 * cc[t] + ((b >> t) & 1);
                }
                fine.cell_index(fc)
            })
            .collect()
    }

    /// Moves every interior vertex of the coarse level by `factor · h_v` in a
    /// random direction (`h_v` the shortest incident edge) and rebuilds the
    /// finer levels by refining the distorted cells.
    pub fn distort(&self, factor: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&factor) {
            return Err(Error::InvalidArgument(format!(
                "distortion factor must lie in [0, 0.5), got {factor}"
            )));
        }
        let coarse = &self.levels[0];
        let dim = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut verts = coarse.vertices.clone();
        for v in 0..coarse.n_vertices() {
            if !coarse.is_interior_vertex(v) {
                continue;
            }
            let vc = coarse.vertex_coords(v);
            let mut hv = f64::INFINITY;
            for t in 0..dim {
                for delta in [-1isize, 1] {
                    let mut wc = vc;
                    wc[t] = (wc[t] as isize + delta) as usize;
                    let w = coarse.vertex_index(wc);
                    let len = (0..3)
                        .map(|i| (coarse.vertices[w][i] - coarse.vertices[v][i]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    hv = hv.min(len);
                }
            }
            let mut dir = [0.0; 3];
            loop {
                let mut norm: f64 = 0.0;
                for x in dir.iter_mut().take(dim) {
                    *x = StandardNormal.sample(&mut rng);
                    norm += *x * *x;
                }
                if norm > 1e-24 {
                    let norm = norm.sqrt();
                    dir.iter_mut().for_each(|x| *x /= norm);
                    break;
                }
            }
            for i in 0..dim {
                verts[v][i] += factor * hv * dir[i];
            }
        }
        let level = Level::from_vertices(dim, coarse.n, verts);
        for c in 0..level.n_cells() {
            let m = level.min_jacobian(c);
            if !(m > 0.0) {
                return Err(Error::NonPositiveJacobian { cell: c, det: m });
            }
        }
        let distortion = if factor == 0.0 {
            self.distortion
        } else {
            Some(Distortion { factor, seed })
        };
        Self::from_coarse(level, self.max_level(), distortion)
    }
}

/// Uniform refinement; fine vertices are images of the parent's multilinear
/// map so the hierarchy stays nested.
fn refine(coarse: &Level) -> Level {
    let dim = coarse.dim;
    let n = 2 * coarse.n;
    if coarse.cartesian {
        let mut fine = Level::cartesian(dim, n).expect("valid refinement");
        // keep the exact coarse vertex positions for robustness against drift
        fine.vertices = (0..fine.n_vertices())
            .map(|w| fine_vertex(coarse, &fine.vertex_coords(w)))
            .collect();
        return fine;
    }
    let vertices = (0..pow(n + 1, dim))
        .map(|w| {
            let mut wc = [0; 3];
            let mut r = w;
            for x in wc.iter_mut().take(dim) {
                *x = r % (n + 1);
                r /= n + 1;
            }
            fine_vertex(coarse, &wc)
        })
        .collect();
    Level::from_vertices(dim, n, vertices)
}

fn fine_vertex(coarse: &Level, wc: &[usize; 3]) -> Point {
    let dim = coarse.dim;
    let mut cc = [0; 3];
    let mut xh = [0.0; 3];
    for t in 0..dim {
        let c = (wc[t] / 2).min(coarse.n - 1);
        cc[t] = c;
        xh[t] = (wc[t] as f64 - 2.0 * c as f64) / 2.0;
    }
    let cell = coarse.cell_index(cc);
    let p = coarse.map_point(cell, xh);
    // Coarse vertices are copied verbatim.
    if (0..dim).all(|t| wc[t] % 2 == 0) {
        let mut vc = [0; 3];
        for t in 0..dim {
            vc[t] = wc[t] / 2;
        }
        return coarse.vertices[coarse.vertex_index(vc)];
    }
    p
}

/// Disjoint subdomain sets processed one after another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorPartition {
    colors: Vec<Vec<usize>>,
}

impl ColorPartition {
    /// Drops empty colors and sorts each color ascending.
    pub fn new(mut colors: Vec<Vec<usize>>) -> Self {
        colors.retain(|c| !c.is_empty());
        colors.iter_mut().for_each(|c| c.sort_unstable());
        Self { colors }
    }

    pub fn single(n: usize) -> Self {
        Self::new(vec![(0..n).collect()])
    }

    pub fn n_colors(&self) -> usize {
        self.colors.len()
    }

    pub fn color(&self, c: usize) -> &[usize] {
        &self.colors[c]
    }

    pub fn colors(&self) -> &[Vec<usize>] {
        &self.colors
    }

    pub fn n_subdomains(&self) -> usize {
        self.colors.iter().map(Vec::len).sum()
    }

    /// Reversed color order.
    pub fn reversed(&self) -> Self {
        Self {
            colors: self.colors.iter().rev().cloned().collect(),
        }
    }

    /// Checks coverage of `0..n` without repetition.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for c in &self.colors {
            for &j in c {
                if j >= n || seen[j] {
                    return false;
                }
                seen[j] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// True if no two subdomains of one color are adjacent in `graph`.
    pub fn is_proper(&self, graph: &[Vec<usize>]) -> bool {
        let mut color_of = vec![usize::MAX; graph.len()];
        for (c, members) in self.colors.iter().enumerate() {
            for &j in members {
                color_of[j] = c;
            }
        }
        graph
            .iter()
            .enumerate()
            .all(|(i, adj)| adj.iter().all(|&j| j == i || color_of[i] != color_of[j]))
    }
}

/// Checkerboard coloring by parity of the cell coordinate sum.
pub fn color_cells_redblack(level: &Level) -> ColorPartition {
    let mut colors = vec![Vec::new(), Vec::new()];
    for c in 0..level.n_cells() {
        let s: usize = level.cell_coords(c).iter().sum();
        colors[s % 2].push(c);
    }
    ColorPartition::new(colors)
}

/// Structured coloring of vertex patches: the `2^d` parities of the vertex
/// coordinates, each split red-black by the parity of the `2 × .. × 2`
/// block index. Same-color patches share neither a cell nor a face.
pub fn color_patches_structured(level: &Level, patches: &[VertexPatch]) -> ColorPartition {
    let dim = level.dim();
    let mut colors = vec![Vec::new(); 1 << (dim + 1)];
    for (j, p) in patches.iter().enumerate() {
        let vc = level.vertex_coords(p.vertex);
        let mut key = 0;
        let mut block = 0;
        for t in 0..dim {
            key |= (vc[t] % 2) << t;
            block += vc[t] / 2;
        }
        colors[key + (block % 2) * (1 << dim)].push(j);
    }
    ColorPartition::new(colors)
}

/// Conflict graph of subdomains given by cell lists: subdomains sharing a
/// cell always conflict; with `include_faces`, also those with face-adjacent
/// cells.
pub fn conflict_graph(
    level: &Level,
    subdomains: &[Vec<usize>],
    include_faces: bool,
) -> Vec<Vec<usize>> {
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); level.n_cells()];
    for (j, cells) in subdomains.iter().enumerate() {
        for &c in cells {
            owners[c].push(j);
        }
    }
    subdomains
        .iter()
        .enumerate()
        .map(|(j, cells)| {
            let mut adj = BTreeSet::new();
            for &c in cells {
                adj.extend(owners[c].iter().copied());
                if include_faces {
                    for f in 0..2 * level.dim() {
                        if let Some(nb) = level.neighbor(c, f) {
                            adj.extend(owners[nb].iter().copied());
                        }
                    }
                }
            }
            adj.remove(&j);
            adj.into_iter().collect()
        })
        .collect()
}

/// DSATUR greedy coloring: repeatedly colors the vertex of maximal
/// saturation (ties: larger degree, then smaller index) with the smallest
/// admissible color.
pub fn color_graph_dsatur(graph: &[Vec<usize>]) -> ColorPartition {
    let n = graph.len();
    if n == 0 {
        return ColorPartition::new(Vec::new());
    }
    let mut color = vec![usize::MAX; n];
    let mut neighbor_colors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    // key: (saturation, degree, reversed index); pop the maximum
    let key = |sat: usize, i: usize| (sat, graph[i].len(), usize::MAX - i);
    let mut queue: BTreeSet<(usize, usize, usize)> = (0..n).map(|i| key(0, i)).collect();
    let mut n_colors = 0;
    while let Some(top) = queue.pop_last() {
        let i = usize::MAX - top.2;
        let used = &neighbor_colors[i];
        let c = (0..).find(|c| !used.contains(c)).unwrap();
        color[i] = c;
        n_colors = n_colors.max(c + 1);
        for &j in &graph[i] {
            if color[j] != usize::MAX || j == i {
                continue;
            }
            let old = neighbor_colors[j].len();
            if neighbor_colors[j].insert(c) {
                queue.remove(&key(old, j));
                queue.insert(key(old + 1, j));
            }
        }
    }
    let mut colors = vec![Vec::new(); n_colors];
    for (i, c) in color.into_iter().enumerate() {
        colors[c].push(i);
    }
    ColorPartition::new(colors)
}
