//! Compression of a continuous kernel to a finite Hermitian matrix in the
//! truncated tree basis, with eigendecomposition and spectrum checks.
//!
//! Matrix entry (i, j) is the double integral of K against the i-th and
//! j-th basis elements. Because basis elements are piecewise constant, the
//! entry reduces to a weighted sum of cell-pair integrals:
//!
//! * finite-rank fixtures integrate exactly through basis inner products;
//! * the line kernels go through the cached Gauss-Legendre engine;
//! * the Ginibre kernel is expanded in its degenerate series
//!   exp(x conj y) = sum_n phi_n(x) conj(phi_n(y)), phi_n(z) = z^n/sqrt(n!),
//!   which turns the matrix into a small-rank Gram product with the basis
//!   moments of phi_n; the series truncation is driven below 1e-15 of the
//!   kernel scale on the window.
//!
//! The compressed operator is unitarily equivalent to a compression of the
//! original one, so its spectrum must lie in [0, 1]; eigenvalues outside
//! [-slack, 1 + slack] abort, small excursions are clipped and counted.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisFunction;
use crate::error::{Error, Result};
use crate::geom::{CellGeometry, Point, Window};
use crate::kernel::ContinuousKernel;
use crate::partition::{TreeIndex, TreeSpace};
use crate::quad::LineQuadEngine;

/// Controls for building a projected kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub level: u8,
    pub rank_max: u8,
    pub quad_order: usize,
    /// Per-entry quadrature error tolerance; assembly fails above it.
    pub quad_tolerance: f64,
    /// Spectrum slack: eigenvalues in [-slack, 1 + slack] are clipped to
    /// [0, 1], anything further aborts.
    pub spectrum_slack: f64,
}

impl ProjectionConfig {
    pub fn new(level: u8, rank_max: u8) -> ProjectionConfig {
        ProjectionConfig {
            level,
            rank_max,
            quad_order: 16,
            quad_tolerance: 1e-8,
            spectrum_slack: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionMeta {
    pub kernel: String,
    pub level: u8,
    pub rank_max: u8,
    pub window: Window,
    pub quad_order: usize,
    pub worst_entry_error: f64,
}

/// The compressed kernel: indices, Hermitian matrix, eigendecomposition.
pub struct ProjectedKernel {
    pub indices: Vec<TreeIndex>,
    pub basis: Vec<BasisFunction>,
    pub matrix: DMatrix<Complex64>,
    /// Raw eigenvalues, descending.
    pub raw_eigenvalues: Vec<f64>,
    /// Eigenvalues clipped into [0, 1], aligned with `raw_eigenvalues`.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvector columns for the leading eigenvalues; covers
    /// all of them on the dense path and the nonzero part on the low-rank
    /// path (the rest of the spectrum is exactly zero there).
    pub eigenvectors: DMatrix<Complex64>,
    pub clip_count: usize,
    pub max_clip_excess: f64,
    pub meta: ProjectionMeta,
    position: std::collections::HashMap<TreeIndex, usize>,
}

/// Spectrum summary of a projected kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub n: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub trace: f64,
    pub clip_count: usize,
    pub max_clip_excess: f64,
    pub eigenvalues: Vec<f64>,
}

/// Builds the projected kernel matrix on the truncated index set.
pub fn project_kernel(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    cfg: &ProjectionConfig,
) -> Result<ProjectedKernel> {
    if kernel.dimension() != space.dimension() {
        return Err(Error::Domain(format!(
            "kernel {} has dimension {}, window has {}",
            kernel.name(),
            kernel.dimension(),
            space.dimension()
        )));
    }
    let indices = space.truncated_index_set(cfg.level, cfg.rank_max)?;
    let basis = indices
        .iter()
        .map(|i| space.basis_function(i))
        .collect::<Result<Vec<_>>>()?;

    match kernel {
        ContinuousKernel::FiniteRank(fr) => {
            let gram = DMatrix::<f64>::from_fn(fr.functions.len(), basis.len(), |k, i| {
                space.inner_product(&fr.functions[k], &basis[i])
            });
            build_from_real_factor(space, kernel, cfg, indices, basis, gram, 0.0)
        }
        ContinuousKernel::Ginibre => {
            let factor = ginibre_moment_factor(space, &basis)?;
            build_from_complex_factor(space, kernel, cfg, indices, basis, factor)
        }
        _ => build_dense_line(space, kernel, cfg, indices, basis),
    }
}

/// Dense assembly for the kernels on the line.
fn build_dense_line(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    cfg: &ProjectionConfig,
    indices: Vec<TreeIndex>,
    basis: Vec<BasisFunction>,
) -> Result<ProjectedKernel> {
    let n = basis.len();
    let mut cells: Vec<&crate::partition::PartitionCell> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for f in &basis {
        for (c, _) in &f.pieces {
            if seen.insert(c.index) {
                cells.push(c);
            }
        }
    }
    let engine = LineQuadEngine::new(kernel, &cells, cfg.quad_order)?;

    // upper triangle in parallel; each entry sums its piece-pair integrals
    let entries: Vec<(usize, usize, f64, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| (i..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let mut value = 0.0;
            let mut err = 0.0;
            for (cp, ap) in &basis[i].pieces {
                for (cq, aq) in &basis[j].pieces {
                    let pi = engine.pair_integral(&cp.index, &cq.index)?;
                    value += ap * aq * pi.value;
                    err += (ap * aq).abs() * pi.error;
                }
            }
            Ok((i, j, value, err))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut matrix_re = DMatrix::<f64>::zeros(n, n);
    let mut worst = (0.0f64, usize::MAX);
    for &(i, j, v, e) in &entries {
        matrix_re[(i, j)] = v;
        matrix_re[(j, i)] = v;
        let id = i * n + j;
        if e > worst.0 || (e == worst.0 && id < worst.1) {
            worst = (e, id);
        }
    }
    if worst.0 > cfg.quad_tolerance {
        let i = worst.1 / n;
        let j = worst.1 % n;
        return Err(Error::Quadrature(format!(
            "entry ({}, {}) error estimate {:.3e} above tolerance {:.3e}",
            indices[i], indices[j], worst.0, cfg.quad_tolerance
        )));
    }

    let eig = nalgebra::SymmetricEigen::new(matrix_re.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let raw: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::<Complex64>::from_fn(n, n, |r, c| {
        Complex64::new(eig.eigenvectors[(r, order[c])], 0.0)
    });
    let matrix = matrix_re.map(|v| Complex64::new(v, 0.0));
    finish(
        space, kernel, cfg, indices, basis, matrix, raw, vectors, worst.0,
    )
}

/// Assembly from a real factor G (m x n): matrix = G^T G, eigenpairs from
/// the m x m Gram.
fn build_from_real_factor(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    cfg: &ProjectionConfig,
    indices: Vec<TreeIndex>,
    basis: Vec<BasisFunction>,
    factor: DMatrix<f64>,
    worst_err: f64,
) -> Result<ProjectedKernel> {
    let n = basis.len();
    let m = factor.nrows();
    let matrix_re = factor.transpose() * &factor;
    let small = &factor * factor.transpose();
    let eig = nalgebra::SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut raw = Vec::with_capacity(n);
    let mut cols: Vec<DVector<Complex64>> = Vec::new();
    for &k in &order {
        let lam = eig.eigenvalues[k];
        if lam > 1e-10 {
            raw.push(lam);
            let v = factor.transpose() * eig.eigenvectors.column(k) / lam.sqrt();
            cols.push(v.map(|x| Complex64::new(x, 0.0)));
        }
    }
    raw.resize(n, 0.0);
    let vectors = orthonormalized(n, cols);
    let matrix = matrix_re.map(|v| Complex64::new(v, 0.0));
    finish(
        space, kernel, cfg, indices, basis, matrix, raw, vectors, worst_err,
    )
}

/// Modified Gram-Schmidt over the columns. Factor-derived eigenvectors of
/// small eigenvalues carry rounding amplified by 1/lambda; this restores
/// orthonormality without disturbing the well-separated leading columns.
fn orthonormalized(n: usize, cols: Vec<DVector<Complex64>>) -> DMatrix<Complex64> {
    let mut m = DMatrix::<Complex64>::from_fn(n, cols.len(), |r, c| cols[c][r]);
    for c in 0..m.ncols() {
        for prev in 0..c {
            let proj: Complex64 = m.column(prev).dotc(&m.column(c));
            let prevcol = m.column(prev).into_owned();
            let mut col = m.column_mut(c);
            col.zip_apply(&prevcol, |x, p| *x -= proj * p);
        }
        let norm = m.column(c).norm();
        if norm > 0.0 {
            let mut col = m.column_mut(c);
            col.apply(|x| *x /= norm);
        }
    }
    m
}

/// Assembly from a complex factor D (m x n): matrix = D^H D.
fn build_from_complex_factor(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    cfg: &ProjectionConfig,
    indices: Vec<TreeIndex>,
    basis: Vec<BasisFunction>,
    factor: DMatrix<Complex64>,
) -> Result<ProjectedKernel> {
    let n = basis.len();
    let m = factor.nrows();
    let matrix = factor.adjoint() * &factor;
    let small = &factor * factor.adjoint();
    let eig = nalgebra::SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut raw = Vec::with_capacity(n);
    let mut cols: Vec<DVector<Complex64>> = Vec::new();
    for &k in &order {
        let lam = eig.eigenvalues[k];
        if lam > 1e-10 {
            raw.push(lam);
            let u = eig.eigenvectors.column(k).into_owned();
            let v = factor.adjoint() * u / Complex64::new(lam.sqrt(), 0.0);
            cols.push(v);
        }
    }
    raw.resize(n, 0.0);
    let vectors = orthonormalized(n, cols);
    finish(
        space, kernel, cfg, indices, basis, matrix, raw, vectors, 0.0,
    )
}

/// Moments of phi_n(z) = z^n / sqrt(n!) against every basis element, per
/// cell by tensor Gauss-Legendre against the Gaussian weight. The series
/// order adapts to the window radius so the dropped tail is below 1e-15
/// of the kernel scale.
fn ginibre_moment_factor(space: &TreeSpace, basis: &[BasisFunction]) -> Result<DMatrix<Complex64>> {
    let Window::Two { x0, x1, y0, y1 } = space.window() else {
        return Err(Error::Domain("ginibre needs a plane window".into()));
    };
    let r2 = {
        let rx = (x0.abs().max(x1.abs())) as f64;
        let ry = (y0.abs().max(y1.abs())) as f64;
        rx * rx + ry * ry
    };
    // smallest N with r^{2(N+1)} / (N+1)! < 1e-15 relative to e^{r^2}
    let mut n_terms = 1usize;
    let mut term = 1.0f64;
    let target = 1e-15 * r2.exp();
    while term * r2 / (n_terms as f64) >= target {
        term *= r2 / n_terms as f64;
        n_terms += 1;
        if n_terms > 150 {
            return Err(Error::Numeric(format!(
                "ginibre window radius^2 = {r2} too large for the moment expansion"
            )));
        }
    }
    n_terms += 4;

    // distinct cells
    let mut cells: Vec<&crate::partition::PartitionCell> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for f in basis {
        for (c, _) in &f.pieces {
            if seen.insert(c.index) {
                cells.push(c);
            }
        }
    }
    let rule = crate::quad::GaussLegendre::new(n_terms / 2 + 10);
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();

    // per-cell moment vectors, in parallel
    let moments: Vec<(TreeIndex, Vec<Complex64>)> = cells
        .par_iter()
        .map(|cell| {
            let CellGeometry::Rect { x0, x1, y0, y1 } = cell.geometry else {
                return Err(Error::Domain("ginibre cells must be rectangles".into()));
            };
            let (xs, wx) = rule.mapped(x0, x1);
            let (ys, wy) = rule.mapped(y0, y1);
            let mut acc = vec![Complex64::new(0.0, 0.0); n_terms];
            for (i, &x) in xs.iter().enumerate() {
                let gx = (-x * x).exp() * inv_sqrt_pi * wx[i];
                for (j, &y) in ys.iter().enumerate() {
                    let g = gx * (-y * y).exp() * inv_sqrt_pi * wy[j];
                    let z = Complex64::new(x, y);
                    let mut zp = Complex64::new(1.0, 0.0);
                    for slot in acc.iter_mut() {
                        *slot += g * zp;
                        zp *= z;
                    }
                }
            }
            // scale by 1/sqrt(n!)
            let mut fact = 1.0f64;
            for (idx, slot) in acc.iter_mut().enumerate() {
                if idx > 0 {
                    fact *= idx as f64;
                }
                *slot /= fact.sqrt();
            }
            Ok((cell.index, acc))
        })
        .collect::<Result<Vec<_>>>()?;
    let by_cell: std::collections::HashMap<TreeIndex, Vec<Complex64>> =
        moments.into_iter().collect();

    // combine pieces; factor row n, column i holds conj(g_{n,i}) so that
    // D^H D equals the projected matrix
    let mut factor = DMatrix::<Complex64>::zeros(n_terms, basis.len());
    for (i, f) in basis.iter().enumerate() {
        for (c, a) in &f.pieces {
            let mv = &by_cell[&c.index];
            for nn in 0..n_terms {
                factor[(nn, i)] += Complex64::new(*a, 0.0) * mv[nn].conj();
            }
        }
    }
    Ok(factor)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    cfg: &ProjectionConfig,
    indices: Vec<TreeIndex>,
    basis: Vec<BasisFunction>,
    matrix: DMatrix<Complex64>,
    raw: Vec<f64>,
    vectors: DMatrix<Complex64>,
    worst_err: f64,
) -> Result<ProjectedKernel> {
    let (clipped, clip_count, max_excess) = validate_spectrum(&raw, cfg.spectrum_slack)?;
    let position = indices.iter().enumerate().map(|(k, i)| (*i, k)).collect();
    Ok(ProjectedKernel {
        indices,
        basis,
        matrix,
        raw_eigenvalues: raw,
        eigenvalues: clipped,
        eigenvectors: vectors,
        clip_count,
        max_clip_excess: max_excess,
        meta: ProjectionMeta {
            kernel: kernel.name(),
            level: cfg.level,
            rank_max: cfg.rank_max,
            window: space.window(),
            quad_order: cfg.quad_order,
            worst_entry_error: worst_err,
        },
        position,
    })
}

fn validate_spectrum(raw: &[f64], slack: f64) -> Result<(Vec<f64>, usize, f64)> {
    let mut clipped = Vec::with_capacity(raw.len());
    let mut count = 0usize;
    let mut excess = 0.0f64;
    for &lam in raw {
        if lam < -slack || lam > 1.0 + slack {
            return Err(Error::Spectrum {
                value: lam,
                lo: -slack,
                hi: 1.0 + slack,
            });
        }
        let c = lam.clamp(0.0, 1.0);
        if c != lam {
            count += 1;
            excess = excess.max((lam - c).abs());
        }
        clipped.push(c);
    }
    Ok((clipped, count, excess))
}

impl ProjectedKernel {
    pub fn n(&self) -> usize {
        self.indices.len()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.matrix[(i, i)].re).sum()
    }

    pub fn entry(&self, i: &TreeIndex, j: &TreeIndex) -> Option<Complex64> {
        let a = *self.position.get(i)?;
        let b = *self.position.get(j)?;
        Some(self.matrix[(a, b)])
    }

    pub fn position_of(&self, i: &TreeIndex) -> Option<usize> {
        self.position.get(i).copied()
    }

    /// Builds a projected kernel directly from a Hermitian matrix (testing
    /// and spectrum reporting for externally supplied kernels).
    pub fn from_matrix(
        space: &TreeSpace,
        indices: Vec<TreeIndex>,
        matrix: DMatrix<Complex64>,
        slack: f64,
    ) -> Result<ProjectedKernel> {
        let n = indices.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Domain(
                "matrix size does not match index count".into(),
            ));
        }
        let mut herm_defect = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                herm_defect = herm_defect.max((matrix[(i, j)] - matrix[(j, i)].conj()).norm());
            }
        }
        if herm_defect > 1e-12 {
            return Err(Error::Domain(format!(
                "matrix is not Hermitian: defect {herm_defect:.3e}"
            )));
        }
        let basis = indices
            .iter()
            .map(|i| space.basis_function(i))
            .collect::<Result<Vec<_>>>()?;
        let eig = nalgebra::SymmetricEigen::new(matrix.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let raw: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::<Complex64>::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let (clipped, clip_count, max_excess) = validate_spectrum(&raw, slack)?;
        let position = indices.iter().enumerate().map(|(k, i)| (*i, k)).collect();
        let window = space.window();
        Ok(ProjectedKernel {
            basis,
            matrix,
            raw_eigenvalues: raw,
            eigenvalues: clipped,
            eigenvectors: vectors,
            clip_count,
            max_clip_excess: max_excess,
            meta: ProjectionMeta {
                kernel: "matrix".into(),
                level: indices.first().map(|i| i.level).unwrap_or(1),
                rank_max: 0,
                window,
                quad_order: 0,
                worst_entry_error: 0.0,
            },
            indices,
            position,
        })
    }

    pub fn spectrum_report(&self) -> SpectrumReport {
        SpectrumReport {
            n: self.n(),
            min_eigenvalue: self.raw_eigenvalues.last().copied().unwrap_or(0.0),
            max_eigenvalue: self.raw_eigenvalues.first().copied().unwrap_or(0.0),
            trace: self.trace(),
            clip_count: self.clip_count,
            max_clip_excess: self.max_clip_excess,
            eigenvalues: self.raw_eigenvalues.clone(),
        }
    }

    /// Nonzero basis values at a point: at most one index per rank along
    /// the refinement path of the containing cells.
    pub fn basis_values_at(&self, space: &TreeSpace, p: Point) -> Result<Vec<(usize, f64)>> {
        let level = self.meta.level;
        let rank_max = self.indices.iter().map(|i| i.rank()).max().unwrap_or(1) as u8;
        let mut out = Vec::with_capacity(rank_max as usize);
        let r1 = space.locate(p, level)?;
        if let Some(&pos) = self.position.get(&r1) {
            out.push((pos, self.basis[pos].pieces[0].1));
        }
        // rank r >= 2 element with support = containing cell at depth d
        for depth in level..(level + rank_max - 1) {
            let sup = space.locate(p, depth)?;
            let idx = TreeIndex::new(sup.root, sup.path.push(false), level)?;
            if let Some(&pos) = self.position.get(&idx) {
                let f = &self.basis[pos];
                let child = space.locate(p, depth + 1)?;
                let v = if child.path.last() == Some(false) {
                    f.pieces[0].1
                } else {
                    f.pieces[1].1
                };
                out.push((pos, v));
            }
        }
        Ok(out)
    }

    /// Evaluates the truncated expansion
    /// sum_{i,j} M(i,j) f_i(x) conj(f_j(y)).
    pub fn reconstruct(&self, space: &TreeSpace, x: Point, y: Point) -> Result<Complex64> {
        let vx = self.basis_values_at(space, x)?;
        let vy = self.basis_values_at(space, y)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for &(i, fx) in &vx {
            for &(j, fy) in &vy {
                // conj(f_j(y)) = f_j(y): basis functions are real
                acc += self.matrix[(i, j)] * fx * fy;
            }
        }
        Ok(acc)
    }
}

/// Both sides of the finite bilinear identity: the direct double integral
/// of K against P = sum_i xi_i f_i and Q = sum_j eta_j f_j, and the same
/// contraction through the projected matrix.
pub fn bilinear_identity_check(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    projected: &ProjectedKernel,
    xi: &[(TreeIndex, Complex64)],
    eta: &[(TreeIndex, Complex64)],
) -> Result<(Complex64, Complex64)> {
    // rhs: matrix contraction
    let mut rhs = Complex64::new(0.0, 0.0);
    for (i, a) in xi {
        for (j, b) in eta {
            let m = projected
                .entry(i, j)
                .ok_or_else(|| Error::Domain(format!("index {i} or {j} not in truncation")))?;
            rhs += a.conj() * b * m;
        }
    }

    // lhs: direct quadrature of the piecewise-constant bilinear form
    let mut pieces_p: Vec<(crate::partition::PartitionCell, Complex64)> = Vec::new();
    for (i, a) in xi {
        let f = space.basis_function(i)?;
        for (c, w) in &f.pieces {
            pieces_p.push((c.clone(), a * w));
        }
    }
    let mut pieces_q: Vec<(crate::partition::PartitionCell, Complex64)> = Vec::new();
    for (j, b) in eta {
        let f = space.basis_function(j)?;
        for (c, w) in &f.pieces {
            pieces_q.push((c.clone(), b * w));
        }
    }

    let mut lhs = Complex64::new(0.0, 0.0);
    match kernel {
        ContinuousKernel::FiniteRank(fr) => {
            // exact: sum_k (int f_k conj(P)) (int f_k Q)
            for fk in &fr.functions {
                let mut ip = Complex64::new(0.0, 0.0);
                let mut iq = Complex64::new(0.0, 0.0);
                for (c, w) in &pieces_p {
                    for (ck, ak) in &fk.pieces {
                        if let Some(o) = c.geometry.intersect(&ck.geometry) {
                            ip += w.conj() * ak * space.measure().cell_mass(&o);
                        }
                    }
                }
                for (c, w) in &pieces_q {
                    for (ck, ak) in &fk.pieces {
                        if let Some(o) = c.geometry.intersect(&ck.geometry) {
                            iq += w * ak * space.measure().cell_mass(&o);
                        }
                    }
                }
                lhs += ip * iq;
            }
        }
        _ => {
            let mut cells: Vec<&crate::partition::PartitionCell> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for (c, _) in pieces_p.iter().chain(pieces_q.iter()) {
                if seen.insert(c.index) {
                    cells.push(c);
                }
            }
            let engine = LineQuadEngine::new(kernel, &cells, projected.meta.quad_order)?;
            for (cp, wp) in &pieces_p {
                for (cq, wq) in &pieces_q {
                    let v = engine.pair_integral(&cp.index, &cq.index)?;
                    lhs += wp.conj() * wq * v.value;
                }
            }
        }
    }
    Ok((lhs, rhs))
}

// ---------------------------------------------------------------------------
// On-disk form
// ---------------------------------------------------------------------------

/// Serialized projected kernel: metadata header, index table, row-major
/// complex matrix, eigenvalue vector. JSON keeps every f64 exactly.
#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectedKernelFile {
    pub schema_version: u32,
    pub generator: String,
    pub meta: ProjectionMeta,
    pub indices: Vec<IndexRecord>,
    pub n: usize,
    /// Row-major [re, im] pairs.
    pub matrix: Vec<[f64; 2]>,
    pub eigenvalues: Vec<f64>,
    pub raw_eigenvalues: Vec<f64>,
    pub clip_count: usize,
    pub max_clip_excess: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexRecord {
    pub root: String,
    pub bits: String,
    pub level: u8,
    pub rank: usize,
}

impl ProjectedKernel {
    pub fn to_file_model(&self) -> ProjectedKernelFile {
        let n = self.n();
        let mut matrix = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let v = self.matrix[(i, j)];
                matrix.push([v.re, v.im]);
            }
        }
        ProjectedKernelFile {
            schema_version: 1,
            generator: format!("treedpp {}", env!("CARGO_PKG_VERSION")),
            meta: self.meta.clone(),
            indices: self
                .indices
                .iter()
                .map(|i| IndexRecord {
                    root: i.root.to_string(),
                    bits: i.path.to_string(),
                    level: i.level,
                    rank: i.rank(),
                })
                .collect(),
            n,
            matrix,
            eigenvalues: self.eigenvalues.clone(),
            raw_eigenvalues: self.raw_eigenvalues.clone(),
            clip_count: self.clip_count,
            max_clip_excess: self.max_clip_excess,
        }
    }
}
