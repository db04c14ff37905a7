//! Numerical verification of the identities tying the continuous kernel
//! to its tree compression.
//!
//! * correlation identity: the integral of the m-point correlation
//!   determinant over a product of level-l cells equals the sum of the
//!   compressed correlation determinants over index tuples supported in
//!   those cells;
//! * orthogonality trichotomy: the restricted inner product of two basis
//!   elements over a level cell is 1 exactly when the indices coincide and
//!   the support sits inside the cell, otherwise 0;
//! * factorial moments: empirical falling-factorial moments of lifted
//!   samples against the correlation quadrature;
//! * refinement: coarse cell counts recompute exactly from fine ones.
//!
//! Every report carries its error budget as separate lines (quadrature
//! estimate, truncation gap, Monte Carlo band), never one fudge factor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{CellGeometry, Point, Window};
use crate::kernel::ContinuousKernel;
use crate::lift::{cell_counts, coarsen_counts, LiftSampler, PointConfiguration};
use crate::partition::{TreeIndex, TreeSpace};
use crate::project::ProjectedKernel;
use crate::quad::{line_cell_nodes, GaussLegendre};
use crate::stream::replica_rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetLine {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub kernel: String,
    pub level: u8,
    pub rank_max: u8,
    pub window: Window,
    pub quad_order: usize,
    pub seed: u64,
    pub draws: u64,
}

/// One verified identity: both sides, their error estimates, the combined
/// tolerance, and the verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub identity: String,
    pub lhs: f64,
    pub lhs_error: f64,
    pub rhs: f64,
    pub rhs_error: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub budget: Vec<BudgetLine>,
    pub pass: bool,
    pub metadata: RunMetadata,
}

impl VerificationReport {
    pub fn summary(&self) -> String {
        format!(
            "{}: |lhs - rhs| = {:.3e} vs tolerance {:.3e} -> {}",
            self.identity,
            self.gap,
            self.tolerance,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

// ---------------------------------------------------------------------------
// Correlation identity
// ---------------------------------------------------------------------------

/// Integral of det[K(x_p, x_q)] over the product of the given level-l
/// cells (m = cells.len() <= 3) versus the truncated tuple sum of the
/// compressed determinants.
pub fn correlation_identity(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    projected: &ProjectedKernel,
    cells: &[TreeIndex],
    tolerance: f64,
) -> Result<VerificationReport> {
    let m = cells.len();
    if m == 0 || m > 3 {
        return Err(Error::Domain(
            "correlation identity supports 1 <= m <= 3 cells".into(),
        ));
    }
    let level = projected.meta.level;
    for c in cells {
        if c.level != level || c.rank() != 1 {
            return Err(Error::Domain(format!(
                "cell {c} is not a level-{level} partition cell"
            )));
        }
    }
    let (lhs, lhs_err) = correlation_lhs(space, kernel, cells)?;
    let rhs = correlation_rhs(space, projected, cells)?;
    let gap = (lhs - rhs).abs();
    let tol = tolerance + lhs_err;
    Ok(VerificationReport {
        identity: format!("correlation-m{m}"),
        lhs,
        lhs_error: lhs_err,
        rhs,
        rhs_error: 0.0,
        gap,
        tolerance: tol,
        budget: vec![
            BudgetLine {
                name: "quadrature".into(),
                value: lhs_err,
            },
            BudgetLine {
                name: "configured".into(),
                value: tolerance,
            },
        ],
        pass: gap <= tol,
        metadata: RunMetadata {
            kernel: kernel.name(),
            level,
            rank_max: projected.meta.rank_max,
            window: space.window(),
            quad_order: projected.meta.quad_order,
            seed: 0,
            draws: 0,
        },
    })
}

/// lhs of the correlation identity with an error estimate.
fn correlation_lhs(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    cells: &[TreeIndex],
) -> Result<(f64, f64)> {
    if let ContinuousKernel::FiniteRank(_) = kernel {
        return Ok((fixture_correlation_integral(space, kernel, cells)?, 0.0));
    }
    match space.dimension() {
        1 => {
            let lo = line_correlation_integral(space, kernel, cells, 16)?;
            let hi = line_correlation_integral(space, kernel, cells, 24)?;
            Ok((hi, (hi - lo).abs()))
        }
        2 => {
            let lo = plane_correlation_integral(space, kernel, cells, 12)?;
            let hi = plane_correlation_integral(space, kernel, cells, 18)?;
            Ok((hi, (hi - lo).abs()))
        }
        _ => unreachable!(),
    }
}

/// Tensor Gauss-Legendre over interval cells.
fn line_correlation_integral(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    cells: &[TreeIndex],
    order: usize,
) -> Result<f64> {
    let rule = GaussLegendre::new(order);
    let mut nodes = Vec::new();
    for c in cells {
        let cell = space.cell_of(c)?;
        nodes.push(line_cell_nodes(kernel, &cell, &rule)?);
    }
    match nodes.len() {
        1 => {
            let (xs, ws) = &nodes[0];
            let mut acc = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                acc += ws[i] * kernel.line_eval(x, x)?;
            }
            Ok(acc)
        }
        2 => {
            let (xs, wx) = &nodes[0];
            let (ys, wy) = &nodes[1];
            let dx: Vec<f64> = xs
                .iter()
                .map(|&x| kernel.line_eval(x, x))
                .collect::<Result<_>>()?;
            let dy: Vec<f64> = ys
                .iter()
                .map(|&y| kernel.line_eval(y, y))
                .collect::<Result<_>>()?;
            let mut acc = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                for (j, &y) in ys.iter().enumerate() {
                    let kxy = kernel.line_eval(x, y)?;
                    acc += wx[i] * wy[j] * (dx[i] * dy[j] - kxy * kxy);
                }
            }
            Ok(acc)
        }
        3 => {
            let (xs, wx) = &nodes[0];
            let (ys, wy) = &nodes[1];
            let (zs, wz) = &nodes[2];
            let eval = |a: &[f64], b: &[f64]| -> Result<Vec<Vec<f64>>> {
                a.iter()
                    .map(|&x| b.iter().map(|&y| kernel.line_eval(x, y)).collect())
                    .collect()
            };
            let kxy = eval(xs, ys)?;
            let kxz = eval(xs, zs)?;
            let kyz = eval(ys, zs)?;
            let dx: Vec<f64> = xs
                .iter()
                .map(|&x| kernel.line_eval(x, x))
                .collect::<Result<_>>()?;
            let dy: Vec<f64> = ys
                .iter()
                .map(|&y| kernel.line_eval(y, y))
                .collect::<Result<_>>()?;
            let dz: Vec<f64> = zs
                .iter()
                .map(|&z| kernel.line_eval(z, z))
                .collect::<Result<_>>()?;
            let mut acc = 0.0;
            for i in 0..xs.len() {
                for j in 0..ys.len() {
                    for k in 0..zs.len() {
                        let det = dx[i] * dy[j] * dz[k]
                            - dx[i] * kyz[j][k] * kyz[j][k]
                            - dy[j] * kxz[i][k] * kxz[i][k]
                            - dz[k] * kxy[i][j] * kxy[i][j]
                            + 2.0 * kxy[i][j] * kyz[j][k] * kxz[i][k];
                        acc += wx[i] * wy[j] * wz[k] * det;
                    }
                }
            }
            Ok(acc)
        }
        _ => unreachable!(),
    }
}

/// Plane case (Ginibre): nodes carry the Gaussian density in the weights;
/// m <= 2.
fn plane_correlation_integral(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    cells: &[TreeIndex],
    order: usize,
) -> Result<f64> {
    if cells.len() > 2 {
        return Err(Error::Domain(
            "plane correlation quadrature supports m <= 2".into(),
        ));
    }
    let rule = GaussLegendre::new(order);
    let mut nodes: Vec<(Vec<Point>, Vec<f64>)> = Vec::new();
    for c in cells {
        let cell = space.cell_of(c)?;
        let CellGeometry::Rect { x0, x1, y0, y1 } = cell.geometry else {
            return Err(Error::Domain("plane cells must be rectangles".into()));
        };
        let (xs, wx) = rule.mapped(x0, x1);
        let (ys, wy) = rule.mapped(y0, y1);
        let mut ps = Vec::with_capacity(xs.len() * ys.len());
        let mut ws = Vec::with_capacity(xs.len() * ys.len());
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                ps.push(Point::Two(x, y));
                ws.push(wx[i] * wy[j] * space.measure().density(Point::Two(x, y)));
            }
        }
        nodes.push((ps, ws));
    }
    match nodes.len() {
        1 => {
            let (ps, ws) = &nodes[0];
            let mut acc = 0.0;
            for (i, &p) in ps.iter().enumerate() {
                acc += ws[i] * kernel.diagonal(p)?;
            }
            Ok(acc)
        }
        2 => {
            let (ps, wp) = &nodes[0];
            let (qs, wq) = &nodes[1];
            let dp: Vec<f64> = ps
                .iter()
                .map(|&p| kernel.diagonal(p))
                .collect::<Result<_>>()?;
            let dq: Vec<f64> = qs
                .iter()
                .map(|&q| kernel.diagonal(q))
                .collect::<Result<_>>()?;
            let mut acc = 0.0;
            for (i, &p) in ps.iter().enumerate() {
                for (j, &q) in qs.iter().enumerate() {
                    let k = kernel.evaluate(p, q)?;
                    acc += wp[i] * wq[j] * (dp[i] * dq[j] - k.norm_sqr());
                }
            }
            Ok(acc)
        }
        _ => unreachable!(),
    }
}

/// Exact correlation integral for piecewise-constant fixture kernels: the
/// integrand is constant on products of fixture-resolution cells.
fn fixture_correlation_integral(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    cells: &[TreeIndex],
) -> Result<f64> {
    let ContinuousKernel::FiniteRank(fr) = kernel else {
        unreachable!()
    };
    let depth = fr
        .functions
        .iter()
        .flat_map(|f| f.pieces.iter().map(|(c, _)| c.index.depth()))
        .max()
        .unwrap_or(1)
        .max(cells.iter().map(|c| c.depth()).max().unwrap_or(1)) as u8;

    // fixture-resolution descendants of each cell with midpoint + mass
    let mut grids: Vec<Vec<(Point, f64)>> = Vec::new();
    for c in cells {
        let mut grid = Vec::new();
        let extra = depth as usize - c.depth();
        for tail in crate::partition::BitPath::enumerate(extra) {
            let mut path = c.path;
            for b in tail.iter() {
                path = path.push(b);
            }
            let sub = space.cell_of(&TreeIndex::new(c.root, path, depth)?)?;
            let mid = match sub.geometry {
                CellGeometry::Interval { lo, hi } => Point::One(0.5 * (lo + hi)),
                CellGeometry::Rect { x0, x1, y0, y1 } => {
                    Point::Two(0.5 * (x0 + x1), 0.5 * (y0 + y1))
                }
            };
            grid.push((mid, sub.mass));
        }
        grids.push(grid);
    }
    let kv = |p: Point, q: Point| -> Result<f64> { Ok(kernel.evaluate(p, q)?.re) };
    match grids.len() {
        1 => {
            let mut acc = 0.0;
            for &(p, w) in &grids[0] {
                acc += w * kv(p, p)?;
            }
            Ok(acc)
        }
        2 => {
            let mut acc = 0.0;
            for &(p, wp) in &grids[0] {
                for &(q, wq) in &grids[1] {
                    acc += wp * wq * (kv(p, p)? * kv(q, q)? - kv(p, q)?.powi(2));
                }
            }
            Ok(acc)
        }
        3 => {
            let mut acc = 0.0;
            for &(p, wp) in &grids[0] {
                for &(q, wq) in &grids[1] {
                    for &(r, wr) in &grids[2] {
                        let (a, b, c) = (kv(p, p)?, kv(q, q)?, kv(r, r)?);
                        let (ab, ac, bc) = (kv(p, q)?, kv(p, r)?, kv(q, r)?);
                        let det = a * b * c - a * bc * bc - b * ac * ac - c * ab * ab
                            + 2.0 * ab * bc * ac;
                        acc += wp * wq * wr * det;
                    }
                }
            }
            Ok(acc)
        }
        _ => unreachable!(),
    }
}

/// rhs of the correlation identity: tuple sum of compressed determinants
/// over indices supported in each cell, within the projection truncation.
fn correlation_rhs(
    space: &TreeSpace,
    projected: &ProjectedKernel,
    cells: &[TreeIndex],
) -> Result<f64> {
    let rank_max = projected.meta.rank_max;
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for c in cells {
        let idxs = space.indices_supported_in(c, rank_max)?;
        let positions = idxs
            .iter()
            .filter_map(|i| projected.position_of(i))
            .collect::<Vec<_>>();
        if positions.len() != idxs.len() {
            return Err(Error::Domain(format!(
                "cell {c} has supported indices outside the projection"
            )));
        }
        sets.push(positions);
    }
    let m = &projected.matrix;
    match sets.len() {
        1 => Ok(sets[0].iter().map(|&i| m[(i, i)].re).sum()),
        2 => {
            let mut acc = 0.0;
            for &i in &sets[0] {
                for &j in &sets[1] {
                    acc += m[(i, i)].re * m[(j, j)].re - m[(i, j)].norm_sqr();
                }
            }
            Ok(acc)
        }
        3 => {
            let mut acc = 0.0;
            for &i in &sets[0] {
                for &j in &sets[1] {
                    for &k in &sets[2] {
                        let (a, b, c) = (m[(i, i)].re, m[(j, j)].re, m[(k, k)].re);
                        let (ab, ac, bc) = (m[(i, j)], m[(i, k)], m[(j, k)]);
                        let det =
                            a * b * c - a * bc.norm_sqr() - b * ac.norm_sqr() - c * ab.norm_sqr()
                                + 2.0 * (ab * bc * ac.conj()).re;
                        acc += det;
                    }
                }
            }
            Ok(acc)
        }
        _ => unreachable!(),
    }
}

// ---------------------------------------------------------------------------
// Orthogonality trichotomy
// ---------------------------------------------------------------------------

/// Restricted inner product of two basis elements over a level cell.
pub fn orthogonality_integral(
    space: &TreeSpace,
    i: &TreeIndex,
    j: &TreeIndex,
    cell: &TreeIndex,
) -> Result<f64> {
    let fi = space.basis_function(i)?;
    let fj = space.basis_function(j)?;
    let region = space.cell_of(cell)?.geometry;
    Ok(space.inner_product_over(&fi, &fj, Some(&region)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrichotomyReport {
    pub level: u8,
    pub rank_max: u8,
    pub pairs_checked: u64,
    pub max_error: f64,
    pub pass: bool,
}

/// Exhaustive orthogonality trichotomy over a truncated basis: for every
/// index pair and every level cell the restricted inner product must be 1
/// when the indices agree and the support lies inside the cell, else 0.
pub fn trichotomy_sweep(space: &TreeSpace, level: u8, rank_max: u8) -> Result<TrichotomyReport> {
    let indices = space.truncated_index_set(level, rank_max)?;
    let funcs = indices
        .iter()
        .map(|i| space.basis_function(i))
        .collect::<Result<Vec<_>>>()?;
    let cells = space.cells(level)?;
    let mut max_error = 0.0f64;
    let mut pairs = 0u64;
    for (a, fa) in funcs.iter().enumerate() {
        for (b, fb) in funcs.iter().enumerate() {
            for cell in &cells {
                let got = space.inner_product_over(fa, fb, Some(&cell.geometry));
                let want = if a == b && fa.support.geometry.subset_of(&cell.geometry) {
                    1.0
                } else {
                    0.0
                };
                max_error = max_error.max((got - want).abs());
                pairs += 1;
            }
        }
    }
    Ok(TrichotomyReport {
        level,
        rank_max,
        pairs_checked: pairs,
        max_error,
        pass: max_error < 1e-12,
    })
}

// ---------------------------------------------------------------------------
// Factorial moments
// ---------------------------------------------------------------------------

/// Empirical falling-factorial moment of lifted samples against the
/// correlation quadrature, with the truncation gap as an explicit budget
/// line.
pub fn factorial_moment_check(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    projected: &ProjectedKernel,
    cells_with_multiplicity: &[(TreeIndex, u32)],
    draws: u64,
    seed: u64,
) -> Result<VerificationReport> {
    let level = projected.meta.level;
    let m: u32 = cells_with_multiplicity.iter().map(|(_, k)| k).sum();
    if m == 0 || m > 3 {
        return Err(Error::Domain("factorial moment order must be 1..=3".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for (c, _) in cells_with_multiplicity {
        if !seen.insert(*c) {
            return Err(Error::Domain(
                "cells must be distinct (disjointness)".into(),
            ));
        }
        if c.level != level || c.rank() != 1 {
            return Err(Error::Domain(format!("{c} is not a level-{level} cell")));
        }
    }

    // the m-tuple of cells with repetition for the quadrature side
    let tuple: Vec<TreeIndex> = cells_with_multiplicity
        .iter()
        .flat_map(|(c, k)| std::iter::repeat_n(*c, *k as usize))
        .collect();
    let (lhs, lhs_err) = correlation_lhs(space, kernel, &tuple)?;
    let rhs_trunc = correlation_rhs(space, projected, &tuple)?;
    let truncation_gap = (lhs - rhs_trunc).abs();

    // empirical moment over lifted draws
    let sampler = LiftSampler::new(space, projected);
    let mut rng = replica_rng(seed, 0);
    let cells = space.cells(level)?;
    let slot: std::collections::HashMap<TreeIndex, usize> = cells
        .iter()
        .enumerate()
        .map(|(k, c)| (c.index, k))
        .collect();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..draws {
        let s = sampler.sample(&mut rng)?;
        let counts = cell_counts(space, &s.unlabel(), level)?;
        let mut prod = 1.0;
        for (c, k) in cells_with_multiplicity {
            let n = counts[slot[c]] as i64;
            let k = *k as i64;
            let mut f = 1.0;
            if n < k {
                f = 0.0;
            } else {
                for t in 0..k {
                    f *= (n - t) as f64;
                }
            }
            prod *= f;
        }
        sum += prod;
        sumsq += prod * prod;
    }
    let n = draws as f64;
    let emp = sum / n;
    let var = (sumsq / n - emp * emp).max(0.0);
    let mc_band = 3.0 * (var / n).sqrt();

    let gap = (emp - lhs).abs();
    let tol = mc_band + truncation_gap + lhs_err;
    Ok(VerificationReport {
        identity: format!("factorial-moment-m{m}"),
        lhs,
        lhs_error: lhs_err,
        rhs: emp,
        rhs_error: mc_band,
        gap,
        tolerance: tol,
        budget: vec![
            BudgetLine {
                name: "quadrature".into(),
                value: lhs_err,
            },
            BudgetLine {
                name: "truncation".into(),
                value: truncation_gap,
            },
            BudgetLine {
                name: "monte-carlo-3sigma".into(),
                value: mc_band,
            },
        ],
        pass: gap <= tol,
        metadata: RunMetadata {
            kernel: kernel.name(),
            level,
            rank_max: projected.meta.rank_max,
            window: space.window(),
            quad_order: projected.meta.quad_order,
            seed,
            draws,
        },
    })
}

// ---------------------------------------------------------------------------
// Refinement structure
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementReport {
    pub coarse_level: u8,
    pub fine_level: u8,
    pub configurations: u64,
    pub mismatches: u64,
    pub pass: bool,
}

/// Coarse counts must be a deterministic function of fine counts through
/// the nesting map; checked on seeded random configurations.
pub fn refinement_check(
    space: &TreeSpace,
    coarse: u8,
    fine: u8,
    configurations: u64,
    points_per_config: usize,
    seed: u64,
) -> Result<RefinementReport> {
    if coarse > fine {
        return Err(Error::Domain(
            "coarse level must not exceed fine level".into(),
        ));
    }
    let mut rng = replica_rng(seed, 0);
    let window = space.window();
    let mut mismatches = 0u64;
    for _ in 0..configurations {
        let points: Vec<Point> = (0..points_per_config)
            .map(|_| random_point(&window, &mut rng))
            .collect();
        let config = PointConfiguration { points };
        let fine_counts = cell_counts(space, &config, fine)?;
        let direct = cell_counts(space, &config, coarse)?;
        let recomputed = coarsen_counts(space, &fine_counts, fine, coarse)?;
        if direct != recomputed {
            mismatches += 1;
        }
    }
    Ok(RefinementReport {
        coarse_level: coarse,
        fine_level: fine,
        configurations,
        mismatches,
        pass: mismatches == 0,
    })
}

fn random_point<R: Rng + ?Sized>(window: &Window, rng: &mut R) -> Point {
    match *window {
        Window::One { lo, hi } => Point::One(rng.gen_range(lo as f64..hi as f64)),
        Window::Two { x0, x1, y0, y1 } => Point::Two(
            rng.gen_range(x0 as f64..x1 as f64),
            rng.gen_range(y0 as f64..y1 as f64),
        ),
    }
}
