//! Measure-weighted Haar bases adapted to the binary partition tree.
//!
//! A rank-1 element is a normalized cell indicator 1_A / sqrt(m(A)). A
//! rank >= 2 element lives on a parent cell with children C0, C1 of masses
//! m0, m1 and equals a 1_{C0} - b 1_{C1} with
//!
//!   a = sqrt(m1 / (m0 (m0 + m1))),   b = sqrt(m0 / (m1 (m0 + m1))),
//!
//! the unique two-piece function with mean zero and unit norm against the
//! reference measure. For Lebesgue measure (m0 = m1) this is the classical
//! Haar function with coefficient 2^{(d-2)/2} at split depth d.
//!
//! Everything is represented symbolically as (cell, coefficient) pieces;
//! integrals of piecewise-constant products are computed exactly, never by
//! sampling on grids.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::{CellGeometry, Point};
use crate::partition::{PartitionCell, TreeIndex, TreeSpace};
use crate::special::gaussian_interval_quantile;

/// One basis element: support cell plus one or two weighted pieces.
#[derive(Debug, Clone)]
pub struct BasisFunction {
    pub index: TreeIndex,
    pub support: PartitionCell,
    pub pieces: Vec<(PartitionCell, f64)>,
}

/// Generalized Haar coefficients (a, b) for child masses (m0, m1).
pub fn haar_coefficients(m0: f64, m1: f64) -> (f64, f64) {
    let total = m0 + m1;
    ((m1 / (m0 * total)).sqrt(), (m0 / (m1 * total)).sqrt())
}

impl TreeSpace {
    /// Builds the basis element of a tree index.
    pub fn basis_function(&self, index: &TreeIndex) -> Result<BasisFunction> {
        if !index.is_basis_index() {
            return Err(Error::Domain(format!(
                "{index} is not a basis index (final bit must be 0 at rank >= 2)"
            )));
        }
        if index.rank() == 1 {
            let cell = self.cell_of(index)?;
            let coeff = 1.0 / cell.mass.sqrt();
            Ok(BasisFunction {
                index: *index,
                support: cell.clone(),
                pieces: vec![(cell, coeff)],
            })
        } else {
            let support = self.support_cell(index)?;
            let [c0, c1] = self.children(&support)?;
            let (a, b) = haar_coefficients(c0.mass, c1.mass);
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::Partition(format!(
                    "degenerate child masses {} / {} under {}",
                    c0.mass, c1.mass, support.geometry
                )));
            }
            Ok(BasisFunction {
                index: *index,
                support,
                pieces: vec![(c0, a), (c1, -b)],
            })
        }
    }

    /// The whole truncated basis in canonical index order.
    pub fn basis(&self, level: u8, rank_max: u8) -> Result<Vec<BasisFunction>> {
        self.truncated_index_set(level, rank_max)?
            .iter()
            .map(|i| self.basis_function(i))
            .collect()
    }

    /// Exact inner product of two basis elements over the whole domain.
    pub fn inner_product(&self, f: &BasisFunction, g: &BasisFunction) -> f64 {
        self.inner_product_over(f, g, None)
    }

    /// Exact inner product restricted to a region (None = whole domain).
    pub fn inner_product_over(
        &self,
        f: &BasisFunction,
        g: &BasisFunction,
        region: Option<&CellGeometry>,
    ) -> f64 {
        let mut acc = 0.0;
        for (cf, af) in &f.pieces {
            for (cg, ag) in &g.pieces {
                let Some(mut overlap) = cf.geometry.intersect(&cg.geometry) else {
                    continue;
                };
                if let Some(r) = region {
                    match overlap.intersect(r) {
                        Some(o) => overlap = o,
                        None => continue,
                    }
                }
                acc += af * ag * self.measure().cell_mass(&overlap);
            }
        }
        acc
    }

    /// Draws a mark from the probability density |f|^2 dm on the support
    /// of the basis element: pick a piece with probability coeff^2 * mass,
    /// then place the point uniformly in measure within that piece.
    pub fn sample_mark<R: Rng + ?Sized>(&self, f: &BasisFunction, rng: &mut R) -> Point {
        let cell = if f.pieces.len() == 1 {
            &f.pieces[0].0
        } else {
            let (c0, a) = &f.pieces[0];
            let p0 = a * a * c0.mass;
            if rng.gen::<f64>() < p0 {
                c0
            } else {
                &f.pieces[1].0
            }
        };
        self.sample_uniform_in_cell(&cell.geometry, rng)
    }

    /// Uniform-in-measure draw inside a cell: inverse CDF per axis.
    pub fn sample_uniform_in_cell<R: Rng + ?Sized>(
        &self,
        cell: &CellGeometry,
        rng: &mut R,
    ) -> Point {
        match (self.measure().dimension(), cell) {
            (1, CellGeometry::Interval { lo, hi }) => Point::One(lo + rng.gen::<f64>() * (hi - lo)),
            (2, CellGeometry::Rect { x0, x1, y0, y1 }) => {
                let x = gaussian_interval_quantile(*x0, *x1, rng.gen::<f64>());
                let y = gaussian_interval_quantile(*y0, *y1, rng.gen::<f64>());
                Point::Two(x, y)
            }
            _ => unreachable!("cell dimension always matches the space"),
        }
    }
}

impl BasisFunction {
    /// Pointwise evaluation (piecewise constant, half-open cells).
    pub fn evaluate(&self, p: Point) -> f64 {
        for (cell, coeff) in &self.pieces {
            if cell.geometry.contains(p) {
                return *coeff;
            }
        }
        0.0
    }

    /// The mark probability density |f|^2 with respect to the reference
    /// measure, as (cell, density) pieces. The piece probabilities
    /// density * mass sum to 1 by the unit norm.
    pub fn mark_density(&self) -> Vec<(&PartitionCell, f64)> {
        self.pieces.iter().map(|(c, a)| (c, a * a)).collect()
    }

    /// Probability that the mark lands in the first piece; 1 for rank 1.
    pub fn first_piece_probability(&self) -> f64 {
        if self.pieces.len() == 1 {
            1.0
        } else {
            let (c0, a) = &self.pieces[0];
            a * a * c0.mass
        }
    }
}

/// Result of the span comparison between a truncated basis and the cell
/// indicators at the matching resolution.
#[derive(Debug, Clone)]
pub struct SpanCheck {
    pub basis_size: usize,
    pub indicator_count: usize,
    pub max_orthogonality_defect: f64,
    pub condition_number: f64,
    pub pass: bool,
}

/// Verifies that span{f at ranks <= r} = span{depth-(level+r-1) cell
/// indicators} over the window: dimensions match and the change-of-basis
/// matrix between the two orthonormal systems is unitary (so in particular
/// invertible with finite condition number).
pub fn sigma_field_check(space: &TreeSpace, level: u8, rank: u8) -> Result<SpanCheck> {
    let basis = space.basis(level, rank)?;
    let fine_level = level + rank - 1;
    let cells = space.cells(fine_level)?;
    let n = cells.len();
    let dim_match = basis.len() == n;

    let mut m = nalgebra::DMatrix::<f64>::zeros(n, basis.len().max(1));
    for (ci, cell) in cells.iter().enumerate() {
        // midpoint of the fine cell: every basis element is constant there
        let mid = match cell.geometry {
            CellGeometry::Interval { lo, hi } => Point::One(0.5 * (lo + hi)),
            CellGeometry::Rect { x0, x1, y0, y1 } => Point::Two(0.5 * (x0 + x1), 0.5 * (y0 + y1)),
        };
        for (k, f) in basis.iter().enumerate() {
            m[(ci, k)] = f.evaluate(mid) * cell.mass.sqrt();
        }
    }

    let mut defect = 0.0f64;
    if dim_match {
        let gram = m.transpose() * &m;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((gram[(i, j)] - target).abs());
            }
        }
    } else {
        defect = f64::INFINITY;
    }
    let svd = m.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    Ok(SpanCheck {
        basis_size: basis.len(),
        indicator_count: n,
        max_orthogonality_defect: defect,
        condition_number: cond,
        pass: dim_match && defect < 1e-10 && cond.is_finite(),
    })
}
